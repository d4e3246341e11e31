//! One-step maps and trajectory integration.
//!
//! With `F`, `B` evaluated at the current state `y`, `col_j = P_N B(y) ẽ_j`
//! and `ΔW = Σ_j sqrt(η_j) Δβ_j ẽ_j`:
//!
//! ```text
//! DFM: P_N e^{Ah} (y + hF + B ΔW + Σ_j [B(stage_j) ẽ_j - col_j]),  stage_j = y + Σ_i col_i I^Q_(i,j)
//! MIL: P_N e^{Ah} (y + hF + B ΔW + Σ_j B'(y)(stage_j - y, ẽ_j))
//! EES: P_N e^{Ah} (y + hF + B ΔW)
//! LIE: (I - hA_N)^{-1} (y + hF + B ΔW)
//! ```

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::cost::CostLedger;
use crate::noise::{NoisePacket, NoiseSource};
use crate::problem::Problem;
use crate::spectral::{Propagator, SpectralField};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SchemeKind {
    /// Derivative-free Milstein-type scheme.
    Dfm,
    /// Milstein scheme with the exact derivative of `B`.
    Mil,
    /// Exponential Euler scheme.
    Ees,
    /// Linear implicit Euler scheme.
    Lie,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 4] = [SchemeKind::Dfm, SchemeKind::Mil, SchemeKind::Ees, SchemeKind::Lie];

    /// Whether the scheme consumes iterated integrals (and so a truncation `D`).
    pub fn needs_iterated(self) -> bool {
        matches!(self, SchemeKind::Dfm | SchemeKind::Mil)
    }

    /// Label with the `A` suffix marking the iterated-integral variants.
    pub fn label(self) -> &'static str {
        match self {
            SchemeKind::Dfm => "DFMA",
            SchemeKind::Mil => "MILA",
            SchemeKind::Ees => "EES",
            SchemeKind::Lie => "LIE",
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "DFM" | "DFMA" => Ok(SchemeKind::Dfm),
            "MIL" | "MILA" => Ok(SchemeKind::Mil),
            "EES" => Ok(SchemeKind::Ees),
            "LIE" => Ok(SchemeKind::Lie),
            _ => Err(Error::UnknownScheme(s.to_string())),
        }
    }
}

/// Scheme and discretization on the uniform grid `t_m = m T / M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    pub n: usize,
    pub k: usize,
    pub m: u64,
    /// Series truncation, present exactly for DFM and MIL.
    pub d: Option<u64>,
    pub horizon: f64,
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.k == 0 || self.m == 0 {
            return Err(Error::ZeroDimension);
        }
        if self.k > self.n {
            return Err(Error::NoiseExceedsState { k: self.k, n: self.n });
        }
        match (self.kind.needs_iterated(), self.d) {
            (true, None) => return Err(Error::InvalidParameter("DFM and MIL need a truncation count D".into())),
            (true, Some(0)) => return Err(Error::ZeroTruncation),
            (false, Some(_)) => return Err(Error::InvalidParameter("EES and LIE take no truncation count".into())),
            _ => {}
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::NonPositiveStep(self.horizon));
        }
        Ok(())
    }

    pub fn step_len(&self) -> f64 {
        self.horizon / self.m as f64
    }
}

/// Reusable one-step map with preallocated scratch space.
pub struct Stepper<'p, P: ?Sized> {
    problem: &'p P,
    kind: SchemeKind,
    n: usize,
    k: usize,
    h: f64,
    propagator: Propagator,
    sqrt_eta: Vec<f64>,
    drift: Vec<f64>,
    // K columns of length N, column j at j * N
    columns: Vec<f64>,
    stage: Vec<f64>,
    scratch: Vec<f64>,
    column: Vec<f64>,
    correction: Vec<f64>,
}

impl<'p, P: Problem + ?Sized> Stepper<'p, P> {
    pub fn new(problem: &'p P, kind: SchemeKind, n: usize, k: usize, h: f64) -> Result<Self> {
        if n == 0 || k == 0 {
            return Err(Error::ZeroDimension);
        }
        if k > n {
            return Err(Error::NoiseExceedsState { k, n });
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::NonPositiveStep(h));
        }
        let propagator = Propagator::new(&problem.a_law(), n, h)?;
        let sqrt_eta = problem.q_law().values(k).iter().map(|e| libm::sqrt(*e)).collect();
        Ok(Self {
            problem,
            kind,
            n,
            k,
            h,
            propagator,
            sqrt_eta,
            drift: vec![0.0; n],
            columns: vec![0.0; k * n],
            stage: vec![0.0; n],
            scratch: vec![0.0; n],
            column: vec![0.0; n],
            correction: vec![0.0; n],
        })
    }

    pub fn from_config(problem: &'p P, config: &SchemeConfig) -> Result<Self> {
        config.validate()?;
        Self::new(problem, config.kind, config.n, config.k, config.step_len())
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    pub fn step_len(&self) -> f64 {
        self.h
    }

    fn check_state(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: y.len() });
        }
        Ok(())
    }

    /// `y + hF(y) + B(y)ΔW` into `y`, leaving the columns `P_N B(y) ẽ_j` cached.
    fn euler_part(&mut self, y: &mut [f64], delta_beta: &[f64], ledger: &mut CostLedger) {
        let n = self.n;
        self.problem.drift_into(y, &mut self.drift);
        ledger.charge_drift(n as u64);
        for j in 0..self.k {
            self.problem.diffusion_column_into(y, j, &mut self.columns[j * n..(j + 1) * n]);
        }
        ledger.charge_diffusion((self.k * n) as u64);
        for i in 0..n {
            let mut noise = 0.0;
            for j in 0..self.k {
                noise += self.columns[j * n + i] * self.sqrt_eta[j] * delta_beta[j];
            }
            y[i] += self.h * self.drift[i] + noise;
        }
        ledger.charge_ops((n * (self.k + 1)) as u64);
    }

    /// `stage - y = Σ_i col_i I^Q_(i,j)` into `self.stage`.
    fn stage_offset(&mut self, packet: &NoisePacket, j: usize) {
        let n = self.n;
        self.stage.fill(0.0);
        for i in 0..self.k {
            let weight = packet.entry(i, j);
            let col = &self.columns[i * n..(i + 1) * n];
            self.stage.iter_mut().zip(col).for_each(|(s, c)| *s += c * weight);
        }
    }

    /// Advances `y` with increments `Δβ` (standard, unscaled by `η`); EES and LIE only.
    pub fn step_increments(&mut self, y: &mut [f64], delta_beta: &[f64], ledger: &mut CostLedger) -> Result<()> {
        self.check_state(y)?;
        if delta_beta.len() != self.k {
            return Err(Error::DimensionMismatch { expected: self.k, found: delta_beta.len() });
        }
        if self.kind.needs_iterated() {
            return Err(Error::InvalidParameter("DFM and MIL need iterated integrals".into()));
        }
        self.euler_part(y, delta_beta, ledger);
        if self.kind == SchemeKind::Lie {
            self.propagator.apply_resolvent(y);
        } else {
            self.propagator.apply_semigroup(y);
        }
        Ok(())
    }

    /// Advances `y` with a full noise packet. EES and LIE ignore the iterated integrals.
    pub fn step_packet(&mut self, y: &mut [f64], packet: &NoisePacket, ledger: &mut CostLedger) -> Result<()> {
        self.check_state(y)?;
        if packet.k() != self.k {
            return Err(Error::DimensionMismatch { expected: self.k, found: packet.k() });
        }
        if !matches!(self.kind, SchemeKind::Dfm | SchemeKind::Mil) {
            return self.step_increments(y, packet.delta_beta(), ledger);
        }
        let n = self.n;
        // The stages are built from the state before the Euler update.
        self.scratch.copy_from_slice(y);
        self.euler_part(y, packet.delta_beta(), ledger);
        self.correction.fill(0.0);
        for j in 0..self.k {
            self.stage_offset(packet, j);
            match self.kind {
                SchemeKind::Dfm => {
                    self.stage.iter_mut().zip(&self.scratch).for_each(|(s, b)| *s += b);
                    self.problem.diffusion_column_into(&self.stage, j, &mut self.column);
                    ledger.charge_diffusion(n as u64);
                    for i in 0..n {
                        self.correction[i] += self.column[i] - self.columns[j * n + i];
                    }
                }
                _ => {
                    self.problem.diffusion_derivative_into(&self.scratch, &self.stage, j, &mut self.column)?;
                    ledger.charge_derivative((n * n) as u64);
                    self.correction.iter_mut().zip(&self.column).for_each(|(c, v)| *c += v);
                }
            }
            ledger.charge_ops((n * (self.k + 1)) as u64);
        }
        y.iter_mut().zip(&self.correction).for_each(|(a, c)| *a += c);
        self.propagator.apply_semigroup(y);
        Ok(())
    }

    /// Advances `y` by one step, drawing whatever noise the scheme needs.
    pub fn step<S: NoiseSource + ?Sized>(&mut self, y: &mut [f64], noise: &mut S, ledger: &mut CostLedger) -> Result<()> {
        if self.kind.needs_iterated() {
            let packet = noise.next_packet(ledger)?;
            self.step_packet(y, &packet, ledger)
        } else {
            let increments = noise.next_increments(ledger)?;
            self.step_increments(y, &increments, ledger)
        }
    }
}

fn stepper_for<'p, P: Problem + ?Sized>(problem: &'p P, kind: SchemeKind, y: &SpectralField, k: usize, h: f64) -> Result<Stepper<'p, P>> {
    Stepper::new(problem, kind, y.dim(), k, h)
}

fn single_packet_step<P: Problem + ?Sized>(kind: SchemeKind, problem: &P, y: &SpectralField, packet: &NoisePacket) -> Result<SpectralField> {
    let mut stepper = stepper_for(problem, kind, y, packet.k(), packet.h())?;
    let mut out = y.coeffs().to_vec();
    stepper.step_packet(&mut out, packet, &mut CostLedger::new())?;
    SpectralField::new(out)
}

fn single_increment_step<P: Problem + ?Sized>(
    kind: SchemeKind,
    problem: &P,
    y: &SpectralField,
    delta_beta: &[f64],
    h: f64,
) -> Result<SpectralField> {
    let mut stepper = stepper_for(problem, kind, y, delta_beta.len(), h)?;
    let mut out = y.coeffs().to_vec();
    stepper.step_increments(&mut out, delta_beta, &mut CostLedger::new())?;
    SpectralField::new(out)
}

/// One DFM step of length `packet.h()` with `K = packet.k()`.
pub fn step_dfm<P: Problem + ?Sized>(problem: &P, y: &SpectralField, packet: &NoisePacket) -> Result<SpectralField> {
    single_packet_step(SchemeKind::Dfm, problem, y, packet)
}

/// One MIL step of length `packet.h()` with `K = packet.k()`.
pub fn step_mil<P: Problem + ?Sized>(problem: &P, y: &SpectralField, packet: &NoisePacket) -> Result<SpectralField> {
    single_packet_step(SchemeKind::Mil, problem, y, packet)
}

/// One EES step; `delta_beta` holds the `K` standard increments.
pub fn step_ees<P: Problem + ?Sized>(problem: &P, y: &SpectralField, delta_beta: &[f64], h: f64) -> Result<SpectralField> {
    single_increment_step(SchemeKind::Ees, problem, y, delta_beta, h)
}

/// One LIE step; `delta_beta` holds the `K` standard increments.
pub fn step_lie<P: Problem + ?Sized>(problem: &P, y: &SpectralField, delta_beta: &[f64], h: f64) -> Result<SpectralField> {
    single_increment_step(SchemeKind::Lie, problem, y, delta_beta, h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StorageMode {
    /// Keep `Y_0, ..., Y_M`.
    Full,
    /// Keep only `Y_M`.
    FinalOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<SpectralField>,
}

impl Trajectory {
    pub fn final_state(&self) -> &SpectralField {
        self.states.last().expect("trajectories are never empty")
    }
}

/// Runs `M` steps from `P_N xi`, calling `observe(m, Y_m)` for `m = 0..=M`.
pub fn integrate_with<P, S, O>(
    config: &SchemeConfig,
    problem: &P,
    noise: &mut S,
    ledger: &mut CostLedger,
    mut observe: O,
) -> Result<SpectralField>
where
    P: Problem + ?Sized,
    S: NoiseSource + ?Sized,
    O: FnMut(u64, &[f64]) -> Result<()>,
{
    let mut stepper = Stepper::from_config(problem, config)?;
    let mut y = problem.initial_value(config.n)?.into_coeffs();
    observe(0, &y)?;
    for m in 1..=config.m {
        stepper.step(&mut y, noise, ledger)?;
        observe(m, &y)?;
    }
    SpectralField::new(y)
}

/// Runs the configured scheme from `P_N xi` over `M` uniform steps.
pub fn integrate<P, S>(
    config: &SchemeConfig,
    problem: &P,
    noise: &mut S,
    ledger: &mut CostLedger,
    mode: StorageMode,
) -> Result<Trajectory>
where
    P: Problem + ?Sized,
    S: NoiseSource + ?Sized,
{
    let h = config.step_len();
    let mut times = Vec::new();
    let mut states = Vec::new();
    let last = integrate_with(config, problem, noise, ledger, |m, y| {
        if mode == StorageMode::Full {
            times.push(m as f64 * h);
            states.push(SpectralField::new(y.to_vec())?);
        }
        Ok(())
    })?;
    if mode == StorageMode::FinalOnly {
        times.push(config.horizon);
        states.push(last);
    }
    Ok(Trajectory { times, states })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{alg1_packet, substream, FreshNoise, NormalStream};
    use crate::problem::{make_example, DiffusionLaw, DriftLaw, InitialLaw, SineBasisProblem, SineBasisSpec};
    use crate::spectral::EigenLaw;

    fn heat_problem() -> SineBasisProblem {
        let base = make_example(3).unwrap();
        SineBasisProblem::new(SineBasisSpec {
            drift: DriftLaw::Zero,
            diffusion: DiffusionLaw::Zero,
            initial: InitialLaw::PowerDecay { exponent: 1.0 },
            ..*base.spec()
        })
        .unwrap()
    }

    fn eta(k: usize) -> Vec<f64> {
        EigenLaw::PowerDecay { exponent: 3.0 }.values(k)
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("dfma".parse::<SchemeKind>().unwrap(), SchemeKind::Dfm);
        assert_eq!("MIL".parse::<SchemeKind>().unwrap(), SchemeKind::Mil);
        assert_eq!(SchemeKind::Ees.to_string(), "EES");
        assert!(matches!("RK4".parse::<SchemeKind>(), Err(Error::UnknownScheme(_))));
    }

    #[test]
    fn config_validation() {
        let mut c = SchemeConfig { kind: SchemeKind::Dfm, n: 4, k: 2, m: 8, d: Some(2), horizon: 1.0 };
        assert!(c.validate().is_ok());
        assert_eq!(c.step_len(), 0.125);
        c.d = None;
        assert!(c.validate().is_err());
        c.kind = SchemeKind::Ees;
        assert!(c.validate().is_ok());
        c.k = 5;
        assert_eq!(c.validate(), Err(Error::NoiseExceedsState { k: 5, n: 4 }));
    }

    #[test]
    fn zero_noise_is_semigroup() {
        let p = heat_problem();
        let y = p.initial_value(5).unwrap();
        let h = 0.1;
        let packet = NoisePacket::zero(2, h, eta(2)).unwrap();
        let expected = crate::spectral::semigroup_apply(&y, &p.a_law(), h).unwrap();
        assert_eq!(step_dfm(&p, &y, &packet).unwrap(), expected);
        assert_eq!(step_mil(&p, &y, &packet).unwrap(), expected);
        assert_eq!(step_ees(&p, &y, &[0.0, 0.0], h).unwrap(), expected);
        let lie = step_lie(&p, &y, &[0.0, 0.0], h).unwrap();
        let lambda = p.a_law().values(5);
        for i in 0..5 {
            assert!((lie[i] - y[i] / (1.0 + lambda[i] * h)).abs() < 1e-15);
        }
    }

    #[test]
    fn example1_first_step_from_zero() {
        let p = make_example(1).unwrap();
        let y = SpectralField::zeros(4).unwrap();
        let packet = alg1_packet(&mut NormalStream::new(substream(1, 0, 1, 0)), 0.25, 3, &eta(3)).unwrap();
        let out = step_dfm(&p, &y, &packet).unwrap();
        let mut expected = crate::problem::eval_drift(&p, &y);
        expected.coeffs_mut().iter_mut().for_each(|c| *c *= 0.25);
        let expected = crate::spectral::semigroup_apply(&expected, &p.a_law(), 0.25).unwrap();
        assert_eq!(out, expected);
    }

    #[test]
    fn dfm_matches_mil_on_linear_diffusion() {
        let p = make_example(1).unwrap();
        let y = SpectralField::new(vec![0.3, -0.7, 0.2, 0.9, -0.1]).unwrap();
        let mut s = NormalStream::new(substream(2, 0, 1, 0));
        for _ in 0..20 {
            let packet = alg1_packet(&mut s, 0.05, 4, &eta(3)).unwrap();
            let a = step_dfm(&p, &y, &packet).unwrap();
            let b = step_mil(&p, &y, &packet).unwrap();
            assert!(libm::sqrt(a.distance_squared(&b)) <= 1e-12 * a.norm());
        }
    }

    #[test]
    fn ees_is_dfm_without_stage_sum() {
        let p = make_example(1).unwrap();
        let y = SpectralField::new(vec![0.3, -0.7, 0.2]).unwrap();
        let packet = alg1_packet(&mut NormalStream::new(substream(3, 0, 1, 0)), 0.05, 4, &eta(2)).unwrap();
        let dfm = step_dfm(&p, &y, &packet).unwrap();
        let ees = step_ees(&p, &y, packet.delta_beta(), 0.05).unwrap();
        // B linear: stage sum is Σ_j B(Σ_i col_i I_ij) ẽ_j
        let mut sum = vec![0.0; 3];
        let cols: Vec<_> = (0..2).map(|j| crate::problem::eval_diffusion_column(&p, &y, j).unwrap()).collect();
        for j in 0..2 {
            let v: Vec<f64> = (0..3).map(|r| (0..2).map(|i| cols[i][r] * packet.entry(i, j)).sum()).collect();
            let col = crate::problem::eval_diffusion_column(&p, &SpectralField::new(v).unwrap(), j).unwrap();
            sum.iter_mut().zip(col.coeffs()).for_each(|(s, c)| *s += c);
        }
        let sum = crate::spectral::semigroup_apply(&SpectralField::new(sum).unwrap(), &p.a_law(), 0.05).unwrap();
        for i in 0..3 {
            assert!((dfm[i] - ees[i] - sum[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn mil_single_noise_direction() {
        let p = make_example(1).unwrap();
        let y = SpectralField::new(vec![0.5, 0.25]).unwrap();
        let db = 0.3;
        let h = 0.1;
        let eta1 = 1.0;
        let diag = eta1 * (db * db - h) / 2.0;
        let packet = NoisePacket::new(vec![db], h, vec![diag], 1, vec![eta1]).unwrap();
        let mil = step_mil(&p, &y, &packet).unwrap();
        let ees = step_ees(&p, &y, &[db], h).unwrap();
        let col = crate::problem::eval_diffusion_column(&p, &y, 0).unwrap();
        let term = crate::problem::eval_diffusion_derivative(&p, &y, &col, 0).unwrap();
        let term = crate::spectral::semigroup_apply(&term, &p.a_law(), h).unwrap();
        for i in 0..2 {
            assert!((mil[i] - ees[i] - diag * term[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn lie_and_ees_agree_for_small_steps() {
        let p = heat_problem();
        let y = p.initial_value(3).unwrap();
        let h = 1e-3;
        let a = step_lie(&p, &y, &[0.0], h).unwrap();
        let b = step_ees(&p, &y, &[0.0], h).unwrap();
        let lambda = p.a_law().values(3);
        for i in 0..3 {
            let x = lambda[i] * h;
            assert!((a[i] - b[i]).abs() <= x * x * y[i].abs());
        }
        let tiny = step_ees(&p, &y, &[0.0], 1e-12).unwrap();
        assert!(libm::sqrt(tiny.distance_squared(&y)) < 1e-12);
    }

    #[test]
    fn integrate_heat_flow_and_ledger() {
        let p = heat_problem();
        for kind in SchemeKind::ALL {
            let d = kind.needs_iterated().then_some(2);
            let config = SchemeConfig { kind, n: 4, k: 2, m: 8, d, horizon: 1.0 };
            let mut noise = FreshNoise::new(substream(5, 0, 1, 0), 0.125, 2, eta(2)).unwrap();
            let mut ledger = CostLedger::new();
            let traj = integrate(&config, &p, &mut noise, &mut ledger, StorageMode::Full).unwrap();
            assert_eq!(traj.states.len(), 9);
            let expected = crate::cost::ledger_expected(kind, 4, 2, d).unwrap().times(8);
            assert_eq!(ledger.charged(), expected);
            if kind != SchemeKind::Lie {
                let xi = p.initial_value(4).unwrap();
                let exact = crate::spectral::semigroup_apply(&xi, &p.a_law(), 1.0).unwrap();
                assert!(libm::sqrt(traj.final_state().distance_squared(&exact)) < 1e-14);
            }
        }
    }

    #[test]
    fn integrate_is_deterministic() {
        let p = make_example(1).unwrap();
        let config = SchemeConfig { kind: SchemeKind::Dfm, n: 6, k: 3, m: 16, d: Some(3), horizon: 1.0 };
        let run = || {
            let mut noise = FreshNoise::new(substream(6, 1, 1, 0), 1.0 / 16.0, 3, eta(3)).unwrap();
            integrate(&config, &p, &mut noise, &mut CostLedger::new(), StorageMode::FinalOnly).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn dimension_errors() {
        let p = make_example(1).unwrap();
        let y = SpectralField::zeros(3).unwrap();
        assert!(step_ees(&p, &y, &[0.0; 4], 0.1).is_err());
        let mut stepper = Stepper::new(&p, SchemeKind::Ees, 3, 2, 0.1).unwrap();
        assert_eq!(
            stepper.step_increments(&mut [0.0; 2], &[0.0; 2], &mut CostLedger::new()),
            Err(Error::DimensionMismatch { expected: 3, found: 2 })
        );
    }
}
