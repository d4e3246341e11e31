//! Pathwise coupling of every run in a study to one reference solution.
//!
//! A path is simulated by walking the reference's fine lattice of `M_ref`
//! steps once. Each lattice increment drives the reference and is pushed
//! into the coarser runs:
//!
//! - runs whose `M` divides `M_ref` sum lattice increments;
//! - other runs read the Brownian path at their own grid points, which are
//!   sampled inside lattice intervals from the Brownian bridge;
//! - DFM/MIL runs chain iterated integrals from the finest available
//!   source (the reference when it is itself DFM/MIL, else the finest
//!   DFM/MIL run) and draw fresh series terms only when no source lines up.
//!
//! All randomness comes from per-path substreams, so paths can be
//! simulated in any order or in parallel.

use std::cmp::Ordering;

use spde_core::cost::CostLedger;
use spde_core::noise::{
    alg1_iterated, purpose, sample_increments, substream, ChaCha8Rng, NoisePacket, NormalStream,
};
use spde_core::problem::{Problem, SineBasisProblem};
use spde_core::schemes::Stepper;

use crate::config::{ResolvedStudy, RunSpec};
use crate::error::{Result, StudyError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Feed {
    /// `M` divides `M_ref`: sum `ratio` lattice increments (or chain
    /// `ratio` reference packets).
    Lattice { ratio: u64, chain_reference: bool },
    /// Grid points sampled from the Brownian bridge.
    Bridge,
    /// Chain `ratio` packets of another run.
    Run { source: usize, ratio: u64 },
}

/// Static coupling layout shared by all paths.
#[derive(Debug, Clone)]
pub struct CouplingPlan {
    reference: RunSpec,
    runs: Vec<RunSpec>,
    feeds: Vec<Feed>,
    /// Whether the run draws its own series terms.
    fresh: Vec<bool>,
    dependents: Vec<Vec<usize>>,
    eta_ref: Vec<f64>,
    record_grid: bool,
}

impl CouplingPlan {
    pub fn new(study: &ResolvedStudy, record_grid: bool) -> Result<Self> {
        let reference = study.reference;
        let runs = study.runs.clone();
        let m_ref = reference.m;
        let ref_iterated = reference.kind().needs_iterated();
        let source = if ref_iterated {
            None
        } else {
            runs.iter()
                .enumerate()
                .filter(|(_, r)| r.kind().needs_iterated())
                .max_by(|a, b| (a.1.m, a.1.k).cmp(&(b.1.m, b.1.k)).then(b.0.cmp(&a.0)))
                .map(|(i, _)| i)
        };
        let mut feeds = Vec::with_capacity(runs.len());
        let mut fresh = Vec::with_capacity(runs.len());
        let mut dependents = vec![Vec::new(); runs.len()];
        for (i, run) in runs.iter().enumerate() {
            if run.m > m_ref {
                return Err(StudyError::Config(format!("run M={} exceeds M_ref={m_ref}", run.m)));
            }
            let divides = m_ref % run.m == 0;
            let own = if divides { Feed::Lattice { ratio: m_ref / run.m, chain_reference: false } } else { Feed::Bridge };
            if !run.kind().needs_iterated() {
                feeds.push(own);
                fresh.push(false);
                continue;
            }
            if ref_iterated && divides && run.k <= reference.k {
                feeds.push(Feed::Lattice { ratio: m_ref / run.m, chain_reference: true });
                fresh.push(false);
                continue;
            }
            match source {
                Some(s) if s != i && runs[s].m % run.m == 0 && run.k <= runs[s].k => {
                    feeds.push(Feed::Run { source: s, ratio: runs[s].m / run.m });
                    fresh.push(false);
                    dependents[s].push(i);
                }
                _ => {
                    feeds.push(own);
                    fresh.push(true);
                }
            }
        }
        let eta_ref = study.problem.q_law().values(reference.k as usize);
        Ok(Self { reference, runs, feeds, fresh, dependents, eta_ref, record_grid })
    }

    fn any_bridge(&self) -> bool {
        self.feeds.contains(&Feed::Bridge)
    }
}

/// Per-path results, one entry per run.
#[derive(Debug, Clone, PartialEq)]
pub struct PathOutcome {
    /// `||X_T^ref - Y_M||²` in the reference space.
    pub final_sq: Vec<f64>,
    /// Squared errors at grid points shared with the reference lattice.
    pub grid_sq: Vec<Vec<f64>>,
    pub ledgers: Vec<CostLedger>,
    pub reference_ledger: CostLedger,
}

struct RunState<'p> {
    stepper: Stepper<'p, SineBasisProblem>,
    y: Vec<f64>,
    steps_done: u64,
    pending: u64,
    increments: Vec<f64>,
    chain: Option<NoisePacket>,
    last_w: Vec<f64>,
    series: NormalStream<ChaCha8Rng>,
    eta: Vec<f64>,
    ledger: CostLedger,
    grid_sq: Vec<f64>,
}

enum StepNoise {
    Increments(Vec<f64>),
    Packet(NoisePacket),
}

fn distance_sq(coarse: &[f64], fine: &[f64]) -> f64 {
    let shared: f64 = coarse.iter().zip(fine).map(|(a, b)| (a - b) * (a - b)).sum();
    let tail: f64 = fine.iter().skip(coarse.len()).map(|b| b * b).sum();
    shared + tail
}

struct PathSim<'a> {
    plan: &'a CouplingPlan,
    m_ref: u64,
    states: Vec<RunState<'a>>,
    y_ref: Vec<f64>,
}

impl<'a> PathSim<'a> {
    /// Advances run `i` by one step; returns the packet it consumed when
    /// other runs chain from it.
    fn advance(&mut self, i: usize, noise: StepNoise) -> Result<Option<NoisePacket>> {
        let run = self.plan.runs[i];
        let fresh = self.plan.fresh[i];
        let needs_packet = run.kind().needs_iterated();
        let state = &mut self.states[i];
        let k = run.k as usize;
        let h = state.stepper.step_len();
        let mut used = None;
        if needs_packet {
            let d = run.d.expect("validated: DFM/MIL runs carry D");
            let packet = match noise {
                StepNoise::Packet(p) if p.k() == k => p,
                StepNoise::Packet(p) => p.truncate(k)?,
                StepNoise::Increments(db) => {
                    debug_assert!(fresh);
                    let iterated = alg1_iterated(&mut state.series, &db, h, d, &state.eta)?;
                    NoisePacket::new(db, h, iterated, d, state.eta.clone())?
                }
            };
            state.ledger.charge_normals(run.k * (1 + 2 * d));
            state.stepper.step_packet(&mut state.y, &packet, &mut state.ledger)?;
            if !self.plan.dependents[i].is_empty() {
                used = Some(packet);
            }
        } else {
            let db = match noise {
                StepNoise::Increments(db) => db,
                StepNoise::Packet(p) => p.delta_beta()[..k].to_vec(),
            };
            state.ledger.charge_normals(run.k);
            state.stepper.step_increments(&mut state.y, &db, &mut state.ledger)?;
        }
        state.steps_done += 1;
        if self.plan.record_grid && (state.steps_done * self.m_ref) % run.m == 0 {
            state.grid_sq.push(distance_sq(&state.y, &self.y_ref));
        }
        Ok(used)
    }

    fn advance_with_dependents(&mut self, i: usize, noise: StepNoise) -> Result<()> {
        let Some(packet) = self.advance(i, noise)? else { return Ok(()) };
        for idx in 0..self.plan.dependents[i].len() {
            let d = self.plan.dependents[i][idx];
            let Feed::Run { ratio, .. } = self.plan.feeds[d] else { unreachable!("dependents chain from a run") };
            let state = &mut self.states[d];
            match state.chain.as_mut() {
                Some(acc) => acc.extend(&packet)?,
                None => state.chain = Some(packet.clone()),
            }
            state.pending += 1;
            if state.pending == ratio {
                state.pending = 0;
                let chained = state.chain.take().expect("just filled");
                self.advance(d, StepNoise::Packet(chained))?;
            }
        }
        Ok(())
    }
}

/// Bridge sample positions inside one lattice interval: `offset / denom`
/// of the interval, strictly between 0 and 1.
#[derive(Debug, Clone, Copy)]
struct BridgePoint {
    offset: u64,
    denom: u64,
    run: usize,
}

fn cmp_fraction(a: &BridgePoint, b: &BridgePoint) -> Ordering {
    (a.offset as u128 * b.denom as u128).cmp(&(b.offset as u128 * a.denom as u128))
}

/// Simulates path `path` of the study.
pub fn simulate_path(plan: &CouplingPlan, problem: &SineBasisProblem, seed: u64, path: u64) -> Result<PathOutcome> {
    let reference = plan.reference;
    let m_ref = reference.m;
    let k_ref = reference.k as usize;
    let horizon = problem.horizon();
    let h_ref = horizon / m_ref as f64;
    let mut increments = NormalStream::new(substream(seed, path, purpose::INCREMENTS, 0));
    let mut bridge = NormalStream::new(substream(seed, path, purpose::BRIDGE, 0));
    let mut ref_series = NormalStream::new(substream(seed, path, purpose::SERIES, 0));
    let mut ref_stepper = Stepper::new(problem, reference.kind(), reference.n as usize, k_ref, h_ref)?;
    let mut ref_ledger = CostLedger::new();
    let y_ref = problem.initial_value(reference.n as usize)?.into_coeffs();

    let mut states = Vec::with_capacity(plan.runs.len());
    for (i, run) in plan.runs.iter().enumerate() {
        let config = run.scheme_config(horizon);
        let stepper = Stepper::from_config(problem, &config)?;
        states.push(RunState {
            stepper,
            y: problem.initial_value(run.n as usize)?.into_coeffs(),
            steps_done: 0,
            pending: 0,
            increments: vec![0.0; run.k as usize],
            chain: None,
            last_w: vec![0.0; run.k as usize],
            series: NormalStream::new(substream(seed, path, purpose::SERIES, i as u64 + 1)),
            eta: problem.q_law().values(run.k as usize),
            ledger: CostLedger::new(),
            grid_sq: Vec::new(),
        });
    }
    let mut sim = PathSim { plan, m_ref, states, y_ref };

    let any_bridge = plan.any_bridge();
    let mut w_left = vec![0.0; k_ref];
    let mut w_right = vec![0.0; k_ref];
    let mut points: Vec<BridgePoint> = Vec::new();
    let mut values: Vec<Option<Vec<f64>>> = vec![None; plan.runs.len()];

    for l in 0..m_ref {
        let dw = sample_increments(&mut increments, k_ref, h_ref)?;
        ref_ledger.charge_normals(reference.k);
        let ref_packet = match reference.d {
            Some(d) if reference.kind().needs_iterated() => {
                let iterated = alg1_iterated(&mut ref_series, &dw, h_ref, d, &plan.eta_ref)?;
                ref_ledger.charge_normals(2 * d * reference.k);
                Some(NoisePacket::new(dw.clone(), h_ref, iterated, d, plan.eta_ref.clone())?)
            }
            _ => None,
        };
        match &ref_packet {
            Some(p) => ref_stepper.step_packet(&mut sim.y_ref, p, &mut ref_ledger)?,
            None => ref_stepper.step_increments(&mut sim.y_ref, &dw, &mut ref_ledger)?,
        }

        if any_bridge {
            for (r, (a, b)) in w_right.iter_mut().zip(w_left.iter().zip(&dw)) {
                *r = a + b;
            }
            points.clear();
            for (i, feed) in plan.feeds.iter().enumerate() {
                values[i] = None;
                if *feed != Feed::Bridge {
                    continue;
                }
                let m = plan.runs[i].m;
                let target = (sim.states[i].steps_done + 1) * m_ref;
                let right = (l + 1) * m;
                if target == right {
                    values[i] = Some(w_right.clone());
                } else if target < right {
                    points.push(BridgePoint { offset: target - l * m, denom: m, run: i });
                }
            }
            points.sort_by(cmp_fraction);
            let mut tau_a = 0.0;
            let mut w_a = w_left.clone();
            let mut last: Option<BridgePoint> = None;
            for p in &points {
                if let Some(prev) = last.filter(|q| cmp_fraction(q, p) == Ordering::Equal) {
                    values[p.run] = values[prev.run].clone();
                    continue;
                }
                let tau = p.offset as f64 / p.denom as f64;
                let span = 1.0 - tau_a;
                let weight = (tau - tau_a) / span;
                let sd = (h_ref * (tau - tau_a) * (1.0 - tau) / span).sqrt();
                for (j, wa) in w_a.iter_mut().enumerate() {
                    *wa += weight * (w_right[j] - *wa) + sd * bridge.sample();
                }
                tau_a = tau;
                values[p.run] = Some(w_a.clone());
                last = Some(*p);
            }
        }

        for i in 0..plan.runs.len() {
            match plan.feeds[i] {
                Feed::Lattice { ratio, chain_reference } => {
                    let state = &mut sim.states[i];
                    if chain_reference {
                        let packet = ref_packet.as_ref().expect("reference produces packets");
                        match state.chain.as_mut() {
                            Some(acc) => acc.extend(packet)?,
                            None => state.chain = Some(packet.clone()),
                        }
                    } else {
                        state.increments.iter_mut().zip(&dw).for_each(|(a, b)| *a += b);
                    }
                    state.pending += 1;
                    if state.pending == ratio {
                        state.pending = 0;
                        let noise = if chain_reference {
                            StepNoise::Packet(state.chain.take().expect("filled above"))
                        } else {
                            let k = state.increments.len();
                            StepNoise::Increments(std::mem::replace(&mut state.increments, vec![0.0; k]))
                        };
                        sim.advance_with_dependents(i, noise)?;
                    }
                }
                Feed::Bridge => {
                    if let Some(w) = values[i].take() {
                        let state = &mut sim.states[i];
                        let k = state.last_w.len();
                        let db: Vec<f64> = w[..k].iter().zip(&state.last_w).map(|(a, b)| a - b).collect();
                        state.last_w.copy_from_slice(&w[..k]);
                        sim.advance_with_dependents(i, StepNoise::Increments(db))?;
                    }
                }
                Feed::Run { .. } => {}
            }
        }
        if any_bridge {
            std::mem::swap(&mut w_left, &mut w_right);
        }
    }

    let mut final_sq = Vec::with_capacity(plan.runs.len());
    let mut grid_sq = Vec::with_capacity(plan.runs.len());
    let mut ledgers = Vec::with_capacity(plan.runs.len());
    for (state, run) in sim.states.into_iter().zip(&plan.runs) {
        if state.steps_done != run.m {
            return Err(StudyError::Invariant(format!(
                "{} N={} took {} of {} steps",
                run.scheme, run.n, state.steps_done, run.m
            )));
        }
        final_sq.push(distance_sq(&state.y, &sim.y_ref));
        grid_sq.push(state.grid_sq);
        ledgers.push(state.ledger);
    }
    Ok(PathOutcome { final_sq, grid_sq, ledgers, reference_ledger: ref_ledger })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ErrorTime, SchemeName};
    use spde_core::problem::make_example;
    use spde_core::schemes::SchemeKind;

    fn study(reference: RunSpec, runs: Vec<RunSpec>) -> ResolvedStudy {
        ResolvedStudy {
            problem: make_example(1).unwrap(),
            reference,
            runs,
            paths: 2,
            seed: 11,
            error_at: ErrorTime::Final,
            threads: Some(1),
        }
    }

    fn run(kind: SchemeKind, n: u64, k: u64, m: u64, d: Option<u64>) -> RunSpec {
        RunSpec { scheme: SchemeName(kind), n, k, m, d }
    }

    #[test]
    fn self_comparison_is_exact() {
        for kind in SchemeKind::ALL {
            let d = kind.needs_iterated().then_some(3);
            let r = run(kind, 8, 4, 64, d);
            let s = study(r, vec![r]);
            let plan = CouplingPlan::new(&s, true).unwrap();
            let out = simulate_path(&plan, &s.problem, s.seed, 0).unwrap();
            assert_eq!(out.final_sq, vec![0.0]);
            assert!(out.grid_sq[0].iter().all(|e| *e == 0.0));
            assert_eq!(out.grid_sq[0].len(), 64);
        }
    }

    #[test]
    fn chaining_sources() {
        let lie = run(SchemeKind::Lie, 8, 4, 96, None);
        let runs = vec![
            run(SchemeKind::Dfm, 4, 2, 32, Some(2)),
            run(SchemeKind::Mil, 4, 2, 8, Some(2)),
            run(SchemeKind::Dfm, 4, 2, 12, Some(2)),
            run(SchemeKind::Ees, 4, 2, 7, None),
        ];
        let s = study(lie, runs);
        let plan = CouplingPlan::new(&s, false).unwrap();
        assert_eq!(plan.feeds[0], Feed::Lattice { ratio: 3, chain_reference: false });
        assert!(plan.fresh[0]);
        assert_eq!(plan.feeds[1], Feed::Run { source: 0, ratio: 4 });
        assert_eq!(plan.feeds[2], Feed::Lattice { ratio: 8, chain_reference: false });
        assert!(plan.fresh[2]);
        assert_eq!(plan.feeds[3], Feed::Bridge);
        let out = simulate_path(&plan, &s.problem, 3, 0).unwrap();
        assert!(out.final_sq.iter().all(|e| e.is_finite() && *e > 0.0));
    }

    #[test]
    fn bridged_runs_cover_the_horizon() {
        // Without noise coupling every run reduces to the exact heat flow.
        let heat = spde_core::problem::SineBasisProblem::new(spde_core::problem::SineBasisSpec {
            drift: spde_core::problem::DriftLaw::Zero,
            diffusion: spde_core::problem::DiffusionLaw::Zero,
            initial: spde_core::problem::InitialLaw::PowerDecay { exponent: 1.0 },
            ..*make_example(1).unwrap().spec()
        })
        .unwrap();
        let reference = run(SchemeKind::Ees, 8, 2, 30, None);
        let mut s = study(reference, vec![run(SchemeKind::Ees, 8, 2, 7, None), run(SchemeKind::Dfm, 8, 2, 4, Some(2))]);
        s.problem = heat;
        let plan = CouplingPlan::new(&s, false).unwrap();
        let out = simulate_path(&plan, &s.problem, 5, 1).unwrap();
        assert!(out.final_sq.iter().all(|e| *e < 1e-28));
    }

    #[test]
    fn reference_packets_feed_coarse_runs() {
        let reference = run(SchemeKind::Dfm, 8, 4, 64, Some(2));
        let s = study(reference, vec![run(SchemeKind::Mil, 8, 2, 16, Some(5)), run(SchemeKind::Dfm, 8, 4, 5, Some(1))]);
        let plan = CouplingPlan::new(&s, false).unwrap();
        assert_eq!(plan.feeds[0], Feed::Lattice { ratio: 4, chain_reference: true });
        assert_eq!(plan.feeds[1], Feed::Bridge);
        assert!(plan.fresh[1]);
        let out = simulate_path(&plan, &s.problem, 5, 0).unwrap();
        assert_eq!(out.ledgers[0].normal_draws, 16 * 2 * 11);
        assert_eq!(out.reference_ledger.normal_draws, 64 * 4 * 5);
    }
}
