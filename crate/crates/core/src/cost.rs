//! Computational cost model.
//!
//! Cost is counted in evaluations of real-valued functionals (each of unit
//! cost `c`) plus independent `N(0,1)` variates (unit cost 1). Applying an
//! already evaluated linear operator is not charged.

use crate::exact::ceil_scaled_power;
use crate::schemes::SchemeKind;
use crate::{Error, Rational, Result};

/// Per-run counters, filled in by the steppers and noise sources.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CostLedger {
    /// Functionals `<F(y), e_i>`.
    pub functional_evals_f: u64,
    /// Functionals `<B(y) ẽ_j, e_i>`.
    pub functional_evals_b: u64,
    /// Functionals `<(B'(y) e_k) ẽ_j, e_l>`.
    pub functional_evals_bprime: u64,
    pub normal_draws: u64,
    /// Uncharged bookkeeping: entries touched when applying operators.
    pub unit_ops: u64,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn charge_drift(&mut self, n: u64) {
        self.functional_evals_f += n;
    }

    pub fn charge_diffusion(&mut self, n: u64) {
        self.functional_evals_b += n;
    }

    pub fn charge_derivative(&mut self, n: u64) {
        self.functional_evals_bprime += n;
    }

    pub fn charge_normals(&mut self, n: u64) {
        self.normal_draws += n;
    }

    pub fn charge_ops(&mut self, n: u64) {
        self.unit_ops += n;
    }

    pub fn merge(&mut self, other: &CostLedger) {
        self.functional_evals_f += other.functional_evals_f;
        self.functional_evals_b += other.functional_evals_b;
        self.functional_evals_bprime += other.functional_evals_bprime;
        self.normal_draws += other.normal_draws;
        self.unit_ops += other.unit_ops;
    }

    pub fn functional_evals(&self) -> u64 {
        self.functional_evals_f + self.functional_evals_b + self.functional_evals_bprime
    }

    /// `c * (functional evaluations) + normal draws`.
    pub fn total(&self, functional_cost: u64) -> u64 {
        functional_cost * self.functional_evals() + self.normal_draws
    }

    /// The part of the ledger covered by [`ledger_expected`].
    pub fn charged(&self) -> StepCost {
        StepCost {
            drift: self.functional_evals_f,
            diffusion: self.functional_evals_b,
            derivative: self.functional_evals_bprime,
            normals: self.normal_draws,
        }
    }
}

/// Expected charges for one time step.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StepCost {
    pub drift: u64,
    pub diffusion: u64,
    pub derivative: u64,
    pub normals: u64,
}

impl StepCost {
    pub fn times(self, steps: u64) -> StepCost {
        StepCost {
            drift: self.drift * steps,
            diffusion: self.diffusion * steps,
            derivative: self.derivative * steps,
            normals: self.normals * steps,
        }
    }

    pub fn total(&self, functional_cost: u64) -> u64 {
        functional_cost * (self.drift + self.diffusion + self.derivative) + self.normals
    }
}

/// Per-step charges of each scheme, with `D` the series truncation used by
/// the iterated-integral simulation (required for DFM and MIL).
pub fn ledger_expected(kind: SchemeKind, n: u64, k: u64, d: Option<u64>) -> Result<StepCost> {
    let truncation = || match d {
        Some(0) => Err(Error::ZeroTruncation),
        Some(d) => Ok(d),
        None => Err(Error::InvalidParameter("DFM and MIL need a truncation count D".into())),
    };
    Ok(match kind {
        SchemeKind::Ees | SchemeKind::Lie => StepCost { drift: n, diffusion: k * n, derivative: 0, normals: k },
        SchemeKind::Dfm => StepCost { drift: n, diffusion: 2 * k * n, derivative: 0, normals: k * (1 + 2 * truncation()?) },
        SchemeKind::Mil => {
            StepCost { drift: n, diffusion: k * n, derivative: k * n * n, normals: k * (1 + 2 * truncation()?) }
        }
    })
}

/// Closed-form cost of one trajectory with `functional_cost = 1`:
///
/// ```text
/// DFM:      MN + 2MNK       + MK(1 + 2 M^(2q-1))
/// MIL:      MN + MNK + MN²K + MK(1 + 2 M^(2q-1))
/// EES, LIE: MN + MNK        + MK
/// ```
///
/// `M^(2q-1)` is taken as a real number and the total is rounded up once.
pub fn cost_formula(kind: SchemeKind, n: u64, k: u64, m: u64, q: Rational) -> Result<u64> {
    cost_formula_weighted(kind, n, k, m, q, 1)
}

/// [`cost_formula`] with functional evaluations weighted by `functional_cost`.
pub fn cost_formula_weighted(kind: SchemeKind, n: u64, k: u64, m: u64, q: Rational, functional_cost: u64) -> Result<u64> {
    if n == 0 || k == 0 || m == 0 {
        return Err(Error::ZeroDimension);
    }
    let (n128, k128, m128, c) = (n as u128, k as u128, m as u128, functional_cost as u128);
    let functionals = match kind {
        SchemeKind::Dfm => m128 * n128 + 2 * m128 * n128 * k128,
        SchemeKind::Mil => m128 * n128 + m128 * n128 * k128 + m128 * n128 * n128 * k128,
        SchemeKind::Ees | SchemeKind::Lie => m128 * n128 + m128 * n128 * k128,
    };
    let mut total = c * functionals + m128 * k128;
    if matches!(kind, SchemeKind::Dfm | SchemeKind::Mil) {
        let exponent = Rational::from_integer(2) * q - Rational::from_integer(1);
        total += ceil_scaled_power(2 * m * k, m, exponent)? as u128;
    }
    u64::try_from(total).map_err(|_| Error::InvalidParameter("cost exceeds u64".into()))
}
