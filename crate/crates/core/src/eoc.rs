//! Effective order of convergence (EOC) planning in exact rational arithmetic.
//!
//! With the error model `C (N^(-G) + K^(-A) + M^(-q))`, `G = γρ_A` and
//! `A = αρ_Q`, minimizing the error for a cost budget `c` yields
//! `err = O(c^(-EOC))`. For the schemes using the truncated Fourier series
//! (`D = O(M^(2q-1))`):
//!
//! | case                     | DFMA                 | MILA                  | EES (q_e = min(q, 1/2)) |
//! |--------------------------|----------------------|-----------------------|-------------------------|
//! | `q <= 1/2`               | `1/(1/G + 1/A + 1/q)`| `1/(2/G + 1/A + 1/q)` | `1/(1/G + 1/A + 1/q_e)` |
//! | `G(2q-1) <= q`           | same                 | same                  | same                    |
//! | `q <= G(2q-1) <= 2q`     | `A/(2A + 1)`         | same as above         | same                    |
//! | `2q <= G(2q-1)`          | `A/(2A + 1)`         | `A/(2A + 1)`          | same                    |
//!
//! Rows are tested in order, so ties go to the earlier row; the formulas
//! agree on every boundary.

use alloc::vec::Vec;
use core::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::noise::choose_d1;
use crate::problem::RegularityParams;
use crate::schemes::SchemeKind;
use crate::{ceil_scaled_power, Error, Rational, Result};

fn big(r: Rational) -> BigRational {
    BigRational::new(BigInt::from(*r.numer()), BigInt::from(*r.denom()))
}

fn small(r: &BigRational) -> Result<Rational> {
    match (r.numer().to_i64(), r.denom().to_i64()) {
        (Some(n), Some(d)) => Ok(Rational::new(n, d)),
        _ => Err(Error::InvalidParameter(alloc::format!("exponent {r} does not fit in 64 bits"))),
    }
}

fn int(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseDimension {
    /// Infinitely many nonzero `η_j`; `K` is a discretization parameter.
    Infinite,
    /// Exactly `rank` nonzero `η_j`; `K = rank`.
    Finite { rank: u64 },
}

/// Parameters of the error model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlanInput {
    pub gamma: Rational,
    pub beta: Rational,
    pub alpha: Rational,
    pub rho_a: Rational,
    pub rho_q: Rational,
    pub noise: NoiseDimension,
}

impl PlanInput {
    pub fn new(
        gamma: Rational,
        beta: Rational,
        alpha: Rational,
        rho_a: Rational,
        rho_q: Rational,
        noise: NoiseDimension,
    ) -> Result<Self> {
        let input = Self { gamma, beta, alpha, rho_a, rho_q, noise };
        input.validate()?;
        Ok(input)
    }

    pub fn from_params(params: &RegularityParams, noise: NoiseDimension) -> Result<Self> {
        Self::new(params.gamma, params.beta, params.alpha, params.rho_a, params.rho_q, noise)
    }

    pub fn validate(&self) -> Result<()> {
        let zero = Rational::from_integer(0);
        let fail = |what: &str| Err(Error::InvalidParameter(what.into()));
        if self.gamma <= self.beta || self.beta < zero {
            return fail("need 0 <= beta < gamma");
        }
        if self.alpha <= zero || self.rho_a <= zero {
            return fail("alpha and rho_A must be positive");
        }
        if self.rho_q <= Rational::from_integer(1) {
            return fail("rho_Q must exceed 1");
        }
        if self.noise == (NoiseDimension::Finite { rank: 0 }) {
            return fail("finite noise rank must be positive");
        }
        Ok(())
    }

    /// `G = γρ_A`.
    pub fn spatial_rate(&self) -> BigRational {
        big(self.gamma) * big(self.rho_a)
    }

    /// `A = αρ_Q`.
    pub fn noise_rate(&self) -> BigRational {
        big(self.alpha) * big(self.rho_q)
    }

    /// `q = min(2(γ - β), γ)` of DFM and MIL.
    pub fn q(&self) -> BigRational {
        (int(2) * (big(self.gamma) - big(self.beta))).min(big(self.gamma))
    }

    /// Temporal order of `kind`; EES and LIE are capped at 1/2.
    pub fn q_for(&self, kind: SchemeKind) -> BigRational {
        match kind {
            SchemeKind::Dfm | SchemeKind::Mil => self.q(),
            SchemeKind::Ees | SchemeKind::Lie => self.q().min(BigRational::new(BigInt::from(1), BigInt::from(2))),
        }
    }

    /// `G (2q - 1)`, the quantity compared against `q` and `2q`.
    fn smoothing(&self) -> BigRational {
        self.spatial_rate() * (int(2) * self.q() - int(1))
    }
}

/// Rows of the case table, in the order they are checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PlanCase {
    /// `q <= 1/2`.
    LowOrder,
    /// `G(2q - 1) <= q` and `q > 1/2`.
    SpatiallyLimited,
    /// `q <= G(2q - 1) <= 2q`.
    SeriesLimited,
    /// `2q <= G(2q - 1)`.
    SeriesDominated,
}

impl PlanCase {
    pub fn label(self) -> &'static str {
        match self {
            PlanCase::LowOrder => "q <= 1/2",
            PlanCase::SpatiallyLimited => "gamma*rho_A*(2q-1) <= q and q > 1/2",
            PlanCase::SeriesLimited => "q <= gamma*rho_A*(2q-1) <= 2q",
            PlanCase::SeriesDominated => "2q <= gamma*rho_A*(2q-1)",
        }
    }

    /// Schemes attaining the best EOC among DFMA, MILA and EES.
    pub fn optimal(self) -> &'static [SchemeKind] {
        match self {
            PlanCase::LowOrder => &[SchemeKind::Dfm, SchemeKind::Ees],
            PlanCase::SpatiallyLimited | PlanCase::SeriesLimited => &[SchemeKind::Dfm],
            PlanCase::SeriesDominated => &[SchemeKind::Dfm, SchemeKind::Mil],
        }
    }
}

impl fmt::Display for PlanCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

pub fn classify(input: &PlanInput) -> PlanCase {
    let q = input.q();
    let s = input.smoothing();
    if q <= BigRational::new(BigInt::from(1), BigInt::from(2)) {
        PlanCase::LowOrder
    } else if s <= q {
        PlanCase::SpatiallyLimited
    } else if s <= int(2) * q {
        PlanCase::SeriesLimited
    } else {
        PlanCase::SeriesDominated
    }
}

fn harmonic(terms: &[BigRational]) -> BigRational {
    let sum: BigRational = terms.iter().map(|t| t.recip()).fold(BigRational::zero(), |a, b| a + b);
    sum.recip()
}

/// Exact EOC of `kind`; LIE is treated like EES.
pub fn eoc_exponent(input: &PlanInput, kind: SchemeKind) -> BigRational {
    let g = input.spatial_rate();
    let a = input.noise_rate();
    let q = input.q_for(kind);
    let s = input.smoothing();
    let q_dfm = input.q();
    let series = || a.clone() / (int(2) * a.clone() + BigRational::one());
    let half = BigRational::new(BigInt::from(1), BigInt::from(2));
    match (input.noise, kind) {
        (NoiseDimension::Infinite, SchemeKind::Dfm) => {
            if s <= q_dfm || q_dfm <= half {
                harmonic(&[g, a, q])
            } else {
                series()
            }
        }
        (NoiseDimension::Infinite, SchemeKind::Mil) => {
            if s <= int(2) * q_dfm.clone() {
                harmonic(&[g.clone() / int(2), a, q])
            } else {
                series()
            }
        }
        (NoiseDimension::Infinite, _) => harmonic(&[g, a, q]),
        (NoiseDimension::Finite { .. }, SchemeKind::Dfm) => {
            if s <= q_dfm || q_dfm <= half {
                harmonic(&[g, q])
            } else {
                half
            }
        }
        (NoiseDimension::Finite { .. }, SchemeKind::Mil) => {
            if s <= int(2) * q_dfm.clone() {
                harmonic(&[g.clone() / int(2), q])
            } else {
                half
            }
        }
        (NoiseDimension::Finite { .. }, _) => harmonic(&[g, q]),
    }
}

/// DFMA, MILA and EES ordered by decreasing EOC (stable for ties).
pub fn ranking(input: &PlanInput) -> Vec<(SchemeKind, BigRational)> {
    let mut out: Vec<_> =
        [SchemeKind::Dfm, SchemeKind::Mil, SchemeKind::Ees].iter().map(|&k| (k, eoc_exponent(input, k))).collect();
    out.sort_by(|a, b| b.1.cmp(&a.1));
    out
}

/// Discretization matched to an anchor `N`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Resolution {
    pub n: u64,
    pub m: u64,
    pub k: u64,
    /// Series truncation `D_1`, for DFM and MIL.
    pub d: Option<u64>,
    /// `M = ceil(N^m_exponent)` with `m_exponent = G / q`.
    pub m_exponent: BigRational,
    /// `K = ceil(N^k_exponent)` with `k_exponent = G / A`; `None` for finite noise.
    pub k_exponent: Option<BigRational>,
    /// Set when `K` was reduced to `N` to keep `K <= N`.
    pub k_clamped: bool,
}

/// `M`, `K` and `D` balancing the error terms for a given `N`.
///
/// The optimal allocations all satisfy `M ~ N^(G/q)` and `K ~ N^(G/A)`,
/// which is realized here with the ceiling applied once, exactly.
pub fn optimal_resolution(input: &PlanInput, kind: SchemeKind, anchor_n: u64) -> Result<Resolution> {
    if anchor_n == 0 {
        return Err(Error::ZeroDimension);
    }
    let g = input.spatial_rate();
    let q = input.q_for(kind);
    let m_exponent = g.clone() / q.clone();
    let m = ceil_scaled_power(1, anchor_n, small(&m_exponent)?)?;
    let (k, k_exponent) = match input.noise {
        NoiseDimension::Infinite => {
            let e = g / input.noise_rate();
            (ceil_scaled_power(1, anchor_n, small(&e)?)?, Some(e))
        }
        NoiseDimension::Finite { rank } => (rank, None),
    };
    let k_clamped = k > anchor_n;
    let d = if kind.needs_iterated() { Some(choose_d1(m, small(&q)?)?) } else { None };
    Ok(Resolution { n: anchor_n, m, k: k.min(anchor_n), d, m_exponent, k_exponent, k_clamped })
}
