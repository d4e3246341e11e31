//! Q-Wiener increments and iterated Itô integrals
//! `I^Q_{(i,j)} = ∫∫ d<W, ẽ_i> d<W, ẽ_j>` over one step.
//!
//! The integrals are simulated with the truncated Fourier expansion of the
//! Lévy area. With `Δβ` standard Brownian increments over a step of length
//! `h` and `X_r, Y_r` i.i.d. standard normal vectors,
//!
//! ```text
//! I_(i,j) = Δβ_i Δβ_j / 2 - δ_ij h / 2 + A_ij
//! A_ij    = h/(2π) Σ_{r=1..D} (1/r) [X_ri (Y_rj + sqrt(2/h) Δβ_j) - X_rj (Y_ri + sqrt(2/h) Δβ_i)]
//! I^Q_(i,j) = sqrt(η_i η_j) I_(i,j)
//! ```
//!
//! which costs `K` normals for the increments and `2DK` for the series.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

pub use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

use crate::cost::CostLedger;
use crate::exact::{ceil_scaled_power, to_f64};
use crate::{Error, Rational, Result};

/// Substream purposes used by the drivers.
pub mod purpose {
    pub const INCREMENTS: u64 = 1;
    pub const SERIES: u64 = 2;
    pub const BRIDGE: u64 = 3;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent generator for `(seed, path, purpose, index)`.
///
/// Streams for distinct keys do not overlap, so results never depend on the
/// order in which paths or steps are processed.
pub fn substream(seed: u64, path: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let mut state = splitmix(seed);
    state = splitmix(state ^ path.rotate_left(17));
    state = splitmix(state ^ purpose.rotate_left(37));
    state = splitmix(state ^ index.rotate_left(49));
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Standard normal variates with a draw counter.
#[derive(Debug, Clone)]
pub struct NormalStream<R> {
    rng: R,
    drawn: u64,
}

impl<R: RngCore> NormalStream<R> {
    pub fn new(rng: R) -> Self {
        Self { rng, drawn: 0 }
    }

    pub fn sample(&mut self) -> f64 {
        self.drawn += 1;
        StandardNormal.sample(&mut self.rng)
    }

    /// Number of variates drawn so far.
    pub fn drawn(&self) -> u64 {
        self.drawn
    }
}

/// `K` independent `N(0, h)` increments.
pub fn sample_increments<R: RngCore>(stream: &mut NormalStream<R>, k: usize, h: f64) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(Error::NonPositiveStep(h));
    }
    let sd = libm::sqrt(h);
    Ok((0..k).map(|_| sd * stream.sample()).collect())
}

/// One step's noise: increments plus the `K x K` matrix of `I^Q_{(i,j)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePacket {
    delta_beta: Vec<f64>,
    h: f64,
    iterated: Vec<f64>,
    truncation: u64,
    eta: Vec<f64>,
}

impl NoisePacket {
    /// `iterated` is row-major, entry `(i, j)` at `i * K + j`.
    pub fn new(delta_beta: Vec<f64>, h: f64, iterated: Vec<f64>, truncation: u64, eta: Vec<f64>) -> Result<Self> {
        let k = delta_beta.len();
        if k == 0 {
            return Err(Error::ZeroDimension);
        }
        if eta.len() != k {
            return Err(Error::DimensionMismatch { expected: k, found: eta.len() });
        }
        if iterated.len() != k * k {
            return Err(Error::DimensionMismatch { expected: k * k, found: iterated.len() });
        }
        if !(h > 0.0) {
            return Err(Error::NonPositiveStep(h));
        }
        Ok(Self { delta_beta, h, iterated, truncation, eta })
    }

    /// Packet with zero increments and zero iterated integrals.
    pub fn zero(k: usize, h: f64, eta: Vec<f64>) -> Result<Self> {
        Self::new(vec![0.0; k], h, vec![0.0; k * k], 1, eta)
    }

    pub fn k(&self) -> usize {
        self.delta_beta.len()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn delta_beta(&self) -> &[f64] {
        &self.delta_beta
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn iterated(&self) -> &[f64] {
        &self.iterated
    }

    /// `I^Q_{(i,j)}`.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.iterated[i * self.k() + j]
    }

    /// Series truncation `D` used to produce the packet. For chained packets
    /// this is the smallest truncation among the pieces.
    pub fn truncation(&self) -> u64 {
        self.truncation
    }

    /// Restriction to the leading `k` noise directions.
    pub fn truncate(&self, k: usize) -> Result<Self> {
        let full = self.k();
        if k == 0 {
            return Err(Error::ZeroDimension);
        }
        if k > full {
            return Err(Error::IndexOutOfRange { index: k, k: full });
        }
        let iterated = (0..k).flat_map(|i| self.iterated[i * full..i * full + k].iter().copied()).collect();
        Ok(Self {
            delta_beta: self.delta_beta[..k].to_vec(),
            h: self.h,
            iterated,
            truncation: self.truncation,
            eta: self.eta[..k].to_vec(),
        })
    }

    /// Appends the packet of the directly following interval, so that `self`
    /// covers both; see [`chain_iterated`].
    pub fn extend(&mut self, next: &NoisePacket) -> Result<()> {
        let k = self.k();
        if next.k() != k {
            return Err(Error::IncompatiblePackets("noise dimension differs"));
        }
        if next.eta != self.eta {
            return Err(Error::IncompatiblePackets("covariance eigenvalues differ"));
        }
        let weighted: Vec<f64> = next.delta_beta.iter().zip(&self.eta).map(|(b, e)| b * libm::sqrt(*e)).collect();
        for i in 0..k {
            let left = self.delta_beta[i] * libm::sqrt(self.eta[i]);
            let row = &mut self.iterated[i * k..(i + 1) * k];
            for j in 0..k {
                row[j] += next.iterated[i * k + j] + left * weighted[j];
            }
        }
        self.delta_beta.iter_mut().zip(&next.delta_beta).for_each(|(a, b)| *a += b);
        self.h += next.h;
        self.truncation = self.truncation.min(next.truncation);
        Ok(())
    }

    /// Largest relative violation of
    /// `I^Q_ij + I^Q_ji = sqrt(η_i η_j) Δβ_i Δβ_j - δ_ij η_i h`
    /// and of `I^Q_ii = η_i (Δβ_i² - h) / 2`.
    pub fn identity_defect(&self) -> f64 {
        let k = self.k();
        let mut worst = 0.0_f64;
        for i in 0..k {
            for j in 0..k {
                let scale = libm::sqrt(self.eta[i] * self.eta[j]);
                let mut rhs = scale * self.delta_beta[i] * self.delta_beta[j];
                if i == j {
                    rhs -= self.eta[i] * self.h;
                }
                let lhs = self.entry(i, j) + self.entry(j, i);
                let size = self.entry(i, j).abs() + self.entry(j, i).abs() + rhs.abs() + f64::MIN_POSITIVE;
                worst = worst.max((lhs - rhs).abs() / size);
            }
            let diag = self.eta[i] * (self.delta_beta[i] * self.delta_beta[i] - self.h) / 2.0;
            let size = diag.abs() + self.entry(i, i).abs() + f64::MIN_POSITIVE;
            worst = worst.max((self.entry(i, i) - diag).abs() / size);
        }
        worst
    }
}

fn check_series_inputs(delta_beta: &[f64], h: f64, eta: &[f64]) -> Result<()> {
    if delta_beta.is_empty() {
        return Err(Error::ZeroDimension);
    }
    if eta.len() != delta_beta.len() {
        return Err(Error::DimensionMismatch { expected: delta_beta.len(), found: eta.len() });
    }
    if !(h > 0.0) {
        return Err(Error::NonPositiveStep(h));
    }
    Ok(())
}

/// `I^Q` from the Fourier series truncated after `d` terms; draws exactly
/// `2 d K` normals from `stream`.
pub fn alg1_iterated<R: RngCore>(
    stream: &mut NormalStream<R>,
    delta_beta: &[f64],
    h: f64,
    d: u64,
    eta: &[f64],
) -> Result<Vec<f64>> {
    Ok(alg1_nested(stream, delta_beta, h, eta, &[d])?.pop().expect("one truncation requested"))
}

/// `I^Q` at several truncations sharing the same series terms.
///
/// `truncations` must be strictly increasing; the matrix for truncation `D`
/// equals what [`alg1_iterated`] returns for `D` on the same stream. Draws
/// `2 D_max K` normals.
pub fn alg1_nested<R: RngCore>(
    stream: &mut NormalStream<R>,
    delta_beta: &[f64],
    h: f64,
    eta: &[f64],
    truncations: &[u64],
) -> Result<Vec<Vec<f64>>> {
    check_series_inputs(delta_beta, h, eta)?;
    if truncations.first().is_none_or(|&d| d == 0) {
        return Err(Error::ZeroTruncation);
    }
    if truncations.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("truncations must be strictly increasing".into()));
    }
    let k = delta_beta.len();
    let c = libm::sqrt(2.0 / h);
    let shifted: Vec<f64> = delta_beta.iter().map(|b| c * b).collect();
    let mut x = vec![0.0; k];
    let mut y = vec![0.0; k];
    // sum_r (1/r) X_ri (Y_rj + c Δβ_j)
    let mut series = vec![0.0; k * k];
    let mut out = Vec::with_capacity(truncations.len());
    let mut next = 0;
    let d_max = *truncations.last().expect("non-empty");
    for r in 1..=d_max {
        x.iter_mut().for_each(|v| *v = stream.sample());
        y.iter_mut().for_each(|v| *v = stream.sample());
        let inv_r = 1.0 / r as f64;
        for i in 0..k {
            let xi = x[i] * inv_r;
            let row = &mut series[i * k..(i + 1) * k];
            for j in 0..k {
                row[j] += xi * (y[j] + shifted[j]);
            }
        }
        if r == truncations[next] {
            out.push(assemble(&series, delta_beta, h, eta));
            next += 1;
        }
    }
    Ok(out)
}

fn assemble(series: &[f64], delta_beta: &[f64], h: f64, eta: &[f64]) -> Vec<f64> {
    let k = delta_beta.len();
    let area_scale = h / (2.0 * PI);
    let mut out = vec![0.0; k * k];
    for i in 0..k {
        out[i * k + i] = eta[i] * (delta_beta[i] * delta_beta[i] - h) / 2.0;
        for j in (i + 1)..k {
            let scale = libm::sqrt(eta[i] * eta[j]);
            let sym = delta_beta[i] * delta_beta[j] / 2.0;
            let area = area_scale * (series[i * k + j] - series[j * k + i]);
            out[i * k + j] = scale * (sym + area);
            out[j * k + i] = scale * (sym - area);
        }
    }
    out
}

/// Fresh increments and series terms for one step: `K (1 + 2D)` normals.
pub fn alg1_packet<R: RngCore>(stream: &mut NormalStream<R>, h: f64, d: u64, eta: &[f64]) -> Result<NoisePacket> {
    let delta_beta = sample_increments(stream, eta.len(), h)?;
    let iterated = alg1_iterated(stream, &delta_beta, h, d, eta)?;
    NoisePacket::new(delta_beta, h, iterated, d, eta.to_vec())
}

/// Packet on `[t_0, t_n]` from contiguous packets on `[t_0, t_1], ..., [t_{n-1}, t_n]`,
/// folding left to right with
/// `I^Q_ij[a,c] = I^Q_ij[a,b] + I^Q_ij[b,c] + sqrt(η_i η_j) Δβ_i[a,b] Δβ_j[b,c]`.
pub fn chain_iterated(fine: &[NoisePacket]) -> Result<NoisePacket> {
    let (first, rest) = fine.split_first().ok_or(Error::EmptyChain)?;
    let mut acc = first.clone();
    for packet in rest {
        acc.extend(packet)?;
    }
    Ok(acc)
}

/// `D_1 = ceil(M^(2q - 1))`, at least 1.
pub fn choose_d1(m: u64, q: Rational) -> Result<u64> {
    if m == 0 {
        return Err(Error::ZeroDimension);
    }
    let exponent = Rational::from_integer(2) * q - Rational::from_integer(1);
    Ok(ceil_scaled_power(1, m, exponent)?.max(1))
}

/// `D_2 = ceil(min(K sqrt(K - 1), 1 / min_j η_j) M^(q - 1/2))`, at least 1.
pub fn choose_d2(m: u64, eta: &[f64], q: Rational) -> Result<u64> {
    if m == 0 || eta.is_empty() {
        return Err(Error::ZeroDimension);
    }
    let k = eta.len() as f64;
    let min_eta = eta.iter().copied().fold(f64::INFINITY, f64::min);
    let factor = (k * libm::sqrt(k - 1.0)).min(1.0 / min_eta);
    let value = factor * libm::pow(m as f64, to_f64(&q) - 0.5);
    Ok((libm::ceil(value) as u64).max(1))
}

/// `E[I^Q_(i,j) I^Q_(i,j)] = η_i η_j h² / 2`.
pub fn exact_second_moment(i: usize, j: usize, h: f64, eta: &[f64]) -> f64 {
    0.5 * eta[i] * eta[j] * h * h
}

/// `E[I^Q_(i1,j1) I^Q_(i2,j2)]`: nonzero only for identical index pairs.
pub fn exact_cross_moment(first: (usize, usize), second: (usize, usize), h: f64, eta: &[f64]) -> f64 {
    if first == second {
        exact_second_moment(first.0, first.1, h, eta)
    } else {
        0.0
    }
}

/// Second moment of the `d`-term truncation for `i != j`:
/// `η_i η_j h² (1/4 + 3/(2π²) Σ_{r<=d} r^-2)`, which tends to `η_i η_j h² / 2`.
pub fn alg1_truncated_second_moment(i: usize, j: usize, h: f64, eta: &[f64], d: u64) -> f64 {
    if i == j {
        return exact_second_moment(i, j, h, eta);
    }
    let partial: f64 = (1..=d).map(|r| 1.0 / (r as f64 * r as f64)).sum();
    eta[i] * eta[j] * h * h * (0.25 + 1.5 / (PI * PI) * partial)
}

/// Step-by-step noise consumed by the integrators.
pub trait NoiseSource {
    /// Standard increments `Δβ` for the next step (EES, LIE).
    fn next_increments(&mut self, ledger: &mut CostLedger) -> Result<Vec<f64>>;
    /// Increments plus iterated integrals for the next step (DFM, MIL).
    fn next_packet(&mut self, ledger: &mut CostLedger) -> Result<NoisePacket>;
}

/// Freshly sampled noise; the ledger is charged with the normals actually drawn.
#[derive(Debug, Clone)]
pub struct FreshNoise<R> {
    stream: NormalStream<R>,
    h: f64,
    truncation: u64,
    eta: Vec<f64>,
}

impl<R: RngCore> FreshNoise<R> {
    pub fn new(rng: R, h: f64, truncation: u64, eta: Vec<f64>) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::NonPositiveStep(h));
        }
        if truncation == 0 {
            return Err(Error::ZeroTruncation);
        }
        Ok(Self { stream: NormalStream::new(rng), h, truncation, eta })
    }
}

impl<R: RngCore> NoiseSource for FreshNoise<R> {
    fn next_increments(&mut self, ledger: &mut CostLedger) -> Result<Vec<f64>> {
        let before = self.stream.drawn();
        let out = sample_increments(&mut self.stream, self.eta.len(), self.h)?;
        ledger.charge_normals(self.stream.drawn() - before);
        Ok(out)
    }

    fn next_packet(&mut self, ledger: &mut CostLedger) -> Result<NoisePacket> {
        let before = self.stream.drawn();
        let out = alg1_packet(&mut self.stream, self.h, self.truncation, &self.eta)?;
        ledger.charge_normals(self.stream.drawn() - before);
        Ok(out)
    }
}

/// Replays precomputed noise (aggregated or chained from a finer grid),
/// charging a fixed number of normals per step: the count a stand-alone
/// simulation at this resolution would draw.
#[derive(Debug, Clone)]
pub struct ReplayNoise {
    increments: Vec<Vec<f64>>,
    packets: Vec<NoisePacket>,
    position: usize,
    normals_per_step: u64,
}

impl ReplayNoise {
    pub fn from_increments(increments: Vec<Vec<f64>>, normals_per_step: u64) -> Self {
        Self { increments, packets: Vec::new(), position: 0, normals_per_step }
    }

    pub fn from_packets(packets: Vec<NoisePacket>, normals_per_step: u64) -> Self {
        Self { increments: Vec::new(), packets, position: 0, normals_per_step }
    }

    fn exhausted() -> Error {
        Error::InvalidParameter("replayed noise exhausted".into())
    }
}

impl NoiseSource for ReplayNoise {
    fn next_increments(&mut self, ledger: &mut CostLedger) -> Result<Vec<f64>> {
        let out = if self.packets.is_empty() {
            self.increments.get(self.position).cloned()
        } else {
            self.packets.get(self.position).map(|p| p.delta_beta.clone())
        }
        .ok_or_else(Self::exhausted)?;
        self.position += 1;
        ledger.charge_normals(self.normals_per_step);
        Ok(out)
    }

    fn next_packet(&mut self, ledger: &mut CostLedger) -> Result<NoisePacket> {
        let out = self.packets.get(self.position).cloned().ok_or_else(Self::exhausted)?;
        self.position += 1;
        ledger.charge_normals(self.normals_per_step);
        Ok(out)
    }
}
