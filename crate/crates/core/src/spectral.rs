//! Finite-dimensional representation of `H_N = span{e_1, ..., e_N}`.
//!
//! The eigenbasis is never materialised as functions. A field is its
//! coefficient vector and every operator used by the schemes is diagonal.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::Index;

use crate::{Error, Result};

/// Coefficients `<x, e_i>` of an element of `H_N`, `i = 1..=N` stored at `0..N`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField(Vec<f64>);

impl SpectralField {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::ZeroDimension);
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self(coeffs))
    }

    pub fn zeros(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::ZeroDimension);
        }
        Ok(Self(vec![0.0; n]))
    }

    /// The basis element `e_{index+1}` in `H_n`.
    pub fn basis(n: usize, index: usize) -> Result<Self> {
        let mut field = Self::zeros(n)?;
        if index >= n {
            return Err(Error::IndexOutOfRange { index, k: n });
        }
        field.0[index] = 1.0;
        Ok(field)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.0
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.0
    }

    /// Plain `H` norm.
    pub fn norm(&self) -> f64 {
        libm::sqrt(self.0.iter().map(|c| c * c).sum::<f64>())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    /// Squared `H` distance after zero-extending the shorter field.
    pub fn distance_squared(&self, other: &Self) -> f64 {
        let (long, short) = if self.dim() >= other.dim() {
            (&self.0, &other.0)
        } else {
            (&other.0, &self.0)
        };
        long.iter()
            .enumerate()
            .map(|(i, &a)| {
                let d = a - short.get(i).copied().unwrap_or(0.0);
                d * d
            })
            .sum()
    }
}

impl Index<usize> for SpectralField {
    type Output = f64;

    fn index(&self, index: usize) -> &f64 {
        &self.0[index]
    }
}

/// `P_N` applied to a coefficient sequence: keep the first `n` entries,
/// zero-extending when fewer are given.
pub fn project(coeffs: &[f64], n: usize) -> Result<SpectralField> {
    if n == 0 {
        return Err(Error::ZeroDimension);
    }
    let mut out = vec![0.0; n];
    let take = n.min(coeffs.len());
    out[..take].copy_from_slice(&coeffs[..take]);
    SpectralField::new(out)
}

/// Closed-form eigenvalue law of a diagonal operator, indexed from 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EigenLaw {
    /// `lambda_i = diffusivity * pi^2 * i^2`: eigenvalues of `-diffusivity * Laplacian`
    /// on `(0, 1)` with Dirichlet conditions and basis `sqrt(2) sin(i pi x)`.
    DirichletLaplacian { diffusivity: f64 },
    /// `eta_j = j^(-exponent)`.
    PowerDecay { exponent: f64 },
}

impl EigenLaw {
    /// Eigenvalue for the 1-based index `i`.
    pub fn value(&self, i: usize) -> f64 {
        let i = i as f64;
        match *self {
            EigenLaw::DirichletLaplacian { diffusivity } => diffusivity * PI * PI * i * i,
            EigenLaw::PowerDecay { exponent } => libm::pow(i, -exponent),
        }
    }

    /// The first `n` eigenvalues.
    pub fn values(&self, n: usize) -> Vec<f64> {
        (1..=n).map(|i| self.value(i)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            EigenLaw::DirichletLaplacian { diffusivity } if diffusivity > 0.0 && diffusivity.is_finite() => Ok(()),
            EigenLaw::DirichletLaplacian { .. } => Err(Error::InvalidParameter("diffusivity must be positive".into())),
            EigenLaw::PowerDecay { exponent } if exponent >= 0.0 && exponent.is_finite() => Ok(()),
            EigenLaw::PowerDecay { .. } => Err(Error::InvalidParameter("decay exponent must be non-negative".into())),
        }
    }
}

/// `P_N e^{A h}`: coefficient `i` scaled by `exp(-lambda_i h)`.
pub fn semigroup_apply(field: &SpectralField, law: &EigenLaw, h: f64) -> Result<SpectralField> {
    if !(h >= 0.0) {
        return Err(Error::NegativeTime(h));
    }
    let coeffs = field
        .coeffs()
        .iter()
        .enumerate()
        .map(|(i, &c)| c * libm::exp(-law.value(i + 1) * h))
        .collect();
    SpectralField::new(coeffs)
}

/// `||(-A)^r x||_H`.
pub fn sobolev_norm(field: &SpectralField, law: &EigenLaw, r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::NegativeExponent(r));
    }
    if !field.is_finite() {
        return Err(Error::NonFinite);
    }
    let sum: f64 = field
        .coeffs()
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let w = libm::pow(law.value(i + 1), r);
            w * w * c * c
        })
        .sum();
    Ok(libm::sqrt(sum))
}

/// Cached diagonal factors for a fixed `(law, N, h)`: the semigroup
/// `exp(-lambda_i h)` and the resolvent `1 / (1 + lambda_i h)`.
#[derive(Debug, Clone)]
pub struct Propagator {
    decay: Vec<f64>,
    resolvent: Vec<f64>,
}

impl Propagator {
    pub fn new(law: &EigenLaw, n: usize, h: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::ZeroDimension);
        }
        if !(h >= 0.0) {
            return Err(Error::NegativeTime(h));
        }
        let lambda = law.values(n);
        Ok(Self {
            decay: lambda.iter().map(|l| libm::exp(-l * h)).collect(),
            resolvent: lambda.iter().map(|l| 1.0 / (1.0 + l * h)).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.decay.len()
    }

    pub fn apply_semigroup(&self, coeffs: &mut [f64]) {
        coeffs.iter_mut().zip(&self.decay).for_each(|(c, f)| *c *= f);
    }

    pub fn apply_resolvent(&self, coeffs: &mut [f64]) {
        coeffs.iter_mut().zip(&self.resolvent).for_each(|(c, f)| *c *= f);
    }
}
