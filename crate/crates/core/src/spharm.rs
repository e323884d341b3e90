//! Real spherical harmonics and the truncated-harmonic filter function used by
//! the mesh convolutions.
//!
//! Conventions: associated Legendre functions carry no Condon–Shortley phase,
//! and the real basis is orthonormal on the unit sphere (an extra `√2` for
//! `m > 0`). Filter coefficients for one channel pair are laid out per degree
//! `l` as `a_l0, a_l1, b_l1, …, a_ll, b_ll`, i.e. `(L+1)²` values in total.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest supported harmonic degree.
pub const MAX_DEGREE: usize = 8;

/// Number of filter coefficients for degree `l_max`, `(L+1)²`.
pub const fn basis_len(l_max: usize) -> usize {
    (l_max + 1) * (l_max + 1)
}

/// Index of `a_lm` in the per-pair coefficient vector (`m = 0` allowed).
pub const fn cos_index(l: usize, m: usize) -> usize {
    if m == 0 {
        l * l
    } else {
        l * l + 2 * m - 1
    }
}

/// Index of `b_lm` (`m ≥ 1`).
pub const fn sin_index(l: usize, m: usize) -> usize {
    l * l + 2 * m
}

/// Associated Legendre function `P_l^m(x)` without Condon–Shortley phase.
pub fn assoc_legendre(l: usize, m: usize, x: f64) -> Result<f64> {
    if m > l {
        return Err(Error::Domain(format!("order m={m} exceeds degree l={l}")));
    }
    if !(-1.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("|x| > 1 (x = {x})")));
    }
    Ok(legendre_column(l, m, x))
}

/// Upward recurrence in `l` at fixed `m`.
fn legendre_column(l: usize, m: usize, x: f64) -> f64 {
    let s = (1.0 - x * x).max(0.0).sqrt();
    // P_m^m = (2m-1)!! s^m
    let mut pmm = 1.0;
    for i in 1..=m {
        pmm *= (2 * i - 1) as f64 * s;
    }
    if l == m {
        return pmm;
    }
    let mut pm1 = x * (2 * m + 1) as f64 * pmm;
    if l == m + 1 {
        return pm1;
    }
    let mut pm2 = pmm;
    for ll in (m + 2)..=l {
        let p = ((2 * ll - 1) as f64 * x * pm1 - (ll + m - 1) as f64 * pm2) / (ll - m) as f64;
        pm2 = pm1;
        pm1 = p;
    }
    pm1
}

/// Orthonormal normalization including the `√2` for `m > 0`.
fn normalization(l: usize, m: usize) -> f64 {
    // (l-m)!/(l+m)!
    let mut ratio = 1.0;
    for k in (l - m + 1)..=(l + m) {
        ratio /= k as f64;
    }
    let n = ((2 * l + 1) as f64 / (4.0 * PI) * ratio).sqrt();
    if m > 0 {
        n * 2f64.sqrt()
    } else {
        n
    }
}

/// Value of the two real harmonic families at one `(l, m)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealSh {
    /// `N_lm P_l^m(cos θ) cos(mφ)`
    pub cos: f64,
    /// `N_lm P_l^m(cos θ) sin(mφ)`; zero for `m = 0`.
    pub sin: f64,
}

pub fn sh_eval(l: usize, m: usize, theta: f64, phi: f64) -> Result<RealSh> {
    if m > l {
        return Err(Error::Domain(format!("order m={m} exceeds degree l={l}")));
    }
    let radial = normalization(l, m) * legendre_column(l, m, theta.cos().clamp(-1.0, 1.0));
    let mf = m as f64;
    Ok(RealSh {
        cos: radial * (mf * phi).cos(),
        sin: radial * (mf * phi).sin(),
    })
}

/// Writes the `(L+1)²` basis values at `(θ, φ)` into `out`; the filter value
/// is the dot product of a coefficient vector with this basis.
pub fn filter_basis_into(l_max: usize, theta: f64, phi: f64, out: &mut [f64]) {
    debug_assert_eq!(out.len(), basis_len(l_max));
    let x = theta.cos().clamp(-1.0, 1.0);
    for m in 0..=l_max {
        let cm = (m as f64 * phi).cos();
        let sm = (m as f64 * phi).sin();
        for l in m..=l_max {
            let radial = normalization(l, m) * legendre_column(l, m, x);
            if m == 0 {
                out[cos_index(l, 0)] = radial;
            } else {
                out[cos_index(l, m)] = radial * cm;
                out[sin_index(l, m)] = radial * sm;
            }
        }
    }
}

/// Basis vector of the truncated filter at `(θ, φ)`. Since the filter is
/// linear in its coefficients this is also `∂F/∂(a, b)`.
pub fn filter_basis(l_max: usize, theta: f64, phi: f64) -> Vec<f64> {
    let mut out = vec![0.0; basis_len(l_max)];
    filter_basis_into(l_max, theta, phi, &mut out);
    out
}

/// Learnable spherical-harmonics coefficients for every `(out, in)` channel
/// pair. Storage is `[out][in][k]` with `k` the basis index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterBank {
    degree: usize,
    in_channels: usize,
    out_channels: usize,
    coefficients: Vec<f64>,
}

impl FilterBank {
    pub fn zeros(degree: usize, in_channels: usize, out_channels: usize) -> Result<Self> {
        if degree > MAX_DEGREE {
            return Err(Error::Config(format!(
                "harmonic degree {degree} exceeds the limit of {MAX_DEGREE}"
            )));
        }
        if in_channels == 0 || out_channels == 0 {
            return Err(Error::Config("filter bank needs at least one channel each way".into()));
        }
        Ok(Self {
            degree,
            in_channels,
            out_channels,
            coefficients: vec![0.0; in_channels * out_channels * basis_len(degree)],
        })
    }

    pub fn from_coefficients(
        degree: usize,
        in_channels: usize,
        out_channels: usize,
        coefficients: Vec<f64>,
    ) -> Result<Self> {
        let mut bank = Self::zeros(degree, in_channels, out_channels)?;
        if coefficients.len() != bank.coefficients.len() {
            return Err(Error::Shape(format!(
                "expected {} coefficients, got {}",
                bank.coefficients.len(),
                coefficients.len()
            )));
        }
        bank.coefficients = coefficients;
        Ok(bank)
    }

    /// Gaussian initialization with the given standard deviation.
    pub fn random(
        degree: usize,
        in_channels: usize,
        out_channels: usize,
        std: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut bank = Self::zeros(degree, in_channels, out_channels)?;
        let normal = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
        for c in bank.coefficients.iter_mut() {
            *c = normal.sample(rng);
        }
        Ok(bank)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn basis_len(&self) -> usize {
        basis_len(self.degree)
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn coefficients_mut(&mut self) -> &mut [f64] {
        &mut self.coefficients
    }

    /// Coefficient vector of one channel pair.
    pub fn pair(&self, out: usize, inp: usize) -> &[f64] {
        let k = self.basis_len();
        let start = (out * self.in_channels + inp) * k;
        &self.coefficients[start..start + k]
    }

    pub fn pair_mut(&mut self, out: usize, inp: usize) -> &mut [f64] {
        let k = self.basis_len();
        let start = (out * self.in_channels + inp) * k;
        &mut self.coefficients[start..start + k]
    }

    /// Contracts the coefficients with a basis vector: the `out × in` filter
    /// matrix, row-major.
    pub fn matrix_from_basis(&self, basis: &[f64]) -> Vec<f64> {
        let k = self.basis_len();
        self.coefficients
            .chunks_exact(k)
            .map(|c| c.iter().zip(basis).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// `F(θ, φ)` for every channel pair, as a row-major `out × in` matrix.
pub fn filter_eval(bank: &FilterBank, theta: f64, phi: f64) -> Vec<f64> {
    bank.matrix_from_basis(&filter_basis(bank.degree, theta, phi))
}
