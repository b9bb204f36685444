//! Probability model of the parameter vector `ξ = (ξ_out, ξ_in)` and the
//! Karhunen-Loève representation of the random inflow on the OUT boundary.

mod kl;

pub use kl::{exponential_kernel, kl_eigenpairs, kl_on_polyline, KlField, KL_CORRELATION_LENGTH, KL_MEAN};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::beta::{beta_reg, ln_beta};

use crate::error::{Error, Result};

/// Half-width `√3` of the uniform KL coordinates (unit variance).
pub const UNIFORM_HALF_WIDTH: f64 = 1.732_050_807_568_877_2;
pub const BETA_SUPPORT: (f64, f64) = (0.1, 10.0);
pub const BETA_SHAPE: (f64, f64) = (50.0, 50.0);
/// Number of KL coordinates in the benchmark.
pub const DEFAULT_KL_TERMS: usize = 10;

/// One realization of the random input.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSample {
    pub xi_out: Vec<f64>,
    pub xi_in: f64,
}

impl ParameterSample {
    pub fn new(xi_out: Vec<f64>, xi_in: f64) -> Self {
        Self { xi_out, xi_in }
    }

    /// `ξ_ref = (0, …, 0, 0.1)`, which defines the reference inner product.
    pub fn reference(q: usize) -> Self {
        Self::new(vec![0.0; q], BETA_SUPPORT.0)
    }

    /// Total dimension `Q + 1`.
    pub fn dim(&self) -> usize {
        self.xi_out.len() + 1
    }

    pub fn in_gamma(&self) -> bool {
        DensityModel::default().contains(self)
    }

    /// Flat `(ξ_out…, ξ_in)` layout used by files and the CLI.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.xi_out.clone();
        v.push(self.xi_in);
        v
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        let (&xi_in, xi_out) = v
            .split_last()
            .ok_or_else(|| Error::InvalidInput("empty parameter vector".into()))?;
        Ok(Self::new(xi_out.to_vec(), xi_in))
    }
}

/// Marginal distributions: i.i.d. uniform KL coordinates and an independent
/// scaled beta cooling coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityModel {
    pub uniform_half_width: f64,
    pub beta_support: (f64, f64),
    pub beta_shape: (f64, f64),
}

impl Default for DensityModel {
    fn default() -> Self {
        Self {
            uniform_half_width: UNIFORM_HALF_WIDTH,
            beta_support: BETA_SUPPORT,
            beta_shape: BETA_SHAPE,
        }
    }
}

impl DensityModel {
    pub fn contains(&self, xi: &ParameterSample) -> bool {
        let w = self.uniform_half_width;
        let (lo, hi) = self.beta_support;
        xi.xi_out.iter().all(|x| (-w..=w).contains(x)) && (lo..=hi).contains(&xi.xi_in)
    }

    pub fn uniform_pdf(&self, x: f64) -> f64 {
        let w = self.uniform_half_width;
        if (-w..=w).contains(&x) {
            0.5 / w
        } else {
            0.0
        }
    }

    pub fn beta_pdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.beta_support;
        let (a, b) = self.beta_shape;
        if !(lo..=hi).contains(&x) {
            return 0.0;
        }
        let t = (x - lo) / (hi - lo);
        if t <= 0.0 || t >= 1.0 {
            // Endpoint values for shape parameters above one.
            return if (t <= 0.0 && a < 1.0) || (t >= 1.0 && b < 1.0) {
                f64::INFINITY
            } else if (t <= 0.0 && a == 1.0) || (t >= 1.0 && b == 1.0) {
                (-ln_beta(a, b)).exp() / (hi - lo)
            } else {
                0.0
            };
        }
        ((a - 1.0) * t.ln() + (b - 1.0) * (1.0 - t).ln() - ln_beta(a, b)).exp() / (hi - lo)
    }

    pub fn beta_cdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.beta_support;
        let (a, b) = self.beta_shape;
        let t = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
        beta_reg(a, b, t)
    }

    /// Inverse CDF of the scaled beta by bisection on the regularized
    /// incomplete beta function, to `1e-12` in the unit variable.
    pub fn beta_quantile(&self, p: f64) -> f64 {
        let (lo, hi) = self.beta_support;
        let (a, b) = self.beta_shape;
        let (mut left, mut right) = (0.0_f64, 1.0_f64);
        while right - left > 1e-12 {
            let mid = 0.5 * (left + right);
            if beta_reg(a, b, mid) < p {
                left = mid;
            } else {
                right = mid;
            }
        }
        lo + (hi - lo) * 0.5 * (left + right)
    }

    pub fn joint_pdf(&self, xi: &ParameterSample) -> f64 {
        xi.xi_out.iter().map(|&x| self.uniform_pdf(x)).product::<f64>() * self.beta_pdf(xi.xi_in)
    }

    /// Draws from the joint distribution.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, q: usize) -> ParameterSample {
        let w = self.uniform_half_width;
        let xi_out = (0..q).map(|_| rng.random_range(-w..=w)).collect();
        let xi_in = self.beta_quantile(rng.random::<f64>());
        ParameterSample::new(xi_out, xi_in)
    }

    /// Draws every coordinate uniformly on its interval of `Γ`.
    pub fn sample_uniform_on_gamma<R: Rng + ?Sized>(&self, rng: &mut R, q: usize) -> ParameterSample {
        let w = self.uniform_half_width;
        let (lo, hi) = self.beta_support;
        let xi_out = (0..q).map(|_| rng.random_range(-w..=w)).collect();
        ParameterSample::new(xi_out, rng.random_range(lo..=hi))
    }
}

pub fn marginal_pdf_uniform(x: f64) -> f64 {
    DensityModel::default().uniform_pdf(x)
}

pub fn marginal_pdf_beta(x: f64) -> f64 {
    DensityModel::default().beta_pdf(x)
}

pub fn joint_pdf(xi: &ParameterSample) -> f64 {
    DensityModel::default().joint_pdf(xi)
}

pub fn sample_parameter<R: Rng + ?Sized>(rng: &mut R, q: usize) -> ParameterSample {
    DensityModel::default().sample(rng, q)
}

pub fn sample_uniform_on_gamma<R: Rng + ?Sized>(rng: &mut R, q: usize) -> ParameterSample {
    DensityModel::default().sample_uniform_on_gamma(rng, q)
}

/// Deterministic generator for `(seed, stream)`; distinct streams are
/// independent, which lets parallel workers draw without sharing state.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
