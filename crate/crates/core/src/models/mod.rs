//! The four networks (CsiFBnet-s, CsiFBnet-m, the MSE feedback autoencoder and
//! the NN beamformer baseline), their architectures and their losses.

use num_complex::Complex64;

use crate::chanmodel::ChannelSample;
use crate::error::{check_dim, invalid, Error, Result};

mod arch;
mod baseline;
mod csifbnet;
pub mod loss;

pub use arch::*;
pub use baseline::{AeForward, BaselineAe, BaselineBf};
pub use csifbnet::{sample_row, sample_rows, CsiFBnetM, CsiFBnetS, Encoded, MForward, SForward};
pub use loss::LossVariant;

/// Tolerance on `| |v_k| - 1 |` for an emitted beam.
pub const UNIT_MODULUS_TOL: f64 = 1e-6;

/// Analog precoder: unit-modulus complex weights, one per antenna.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamVector {
    v: Vec<Complex64>,
}

impl BeamVector {
    pub fn new(v: Vec<Complex64>) -> Result<Self> {
        if v.is_empty() {
            return Err(invalid("beam vector must be non-empty"));
        }
        let beam = Self { v };
        let err = beam.max_modulus_error();
        if !(err <= UNIT_MODULUS_TOL) {
            return Err(invalid(format!("beam violates the constant-modulus constraint by {err}")));
        }
        Ok(beam)
    }

    pub fn from_phases(theta: &[f64]) -> Self {
        Self {
            v: crate::nncore::phase_to_unit(theta),
        }
    }

    pub fn n_t(&self) -> usize {
        self.v.len()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.v
    }

    pub fn phases(&self) -> Vec<f64> {
        self.v.iter().map(|z| z.arg()).collect()
    }

    pub fn max_modulus_error(&self) -> f64 {
        self.v.iter().map(|z| (z.norm() - 1.0).abs()).fold(0.0, f64::max)
    }
}

/// `-|h^H v|^2`. Minimizing it maximizes the single-cell spectral efficiency.
pub fn loss_s(h: &ChannelSample, v: &BeamVector) -> Result<f64> {
    loss_s_variant(h, v, LossVariant::Abs2)
}

pub fn loss_s_variant(h: &ChannelSample, v: &BeamVector, variant: LossVariant) -> Result<f64> {
    check_dim(h.n_t(), v.n_t())?;
    let s = crate::classicbf::inner(h.as_slice(), v.as_slice());
    Ok(match variant {
        LossVariant::Abs2 => -s.norm_sqr(),
        LossVariant::NegRe => -s.re,
    })
}

/// Negated per-user SINR with `w = v / sqrt(n_t)`:
/// `-|h^H w|^2 / (alpha |g^H w|^2 + 1/rho)`.
pub fn loss_m(h: &ChannelSample, g: &ChannelSample, v: &BeamVector, alpha: f64, rho: f64) -> Result<f64> {
    check_dim(h.n_t(), v.n_t())?;
    check_dim(g.n_t(), v.n_t())?;
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(invalid(format!("rho must be positive and finite, got {rho}")));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(invalid(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let n = v.n_t() as f64;
    let a = crate::classicbf::inner(h.as_slice(), v.as_slice()).norm_sqr() / n;
    let b = crate::classicbf::inner(g.as_slice(), v.as_slice()).norm_sqr() / n;
    Ok(-a / (alpha * b + 1.0 / rho))
}

/// Squared Euclidean reconstruction error `||h - h_hat||^2`.
pub fn mse_loss(h: &ChannelSample, h_hat: &ChannelSample) -> Result<f64> {
    check_dim(h.n_t(), h_hat.n_t())?;
    Ok(h.as_slice().iter().zip(h_hat.as_slice()).map(|(a, b)| (a - b).norm_sqr()).sum())
}

/// `10 log10(mean(||h_hat - h||^2 / ||h||^2))` over the pairs. Returns
/// `f64::NEG_INFINITY` for an exact reconstruction.
pub fn nmse_db(pairs: &[(ChannelSample, ChannelSample)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(invalid("NMSE over an empty set"));
    }
    let mut acc = 0.0;
    for (h, h_hat) in pairs {
        let p = h.norm_sqr();
        if p == 0.0 {
            return Err(Error::InvalidInput("NMSE undefined for a zero channel".into()));
        }
        acc += mse_loss(h, h_hat)? / p;
    }
    Ok(10.0 * (acc / pairs.len() as f64).log10())
}
