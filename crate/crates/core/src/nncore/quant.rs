use ndarray::{Array2, ArrayView2};

use super::Real;
use crate::error::{invalid, Result};

/// Uniform `bits`-bit quantizer on (-1, 1): half-open bins of width
/// `2 / 2^bits`, bin-center reconstruction, inputs at or beyond +-1 clamped
/// into the outermost bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Quantizer {
    bits: u32,
}

/// How the quantizer behaves inside a differentiable graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantMode {
    /// Forward quantizes; backward passes the upstream gradient through unchanged.
    Active,
    /// Forward and backward are both the identity (the differentiable surrogate).
    Identity,
}

impl Quantizer {
    pub const MAX_BITS: u32 = 16;

    pub fn new(bits: u32) -> Result<Self> {
        if bits == 0 || bits > Self::MAX_BITS {
            return Err(invalid(format!("quantizer bits must be in 1..={}, got {bits}", Self::MAX_BITS)));
        }
        Ok(Self { bits })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn levels(&self) -> u32 {
        1 << self.bits
    }

    pub fn step(&self) -> f64 {
        2.0 / self.levels() as f64
    }

    pub fn index(&self, x: f64) -> u32 {
        let i = ((x + 1.0) / self.step()).floor();
        i.clamp(0.0, (self.levels() - 1) as f64) as u32
    }

    pub fn value(&self, index: u32) -> f64 {
        -1.0 + (index as f64 + 0.5) * self.step()
    }

    pub fn quantize(&self, x: f64) -> (u32, f64) {
        let i = self.index(x);
        (i, self.value(i))
    }

    /// Quantizes a vector, returning codeword indices and reconstructed values.
    pub fn quantize_vec(&self, x: &[f64]) -> (Vec<u32>, Vec<f64>) {
        x.iter().map(|&v| self.quantize(v)).unzip()
    }

    pub fn indices<F: Real>(&self, z: ArrayView2<F>) -> Array2<u32> {
        z.mapv(|v| self.index(v.f64()))
    }

    pub fn forward<F: Real>(&self, z: ArrayView2<F>, mode: QuantMode) -> Array2<F> {
        match mode {
            QuantMode::Active => z.mapv(|v| F::of(self.value(self.index(v.f64())))),
            QuantMode::Identity => z.to_owned(),
        }
    }

    /// Straight-through backward: the upstream gradient, unchanged, in both modes.
    pub fn backward<F: Real>(&self, upstream: Array2<F>) -> Array2<F> {
        upstream
    }
}
