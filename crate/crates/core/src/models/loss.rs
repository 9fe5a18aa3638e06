//! Batched losses with their gradients. Each returns the batch-mean loss
//! (accumulated in f64) and the gradient of that mean with respect to the
//! network output.

use ndarray::{Array2, ArrayView2};

use crate::error::{check_dim, invalid, Result};
use crate::nncore::{phase_backward, Real};

/// Reading of the single-cell beamforming loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossVariant {
    /// `-|h^H v|^2`.
    #[default]
    Abs2,
    /// `-Re(h^H v)`; experimental.
    NegRe,
}

/// Per row: `s = h^H v` as `(re, im)`, with `h` in real-concat layout.
fn inner_row(h: &[f64], c: &[f64], s: &[f64]) -> (f64, f64) {
    let n = c.len();
    let (p, q) = h.split_at(n);
    let mut re = 0.0;
    let mut im = 0.0;
    for k in 0..n {
        re += p[k] * c[k] + q[k] * s[k];
        im += p[k] * s[k] - q[k] * c[k];
    }
    (re, im)
}

/// Adds `scale * d|s|^2/d(Re v, Im v)` into the gradient rows.
fn add_abs2_grad(h: &[f64], sre: f64, sim: f64, scale: f64, gre: &mut [f64], gim: &mut [f64]) {
    let n = gre.len();
    let (p, q) = h.split_at(n);
    for k in 0..n {
        gre[k] += scale * 2.0 * (sre * p[k] - sim * q[k]);
        gim[k] += scale * 2.0 * (sre * q[k] + sim * p[k]);
    }
}

struct Rows {
    n: usize,
    theta: Vec<f64>,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl Rows {
    fn new(n: usize) -> Self {
        Self {
            n,
            theta: vec![0.0; n],
            cos: vec![0.0; n],
            sin: vec![0.0; n],
        }
    }

    fn load<F: Real>(&mut self, theta: ArrayView2<F>, b: usize) {
        for k in 0..self.n {
            let t = theta[(b, k)].f64();
            self.theta[k] = t;
            self.cos[k] = t.cos();
            self.sin[k] = t.sin();
        }
    }
}

fn row<F: Real>(x: ArrayView2<F>, b: usize) -> Vec<f64> {
    x.row(b).iter().map(|v| v.f64()).collect()
}

fn finish<F: Real>(theta: ArrayView2<F>, gre: Array2<f64>, gim: Array2<f64>) -> Array2<F> {
    let gre = gre.mapv(F::of);
    let gim = gim.mapv(F::of);
    phase_backward(theta, gre.view(), gim.view())
}

/// Single-cell loss over a batch of phase outputs `theta` (rows of length `n_t`)
/// and channels `h` (rows of length `2 n_t`).
pub fn loss_s_batch<F: Real>(h: ArrayView2<F>, theta: ArrayView2<F>, variant: LossVariant) -> Result<(f64, Array2<F>)> {
    let (batch, n) = theta.dim();
    check_dim(2 * n, h.ncols())?;
    check_dim(batch, h.nrows())?;
    if batch == 0 {
        return Err(invalid("empty batch"));
    }
    let inv = 1.0 / batch as f64;
    let mut gre = Array2::<f64>::zeros((batch, n));
    let mut gim = Array2::<f64>::zeros((batch, n));
    let mut rows = Rows::new(n);
    let mut total = 0.0;
    for b in 0..batch {
        rows.load(theta, b);
        let hb = row(h, b);
        let (sre, sim) = inner_row(&hb, &rows.cos, &rows.sin);
        let gr = gre.row_mut(b).into_slice().expect("contiguous");
        match variant {
            LossVariant::Abs2 => {
                total -= sre * sre + sim * sim;
                let gi = gim.row_mut(b).into_slice().expect("contiguous");
                add_abs2_grad(&hb, sre, sim, -inv, gr, gi);
            }
            LossVariant::NegRe => {
                total -= sre;
                let gi = gim.row_mut(b).into_slice().expect("contiguous");
                for k in 0..n {
                    gr[k] = -inv * hb[k];
                    gi[k] = -inv * hb[n + k];
                }
            }
        }
    }
    Ok((total * inv, finish(theta, gre, gim)))
}

/// Multi-cell loss `-A / (alpha B + 1/rho)` with `A = |h^H v|^2 / n_t` and `B = |g^H v|^2 / n_t`.
pub fn loss_m_batch<F: Real>(
    h: ArrayView2<F>,
    g: ArrayView2<F>,
    theta: ArrayView2<F>,
    alpha: f64,
    rho: f64,
) -> Result<(f64, Array2<F>)> {
    let (batch, n) = theta.dim();
    check_dim(2 * n, h.ncols())?;
    check_dim(2 * n, g.ncols())?;
    check_dim(batch, h.nrows())?;
    check_dim(batch, g.nrows())?;
    if batch == 0 {
        return Err(invalid("empty batch"));
    }
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(invalid(format!("rho must be positive and finite, got {rho}")));
    }
    let inv = 1.0 / batch as f64;
    let nf = n as f64;
    let noise = 1.0 / rho;
    let mut gre = Array2::<f64>::zeros((batch, n));
    let mut gim = Array2::<f64>::zeros((batch, n));
    let mut rows = Rows::new(n);
    let mut total = 0.0;
    for b in 0..batch {
        rows.load(theta, b);
        let hb = row(h, b);
        let gb = row(g, b);
        let (hre, him) = inner_row(&hb, &rows.cos, &rows.sin);
        let (gre_s, gim_s) = inner_row(&gb, &rows.cos, &rows.sin);
        let a = (hre * hre + him * him) / nf;
        let bb = (gre_s * gre_s + gim_s * gim_s) / nf;
        let d = alpha * bb + noise;
        total -= a / d;
        let gr = gre.row_mut(b).into_slice().expect("contiguous");
        let gi = gim.row_mut(b).into_slice().expect("contiguous");
        // dL/dA = -1/d, dL/dB = alpha A / d^2, and dA = d|s_h|^2 / n_t
        add_abs2_grad(&hb, hre, him, -inv / (d * nf), gr, gi);
        add_abs2_grad(&gb, gre_s, gim_s, inv * alpha * a / (d * d * nf), gr, gi);
    }
    Ok((total * inv, finish(theta, gre, gim)))
}

/// Mean over rows of `||out - target||^2`.
pub fn mse_batch<F: Real>(target: ArrayView2<F>, out: ArrayView2<F>) -> Result<(f64, Array2<F>)> {
    check_dim(target.ncols(), out.ncols())?;
    check_dim(target.nrows(), out.nrows())?;
    let batch = out.nrows();
    if batch == 0 {
        return Err(invalid("empty batch"));
    }
    let diff = &out - &target;
    let total: f64 = diff.iter().map(|d| d.f64() * d.f64()).sum();
    let grad = diff.mapv(|d| d * F::of(2.0 / batch as f64));
    Ok((total / batch as f64, grad))
}
