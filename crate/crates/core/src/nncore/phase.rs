use ndarray::{Array2, ArrayView2, Zip};
use num_complex::Complex64;

use super::Real;

/// `exp(j theta_k)` for each phase.
pub fn phase_to_unit(theta: &[f64]) -> Vec<Complex64> {
    theta.iter().map(|&t| Complex64::new(t.cos(), t.sin())).collect()
}

/// Batched phase layer: returns `(cos theta, sin theta)`, the real and imaginary parts.
pub fn phase_forward<F: Real>(theta: ArrayView2<F>) -> (Array2<F>, Array2<F>) {
    (theta.mapv(F::cos), theta.mapv(F::sin))
}

/// Maps dL/dRe(v) and dL/dIm(v) to dL/dtheta = -sin(theta) dRe + cos(theta) dIm.
pub fn phase_backward<F: Real>(theta: ArrayView2<F>, grad_re: ArrayView2<F>, grad_im: ArrayView2<F>) -> Array2<F> {
    let mut out = Array2::zeros(theta.raw_dim());
    Zip::from(&mut out)
        .and(theta)
        .and(grad_re)
        .and(grad_im)
        .for_each(|o, &t, &gr, &gi| *o = gi * t.cos() - gr * t.sin());
    out
}
