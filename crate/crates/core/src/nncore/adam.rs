use super::dense::{Mlp, MlpGrads};
use super::Real;
use crate::error::{invalid, Error, Result};

/// Adam moments for a group of networks updated together.
#[derive(Debug, Clone)]
pub struct AdamState<F> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<MlpGrads<F>>,
    v: Vec<MlpGrads<F>>,
}

impl<F: Real> AdamState<F> {
    pub fn new(nets: &[&Mlp<F>]) -> Self {
        let zeros: Vec<MlpGrads<F>> = nets.iter().map(|n| MlpGrads::zeros_like(n)).collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update. Non-finite gradients are rejected
    /// before any parameter is touched.
    pub fn step(&mut self, nets: &mut [&mut Mlp<F>], grads: &[MlpGrads<F>], lr: f64) -> Result<()> {
        if nets.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(invalid("Adam state, networks and gradients disagree in count"));
        }
        for (n, g) in grads.iter().enumerate() {
            if !g.all_finite() {
                return Err(Error::NonFinite(format!("gradient of network {n}")));
            }
            if g.layers.len() != self.m[n].layers.len()
                || g.layers.iter().zip(&self.m[n].layers).any(|(a, b)| a.weight.dim() != b.weight.dim())
            {
                return Err(invalid(format!("gradient shape mismatch for network {n}")));
            }
        }
        self.step += 1;
        let (b1, b2) = (F::of(self.beta1), F::of(self.beta2));
        let c1 = F::of(1.0 - self.beta1.powi(self.step as i32));
        let c2 = F::of(1.0 - self.beta2.powi(self.step as i32));
        let lr = F::of(lr);
        let eps = F::of(self.eps);
        let one = F::one();
        let update = |p: &mut F, g: F, m: &mut F, v: &mut F| {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
        };
        for (n, net) in nets.iter_mut().enumerate() {
            let layers = net.layers_mut();
            for (k, layer) in layers.iter_mut().enumerate() {
                let g = &grads[n].layers[k];
                let m = &mut self.m[n].layers[k];
                let v = &mut self.v[n].layers[k];
                ndarray::Zip::from(&mut layer.weight)
                    .and(&g.weight)
                    .and(&mut m.weight)
                    .and(&mut v.weight)
                    .for_each(|p, &g, m, v| update(p, g, m, v));
                ndarray::Zip::from(&mut layer.bias)
                    .and(&g.bias)
                    .and(&mut m.bias)
                    .and(&mut v.bias)
                    .for_each(|p, &g, m, v| update(p, g, m, v));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::{Activation, Dense};
    use ndarray::array;

    fn net() -> Mlp<f64> {
        Mlp::new(vec![Dense::new(array![[0.5, -0.25]], array![0.1], Activation::Linear).unwrap()]).unwrap()
    }

    fn grads(w: [f64; 2], b: f64) -> MlpGrads<f64> {
        MlpGrads {
            layers: vec![crate::nncore::LayerGrad {
                weight: array![[w[0], w[1]]],
                bias: array![b],
            }],
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut n = net();
        let before = n.clone();
        let mut st = AdamState::new(&[&n]);
        for _ in 0..5 {
            st.step(&mut [&mut n], &[grads([0.0, 0.0], 0.0)], 0.01).unwrap();
        }
        assert_eq!(n, before);
        assert_eq!(st.step_count(), 5);
    }

    #[test]
    fn constant_gradient_step_tends_to_lr_sign() {
        let mut n = net();
        let mut st = AdamState::new(&[&n]);
        let lr = 1e-3;
        let g = grads([3.0, -0.02], 1e-3);
        let mut prev = n.clone();
        for _ in 0..2000 {
            prev = n.clone();
            st.step(&mut [&mut n], &[g.clone()], lr).unwrap();
        }
        let dw0 = n.param(0) - prev.param(0);
        let dw1 = n.param(1) - prev.param(1);
        let db = n.param(2) - prev.param(2);
        // closed form at step t: lr * (1-b1^t)^-1 m / (sqrt(v/(1-b2^t)) + eps) -> lr * g / (|g| + eps)
        assert!((dw0 + lr).abs() < 1e-6 * lr * 1e3, "{dw0}");
        assert!((dw1 - lr).abs() < 1e-6 * lr * 1e3, "{dw1}");
        assert!((db + lr * 1e-3 / (1e-3 + 1e-8)).abs() < 1e-6, "{db}");
    }

    #[test]
    fn non_finite_gradient_rejected_without_update() {
        let mut n = net();
        let before = n.clone();
        let mut st = AdamState::new(&[&n]);
        let err = st.step(&mut [&mut n], &[grads([f64::NAN, 0.0], 0.0)], 0.01);
        assert!(matches!(err, Err(Error::NonFinite(_))));
        assert_eq!(n, before);
        assert_eq!(st.step_count(), 0);
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut n = net();
            let mut st = AdamState::new(&[&n]);
            for i in 0..10 {
                st.step(&mut [&mut n], &[grads([i as f64, -0.5], 0.25)], 0.01).unwrap();
            }
            n
        };
        assert_eq!(run(), run());
    }
}
