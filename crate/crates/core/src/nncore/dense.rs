use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::Real;
use crate::error::{check_dim, invalid, Error, Result};

/// Leaky ReLU negative slope used unless overridden.
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    LeakyRelu,
    Tanh,
    Linear,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::LeakyRelu => 0,
            Activation::Tanh => 1,
            Activation::Linear => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::LeakyRelu),
            1 => Some(Activation::Tanh),
            2 => Some(Activation::Linear),
            _ => None,
        }
    }

    fn apply<F: Real>(self, z: F, slope: F) -> F {
        match self {
            Activation::LeakyRelu => {
                if z > F::zero() {
                    z
                } else {
                    z * slope
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Linear => z,
        }
    }

    fn derivative<F: Real>(self, z: F, slope: F) -> F {
        match self {
            Activation::LeakyRelu => {
                if z > F::zero() {
                    F::one()
                } else {
                    slope
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                F::one() - t * t
            }
            Activation::Linear => F::one(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            activation,
        }
    }
}

/// Fully connected layer `act(W x + b)` with `W` stored `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<F> {
    pub weight: Array2<F>,
    pub bias: Array1<F>,
    pub activation: Activation,
}

impl<F: Real> Dense<F> {
    pub fn new(weight: Array2<F>, bias: Array1<F>, activation: Activation) -> Result<Self> {
        check_dim(weight.nrows(), bias.len())?;
        if weight.ncols() == 0 || weight.nrows() == 0 {
            return Err(invalid("layer dimensions must be >= 1"));
        }
        Ok(Self {
            weight,
            bias,
            activation,
        })
    }

    pub fn zeros(spec: LayerSpec) -> Self {
        Self {
            weight: Array2::zeros((spec.out_dim, spec.in_dim)),
            bias: Array1::zeros(spec.out_dim),
            activation: spec.activation,
        }
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::new(self.weight.ncols(), self.weight.nrows(), self.activation)
    }

    pub fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn cast<G: Real>(&self) -> Dense<G> {
        Dense {
            weight: self.weight.mapv(|w| G::of(w.f64())),
            bias: self.bias.mapv(|b| G::of(b.f64())),
            activation: self.activation,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad<F> {
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

/// Parameter gradients laid out like the `Mlp` they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads<F> {
    pub layers: Vec<LayerGrad<F>>,
}

impl<F: Real> MlpGrads<F> {
    pub fn zeros_like(mlp: &Mlp<F>) -> Self {
        Self {
            layers: mlp
                .layers()
                .iter()
                .map(|l| LayerGrad {
                    weight: Array2::zeros(l.weight.raw_dim()),
                    bias: Array1::zeros(l.bias.len()),
                })
                .collect(),
        }
    }

    /// Flat view in parameter order (per layer: row-major weights, then bias).
    pub fn flatten(&self) -> Vec<F> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|g| g.is_finite()))
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }
}

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

fn next_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

/// Ordered stack of dense layers.
///
/// Every mutable access bumps an internal version so that a [`Tape`] recorded
/// against older parameters is detected as stale in [`Mlp::backward`].
#[derive(Debug)]
pub struct Mlp<F> {
    layers: Vec<Dense<F>>,
    leaky_slope: F,
    version: u64,
}

impl<F: Clone> Clone for Mlp<F> {
    fn clone(&self) -> Self {
        Self {
            layers: self.layers.clone(),
            leaky_slope: self.leaky_slope.clone(),
            version: next_version(),
        }
    }
}

impl<F: PartialEq> PartialEq for Mlp<F> {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers && self.leaky_slope == other.leaky_slope
    }
}

/// Cached per-layer inputs and pre-activations of one forward pass.
#[derive(Debug, Clone)]
pub struct Tape<F> {
    inputs: Vec<Array2<F>>,
    pre: Vec<Array2<F>>,
    version: u64,
}

impl<F> Tape<F> {
    pub fn batch_size(&self) -> usize {
        self.inputs.first().map_or(0, |x| x.nrows())
    }
}

impl<F: Real> Mlp<F> {
    pub fn new(layers: Vec<Dense<F>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(invalid("an MLP needs at least one layer"));
        }
        for pair in layers.windows(2) {
            check_dim(pair[0].weight.nrows(), pair[1].weight.ncols())?;
        }
        for l in &layers {
            check_dim(l.weight.nrows(), l.bias.len())?;
            if l.weight.iter().chain(l.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("MLP parameter".into()));
            }
        }
        Ok(Self {
            layers,
            leaky_slope: F::of(DEFAULT_LEAKY_SLOPE),
            version: next_version(),
        })
    }

    pub fn with_leaky_slope(mut self, slope: f64) -> Self {
        self.leaky_slope = F::of(slope);
        self.version = next_version();
        self
    }

    pub fn leaky_slope(&self) -> F {
        self.leaky_slope
    }

    pub fn layers(&self) -> &[Dense<F>] {
        &self.layers
    }

    /// Mutable access; invalidates outstanding tapes.
    pub fn layers_mut(&mut self) -> &mut [Dense<F>] {
        self.version = next_version();
        &mut self.layers
    }

    pub fn into_layers(self) -> Vec<Dense<F>> {
        self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Dense::spec).collect()
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.nrows()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Dense::num_params).sum()
    }

    /// Parameter `i` in flat order (per layer: row-major weights, then bias).
    pub fn param(&self, mut i: usize) -> F {
        for l in &self.layers {
            if i < l.weight.len() {
                return l.weight[(i / l.weight.ncols(), i % l.weight.ncols())];
            }
            i -= l.weight.len();
            if i < l.bias.len() {
                return l.bias[i];
            }
            i -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    pub fn set_param(&mut self, mut i: usize, value: F) {
        self.version = next_version();
        for l in &mut self.layers {
            if i < l.weight.len() {
                let cols = l.weight.ncols();
                l.weight[(i / cols, i % cols)] = value;
                return;
            }
            i -= l.weight.len();
            if i < l.bias.len() {
                l.bias[i] = value;
                return;
            }
            i -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    pub fn cast<G: Real>(&self) -> Mlp<G> {
        Mlp {
            layers: self.layers.iter().map(Dense::cast).collect(),
            leaky_slope: G::of(self.leaky_slope.f64()),
            version: next_version(),
        }
    }

    /// Batched forward pass without recording a tape.
    pub fn predict(&self, x: ArrayView2<F>) -> Result<Array2<F>> {
        check_dim(self.in_dim(), x.ncols())?;
        let mut a = x.to_owned();
        for l in &self.layers {
            let mut z = a.dot(&l.weight.t());
            z += &l.bias;
            let act = l.activation;
            let slope = self.leaky_slope;
            z.mapv_inplace(|v| act.apply(v, slope));
            a = z;
        }
        Ok(a)
    }

    /// Batched forward pass; the tape holds what [`Mlp::backward`] needs.
    pub fn forward(&self, x: ArrayView2<F>) -> Result<(Array2<F>, Tape<F>)> {
        check_dim(self.in_dim(), x.ncols())?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = x.to_owned();
        for l in &self.layers {
            let mut z = a.dot(&l.weight.t());
            z += &l.bias;
            let act = l.activation;
            let slope = self.leaky_slope;
            let out = z.mapv(|v| act.apply(v, slope));
            inputs.push(a);
            pre.push(z);
            a = out;
        }
        Ok((
            a,
            Tape {
                inputs,
                pre,
                version: self.version,
            },
        ))
    }

    /// Reverse pass. `upstream` is dL/d(output) per batch row; parameter
    /// gradients are summed over the batch.
    pub fn backward(&self, tape: &Tape<F>, upstream: ArrayView2<F>) -> Result<(MlpGrads<F>, Array2<F>)> {
        if tape.version != self.version || tape.pre.len() != self.layers.len() {
            return Err(invalid("tape does not belong to these parameters"));
        }
        check_dim(self.out_dim(), upstream.ncols())?;
        check_dim(tape.batch_size(), upstream.nrows())?;
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = upstream.to_owned();
        for (k, l) in self.layers.iter().enumerate().rev() {
            let act = l.activation;
            let slope = self.leaky_slope;
            ndarray::Zip::from(&mut delta)
                .and(&tape.pre[k])
                .for_each(|d, &z| *d = *d * act.derivative(z, slope));
            let gw = delta.t().dot(&tape.inputs[k]);
            let gb = delta.sum_axis(Axis(0));
            let next = delta.dot(&l.weight);
            grads.push(LayerGrad { weight: gw, bias: gb });
            delta = next;
        }
        grads.reverse();
        Ok((MlpGrads { layers: grads }, delta))
    }

    /// Single-vector forward pass.
    pub fn forward_one(&self, x: &[F]) -> Result<(Vec<F>, Tape<F>)> {
        let xb = ArrayView2::from_shape((1, x.len()), x).map_err(|e| invalid(e.to_string()))?;
        let (y, tape) = self.forward(xb)?;
        Ok((y.into_raw_vec_and_offset().0, tape))
    }

    /// Single-vector reverse pass.
    pub fn backward_one(&self, tape: &Tape<F>, upstream: &[F]) -> Result<(MlpGrads<F>, Vec<F>)> {
        let ub = ArrayView2::from_shape((1, upstream.len()), upstream).map_err(|e| invalid(e.to_string()))?;
        let (g, dx) = self.backward(tape, ub)?;
        Ok((g, dx.into_raw_vec_and_offset().0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn single(w: Array2<f64>, b: Array1<f64>, act: Activation) -> Mlp<f64> {
        Mlp::new(vec![Dense::new(w, b, act).unwrap()]).unwrap()
    }

    #[test]
    fn identity_linear_layer() {
        let m = single(Array2::eye(3), Array1::zeros(3), Activation::Linear);
        let (y, _) = m.forward_one(&[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(y, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn zero_tanh_layer() {
        let m = single(Array2::zeros((2, 3)), Array1::zeros(2), Activation::Tanh);
        let (y, _) = m.forward_one(&[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(y, vec![0.0, 0.0]);
    }

    #[test]
    fn leaky_relu_negative_side() {
        let m = single(Array2::eye(1), Array1::zeros(1), Activation::LeakyRelu).with_leaky_slope(0.3);
        let (y, _) = m.forward_one(&[-1.0]).unwrap();
        assert!((y[0] + 0.3).abs() < 1e-15);
    }

    #[test]
    fn sum_loss_bias_grad_is_ones() {
        let m = single(array![[1.0, 2.0], [3.0, 4.0], [0.5, -1.0]], Array1::zeros(3), Activation::Linear);
        let (_, tape) = m.forward_one(&[0.3, -0.7]).unwrap();
        let (g, _) = m.backward_one(&tape, &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(g.layers[0].bias.to_vec(), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let m = Mlp::new(vec![
            Dense::new(array![[0.2, -0.1], [0.4, 0.3]], array![0.1, -0.2], Activation::LeakyRelu).unwrap(),
            Dense::new(array![[1.0, -1.0]], array![0.0], Activation::Tanh).unwrap(),
        ])
        .unwrap();
        let (_, tape) = m.forward_one(&[0.5, 0.25]).unwrap();
        let (g, dx) = m.backward_one(&tape, &[0.0]).unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let m = single(Array2::eye(3), Array1::zeros(3), Activation::Linear);
        assert!(matches!(m.forward_one(&[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
        assert!(Mlp::new(vec![
            Dense::<f64>::zeros(LayerSpec::new(2, 3, Activation::Linear)),
            Dense::zeros(LayerSpec::new(4, 1, Activation::Linear)),
        ])
        .is_err());
    }

    #[test]
    fn stale_tape_is_rejected() {
        let mut m = single(Array2::eye(2), Array1::zeros(2), Activation::Linear);
        let (_, tape) = m.forward_one(&[1.0, 2.0]).unwrap();
        m.set_param(0, 2.0);
        assert!(m.backward_one(&tape, &[1.0, 1.0]).is_err());
        let other = single(Array2::eye(2), Array1::zeros(2), Activation::Linear);
        let (_, tape) = other.forward_one(&[1.0, 2.0]).unwrap();
        assert!(m.backward_one(&tape, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn flat_param_order() {
        let mut m = single(array![[1.0, 2.0], [3.0, 4.0]], array![5.0, 6.0], Activation::Linear);
        let flat: Vec<f64> = (0..m.num_params()).map(|i| m.param(i)).collect();
        assert_eq!(flat, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        m.set_param(5, -1.0);
        assert_eq!(m.layers()[0].bias[1], -1.0);
    }
}
