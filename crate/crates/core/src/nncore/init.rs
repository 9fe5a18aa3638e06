use ndarray::{Array1, Array2};
use rand::Rng;

use super::dense::{Dense, LayerSpec};
use super::Real;

/// Glorot-uniform weights on `+-sqrt(6 / (in + out))`, zero bias.
pub fn glorot_init<F: Real, R: Rng + ?Sized>(spec: LayerSpec, rng: &mut R) -> Dense<F> {
    let limit = (6.0 / (spec.in_dim + spec.out_dim) as f64).sqrt();
    let weight = Array2::from_shape_simple_fn((spec.out_dim, spec.in_dim), || {
        F::of(rng.random_range(-limit..=limit))
    });
    Dense {
        weight,
        bias: Array1::zeros(spec.out_dim),
        activation: spec.activation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::Activation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn one_by_one_bound_and_zero_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let d: Dense<f64> = glorot_init(LayerSpec::new(1, 1, Activation::Tanh), &mut rng);
            assert!(d.weight[(0, 0)].abs() <= 3f64.sqrt());
            assert_eq!(d.bias[0], 0.0);
        }
    }

    #[test]
    fn sample_variance_matches_uniform_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let spec = LayerSpec::new(300, 340, Activation::LeakyRelu);
        let d: Dense<f64> = glorot_init(spec, &mut rng);
        let n = d.weight.len() as f64;
        assert!(n >= 1e5);
        let mean = d.weight.sum() / n;
        let var = d.weight.mapv(|w| (w - mean).powi(2)).sum() / n;
        // Var U(-a, a) = a^2 / 3 = 2 / (in + out)
        let want = 2.0 / 640.0;
        assert!((var / want - 1.0).abs() < 0.05, "{var} vs {want}");
        assert!(d.bias.iter().all(|&b| b == 0.0));
    }
}
