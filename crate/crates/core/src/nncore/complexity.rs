use super::dense::LayerSpec;

/// Weight and FLOP totals of a dense stack (activations and the phase layer are not counted).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Complexity {
    pub params: u64,
    pub flops: u64,
}

impl std::ops::Add for Complexity {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Self {
            params: self.params + rhs.params,
            flops: self.flops + rhs.flops,
        }
    }
}

impl std::iter::Sum for Complexity {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |a, b| a + b)
    }
}

/// One FC layer: `O (I + 1)` weights and `O (2I - 1)` FLOPs.
pub fn layer_complexity(in_dim: usize, out_dim: usize) -> Complexity {
    let (i, o) = (in_dim as u64, out_dim as u64);
    Complexity {
        params: o * (i + 1),
        flops: o * (2 * i).saturating_sub(1),
    }
}

pub fn complexity_report(layers: &[LayerSpec]) -> Complexity {
    layers.iter().map(|l| layer_complexity(l.in_dim, l.out_dim)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::Activation;

    #[test]
    fn four_to_two() {
        assert_eq!(layer_complexity(4, 2), Complexity { params: 10, flops: 14 });
    }

    #[test]
    fn stack_sums_layers() {
        let specs = [
            LayerSpec::new(4, 2, Activation::Tanh),
            LayerSpec::new(2, 3, Activation::Linear),
        ];
        assert_eq!(complexity_report(&specs), Complexity { params: 10 + 9, flops: 14 + 9 });
    }
}
