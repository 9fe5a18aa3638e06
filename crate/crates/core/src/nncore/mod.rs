//! Minimal trainable neural engine: dense stacks, the straight-through
//! quantizer, the unit-modulus phase layer, Adam, initialization, complexity
//! accounting and checkpoints.
//!
//! Every operation is batched: a batch is an `Array2` with one sample per row.

use std::fmt::Debug;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign};

pub mod adam;
pub mod checkpoint;
pub mod complexity;
pub mod dense;
pub mod init;
pub mod phase;
pub mod quant;

pub use adam::AdamState;
pub use checkpoint::{Checkpoint, ModelTag};
pub use complexity::{complexity_report, layer_complexity, Complexity};
pub use dense::{Activation, Dense, LayerGrad, LayerSpec, Mlp, MlpGrads, Tape, DEFAULT_LEAKY_SLOPE};
pub use init::glorot_init;
pub use phase::{phase_backward, phase_forward, phase_to_unit};
pub use quant::{QuantMode, Quantizer};

/// Scalar type the engine runs on: f32 for training, f64 for gradient oracles.
pub trait Real:
    Float + NumAssign + FromPrimitive + LinalgScalar + ScalarOperand + Debug + Default + Send + Sync + std::iter::Sum + 'static
{
    fn of(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 is representable")
    }

    fn f64(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }
}

impl Real for f32 {}
impl Real for f64 {}
