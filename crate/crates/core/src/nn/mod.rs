//! Small dense-network stack with hand-written backward passes.
//!
//! Three fixed architectures use this (failure projector, critic, actor), so
//! each layer carries its own analytic gradient instead of a general tape.
//! Networks are generic over the float type: training runs in `f32`, the
//! finite-difference checks run the same code in `f64`.

mod adamw;
mod checkpoint;
mod cosine;
pub mod gradcheck;
mod mlp;

pub use adamw::{AdamWConfig, OptimState};
pub use checkpoint::{checksum_hex, read_asnn, write_asnn};
pub use cosine::{cosine_rows, cosine_rows_grad, cosine_similarity, cosine_similarity_grad, COSINE_EPS};
pub use mlp::{
    Activation, Dense, ForwardCache, GradientBundle, LayerGrad, LayerNorm, LayerSpec, MlpNet,
    LAYER_NORM_EPS,
};

use std::fmt::{Debug, Display};
use std::ops::{AddAssign, MulAssign, SubAssign};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::Float;

/// Float types the network stack runs in.
pub trait Scalar:
    Float
    + LinalgScalar
    + ScalarOperand
    + AddAssign
    + SubAssign
    + MulAssign
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    fn of(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    fn of(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn of(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn input_only_backward_matches_full_backward() {
        let specs = [
            LayerSpec::new(12, true, Activation::Relu),
            LayerSpec::new(3, false, Activation::Tanh),
        ];
        let mut rng = StdRng::seed_from_u64(21);
        let net: MlpNet<f64> = MlpNet::new(5, &specs, &mut rng).unwrap();
        let x = Array::from_shape_fn((4, 5), |_| rng.gen_range(-1.5..1.5));
        let probe = Array::from_shape_fn((4, 3), |_| rng.gen_range(-1.0..1.0));
        let (_, cache) = net.forward(x.view()).unwrap();
        let (_, dx) = net.backward(&cache, probe.view()).unwrap();
        assert_eq!(dx, net.backward_input(&cache, probe.view()).unwrap());
    }
}
