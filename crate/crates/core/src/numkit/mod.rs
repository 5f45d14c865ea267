//! Dense numeric kernel: matrices, MLP encoders with analytic gradients, an
//! adaptive-moment optimizer and seeded randomness.

mod adam;
pub mod checkpoint;
mod matrix;
mod mlp;
mod rng;

pub use adam::{AdamConfig, AdamState};
pub use matrix::{dot, norm, Matrix, NORM_EPS};
pub use mlp::{
    sigmoid, Activation, ForwardCache, Layer, LayerGrad, Mlp, MlpGrads, EMBED_DIM,
    ENCODER_HIDDEN,
};
pub use rng::SeededRng;
