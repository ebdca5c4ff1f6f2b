//! Numeric substrate: dense matrices, reverse-mode differentiation, Adam,
//! PCA and least squares, and the seeded random stream.

mod adam;
mod autodiff;
mod linalg;
mod matrix;
mod rng;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use autodiff::{GradientRecord, Gradients, Var, LEAKY_SLOPE};
pub use linalg::{
    least_squares, pca_coords, pca_fit, PcaFit, Regularization, CONDITION_LIMIT, TIKHONOV_LAMBDA,
};
pub use matrix::{matmul, Matrix};
pub use rng::SeededRng;
