//! Estimation of nonlinear autoregressive models observed with additive noise.
//!
//! The latent chain `X_i = f_theta(X_{i-1}) + xi_i` is seen only through
//! `Z_i = X_i + eps_i`, where the noise law is known. Least-squares
//! contrasts are made unbiased by replacing functions of `X` with their
//! deconvolution integrals evaluated at `Z`.

// `!(x > tol)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod deconv;
pub mod error;
pub mod estimators;
pub mod monte_carlo;
pub mod noise;
pub mod optim;
pub mod process;
pub mod rng;
pub mod weights;

pub use error::{Error, Result};
pub use noise::{ErrorKind, ErrorModel, InnovationModel};
pub use process::{Family, Preset, RegressionModel, Scenario, TrajectoryPair};
pub use weights::{Product, WeightBase, WeightSpec};
