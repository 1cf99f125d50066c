//! Function approximators: MSE regressors, mixture density networks and a
//! variational autoencoder, each trained by minibatch gradient descent.

pub mod checkpoint;
mod config;
mod gradcheck;
mod mdn;
mod mlp;
mod normalize;
mod optim;
mod regressor;
mod vae;

pub use config::ApproximatorConfig;
pub use gradcheck::{check_gradients, Differentiable};
pub use mdn::{train_density_model, MixtureDensity, MixtureDensityHead};
pub use mlp::{Activation, ForwardCache, Mlp, MlpGrads};
pub use normalize::Normalizer;
pub use optim::{Optimizer, OptimizerKind};
pub use regressor::{train_regressor, Regressor};
pub use vae::{train_encoder, EncoderDecoder};
