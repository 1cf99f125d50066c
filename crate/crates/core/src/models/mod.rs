//! Inverse models: exact Bayes inversions for tabular MDPs, and learned
//! inverse dynamics and inverse policies for continuous environments, together
//! with the interaction datasets they are trained on.

mod dataset;
mod inverse;
mod tabular;

pub use dataset::{collect_dataset, collect_with, DatasetSource, EpsilonExpert, InteractionDataset, Transition, EXPERT_RANDOM_PROB};
pub use inverse::{
    apply_residual, backward_step, train_inverse_dynamics, train_inverse_policy, InverseDynamics, InversePolicy, PolicyInput,
    INVERSE_DYNAMICS_NOISE_STD,
};
pub(crate) use inverse::rows_to_array;
pub use tabular::{StatePrior, TabularInverse};
