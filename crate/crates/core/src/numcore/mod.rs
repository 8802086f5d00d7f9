//! Dense numeric kernel: scalar-output MLPs, Adam, and seeded randomness.

mod adam;
mod mlp;
mod rng;

pub use adam::AdamState;
pub use mlp::{
    grad_check, relative_error, Activation, Dense, Mlp, MlpGradients, Workspace,
    DEFAULT_NEGATIVE_SLOPE,
};
pub use rng::{gumbel_from_uniform, gumbel_sample, Rng};
