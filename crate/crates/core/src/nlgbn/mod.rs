//! Nonlinear Gaussian belief network: sigmoid units whose preactivations are
//! Gaussian around a weighted sum of their parents' outputs.

mod data;
mod fantasy;
mod model;
mod state;
mod unit;

pub use data::{Dataset, Rescale, RESCALE_MARGIN};
pub use fantasy::fantasy;
pub use model::{initial_dag, NlgbnConfig, NlgbnModel, NlgbnStats, ParamUpdate, StructureMode};
pub use state::{log_joint, log_likelihood_and_params, NlgbnState, PRECISION_RATE, PRECISION_SHAPE};
pub use unit::{log_density_preactivation, log_density_unit, logit, sigmoid, softplus};
