//! Error representations and a posteriori estimates.

pub mod dual_norms;
pub mod global;
pub mod local;
pub mod report;
pub mod residuals;
pub mod theta;

pub use dual_norms::{dual_norms, DualNorms};
pub use global::{example1_bound, global_estimate, GlobalParams, KernelMode};
pub use local::{local_estimate, LocalParams};
pub use report::{Estimate, EstimateReport, SlabRow};
pub use residuals::{compute_residuals, EdgeResidual, NeumannResidual, Residuals};
pub use theta::{default_z_hk, theta_all, theta_representation, theta_space_time_split, FifthBlock, Representation, ThetaBreakdown};
