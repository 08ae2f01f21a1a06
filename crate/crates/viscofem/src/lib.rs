//! Space-time cG(1)cG(1) finite elements for dynamic linear viscoelasticity
//! with a memory kernel, a posteriori error representation and estimation,
//! and goal-oriented adaptivity.
//!
//! The displacement-velocity pair `(u1, u2)` satisfies
//! `u1' = u2` and `u2' + A u1 - ∫_0^t K(t-s) A u1(s) ds = f`, with a traction
//! `g` on the Neumann boundary and homogeneous Dirichlet data elsewhere.

pub mod adaptivity;
pub mod assembly;
pub mod cli;
pub mod dual_solver;
pub mod error;
pub mod estimators;
pub mod kernel;
pub mod linalg;
pub mod mesh_time;
pub mod primal_solver;
pub mod problems;
pub mod projections;

pub use error::{Error, Result};
pub use kernel::{Kernel, KernelSpec, PronyTerm};
pub use mesh_time::{FacetTag, FeSpace, SpatialMesh, TimePartition};
