//! Mesh-free neural solver for the general Stokes equations.
//!
//! Velocity and pressure are approximated by two small MLPs trained to
//! minimize a Monte-Carlo objective over randomly sampled collocation
//! points: squared momentum residual and squared divergence on interior
//! points, squared Dirichlet mismatch on boundary points. No mesh is
//! ever built; derivatives of the networks with respect to their inputs
//! come from an extended forward pass that carries value, Jacobian and
//! pure second derivatives through every layer.
//!
//! The crate ships manufactured 2D/3D problems with known solutions
//! (for convergence studies) and lid-driven cavity benchmarks, plus the
//! finite-difference oracles used to cross-check every derivative path.
//!
//! With the default `parallel` feature, batch evaluation and gradient
//! accumulation run on the rayon pool; reductions merge fixed-width
//! chunks in index order, so results match the sequential build bitwise.

pub mod autodiff;
pub mod error;
pub mod metrics;
pub mod network;
pub mod objective;
pub mod optimizer;
pub mod parallel;
pub mod problem;
pub mod sampler;
pub mod trainer;
pub mod verifier;

pub use autodiff::{backward_params, forward_extended, Activation, ExtendedBlock, ExtendedEval};
pub use error::{DgmError, Result};
pub use metrics::{err_l1, err_l2, eval_grid, EvalGrid, GridSpec};
pub use network::{predict, Architecture, NetKind, NetworkParams};
pub use objective::{batch_objective, objective_gradient, LossBreakdown, LossWeights, NetworkField};
pub use optimizer::OptimizerKind;
pub use parallel::ExecMode;
pub use problem::{CavitySpec, StokesProblem};
pub use sampler::{Dataset, PointSet, SamplingMode};
pub use trainer::{lr_schedule, train, TerminationReason, TrainConfig, TrainHistory};
