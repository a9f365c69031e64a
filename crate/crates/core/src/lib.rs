//! Distributionally robust p-safety verification for finite MDPs whose
//! transition rows are only known up to a Wasserstein ball.
//!
//! The entry points are [`iteration::evaluate_safety`] for one radius and
//! [`iteration::sweep_delta`] for a grid of radii. [`oracle`] holds the
//! independent checks used by the test suite and the CLI.

pub mod backup;
pub mod bundled;
pub mod exec;
pub mod io;
pub mod iteration;
mod linalg;
pub mod lp;
pub mod mdp;
pub mod oracle;
pub mod transport;

pub use backup::{robust_backup, robust_backup_epigraph, BackupError, BackupSolution, ValueVector};
pub use exec::Execution;
pub use iteration::{
    evaluate_safety, largest_certified_delta, robust_q_iteration, safety_upper_bound, sweep_delta,
    verify_p_safety, IterationConfig, IterationError, QTable, SafetyReport, UpdateScheme,
};
pub use mdp::{
    standard_safety, validate_model, ActionId, MdpModel, ModelError, PolicyTable, StateClass,
    StateId, TabooMap,
};
pub use transport::{wasserstein_distance, AmbiguitySpec, GroundMetric, MetricError};
