//! Independent checks for the robust computations: the primal worst-case
//! LP, a Monte Carlo hitting simulator, seeded random instances, the
//! three-way agreement suite and the reference reconciliation search.

mod agreement;
mod primal;
mod random;
mod reconcile;
mod simulate;

use thiserror::Error;

use crate::backup::BackupError;
use crate::iteration::IterationError;
use crate::lp::{LpError, LpStatus};
use crate::mdp::{ModelError, StateId};
use crate::transport::MetricError;

pub use agreement::{three_way_agreement, AgreementConfig, AgreementSummary};
pub use primal::{adversarial_model, primal_inner_sup, AdversarialRow};
pub use random::{
    random_backup_instance, random_distribution, random_instance, BackupInstance,
};
pub use reconcile::{
    reconcile_reference, AdjustableRow, Candidate, ReconcileConfig, ReconcileReport, RowSetting,
};
pub use simulate::{
    monte_carlo_hitting, sample_trajectory, HittingEstimate, SimConfig, Trajectory,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("oracle LP ended with status {0:?}")]
    UnexpectedStatus(LpStatus),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Backup(#[from] BackupError),
    #[error(transparent)]
    Iteration(#[from] IterationError),
    #[error("unknown state {0}")]
    UnknownState(StateId),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no kernel on the search grid reproduces the target values within {tolerance}")]
    NoCandidate { tolerance: f64 },
}
