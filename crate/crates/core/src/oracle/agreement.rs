//! Breakpoint backup vs. epigraph LP vs. primal worst-case LP on random
//! instances.

use serde::Serialize;

use super::primal::primal_inner_sup;
use super::random::random_backup_instance;
use super::OracleError;
use crate::backup::{robust_backup, robust_backup_epigraph};
use crate::exec::{map_indexed, Execution};
use crate::transport::AmbiguitySpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgreementConfig {
    pub instances: usize,
    pub max_states: usize,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for AgreementConfig {
    fn default() -> Self {
        Self {
            instances: 10_000,
            max_states: 6,
            seed: 0,
            execution: Execution::default(),
        }
    }
}

/// Largest pairwise gaps over all instances.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementSummary {
    pub instances: usize,
    pub max_breakpoint_vs_epigraph: f64,
    pub max_breakpoint_vs_primal: f64,
    pub max_epigraph_vs_primal: f64,
    /// Instance seeds whose methods raised an error.
    pub failures: Vec<u64>,
}

impl AgreementSummary {
    pub fn max_gap(&self) -> f64 {
        self.max_breakpoint_vs_epigraph
            .max(self.max_breakpoint_vs_primal)
            .max(self.max_epigraph_vs_primal)
    }
}

fn one(seed: u64, max_states: usize) -> Result<[f64; 3], OracleError> {
    let inst = random_backup_instance(max_states, seed);
    let spec = AmbiguitySpec::new(inst.delta, inst.metric)?;
    let a = robust_backup(&inst.row, &inst.values, &spec)?.value;
    let b = robust_backup_epigraph(&inst.row, &inst.values, &spec)?.value;
    let c = primal_inner_sup(&inst.row, &inst.values, &spec)?.attained_value;
    Ok([(a - b).abs(), (a - c).abs(), (b - c).abs()])
}

/// Instance `i` uses seed `cfg.seed + i`.
pub fn three_way_agreement(cfg: &AgreementConfig) -> AgreementSummary {
    let results = map_indexed(cfg.instances, cfg.execution, |i| {
        let seed = cfg.seed.wrapping_add(i as u64);
        (seed, one(seed, cfg.max_states))
    });
    let mut summary = AgreementSummary {
        instances: cfg.instances,
        max_breakpoint_vs_epigraph: 0.0,
        max_breakpoint_vs_primal: 0.0,
        max_epigraph_vs_primal: 0.0,
        failures: Vec::new(),
    };
    for (seed, r) in results {
        match r {
            Ok([ab, ac, bc]) => {
                summary.max_breakpoint_vs_epigraph = summary.max_breakpoint_vs_epigraph.max(ab);
                summary.max_breakpoint_vs_primal = summary.max_breakpoint_vs_primal.max(ac);
                summary.max_epigraph_vs_primal = summary.max_epigraph_vs_primal.max(bc);
            }
            Err(_) => summary.failures.push(seed),
        }
    }
    summary
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_run_agrees() {
        let s = three_way_agreement(&AgreementConfig {
            instances: 200,
            ..Default::default()
        });
        assert!(s.failures.is_empty());
        assert!(s.max_gap() <= 1e-7, "{s:?}");
    }
}
