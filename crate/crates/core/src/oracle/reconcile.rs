//! Grid search over terminal-adjacent kernel rows for kernels whose nominal
//! safety matches a target row, with a robust sweep for every match.
//!
//! A taboo state is adjustable when each of its action rows puts all of its
//! mass on exactly one goal and one forbidden state. For such a state the
//! nominal safety is `Σ_a π(a|x) P_{x,a}(forbidden)`, independent of the rest
//! of the kernel, so the grid is filtered state by state before the product
//! is checked with a full solve.

use serde::Serialize;

use super::OracleError;
use crate::exec::map_indexed;
use crate::iteration::{largest_certified_delta, sweep_delta, IterationConfig};
use crate::mdp::{standard_safety, ActionId, MdpModel, PolicyTable, StateClass, StateId, TabooMap};
use crate::transport::GroundMetric;

/// Largest per-state grid the search will enumerate.
const MAX_STATE_GRID: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AdjustableRow {
    pub state: StateId,
    pub action: ActionId,
    pub goal: StateId,
    pub forbidden: StateId,
}

/// Forbidden mass assigned to one adjustable row; the goal gets the rest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RowSetting {
    pub state: StateId,
    pub action: ActionId,
    pub forbidden_mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub settings: Vec<RowSetting>,
    pub model: MdpModel,
    /// Nominal safety of the candidate kernel.
    pub row0: TabooMap,
    pub row0_deviation: f64,
    /// `(δ, |J(x) − reference(x)|)` for every reference row.
    pub deviations: Vec<(f64, Vec<f64>)>,
    /// Largest deviation over reference rows with `δ > 0`.
    pub max_deviation: f64,
    pub largest_certified_delta: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconcileConfig {
    pub grid_step: f64,
    pub tolerance: f64,
    pub p: f64,
    pub iteration: IterationConfig,
}

impl Default for ReconcileConfig {
    fn default() -> Self {
        Self {
            grid_step: 0.05,
            tolerance: 5e-4,
            p: 0.5,
            iteration: IterationConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconcileReport {
    pub adjustable: Vec<AdjustableRow>,
    /// Sorted by `max_deviation`, best first.
    pub candidates: Vec<Candidate>,
    /// Number of grid points per row.
    pub grid_points: usize,
}

/// The two-terminal rows of `state`, or `None` if any row is not of that shape.
fn state_rows(model: &MdpModel, pos: usize) -> Option<Vec<AdjustableRow>> {
    let x = model.taboo_indices()[pos];
    (0..model.num_actions())
        .map(|a| {
            let support: Vec<usize> = model
                .row(pos, a)
                .iter()
                .enumerate()
                .filter(|(_, p)| **p > 0.0)
                .map(|(y, _)| y)
                .collect();
            let goal = support.iter().filter(|&&y| model.class_of(y) == StateClass::Goal);
            let bad = support.iter().filter(|&&y| model.class_of(y) == StateClass::Forbidden);
            let (goal, bad): (Vec<_>, Vec<_>) = (goal.collect(), bad.collect());
            (support.len() == 2 && goal.len() == 1 && bad.len() == 1).then(|| AdjustableRow {
                state: model.labels()[x],
                action: model.actions()[a],
                goal: model.labels()[*goal[0]],
                forbidden: model.labels()[*bad[0]],
            })
        })
        .collect()
}

/// Mixed-radix enumeration of `digits` numbers in `0..=k_max`.
fn grid_tuples(digits: usize, k_max: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..digits {
        out = out
            .into_iter()
            .flat_map(|t| {
                (0..=k_max).map(move |k| {
                    let mut t = t.clone();
                    t.push(k);
                    t
                })
            })
            .collect();
    }
    out
}

/// Searches the grid for kernels reproducing `target_row0` (indexed like
/// the taboo states) and sweeps each match over the reference radii.
pub fn reconcile_reference(
    model: &MdpModel,
    policy: &PolicyTable,
    metric: &GroundMetric,
    target_row0: &[f64],
    reference_rows: &[(f64, Vec<f64>)],
    cfg: &ReconcileConfig,
) -> Result<ReconcileReport, OracleError> {
    let nt = model.num_taboo();
    let na = model.num_actions();
    if target_row0.len() != nt || reference_rows.iter().any(|(_, r)| r.len() != nt) {
        return Err(OracleError::InvalidArgument(format!(
            "target rows must have one value per taboo state ({nt})"
        )));
    }
    if !(cfg.grid_step > 0.0 && cfg.grid_step <= 1.0) {
        return Err(OracleError::InvalidArgument(format!(
            "grid step {} must lie in (0, 1]",
            cfg.grid_step
        )));
    }
    let k_max = (1.0 / cfg.grid_step).round() as usize;
    if ((k_max as f64) * cfg.grid_step - 1.0).abs() > 1e-9 {
        return Err(OracleError::InvalidArgument(format!(
            "grid step {} does not divide 1",
            cfg.grid_step
        )));
    }
    if (k_max + 1).checked_pow(na as u32).is_none_or(|g| g > MAX_STATE_GRID) {
        return Err(OracleError::InvalidArgument("grid too fine for this many actions".into()));
    }
    let mass = |k: usize| k as f64 / k_max as f64;

    let mut adjustable = Vec::new();
    // per adjustable state: (taboo position, rows, matching tuples)
    let mut per_state = Vec::new();
    for pos in 0..nt {
        let Some(rows) = state_rows(model, pos) else {
            continue;
        };
        let matches: Vec<Vec<usize>> = grid_tuples(na, k_max)
            .into_iter()
            .filter(|t| {
                let s: f64 = t.iter().enumerate().map(|(a, &k)| policy.prob(pos, a) * mass(k)).sum();
                (s - target_row0[pos]).abs() <= cfg.tolerance
            })
            .collect();
        adjustable.extend_from_slice(&rows);
        per_state.push((pos, rows, matches));
    }

    let mut combos: Vec<Vec<&Vec<usize>>> = vec![Vec::new()];
    for (_, _, matches) in &per_state {
        combos = combos
            .into_iter()
            .flat_map(|c| {
                matches.iter().map(move |m| {
                    let mut c = c.clone();
                    c.push(m);
                    c
                })
            })
            .collect();
    }

    let mut nominal_matches = Vec::new();
    for combo in combos {
        let mut rows = model.kernel_rows().to_vec();
        let mut settings = Vec::new();
        for ((pos, adj, _), tuple) in per_state.iter().zip(combo) {
            for (a, (&k, row)) in tuple.iter().zip(adj).enumerate() {
                let r = &mut rows[pos * na + a];
                r.iter_mut().for_each(|p| *p = 0.0);
                let f = mass(k);
                r[model.state_index(row.forbidden).expect("known state")] = f;
                r[model.state_index(row.goal).expect("known state")] = mass(k_max - k);
                settings.push(RowSetting {
                    state: row.state,
                    action: row.action,
                    forbidden_mass: f,
                });
            }
        }
        let candidate = model.with_kernel(rows)?;
        let Ok(row0) = standard_safety(&candidate, policy) else {
            continue;
        };
        let row0_deviation = row0
            .values()
            .iter()
            .zip(target_row0)
            .map(|(s, t)| (s - t).abs())
            .fold(0.0, f64::max);
        if row0_deviation <= cfg.tolerance {
            nominal_matches.push((settings, candidate, row0, row0_deviation));
        }
    }
    if nominal_matches.is_empty() {
        return Err(OracleError::NoCandidate {
            tolerance: cfg.tolerance,
        });
    }

    let deltas: Vec<f64> = reference_rows.iter().map(|(d, _)| *d).collect();
    let swept = map_indexed(nominal_matches.len(), cfg.iteration.execution, |i| {
        sweep_delta(&nominal_matches[i].1, policy, metric, &deltas, cfg.p, &cfg.iteration)
    });
    let mut candidates = Vec::with_capacity(swept.len());
    for ((settings, model, row0, row0_deviation), reports) in nominal_matches.into_iter().zip(swept) {
        let reports = reports?;
        let deviations: Vec<(f64, Vec<f64>)> = reports
            .iter()
            .zip(reference_rows)
            .map(|(r, (d, reference))| {
                let dev = r.j.values().iter().zip(reference).map(|(j, t)| (j - t).abs()).collect();
                (*d, dev)
            })
            .collect();
        let max_deviation = deviations
            .iter()
            .filter(|(d, _)| *d > 0.0)
            .flat_map(|(_, dev)| dev.iter().copied())
            .fold(0.0, f64::max);
        candidates.push(Candidate {
            settings,
            model,
            row0,
            row0_deviation,
            deviations,
            max_deviation,
            largest_certified_delta: largest_certified_delta(&reports),
        });
    }
    candidates.sort_by(|a, b| a.max_deviation.total_cmp(&b.max_deviation));
    Ok(ReconcileReport {
        adjustable,
        candidates,
        grid_points: k_max + 1,
    })
}
