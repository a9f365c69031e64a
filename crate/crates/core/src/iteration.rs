//! Robust Q-iteration and p-safety verdicts.
//!
//! Starting from `Q = 0`, every taboo state-action pair is repeatedly
//! replaced by its robust backup against the continuation values
//! `v̂(l) = 1_U(l)` on terminals and `J(l) = Σ_a π(a|l) Q(l, a)` on taboo
//! states, until the largest change in a sweep drops below `θ`. The policy
//! average `J(x)` of the fixed point bounds the robust safety function from
//! above, so a state is certified when `J(x) ≤ p`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backup::{backup_value, fill_values};
use crate::exec::{map_indexed, Execution};
use crate::mdp::{ActionId, MdpModel, PolicyTable, StateId, TabooMap};
use crate::transport::{AmbiguitySpec, GroundMetric, MetricError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IterationError {
    #[error("invalid iteration config: {0}")]
    InvalidConfig(String),
    #[error("no convergence at delta {delta} after {sweeps} sweeps (last change {last_delta:e})")]
    NotConverged {
        delta: f64,
        sweeps: usize,
        last_delta: f64,
    },
    #[error("safety level {0} must lie strictly between 0 and 1")]
    InvalidP(f64),
    #[error("radii must be sorted ascending")]
    UnsortedDeltas,
    #[error("metric covers {metric} states, model has {model}")]
    MetricSize { metric: usize, model: usize },
    #[error("policy has {policy} actions, model has {model}")]
    PolicySize { policy: usize, model: usize },
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateScheme {
    /// Every pair is backed up from the previous sweep's table.
    #[default]
    Jacobi,
    /// Pairs are updated in place in state-then-action order.
    GaussSeidel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationConfig {
    pub theta: f64,
    pub max_sweeps: usize,
    pub scheme: UpdateScheme,
    pub execution: Execution,
}

impl Default for IterationConfig {
    fn default() -> Self {
        Self {
            theta: 1e-8,
            max_sweeps: 100_000,
            scheme: UpdateScheme::Jacobi,
            execution: Execution::default(),
        }
    }
}

impl IterationConfig {
    fn check(&self) -> Result<(), IterationError> {
        if !(self.theta.is_finite() && self.theta > 0.0) {
            return Err(IterationError::InvalidConfig(format!(
                "theta must be positive, got {}",
                self.theta
            )));
        }
        if self.max_sweeps == 0 {
            return Err(IterationError::InvalidConfig("max_sweeps must be at least 1".into()));
        }
        Ok(())
    }
}

/// `Q(x, a)` over taboo states and actions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QTable {
    num_actions: usize,
    q: Vec<f64>,
}

impl QTable {
    pub fn zeros(num_taboo: usize, num_actions: usize) -> Self {
        Self {
            num_actions,
            q: vec![0.0; num_taboo * num_actions],
        }
    }

    pub fn from_values(num_actions: usize, q: Vec<f64>) -> Self {
        assert_eq!(q.len() % num_actions, 0);
        Self { num_actions, q }
    }

    /// `Q` at taboo position `pos`, action index `a`.
    pub fn get(&self, pos: usize, a: usize) -> f64 {
        self.q[pos * self.num_actions + a]
    }

    pub fn row(&self, pos: usize) -> &[f64] {
        &self.q[pos * self.num_actions..(pos + 1) * self.num_actions]
    }

    pub fn values(&self) -> &[f64] {
        &self.q
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_taboo(&self) -> usize {
        self.q.len() / self.num_actions
    }

    /// Sup-norm distance to another table of the same shape.
    pub fn max_abs_diff(&self, other: &QTable) -> f64 {
        self.q
            .iter()
            .zip(&other.q)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn policy_average(&self, policy: &PolicyTable) -> Vec<f64> {
        (0..self.num_taboo()).map(|pos| self.average_at(policy, pos)).collect()
    }

    fn average_at(&self, policy: &PolicyTable, pos: usize) -> f64 {
        self.row(pos)
            .iter()
            .zip(policy.row(pos))
            .map(|(q, p)| q * p)
            .sum()
    }
}

/// Converged table plus diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationOutcome {
    pub q: QTable,
    pub sweeps: usize,
    /// Largest change in the final sweep, below `θ`.
    pub last_delta: f64,
    /// `λ*` per `(x, a)` from the final sweep.
    pub lambdas: Vec<f64>,
}

fn check_shapes(
    model: &MdpModel,
    policy: &PolicyTable,
    spec: &AmbiguitySpec,
) -> Result<(), IterationError> {
    if spec.metric().len() != model.num_states() {
        return Err(IterationError::MetricSize {
            metric: spec.metric().len(),
            model: model.num_states(),
        });
    }
    if policy.num_actions() != model.num_actions() {
        return Err(IterationError::PolicySize {
            policy: policy.num_actions(),
            model: model.num_actions(),
        });
    }
    Ok(())
}

/// One Jacobi application of the robust operator: the backed-up table and
/// the `λ*` of every pair.
pub fn bellman_operator(
    model: &MdpModel,
    policy: &PolicyTable,
    spec: &AmbiguitySpec,
    q: &QTable,
    exec: Execution,
) -> (QTable, Vec<f64>) {
    let na = model.num_actions();
    let mut values = Vec::new();
    fill_values(model, &q.policy_average(policy), &mut values);
    let results = map_indexed(model.num_taboo() * na, exec, |idx| {
        backup_value(model.row(idx / na, idx % na), &values, spec)
    });
    let (q_new, lambdas) = results.into_iter().unzip();
    (QTable::from_values(na, q_new), lambdas)
}

/// `‖T(Q) − Q‖_∞`.
pub fn bellman_residual(
    model: &MdpModel,
    policy: &PolicyTable,
    spec: &AmbiguitySpec,
    q: &QTable,
) -> f64 {
    bellman_operator(model, policy, spec, q, Execution::Sequential)
        .0
        .max_abs_diff(q)
}

/// Iterates the robust operator from `Q = 0` to a fixed point.
pub fn robust_q_iteration(
    model: &MdpModel,
    policy: &PolicyTable,
    spec: &AmbiguitySpec,
    cfg: &IterationConfig,
) -> Result<IterationOutcome, IterationError> {
    robust_q_iteration_observed(model, policy, spec, cfg, |_, _| {})
}

/// As [`robust_q_iteration`], calling `observer(sweep, &table)` after every
/// sweep.
pub fn robust_q_iteration_observed(
    model: &MdpModel,
    policy: &PolicyTable,
    spec: &AmbiguitySpec,
    cfg: &IterationConfig,
    mut observer: impl FnMut(usize, &QTable),
) -> Result<IterationOutcome, IterationError> {
    cfg.check()?;
    check_shapes(model, policy, spec)?;
    let na = model.num_actions();
    let mut q = QTable::zeros(model.num_taboo(), na);
    let mut lambdas = vec![0.0; q.values().len()];
    let mut last_delta = f64::INFINITY;
    for sweep in 1..=cfg.max_sweeps {
        last_delta = match cfg.scheme {
            UpdateScheme::Jacobi => {
                let (next, lam) = bellman_operator(model, policy, spec, &q, cfg.execution);
                let change = next.max_abs_diff(&q);
                q = next;
                lambdas = lam;
                change
            }
            UpdateScheme::GaussSeidel => gauss_seidel_sweep(model, policy, spec, &mut q, &mut lambdas),
        };
        observer(sweep, &q);
        if last_delta < cfg.theta {
            return Ok(IterationOutcome {
                q,
                sweeps: sweep,
                last_delta,
                lambdas,
            });
        }
    }
    Err(IterationError::NotConverged {
        delta: spec.delta(),
        sweeps: cfg.max_sweeps,
        last_delta,
    })
}

fn gauss_seidel_sweep(
    model: &MdpModel,
    policy: &PolicyTable,
    spec: &AmbiguitySpec,
    q: &mut QTable,
    lambdas: &mut [f64],
) -> f64 {
    let na = model.num_actions();
    let mut values = Vec::new();
    fill_values(model, &q.policy_average(policy), &mut values);
    let mut change = 0.0f64;
    for (pos, &state) in model.taboo_indices().iter().enumerate() {
        for a in 0..na {
            let (v, lam) = backup_value(model.row(pos, a), &values, spec);
            let idx = pos * na + a;
            change = change.max((v - q.q[idx]).abs());
            q.q[idx] = v;
            lambdas[idx] = lam;
            values[state] = q.average_at(policy, pos).clamp(0.0, 1.0);
        }
    }
    change
}

/// `J(x) = Σ_a π(a|x) Q(x, a)` for every taboo state.
pub fn safety_upper_bound(model: &MdpModel, q: &QTable, policy: &PolicyTable) -> TabooMap {
    TabooMap::new(model.taboo_states(), q.policy_average(policy))
}

/// Per-state and MDP-level verdicts for one radius.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdicts {
    pub state_safe: Vec<bool>,
    pub mdp_safe: bool,
}

/// `J(x) ≤ p` per state and `max_x J(x) ≤ p` overall, compared exactly.
pub fn verify_p_safety(j: &TabooMap, p: f64) -> Result<Verdicts, IterationError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(IterationError::InvalidP(p));
    }
    let state_safe: Vec<bool> = j.values().iter().map(|&v| v <= p).collect();
    let mdp_safe = state_safe.iter().all(|&s| s);
    debug_assert_eq!(mdp_safe, j.max() <= p);
    Ok(Verdicts {
        state_safe,
        mdp_safe,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaDiagnostic {
    pub state: StateId,
    pub action: ActionId,
    pub lambda: f64,
}

/// Everything computed for one radius.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SafetyReport {
    pub delta: f64,
    pub p: f64,
    pub j: TabooMap,
    pub state_safe: Vec<bool>,
    pub mdp_safe: bool,
    pub sweeps: usize,
    pub final_delta: f64,
    pub lambdas: Vec<LambdaDiagnostic>,
    pub q: QTable,
}

/// Runs the iteration at one radius and checks p-safety.
pub fn evaluate_safety(
    model: &MdpModel,
    policy: &PolicyTable,
    spec: &AmbiguitySpec,
    p: f64,
    cfg: &IterationConfig,
) -> Result<SafetyReport, IterationError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(IterationError::InvalidP(p));
    }
    let out = robust_q_iteration(model, policy, spec, cfg)?;
    let j = safety_upper_bound(model, &out.q, policy);
    let verdicts = verify_p_safety(&j, p)?;
    let na = model.num_actions();
    let lambdas = out
        .lambdas
        .iter()
        .enumerate()
        .map(|(idx, &lambda)| LambdaDiagnostic {
            state: model.labels()[model.taboo_indices()[idx / na]],
            action: model.actions()[idx % na],
            lambda,
        })
        .collect();
    Ok(SafetyReport {
        delta: spec.delta(),
        p,
        j,
        state_safe: verdicts.state_safe,
        mdp_safe: verdicts.mdp_safe,
        sweeps: out.sweeps,
        final_delta: out.last_delta,
        lambdas,
        q: out.q,
    })
}

/// One independent report per radius, each iteration started from zero.
pub fn sweep_delta(
    model: &MdpModel,
    policy: &PolicyTable,
    metric: &GroundMetric,
    deltas: &[f64],
    p: f64,
    cfg: &IterationConfig,
) -> Result<Vec<SafetyReport>, IterationError> {
    if deltas.windows(2).any(|w| w[0] > w[1]) {
        return Err(IterationError::UnsortedDeltas);
    }
    let specs = deltas
        .iter()
        .map(|&d| AmbiguitySpec::new(d, metric.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    map_indexed(specs.len(), cfg.execution, |i| {
        evaluate_safety(model, policy, &specs[i], p, cfg)
    })
    .into_iter()
    .collect()
}

/// Largest radius whose report certifies the whole MDP, if any.
pub fn largest_certified_delta(reports: &[SafetyReport]) -> Option<f64> {
    reports
        .iter()
        .filter(|r| r.mdp_safe)
        .map(|r| r.delta)
        .fold(None, |acc, d| Some(acc.map_or(d, |a: f64| a.max(d))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled::{ecc_metric, ecc_model};
    use crate::mdp::{standard_safety, validate_model, RawModel, RawTransition, StateClass};

    fn single(goal: f64, bad: f64) -> MdpModel {
        validate_model(&RawModel {
            states: vec![
                (StateId(0), StateClass::Taboo),
                (StateId(1), StateClass::Goal),
                (StateId(2), StateClass::Forbidden),
            ],
            actions: vec![ActionId(1)],
            transitions: vec![
                RawTransition { from: StateId(0), action: ActionId(1), to: StateId(1), prob: goal },
                RawTransition { from: StateId(0), action: ActionId(1), to: StateId(2), prob: bad },
            ],
        })
        .unwrap()
        .model
    }

    #[test]
    fn zero_radius_matches_linear_solve() {
        let m = ecc_model();
        let pi = PolicyTable::uniform(&m);
        let spec = AmbiguitySpec::new(0.0, ecc_metric()).unwrap();
        let out = robust_q_iteration(&m, &pi, &spec, &IterationConfig::default()).unwrap();
        let j = safety_upper_bound(&m, &out.q, &pi);
        let s = standard_safety(&m, &pi).unwrap();
        for (a, b) in j.values().iter().zip(s.values()) {
            assert!((a - b).abs() < 1e-6);
        }
        assert_eq!(j.get(StateId(5)).unwrap(), 0.5 * j.get(StateId(4)).unwrap());
    }

    #[test]
    fn adjacent_forbidden_shift() {
        // goal at label 1, forbidden at label 2, taboo at 0
        let m = single(0.7, 0.3);
        let pi = PolicyTable::uniform(&m);
        let metric = GroundMetric::abs_diff(m.labels()).unwrap();
        let spec = AmbiguitySpec::new(0.2, metric).unwrap();
        let out = robust_q_iteration(&m, &pi, &spec, &IterationConfig::default()).unwrap();
        assert!((out.q.get(0, 0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn goal_only_rows_stay_zero() {
        let m = single(1.0, 0.0);
        let pi = PolicyTable::uniform(&m);
        let spec = AmbiguitySpec::new(0.0, GroundMetric::abs_diff(m.labels()).unwrap()).unwrap();
        let out = robust_q_iteration(&m, &pi, &spec, &IterationConfig::default()).unwrap();
        assert_eq!(out.q.values(), &[0.0]);
    }

    #[test]
    fn not_converged_is_reported() {
        let m = ecc_model();
        let pi = PolicyTable::uniform(&m);
        let spec = AmbiguitySpec::new(0.2, ecc_metric()).unwrap();
        let cfg = IterationConfig {
            max_sweeps: 2,
            ..Default::default()
        };
        assert!(matches!(
            robust_q_iteration(&m, &pi, &spec, &cfg),
            Err(IterationError::NotConverged { sweeps: 2, .. })
        ));
    }

    #[test]
    fn verdicts() {
        let j = TabooMap::new(vec![StateId(1), StateId(2)], vec![0.49, 0.51]);
        let v = verify_p_safety(&j, 0.5).unwrap();
        assert_eq!(v.state_safe, vec![true, false]);
        assert!(!v.mdp_safe);
        let j = TabooMap::new(vec![StateId(1), StateId(2)], vec![0.5, 0.1]);
        assert!(verify_p_safety(&j, 0.5).unwrap().mdp_safe);
        assert_eq!(verify_p_safety(&j, 1.0).unwrap_err(), IterationError::InvalidP(1.0));
    }

    #[test]
    fn upper_bound_is_policy_average() {
        let m = single(0.5, 0.5);
        let pi = PolicyTable::uniform(&m);
        let q = QTable::from_values(1, vec![0.42]);
        assert_eq!(safety_upper_bound(&m, &q, &pi).values(), &[0.42]);

        let m = ecc_model();
        let mut entries = Vec::new();
        for s in 1..=7 {
            entries.push((StateId(s), ActionId(1), 0.5));
            entries.push((StateId(s), ActionId(2), 0.5));
        }
        let pi = PolicyTable::new(&m, &entries).unwrap();
        let mut qv = vec![0.0; 14];
        qv[0] = 0.2;
        qv[1] = 0.4;
        let j = safety_upper_bound(&m, &QTable::from_values(2, qv), &pi);
        assert!((j.get(StateId(1)).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn sweep_rejects_unsorted_and_repeats_identically() {
        let m = ecc_model();
        let pi = PolicyTable::uniform(&m);
        let cfg = IterationConfig::default();
        assert_eq!(
            sweep_delta(&m, &pi, &ecc_metric(), &[0.2, 0.1], 0.5, &cfg).unwrap_err(),
            IterationError::UnsortedDeltas
        );
        let r = sweep_delta(&m, &pi, &ecc_metric(), &[0.1, 0.1], 0.5, &cfg).unwrap();
        assert_eq!(r[0], r[1]);
    }

    #[test]
    fn bad_config() {
        let m = ecc_model();
        let pi = PolicyTable::uniform(&m);
        let spec = AmbiguitySpec::new(0.0, ecc_metric()).unwrap();
        let cfg = IterationConfig {
            theta: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            robust_q_iteration(&m, &pi, &spec, &cfg),
            Err(IterationError::InvalidConfig(_))
        ));
    }
}
