//! One distributionally robust Bellman backup.
//!
//! For a nominal row `P`, continuation values `v̂` and radius `δ`, the
//! worst-case expectation over the Wasserstein ball equals
//!
//! ```text
//! min_{λ ≥ 0} F(λ),   F(λ) = λδ + Σ_y P(y) g_y(λ),   g_y(λ) = max_l (v̂(l) − λ d(l, y))
//! ```
//!
//! Each `g_y` is the upper envelope of lines with slopes `−d(l, y)`, so `F`
//! is convex and piecewise linear. Its minimum over `λ ≥ 0` sits at `0` or
//! at a kink of some `g_y` with `P(y) > 0`; [`robust_backup`] enumerates
//! those kinks and evaluates `F` exactly at each one. Beyond the largest
//! kink `F` has slope `δ ≥ 0`, so nothing past it is needed.
//!
//! [`robust_backup_epigraph`] solves the same problem as an LP in
//! `(λ, h)` with `h(y) ≥ v̂(l) − λ d(l, y)` for all `l, y`.

use serde::Serialize;
use thiserror::Error;

use crate::lp::{LinearProgram, LpError, LpStatus, RowSense, Sense};
use crate::mdp::{MdpModel, StateClass};
use crate::transport::{check_distribution, AmbiguitySpec, MetricError};

/// Two `F` values closer than this are a tie; ties go to the smaller `λ`.
const TIE_TOL: f64 = 1e-13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackupError {
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("value {value} at index {index} lies outside [0, 1]")]
    ValueOutOfRange { index: usize, value: f64 },
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("epigraph LP ended with status {0:?}")]
    UnexpectedStatus(LpStatus),
}

/// Continuation values `v̂(l)` over all states, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ValueVector(Vec<f64>);

impl ValueVector {
    pub fn new(values: Vec<f64>) -> Result<Self, BackupError> {
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(BackupError::ValueOutOfRange { index, value });
        }
        Ok(Self(values))
    }

    /// `1` on forbidden states, `0` on goal states and `taboo_values` (one
    /// per taboo state, clamped to `[0, 1]`) on taboo states.
    pub fn from_continuation(model: &MdpModel, taboo_values: &[f64]) -> Self {
        let mut out = Vec::with_capacity(model.num_states());
        fill_values(model, taboo_values, &mut out);
        Self(out)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub(crate) fn fill_values(model: &MdpModel, taboo_values: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.extend((0..model.num_states()).map(|i| match model.class_of(i) {
        StateClass::Forbidden => 1.0,
        StateClass::Goal => 0.0,
        StateClass::Taboo => {
            let pos = model.taboo_position(i).expect("taboo state has a position");
            taboo_values[pos].clamp(0.0, 1.0)
        }
    }));
}

/// Outcome of one backup.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BackupSolution {
    /// Worst-case expected continuation.
    pub value: f64,
    /// Optimal multiplier of the transport budget.
    pub lambda_star: f64,
    /// For each state `y`, the state `l` where the nominal mass at `y` is
    /// sent at `λ*` (lowest index among maximizers).
    pub argmax: Vec<usize>,
    /// Epigraph values `h(y)`, only from the LP method.
    pub h: Option<Vec<f64>>,
}

fn validate(row: &[f64], values: &ValueVector, spec: &AmbiguitySpec) -> Result<(), BackupError> {
    let n = spec.metric().len();
    check_distribution(row, n)?;
    if values.len() != n {
        return Err(MetricError::DimensionMismatch {
            expected: n,
            got: values.len(),
        }
        .into());
    }
    Ok(())
}

/// Exact backup by breakpoint enumeration.
pub fn robust_backup(
    row: &[f64],
    values: &ValueVector,
    spec: &AmbiguitySpec,
) -> Result<BackupSolution, BackupError> {
    validate(row, values, spec)?;
    let (value, lambda_star) = backup_value(row, values.as_slice(), spec);
    let argmax = (0..row.len())
        .map(|y| best_target(values.as_slice(), spec, y, lambda_star))
        .collect();
    Ok(BackupSolution {
        value,
        lambda_star,
        argmax,
        h: None,
    })
}

/// `(value, λ*)` without input checks; used in the iteration hot loop.
pub(crate) fn backup_value(row: &[f64], values: &[f64], spec: &AmbiguitySpec) -> (f64, f64) {
    let mut candidates = vec![0.0];
    for (y, &p) in row.iter().enumerate() {
        if p > 0.0 {
            envelope_kinks(values, spec, y, &mut candidates);
        }
    }
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    let mut best = (f64::INFINITY, 0.0);
    for &lambda in &candidates {
        let f = objective(row, values, spec, lambda);
        if f < best.0 - TIE_TOL {
            best = (f, lambda);
        }
    }
    (best.0, best.1)
}

/// `F(λ) = λδ + Σ_y P(y) max_l (v̂(l) − λ d(l, y))`.
pub fn objective(row: &[f64], values: &[f64], spec: &AmbiguitySpec, lambda: f64) -> f64 {
    let metric = spec.metric();
    let mut total = lambda * spec.delta();
    for (y, &p) in row.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let g = values
            .iter()
            .enumerate()
            .map(|(l, v)| v - lambda * metric.distance(l, y))
            .fold(f64::NEG_INFINITY, f64::max);
        total += p * g;
    }
    total
}

/// Pushes the positive kinks of `g_y` by walking its envelope from `λ = 0`.
fn envelope_kinks(values: &[f64], spec: &AmbiguitySpec, y: usize, out: &mut Vec<f64>) {
    let metric = spec.metric();
    let d = |l: usize| metric.distance(l, y);
    // line on top just after λ = 0: highest intercept, then flattest slope
    let mut cur = (0..values.len())
        .max_by(|&a, &b| {
            values[a]
                .total_cmp(&values[b])
                .then(d(b).total_cmp(&d(a)))
        })
        .expect("nonempty state space");
    let mut at = 0.0;
    while d(cur) > 0.0 {
        let mut next: Option<(usize, f64)> = None;
        for l in 0..values.len() {
            if d(l) >= d(cur) {
                continue;
            }
            let cross = ((values[cur] - values[l]) / (d(cur) - d(l))).max(at);
            next = match next {
                Some((nl, nc)) if nc < cross || (nc == cross && d(nl) <= d(l)) => Some((nl, nc)),
                _ => Some((l, cross)),
            };
        }
        let Some((l, cross)) = next else { break };
        if cross > 0.0 {
            out.push(cross);
        }
        cur = l;
        at = cross;
    }
}

fn best_target(values: &[f64], spec: &AmbiguitySpec, y: usize, lambda: f64) -> usize {
    let metric = spec.metric();
    let mut best = (f64::NEG_INFINITY, 0);
    for (l, v) in values.iter().enumerate() {
        let g = v - lambda * metric.distance(l, y);
        if g > best.0 + TIE_TOL {
            best = (g, l);
        }
    }
    best.1
}

/// Same backup through the epigraph LP in `(λ, h(y))`.
pub fn robust_backup_epigraph(
    row: &[f64],
    values: &ValueVector,
    spec: &AmbiguitySpec,
) -> Result<BackupSolution, BackupError> {
    validate(row, values, spec)?;
    let n = row.len();
    let metric = spec.metric();
    // variables: λ, h(0), …, h(n−1)
    let mut objective = vec![spec.delta()];
    objective.extend_from_slice(row);
    let mut lp = LinearProgram::new(Sense::Minimize, objective);
    for y in 0..n {
        lp.set_bounds(1 + y, f64::NEG_INFINITY, f64::INFINITY);
    }
    for y in 0..n {
        for l in 0..n {
            let mut coeffs = vec![0.0; n + 1];
            coeffs[0] = metric.distance(l, y);
            coeffs[1 + y] = 1.0;
            lp.add_constraint(coeffs, RowSense::Ge, values.as_slice()[l]);
        }
    }
    let sol = lp.solve()?;
    if sol.status != LpStatus::Optimal {
        return Err(BackupError::UnexpectedStatus(sol.status));
    }
    let lambda_star = sol.x[0].max(0.0);
    let argmax = (0..n)
        .map(|y| best_target(values.as_slice(), spec, y, lambda_star))
        .collect();
    Ok(BackupSolution {
        value: sol.objective,
        lambda_star,
        argmax,
        h: Some(sol.x[1..].to_vec()),
    })
}
