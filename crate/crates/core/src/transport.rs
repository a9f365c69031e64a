//! Ground metrics on states and the exact 1-Wasserstein distance.
//!
//! Distances are always computed from the transportation LP. For the
//! absolute-difference metric the closed form
//! `W₁ = Σ_i |F̃(x_i) − F(x_i)| (x_{i+1} − x_i)` is available as well and the
//! two are checked against each other in debug builds.

use serde::Serialize;
use thiserror::Error;

use crate::lp::{LinearProgram, LpError, LpStatus, RowSense, Sense};
use crate::mdp::{StateId, ROW_SUM_TOL};

/// Tolerance on coupling marginals and ball membership.
pub const TRANSPORT_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("metric matrix is not symmetric at ({0}, {1})")]
    Asymmetric(usize, usize),
    #[error("metric matrix has nonzero diagonal at {0}")]
    NonzeroDiagonal(usize),
    #[error("metric matrix has a non-positive or non-finite off-diagonal entry at ({0}, {1})")]
    NonPositive(usize, usize),
    #[error("triangle inequality fails for ({0}, {1}, {2})")]
    Triangle(usize, usize, usize),
    #[error("state labels must be strictly increasing")]
    UnsortedLabels,
    #[error("ambiguity radius {0} is negative or not finite")]
    InvalidDelta(f64),
    #[error("vector is not a probability distribution (sum {sum})")]
    NotADistribution { sum: f64 },
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("transport LP ended with status {0:?}")]
    UnexpectedStatus(LpStatus),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricKind {
    /// `d(y, z) = |coord(y) − coord(z)|` on increasing coordinates.
    AbsDiff { coords: Vec<f64> },
    /// Explicit distance matrix.
    Matrix,
}

/// Distance between states, stored densely.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundMetric {
    kind: MetricKind,
    n: usize,
    d: Vec<f64>,
}

impl GroundMetric {
    /// Absolute label difference for states listed in ascending label order.
    pub fn abs_diff(labels: &[StateId]) -> Result<Self, MetricError> {
        if labels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MetricError::UnsortedLabels);
        }
        let coords: Vec<f64> = labels.iter().map(|s| s.0 as f64).collect();
        Ok(Self::from_coords(coords))
    }

    pub(crate) fn from_coords(coords: Vec<f64>) -> Self {
        let n = coords.len();
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                d[i * n + j] = (coords[i] - coords[j]).abs();
            }
        }
        Self {
            kind: MetricKind::AbsDiff { coords },
            n,
            d,
        }
    }

    /// Explicit row-major `n × n` matrix. Checks symmetry, zero diagonal,
    /// positive off-diagonal entries and the triangle inequality.
    pub fn matrix(n: usize, d: Vec<f64>) -> Result<Self, MetricError> {
        if d.len() != n * n {
            return Err(MetricError::DimensionMismatch {
                expected: n * n,
                got: d.len(),
            });
        }
        for i in 0..n {
            if d[i * n + i] != 0.0 {
                return Err(MetricError::NonzeroDiagonal(i));
            }
            for j in 0..n {
                if i == j {
                    continue;
                }
                let v = d[i * n + j];
                if !(v.is_finite() && v > 0.0) {
                    return Err(MetricError::NonPositive(i, j));
                }
                if v != d[j * n + i] {
                    return Err(MetricError::Asymmetric(i, j));
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let direct = d[i * n + k];
                    let via = d[i * n + j] + d[j * n + k];
                    if direct > via + 1e-12 * via.max(1.0) {
                        return Err(MetricError::Triangle(i, j, k));
                    }
                }
            }
        }
        Ok(Self {
            kind: MetricKind::Matrix,
            n,
            d,
        })
    }

    pub fn kind(&self) -> &MetricKind {
        &self.kind
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    /// Row-major distance matrix.
    pub fn as_matrix(&self) -> &[f64] {
        &self.d
    }
}

/// Radius and metric of the Wasserstein ball around each nominal row. The
/// same radius applies to every `(x, a)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguitySpec {
    delta: f64,
    metric: GroundMetric,
}

impl AmbiguitySpec {
    pub fn new(delta: f64, metric: GroundMetric) -> Result<Self, MetricError> {
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(MetricError::InvalidDelta(delta));
        }
        Ok(Self { delta, metric })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn metric(&self) -> &GroundMetric {
        &self.metric
    }

    pub fn with_delta(&self, delta: f64) -> Result<Self, MetricError> {
        Self::new(delta, self.metric.clone())
    }
}

/// Transport plan `Γ(y, z)`: row sums give the first distribution, column
/// sums the second.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coupling {
    n: usize,
    plan: Vec<f64>,
}

impl Coupling {
    pub fn new(n: usize, plan: Vec<f64>) -> Self {
        assert_eq!(plan.len(), n * n);
        Self { n, plan }
    }

    pub fn get(&self, y: usize, z: usize) -> f64 {
        self.plan[y * self.n + z]
    }

    pub fn row_marginal(&self) -> Vec<f64> {
        self.plan.chunks(self.n).map(|r| r.iter().sum()).collect()
    }

    pub fn col_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for row in self.plan.chunks(self.n) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out
    }

    pub fn cost(&self, metric: &GroundMetric) -> f64 {
        self.plan
            .iter()
            .zip(metric.as_matrix())
            .map(|(g, d)| g * d)
            .sum()
    }
}

pub(crate) fn check_distribution(p: &[f64], n: usize) -> Result<(), MetricError> {
    if p.len() != n {
        return Err(MetricError::DimensionMismatch {
            expected: n,
            got: p.len(),
        });
    }
    let sum: f64 = p.iter().sum();
    if p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(MetricError::NotADistribution { sum });
    }
    Ok(())
}

/// Exact `W₁(p_tilde, p)` and an optimal coupling from the transportation LP.
pub fn wasserstein_lp(
    p_tilde: &[f64],
    p: &[f64],
    metric: &GroundMetric,
) -> Result<(f64, Coupling), MetricError> {
    let n = metric.len();
    check_distribution(p_tilde, n)?;
    check_distribution(p, n)?;
    let mut lp = LinearProgram::new(Sense::Minimize, metric.as_matrix().to_vec());
    for y in 0..n {
        let mut row = vec![0.0; n * n];
        row[y * n..(y + 1) * n].fill(1.0);
        lp.add_constraint(row, RowSense::Eq, p_tilde[y]);
    }
    for z in 0..n {
        let mut col = vec![0.0; n * n];
        for y in 0..n {
            col[y * n + z] = 1.0;
        }
        lp.add_constraint(col, RowSense::Eq, p[z]);
    }
    let sol = lp.solve()?;
    if sol.status != LpStatus::Optimal {
        return Err(MetricError::UnexpectedStatus(sol.status));
    }
    let plan: Vec<f64> = sol.x.iter().map(|v| v.max(0.0)).collect();
    Ok((sol.objective, Coupling::new(n, plan)))
}

/// Closed-form `W₁` on the real line. `coords` must be increasing.
pub fn wasserstein_cdf(p_tilde: &[f64], p: &[f64], coords: &[f64]) -> f64 {
    let mut f_tilde = 0.0;
    let mut f = 0.0;
    let mut total = 0.0;
    for i in 0..coords.len().saturating_sub(1) {
        f_tilde += p_tilde[i];
        f += p[i];
        total += (f_tilde - f).abs() * (coords[i + 1] - coords[i]);
    }
    total
}

/// Exact Wasserstein distance with an optimal coupling as witness.
pub fn wasserstein_distance(
    p_tilde: &[f64],
    p: &[f64],
    metric: &GroundMetric,
) -> Result<(f64, Coupling), MetricError> {
    let (dist, coupling) = wasserstein_lp(p_tilde, p, metric)?;
    if let MetricKind::AbsDiff { coords } = metric.kind() {
        debug_assert!(
            (dist - wasserstein_cdf(p_tilde, p, coords)).abs() <= 1e-8,
            "transport LP and CDF formula disagree"
        );
    }
    Ok((dist, coupling))
}

/// Whether `p_tilde` lies in the closed ball of radius `δ` around `p`.
pub fn in_ambiguity_ball(
    p_tilde: &[f64],
    p: &[f64],
    spec: &AmbiguitySpec,
) -> Result<bool, MetricError> {
    let (dist, _) = wasserstein_distance(p_tilde, p, spec.metric())?;
    Ok(dist <= spec.delta() + TRANSPORT_TOL)
}
