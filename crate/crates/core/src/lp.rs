//! Dense two-phase simplex for small linear programs.
//!
//! Problems are brought to the internal form `min c'x, Ax = b, x ≥ 0,
//! b ≥ 0` by shifting or reflecting bounded variables, splitting free ones
//! and adding slack/surplus and artificial columns. Both phases use Bland's
//! rule. Once an optimal basis is known, basic values and duals are
//! recomputed from the original data with a fresh factorization, so the
//! reported solution does not carry the round-off accumulated by the
//! tableau updates.

use serde::Serialize;
use thiserror::Error;

use crate::linalg::{solve_dense, transpose};

/// Entries with magnitude below this are never pivoted on.
pub const PIVOT_TOL: f64 = 1e-10;
/// Reduced cost below `-RC_TOL` makes a column eligible to enter.
const RC_TOL: f64 = 1e-10;
/// Phase-one objective above this means infeasible.
const FEAS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RowSense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("malformed linear program: {0}")]
    Malformed(String),
    #[error("simplex iteration limit reached after {pivots} pivots")]
    IterationLimit { pivots: usize },
}

#[derive(Debug, Clone, PartialEq)]
struct Row {
    coeffs: Vec<f64>,
    sense: RowSense,
    rhs: f64,
}

/// Dense LP with row senses and per-variable bounds (default `[0, ∞)`).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    sense: Sense,
    objective: Vec<f64>,
    rows: Vec<Row>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    /// Primal values, empty unless optimal.
    pub x: Vec<f64>,
    /// Row duals as sensitivities `∂objective/∂rhs`, empty unless optimal.
    pub duals: Vec<f64>,
    /// `c_j − Σ_i a_ij y_i`, empty unless optimal.
    pub reduced_costs: Vec<f64>,
    pub pivots: usize,
}

/// Optimality residuals of a solution, all expected to be near zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate {
    pub primal_residual: f64,
    pub dual_sign_violation: f64,
    pub complementary_slackness: f64,
    pub duality_gap: f64,
}

impl LinearProgram {
    pub fn new(sense: Sense, objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            sense,
            objective,
            rows: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.rows.len()
    }

    pub fn add_constraint(&mut self, coeffs: Vec<f64>, sense: RowSense, rhs: f64) -> &mut Self {
        self.rows.push(Row { coeffs, sense, rhs });
        self
    }

    /// Sets `lo ≤ x_var ≤ hi`; infinite values drop the bound.
    pub fn set_bounds(&mut self, var: usize, lo: f64, hi: f64) -> &mut Self {
        self.lower[var] = lo;
        self.upper[var] = hi;
        self
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        solve_lp(self)
    }

    fn check(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(LpError::Malformed("non-finite objective coefficient".into()));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.coeffs.len() != n {
                return Err(LpError::Malformed(format!(
                    "row {i} has {} coefficients, expected {n}",
                    row.coeffs.len()
                )));
            }
            if row.coeffs.iter().any(|c| !c.is_finite()) || !row.rhs.is_finite() {
                return Err(LpError::Malformed(format!("row {i} has a non-finite entry")));
            }
        }
        for j in 0..n {
            if self.lower[j].is_nan()
                || self.upper[j].is_nan()
                || self.lower[j] == f64::INFINITY
                || self.upper[j] == f64::NEG_INFINITY
            {
                return Err(LpError::Malformed(format!("variable {j} has invalid bounds")));
            }
        }
        Ok(())
    }

    /// Residuals of `sol` against this program.
    pub fn certify(&self, sol: &LpSolution) -> Certificate {
        let n = self.num_vars();
        let mut primal = 0.0f64;
        let mut cs = 0.0f64;
        let mut sign = 0.0f64;
        let mut gap = 0.0;
        let flip = match self.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        for (row, &y) in self.rows.iter().zip(&sol.duals) {
            let ax: f64 = row.coeffs.iter().zip(&sol.x).map(|(a, x)| a * x).sum();
            let slack = ax - row.rhs;
            let viol = match row.sense {
                RowSense::Le => slack.max(0.0),
                RowSense::Ge => (-slack).max(0.0),
                RowSense::Eq => slack.abs(),
            };
            primal = primal.max(viol);
            // in minimization form, ≤ rows price nonpositive and ≥ rows nonnegative
            let ym = flip * y;
            sign = sign.max(match row.sense {
                RowSense::Le => ym.max(0.0),
                RowSense::Ge => (-ym).max(0.0),
                RowSense::Eq => 0.0,
            });
            cs = cs.max((y * slack).abs());
            gap += y * slack;
        }
        for j in 0..n {
            let x = sol.x[j];
            primal = primal
                .max((self.lower[j] - x).max(0.0))
                .max((x - self.upper[j]).max(0.0));
            let d = sol.reduced_costs[j];
            let dm = flip * d;
            let bound = if dm > RC_TOL {
                self.lower[j]
            } else if dm < -RC_TOL {
                self.upper[j]
            } else {
                x
            };
            if !bound.is_finite() {
                sign = f64::INFINITY;
                continue;
            }
            cs = cs.max((d * (x - bound)).abs());
            gap += d * (x - bound);
        }
        Certificate {
            primal_residual: primal,
            dual_sign_violation: sign,
            complementary_slackness: cs,
            duality_gap: gap.abs(),
        }
    }
}

/// How an original variable is expressed in internal columns.
struct VarMap {
    offset: f64,
    cols: Vec<(usize, f64)>,
}

struct Tableau {
    rows: usize,
    width: usize,
    t: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.width + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.width - 1)
    }

    fn pivot(&mut self, r: usize, c: usize, obj: &mut [f64]) {
        let w = self.width;
        let p = self.t[r * w + c];
        for k in 0..w {
            self.t[r * w + k] /= p;
        }
        self.t[r * w + c] = 1.0;
        let (before, rest) = self.t.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        for row in before.chunks_mut(w).chain(after.chunks_mut(w)) {
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(prow.iter()) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        let f = obj[c];
        if f != 0.0 {
            for (v, pv) in obj.iter_mut().zip(prow.iter()) {
                *v -= f * pv;
            }
            obj[c] = 0.0;
        }
        self.basis[r] = c;
    }

    /// Reduced-cost row for `cost`; the last entry holds minus the objective.
    fn objective_row(&self, cost: &[f64]) -> Vec<f64> {
        let mut obj = cost.to_vec();
        obj.push(0.0);
        for i in 0..self.rows {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                for j in 0..self.width {
                    obj[j] -= cb * self.at(i, j);
                }
            }
        }
        obj
    }

    /// Bland's-rule simplex on the current basis.
    fn run(
        &mut self,
        obj: &mut [f64],
        eligible: usize,
        pivots: &mut usize,
        limit: usize,
    ) -> Result<bool, LpError> {
        loop {
            let Some(c) = (0..eligible).find(|&j| obj[j] < -RC_TOL) else {
                return Ok(true);
            };
            let mut best: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let a = self.at(i, c);
                if a <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.rhs(i).max(0.0) / a;
                best = match best {
                    None => Some((i, ratio)),
                    Some((bi, br)) => {
                        if ratio < br - 1e-12 * br.max(1.0)
                            || (ratio <= br + 1e-12 * br.max(1.0) && self.basis[i] < self.basis[bi])
                        {
                            Some((i, ratio))
                        } else {
                            Some((bi, br))
                        }
                    }
                };
            }
            let Some((r, _)) = best else {
                return Ok(false);
            };
            if *pivots >= limit {
                return Err(LpError::IterationLimit { pivots: *pivots });
            }
            self.pivot(r, c, obj);
            *pivots += 1;
        }
    }
}

/// Solves `lp` to optimality or proves it infeasible or unbounded.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    lp.check()?;
    let n = lp.num_vars();
    let mut maps = Vec::with_capacity(n);
    let mut ncols = 0;
    let mut upper_rows = Vec::new();
    for j in 0..n {
        let (lo, hi) = (lp.lower[j], lp.upper[j]);
        if lo.is_finite() && hi.is_finite() && hi < lo {
            return Ok(infeasible(0));
        }
        let map = if lo.is_finite() {
            if hi.is_finite() {
                upper_rows.push((ncols, hi - lo));
            }
            VarMap { offset: lo, cols: vec![(ncols, 1.0)] }
        } else if hi.is_finite() {
            VarMap { offset: hi, cols: vec![(ncols, -1.0)] }
        } else {
            ncols += 1;
            VarMap { offset: 0.0, cols: vec![(ncols - 1, 1.0), (ncols, -1.0)] }
        };
        ncols += 1;
        maps.push(map);
    }

    let sign = match lp.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let mut cost = vec![0.0; ncols];
    for (j, map) in maps.iter().enumerate() {
        for &(c, k) in &map.cols {
            cost[c] += sign * lp.objective[j] * k;
        }
    }

    // internal rows before slack/artificial columns
    let m = lp.rows.len() + upper_rows.len();
    let mut a = vec![vec![0.0; ncols]; m];
    let mut b = vec![0.0; m];
    let mut senses = Vec::with_capacity(m);
    for (i, row) in lp.rows.iter().enumerate() {
        let mut rhs = row.rhs;
        for (j, map) in maps.iter().enumerate() {
            let aij = row.coeffs[j];
            if aij == 0.0 {
                continue;
            }
            rhs -= aij * map.offset;
            for &(c, k) in &map.cols {
                a[i][c] += aij * k;
            }
        }
        b[i] = rhs;
        senses.push(row.sense);
    }
    for (k, &(c, width)) in upper_rows.iter().enumerate() {
        let i = lp.rows.len() + k;
        a[i][c] = 1.0;
        b[i] = width;
        senses.push(RowSense::Le);
    }
    let mut flipped = vec![false; m];
    for i in 0..m {
        if b[i] < 0.0 {
            flipped[i] = true;
            b[i] = -b[i];
            a[i].iter_mut().for_each(|v| *v = -*v);
            senses[i] = match senses[i] {
                RowSense::Le => RowSense::Ge,
                RowSense::Ge => RowSense::Le,
                RowSense::Eq => RowSense::Eq,
            };
        }
    }

    let nslack = senses.iter().filter(|s| **s != RowSense::Eq).count();
    let nart = senses.iter().filter(|s| **s != RowSense::Le).count();
    let art_start = ncols + nslack;
    let total = art_start + nart;
    let width = total + 1;
    let mut full = vec![0.0; m * total];
    let mut basis = vec![0; m];
    let (mut s, mut r) = (ncols, art_start);
    for i in 0..m {
        full[i * total..i * total + ncols].copy_from_slice(&a[i]);
        match senses[i] {
            RowSense::Le => {
                full[i * total + s] = 1.0;
                basis[i] = s;
                s += 1;
            }
            RowSense::Ge => {
                full[i * total + s] = -1.0;
                full[i * total + r] = 1.0;
                basis[i] = r;
                s += 1;
                r += 1;
            }
            RowSense::Eq => {
                full[i * total + r] = 1.0;
                basis[i] = r;
                r += 1;
            }
        }
    }
    let mut t = vec![0.0; m * width];
    for i in 0..m {
        t[i * width..i * width + total].copy_from_slice(&full[i * total..(i + 1) * total]);
        t[i * width + total] = b[i];
    }
    let mut tab = Tableau { rows: m, width, t, basis };
    let limit = 10 * (m + total) * (m + total);
    let mut pivots = 0;

    if nart > 0 {
        let mut phase1 = vec![0.0; total];
        phase1[art_start..].fill(1.0);
        let mut obj = tab.objective_row(&phase1);
        tab.run(&mut obj, total, &mut pivots, limit)?;
        let infeas: f64 = (0..m)
            .filter(|&i| tab.basis[i] >= art_start)
            .map(|i| tab.rhs(i))
            .sum();
        if infeas > FEAS_TOL {
            return Ok(infeasible(pivots));
        }
        for i in 0..m {
            if tab.basis[i] < art_start {
                continue;
            }
            let col = (0..art_start)
                .filter(|&j| tab.at(i, j).abs() > 1e-9)
                .max_by(|&x, &y| tab.at(i, x).abs().total_cmp(&tab.at(i, y).abs()));
            if let Some(c) = col {
                tab.pivot(i, c, &mut obj);
                pivots += 1;
            }
        }
    }

    let mut cost2 = cost.clone();
    cost2.resize(total, 0.0);
    let mut obj = tab.objective_row(&cost2);
    if !tab.run(&mut obj, art_start, &mut pivots, limit)? {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            objective: sign * f64::NEG_INFINITY,
            x: Vec::new(),
            duals: Vec::new(),
            reduced_costs: Vec::new(),
            pivots,
        });
    }

    // recompute basic values and duals from the original columns
    let mut xb: Vec<f64> = (0..m).map(|i| tab.rhs(i)).collect();
    let mut y_int = vec![0.0; m];
    if m > 0 {
        let mut bmat = vec![0.0; m * m];
        for k in 0..m {
            for (i, &col) in tab.basis.iter().enumerate() {
                bmat[k * m + i] = full[k * total + col];
            }
        }
        let cb: Vec<f64> = tab.basis.iter().map(|&c| cost2[c]).collect();
        if let Some(refined) = solve_dense(bmat.clone(), b.clone(), m) {
            if refined.iter().all(|v| *v >= -1e-7) {
                xb = refined;
            }
        }
        match solve_dense(transpose(&bmat, m), cb, m) {
            Some(y) => y_int = y,
            None => {
                // fall back to the tableau prices: y_i = c_i − r_i on each row's initial column
                for i in 0..m {
                    let col = initial_column(&senses, i, ncols, art_start);
                    y_int[i] = cost2[col] - obj[col];
                }
            }
        }
    }
    let mut internal = vec![0.0; total];
    for (i, &col) in tab.basis.iter().enumerate() {
        internal[col] = xb[i].max(0.0);
    }
    let x: Vec<f64> = maps
        .iter()
        .map(|map| map.offset + map.cols.iter().map(|&(c, k)| k * internal[c]).sum::<f64>())
        .collect();
    let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    let duals: Vec<f64> = (0..lp.rows.len())
        .map(|i| {
            let f = if flipped[i] { -1.0 } else { 1.0 };
            sign * f * y_int[i]
        })
        .collect();
    let reduced_costs = (0..n)
        .map(|j| {
            lp.objective[j]
                - lp
                    .rows
                    .iter()
                    .zip(&duals)
                    .map(|(row, y)| row.coeffs[j] * y)
                    .sum::<f64>()
        })
        .collect();
    let sol = LpSolution {
        status: LpStatus::Optimal,
        objective,
        x,
        duals,
        reduced_costs,
        pivots,
    };
    debug_assert!(
        {
            let cert = lp.certify(&sol);
            cert.duality_gap <= 1e-6 * (1.0 + sol.objective.abs())
        },
        "dual solution does not certify the objective"
    );
    Ok(sol)
}

fn initial_column(senses: &[RowSense], row: usize, ncols: usize, art_start: usize) -> usize {
    let slacks_before = senses[..row].iter().filter(|s| **s != RowSense::Eq).count();
    let arts_before = senses[..row].iter().filter(|s| **s != RowSense::Le).count();
    match senses[row] {
        RowSense::Le => ncols + slacks_before,
        _ => art_start + arts_before,
    }
}

fn infeasible(pivots: usize) -> LpSolution {
    LpSolution {
        status: LpStatus::Infeasible,
        objective: f64::NAN,
        x: Vec::new(),
        duals: Vec::new(),
        reduced_costs: Vec::new(),
        pivots,
    }
}
