use serde::Serialize;

use super::OracleError;
use crate::backup::ValueVector;
use crate::lp::{LinearProgram, LpStatus, RowSense, Sense};
use crate::mdp::MdpModel;
use crate::transport::{check_distribution, AmbiguitySpec, Coupling};

/// Worst-case row inside the ball, with its transport plan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdversarialRow {
    pub p_tilde: Vec<f64>,
    pub attained_value: f64,
    pub coupling: Coupling,
}

/// Maximizes `Σ_{y,z} v̂(y) Γ(y, z)` over plans `Γ ≥ 0` whose column sums
/// are the nominal row and whose transport cost is at most `δ`.
pub fn primal_inner_sup(
    nominal: &[f64],
    values: &ValueVector,
    spec: &AmbiguitySpec,
) -> Result<AdversarialRow, OracleError> {
    let metric = spec.metric();
    let n = metric.len();
    check_distribution(nominal, n)?;
    if values.len() != n {
        return Err(OracleError::InvalidArgument(format!(
            "value vector has {} entries, expected {n}",
            values.len()
        )));
    }
    let v = values.as_slice();
    let mut objective = vec![0.0; n * n];
    for y in 0..n {
        objective[y * n..(y + 1) * n].fill(v[y]);
    }
    let mut lp = LinearProgram::new(Sense::Maximize, objective);
    for z in 0..n {
        let mut col = vec![0.0; n * n];
        for y in 0..n {
            col[y * n + z] = 1.0;
        }
        lp.add_constraint(col, RowSense::Eq, nominal[z]);
    }
    lp.add_constraint(metric.as_matrix().to_vec(), RowSense::Le, spec.delta());
    let sol = lp.solve()?;
    if sol.status != LpStatus::Optimal {
        return Err(OracleError::UnexpectedStatus(sol.status));
    }
    let coupling = Coupling::new(n, sol.x.iter().map(|g| g.max(0.0)).collect());
    let p_tilde = coupling.row_marginal();
    let attained_value = p_tilde.iter().zip(v).map(|(p, v)| p * v).sum();
    Ok(AdversarialRow {
        p_tilde,
        attained_value,
        coupling,
    })
}

/// Model whose every row is replaced by its primal worst case against
/// `values`. Rows are renormalized to absorb LP round-off.
pub fn adversarial_model(
    model: &MdpModel,
    spec: &AmbiguitySpec,
    values: &ValueVector,
) -> Result<MdpModel, OracleError> {
    let rows = model
        .kernel_rows()
        .iter()
        .map(|row| {
            let adv = primal_inner_sup(row, values, spec)?;
            let total: f64 = adv.p_tilde.iter().sum();
            Ok(adv.p_tilde.iter().map(|p| p / total).collect())
        })
        .collect::<Result<Vec<Vec<f64>>, OracleError>>()?;
    Ok(model.with_kernel(rows)?)
}
