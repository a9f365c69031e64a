//! Seeded random models and backup instances.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use super::OracleError;
use crate::backup::ValueVector;
use crate::mdp::{
    validate_model, ActionId, MdpModel, PolicyTable, RawModel, RawTransition, StateClass, StateId,
};
use crate::transport::GroundMetric;

/// Normalized exponential weights; each entry is zeroed with probability
/// `sparsity`, but at least one entry stays positive.
pub fn random_distribution(n: usize, sparsity: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n)
        .map(|_| {
            if rng.random::<f64>() < sparsity {
                0.0
            } else {
                Exp1.sample(rng)
            }
        })
        .collect();
    if w.iter().all(|&x| x == 0.0) {
        w[rng.random_range(0..n)] = 1.0;
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

/// Increasing labels with random gaps of 1 to 3.
fn random_labels(n: usize, rng: &mut impl Rng) -> Vec<StateId> {
    let mut next = rng.random_range(0..5i64);
    (0..n)
        .map(|_| {
            let id = StateId(next);
            next += rng.random_range(1..=3);
            id
        })
        .collect()
}

/// Random valid model and policy. Each partition class gets at least one
/// state and every kernel row puts some mass on a terminal state, so the
/// nominal safety system is always nonsingular.
pub fn random_instance(
    n_states: usize,
    n_actions: usize,
    seed: u64,
) -> Result<(MdpModel, PolicyTable), OracleError> {
    if n_states < 3 || n_actions == 0 {
        return Err(OracleError::InvalidArgument(format!(
            "need at least 3 states and 1 action, got {n_states} and {n_actions}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = random_labels(n_states, &mut rng);
    let mut classes = vec![StateClass::Taboo, StateClass::Goal, StateClass::Forbidden];
    for _ in 3..n_states {
        let u: f64 = rng.random();
        classes.push(if u < 0.6 {
            StateClass::Taboo
        } else if u < 0.8 {
            StateClass::Goal
        } else {
            StateClass::Forbidden
        });
    }
    classes.shuffle(&mut rng);
    let terminals: Vec<usize> = (0..n_states).filter(|&i| classes[i].is_terminal()).collect();
    let actions: Vec<ActionId> = (1..=n_actions as i64).map(ActionId).collect();

    let mut transitions = Vec::new();
    let mut policy = Vec::new();
    for x in (0..n_states).filter(|&i| classes[i] == StateClass::Taboo) {
        for &a in &actions {
            let mut row = random_distribution(n_states, 0.4, &mut rng);
            if terminals.iter().all(|&t| row[t] == 0.0) {
                let t = terminals[rng.random_range(0..terminals.len())];
                let boost: f64 = 0.05 + 0.5 * rng.random::<f64>();
                row.iter_mut().for_each(|p| *p *= 1.0 - boost);
                row[t] += boost;
            }
            transitions.extend(row.iter().enumerate().filter(|(_, p)| **p > 0.0).map(|(y, &prob)| {
                RawTransition {
                    from: labels[x],
                    action: a,
                    to: labels[y],
                    prob,
                }
            }));
        }
        let pi = random_distribution(n_actions, 0.3, &mut rng);
        policy.extend(actions.iter().zip(pi).map(|(&a, p)| (labels[x], a, p)));
    }
    let raw = RawModel {
        states: labels.into_iter().zip(classes).collect(),
        actions,
        transitions,
    };
    let model = validate_model(&raw)?.model;
    let policy = PolicyTable::new(&model, &policy)?;
    Ok((model, policy))
}

/// Inputs for one standalone backup.
#[derive(Debug, Clone, PartialEq)]
pub struct BackupInstance {
    pub metric: GroundMetric,
    pub row: Vec<f64>,
    pub values: ValueVector,
    pub delta: f64,
}

/// Random backup with `2..=max_states` states on random integer labels,
/// values uniform in `[0, 1]` and `δ` uniform in `[0, 1]`.
pub fn random_backup_instance(max_states: usize, seed: u64) -> BackupInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=max_states.max(2));
    let metric = GroundMetric::abs_diff(&random_labels(n, &mut rng)).expect("labels increase");
    let row = random_distribution(n, 0.3, &mut rng);
    let values = (0..n).map(|_| rng.random::<f64>()).collect();
    BackupInstance {
        metric,
        row,
        values: ValueVector::new(values).expect("values in range"),
        delta: rng.random(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_partition() {
        let (m, _) = random_instance(3, 1, 5).unwrap();
        let count = |c| m.classes().iter().filter(|&&x| x == c).count();
        assert_eq!(count(StateClass::Taboo), 1);
        assert_eq!(count(StateClass::Goal), 1);
        assert_eq!(count(StateClass::Forbidden), 1);
    }

    #[test]
    fn reproducible() {
        let a = random_instance(6, 2, 11).unwrap();
        let b = random_instance(6, 2, 11).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.0, random_instance(6, 2, 12).unwrap().0);
    }

    #[test]
    fn too_small() {
        assert!(random_instance(2, 1, 0).is_err());
    }
}
