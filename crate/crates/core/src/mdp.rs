//! Finite MDPs with a goal / forbidden / taboo partition.
//!
//! States carry integer labels that double as their position on the real
//! line; the default ground metric is the absolute label difference. Goal
//! and forbidden states are absorbing, so only taboo states own kernel rows.
//!
//! The safety function `S(x)` is the probability of entering a forbidden
//! state before a goal state when starting in taboo state `x`. With the
//! nominal kernel it solves a linear system, see [`standard_safety`].

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::solve_dense;

/// Tolerance on kernel and policy row sums.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// Integer state label. The label is also the state's coordinate for the
/// absolute-difference ground metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateId(pub i64);

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionId(pub i64);

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateClass {
    /// Absorbing target state (E).
    Goal,
    /// Absorbing unsafe state (U).
    Forbidden,
    /// Transient state (H).
    Taboo,
}

impl StateClass {
    pub fn is_terminal(self) -> bool {
        !matches!(self, StateClass::Taboo)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("state {0} is declared more than once")]
    DuplicateState(StateId),
    #[error("action {0} is declared more than once")]
    DuplicateAction(ActionId),
    #[error("model has no taboo states")]
    EmptyTaboo,
    #[error("model has no goal or forbidden states")]
    NoTerminal,
    #[error("model declares no actions")]
    NoActions,
    #[error("unknown state {0}")]
    UnknownState(StateId),
    #[error("unknown action {0}")]
    UnknownAction(ActionId),
    #[error("kernel row supplied for terminal state {0}")]
    KernelOnTerminal(StateId),
    #[error("missing kernel row for state {state}, action {action}")]
    MissingKernelRow { state: StateId, action: ActionId },
    #[error("transition ({from}, {action}, {to}) is given more than once")]
    DuplicateTransition { from: StateId, action: ActionId, to: StateId },
    #[error("probability {prob} for state {state}, action {action} is negative or above 1")]
    NegativeProbability { state: StateId, action: ActionId, prob: f64 },
    #[error("kernel row for state {state}, action {action} sums to {sum}")]
    RowSumError { state: StateId, action: ActionId, sum: f64 },
    #[error("policy entry given for terminal state {0}")]
    PolicyOnTerminal(StateId),
    #[error("policy entry for state {state}, action {action} is given more than once")]
    DuplicatePolicyEntry { state: StateId, action: ActionId },
    #[error("policy at state {state} sums to {sum}")]
    PolicyRowSum { state: StateId, sum: f64 },
    #[error("kernel row has length {got}, expected {expected}")]
    RowLength { expected: usize, got: usize },
    #[error("linear system is singular; no terminal state is reachable from {states:?}")]
    SingularSystem { states: Vec<StateId> },
}

/// Non-fatal findings reported by [`validate_model`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelWarning {
    /// No goal or forbidden state is reachable from this taboo state under
    /// the nominal kernel, whatever the actions chosen.
    TerminalUnreachable(StateId),
}

impl fmt::Display for ModelWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelWarning::TerminalUnreachable(s) => {
                write!(f, "no terminal state is reachable from state {s}")
            }
        }
    }
}

/// A single `(from, action, to, prob)` triple of the untyped description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawTransition {
    pub from: StateId,
    pub action: ActionId,
    pub to: StateId,
    pub prob: f64,
}

/// Model description before validation. Omitted transitions have
/// probability zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawModel {
    pub states: Vec<(StateId, StateClass)>,
    pub actions: Vec<ActionId>,
    pub transitions: Vec<RawTransition>,
}

/// Validated, canonical MDP. States are sorted by label and addressed by
/// index internally; kernel rows are dense over all states.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpModel {
    labels: Vec<StateId>,
    classes: Vec<StateClass>,
    actions: Vec<ActionId>,
    taboo: Vec<usize>,
    taboo_pos: Vec<Option<usize>>,
    kernel: Vec<Vec<f64>>,
}

/// Result of [`validate_model`].
#[derive(Debug, Clone)]
pub struct Validated {
    pub model: MdpModel,
    pub warnings: Vec<ModelWarning>,
}

/// Checks a raw description and builds the canonical model.
pub fn validate_model(raw: &RawModel) -> Result<Validated, ModelError> {
    let mut states = raw.states.clone();
    states.sort_by_key(|(id, _)| *id);
    for pair in states.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(ModelError::DuplicateState(pair[0].0));
        }
    }
    let mut actions = raw.actions.clone();
    actions.sort();
    for pair in actions.windows(2) {
        if pair[0] == pair[1] {
            return Err(ModelError::DuplicateAction(pair[0]));
        }
    }
    if actions.is_empty() {
        return Err(ModelError::NoActions);
    }

    let labels: Vec<StateId> = states.iter().map(|(id, _)| *id).collect();
    let classes: Vec<StateClass> = states.iter().map(|(_, c)| *c).collect();
    let taboo: Vec<usize> = (0..classes.len())
        .filter(|&i| classes[i] == StateClass::Taboo)
        .collect();
    if taboo.is_empty() {
        return Err(ModelError::EmptyTaboo);
    }
    if taboo.len() == classes.len() {
        return Err(ModelError::NoTerminal);
    }
    let mut taboo_pos = vec![None; labels.len()];
    for (pos, &s) in taboo.iter().enumerate() {
        taboo_pos[s] = Some(pos);
    }

    let n = labels.len();
    let mut kernel = vec![vec![0.0; n]; taboo.len() * actions.len()];
    let mut present = vec![false; kernel.len()];
    let mut seen = HashSet::new();
    for t in &raw.transitions {
        let from = index_of(&labels, t.from)?;
        let to = index_of(&labels, t.to)?;
        let a = actions
            .binary_search(&t.action)
            .map_err(|_| ModelError::UnknownAction(t.action))?;
        let pos = taboo_pos[from].ok_or(ModelError::KernelOnTerminal(t.from))?;
        if !seen.insert((from, a, to)) {
            return Err(ModelError::DuplicateTransition {
                from: t.from,
                action: t.action,
                to: t.to,
            });
        }
        if !(0.0..=1.0).contains(&t.prob) || !t.prob.is_finite() {
            return Err(ModelError::NegativeProbability {
                state: t.from,
                action: t.action,
                prob: t.prob,
            });
        }
        let row = pos * actions.len() + a;
        kernel[row][to] = t.prob;
        present[row] = true;
    }
    for (pos, &s) in taboo.iter().enumerate() {
        for (a, &action) in actions.iter().enumerate() {
            let row = pos * actions.len() + a;
            if !present[row] {
                return Err(ModelError::MissingKernelRow {
                    state: labels[s],
                    action,
                });
            }
            let sum: f64 = kernel[row].iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(ModelError::RowSumError {
                    state: labels[s],
                    action,
                    sum,
                });
            }
        }
    }

    let model = MdpModel {
        labels,
        classes,
        actions,
        taboo,
        taboo_pos,
        kernel,
    };
    let warnings = model
        .states_without_terminal_path(|_, _| true)
        .into_iter()
        .map(ModelWarning::TerminalUnreachable)
        .collect();
    Ok(Validated { model, warnings })
}

fn index_of(labels: &[StateId], id: StateId) -> Result<usize, ModelError> {
    labels
        .binary_search(&id)
        .map_err(|_| ModelError::UnknownState(id))
}

impl MdpModel {
    pub fn num_states(&self) -> usize {
        self.labels.len()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn num_taboo(&self) -> usize {
        self.taboo.len()
    }

    /// State labels in ascending order.
    pub fn labels(&self) -> &[StateId] {
        &self.labels
    }

    pub fn classes(&self) -> &[StateClass] {
        &self.classes
    }

    pub fn actions(&self) -> &[ActionId] {
        &self.actions
    }

    /// Indices (into [`labels`](Self::labels)) of the taboo states.
    pub fn taboo_indices(&self) -> &[usize] {
        &self.taboo
    }

    pub fn taboo_states(&self) -> Vec<StateId> {
        self.taboo.iter().map(|&i| self.labels[i]).collect()
    }

    pub fn state_index(&self, id: StateId) -> Option<usize> {
        self.labels.binary_search(&id).ok()
    }

    pub fn action_index(&self, id: ActionId) -> Option<usize> {
        self.actions.binary_search(&id).ok()
    }

    /// Position of a state among the taboo states, if it is taboo.
    pub fn taboo_position(&self, state_index: usize) -> Option<usize> {
        self.taboo_pos.get(state_index).copied().flatten()
    }

    pub fn class_of(&self, state_index: usize) -> StateClass {
        self.classes[state_index]
    }

    /// Kernel row for `(taboo position, action index)`.
    pub fn row(&self, taboo_pos: usize, action: usize) -> &[f64] {
        &self.kernel[taboo_pos * self.actions.len() + action]
    }

    /// Kernel row looked up by labels.
    pub fn row_of(&self, state: StateId, action: ActionId) -> Option<&[f64]> {
        let pos = self.taboo_position(self.state_index(state)?)?;
        let a = self.action_index(action)?;
        Some(self.row(pos, a))
    }

    /// Copy of this model with the kernel rows replaced. Rows are indexed
    /// `taboo_pos * num_actions + action` and are checked like parsed rows.
    pub fn with_kernel(&self, rows: Vec<Vec<f64>>) -> Result<MdpModel, ModelError> {
        if rows.len() != self.kernel.len() {
            return Err(ModelError::RowLength {
                expected: self.kernel.len(),
                got: rows.len(),
            });
        }
        for (r, row) in rows.iter().enumerate() {
            let state = self.labels[self.taboo[r / self.actions.len()]];
            let action = self.actions[r % self.actions.len()];
            if row.len() != self.num_states() {
                return Err(ModelError::RowLength {
                    expected: self.num_states(),
                    got: row.len(),
                });
            }
            if let Some(&prob) = row.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(ModelError::NegativeProbability { state, action, prob });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(ModelError::RowSumError { state, action, sum });
            }
        }
        Ok(MdpModel {
            kernel: rows,
            ..self.clone()
        })
    }

    /// All kernel rows, indexed `taboo_pos * num_actions + action`.
    pub fn kernel_rows(&self) -> &[Vec<f64>] {
        &self.kernel
    }

    /// Terminal cost of entering a state: 1 for forbidden, 0 otherwise.
    pub fn terminal_cost(&self, state_index: usize) -> f64 {
        if self.classes[state_index] == StateClass::Forbidden {
            1.0
        } else {
            0.0
        }
    }

    /// Probability mass a row places on forbidden states.
    pub fn one_step_cost(&self, row: &[f64]) -> f64 {
        row.iter()
            .zip(&self.classes)
            .filter(|(_, c)| **c == StateClass::Forbidden)
            .map(|(p, _)| *p)
            .sum()
    }

    /// Taboo states from which no terminal state can be reached using
    /// transitions with positive probability and actions admitted by `uses`.
    fn states_without_terminal_path(
        &self,
        uses: impl Fn(usize, usize) -> bool,
    ) -> Vec<StateId> {
        let n = self.num_states();
        let mut reaches = self.classes.iter().map(|c| c.is_terminal()).collect::<Vec<_>>();
        loop {
            let mut changed = false;
            for (pos, &s) in self.taboo.iter().enumerate() {
                if reaches[s] {
                    continue;
                }
                let hit = (0..self.num_actions()).any(|a| {
                    uses(pos, a) && (0..n).any(|y| self.row(pos, a)[y] > 0.0 && reaches[y])
                });
                if hit {
                    reaches[s] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        self.taboo
            .iter()
            .filter(|&&s| !reaches[s])
            .map(|&s| self.labels[s])
            .collect()
    }
}

/// Stationary stochastic policy on taboo states.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    num_actions: usize,
    probs: Vec<f64>,
}

impl PolicyTable {
    /// Builds a policy from `(state, action, prob)` entries. Omitted pairs
    /// get probability zero.
    pub fn new(
        model: &MdpModel,
        entries: &[(StateId, ActionId, f64)],
    ) -> Result<Self, ModelError> {
        let na = model.num_actions();
        let mut probs = vec![0.0; model.num_taboo() * na];
        let mut seen = BTreeSet::new();
        for &(state, action, prob) in entries {
            let s = model
                .state_index(state)
                .ok_or(ModelError::UnknownState(state))?;
            let a = model
                .action_index(action)
                .ok_or(ModelError::UnknownAction(action))?;
            let pos = model
                .taboo_position(s)
                .ok_or(ModelError::PolicyOnTerminal(state))?;
            if !seen.insert((pos, a)) {
                return Err(ModelError::DuplicatePolicyEntry { state, action });
            }
            if !(0.0..=1.0).contains(&prob) {
                return Err(ModelError::NegativeProbability { state, action, prob });
            }
            probs[pos * na + a] = prob;
        }
        for (pos, &s) in model.taboo_indices().iter().enumerate() {
            let sum: f64 = probs[pos * na..(pos + 1) * na].iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(ModelError::PolicyRowSum {
                    state: model.labels()[s],
                    sum,
                });
            }
        }
        Ok(Self {
            num_actions: na,
            probs,
        })
    }

    /// Uniform distribution over all actions at every taboo state.
    pub fn uniform(model: &MdpModel) -> Self {
        let na = model.num_actions();
        Self {
            num_actions: na,
            probs: vec![1.0 / na as f64; model.num_taboo() * na],
        }
    }

    /// `π(a|x)` for taboo position `pos` and action index `a`.
    pub fn prob(&self, pos: usize, a: usize) -> f64 {
        self.probs[pos * self.num_actions + a]
    }

    /// Action distribution at taboo position `pos`.
    pub fn row(&self, pos: usize) -> &[f64] {
        &self.probs[pos * self.num_actions..(pos + 1) * self.num_actions]
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Entries with positive probability, as labels.
    pub fn entries(&self, model: &MdpModel) -> Vec<(StateId, ActionId, f64)> {
        let mut out = Vec::new();
        for (pos, &s) in model.taboo_indices().iter().enumerate() {
            for (a, &action) in model.actions().iter().enumerate() {
                let p = self.prob(pos, a);
                if p > 0.0 {
                    out.push((model.labels()[s], action, p));
                }
            }
        }
        out
    }
}

/// Values indexed by taboo state, in ascending label order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TabooMap {
    states: Vec<StateId>,
    values: Vec<f64>,
}

impl TabooMap {
    pub fn new(states: Vec<StateId>, values: Vec<f64>) -> Self {
        assert_eq!(states.len(), values.len());
        Self { states, values }
    }

    pub fn get(&self, state: StateId) -> Option<f64> {
        self.states
            .binary_search(&state)
            .ok()
            .map(|i| self.values[i])
    }

    pub fn states(&self) -> &[StateId] {
        &self.states
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (StateId, f64)> + '_ {
        self.states.iter().copied().zip(self.values.iter().copied())
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_btree(&self) -> BTreeMap<StateId, f64> {
        self.iter().collect()
    }
}

/// Exact safety function under the nominal kernel: the unique solution of
/// `S(x) = Σ_a π(a|x) Σ_y P_{x,a}(y) (1_U(y) + 1_H(y) S(y))`.
pub fn standard_safety(model: &MdpModel, policy: &PolicyTable) -> Result<TabooMap, ModelError> {
    let stuck = model.states_without_terminal_path(|pos, a| policy.prob(pos, a) > 0.0);
    if !stuck.is_empty() {
        return Err(ModelError::SingularSystem { states: stuck });
    }
    let k = model.num_taboo();
    let mut a = vec![0.0; k * k];
    let mut b = vec![0.0; k];
    for pos in 0..k {
        a[pos * k + pos] += 1.0;
        for act in 0..model.num_actions() {
            let w = policy.prob(pos, act);
            if w == 0.0 {
                continue;
            }
            let row = model.row(pos, act);
            b[pos] += w * model.one_step_cost(row);
            for (y, &p) in row.iter().enumerate() {
                if let Some(ypos) = model.taboo_position(y) {
                    a[pos * k + ypos] -= w * p;
                }
            }
        }
    }
    let values = solve_dense(a, b, k).ok_or_else(|| ModelError::SingularSystem {
        states: model.taboo_states(),
    })?;
    Ok(TabooMap::new(model.taboo_states(), values))
}
