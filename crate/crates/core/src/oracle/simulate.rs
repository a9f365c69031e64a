//! Monte Carlo estimate of the probability of entering a forbidden state
//! before a goal state.
//!
//! Trajectories are simulated in fixed-size batches. Batch `b` draws from a
//! ChaCha8 stream seeded with `seed` on stream number `b`, so the estimate
//! depends only on `(seed, batch_size, trajectories)` and not on how the
//! batches are scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::OracleError;
use crate::exec::{map_indexed, Execution};
use crate::mdp::{ActionId, MdpModel, PolicyTable, StateClass, StateId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub trajectories: usize,
    /// Trajectories still running after this many steps count as not hit.
    pub step_cap: usize,
    pub seed: u64,
    pub batch_size: usize,
    pub execution: Execution,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            trajectories: 100_000,
            step_cap: 10_000,
            seed: 0,
            batch_size: 4096,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HittingEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub hits: usize,
    /// Trajectories stopped by the step cap.
    pub censored: usize,
    pub trajectories: usize,
}

/// One simulated path, ending at the first terminal state or the step cap.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub states: Vec<StateId>,
    pub actions: Vec<ActionId>,
    pub hit_forbidden: bool,
    pub censored: bool,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.actions.len()
    }
}

/// Cumulative tables for inverse-CDF sampling.
struct Sampler<'a> {
    model: &'a MdpModel,
    policy_cdf: Vec<Vec<f64>>,
    row_cdf: Vec<Vec<f64>>,
}

fn cumulative(p: &[f64]) -> Vec<f64> {
    p.iter()
        .scan(0.0, |acc, &x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

fn draw(cdf: &[f64], weights: impl Fn(usize) -> f64, u: f64) -> usize {
    cdf.iter()
        .position(|&c| u < c)
        .unwrap_or_else(|| (0..cdf.len()).rev().find(|&i| weights(i) > 0.0).unwrap_or(0))
}

impl<'a> Sampler<'a> {
    fn new(model: &'a MdpModel, policy: &PolicyTable) -> Self {
        Self {
            model,
            policy_cdf: (0..model.num_taboo()).map(|p| cumulative(policy.row(p))).collect(),
            row_cdf: model.kernel_rows().iter().map(|r| cumulative(r)).collect(),
        }
    }

    fn action(&self, pos: usize, rng: &mut impl Rng) -> usize {
        let cdf = &self.policy_cdf[pos];
        let prev = |i: usize| if i == 0 { cdf[0] } else { cdf[i] - cdf[i - 1] };
        draw(cdf, prev, rng.random())
    }

    fn next_state(&self, pos: usize, a: usize, rng: &mut impl Rng) -> usize {
        let row_idx = pos * self.model.num_actions() + a;
        let row = self.model.row(pos, a);
        draw(&self.row_cdf[row_idx], |i| row[i], rng.random())
    }

    /// `(hit_forbidden, censored)` for one run from `start`.
    fn run(&self, start: usize, step_cap: usize, rng: &mut impl Rng) -> (bool, bool) {
        let mut state = start;
        for _ in 0..step_cap {
            let Some(pos) = self.model.taboo_position(state) else {
                return (self.model.class_of(state) == StateClass::Forbidden, false);
            };
            let a = self.action(pos, rng);
            state = self.next_state(pos, a, rng);
        }
        match self.model.class_of(state) {
            StateClass::Taboo => (false, true),
            class => (class == StateClass::Forbidden, false),
        }
    }
}

/// Simulates a single trajectory from `start`.
pub fn sample_trajectory(
    model: &MdpModel,
    policy: &PolicyTable,
    start: StateId,
    step_cap: usize,
    rng: &mut impl Rng,
) -> Result<Trajectory, OracleError> {
    let sampler = Sampler::new(model, policy);
    let mut state = model
        .state_index(start)
        .ok_or(OracleError::UnknownState(start))?;
    let mut states = vec![start];
    let mut actions = Vec::new();
    while let Some(pos) = model.taboo_position(state) {
        if actions.len() == step_cap {
            return Ok(Trajectory {
                states,
                actions,
                hit_forbidden: false,
                censored: true,
            });
        }
        let a = sampler.action(pos, rng);
        state = sampler.next_state(pos, a, rng);
        actions.push(model.actions()[a]);
        states.push(model.labels()[state]);
    }
    Ok(Trajectory {
        states,
        actions,
        hit_forbidden: model.class_of(state) == StateClass::Forbidden,
        censored: false,
    })
}

/// Fraction of trajectories from `start` that enter a forbidden state
/// before a goal state, with its binomial standard error.
pub fn monte_carlo_hitting(
    model: &MdpModel,
    policy: &PolicyTable,
    start: StateId,
    cfg: &SimConfig,
) -> Result<HittingEstimate, OracleError> {
    if cfg.trajectories == 0 || cfg.batch_size == 0 {
        return Err(OracleError::InvalidArgument(
            "trajectories and batch size must be positive".into(),
        ));
    }
    let start_idx = model
        .state_index(start)
        .ok_or(OracleError::UnknownState(start))?;
    let sampler = Sampler::new(model, policy);
    let batches = cfg.trajectories.div_ceil(cfg.batch_size);
    let counts = map_indexed(batches, cfg.execution, |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(b as u64);
        let size = cfg.batch_size.min(cfg.trajectories - b * cfg.batch_size);
        let (mut hits, mut censored) = (0usize, 0usize);
        for _ in 0..size {
            let (hit, cut) = sampler.run(start_idx, cfg.step_cap, &mut rng);
            hits += hit as usize;
            censored += cut as usize;
        }
        (hits, censored)
    });
    let (hits, censored) = counts
        .into_iter()
        .fold((0, 0), |(h, c), (bh, bc)| (h + bh, c + bc));
    let n = cfg.trajectories as f64;
    let estimate = hits as f64 / n;
    Ok(HittingEstimate {
        estimate,
        stderr: (estimate * (1.0 - estimate) / n).sqrt(),
        hits,
        censored,
        trajectories: cfg.trajectories,
    })
}
