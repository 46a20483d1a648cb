//! Optimizers over the prefix-graph MDP: scalarized double DQN, simulated
//! annealing and exhaustive enumeration for small widths.

mod anneal;
mod enumerate;

use std::collections::VecDeque;
use std::io::Write;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{self, default_horizon, EnvError, Transition};
use crate::eval::{EvalError, Evaluator};
use crate::graph::{GraphDoc, PrefixGraph};
use crate::objectives::{Objectives, ScalarWeight};
use crate::qfunc::{double_q_target, select_action, Sample, ValueFunction};

pub use anneal::{anneal, AnnealOutcome, AnnealStep, SAConfig};
pub use enumerate::{enumerate, enumerate_with_limit, Enumeration, ENUMERATION_LIMIT};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("transition without a reward in the batch")]
    UnfilledReward,
    #[error("value function width {vf} does not match environment width {env}")]
    WidthMismatch { vf: usize, env: usize },
    #[error("evaluation failed {count} times in a row; last error: {last}")]
    EvaluationFailed { count: usize, last: EvalError },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("width {n} exceeds the enumeration limit {limit}")]
    TooWide { n: usize, limit: usize },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub n: usize,
    pub gamma: f64,
    pub learning_rate: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    /// Gradient steps between target-network copies.
    pub sync_period: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of `total_steps` over which ε falls linearly to `epsilon_end`.
    pub epsilon_anneal_fraction: f64,
    pub w: ScalarWeight,
    pub total_steps: usize,
    pub seed: u64,
    /// Transitions collected before the first gradient step.
    pub warmup: usize,
    /// Interleaved acting loops sharing one replay buffer.
    pub actors: usize,
    /// Episode length; defaults to twice the number of optional positions.
    pub horizon: Option<usize>,
    /// Environment steps between greedy evaluations and metrics records.
    pub eval_interval: usize,
    /// Consecutive evaluation failures tolerated before aborting.
    pub max_eval_failures: usize,
    pub checkpoint_dir: Option<PathBuf>,
    /// Environment steps between checkpoints (0 disables periodic ones).
    pub checkpoint_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n: 8,
            gamma: 0.75,
            learning_rate: 4e-5,
            replay_capacity: 400_000,
            batch_size: 32,
            sync_period: 60,
            epsilon_start: 1.0,
            epsilon_end: 0.0,
            epsilon_anneal_fraction: 0.5,
            w: ScalarWeight::default(),
            total_steps: 20_000,
            seed: 0,
            warmup: 1000,
            actors: 4,
            horizon: None,
            eval_interval: 1000,
            max_eval_failures: 10,
            checkpoint_dir: None,
            checkpoint_interval: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.replay_capacity == 0 || self.batch_size == 0 || self.sync_period == 0 || self.actors == 0 {
            return bad("replay_capacity, batch_size, sync_period and actors must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) || !(0.0..=1.0).contains(&self.epsilon_end) {
            return bad("epsilon bounds must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.epsilon_anneal_fraction) {
            return bad("epsilon_anneal_fraction must lie in [0, 1]");
        }
        if self.total_steps == 0 {
            return bad("total_steps must be at least 1");
        }
        if self.eval_interval == 0 {
            return bad("eval_interval must be at least 1");
        }
        if self.horizon == Some(0) {
            return bad("horizon must be at least 1");
        }
        crate::graph::PrefixGraph::ripple(self.n).map_err(EnvError::from)?;
        if env::action_space_size(self.n) == 0 {
            return bad("width has no optional positions to act on");
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.horizon.unwrap_or_else(|| default_horizon(self.n))
    }

    /// Linear from `epsilon_start` to `epsilon_end`, then constant.
    pub fn epsilon(&self, step: usize) -> f64 {
        let span = self.epsilon_anneal_fraction * self.total_steps as f64;
        if span <= 0.0 {
            return self.epsilon_end;
        }
        let t = (step as f64 / span).min(1.0);
        self.epsilon_start + t * (self.epsilon_end - self.epsilon_start)
    }
}

/// Fixed-capacity FIFO of transitions with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer { capacity: capacity.max(1), items: VecDeque::new() }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// `k` draws, uniform with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vec<&Transition> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..k).map(|_| &self.items[rng.random_range(0..self.items.len())]).collect()
    }
}

/// Double-DQN targets for a batch of transitions.
pub fn dqn_target(
    batch: &[&Transition],
    value_fn: &dyn ValueFunction,
    gamma: f64,
    w: ScalarWeight,
) -> Result<Vec<Objectives>, TrainError> {
    let rewards: Vec<Objectives> =
        batch.iter().map(|t| t.reward.ok_or(TrainError::UnfilledReward)).collect::<Result<_, _>>()?;
    if gamma == 0.0 {
        return Ok(rewards);
    }
    let next: Vec<&PrefixGraph> = batch.iter().map(|t| &t.next_state).collect();
    let local = value_fn.q_values_batch(&next);
    let target = value_fn.target_q_values_batch(&next);
    Ok(rewards
        .into_iter()
        .zip(local.iter().zip(&target))
        .map(|(r, (l, t))| double_q_target(r, gamma, w, l, t))
        .collect())
}

/// Best design found by a greedy (ε = 0) rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyResult {
    pub graph: GraphDoc,
    pub cost: Objectives,
    pub scalar: f64,
}

/// Runs ε = 0 rollouts of `horizon` steps from both start structures and
/// returns the best scalarized design reached after at least one action,
/// plus every design visited.
pub fn greedy_rollout(
    n: usize,
    horizon: usize,
    value_fn: &dyn ValueFunction,
    evaluator: &dyn Evaluator,
    w: ScalarWeight,
) -> Result<(GreedyResult, Vec<(PrefixGraph, Objectives)>), TrainError> {
    let mut best: Option<(PrefixGraph, Objectives, f64)> = None;
    let mut visited: Vec<(PrefixGraph, Objectives)> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for start in [PrefixGraph::ripple(n), PrefixGraph::sklansky(n)] {
        let mut g = start.map_err(EnvError::from)?;
        for _ in 0..horizon {
            let q = value_fn.q_values(&g);
            let Some(a) = select_action(&q, w, 0.0, &mut rng) else { break };
            g = env::step(&g, a)?;
            let c = evaluator.cost(&g, w)?;
            let s = w.scalarize(c);
            if best.as_ref().is_none_or(|(_, _, b)| s < *b) {
                best = Some((g.clone(), c, s));
            }
            if !visited.iter().any(|(v, _)| *v == g) {
                visited.push((g.clone(), c));
            }
        }
    }
    let (g, cost, scalar) = best.ok_or(EnvError::NoLegalAction(n))?;
    Ok((GreedyResult { graph: g.to_doc(), cost, scalar }, visited))
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: usize,
    pub epsilon: f64,
    /// Mean per-objective squared error over the updates since the last record.
    pub loss_area: Option<f64>,
    pub loss_delay: Option<f64>,
    pub updates: usize,
    pub buffer_len: usize,
    pub dropped_transitions: usize,
    pub greedy_cost: Objectives,
    pub greedy_scalar: f64,
    pub greedy_design: GraphDoc,
    pub cache_hit_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TrainState {
    step: usize,
    epsilon: f64,
    updates: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub metrics: Vec<MetricsRecord>,
    /// Greedy result after the final step.
    pub final_greedy: GreedyResult,
    /// Every design the final greedy rollouts visited, with its cost.
    pub greedy_designs: Vec<(PrefixGraph, Objectives)>,
    pub updates: usize,
    pub dropped_transitions: usize,
}

struct Actor {
    state: PrefixGraph,
    cost: Objectives,
    t: usize,
}

fn start_actor(
    n: usize,
    rng: &mut ChaCha8Rng,
    evaluator: &dyn Evaluator,
    w: ScalarWeight,
) -> Result<Actor, EvalError> {
    let state = env::reset(n, rng).expect("width validated");
    let cost = evaluator.cost(&state, w)?;
    Ok(Actor { state, cost, t: 0 })
}

/// Scalarized double-DQN training.
///
/// Actors step in round-robin order through one random stream, so a run is
/// a pure function of the config and the value function's initial state.
/// Metrics records are written to `metrics` as JSON lines as they are made.
pub fn dqn_train(
    cfg: &TrainConfig,
    evaluator: &dyn Evaluator,
    value_fn: &mut dyn ValueFunction,
    mut metrics: Option<&mut dyn Write>,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if value_fn.width() != cfg.n {
        return Err(TrainError::WidthMismatch { vf: value_fn.width(), env: cfg.n });
    }
    let w = cfg.w;
    let horizon = cfg.horizon();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut buffer = ReplayBuffer::new(cfg.replay_capacity);
    let mut failures = 0usize;
    let mut dropped = 0usize;
    let fail = |e: EvalError, failures: &mut usize| -> Result<(), TrainError> {
        log::warn!("evaluation failed, transition dropped: {e}");
        *failures += 1;
        if *failures > cfg.max_eval_failures {
            return Err(TrainError::EvaluationFailed { count: *failures, last: e });
        }
        Ok(())
    };

    let mut actors: Vec<Option<Actor>> = (0..cfg.actors).map(|_| None).collect();
    let mut updates = 0usize;
    let mut loss_sum = Objectives::ZERO;
    let mut loss_count = 0usize;
    let mut records = Vec::new();
    if let Some(dir) = &cfg.checkpoint_dir {
        std::fs::create_dir_all(dir)?;
    }

    for step in 0..cfg.total_steps {
        let slot = &mut actors[step % cfg.actors];
        if slot.as_ref().is_none_or(|a| a.t >= horizon) {
            match start_actor(cfg.n, &mut rng, evaluator, w) {
                Ok(a) => {
                    *slot = Some(a);
                    failures = 0;
                }
                Err(e) => {
                    *slot = None;
                    dropped += 1;
                    fail(e, &mut failures)?;
                    continue;
                }
            }
        }
        let actor = slot.as_mut().expect("actor started");
        let epsilon = cfg.epsilon(step);
        let q = value_fn.q_values(&actor.state);
        let action = select_action(&q, w, epsilon, &mut rng).ok_or(EnvError::NoLegalAction(cfg.n))?;
        let next = env::step(&actor.state, action)?;
        actor.t += 1;
        match evaluator.cost(&next, w) {
            Ok(next_cost) => {
                failures = 0;
                let reward = actor.cost - next_cost;
                buffer.push(Transition {
                    state: std::mem::replace(&mut actor.state, next.clone()),
                    action,
                    reward: Some(reward),
                    next_state: next,
                });
                actor.cost = next_cost;
            }
            Err(e) => {
                dropped += 1;
                fail(e, &mut failures)?;
            }
        }

        if buffer.len() >= cfg.warmup.max(1) {
            let batch = buffer.sample(cfg.batch_size, &mut rng);
            let targets = dqn_target(&batch, value_fn, cfg.gamma, w)?;
            let samples: Vec<Sample<'_>> = batch
                .iter()
                .zip(targets)
                .map(|(t, target)| Sample { state: &t.state, action: t.action, target })
                .collect();
            loss_sum = loss_sum + value_fn.train_step(&samples);
            loss_count += 1;
            updates += 1;
            if updates % cfg.sync_period == 0 {
                value_fn.sync_target();
            }
        }

        let done = step + 1;
        if done % cfg.eval_interval == 0 || done == cfg.total_steps {
            let (greedy, _) = greedy_rollout(cfg.n, horizon, value_fn, evaluator, w)?;
            let mean = (loss_count > 0).then(|| loss_sum * (1.0 / loss_count as f64));
            let rec = MetricsRecord {
                step: done,
                epsilon,
                loss_area: mean.map(|m| m.area),
                loss_delay: mean.map(|m| m.delay),
                updates,
                buffer_len: buffer.len(),
                dropped_transitions: dropped,
                greedy_cost: greedy.cost,
                greedy_scalar: greedy.scalar,
                greedy_design: greedy.graph.clone(),
                cache_hit_ratio: evaluator.stats().hit_ratio(),
            };
            if let Some(out) = metrics.as_deref_mut() {
                let mut line = serde_json::to_string(&rec).expect("metrics serialize");
                line.push('\n');
                out.write_all(line.as_bytes())?;
                out.flush()?;
            }
            log::info!("step {done}: eps {epsilon:.3}, greedy cost {:?}", rec.greedy_cost);
            records.push(rec);
            loss_sum = Objectives::ZERO;
            loss_count = 0;
        }

        if let Some(dir) = &cfg.checkpoint_dir {
            let periodic = cfg.checkpoint_interval > 0 && done % cfg.checkpoint_interval == 0;
            if periodic || done == cfg.total_steps {
                write_checkpoint(dir, done, epsilon, updates, value_fn)?;
            }
        }
    }

    let (final_greedy, greedy_designs) = greedy_rollout(cfg.n, horizon, value_fn, evaluator, w)?;
    Ok(TrainOutcome { metrics: records, final_greedy, greedy_designs, updates, dropped_transitions: dropped })
}

fn write_checkpoint(
    dir: &std::path::Path,
    step: usize,
    epsilon: f64,
    updates: usize,
    value_fn: &dyn ValueFunction,
) -> Result<(), TrainError> {
    if let Some(bytes) = value_fn.checkpoint() {
        std::fs::write(dir.join(format!("params-{step:08}.bin")), bytes)?;
    }
    let state = TrainState { step, epsilon, updates };
    std::fs::write(dir.join("train_state.json"), serde_json::to_string_pretty(&state).expect("state serializes"))?;
    Ok(())
}
