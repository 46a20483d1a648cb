//! Two-objective Q-functions over the add/delete action grid.
//!
//! Every implementation returns [`QValues`] with one `(area, delay)` pair per
//! action; masked actions hold negative infinity and are never selected.

mod network;
mod tabular;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Action, ActionKind, ActionMask};
use crate::graph::PrefixGraph;
use crate::objectives::{Objectives, ScalarWeight};

pub use network::{
    input_rows, Adam, ConvQNetwork, ForwardCache, NetworkSpec, Parameters, Precision, QNet, Scalar, Slot,
    CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use tabular::TabularQ;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },
    #[error("invalid network spec: {0}")]
    Spec(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Which Q-function to train.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    /// Lookup table; `alpha` is the per-update step toward the target.
    Tabular { alpha: f64 },
    Network { blocks: usize, channels: usize, precision: Precision },
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::Network { blocks: 4, channels: 32, precision: Precision::F32 }
    }
}

impl ModelConfig {
    pub fn build(&self, n: usize, seed: u64, learning_rate: f64) -> Result<Box<dyn ValueFunction>, QError> {
        Ok(match *self {
            ModelConfig::Tabular { alpha } => {
                if !(alpha > 0.0 && alpha <= 1.0) {
                    return Err(QError::Spec(format!("tabular alpha {alpha} must lie in (0, 1]")));
                }
                Box::new(TabularQ::new(n, alpha))
            }
            ModelConfig::Network { blocks, channels, precision } => {
                Box::new(QNet::new(NetworkSpec { n, blocks, channels }, precision, seed, learning_rate)?)
            }
        })
    }
}

/// Output channels per position, in storage order.
pub const Q_CHANNELS: usize = 4;

fn channel(kind: ActionKind) -> usize {
    match kind {
        ActionKind::Add => 0,
        ActionKind::Delete => 2,
    }
}

/// `n × n × 4` values: `(area, delay)` for add, then for delete, at every
/// position. Storage is position-major, `((msb * n + lsb) * 4 + channel)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QValues {
    n: usize,
    data: Vec<f64>,
    mask: ActionMask,
}

impl QValues {
    /// Applies `mask` to raw values, overwriting every illegal entry with -inf.
    pub fn from_raw(mask: ActionMask, mut data: Vec<f64>) -> Result<Self, QError> {
        let n = mask.width();
        if data.len() != n * n * Q_CHANNELS {
            return Err(QError::Shape { expected: format!("{}", n * n * Q_CHANNELS), got: data.len().to_string() });
        }
        for msb in 0..n {
            for lsb in 0..n {
                for kind in [ActionKind::Add, ActionKind::Delete] {
                    if !mask.is_legal(Action { kind, msb, lsb }) {
                        let i = (msb * n + lsb) * Q_CHANNELS + channel(kind);
                        data[i] = f64::NEG_INFINITY;
                        data[i + 1] = f64::NEG_INFINITY;
                    }
                }
            }
        }
        Ok(QValues { n, data, mask })
    }

    /// Values for exactly the listed actions; everything else is masked.
    pub fn from_actions(n: usize, values: &[(Action, Objectives)]) -> Self {
        let mask = ActionMask::from_actions(n, values.iter().map(|(a, _)| *a));
        let mut data = vec![0.0; n * n * Q_CHANNELS];
        for (a, q) in values {
            if mask.is_legal(*a) {
                let i = (a.msb * n + a.lsb) * Q_CHANNELS + channel(a.kind);
                data[i] = q.area;
                data[i + 1] = q.delay;
            }
        }
        QValues::from_raw(mask, data).expect("length matches")
    }

    pub fn width(&self) -> usize {
        self.n
    }

    pub fn mask(&self) -> &ActionMask {
        &self.mask
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, a: Action) -> Objectives {
        if a.msb >= self.n || a.lsb >= self.n {
            return Objectives::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        }
        let i = (a.msb * self.n + a.lsb) * Q_CHANNELS + channel(a.kind);
        Objectives::new(self.data[i], self.data[i + 1])
    }

    pub fn legal_actions(&self) -> Vec<Action> {
        self.mask.legal_actions()
    }

    /// Legal action maximizing `wᵀQ`, lowest `(kind, msb, lsb)` on ties.
    pub fn greedy(&self, w: ScalarWeight) -> Option<Action> {
        let mut best: Option<(Action, f64)> = None;
        for a in self.legal_actions() {
            let s = w.scalarize(self.get(a));
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((a, s));
            }
        }
        best.map(|(a, _)| a)
    }
}

/// ε-greedy choice over legal actions. Returns `None` only when no action
/// is legal.
pub fn select_action<R: Rng + ?Sized>(q: &QValues, w: ScalarWeight, epsilon: f64, rng: &mut R) -> Option<Action> {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        return q.mask.sample(rng);
    }
    q.greedy(w)
}

/// Scalarized double-Q target: the local values pick the next action, the
/// target values price it. With no legal next action the target is `r`.
pub fn double_q_target(
    reward: Objectives,
    gamma: f64,
    w: ScalarWeight,
    q_local_next: &QValues,
    q_target_next: &QValues,
) -> Objectives {
    match q_local_next.greedy(w) {
        Some(a) => reward + q_target_next.get(a) * gamma,
        None => reward,
    }
}

/// One regression example: move `Q(state, action)` toward `target`.
#[derive(Debug, Clone)]
pub struct Sample<'a> {
    pub state: &'a PrefixGraph,
    pub action: Action,
    pub target: Objectives,
}

/// Interface shared by the tabular and network Q-functions.
pub trait ValueFunction {
    fn width(&self) -> usize;

    /// Masked values under the online parameters.
    fn q_values(&self, g: &PrefixGraph) -> QValues;

    /// Masked values under the target parameters.
    fn target_q_values(&self, g: &PrefixGraph) -> QValues;

    fn q_values_batch(&self, gs: &[&PrefixGraph]) -> Vec<QValues> {
        gs.iter().map(|g| self.q_values(g)).collect()
    }

    fn target_q_values_batch(&self, gs: &[&PrefixGraph]) -> Vec<QValues> {
        gs.iter().map(|g| self.target_q_values(g)).collect()
    }

    /// One update on the batch; returns the pre-update mean squared error
    /// per objective.
    fn train_step(&mut self, batch: &[Sample<'_>]) -> Objectives;

    /// Copies the online parameters into the target parameters.
    fn sync_target(&mut self);

    /// Serialized parameters, for implementations that have a file format.
    fn checkpoint(&self) -> Option<Vec<u8>> {
        None
    }
}

/// Applies an ε-greedy policy backed by a value function.
pub struct GreedyPolicy<'a, V: ValueFunction + ?Sized> {
    pub value_fn: &'a V,
    pub w: ScalarWeight,
    pub epsilon: f64,
}

impl<V: ValueFunction + ?Sized> crate::env::Policy for GreedyPolicy<'_, V> {
    fn choose(&mut self, g: &PrefixGraph, _mask: &ActionMask, rng: &mut dyn RngCore) -> Action {
        let q = self.value_fn.q_values(g);
        select_action(&q, self.w, self.epsilon, rng).expect("caller checks for a legal action")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_action(a: Objectives, b: Objectives) -> QValues {
        QValues::from_actions(4, &[(Action::add(2, 1), a), (Action::add(3, 2), b)])
    }

    #[test]
    fn masked_entries_are_neg_infinity() {
        let q = two_action(Objectives::new(1.0, 0.0), Objectives::new(0.0, 2.0));
        assert_eq!(q.get(Action::add(3, 1)).area, f64::NEG_INFINITY);
        assert_eq!(q.get(Action::delete(2, 1)).delay, f64::NEG_INFINITY);
        assert_eq!(q.legal_actions(), vec![Action::add(2, 1), Action::add(3, 2)]);
    }

    #[test]
    fn double_target_hand_example() {
        let local = two_action(Objectives::new(1.0, 0.0), Objectives::new(0.0, 2.0));
        let target = two_action(Objectives::new(5.0, 5.0), Objectives::new(7.0, 7.0));
        let y = double_q_target(Objectives::new(1.0, 1.0), 0.75, ScalarWeight::default(), &local, &target);
        assert_eq!(y, Objectives::new(6.25, 6.25));
        let y0 = double_q_target(Objectives::new(1.0, 1.0), 0.0, ScalarWeight::default(), &local, &target);
        assert_eq!(y0, Objectives::new(1.0, 1.0));
    }

    #[test]
    fn ties_break_lexicographically() {
        let q = two_action(Objectives::new(1.0, 1.0), Objectives::new(1.0, 1.0));
        assert_eq!(q.greedy(ScalarWeight::default()), Some(Action::add(2, 1)));
    }

    #[test]
    fn greedy_ignores_weight_scale() {
        let q = two_action(Objectives::new(3.0, 0.0), Objectives::new(0.0, 2.0));
        for (a, d) in [(1.0, 1.0), (2.0, 2.0), (100.0, 100.0), (0.3, 0.7), (3.0, 7.0)] {
            let w = ScalarWeight::new(a, d).unwrap();
            let expect = if 3.0 * w.area() > 2.0 * w.delay() { Action::add(2, 1) } else { Action::add(3, 2) };
            assert_eq!(q.greedy(w), Some(expect));
        }
    }

    #[test]
    fn epsilon_one_is_uniform() {
        let q = QValues::from_actions(
            5,
            &[Action::add(2, 1), Action::add(4, 3), Action::delete(3, 1), Action::delete(4, 2)]
                .map(|a| (a, Objectives::new(a.msb as f64, 0.0))),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let legal = q.legal_actions();
        let mut counts = vec![0usize; legal.len()];
        let draws = 10_000;
        for _ in 0..draws {
            let a = select_action(&q, ScalarWeight::default(), 1.0, &mut rng).unwrap();
            counts[legal.iter().position(|&b| b == a).unwrap()] += 1;
        }
        let e = draws as f64 / legal.len() as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        // 3 degrees of freedom, 0.999 quantile
        assert!(chi2 < 16.27, "chi2 = {chi2}, counts = {counts:?}");
    }

    #[test]
    fn no_legal_action_gives_none() {
        let q = QValues::from_actions(4, &[]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(select_action(&q, ScalarWeight::default(), 0.5, &mut rng), None);
    }
}
