//! Simulated annealing over the environment's own action set.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{self, mask, Action};
use crate::eval::Evaluator;
use crate::graph::PrefixGraph;
use crate::objectives::{Objectives, ScalarWeight};

use super::TrainError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SAConfig {
    pub n: usize,
    pub initial_temperature: f64,
    /// Geometric cooling factor in (0, 1).
    pub cooling: f64,
    pub steps_per_temperature: usize,
    pub total_steps: usize,
    pub w: ScalarWeight,
    pub seed: u64,
}

impl Default for SAConfig {
    fn default() -> Self {
        SAConfig {
            n: 8,
            initial_temperature: 1.0,
            cooling: 0.95,
            steps_per_temperature: 100,
            total_steps: 10_000,
            w: ScalarWeight::default(),
            seed: 0,
        }
    }
}

impl SAConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.initial_temperature >= 0.0 && self.initial_temperature.is_finite()) {
            return Err(TrainError::Config("initial_temperature must be finite and non-negative".into()));
        }
        if !(self.cooling > 0.0 && self.cooling < 1.0) {
            return Err(TrainError::Config("cooling must lie in (0, 1)".into()));
        }
        if self.steps_per_temperature == 0 {
            return Err(TrainError::Config("steps_per_temperature must be at least 1".into()));
        }
        PrefixGraph::ripple(self.n).map_err(env::EnvError::from)?;
        if env::action_space_size(self.n) == 0 {
            return Err(TrainError::Config("width has no optional positions to act on".into()));
        }
        Ok(())
    }

    pub fn temperature(&self, step: usize) -> f64 {
        self.initial_temperature * self.cooling.powi((step / self.steps_per_temperature) as i32)
    }
}

/// Metropolis acceptance probability for a scalar cost change.
pub(crate) fn acceptance(delta: f64, temperature: f64) -> f64 {
    if delta <= 0.0 {
        1.0
    } else if temperature <= 0.0 {
        0.0
    } else {
        (-delta / temperature).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealStep {
    pub step: usize,
    pub temperature: f64,
    pub action: Action,
    pub accepted: bool,
    /// Cost of the current state after the decision.
    pub cost: Objectives,
    pub scalar: f64,
}

#[derive(Debug, Clone)]
pub struct AnnealOutcome {
    pub best: PrefixGraph,
    pub best_cost: Objectives,
    pub best_scalar: f64,
    pub trajectory: Vec<AnnealStep>,
    /// Every distinct state accepted along the way, with its cost.
    pub visited: Vec<(PrefixGraph, Objectives)>,
}

pub fn anneal(cfg: &SAConfig, evaluator: &dyn Evaluator) -> Result<AnnealOutcome, TrainError> {
    cfg.validate()?;
    let w = cfg.w;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut cur = env::reset(cfg.n, &mut rng).map_err(env::EnvError::from)?;
    let mut cur_cost = evaluator.cost(&cur, w)?;
    let mut cur_scalar = w.scalarize(cur_cost);
    let mut best = (cur.clone(), cur_cost, cur_scalar);
    let mut visited = vec![(cur.clone(), cur_cost)];
    let mut trajectory = Vec::with_capacity(cfg.total_steps);

    for step in 0..cfg.total_steps {
        let temperature = cfg.temperature(step);
        let action = mask(&cur).sample(&mut rng).ok_or(env::EnvError::NoLegalAction(cfg.n))?;
        let next = env::step(&cur, action)?;
        let next_cost = evaluator.cost(&next, w)?;
        let next_scalar = w.scalarize(next_cost);
        let p = acceptance(next_scalar - cur_scalar, temperature);
        let accepted = p >= 1.0 || rng.random::<f64>() < p;
        if accepted {
            cur = next;
            cur_cost = next_cost;
            cur_scalar = next_scalar;
            if cur_scalar < best.2 {
                best = (cur.clone(), cur_cost, cur_scalar);
            }
            if !visited.iter().any(|(g, _)| *g == cur) {
                visited.push((cur.clone(), cur_cost));
            }
        }
        trajectory.push(AnnealStep { step, temperature, action, accepted, cost: cur_cost, scalar: cur_scalar });
    }
    Ok(AnnealOutcome { best: best.0, best_cost: best.1, best_scalar: best.2, trajectory, visited })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::AnalyticalEvaluator;

    #[test]
    fn metropolis_rule() {
        assert_eq!(acceptance(-1.0, 0.0), 1.0);
        assert_eq!(acceptance(0.0, 0.0), 1.0);
        assert_eq!(acceptance(1.0, 0.0), 0.0);
        assert!((acceptance(1.0, 1.0) - (-1.0f64).exp()).abs() < 1e-15);
        let p = acceptance(0.3, 2.0);
        assert!(p > 0.0 && p <= 1.0);
    }

    #[test]
    fn temperature_is_geometric() {
        let cfg = SAConfig { initial_temperature: 2.0, cooling: 0.5, steps_per_temperature: 10, ..Default::default() };
        assert_eq!(cfg.temperature(0), 2.0);
        assert_eq!(cfg.temperature(9), 2.0);
        assert_eq!(cfg.temperature(10), 1.0);
        assert_eq!(cfg.temperature(35), 0.25);
    }

    #[test]
    fn near_zero_temperature_never_worsens() {
        let cfg = SAConfig { n: 8, initial_temperature: 1e-9, total_steps: 2000, seed: 3, ..Default::default() };
        let out = anneal(&cfg, &AnalyticalEvaluator::default()).unwrap();
        for w in out.trajectory.windows(2) {
            assert!(w[1].scalar <= w[0].scalar);
        }
    }

    #[test]
    fn area_weight_finds_minimum_area() {
        let cfg = SAConfig {
            n: 6,
            w: ScalarWeight::new(1.0, 0.0).unwrap(),
            total_steps: 10_000,
            seed: 1,
            ..Default::default()
        };
        let out = anneal(&cfg, &AnalyticalEvaluator::default()).unwrap();
        assert_eq!(out.best_cost.area, 5.0);
    }
}
