//! Turning prefix graphs into (area, delay) costs and rewards.
//!
//! Two backends implement [`Evaluator`]: the in-process analytical model and
//! an external subprocess protocol standing in for synthesis. Both produce a
//! [`CostCurve`]; the scalar cost of a design under weight `w` is the
//! w-optimal point of its curve, in scaled units.

mod analytical;
mod cache;
mod curve;
mod external;

use std::collections::HashMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{GraphKey, PrefixGraph};
use crate::objectives::{CostPoint, Objectives, Reward, ScalarWeight};

pub use analytical::{analytical_cost, analytical_raw, node_delay, AnalyticalEvaluator, NODE_AREA};
pub use cache::CurveCache;
pub use curve::{
    interpolate, tradeoff_frontier, w_optimal, w_optimal_weighted, CostCurve, CurveSample, Pchip,
};
pub use external::{parse_response, ExternalEvaluator};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("empty sample set")]
    EmptyCurve,
    #[error("non-finite cost sample")]
    NonFinite,
    #[error("malformed evaluator response ({reason}); raw output:\n{output}")]
    Malformed { reason: String, output: String },
    #[error("evaluator returned no result for delay target {target}; raw output:\n{output}")]
    MissingTarget { target: f64, output: String },
    #[error("failed to launch evaluator `{command}`: {reason}")]
    Spawn { command: String, reason: String },
    #[error("evaluator exited with status {status:?}; stdout:\n{stdout}\nstderr:\n{stderr}")]
    NonZeroExit { status: Option<i32>, stdout: String, stderr: String },
    #[error("evaluator timed out after {secs}s; partial output:\n{output}")]
    Timeout { secs: f64, output: String },
    #[error("invalid evaluation config: {0}")]
    Config(String),
    #[error("cache file: {0}")]
    Cache(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for EvalError {
    fn from(e: std::io::Error) -> Self {
        EvalError::Io(e.to_string())
    }
}

/// Multipliers bringing raw area and delay onto comparable scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub c_area: f64,
    pub c_delay: f64,
}

impl Scaling {
    pub const UNIT: Scaling = Scaling { c_area: 1.0, c_delay: 1.0 };
    /// Defaults for synthesized (external) metrics.
    pub const SYNTHESIS: Scaling = Scaling { c_area: 0.001, c_delay: 10.0 };

    pub fn apply(self, raw: Objectives) -> Objectives {
        Objectives::new(raw.area * self.c_area, raw.delay * self.c_delay)
    }
}

impl Default for Scaling {
    fn default() -> Self {
        Scaling::UNIT
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    #[default]
    Analytical,
    External,
}

/// What a cost number means; only costs with equal units are comparable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Units {
    pub mode: EvalMode,
    pub scaling: Scaling,
}

impl Units {
    pub fn analytical(scaling: Scaling) -> Self {
        Units { mode: EvalMode::Analytical, scaling }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub mode: EvalMode,
    /// Raw delay constraints handed to the external evaluator.
    pub delay_targets: Vec<f64>,
    /// Defaults to unit scaling (analytical) or (0.001, 10) (external).
    pub scaling: Option<Scaling>,
    pub cache_path: Option<PathBuf>,
    pub worker_count: usize,
    /// Program and leading arguments of the external evaluator.
    pub command: Vec<String>,
    pub timeout_secs: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            mode: EvalMode::Analytical,
            delay_targets: Vec::new(),
            scaling: None,
            cache_path: None,
            worker_count: 1,
            command: Vec::new(),
            timeout_secs: 120.0,
        }
    }
}

impl EvalConfig {
    pub fn scaling(&self) -> Scaling {
        self.scaling.unwrap_or(match self.mode {
            EvalMode::Analytical => Scaling::UNIT,
            EvalMode::External => Scaling::SYNTHESIS,
        })
    }

    pub fn units(&self) -> Units {
        Units { mode: self.mode, scaling: self.scaling() }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.worker_count == 0 {
            return Err(EvalError::Config("worker_count must be at least 1".into()));
        }
        let s = self.scaling();
        if !(s.c_area > 0.0 && s.c_delay > 0.0 && s.c_area.is_finite() && s.c_delay.is_finite()) {
            return Err(EvalError::Config("scaling constants must be finite and positive".into()));
        }
        if self.mode == EvalMode::External {
            if self.delay_targets.is_empty() {
                return Err(EvalError::Config("external mode needs at least one delay target".into()));
            }
            if self.delay_targets.iter().any(|t| !t.is_finite() || *t <= 0.0) {
                return Err(EvalError::Config("delay targets must be finite and positive".into()));
            }
            if self.command.is_empty() {
                return Err(EvalError::Config("external mode needs an evaluator command".into()));
            }
            if !(self.timeout_secs > 0.0) {
                return Err(EvalError::Config("timeout must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Counters accumulated by an evaluator over its lifetime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EvalStats {
    pub requests: usize,
    pub hits: usize,
    pub invocations: usize,
}

impl EvalStats {
    pub fn hit_ratio(&self) -> f64 {
        if self.requests == 0 {
            0.0
        } else {
            self.hits as f64 / self.requests as f64
        }
    }
}

/// Outcome of [`Evaluator::evaluate_batch`]; failures are per key.
#[derive(Debug, Clone, Default)]
pub struct BatchResult {
    pub curves: HashMap<GraphKey, CostCurve>,
    pub errors: Vec<(GraphKey, EvalError)>,
    pub requested: usize,
    pub unique: usize,
    pub invocations: usize,
}

impl BatchResult {
    /// Fraction of requests answered without running the evaluator.
    pub fn hit_ratio(&self) -> f64 {
        if self.requested == 0 {
            0.0
        } else {
            1.0 - self.invocations as f64 / self.requested as f64
        }
    }
}

pub trait Evaluator: Send + Sync {
    fn curve(&self, g: &PrefixGraph) -> Result<CostCurve, EvalError>;

    fn scaling(&self) -> Scaling;

    fn units(&self) -> Units;

    /// Scaled w-optimal cost of the design.
    fn cost(&self, g: &PrefixGraph, w: ScalarWeight) -> Result<CostPoint, EvalError> {
        Ok(w_optimal(&self.curve(g)?, w, self.scaling()))
    }

    /// The design's non-dominated curve points in scaled units.
    fn points(&self, g: &PrefixGraph) -> Result<Vec<CostPoint>, EvalError> {
        let s = self.scaling();
        Ok(self.curve(g)?.frontier().into_iter().map(|p| s.apply(p)).collect())
    }

    fn evaluate_batch(&self, graphs: &[PrefixGraph]) -> BatchResult {
        let mut out = BatchResult { requested: graphs.len(), ..Default::default() };
        for g in graphs {
            let key = g.canonical_key();
            if out.curves.contains_key(&key) || out.errors.iter().any(|(k, _)| *k == key) {
                continue;
            }
            out.unique += 1;
            out.invocations += 1;
            match self.curve(g) {
                Ok(c) => {
                    out.curves.insert(key, c);
                }
                Err(e) => out.errors.push((key, e)),
            }
        }
        out
    }

    fn stats(&self) -> EvalStats {
        EvalStats::default()
    }
}

/// Componentwise decrease in scaled cost from `prev` to `next`.
pub fn reward(
    prev: &PrefixGraph,
    next: &PrefixGraph,
    w: ScalarWeight,
    evaluator: &dyn Evaluator,
) -> Result<Reward, EvalError> {
    Ok(evaluator.cost(prev, w)? - evaluator.cost(next, w)?)
}

pub fn build_evaluator(cfg: &EvalConfig) -> Result<Box<dyn Evaluator>, EvalError> {
    cfg.validate()?;
    Ok(match cfg.mode {
        EvalMode::Analytical => Box::new(AnalyticalEvaluator::new(cfg.scaling())),
        EvalMode::External => Box::new(ExternalEvaluator::new(cfg.clone())?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{step, Action};

    #[test]
    fn reward_examples() {
        let eval = AnalyticalEvaluator::default();
        let w = ScalarWeight::default();
        let r4 = PrefixGraph::ripple(4).unwrap();
        assert_eq!(reward(&r4, &r4, w, &eval).unwrap(), Objectives::ZERO);
        let next = step(&r4, Action::add(3, 2)).unwrap();
        // next is the Sklansky graph: cost (4, 3) against ripple's (3, 4)
        assert_eq!(reward(&r4, &next, w, &eval).unwrap(), Objectives::new(-1.0, 1.0));
    }

    #[test]
    fn config_validation() {
        assert!(EvalConfig::default().validate().is_ok());
        let ext = EvalConfig { mode: EvalMode::External, ..Default::default() };
        assert!(matches!(ext.validate(), Err(EvalError::Config(_))));
        let ext = EvalConfig {
            mode: EvalMode::External,
            delay_targets: vec![0.3],
            command: vec!["true".into()],
            ..Default::default()
        };
        assert!(ext.validate().is_ok());
        assert_eq!(ext.scaling(), Scaling::SYNTHESIS);
        let zero = EvalConfig { worker_count: 0, ..Default::default() };
        assert!(zero.validate().is_err());
    }

    #[test]
    fn default_batch_dedups() {
        let eval = AnalyticalEvaluator::default();
        let g = PrefixGraph::sklansky(8).unwrap();
        let batch = eval.evaluate_batch(&vec![g.clone(); 10]);
        assert_eq!(batch.unique, 1);
        assert_eq!(batch.invocations, 1);
        assert!((batch.hit_ratio() - 0.9).abs() < 1e-12);
    }
}
