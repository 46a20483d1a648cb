//! Unit-node analytical cost model.
//!
//! Every non-input node costs 1.0 area. A node's output arrives
//! `1.0 + 0.5 * fanout` after the later of its two parents; inputs arrive
//! at 0. The circuit delay is the latest output arrival.

use crate::graph::{NodeId, PrefixGraph};
use crate::objectives::{CostPoint, Objectives};

use super::{CostCurve, CurveSample, EvalError, Evaluator, Scaling, Units};

pub const NODE_AREA: f64 = 1.0;

/// Delay charged to a node driving `fanout` children. The load penalty sits
/// on the driver rather than on its consumers.
pub fn node_delay(fanout: u32) -> f64 {
    1.0 + 0.5 * f64::from(fanout)
}

/// Unscaled (area, delay) of a legal graph.
pub fn analytical_raw(g: &PrefixGraph) -> Objectives {
    let n = g.width();
    let attrs = g.attrs();
    let mut arrival = vec![0.0f64; n * n];
    let mut delay = 0.0f64;
    for msb in 1..n {
        for lsb in (0..msb).rev() {
            let v = NodeId::new(msb, lsb);
            if !g.contains(v) {
                continue;
            }
            let up = g.upper_parent(v).expect("legal graph");
            let lp = g.lower_parent(v).expect("legal graph");
            let t = arrival[up.msb * n + up.lsb].max(arrival[lp.msb * n + lp.lsb])
                + node_delay(attrs.fanout(v));
            arrival[msb * n + lsb] = t;
            if lsb == 0 {
                delay = delay.max(t);
            }
        }
    }
    Objectives::new(NODE_AREA * g.non_input_count() as f64, delay)
}

pub fn analytical_cost(g: &PrefixGraph, scaling: Scaling) -> CostPoint {
    scaling.apply(analytical_raw(g))
}

/// In-process evaluator backed by [`analytical_raw`]; curves have one sample.
#[derive(Debug, Clone, Copy, Default)]
pub struct AnalyticalEvaluator {
    pub scaling: Scaling,
}

impl AnalyticalEvaluator {
    pub fn new(scaling: Scaling) -> Self {
        AnalyticalEvaluator { scaling }
    }
}

impl Evaluator for AnalyticalEvaluator {
    fn curve(&self, g: &PrefixGraph) -> Result<CostCurve, EvalError> {
        let raw = analytical_raw(g);
        CostCurve::new(vec![CurveSample { target: raw.delay, area: raw.area, delay: raw.delay }])
    }

    fn scaling(&self) -> Scaling {
        self.scaling
    }

    fn units(&self) -> Units {
        Units::analytical(self.scaling)
    }
}
