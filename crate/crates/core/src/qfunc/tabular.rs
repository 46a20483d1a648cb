//! Table-backed Q-function for small widths.

use std::collections::HashMap;

use crate::env::{mask, Action, ActionKind};
use crate::graph::{NodeSet, PrefixGraph};
use crate::objectives::Objectives;

use super::{QValues, Sample, ValueFunction, Q_CHANNELS};

type Table = HashMap<NodeSet, Vec<f64>>;

/// Stores one `(area, delay)` pair per visited (state, action); unvisited
/// entries read as zero. Updates move each entry a fraction `alpha` of the
/// way toward its target.
#[derive(Debug, Clone)]
pub struct TabularQ {
    n: usize,
    alpha: f64,
    local: Table,
    target: Table,
}

impl TabularQ {
    pub fn new(n: usize, alpha: f64) -> Self {
        TabularQ { n, alpha, local: HashMap::new(), target: HashMap::new() }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Number of states with at least one stored entry.
    pub fn visited_states(&self) -> usize {
        self.local.len()
    }

    fn index(&self, a: Action) -> usize {
        let c = match a.kind {
            ActionKind::Add => 0,
            ActionKind::Delete => 2,
        };
        (a.msb * self.n + a.lsb) * Q_CHANNELS + c
    }

    /// Raw stored value, ignoring legality.
    pub fn value(&self, g: &PrefixGraph, a: Action) -> Objectives {
        let i = self.index(a);
        self.local.get(g.nodes()).map_or(Objectives::ZERO, |row| Objectives::new(row[i], row[i + 1]))
    }

    fn lookup(&self, table: &Table, g: &PrefixGraph) -> QValues {
        let data = table.get(g.nodes()).cloned().unwrap_or_else(|| vec![0.0; self.n * self.n * Q_CHANNELS]);
        QValues::from_raw(mask(g), data).expect("table rows have the grid size")
    }
}

impl ValueFunction for TabularQ {
    fn width(&self) -> usize {
        self.n
    }

    fn q_values(&self, g: &PrefixGraph) -> QValues {
        self.lookup(&self.local, g)
    }

    fn target_q_values(&self, g: &PrefixGraph) -> QValues {
        self.lookup(&self.target, g)
    }

    fn train_step(&mut self, batch: &[Sample<'_>]) -> Objectives {
        if batch.is_empty() {
            return Objectives::ZERO;
        }
        let size = self.n * self.n * Q_CHANNELS;
        let mut sq = Objectives::ZERO;
        for s in batch {
            let i = self.index(s.action);
            let row = self.local.entry(s.state.nodes().clone()).or_insert_with(|| vec![0.0; size]);
            let err = Objectives::new(s.target.area - row[i], s.target.delay - row[i + 1]);
            sq = sq + Objectives::new(err.area * err.area, err.delay * err.delay);
            row[i] += self.alpha * err.area;
            row[i + 1] += self.alpha * err.delay;
        }
        sq * (1.0 / batch.len() as f64)
    }

    fn sync_target(&mut self) {
        self.target.clone_from(&self.local);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unvisited_is_zero() {
        let q = TabularQ::new(4, 0.5);
        let g = PrefixGraph::ripple(4).unwrap();
        assert_eq!(q.q_values(&g).get(Action::add(3, 2)), Objectives::ZERO);
        assert_eq!(q.value(&g, Action::add(2, 1)), Objectives::ZERO);
    }

    #[test]
    fn fixed_point_of_repeated_update() {
        let mut q = TabularQ::new(4, 0.3);
        let g = PrefixGraph::ripple(4).unwrap();
        let a = Action::add(3, 2);
        let target = Objectives::new(1.0, 0.0);
        for _ in 0..200 {
            q.train_step(&[Sample { state: &g, action: a, target }]);
        }
        let v = q.q_values(&g).get(a);
        assert!((v.area - 1.0).abs() < 1e-12 && v.delay.abs() < 1e-12);
    }

    #[test]
    fn target_lags_until_sync() {
        let mut q = TabularQ::new(4, 1.0);
        let g = PrefixGraph::ripple(4).unwrap();
        let a = Action::add(2, 1);
        q.train_step(&[Sample { state: &g, action: a, target: Objectives::new(2.0, 3.0) }]);
        assert_eq!(q.target_q_values(&g).get(a), Objectives::ZERO);
        q.sync_target();
        assert_eq!(q.target_q_values(&g).get(a), Objectives::new(2.0, 3.0));
    }
}
