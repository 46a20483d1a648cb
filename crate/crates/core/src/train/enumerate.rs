//! Exhaustive enumeration of legal prefix graphs for small widths.

use crate::env::optional_positions;
use crate::eval::{Evaluator, Units};
use crate::graph::{NodeSet, PrefixGraph};
use crate::objectives::Objectives;
use crate::pareto::{front_of_points, DesignRecord, ParetoFront, Source};

use super::TrainError;

/// Default width limit: 2^21 candidate subsets at n = 8.
pub const ENUMERATION_LIMIT: usize = 8;

#[derive(Debug, Clone)]
pub struct Enumeration {
    pub n: usize,
    pub units: Units,
    /// Every legal graph with its cost points, in subset order.
    pub designs: Vec<(PrefixGraph, Vec<Objectives>)>,
    pub front: ParetoFront,
}

impl Enumeration {
    pub fn records(&self) -> Vec<DesignRecord> {
        self.designs
            .iter()
            .map(|(g, pts)| DesignRecord::new(g, Source::Exhaustive, None, self.units.clone(), pts.clone()))
            .collect()
    }

    pub fn contains(&self, g: &PrefixGraph) -> bool {
        self.designs.iter().any(|(d, _)| d == g)
    }
}

pub fn enumerate(n: usize, evaluator: &dyn Evaluator) -> Result<Enumeration, TrainError> {
    enumerate_with_limit(n, evaluator, ENUMERATION_LIMIT)
}

/// Tries every subset of the optional positions joined with the input and
/// output nodes and keeps the ones whose parents all exist.
pub fn enumerate_with_limit(n: usize, evaluator: &dyn Evaluator, limit: usize) -> Result<Enumeration, TrainError> {
    if n > limit {
        return Err(TrainError::TooWide { n, limit });
    }
    let skeleton = NodeSet::skeleton(n).map_err(|e| TrainError::Config(e.to_string()))?;
    let positions: Vec<_> = optional_positions(n).collect();
    let mut designs = Vec::new();
    for subset in 0u64..(1u64 << positions.len()) {
        let mut nodes = skeleton.clone();
        let mut bits = subset;
        while bits != 0 {
            let v = positions[bits.trailing_zeros() as usize];
            nodes.set_row(v.msb, nodes.row(v.msb) | 1u64 << v.lsb);
            bits &= bits - 1;
        }
        if nodes.validate().is_err() {
            continue;
        }
        let g = PrefixGraph::from_nodes(nodes).expect("validated node set");
        let pts = evaluator.points(&g)?;
        designs.push((g, pts));
    }
    let units = evaluator.units();
    let front = front_of_points(
        Some(units.clone()),
        designs.iter().flat_map(|(g, pts)| {
            let key = g.canonical_key();
            pts.iter().map(move |p| (*p, key.clone()))
        }),
    );
    Ok(Enumeration { n, units, designs, front })
}
