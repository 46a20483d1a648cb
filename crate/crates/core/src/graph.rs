//! N-input prefix graphs on the (msb, lsb) grid.
//!
//! A node `(i, j)` computes `x_i ∘ … ∘ x_j`. Inputs sit on the diagonal,
//! outputs in column 0. Parents are never stored: the upper parent of a node
//! is the nearest existing node in the same row with a larger lsb, and the
//! lower parent is the position `(lsb(up) - 1, lsb)`. A graph is legal when
//! every inputs/outputs node exists and every non-input node's lower parent
//! exists.
//!
//! Rows are kept as `u64` bitsets, so widths are limited to 64.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const MIN_WIDTH: usize = 2;
pub const MAX_WIDTH: usize = 64;

/// Grid coordinate of a prefix node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId {
    pub msb: usize,
    pub lsb: usize,
}

impl NodeId {
    pub const fn new(msb: usize, lsb: usize) -> Self {
        NodeId { msb, lsb }
    }

    pub fn is_input(self) -> bool {
        self.msb == self.lsb
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.msb, self.lsb)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("width {0} outside supported range {MIN_WIDTH}..={MAX_WIDTH}")]
    WidthOutOfRange(usize),
    #[error("node {node} is not a grid position of a {n}-input graph")]
    OutOfGrid { node: NodeId, n: usize },
    #[error("illegal prefix graph: {0}")]
    Illegal(#[from] Violation),
    #[error("malformed graph document: {0}")]
    Parse(String),
}

/// First legality constraint found broken by [`NodeSet::validate`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("missing input node {0}")]
    MissingInput(NodeId),
    #[error("missing output node {0}")]
    MissingOutput(NodeId),
    #[error("node {0} has no upper parent")]
    MissingUpperParent(NodeId),
    #[error("node {node} is missing its lower parent {lower}")]
    MissingLowerParent { node: NodeId, lower: NodeId },
    #[error("minlist is inconsistent at {0}")]
    MinlistMismatch(NodeId),
}

pub(crate) fn check_width(n: usize) -> Result<(), GraphError> {
    if (MIN_WIDTH..=MAX_WIDTH).contains(&n) {
        Ok(())
    } else {
        Err(GraphError::WidthOutOfRange(n))
    }
}

#[inline]
fn bit(l: usize) -> u64 {
    1u64 << l
}

/// Bits strictly above position `l`.
#[inline]
fn above(l: usize) -> u64 {
    if l >= 63 {
        0
    } else {
        !0u64 << (l + 1)
    }
}

/// Upper parent lsb of `(msb, lsb)` given the contents of row `msb`.
#[inline]
pub(crate) fn upper_lsb_in_row(row: u64, lsb: usize) -> Option<usize> {
    let higher = row & above(lsb);
    (higher != 0).then(|| higher.trailing_zeros() as usize)
}

/// A raw, possibly illegal, set of grid nodes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NodeSet {
    n: usize,
    rows: Vec<u64>,
}

impl NodeSet {
    pub fn empty(n: usize) -> Result<Self, GraphError> {
        check_width(n)?;
        Ok(NodeSet { n, rows: vec![0; n] })
    }

    /// The mandatory skeleton: inputs `(i,i)` and outputs `(i,0)`.
    pub fn skeleton(n: usize) -> Result<Self, GraphError> {
        let mut set = Self::empty(n)?;
        for i in 0..n {
            set.rows[i] = bit(i) | 1;
        }
        Ok(set)
    }

    pub fn width(&self) -> usize {
        self.n
    }

    pub fn in_grid(&self, node: NodeId) -> bool {
        node.msb < self.n && node.lsb <= node.msb
    }

    fn check(&self, node: NodeId) -> Result<(), GraphError> {
        if self.in_grid(node) {
            Ok(())
        } else {
            Err(GraphError::OutOfGrid { node, n: self.n })
        }
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.in_grid(node) && self.rows[node.msb] & bit(node.lsb) != 0
    }

    /// Returns whether the node was newly inserted.
    pub fn insert(&mut self, node: NodeId) -> Result<bool, GraphError> {
        self.check(node)?;
        let fresh = !self.contains(node);
        self.rows[node.msb] |= bit(node.lsb);
        Ok(fresh)
    }

    pub fn remove(&mut self, node: NodeId) -> bool {
        let present = self.contains(node);
        if present {
            self.rows[node.msb] &= !bit(node.lsb);
        }
        present
    }

    pub fn row(&self, msb: usize) -> u64 {
        self.rows[msb]
    }

    pub(crate) fn set_row(&mut self, msb: usize, row: u64) {
        debug_assert_eq!(row & above(msb), 0);
        self.rows[msb] = row;
    }

    pub fn len(&self) -> usize {
        self.rows.iter().map(|r| r.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.iter().all(|&r| r == 0)
    }

    /// Nodes in ascending `(msb, lsb)` order.
    pub fn iter(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.rows.iter().enumerate().flat_map(|(msb, &row)| {
            BitIter(row).map(move |lsb| NodeId::new(msb, lsb))
        })
    }

    pub fn union_with(&mut self, other: &NodeSet) {
        debug_assert_eq!(self.n, other.n);
        for (a, b) in self.rows.iter_mut().zip(&other.rows) {
            *a |= *b;
        }
    }

    pub fn difference_with(&mut self, other: &NodeSet) {
        debug_assert_eq!(self.n, other.n);
        for (a, b) in self.rows.iter_mut().zip(&other.rows) {
            *a &= !*b;
        }
    }

    pub fn upper_parent(&self, node: NodeId) -> Option<NodeId> {
        if node.is_input() || !self.in_grid(node) {
            return None;
        }
        upper_lsb_in_row(self.rows[node.msb], node.lsb).map(|k| NodeId::new(node.msb, k))
    }

    /// Position of the lower parent implied by the current upper parent.
    /// The position need not be a member of the set.
    pub fn lower_parent(&self, node: NodeId) -> Option<NodeId> {
        self.upper_parent(node)
            .map(|up| NodeId::new(up.lsb - 1, node.lsb))
    }

    /// Checks the prefix-graph legality constraints and reports the first
    /// violation in `(msb, lsb)` order: inputs, then outputs, then parents.
    pub fn validate(&self) -> Result<(), Violation> {
        for i in 0..self.n {
            let input = NodeId::new(i, i);
            if !self.contains(input) {
                return Err(Violation::MissingInput(input));
            }
        }
        for i in 1..self.n {
            let output = NodeId::new(i, 0);
            if !self.contains(output) {
                return Err(Violation::MissingOutput(output));
            }
        }
        for node in self.iter().filter(|v| !v.is_input()) {
            let Some(lower) = self.lower_parent(node) else {
                return Err(Violation::MissingUpperParent(node));
            };
            if !self.contains(lower) {
                return Err(Violation::MissingLowerParent { node, lower });
            }
        }
        Ok(())
    }

    /// Nodes that are the lower parent of some member.
    pub fn lower_parents(&self) -> NodeSet {
        let mut lps = NodeSet { n: self.n, rows: vec![0; self.n] };
        for node in self.iter().filter(|v| !v.is_input()) {
            if let Some(lp) = self.lower_parent(node) {
                if lp.msb < self.n {
                    lps.rows[lp.msb] |= bit(lp.lsb);
                }
            }
        }
        lps
    }
}

struct BitIter(u64);

impl Iterator for BitIter {
    type Item = usize;
    fn next(&mut self) -> Option<usize> {
        if self.0 == 0 {
            return None;
        }
        let l = self.0.trailing_zeros() as usize;
        self.0 &= self.0 - 1;
        Some(l)
    }
}

/// Level and fanout of one node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeAttrs {
    pub level: u32,
    pub fanout: u32,
}

/// Per-node derived attributes, stored densely over the grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphAttrs {
    n: usize,
    level: Vec<u32>,
    fanout: Vec<u32>,
    present: Vec<bool>,
}

impl GraphAttrs {
    fn idx(&self, node: NodeId) -> usize {
        node.msb * self.n + node.lsb
    }

    pub fn get(&self, node: NodeId) -> Option<NodeAttrs> {
        if node.msb >= self.n || node.lsb > node.msb {
            return None;
        }
        let i = self.idx(node);
        self.present[i].then(|| NodeAttrs { level: self.level[i], fanout: self.fanout[i] })
    }

    pub fn level(&self, node: NodeId) -> u32 {
        self.get(node).map_or(0, |a| a.level)
    }

    pub fn fanout(&self, node: NodeId) -> u32 {
        self.get(node).map_or(0, |a| a.fanout)
    }

    pub fn max_level(&self) -> u32 {
        self.level.iter().copied().max().unwrap_or(0)
    }
}

/// A legal N-input prefix graph. Immutable; operations return new graphs.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PrefixGraph {
    nodes: NodeSet,
    minlist: NodeSet,
}

impl PrefixGraph {
    /// Validates `nodes` and derives the minlist.
    pub fn from_nodes(nodes: NodeSet) -> Result<Self, GraphError> {
        check_width(nodes.n)?;
        nodes.validate()?;
        let minlist = minlist_of(&nodes);
        Ok(PrefixGraph { nodes, minlist })
    }

    /// Builds a graph from its optional nodes; inputs and outputs are implied.
    pub fn from_optional<I>(n: usize, optional: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = NodeId>,
    {
        let mut nodes = NodeSet::skeleton(n)?;
        for node in optional {
            nodes.insert(node)?;
        }
        Self::from_nodes(nodes)
    }

    pub(crate) fn from_parts_unchecked(nodes: NodeSet, minlist: NodeSet) -> Self {
        debug_assert!(nodes.validate().is_ok());
        PrefixGraph { nodes, minlist }
    }

    /// Minimum-node structure: only the mandatory outputs.
    pub fn ripple(n: usize) -> Result<Self, GraphError> {
        Self::from_nodes(NodeSet::skeleton(n)?)
    }

    /// Recursive-doubling structure with `ceil(log2 n)` levels.
    pub fn sklansky(n: usize) -> Result<Self, GraphError> {
        let mut nodes = NodeSet::skeleton(n)?;
        let mut t = 0;
        while (1usize << t) < n {
            for i in 0..n {
                if (i >> t) & 1 == 1 {
                    nodes.insert(NodeId::new(i, (i >> (t + 1)) << (t + 1)))?;
                }
            }
            t += 1;
        }
        Self::from_nodes(nodes)
    }

    /// Minimum-level structure where every level combines spans of `2^t`.
    pub fn kogge_stone(n: usize) -> Result<Self, GraphError> {
        let mut nodes = NodeSet::skeleton(n)?;
        let mut t = 0;
        while (1usize << t) < n {
            let span = 1usize << (t + 1);
            for i in (1usize << t)..n {
                nodes.insert(NodeId::new(i, (i + 1).saturating_sub(span)))?;
            }
            t += 1;
        }
        Self::from_nodes(nodes)
    }

    /// Up-sweep of aligned power-of-two blocks followed by a sparse
    /// down-sweep; the down-sweep nodes are the outputs themselves.
    pub fn brent_kung(n: usize) -> Result<Self, GraphError> {
        let mut nodes = NodeSet::skeleton(n)?;
        for i in 0..n {
            let tz = (i + 1).trailing_zeros();
            for s in 1..=tz {
                nodes.insert(NodeId::new(i, i + 1 - (1usize << s)))?;
            }
        }
        Self::from_nodes(nodes)
    }

    pub fn width(&self) -> usize {
        self.nodes.n
    }

    pub fn nodes(&self) -> &NodeSet {
        &self.nodes
    }

    pub fn minlist(&self) -> &NodeSet {
        &self.minlist
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.nodes.contains(node)
    }

    pub fn in_minlist(&self, node: NodeId) -> bool {
        self.minlist.contains(node)
    }

    pub fn is_input(&self, node: NodeId) -> bool {
        node.is_input()
    }

    /// True for the mandatory positions: inputs and column-0 outputs.
    pub fn is_fixed(&self, node: NodeId) -> bool {
        node.is_input() || node.lsb == 0
    }

    pub fn upper_parent(&self, node: NodeId) -> Option<NodeId> {
        self.nodes.upper_parent(node).filter(|_| self.contains(node))
    }

    pub fn lower_parent(&self, node: NodeId) -> Option<NodeId> {
        self.nodes.lower_parent(node).filter(|_| self.contains(node))
    }

    /// Operator nodes, i.e. everything off the diagonal.
    pub fn non_input_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().filter(|v| !v.is_input())
    }

    pub fn non_input_count(&self) -> usize {
        self.nodes.len() - self.width()
    }

    /// Present nodes that are neither inputs nor outputs.
    pub fn optional_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().filter(|v| !v.is_input() && v.lsb != 0)
    }

    pub fn attrs(&self) -> GraphAttrs {
        let n = self.width();
        let mut attrs = GraphAttrs {
            n,
            level: vec![0; n * n],
            fanout: vec![0; n * n],
            present: vec![false; n * n],
        };
        for msb in 0..n {
            let row = self.nodes.row(msb);
            // descending lsb so the upper parent is done before its child
            for lsb in (0..=msb).rev().filter(|&l| row & bit(l) != 0) {
                let v = NodeId::new(msb, lsb);
                let i = attrs.idx(v);
                attrs.present[i] = true;
                if v.is_input() {
                    continue;
                }
                let up = self.nodes.upper_parent(v).expect("legal graph");
                let lp = NodeId::new(up.lsb - 1, lsb);
                let (iu, il) = (attrs.idx(up), attrs.idx(lp));
                attrs.level[i] = 1 + attrs.level[iu].max(attrs.level[il]);
                attrs.fanout[iu] += 1;
                attrs.fanout[il] += 1;
            }
        }
        attrs
    }

    /// Re-checks legality and that the stored minlist matches its definition.
    pub fn validate(&self) -> Result<(), Violation> {
        self.nodes.validate()?;
        let expected = minlist_of(&self.nodes);
        if let Some(node) = expected
            .iter()
            .find(|&v| !self.minlist.contains(v))
            .or_else(|| self.minlist.iter().find(|&v| !expected.contains(v)))
        {
            return Err(Violation::MinlistMismatch(node));
        }
        Ok(())
    }

    pub fn to_doc(&self) -> GraphDoc {
        GraphDoc {
            n: self.width(),
            nodes: self.optional_nodes().map(|v| [v.msb, v.lsb]).collect(),
        }
    }

    pub fn from_doc(doc: &GraphDoc) -> Result<Self, GraphError> {
        Self::from_optional(doc.n, doc.nodes.iter().map(|&[m, l]| NodeId::new(m, l)))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_doc()).expect("graph documents always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        let doc: GraphDoc =
            serde_json::from_str(text).map_err(|e| GraphError::Parse(e.to_string()))?;
        Self::from_doc(&doc)
    }

    /// Digest of the canonical document; equal iff width and nodes are equal.
    pub fn canonical_key(&self) -> GraphKey {
        let digest = Sha256::digest(self.to_json().as_bytes());
        GraphKey(hex::encode(&digest[..16]))
    }
}

/// Definitional minlist: members that are no node's lower parent.
pub(crate) fn minlist_of(nodes: &NodeSet) -> NodeSet {
    let mut min = nodes.clone();
    min.difference_with(&nodes.lower_parents());
    min
}

/// Serialized form: width plus sorted optional node coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphDoc {
    pub n: usize,
    pub nodes: Vec<[usize; 2]>,
}

/// Stable content digest of a graph, hex encoded.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GraphKey(pub String);

impl fmt::Display for GraphKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// The regular structures used as episode starts and baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    Ripple,
    Sklansky,
    KoggeStone,
    BrentKung,
}

impl Structure {
    pub const ALL: [Structure; 4] =
        [Structure::Ripple, Structure::Sklansky, Structure::KoggeStone, Structure::BrentKung];

    pub fn build(self, n: usize) -> Result<PrefixGraph, GraphError> {
        match self {
            Structure::Ripple => PrefixGraph::ripple(n),
            Structure::Sklansky => PrefixGraph::sklansky(n),
            Structure::KoggeStone => PrefixGraph::kogge_stone(n),
            Structure::BrentKung => PrefixGraph::brent_kung(n),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Structure::Ripple => "ripple",
            Structure::Sklansky => "sklansky",
            Structure::KoggeStone => "kogge_stone",
            Structure::BrentKung => "brent_kung",
        }
    }
}
