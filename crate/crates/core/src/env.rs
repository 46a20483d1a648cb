//! The prefix-graph MDP: add/delete actions with legalization, action masks,
//! state tensors and fixed-horizon episodes.

use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{EvalError, Evaluator};
use crate::graph::{upper_lsb_in_row, GraphDoc, GraphError, GraphKey, NodeId, NodeSet, PrefixGraph};
use crate::objectives::{Reward, ScalarWeight};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Add,
    Delete,
}

/// Add or delete one optional grid position. Ordering is `(kind, msb, lsb)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Action {
    pub kind: ActionKind,
    pub msb: usize,
    pub lsb: usize,
}

impl Action {
    pub const fn add(msb: usize, lsb: usize) -> Self {
        Action { kind: ActionKind::Add, msb, lsb }
    }

    pub const fn delete(msb: usize, lsb: usize) -> Self {
        Action { kind: ActionKind::Delete, msb, lsb }
    }

    pub fn node(self) -> NodeId {
        NodeId::new(self.msb, self.lsb)
    }
}

impl std::fmt::Display for Action {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let k = match self.kind {
            ActionKind::Add => "add",
            ActionKind::Delete => "delete",
        };
        write!(f, "{k}({},{})", self.msb, self.lsb)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("redundant action {0}")]
    Redundant(Action),
    #[error("action {action} does not target an optional position of a {n}-input graph")]
    Malformed { action: Action, n: usize },
    #[error("no legal action exists for a {0}-input graph")]
    NoLegalAction(usize),
    #[error("policy chose masked action {0}")]
    PolicyChoseMasked(Action),
    #[error("max_steps must be at least 1")]
    ZeroHorizon,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("episode log: {0}")]
    Log(String),
}

/// Number of optional positions: `lsb ∈ [1, n-2]`, `msb ∈ [lsb+1, n-1]`.
pub fn action_space_size(n: usize) -> usize {
    if n < 2 {
        0
    } else {
        (n - 1) * (n - 2) / 2
    }
}

/// Default episode horizon: twice the number of optional positions.
pub fn default_horizon(n: usize) -> usize {
    (2 * action_space_size(n)).max(1)
}

/// Optional positions in ascending `(msb, lsb)` order.
pub fn optional_positions(n: usize) -> impl Iterator<Item = NodeId> {
    (2..n).flat_map(|msb| (1..msb).map(move |lsb| NodeId::new(msb, lsb)))
}

/// Bits `1..msb` of a row.
fn optional_row_mask(msb: usize) -> u64 {
    if msb < 2 {
        0
    } else {
        ((1u64 << (msb - 1)) - 1) << 1
    }
}

fn check_action(n: usize, a: Action) -> Result<(), EnvError> {
    if a.lsb >= 1 && a.msb > a.lsb && a.msb < n {
        Ok(())
    } else {
        Err(EnvError::Malformed { action: a, n })
    }
}

/// Per-position legality of add and delete.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionMask {
    n: usize,
    add: Vec<u64>,
    delete: Vec<u64>,
}

impl ActionMask {
    /// A mask on an `n`-input grid with exactly `actions` legal. Actions
    /// outside the optional positions are ignored.
    pub fn from_actions<I: IntoIterator<Item = Action>>(n: usize, actions: I) -> Self {
        let mut m = ActionMask { n, add: vec![0; n], delete: vec![0; n] };
        for a in actions {
            if check_action(n, a).is_ok() {
                let rows = match a.kind {
                    ActionKind::Add => &mut m.add,
                    ActionKind::Delete => &mut m.delete,
                };
                rows[a.msb] |= 1u64 << a.lsb;
            }
        }
        m
    }

    pub fn width(&self) -> usize {
        self.n
    }

    pub fn is_legal(&self, a: Action) -> bool {
        if check_action(self.n, a).is_err() {
            return false;
        }
        let rows = match a.kind {
            ActionKind::Add => &self.add,
            ActionKind::Delete => &self.delete,
        };
        rows[a.msb] >> a.lsb & 1 == 1
    }

    pub fn count(&self) -> usize {
        self.add.iter().chain(&self.delete).map(|r| r.count_ones() as usize).sum()
    }

    pub fn any(&self) -> bool {
        self.add.iter().chain(&self.delete).any(|&r| r != 0)
    }

    /// Legal actions in `(kind, msb, lsb)` order.
    pub fn legal_actions(&self) -> Vec<Action> {
        let mut out = Vec::with_capacity(self.count());
        for (kind, rows) in [(ActionKind::Add, &self.add), (ActionKind::Delete, &self.delete)] {
            for (msb, &row) in rows.iter().enumerate() {
                let mut r = row;
                while r != 0 {
                    let lsb = r.trailing_zeros() as usize;
                    out.push(Action { kind, msb, lsb });
                    r &= r - 1;
                }
            }
        }
        out
    }

    /// Uniformly random legal action.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Action> {
        let count = self.count();
        if count == 0 {
            return None;
        }
        let mut k = rng.random_range(0..count);
        for (kind, rows) in [(ActionKind::Add, &self.add), (ActionKind::Delete, &self.delete)] {
            for (msb, &row) in rows.iter().enumerate() {
                let c = row.count_ones() as usize;
                if k < c {
                    let mut r = row;
                    for _ in 0..k {
                        r &= r - 1;
                    }
                    return Some(Action { kind, msb, lsb: r.trailing_zeros() as usize });
                }
                k -= c;
            }
        }
        unreachable!("k < count")
    }
}

/// Adding is legal at absent positions, deleting only at minlist members.
pub fn mask(g: &PrefixGraph) -> ActionMask {
    let n = g.width();
    let mut add = vec![0; n];
    let mut delete = vec![0; n];
    for msb in 2..n {
        let opt = optional_row_mask(msb);
        add[msb] = opt & !g.nodes().row(msb);
        delete[msb] = opt & g.minlist().row(msb);
    }
    ActionMask { n, add, delete }
}

/// Rebuilds a legal node set from a seed set: inputs and outputs are added,
/// then rows are scanned from the top and missing lower parents inserted.
pub fn legalize(seed: &NodeSet) -> NodeSet {
    let n = seed.width();
    let mut nodes = NodeSet::skeleton(n).expect("width already checked");
    nodes.union_with(seed);
    for msb in (0..n).rev() {
        let row = nodes.row(msb);
        for lsb in (0..msb).rev() {
            if row >> lsb & 1 == 1 {
                let k = upper_lsb_in_row(row, lsb).expect("inputs are present");
                nodes.insert(NodeId::new(k - 1, lsb)).expect("lower parent is on the grid");
            }
        }
    }
    nodes
}

/// Applies a mask-legal action.
///
/// Add puts the node into the minlist and drops from it the lower parent of
/// every same-row minlist node at or below the new node, scanning lsb from
/// `msb-1` down to 0. Delete drops the node from the minlist. The node list
/// is then rebuilt by [`legalize`]. Finally any minlist member that ended up
/// as a lower parent (possible when a derived node in the row gets a new
/// upper parent) is removed so the minlist stays exactly the set of
/// non-lower-parents.
pub fn step(g: &PrefixGraph, a: Action) -> Result<PrefixGraph, EnvError> {
    let n = g.width();
    check_action(n, a)?;
    if !mask(g).is_legal(a) {
        return Err(EnvError::Redundant(a));
    }
    let seed = step_seed(g, a);
    let nodes = legalize(&seed);
    let mut minlist = seed;
    minlist.union_with(&NodeSet::skeleton(n).expect("valid width"));
    minlist.difference_with(&nodes.lower_parents());
    Ok(PrefixGraph::from_parts_unchecked(nodes, minlist))
}

/// Minlist after the bookkeeping part of an action, before legalization.
pub fn step_seed(g: &PrefixGraph, a: Action) -> NodeSet {
    let mut minlist = g.minlist().clone();
    let v = a.node();
    match a.kind {
        ActionKind::Add => {
            minlist.insert(v).expect("checked action");
            let row = g.nodes().row(v.msb) | 1u64 << v.lsb;
            for l in (0..v.msb).rev() {
                if minlist.contains(NodeId::new(v.msb, l)) {
                    if let Some(k) = upper_lsb_in_row(row, l) {
                        minlist.remove(NodeId::new(k - 1, l));
                    }
                }
            }
        }
        ActionKind::Delete => {
            minlist.remove(v);
        }
    }
    minlist
}

/// Uniform choice between the ripple-carry and Sklansky starts.
pub fn reset<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<PrefixGraph, GraphError> {
    if rng.random_bool(0.5) {
        PrefixGraph::ripple(n)
    } else {
        PrefixGraph::sklansky(n)
    }
}

pub const CHANNELS: usize = 4;

/// `4 × n × n` features, channel-major: node present, in minlist,
/// level / n, fanout / n (both clamped to 1).
#[derive(Debug, Clone, PartialEq)]
pub struct StateTensor {
    n: usize,
    data: Vec<f64>,
}

impl StateTensor {
    /// Wraps raw channel-major data of length `4 * n * n`.
    pub fn from_raw(n: usize, data: Vec<f64>) -> Option<Self> {
        (data.len() == CHANNELS * n * n).then_some(StateTensor { n, data })
    }

    pub fn width(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, msb: usize, lsb: usize, channel: usize) -> f64 {
        self.data[channel * self.n * self.n + msb * self.n + lsb]
    }
}

pub fn encode(g: &PrefixGraph) -> StateTensor {
    let n = g.width();
    let plane = n * n;
    let attrs = g.attrs();
    let mut data = vec![0.0; CHANNELS * plane];
    let norm = n as f64;
    for v in g.nodes().iter() {
        let i = v.msb * n + v.lsb;
        data[i] = 1.0;
        if g.in_minlist(v) {
            data[plane + i] = 1.0;
        }
        data[2 * plane + i] = (f64::from(attrs.level(v)) / norm).min(1.0);
        data[3 * plane + i] = (f64::from(attrs.fanout(v)) / norm).min(1.0);
    }
    StateTensor { n, data }
}

/// One environment step; the reward may be filled in later.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: PrefixGraph,
    pub action: Action,
    pub reward: Option<Reward>,
    pub next_state: PrefixGraph,
}

pub trait Policy {
    fn choose(&mut self, g: &PrefixGraph, mask: &ActionMask, rng: &mut dyn RngCore) -> Action;
}

/// Uniformly random legal actions.
#[derive(Debug, Clone, Copy, Default)]
pub struct RandomPolicy;

impl Policy for RandomPolicy {
    fn choose(&mut self, _g: &PrefixGraph, mask: &ActionMask, rng: &mut dyn RngCore) -> Action {
        mask.sample(rng).expect("caller checks for a legal action")
    }
}

/// Resets, then takes exactly `max_steps` policy actions, rewarding each
/// with the scaled w-optimal cost decrease.
pub fn run_episode<P: Policy + ?Sized>(
    policy: &mut P,
    n: usize,
    max_steps: usize,
    rng: &mut dyn RngCore,
    evaluator: &dyn Evaluator,
    w: ScalarWeight,
) -> Result<Vec<Transition>, EnvError> {
    if max_steps == 0 {
        return Err(EnvError::ZeroHorizon);
    }
    let mut state = reset(n, rng)?;
    let mut cost = evaluator.cost(&state, w)?;
    let mut out = Vec::with_capacity(max_steps);
    for _ in 0..max_steps {
        let m = mask(&state);
        if !m.any() {
            return Err(EnvError::NoLegalAction(n));
        }
        let action = policy.choose(&state, &m, rng);
        if !m.is_legal(action) {
            return Err(EnvError::PolicyChoseMasked(action));
        }
        let next = step(&state, action)?;
        let next_cost = evaluator.cost(&next, w)?;
        out.push(Transition {
            state: std::mem::replace(&mut state, next.clone()),
            action,
            reward: Some(cost - next_cost),
            next_state: next,
        });
        cost = next_cost;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TransitionRecord {
    state: GraphKey,
    action: Action,
    reward: Option<[f64; 2]>,
    next_state: GraphKey,
    state_graph: GraphDoc,
    next_graph: GraphDoc,
}

/// Appends transitions to a line-delimited episode log.
pub fn append_episode_log(path: &Path, transitions: &[Transition]) -> Result<(), EnvError> {
    let io = |e: std::io::Error| EnvError::Log(e.to_string());
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
    let mut buf = String::new();
    for t in transitions {
        let rec = TransitionRecord {
            state: t.state.canonical_key(),
            action: t.action,
            reward: t.reward.map(|r| r.to_array()),
            next_state: t.next_state.canonical_key(),
            state_graph: t.state.to_doc(),
            next_graph: t.next_state.to_doc(),
        };
        buf.push_str(&serde_json::to_string(&rec).map_err(|e| EnvError::Log(e.to_string()))?);
        buf.push('\n');
    }
    f.write_all(buf.as_bytes()).map_err(io)
}

/// Reads an episode log back into transitions, re-validating every state.
pub fn read_episode_log(path: &Path) -> Result<Vec<Transition>, EnvError> {
    let f = std::fs::File::open(path).map_err(|e| EnvError::Log(e.to_string()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| EnvError::Log(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TransitionRecord =
            serde_json::from_str(&line).map_err(|e| EnvError::Log(format!("line {}: {e}", i + 1)))?;
        let state = PrefixGraph::from_doc(&rec.state_graph)?;
        let next_state = PrefixGraph::from_doc(&rec.next_graph)?;
        if state.canonical_key() != rec.state || next_state.canonical_key() != rec.next_state {
            return Err(EnvError::Log(format!("line {}: key does not match graph", i + 1)));
        }
        out.push(Transition {
            state,
            action: rec.action,
            reward: rec.reward.map(|[a, d]| Reward::new(a, d)),
            next_state,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::AnalyticalEvaluator;
    use crate::objectives::Objectives;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn non_inputs(g: &PrefixGraph) -> Vec<(usize, usize)> {
        g.non_input_nodes().map(|v| (v.msb, v.lsb)).collect()
    }

    #[test]
    fn action_space_sizes() {
        assert_eq!(action_space_size(4), 3);
        assert_eq!(action_space_size(16), 105);
        assert_eq!(action_space_size(32), 465);
        assert_eq!(action_space_size(64), 1953);
        for n in 2..=64 {
            assert_eq!(optional_positions(n).count(), action_space_size(n));
        }
    }

    #[test]
    fn ripple_add_upper_block() {
        let g = step(&PrefixGraph::ripple(4).unwrap(), Action::add(3, 2)).unwrap();
        assert_eq!(non_inputs(&g), vec![(1, 0), (2, 0), (3, 0), (3, 2)]);
        assert_eq!(g.upper_parent(NodeId::new(3, 0)), Some(NodeId::new(3, 2)));
        assert_eq!(g.lower_parent(NodeId::new(3, 0)), Some(NodeId::new(1, 0)));
    }

    #[test]
    fn sklansky_delete_gives_ripple() {
        let g = step(&PrefixGraph::sklansky(4).unwrap(), Action::delete(3, 2)).unwrap();
        assert_eq!(g, PrefixGraph::ripple(4).unwrap());
    }

    #[test]
    fn masks_on_small_graphs() {
        let m = mask(&PrefixGraph::ripple(4).unwrap());
        assert_eq!(m.legal_actions(), vec![Action::add(2, 1), Action::add(3, 1), Action::add(3, 2)]);
        let full = PrefixGraph::from_optional(4, optional_positions(4)).unwrap();
        let m = mask(&full);
        assert!(m.legal_actions().iter().all(|a| a.kind == ActionKind::Delete));
        assert!(mask(&PrefixGraph::sklansky(4).unwrap()).is_legal(Action::delete(3, 2)));
        assert!(!mask(&PrefixGraph::ripple(2).unwrap()).any());
    }

    #[test]
    fn redundant_and_malformed_rejected() {
        let r = PrefixGraph::ripple(4).unwrap();
        assert_eq!(step(&r, Action::delete(3, 2)), Err(EnvError::Redundant(Action::delete(3, 2))));
        let s = PrefixGraph::sklansky(4).unwrap();
        assert_eq!(step(&s, Action::add(3, 2)), Err(EnvError::Redundant(Action::add(3, 2))));
        for bad in [Action::add(3, 0), Action::add(2, 2), Action::add(4, 1), Action::add(1, 2)] {
            assert!(matches!(step(&r, bad), Err(EnvError::Malformed { .. })));
        }
    }

    #[test]
    fn encode_examples() {
        let t = encode(&PrefixGraph::ripple(4).unwrap());
        let at = |m, l| (0..4).map(|c| t.get(m, l, c)).collect::<Vec<_>>();
        assert_eq!(at(3, 0), vec![1.0, 1.0, 0.75, 0.0]);
        assert_eq!(at(1, 2), vec![0.0; 4]);
        assert_eq!(at(1, 0), vec![1.0, 0.0, 0.25, 0.25]);
    }

    #[test]
    fn reset_fixed_seed_is_deterministic() {
        let seq = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..20).map(|_| reset(8, &mut rng).unwrap().non_input_count()).collect::<Vec<_>>()
        };
        assert_eq!(seq(3), seq(3));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let two = PrefixGraph::ripple(2).unwrap();
        assert!((0..10).all(|_| reset(2, &mut rng).unwrap() == two));
    }

    #[test]
    fn episode_lengths_and_rewards() {
        let eval = AnalyticalEvaluator::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = ScalarWeight::default();
        let one = run_episode(&mut RandomPolicy, 8, 1, &mut rng, &eval, w).unwrap();
        assert_eq!(one.len(), 1);
        assert!(matches!(run_episode(&mut RandomPolicy, 8, 0, &mut rng, &eval, w), Err(EnvError::ZeroHorizon)));
        assert!(matches!(
            run_episode(&mut RandomPolicy, 2, 3, &mut rng, &eval, w),
            Err(EnvError::NoLegalAction(2))
        ));

        let ep = run_episode(&mut RandomPolicy, 8, 50, &mut rng, &eval, w).unwrap();
        let total = ep.iter().fold(Objectives::ZERO, |acc, t| acc + t.reward.unwrap());
        let direct = eval.cost(&ep[0].state, w).unwrap() - eval.cost(&ep[49].next_state, w).unwrap();
        assert!((total.area - direct.area).abs() < 1e-9);
        assert!((total.delay - direct.delay).abs() < 1e-9);
    }

    struct Stubborn(Action);
    impl Policy for Stubborn {
        fn choose(&mut self, _: &PrefixGraph, _: &ActionMask, _: &mut dyn RngCore) -> Action {
            self.0
        }
    }

    #[test]
    fn masked_policy_choice_is_an_error() {
        let eval = AnalyticalEvaluator::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = Stubborn(Action::delete(3, 1));
        let r = run_episode(&mut p, 4, 5, &mut rng, &eval, ScalarWeight::default());
        assert_eq!(r, Err(EnvError::PolicyChoseMasked(Action::delete(3, 1))));
    }

    #[test]
    fn episode_log_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("episodes.jsonl");
        let eval = AnalyticalEvaluator::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ep = run_episode(&mut RandomPolicy, 6, 10, &mut rng, &eval, ScalarWeight::default()).unwrap();
        append_episode_log(&path, &ep[..4]).unwrap();
        append_episode_log(&path, &ep[4..]).unwrap();
        assert_eq!(read_episode_log(&path).unwrap(), ep);
    }
}
