//! Parallel prefix adder design-space search.
//!
//! A prefix graph is a set of nodes on the `(msb, lsb)` grid. The
//! [`env`] module turns add/delete edits into a Markov decision process
//! that always stays inside the space of legal graphs; [`eval`] prices a
//! graph in area and delay; [`qfunc`] and [`train`] learn and search over
//! edits; [`pareto`] collects the resulting tradeoff fronts.

pub mod env;
pub mod eval;
pub mod graph;
pub mod netlist;
pub mod objectives;
pub mod pareto;
pub mod qfunc;
pub mod train;

pub use env::{mask, step, Action, ActionKind, ActionMask, EnvError, StateTensor, Transition};
pub use eval::{EvalConfig, EvalError, Evaluator, Scaling};
pub use graph::{GraphError, GraphKey, NodeId, NodeSet, PrefixGraph, Structure};
pub use objectives::{Objectives, ScalarWeight};
