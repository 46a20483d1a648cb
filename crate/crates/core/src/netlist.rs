//! Structural gate-level adders generated from prefix graphs.
//!
//! Every bit gets a generate/propagate cell, every non-input graph node a
//! prefix-operator cell, and every bit above 0 a sum cell:
//!
//! ```text
//! g_i = a_i & b_i            p_i = a_i ^ b_i
//! (g, p) o (g', p') = (g | (p & g'), p & p')
//! s_0 = p_0    s_i = p_i ^ g_{i-1:0}    s_N = g_{N-1:0}
//! ```
//!
//! Output nodes (lsb 0) only need their generate signal, so their cells
//! omit the propagate gate. The optional inverting mode maps the same
//! logic onto NAND2/XNOR2/INV gates.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{NodeId, PrefixGraph};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetlistError {
    #[error("operand {value:#x} does not fit in {width} bits")]
    OperandTooWide { value: u64, width: usize },
    #[error("net {0} is undriven or x-valued")]
    Undriven(String),
    #[error("net {net} has {drivers} drivers")]
    MultipleDrivers { net: String, drivers: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gate {
    And2,
    Or2,
    Xor2,
    Nand2,
    Xnor2,
    Inv,
}

impl Gate {
    fn primitive(self) -> &'static str {
        match self {
            Gate::And2 => "and",
            Gate::Or2 => "or",
            Gate::Xor2 => "xor",
            Gate::Nand2 => "nand",
            Gate::Xnor2 => "xnor",
            Gate::Inv => "not",
        }
    }

    fn eval(self, x: bool, y: bool) -> bool {
        match self {
            Gate::And2 => x & y,
            Gate::Or2 => x | y,
            Gate::Xor2 => x ^ y,
            Gate::Nand2 => !(x & y),
            Gate::Xnor2 => !(x ^ y),
            Gate::Inv => !x,
        }
    }

    fn arity(self) -> usize {
        if self == Gate::Inv {
            1
        } else {
            2
        }
    }
}

/// Which logical cell a gate belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellRole {
    Preprocess(usize),
    Prefix(NodeId),
    Sum(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NetId(pub usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GateInst {
    pub gate: Gate,
    pub inputs: Vec<NetId>,
    pub output: NetId,
    pub role: CellRole,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    #[default]
    Monotone,
    Inverting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CellCounts {
    pub preprocess: usize,
    pub prefix: usize,
    pub sum: usize,
}

/// A combinational adder: `s = a + b` with `s` one bit wider than the operands.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Netlist {
    module: String,
    width: usize,
    polarity: Polarity,
    graph_key: String,
    graph_json: String,
    node_count: usize,
    nets: Vec<String>,
    a: Vec<NetId>,
    b: Vec<NetId>,
    sum: Vec<NetId>,
    gates: Vec<GateInst>,
}

struct Builder {
    nets: Vec<String>,
    gates: Vec<GateInst>,
    polarity: Polarity,
}

impl Builder {
    fn net(&mut self, name: String) -> NetId {
        self.nets.push(name);
        NetId(self.nets.len() - 1)
    }

    fn gate(&mut self, gate: Gate, inputs: &[NetId], out: String, role: CellRole) -> NetId {
        let output = self.net(out);
        self.gates.push(GateInst { gate, inputs: inputs.to_vec(), output, role });
        output
    }

    fn and(&mut self, x: NetId, y: NetId, out: String, role: CellRole) -> NetId {
        match self.polarity {
            Polarity::Monotone => self.gate(Gate::And2, &[x, y], out, role),
            Polarity::Inverting => {
                let n = self.gate(Gate::Nand2, &[x, y], format!("{out}_n"), role);
                self.gate(Gate::Inv, &[n], out, role)
            }
        }
    }

    /// `x | (y & z)`
    fn and_or(&mut self, x: NetId, y: NetId, z: NetId, out: String, role: CellRole) -> NetId {
        match self.polarity {
            Polarity::Monotone => {
                let t = self.gate(Gate::And2, &[y, z], format!("{out}_t"), role);
                self.gate(Gate::Or2, &[x, t], out, role)
            }
            Polarity::Inverting => {
                let t = self.gate(Gate::Nand2, &[y, z], format!("{out}_tn"), role);
                let xn = self.gate(Gate::Inv, &[x], format!("{out}_xn"), role);
                self.gate(Gate::Nand2, &[xn, t], out, role)
            }
        }
    }

    fn xor(&mut self, x: NetId, y: NetId, out: String, role: CellRole) -> NetId {
        match self.polarity {
            Polarity::Monotone => self.gate(Gate::Xor2, &[x, y], out, role),
            Polarity::Inverting => {
                let n = self.gate(Gate::Xnor2, &[x, y], format!("{out}_n"), role);
                self.gate(Gate::Inv, &[n], out, role)
            }
        }
    }
}

/// Emits the default monotone netlist.
pub fn emit(g: &PrefixGraph) -> Netlist {
    emit_with(g, Polarity::Monotone)
}

pub fn emit_with(g: &PrefixGraph, polarity: Polarity) -> Netlist {
    let n = g.width();
    let mut b = Builder { nets: Vec::new(), gates: Vec::new(), polarity };
    let a_in: Vec<NetId> = (0..n).map(|i| b.net(format!("a[{i}]"))).collect();
    let b_in: Vec<NetId> = (0..n).map(|i| b.net(format!("b[{i}]"))).collect();

    // (generate, propagate) net of each computed node; outputs carry no propagate
    let mut gp: HashMap<NodeId, (NetId, Option<NetId>)> = HashMap::new();
    for i in 0..n {
        let role = CellRole::Preprocess(i);
        let gi = b.and(a_in[i], b_in[i], format!("g_{i}_{i}"), role);
        let pi = b.xor(a_in[i], b_in[i], format!("p_{i}_{i}"), role);
        gp.insert(NodeId::new(i, i), (gi, Some(pi)));
    }

    for msb in 0..n {
        for lsb in (0..msb).rev() {
            let v = NodeId::new(msb, lsb);
            if !g.contains(v) {
                continue;
            }
            let up = g.upper_parent(v).expect("legal graph");
            let lp = g.lower_parent(v).expect("legal graph");
            let (gu, pu) = gp[&up];
            let (gl, pl) = gp[&lp];
            let pu = pu.expect("upper parents are never outputs");
            let role = CellRole::Prefix(v);
            let gv = b.and_or(gu, pu, gl, format!("g_{msb}_{lsb}"), role);
            let pv = if lsb == 0 {
                None
            } else {
                let pl = pl.expect("lower parent of a non-output node is not an output");
                Some(b.and(pu, pl, format!("p_{msb}_{lsb}"), role))
            };
            gp.insert(v, (gv, pv));
        }
    }

    let mut sum = Vec::with_capacity(n + 1);
    sum.push(gp[&NodeId::new(0, 0)].1.expect("input propagate"));
    for i in 1..n {
        let pi = gp[&NodeId::new(i, i)].1.expect("input propagate");
        let carry = gp[&NodeId::new(i - 1, 0)].0;
        sum.push(b.xor(pi, carry, format!("s_{i}"), CellRole::Sum(i)));
    }
    sum.push(gp[&NodeId::new(n - 1, 0)].0);

    Netlist {
        module: format!("prefix_adder_{n}"),
        width: n,
        polarity,
        graph_key: g.canonical_key().0,
        graph_json: g.to_json(),
        node_count: g.nodes().len(),
        nets: b.nets,
        a: a_in,
        b: b_in,
        sum,
        gates: b.gates,
    }
}

impl Netlist {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn module_name(&self) -> &str {
        &self.module
    }

    pub fn gates(&self) -> &[GateInst] {
        &self.gates
    }

    pub fn net_name(&self, net: NetId) -> &str {
        &self.nets[net.0]
    }

    pub fn cell_counts(&self) -> CellCounts {
        let mut roles: Vec<CellRole> = self.gates.iter().map(|g| g.role).collect();
        roles.dedup();
        let mut c = CellCounts::default();
        for r in roles {
            match r {
                CellRole::Preprocess(_) => c.preprocess += 1,
                CellRole::Prefix(_) => c.prefix += 1,
                CellRole::Sum(_) => c.sum += 1,
            }
        }
        c
    }

    /// Checks single drivers and that gates appear in topological order.
    pub fn check(&self) -> Result<(), NetlistError> {
        let mut drivers = vec![0usize; self.nets.len()];
        for &net in self.a.iter().chain(&self.b) {
            drivers[net.0] += 1;
        }
        for gate in &self.gates {
            for input in &gate.inputs {
                if drivers[input.0] == 0 {
                    return Err(NetlistError::Undriven(self.nets[input.0].clone()));
                }
            }
            drivers[gate.output.0] += 1;
        }
        for (net, &d) in drivers.iter().enumerate() {
            if d > 1 {
                return Err(NetlistError::MultipleDrivers { net: self.nets[net].clone(), drivers: d });
            }
        }
        for out in &self.sum {
            if drivers[out.0] == 0 {
                return Err(NetlistError::Undriven(self.nets[out.0].clone()));
            }
        }
        Ok(())
    }

    /// Evaluates `a + b` through the gates, carry-out included.
    pub fn simulate(&self, a: u64, b: u64) -> Result<u128, NetlistError> {
        for value in [a, b] {
            if self.width < 64 && value >> self.width != 0 {
                return Err(NetlistError::OperandTooWide { value, width: self.width });
            }
        }
        let mut val: Vec<Option<bool>> = vec![None; self.nets.len()];
        for i in 0..self.width {
            val[self.a[i].0] = Some(a >> i & 1 == 1);
            val[self.b[i].0] = Some(b >> i & 1 == 1);
        }
        for gate in &self.gates {
            let mut ins = [false; 2];
            for (k, input) in gate.inputs.iter().enumerate() {
                ins[k] = val[input.0].ok_or_else(|| NetlistError::Undriven(self.nets[input.0].clone()))?;
            }
            debug_assert_eq!(gate.inputs.len(), gate.gate.arity());
            val[gate.output.0] = Some(gate.gate.eval(ins[0], ins[1]));
        }
        let mut s = 0u128;
        for (i, net) in self.sum.iter().enumerate() {
            let bit = val[net.0].ok_or_else(|| NetlistError::Undriven(self.nets[net.0].clone()))?;
            s |= (bit as u128) << i;
        }
        Ok(s)
    }

    /// Structural Verilog using only gate primitives.
    pub fn to_verilog(&self) -> String {
        let n = self.width;
        let counts = self.cell_counts();
        let mut out = String::new();
        let _ = writeln!(out, "// structural prefix adder, {n} bits, {:?} polarity", self.polarity);
        let _ = writeln!(out, "// graph key: {}", self.graph_key);
        let _ = writeln!(out, "// graph nodes: {} total, {} non-input", self.node_count, self.node_count - n);
        let _ = writeln!(
            out,
            "// cells: {} preprocessing (g,p per bit) + {} prefix (one per non-input node) + {} sum (bits 1..{}) ; s[0] = p_0_0, s[{n}] = g_{}_0",
            counts.preprocess,
            counts.prefix,
            counts.sum,
            n - 1,
            n - 1
        );
        let _ = writeln!(out, "// gates: {}", self.gates.len());
        let _ = writeln!(out, "// graph: {}", self.graph_json);
        let _ = writeln!(out, "module {} (a, b, s);", self.module);
        let _ = writeln!(out, "  input [{}:0] a;", n - 1);
        let _ = writeln!(out, "  input [{}:0] b;", n - 1);
        let _ = writeln!(out, "  output [{n}:0] s;");
        for gate in &self.gates {
            let _ = writeln!(out, "  wire {};", self.nets[gate.output.0]);
        }
        for (k, gate) in self.gates.iter().enumerate() {
            let ins: Vec<&str> = gate.inputs.iter().map(|i| self.nets[i.0].as_str()).collect();
            let _ = writeln!(
                out,
                "  {} u{k} ({}, {});",
                gate.gate.primitive(),
                self.nets[gate.output.0],
                ins.join(", ")
            );
        }
        for (i, net) in self.sum.iter().enumerate() {
            let _ = writeln!(out, "  assign s[{i}] = {};", self.nets[net.0]);
        }
        let _ = writeln!(out, "endmodule");
        out
    }
}

/// Recovers the graph document embedded in an emitted netlist header.
pub fn graph_json_from_header(verilog: &str) -> Option<&str> {
    verilog
        .lines()
        .take_while(|l| l.starts_with("//"))
        .find_map(|l| l.strip_prefix("// graph: "))
}
