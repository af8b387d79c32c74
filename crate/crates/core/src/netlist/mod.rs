//! Gate-level netlist IR.
//!
//! Wires are dense integer ids. Every wire has exactly one driver: either a
//! primary input or the output of a gate. Flip-flops (`DFF`) cut the graph,
//! so the remaining combinational portion must be acyclic. Names are
//! metadata; the parser and serializer use them to round-trip text.

mod cone;
mod equiv;
mod eval;
mod parse;
mod simplify;

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::error::WidthMismatch;

pub use equiv::{check_equivalence, EquivalenceMode, EquivalenceOptions, EquivalenceVerdict};
pub use eval::{FaultKind, WireFault};
pub use parse::{parse_lines, parse_netlist, serialize_netlist, ParsedLine, SourceLine};
pub(crate) use parse::{write_gate, write_header};
pub use simplify::simplify;

pub type WireId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GateKind {
    And,
    Or,
    Not,
    Xor,
    Nand,
    Nor,
    Buf,
    Const0,
    Const1,
    Dff,
}

impl GateKind {
    pub const ALL: [GateKind; 10] = [
        GateKind::And,
        GateKind::Or,
        GateKind::Not,
        GateKind::Xor,
        GateKind::Nand,
        GateKind::Nor,
        GateKind::Buf,
        GateKind::Const0,
        GateKind::Const1,
        GateKind::Dff,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GateKind::And => "AND",
            GateKind::Or => "OR",
            GateKind::Not => "NOT",
            GateKind::Xor => "XOR",
            GateKind::Nand => "NAND",
            GateKind::Nor => "NOR",
            GateKind::Buf => "BUF",
            GateKind::Const0 => "CONST0",
            GateKind::Const1 => "CONST1",
            GateKind::Dff => "DFF",
        }
    }

    pub fn from_name(name: &str) -> Option<GateKind> {
        GateKind::ALL.into_iter().find(|k| k.name() == name)
    }

    pub fn arity_ok(self, n: usize) -> bool {
        match self {
            GateKind::Not | GateKind::Buf | GateKind::Dff => n == 1,
            GateKind::Const0 | GateKind::Const1 => n == 0,
            GateKind::And | GateKind::Or | GateKind::Xor | GateKind::Nand | GateKind::Nor => n >= 2,
        }
    }

    pub fn is_commutative(self) -> bool {
        matches!(
            self,
            GateKind::And | GateKind::Or | GateKind::Xor | GateKind::Nand | GateKind::Nor
        )
    }

    /// Bit-parallel evaluation over 64 lanes. Not valid for `Dff`.
    pub fn eval_words(self, inputs: impl Iterator<Item = u64>) -> u64 {
        let mut inputs = inputs;
        match self {
            GateKind::And => inputs.fold(!0, |a, b| a & b),
            GateKind::Or => inputs.fold(0, |a, b| a | b),
            GateKind::Xor => inputs.fold(0, |a, b| a ^ b),
            GateKind::Nand => !inputs.fold(!0, |a, b| a & b),
            GateKind::Nor => !inputs.fold(0, |a, b| a | b),
            GateKind::Not => !inputs.next().unwrap_or(0),
            GateKind::Buf => inputs.next().unwrap_or(0),
            GateKind::Const0 => 0,
            GateKind::Const1 => !0,
            GateKind::Dff => unreachable!("DFF is evaluated by the cycle loop"),
        }
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gate {
    pub kind: GateKind,
    pub inputs: Vec<WireId>,
    pub output: WireId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Driver {
    Input(usize),
    Gate(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetlistError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("combinational cycle through wire `{wire}`")]
    CombinationalCycle { wire: String },
    #[error("wire `{wire}` has no driver")]
    Undriven { wire: String },
    #[error("wire `{wire}` has multiple drivers")]
    MultipleDrivers { wire: String },
    #[error("gate `{gate}` of kind {kind} has {got} inputs")]
    Arity {
        gate: String,
        kind: GateKind,
        got: usize,
    },
    #[error(transparent)]
    Width(#[from] WidthMismatch),
    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("interface mismatch: {0}")]
    ArityMismatch(String),
}

/// An immutable, validated gate-level netlist.
#[derive(Clone, PartialEq, Eq)]
pub struct Netlist {
    name: String,
    wire_names: Vec<String>,
    drivers: Vec<Driver>,
    gates: Vec<Gate>,
    inputs: Vec<WireId>,
    outputs: Vec<WireId>,
    comb_order: Vec<usize>,
    dffs: Vec<usize>,
}

impl fmt::Debug for Netlist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Netlist")
            .field("name", &self.name)
            .field("inputs", &self.inputs.len())
            .field("outputs", &self.outputs.len())
            .field("gates", &self.gates.len())
            .field("dffs", &self.dffs.len())
            .finish()
    }
}

impl Netlist {
    /// Validates raw parts and computes the evaluation order.
    pub fn from_parts(
        name: impl Into<String>,
        wire_names: Vec<String>,
        inputs: Vec<WireId>,
        gates: Vec<Gate>,
        outputs: Vec<WireId>,
    ) -> Result<Netlist, NetlistError> {
        let n_wires = wire_names.len();
        let wname = |w: WireId| wire_names.get(w).cloned().unwrap_or_else(|| format!("#{w}"));
        let mut drivers: Vec<Option<Driver>> = vec![None; n_wires];
        for (i, &w) in inputs.iter().enumerate() {
            if w >= n_wires {
                return Err(NetlistError::Undriven { wire: wname(w) });
            }
            if drivers[w].is_some() {
                return Err(NetlistError::MultipleDrivers { wire: wname(w) });
            }
            drivers[w] = Some(Driver::Input(i));
        }
        for (g, gate) in gates.iter().enumerate() {
            if !gate.kind.arity_ok(gate.inputs.len()) {
                return Err(NetlistError::Arity {
                    gate: wname(gate.output),
                    kind: gate.kind,
                    got: gate.inputs.len(),
                });
            }
            if gate.output >= n_wires {
                return Err(NetlistError::Undriven {
                    wire: wname(gate.output),
                });
            }
            if drivers[gate.output].is_some() {
                return Err(NetlistError::MultipleDrivers {
                    wire: wname(gate.output),
                });
            }
            drivers[gate.output] = Some(Driver::Gate(g));
        }
        for gate in &gates {
            for &w in &gate.inputs {
                if w >= n_wires || drivers[w].is_none() {
                    return Err(NetlistError::Undriven { wire: wname(w) });
                }
            }
        }
        for &w in &outputs {
            if w >= n_wires || drivers[w].is_none() {
                return Err(NetlistError::Undriven { wire: wname(w) });
            }
        }
        let drivers: Vec<Driver> = match drivers.into_iter().enumerate().find(|(_, d)| d.is_none()) {
            Some((w, _)) => return Err(NetlistError::Undriven { wire: wname(w) }),
            None => drivers_unwrapped(&gates, &inputs, n_wires),
        };

        // Kahn's algorithm over combinational gates; DFF outputs and primary
        // inputs are sources.
        let mut pending = vec![0usize; gates.len()];
        let mut fanout: Vec<Vec<usize>> = vec![Vec::new(); n_wires];
        for (g, gate) in gates.iter().enumerate() {
            if gate.kind == GateKind::Dff {
                continue;
            }
            for &w in &gate.inputs {
                if let Driver::Gate(d) = drivers[w] {
                    if gates[d].kind != GateKind::Dff {
                        pending[g] += 1;
                        fanout[w].push(g);
                        continue;
                    }
                }
            }
        }
        let mut ready: Vec<usize> = (0..gates.len())
            .filter(|&g| gates[g].kind != GateKind::Dff && pending[g] == 0)
            .collect();
        ready.reverse();
        let mut comb_order = Vec::with_capacity(gates.len());
        while let Some(g) = ready.pop() {
            comb_order.push(g);
            for &succ in &fanout[gates[g].output] {
                pending[succ] -= 1;
                if pending[succ] == 0 {
                    ready.push(succ);
                }
            }
        }
        let n_comb = gates.iter().filter(|g| g.kind != GateKind::Dff).count();
        if comb_order.len() != n_comb {
            let stuck = (0..gates.len())
                .find(|&g| gates[g].kind != GateKind::Dff && pending[g] > 0)
                .expect("some gate is stuck");
            return Err(NetlistError::CombinationalCycle {
                wire: wname(gates[stuck].output),
            });
        }
        let dffs = (0..gates.len())
            .filter(|&g| gates[g].kind == GateKind::Dff)
            .collect();
        Ok(Netlist {
            name: name.into(),
            wire_names,
            drivers,
            gates,
            inputs,
            outputs,
            comb_order,
            dffs,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Netlist {
        self.name = name.into();
        self
    }

    pub fn num_wires(&self) -> usize {
        self.wire_names.len()
    }

    pub fn wire_name(&self, w: WireId) -> &str {
        &self.wire_names[w]
    }

    pub fn wire_names(&self) -> &[String] {
        &self.wire_names
    }

    pub fn wire_by_name(&self, name: &str) -> Option<WireId> {
        self.wire_names.iter().position(|n| n == name)
    }

    pub fn driver(&self, w: WireId) -> Driver {
        self.drivers[w]
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn gate(&self, g: usize) -> &Gate {
        &self.gates[g]
    }

    /// Gate driving `w`, if any.
    pub fn driving_gate(&self, w: WireId) -> Option<usize> {
        match self.drivers[w] {
            Driver::Gate(g) => Some(g),
            Driver::Input(_) => None,
        }
    }

    pub fn inputs(&self) -> &[WireId] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[WireId] {
        &self.outputs
    }

    pub fn num_inputs(&self) -> usize {
        self.inputs.len()
    }

    pub fn num_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn num_dffs(&self) -> usize {
        self.dffs.len()
    }

    pub fn dffs(&self) -> &[usize] {
        &self.dffs
    }

    pub fn is_combinational(&self) -> bool {
        self.dffs.is_empty()
    }

    /// Combinational gates in a valid evaluation order.
    pub fn comb_order(&self) -> &[usize] {
        &self.comb_order
    }

    /// Gate-to-gate fanout lists indexed by wire.
    pub fn fanout(&self) -> Vec<Vec<usize>> {
        let mut fanout = vec![Vec::new(); self.num_wires()];
        for (g, gate) in self.gates.iter().enumerate() {
            for &w in &gate.inputs {
                if !fanout[w].contains(&g) {
                    fanout[w].push(g);
                }
            }
        }
        fanout
    }

    /// Decomposes the netlist into raw parts for rebuilding.
    pub fn into_parts(self) -> (String, Vec<String>, Vec<WireId>, Vec<Gate>, Vec<WireId>) {
        (self.name, self.wire_names, self.inputs, self.gates, self.outputs)
    }

    pub fn to_builder(&self) -> NetlistBuilder {
        NetlistBuilder::from_netlist(self)
    }
}

fn drivers_unwrapped(gates: &[Gate], inputs: &[WireId], n_wires: usize) -> Vec<Driver> {
    let mut drivers = vec![Driver::Input(usize::MAX); n_wires];
    for (i, &w) in inputs.iter().enumerate() {
        drivers[w] = Driver::Input(i);
    }
    for (g, gate) in gates.iter().enumerate() {
        drivers[gate.output] = Driver::Gate(g);
    }
    drivers
}

/// Incremental, name-aware construction of a [`Netlist`].
///
/// Wires may be referenced before they are driven; validation happens in
/// [`NetlistBuilder::build`].
#[derive(Debug, Clone, Default)]
pub struct NetlistBuilder {
    name: String,
    wire_names: Vec<String>,
    by_name: HashMap<String, WireId>,
    inputs: Vec<WireId>,
    gates: Vec<Gate>,
    outputs: Vec<WireId>,
    driven: Vec<bool>,
    first_error: Option<NetlistError>,
    fresh_counter: usize,
}

impl NetlistBuilder {
    pub fn new(name: impl Into<String>) -> Self {
        NetlistBuilder {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn from_netlist(n: &Netlist) -> Self {
        let mut b = NetlistBuilder::new(n.name());
        b.wire_names = n.wire_names.clone();
        b.by_name = n
            .wire_names
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        b.driven = vec![true; n.num_wires()];
        b.inputs = n.inputs.clone();
        b.gates = n.gates.clone();
        b.outputs = n.outputs.clone();
        b
    }

    pub fn set_name(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    /// Interns `name`, creating an undriven wire if it is new.
    pub fn wire(&mut self, name: &str) -> WireId {
        if let Some(&w) = self.by_name.get(name) {
            return w;
        }
        let w = self.wire_names.len();
        self.wire_names.push(name.to_string());
        self.by_name.insert(name.to_string(), w);
        self.driven.push(false);
        w
    }

    pub fn lookup(&self, name: &str) -> Option<WireId> {
        self.by_name.get(name).copied()
    }

    pub fn wire_name(&self, w: WireId) -> &str {
        &self.wire_names[w]
    }

    /// A name not yet used in this builder.
    pub fn fresh_name(&mut self, prefix: &str) -> String {
        loop {
            let candidate = format!("{prefix}{}", self.fresh_counter);
            self.fresh_counter += 1;
            if !self.by_name.contains_key(&candidate) {
                return candidate;
            }
        }
    }

    fn mark_driven(&mut self, w: WireId) {
        if self.driven[w] {
            if self.first_error.is_none() {
                self.first_error = Some(NetlistError::MultipleDrivers {
                    wire: self.wire_names[w].clone(),
                });
            }
        } else {
            self.driven[w] = true;
        }
    }

    pub fn input(&mut self, name: &str) -> WireId {
        let w = self.wire(name);
        self.mark_driven(w);
        self.inputs.push(w);
        w
    }

    /// Adds a gate driving the wire called `output`.
    pub fn gate(&mut self, kind: GateKind, output: &str, inputs: &[WireId]) -> WireId {
        let w = self.wire(output);
        self.mark_driven(w);
        self.gates.push(Gate {
            kind,
            inputs: inputs.to_vec(),
            output: w,
        });
        w
    }

    pub fn gate_named(&mut self, kind: GateKind, output: &str, inputs: &[&str]) -> WireId {
        let ins: Vec<WireId> = inputs.iter().map(|n| self.wire(n)).collect();
        self.gate(kind, output, &ins)
    }

    /// Adds a gate with a generated output name.
    pub fn add(&mut self, kind: GateKind, inputs: &[WireId]) -> WireId {
        let name = self.fresh_name("_n");
        self.gate(kind, &name, inputs)
    }

    pub fn output(&mut self, w: WireId) {
        self.outputs.push(w);
    }

    pub fn output_named(&mut self, name: &str) {
        let w = self.wire(name);
        self.outputs.push(w);
    }

    pub fn num_gates(&self) -> usize {
        self.gates.len()
    }

    pub fn gates_mut(&mut self) -> &mut Vec<Gate> {
        &mut self.gates
    }

    pub fn outputs_mut(&mut self) -> &mut Vec<WireId> {
        &mut self.outputs
    }

    pub fn build(self) -> Result<Netlist, NetlistError> {
        if let Some(e) = self.first_error {
            return Err(e);
        }
        Netlist::from_parts(self.name, self.wire_names, self.inputs, self.gates, self.outputs)
    }
}
