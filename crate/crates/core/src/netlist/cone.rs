//! Logic-cone extraction.

use super::{Driver, Netlist, NetlistBuilder, NetlistError, WireId};

impl Netlist {
    /// Marks the gates in the transitive fan-in of `roots`, crossing DFFs.
    pub fn fanin_gates(&self, roots: &[WireId]) -> Vec<bool> {
        let mut in_cone = vec![false; self.gates().len()];
        let mut stack: Vec<WireId> = roots.to_vec();
        let mut seen = vec![false; self.num_wires()];
        while let Some(w) = stack.pop() {
            if std::mem::replace(&mut seen[w], true) {
                continue;
            }
            if let Driver::Gate(g) = self.driver(w) {
                in_cone[g] = true;
                stack.extend(self.gate(g).inputs.iter().copied());
            }
        }
        in_cone
    }

    /// The transitive fan-in of output `index` as a standalone netlist.
    ///
    /// The cone keeps every primary input, in order, so it can be evaluated
    /// on the same vectors as `self`. Gate order is preserved.
    pub fn output_cone(&self, index: usize) -> Result<Netlist, NetlistError> {
        if index >= self.num_outputs() {
            return Err(NetlistError::IndexOutOfRange {
                index,
                len: self.num_outputs(),
            });
        }
        let root = self.outputs()[index];
        let keep = self.fanin_gates(&[root]);
        let mut b = NetlistBuilder::new(format!("{}_cone{}", self.name(), index));
        for &w in self.inputs() {
            b.input(self.wire_name(w));
        }
        for (g, gate) in self.gates().iter().enumerate() {
            if !keep[g] {
                continue;
            }
            let ins: Vec<&str> = gate.inputs.iter().map(|&w| self.wire_name(w)).collect();
            b.gate_named(gate.kind, self.wire_name(gate.output), &ins);
        }
        b.output_named(self.wire_name(root));
        b.build()
    }
}
