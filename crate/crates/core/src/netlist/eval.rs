//! Cycle-accurate functional evaluation, 64 vectors per pass.

use crate::bits::BitVector;
use crate::error::WidthMismatch;

use super::{Driver, GateKind, Netlist, NetlistError, WireId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FaultKind {
    Flip,
    Stuck0,
    Stuck1,
}

/// Overrides the value of one wire in the lanes selected by `lanes`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WireFault {
    pub wire: WireId,
    pub kind: FaultKind,
    pub lanes: u64,
}

impl WireFault {
    pub fn new(wire: WireId, kind: FaultKind) -> Self {
        WireFault {
            wire,
            kind,
            lanes: !0,
        }
    }

    fn apply(&self, v: u64) -> u64 {
        match self.kind {
            FaultKind::Flip => v ^ self.lanes,
            FaultKind::Stuck0 => v & !self.lanes,
            FaultKind::Stuck1 => v | self.lanes,
        }
    }
}

#[inline]
fn apply_faults(values: &mut [u64], w: WireId, faults: &[WireFault]) {
    for f in faults {
        if f.wire == w {
            values[w] = f.apply(values[w]);
        }
    }
}

impl Netlist {
    /// Evaluates all wires for 64 independent lanes.
    ///
    /// `inputs[i]` holds primary input `i`, `state[j]` the output of the
    /// `j`-th DFF. On return `values` holds every wire's value.
    pub fn eval_words_into(
        &self,
        inputs: &[u64],
        state: &[u64],
        faults: &[WireFault],
        values: &mut Vec<u64>,
    ) {
        debug_assert_eq!(inputs.len(), self.num_inputs());
        debug_assert_eq!(state.len(), self.num_dffs());
        values.clear();
        values.resize(self.num_wires(), 0);
        for (i, &w) in self.inputs().iter().enumerate() {
            values[w] = inputs[i];
            if !faults.is_empty() {
                apply_faults(values, w, faults);
            }
        }
        for (j, &g) in self.dffs().iter().enumerate() {
            let w = self.gates()[g].output;
            values[w] = state[j];
            if !faults.is_empty() {
                apply_faults(values, w, faults);
            }
        }
        for &g in self.comb_order() {
            let gate = &self.gates()[g];
            let v = gate.kind.eval_words(gate.inputs.iter().map(|&w| values[w]));
            values[gate.output] = v;
            if !faults.is_empty() {
                apply_faults(values, gate.output, faults);
            }
        }
    }

    pub fn output_words(&self, values: &[u64]) -> Vec<u64> {
        self.outputs().iter().map(|&w| values[w]).collect()
    }

    pub fn next_state_words(&self, values: &[u64]) -> Vec<u64> {
        self.dffs()
            .iter()
            .map(|&g| values[self.gates()[g].inputs[0]])
            .collect()
    }

    /// Evaluates one cycle on a single vector.
    pub fn evaluate(
        &self,
        inputs: &BitVector,
        state: &BitVector,
    ) -> Result<(BitVector, BitVector), NetlistError> {
        self.evaluate_with_faults(inputs, state, &[])
    }

    pub fn evaluate_with_faults(
        &self,
        inputs: &BitVector,
        state: &BitVector,
        faults: &[WireFault],
    ) -> Result<(BitVector, BitVector), NetlistError> {
        WidthMismatch::check(self.num_inputs(), inputs.width())?;
        WidthMismatch::check(self.num_dffs(), state.width())?;
        let mut values = Vec::new();
        let (outs, next) = self.eval_bits(inputs.bits(), state.bits(), faults, &mut values);
        Ok((outs, next))
    }

    /// Single-vector evaluation with a caller-owned scratch buffer.
    pub fn eval_bits(
        &self,
        inputs: &[bool],
        state: &[bool],
        faults: &[WireFault],
        scratch: &mut Vec<u64>,
    ) -> (BitVector, BitVector) {
        let iw: Vec<u64> = inputs.iter().map(|&b| b as u64).collect();
        let sw: Vec<u64> = state.iter().map(|&b| b as u64).collect();
        self.eval_words_into(&iw, &sw, faults, scratch);
        let outs = self.outputs().iter().map(|&w| scratch[w] & 1 == 1).collect();
        let next = self
            .dffs()
            .iter()
            .map(|&g| scratch[self.gates()[g].inputs[0]] & 1 == 1)
            .collect();
        (outs, next)
    }

    /// Runs a combinational netlist on one vector. Panics if it has DFFs.
    pub fn eval_comb(&self, inputs: &BitVector) -> Result<BitVector, NetlistError> {
        assert!(self.is_combinational(), "eval_comb on a sequential netlist");
        Ok(self.evaluate(inputs, &BitVector::zeros(0))?.0)
    }

    /// Is `w` a constant source?
    pub fn is_constant(&self, w: WireId) -> Option<bool> {
        match self.driver(w) {
            Driver::Gate(g) => match self.gate(g).kind {
                GateKind::Const0 => Some(false),
                GateKind::Const1 => Some(true),
                _ => None,
            },
            Driver::Input(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::full_adder;
    use super::super::parse_netlist;
    use super::*;

    fn run(n: &Netlist, v: u64) -> u64 {
        n.eval_comb(&BitVector::from_u64(v, n.num_inputs()))
            .unwrap()
            .to_u64()
    }

    #[test]
    fn full_adder_truth() {
        let fa = full_adder();
        // inputs (a, b, cin) = bits 0, 1, 2; outputs (s, cout) = bits 0, 1
        assert_eq!(run(&fa, 0b011), 0b10);
        assert_eq!(run(&fa, 0b111), 0b11);
        for v in 0..8u64 {
            let sum = (v & 1) + ((v >> 1) & 1) + ((v >> 2) & 1);
            assert_eq!(run(&fa, v), sum);
        }
    }

    #[test]
    fn buffer_identity() {
        let n = parse_netlist(".inputs a\n.outputs y\ny = BUF(a)\n").unwrap();
        assert_eq!(run(&n, 1), 1);
        assert_eq!(run(&n, 0), 0);
    }

    #[test]
    fn width_mismatch_is_error() {
        let fa = full_adder();
        assert!(matches!(
            fa.evaluate(&BitVector::zeros(2), &BitVector::zeros(0)),
            Err(NetlistError::Width(_))
        ));
        assert!(fa
            .evaluate(&BitVector::zeros(3), &BitVector::zeros(1))
            .is_err());
    }

    #[test]
    fn dff_holds_state() {
        let n = parse_netlist(".inputs a\n.outputs q\nd = XOR(a, q)\nq = DFF(d)\n").unwrap();
        let (o, s) = n
            .evaluate(&BitVector::from_u64(1, 1), &BitVector::zeros(1))
            .unwrap();
        assert_eq!(o.to_u64(), 0);
        assert_eq!(s.to_u64(), 1);
        let (o, s) = n.evaluate(&BitVector::from_u64(1, 1), &s).unwrap();
        assert_eq!(o.to_u64(), 1);
        assert_eq!(s.to_u64(), 0);
    }

    #[test]
    fn faults_propagate() {
        let fa = full_adder();
        let x1 = fa.wire_by_name("x1").unwrap();
        let faults = [WireFault::new(x1, FaultKind::Flip)];
        let (o, _) = fa
            .evaluate_with_faults(&BitVector::from_u64(0b000, 3), &BitVector::zeros(0), &faults)
            .unwrap();
        // x1 forced to 1: s = 1, cout = x1 & cin = 0
        assert_eq!(o.to_u64(), 0b01);
    }
}
