//! Constant folding, buffer removal and structural hashing.

use std::collections::HashMap;

use super::{GateKind, Netlist, NetlistBuilder, WireId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Val {
    Const(bool),
    Node(usize),
}

#[derive(Debug, Clone)]
enum Node {
    Input(usize),
    Gate(GateKind, Vec<usize>),
    Dff(Option<Val>),
}

#[derive(Default)]
struct Arena {
    nodes: Vec<Node>,
    table: HashMap<(GateKind, Vec<usize>), usize>,
}

impl Arena {
    fn push(&mut self, node: Node) -> usize {
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    fn gate(&mut self, kind: GateKind, mut ins: Vec<usize>) -> Val {
        if kind.is_commutative() {
            ins.sort_unstable();
        }
        let key = (kind, ins);
        if let Some(&id) = self.table.get(&key) {
            return Val::Node(id);
        }
        let id = self.push(Node::Gate(key.0, key.1.clone()));
        self.table.insert(key, id);
        Val::Node(id)
    }

    fn not(&mut self, v: Val) -> Val {
        match v {
            Val::Const(b) => Val::Const(!b),
            Val::Node(id) => {
                if let Node::Gate(GateKind::Not, ins) = &self.nodes[id] {
                    return Val::Node(ins[0]);
                }
                self.gate(GateKind::Not, vec![id])
            }
        }
    }

    /// AND/OR family. `absorbing` is the controlling constant.
    fn and_or(&mut self, base: GateKind, negated: GateKind, negate: bool, ins: &[Val]) -> Val {
        let absorbing = base == GateKind::Or;
        let mut nodes = Vec::with_capacity(ins.len());
        for &v in ins {
            match v {
                Val::Const(b) if b == absorbing => {
                    return Val::Const(absorbing ^ negate);
                }
                Val::Const(_) => {}
                Val::Node(id) => nodes.push(id),
            }
        }
        nodes.sort_unstable();
        nodes.dedup();
        match nodes.len() {
            0 => Val::Const(!absorbing ^ negate),
            1 => {
                let v = Val::Node(nodes[0]);
                if negate {
                    self.not(v)
                } else {
                    v
                }
            }
            _ => self.gate(if negate { negated } else { base }, nodes),
        }
    }

    fn xor(&mut self, ins: &[Val]) -> Val {
        let mut parity = false;
        let mut nodes = Vec::with_capacity(ins.len());
        for &v in ins {
            match v {
                Val::Const(b) => parity ^= b,
                Val::Node(id) => nodes.push(id),
            }
        }
        nodes.sort_unstable();
        let mut kept: Vec<usize> = Vec::with_capacity(nodes.len());
        for id in nodes {
            if kept.last() == Some(&id) {
                kept.pop();
            } else {
                kept.push(id);
            }
        }
        let v = match kept.len() {
            0 => return Val::Const(parity),
            1 => Val::Node(kept[0]),
            _ => self.gate(GateKind::Xor, kept),
        };
        if parity {
            self.not(v)
        } else {
            v
        }
    }
}

/// Returns a functionally identical netlist with constants folded, buffers
/// bypassed, structurally identical gates shared and dead logic removed.
///
/// Primary inputs are kept in order even when unused. Surviving wires keep
/// the name of the first original wire that maps onto them.
pub fn simplify(n: &Netlist) -> Netlist {
    let mut arena = Arena::default();
    let mut val: Vec<Option<Val>> = vec![None; n.num_wires()];
    for (i, &w) in n.inputs().iter().enumerate() {
        val[w] = Some(Val::Node(arena.push(Node::Input(i))));
    }
    for &g in n.dffs() {
        val[n.gate(g).output] = Some(Val::Node(arena.push(Node::Dff(None))));
    }
    for &g in n.comb_order() {
        let gate = n.gate(g);
        let ins: Vec<Val> = gate.inputs.iter().map(|&w| val[w].expect("topological")).collect();
        let v = match gate.kind {
            GateKind::Const0 => Val::Const(false),
            GateKind::Const1 => Val::Const(true),
            GateKind::Buf => ins[0],
            GateKind::Not => arena.not(ins[0]),
            GateKind::And => arena.and_or(GateKind::And, GateKind::Nand, false, &ins),
            GateKind::Nand => arena.and_or(GateKind::And, GateKind::Nand, true, &ins),
            GateKind::Or => arena.and_or(GateKind::Or, GateKind::Nor, false, &ins),
            GateKind::Nor => arena.and_or(GateKind::Or, GateKind::Nor, true, &ins),
            GateKind::Xor => arena.xor(&ins),
            GateKind::Dff => unreachable!(),
        };
        val[gate.output] = Some(v);
    }
    for &g in n.dffs() {
        let gate = n.gate(g);
        let Some(Val::Node(id)) = val[gate.output] else {
            unreachable!()
        };
        arena.nodes[id] = Node::Dff(val[gate.inputs[0]]);
    }

    // liveness from outputs, crossing DFFs
    let mut live = vec![false; arena.nodes.len()];
    let mut need_const = [false; 2];
    let mut stack: Vec<Val> = n.outputs().iter().map(|&w| val[w].unwrap()).collect();
    while let Some(v) = stack.pop() {
        match v {
            Val::Const(b) => need_const[b as usize] = true,
            Val::Node(id) => {
                if std::mem::replace(&mut live[id], true) {
                    continue;
                }
                match &arena.nodes[id] {
                    Node::Input(_) => {}
                    Node::Gate(_, ins) => stack.extend(ins.iter().map(|&i| Val::Node(i))),
                    Node::Dff(d) => stack.push(d.expect("dff input resolved")),
                }
            }
        }
    }

    let mut names: Vec<Option<&str>> = vec![None; arena.nodes.len()];
    for (w, v) in val.iter().enumerate().take(n.num_wires()) {
        if let Some(Val::Node(id)) = *v {
            if names[id].is_none() {
                names[id] = Some(n.wire_name(w));
            }
        }
    }
    // input names must win even if an earlier wire aliases them
    for &w in n.inputs() {
        if let Some(Val::Node(id)) = val[w] {
            names[id] = Some(n.wire_name(w));
        }
    }

    let mut b = NetlistBuilder::new(n.name());
    let new_inputs: Vec<WireId> = n.inputs().iter().map(|&w| b.input(n.wire_name(w))).collect();
    let mut wire_of: Vec<Option<WireId>> = vec![None; arena.nodes.len()];
    for (id, node) in arena.nodes.iter().enumerate() {
        if let Node::Input(i) = node {
            wire_of[id] = Some(new_inputs[*i]);
        }
    }
    let name_for = |b: &mut NetlistBuilder, id: usize| -> WireId {
        let name = match names[id] {
            Some(s) if b.lookup(s).is_none() => s.to_string(),
            _ => b.fresh_name("_s"),
        };
        b.wire(&name)
    };
    for id in 0..arena.nodes.len() {
        if live[id] && wire_of[id].is_none() {
            wire_of[id] = Some(name_for(&mut b, id));
        }
    }
    let mut const_wire = [None, None];
    for (bit, needed) in need_const.iter().enumerate() {
        if *needed {
            let name = b.fresh_name(if bit == 1 { "_one" } else { "_zero" });
            let kind = if bit == 1 { GateKind::Const1 } else { GateKind::Const0 };
            const_wire[bit] = Some(b.gate(kind, &name, &[]));
        }
    }
    let resolve = |v: Val| -> WireId {
        match v {
            Val::Const(c) => const_wire[c as usize].unwrap(),
            Val::Node(id) => wire_of[id].unwrap(),
        }
    };
    for (id, node) in arena.nodes.iter().enumerate() {
        if !live[id] {
            continue;
        }
        let out = wire_of[id].unwrap();
        match node {
            Node::Input(_) => {}
            Node::Gate(kind, ins) => {
                let ins: Vec<WireId> = ins.iter().map(|&i| wire_of[i].unwrap()).collect();
                let name = b.wire_name(out).to_string();
                b.gate(*kind, &name, &ins);
            }
            Node::Dff(d) => {
                let d = resolve(d.unwrap());
                let name = b.wire_name(out).to_string();
                b.gate(GateKind::Dff, &name, &[d]);
            }
        }
    }
    for &w in n.outputs() {
        b.output(resolve(val[w].unwrap()));
    }
    b.build().expect("simplification preserves validity")
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::full_adder;
    use super::super::{check_equivalence, parse_netlist, EquivalenceOptions};
    use super::*;

    #[test]
    fn folds_constants_and_buffers() {
        let n = parse_netlist(
            ".inputs a b\n.outputs y z w\none = CONST1()\nt = AND(a, one)\nu = BUF(t)\ny = XOR(u, u, b)\nz = OR(a, one)\nw = NOT(nb)\nnb = NOT(b)\n",
        )
        .unwrap();
        let s = simplify(&n);
        assert!(check_equivalence(&n, &s, &EquivalenceOptions::default()).unwrap().equivalent);
        // y = b, z = 1, w = b: only a CONST1 remains
        assert_eq!(s.gates().len(), 1);
        assert_eq!(s.gates()[0].kind, GateKind::Const1);
    }

    #[test]
    fn shares_structural_duplicates() {
        let n = parse_netlist(
            ".inputs a b\n.outputs y z\np = AND(a, b)\nq = AND(b, a)\ny = XOR(p, a)\nz = XOR(q, a)\n",
        )
        .unwrap();
        let s = simplify(&n);
        assert_eq!(s.gates().len(), 2);
        assert_eq!(s.outputs()[0], s.outputs()[1]);
        assert!(check_equivalence(&n, &s, &EquivalenceOptions::default()).unwrap().equivalent);
    }

    #[test]
    fn full_adder_is_already_minimal() {
        let fa = full_adder();
        let s = simplify(&fa);
        assert_eq!(s.gates().len(), 5);
        assert_eq!(s.wire_name(s.outputs()[1]), "cout");
    }

    #[test]
    fn inputs_declared_after_gates() {
        let mut b = NetlistBuilder::new("late");
        let a = b.input("a");
        let g = b.add(GateKind::Not, &[a]);
        let c = b.input("c");
        let y = b.add(GateKind::Xor, &[g, c]);
        b.output(y);
        let n = b.build().unwrap();
        let s = simplify(&n);
        assert!(check_equivalence(&n, &s, &EquivalenceOptions::default()).unwrap().equivalent);
    }

    #[test]
    fn keeps_sequential_logic() {
        let n = parse_netlist(".inputs a\n.outputs q\nd = XOR(a, q)\nq = DFF(d)\nunused = NOT(a)\n").unwrap();
        let s = simplify(&n);
        assert_eq!(s.num_dffs(), 1);
        assert_eq!(s.gates().len(), 2);
        assert!(check_equivalence(&n, &s, &EquivalenceOptions::default()).unwrap().equivalent);
    }
}
