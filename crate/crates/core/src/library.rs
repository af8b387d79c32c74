//! Small reference circuits used by tests, examples and sweeps.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::netlist::{parse_netlist, GateKind, Netlist, NetlistBuilder, WireId};
use crate::stats::trial_rng;

pub const FULL_ADDER: &str = "\
.model full_adder
.inputs a b cin
.outputs s cout
x1 = XOR(a, b)
s = XOR(x1, cin)
a1 = AND(a, b)
a2 = AND(x1, cin)
cout = OR(a1, a2)
.end
";

/// ISCAS-85 c17.
pub const C17: &str = "\
.model c17
.inputs g1 g2 g3 g6 g7
.outputs g22 g23
g10 = NAND(g1, g3)
g11 = NAND(g3, g6)
g16 = NAND(g2, g11)
g19 = NAND(g11, g7)
g22 = NAND(g10, g16)
g23 = NAND(g16, g19)
.end
";

pub fn full_adder() -> Netlist {
    parse_netlist(FULL_ADDER).expect("fixture parses")
}

pub fn c17() -> Netlist {
    parse_netlist(C17).expect("fixture parses")
}

fn add_full_adder(b: &mut NetlistBuilder, a: WireId, x: WireId, cin: WireId, s_name: &str) -> (WireId, WireId) {
    let p = b.add(GateKind::Xor, &[a, x]);
    let s = b.gate(GateKind::Xor, s_name, &[p, cin]);
    let g = b.add(GateKind::And, &[a, x]);
    let t = b.add(GateKind::And, &[p, cin]);
    let c = b.add(GateKind::Or, &[g, t]);
    (s, c)
}

/// `n`-bit ripple-carry adder: inputs `a0.., b0.., cin`, outputs
/// `s0.., cout`, bit 0 least significant.
pub fn ripple_adder(n: usize) -> Netlist {
    assert!(n > 0);
    let mut b = NetlistBuilder::new(format!("adder{n}"));
    let a: Vec<WireId> = (0..n).map(|i| b.input(&format!("a{i}"))).collect();
    let x: Vec<WireId> = (0..n).map(|i| b.input(&format!("b{i}"))).collect();
    let mut carry = b.input("cin");
    let mut sums = Vec::with_capacity(n);
    for i in 0..n {
        let (s, c) = add_full_adder(&mut b, a[i], x[i], carry, &format!("s{i}"));
        sums.push(s);
        carry = c;
    }
    for s in sums {
        b.output(s);
    }
    let cout = b.gate(GateKind::Buf, "cout", &[carry]);
    b.output(cout);
    b.build().expect("adder is well formed")
}

/// Two-bit ALU. `op1 op0` selects AND (00), OR (01), XOR (10) or ADD (11);
/// outputs are `y0 y1` plus the adder carry `c`.
pub fn alu2() -> Netlist {
    let mut b = NetlistBuilder::new("alu2");
    let a: Vec<WireId> = (0..2).map(|i| b.input(&format!("a{i}"))).collect();
    let x: Vec<WireId> = (0..2).map(|i| b.input(&format!("b{i}"))).collect();
    let op0 = b.input("op0");
    let op1 = b.input("op1");
    let n0 = b.add(GateKind::Not, &[op0]);
    let n1 = b.add(GateKind::Not, &[op1]);
    let sel = [
        b.add(GateKind::And, &[n1, n0]),
        b.add(GateKind::And, &[n1, op0]),
        b.add(GateKind::And, &[op1, n0]),
        b.add(GateKind::And, &[op1, op0]),
    ];
    let zero = b.add(GateKind::Const0, &[]);
    let (s0, c0) = add_full_adder(&mut b, a[0], x[0], zero, "_sum0");
    let (s1, c1) = add_full_adder(&mut b, a[1], x[1], c0, "_sum1");
    let sums = [s0, s1];
    for i in 0..2 {
        let and = b.add(GateKind::And, &[a[i], x[i]]);
        let or = b.add(GateKind::Or, &[a[i], x[i]]);
        let xor = b.add(GateKind::Xor, &[a[i], x[i]]);
        let terms: Vec<WireId> = [and, or, xor, sums[i]]
            .iter()
            .zip(&sel)
            .map(|(&v, &s)| b.add(GateKind::And, &[v, s]))
            .collect();
        let y = b.gate(GateKind::Or, &format!("y{i}"), &terms);
        b.output(y);
    }
    let c = b.gate(GateKind::And, "c", &[c1, sel[3]]);
    b.output(c);
    b.build().expect("alu is well formed")
}

/// Random combinational netlist of 2-input gates. Every gate draws its
/// inputs from earlier wires; the last `outputs` gates are the outputs.
pub fn random_circuit(inputs: usize, outputs: usize, gates: usize, seed: u64) -> Netlist {
    assert!(inputs >= 2 && outputs >= 1 && gates >= outputs);
    let mut rng = trial_rng(seed, 0);
    let kinds = [
        GateKind::And,
        GateKind::Or,
        GateKind::Xor,
        GateKind::Nand,
        GateKind::Nor,
    ];
    let mut b = NetlistBuilder::new(format!("rand{seed}"));
    let mut pool: Vec<WireId> = (0..inputs).map(|i| b.input(&format!("i{i}"))).collect();
    let mut outs = Vec::new();
    for g in 0..gates {
        // bias towards recent wires so the circuit has depth
        let pick = |rng: &mut rand_chacha::ChaCha8Rng, pool: &[WireId]| {
            let lo = pool.len().saturating_sub(inputs + 4);
            if rng.gen_bool(0.7) {
                pool[rng.gen_range(lo..pool.len())]
            } else {
                *pool.choose(rng).unwrap()
            }
        };
        let x = pick(&mut rng, &pool);
        let mut y = pick(&mut rng, &pool);
        while y == x {
            y = *pool.choose(&mut rng).unwrap();
        }
        let kind = *kinds.choose(&mut rng).unwrap();
        let name = if g + outputs >= gates {
            format!("o{}", g + outputs - gates)
        } else {
            format!("g{g}")
        };
        let w = b.gate(kind, &name, &[x, y]);
        if g + outputs >= gates {
            outs.push(w);
        }
        pool.push(w);
    }
    for o in outs {
        b.output(o);
    }
    b.build().expect("random circuit is well formed")
}

/// Looks up a built-in circuit by name: `full_adder`, `c17`, `alu2`,
/// `adderN`.
pub fn by_name(name: &str) -> Option<Netlist> {
    match name {
        "full_adder" => Some(full_adder()),
        "c17" => Some(c17()),
        "alu2" => Some(alu2()),
        _ => name
            .strip_prefix("adder")
            .and_then(|n| n.parse().ok())
            .filter(|&n: &usize| (1..=32).contains(&n))
            .map(ripple_adder),
    }
}
