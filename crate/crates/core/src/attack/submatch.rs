//! Subcircuit matching: find a piece of f that also appears in the CED
//! block, flip both copies, and hope the check bits still agree.
//!
//! The attacker sees the stored (all-parallel) CED netlist. Switchbox
//! buffers are opaque: a pattern may not pass through them. Pattern leaves
//! are either named primary inputs, which must match by name, or internal
//! wires, which match anything.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use super::{inject, run_trial, AttackDescriptor, AttackError, Payload, Trigger};
use crate::chip::{Block, ProtectedChip};
use crate::netlist::{Driver, GateKind, Netlist, WireId};
use crate::stats::{trial_rng, Proportion};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchOptions {
    /// largest pattern, in gates
    pub max_gates: usize,
    /// pattern seeds tried per trial before giving up
    pub max_seeds: usize,
    /// only attack a pattern with exactly one partner in the CED block
    pub require_unique: bool,
    /// only use patterns whose leaves are all primary inputs
    pub grounded: bool,
    pub cycles: u64,
}

impl Default for MatchOptions {
    fn default() -> Self {
        MatchOptions {
            max_gates: 6,
            max_seeds: 10_000,
            require_unique: true,
            grounded: true,
            cycles: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Pat {
    Input(String),
    Any,
    Gate(GateKind, Vec<Pat>),
}

impl Pat {
    fn grounded(&self) -> bool {
        match self {
            Pat::Input(_) => true,
            Pat::Any => false,
            Pat::Gate(_, kids) => kids.iter().all(Pat::grounded),
        }
    }

    fn gates(&self) -> usize {
        match self {
            Pat::Gate(_, kids) => 1 + kids.iter().map(Pat::gates).sum::<usize>(),
            _ => 0,
        }
    }
}

/// Grows a connected fan-in region of at most `size` gates below `root`.
fn grow<R: Rng + ?Sized>(n: &Netlist, root: usize, size: usize, rng: &mut R) -> Pat {
    let mut chosen = vec![root];
    let mut frontier: Vec<usize> = Vec::new();
    let push_kids = |g: usize, frontier: &mut Vec<usize>, chosen: &[usize]| {
        for &w in &n.gate(g).inputs {
            if let Some(h) = n.driving_gate(w) {
                if n.gate(h).kind != GateKind::Dff && !chosen.contains(&h) && !frontier.contains(&h) {
                    frontier.push(h);
                }
            }
        }
    };
    push_kids(root, &mut frontier, &chosen);
    while chosen.len() < size && !frontier.is_empty() {
        let g = frontier.swap_remove(rng.gen_range(0..frontier.len()));
        chosen.push(g);
        push_kids(g, &mut frontier, &chosen);
    }
    fn build(n: &Netlist, w: WireId, chosen: &[usize], depth: usize) -> Pat {
        match n.driver(w) {
            Driver::Input(_) => Pat::Input(n.wire_name(w).to_string()),
            Driver::Gate(g) if chosen.contains(&g) && depth < 8 => {
                let gate = n.gate(g);
                Pat::Gate(gate.kind, gate.inputs.iter().map(|&i| build(n, i, chosen, depth + 1)).collect())
            }
            _ => Pat::Any,
        }
    }
    build(n, n.gate(root).output, &chosen, 0)
}

struct Target<'a> {
    n: &'a Netlist,
    opaque: Vec<bool>,
}

impl Target<'_> {
    fn matches(&self, p: &Pat, w: WireId) -> bool {
        match p {
            Pat::Any => true,
            Pat::Input(name) => matches!(self.n.driver(w), Driver::Input(_)) && self.n.wire_name(w) == name,
            Pat::Gate(kind, kids) => {
                let Some(g) = self.n.driving_gate(w) else {
                    return false;
                };
                let gate = self.n.gate(g);
                if self.opaque[g] || gate.kind != *kind || gate.inputs.len() != kids.len() {
                    return false;
                }
                if kind.is_commutative() {
                    let mut used = vec![false; kids.len()];
                    self.assign(kids, &gate.inputs, 0, &mut used)
                } else {
                    kids.iter().zip(&gate.inputs).all(|(k, &i)| self.matches(k, i))
                }
            }
        }
    }

    fn assign(&self, kids: &[Pat], wires: &[WireId], at: usize, used: &mut [bool]) -> bool {
        if at == kids.len() {
            return true;
        }
        for j in 0..wires.len() {
            if !used[j] && self.matches(&kids[at], wires[j]) {
                used[j] = true;
                if self.assign(kids, wires, at + 1, used) {
                    return true;
                }
                used[j] = false;
            }
        }
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubcircuitMatchReport {
    pub trials: u64,
    /// trials in which a usable match was found
    pub matched: u64,
    /// matched trials that went undetected
    pub successes: u64,
}

impl SubcircuitMatchReport {
    pub fn success_rate(&self) -> f64 {
        Proportion::new(self.successes, self.trials).rate()
    }
}

/// Runs the attack `trials` times against the chip's CED block.
pub fn subcircuit_match_attack(
    chip: &ProtectedChip,
    trials: u64,
    seed: u64,
    opts: &MatchOptions,
) -> Result<SubcircuitMatchReport, AttackError> {
    let f = &chip.f;
    let stored = &chip.ced.netlist;
    let mut opaque = vec![false; stored.gates().len()];
    for g in chip.ced.switchbox_gates() {
        opaque[g] = true;
    }
    let target = Target { n: stored, opaque };
    let f_gates: Vec<usize> = (0..f.gates().len())
        .filter(|&g| !matches!(f.gate(g).kind, GateKind::Dff | GateKind::Const0 | GateKind::Const1))
        .collect();
    let roots: Vec<usize> = (0..stored.gates().len()).filter(|&g| !target.opaque[g]).collect();
    if f_gates.is_empty() {
        return Ok(SubcircuitMatchReport {
            trials,
            matched: 0,
            successes: 0,
        });
    }

    let outcomes = (0..trials)
        .into_par_iter()
        .map(|trial| -> Result<(bool, bool), AttackError> {
            let mut rng = trial_rng(seed, trial);
            for _ in 0..opts.max_seeds {
                let g = *f_gates.choose(&mut rng).expect("nonempty");
                let size = rng.gen_range(1..=opts.max_gates.max(1));
                let pat = grow(f, g, size, &mut rng);
                if pat.gates() == 0 || (opts.grounded && !pat.grounded()) {
                    continue;
                }
                let hits: Vec<usize> = roots
                    .iter()
                    .copied()
                    .filter(|&h| target.matches(&pat, stored.gate(h).output))
                    .collect();
                if hits.is_empty() || (opts.require_unique && hits.len() > 1) {
                    continue;
                }
                let h = *hits.choose(&mut rng).expect("nonempty");
                let attacks = [
                    AttackDescriptor::logic(f.wire_name(f.gate(g).output), Payload::Flip, Trigger::Always),
                    AttackDescriptor::new(
                        super::AttackKind::Logic,
                        Payload::Flip,
                        super::Target::Gate {
                            block: Block::Ced,
                            name: stored.wire_name(stored.gate(h).output).to_string(),
                        },
                        Trigger::Always,
                    ),
                ];
                let atk = inject(chip, &attacks)?;
                let detected = run_trial(&atk, opts.cycles, rng.gen(), rng.gen())?.is_some();
                return Ok((true, !detected));
            }
            Ok((false, false))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SubcircuitMatchReport {
        trials,
        matched: outcomes.iter().filter(|o| o.0).count() as u64,
        successes: outcomes.iter().filter(|o| o.1).count() as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chip::{build_protected_chip, ChipOptions};
    use crate::lfsr::LfsrSpec;
    use crate::library;
    use crate::netlist::parse_netlist;
    use crate::parity::ParityCheckMatrix;

    fn lfsr(r: usize) -> LfsrSpec {
        LfsrSpec::standard(16, 0x1234, (0..r).collect()).unwrap()
    }

    #[test]
    fn pattern_matching_respects_names_and_opacity() {
        let n = parse_netlist(".inputs a b c\n.outputs y\nx = XOR(a, b)\ny = AND(c, x)\n").unwrap();
        let t = Target {
            n: &n,
            opaque: vec![false; 2],
        };
        let y = n.wire_by_name("y").unwrap();
        let p = Pat::Gate(
            GateKind::And,
            vec![Pat::Gate(GateKind::Xor, vec![Pat::Input("b".into()), Pat::Any]), Pat::Input("c".into())],
        );
        assert!(t.matches(&p, y));
        let wrong = Pat::Gate(GateKind::And, vec![Pat::Input("a".into()), Pat::Any]);
        assert!(!t.matches(&wrong, y));
        let t = Target {
            n: &n,
            opaque: vec![true, false],
        };
        assert!(!t.matches(&p, y));
        assert!(t.matches(&Pat::Gate(GateKind::And, vec![Pat::Any, Pat::Any]), y));
    }

    #[test]
    fn identity_code_without_switchboxes_is_vulnerable() {
        // with A = I the CED block holds a literal copy of f; the adder has
        // no duplicated gates for hash-consing to merge
        let f = library::ripple_adder(3);
        let opts = ChipOptions {
            logic_code: Some(ParityCheckMatrix::from_columns(4, 4, vec![1, 2, 4, 8]).unwrap()),
            ..ChipOptions::default()
        };
        let chip = build_protected_chip(&f, 4, 0, lfsr(4), 1, &opts).unwrap();
        let rep = subcircuit_match_attack(&chip, 200, 5, &MatchOptions::default()).unwrap();
        assert_eq!(rep.matched, 200);
        assert!(rep.success_rate() > 0.9, "{rep:?}");
    }

    #[test]
    fn merged_duplicates_spoil_some_matches() {
        // the ALU computes XOR(a0, b0) twice; the CED block keeps one copy,
        // so flipping it disturbs both uses and the mismatch is caught
        let chip = build_protected_chip(&library::alu2(), 3, 0, lfsr(3), 1, &ChipOptions::default()).unwrap();
        let rep = subcircuit_match_attack(&chip, 100, 5, &MatchOptions::default()).unwrap();
        assert_eq!(rep.matched, 100);
        assert!(rep.successes > 20 && rep.successes < 95, "{rep:?}");
    }

    #[test]
    fn nothing_to_match() {
        // y = z, so with A = [1 1] the predictor folds to a constant and
        // the CED block holds no AND gate at all
        let f = parse_netlist(".inputs a b\n.outputs y z\ny = AND(a, b)\nz = AND(b, a)\n").unwrap();
        let opts = ChipOptions {
            logic_code: Some(ParityCheckMatrix::from_columns(2, 1, vec![1, 1]).unwrap()),
            ..ChipOptions::default()
        };
        let chip = build_protected_chip(&f, 1, 0, lfsr(1), 1, &opts).unwrap();
        assert!(chip.ced.netlist.gates().iter().all(|g| g.kind != GateKind::And));
        let opts = MatchOptions {
            max_seeds: 50,
            ..MatchOptions::default()
        };
        let rep = subcircuit_match_attack(&chip, 50, 1, &opts).unwrap();
        assert_eq!((rep.matched, rep.successes), (0, 0));
    }
}
