//! Functional equivalence by truth-table exhaustion or random sampling.
//!
//! Both netlists are driven with the same vectors, 64 lanes at a time, and
//! their outputs are XOR-ed (a miter). Sequential netlists are unrolled for a
//! fixed number of cycles from the all-zero state; the input vector then
//! concatenates the per-cycle inputs, cycle 0 in the low bits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bits::BitVector;

use super::{Netlist, NetlistError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EquivalenceMode {
    Exhaustive,
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EquivalenceOptions {
    pub max_exhaustive_inputs: usize,
    pub sample_count: usize,
    pub seed: u64,
    pub unroll_cycles: usize,
}

impl Default for EquivalenceOptions {
    fn default() -> Self {
        EquivalenceOptions {
            max_exhaustive_inputs: 16,
            sample_count: 10_000,
            seed: 0,
            unroll_cycles: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EquivalenceVerdict {
    pub equivalent: bool,
    pub mode: EquivalenceMode,
    pub vectors_checked: u64,
    pub counterexample: Option<BitVector>,
    /// Set when either side had state and was compared over this many cycles.
    pub unrolled_cycles: Option<usize>,
}

impl EquivalenceVerdict {
    /// Re-runs the counterexample and reports whether the outputs differ.
    pub fn replays(&self, n1: &Netlist, n2: &Netlist) -> bool {
        let Some(cex) = &self.counterexample else {
            return false;
        };
        let cycles = self.unrolled_cycles.unwrap_or(1);
        let m = n1.num_inputs();
        let mut s1 = BitVector::zeros(n1.num_dffs());
        let mut s2 = BitVector::zeros(n2.num_dffs());
        for c in 0..cycles {
            let x = cex.slice(c * m, m);
            let (o1, ns1) = n1.evaluate(&x, &s1).expect("widths checked");
            let (o2, ns2) = n2.evaluate(&x, &s2).expect("widths checked");
            if o1 != o2 {
                return true;
            }
            s1 = ns1;
            s2 = ns2;
        }
        false
    }
}

/// Word pattern for exhaustive variable `j` within one 64-lane batch.
fn lane_pattern(j: usize) -> u64 {
    const P: [u64; 6] = [
        0xAAAA_AAAA_AAAA_AAAA,
        0xCCCC_CCCC_CCCC_CCCC,
        0xF0F0_F0F0_F0F0_F0F0,
        0xFF00_FF00_FF00_FF00,
        0xFFFF_0000_FFFF_0000,
        0xFFFF_FFFF_0000_0000,
    ];
    P[j]
}

struct Miter<'a> {
    n1: &'a Netlist,
    n2: &'a Netlist,
    cycles: usize,
    v1: Vec<u64>,
    v2: Vec<u64>,
}

impl Miter<'_> {
    /// Lanes in which any output differs in any cycle.
    fn diff(&mut self, vars: &[u64]) -> u64 {
        let m = self.n1.num_inputs();
        let mut s1 = vec![0u64; self.n1.num_dffs()];
        let mut s2 = vec![0u64; self.n2.num_dffs()];
        let mut diff = 0u64;
        for c in 0..self.cycles {
            let x = &vars[c * m..(c + 1) * m];
            self.n1.eval_words_into(x, &s1, &[], &mut self.v1);
            self.n2.eval_words_into(x, &s2, &[], &mut self.v2);
            for (&a, &b) in self.n1.outputs().iter().zip(self.n2.outputs()) {
                diff |= self.v1[a] ^ self.v2[b];
            }
            s1 = self.n1.next_state_words(&self.v1);
            s2 = self.n2.next_state_words(&self.v2);
        }
        diff
    }
}

fn lane_vector(vars: &[u64], lane: u32) -> BitVector {
    vars.iter().map(|&w| (w >> lane) & 1 == 1).collect()
}

/// Compares two netlists with identical input and output counts.
pub fn check_equivalence(
    n1: &Netlist,
    n2: &Netlist,
    opts: &EquivalenceOptions,
) -> Result<EquivalenceVerdict, NetlistError> {
    if n1.num_inputs() != n2.num_inputs() || n1.num_outputs() != n2.num_outputs() {
        return Err(NetlistError::ArityMismatch(format!(
            "{}x{} vs {}x{}",
            n1.num_inputs(),
            n1.num_outputs(),
            n2.num_inputs(),
            n2.num_outputs()
        )));
    }
    let sequential = !(n1.is_combinational() && n2.is_combinational());
    let cycles = if sequential { opts.unroll_cycles.max(1) } else { 1 };
    let n_vars = cycles * n1.num_inputs();
    let mut miter = Miter {
        n1,
        n2,
        cycles,
        v1: Vec::new(),
        v2: Vec::new(),
    };
    let unrolled_cycles = sequential.then_some(cycles);
    let mut vars = vec![0u64; n_vars];

    if n_vars <= opts.max_exhaustive_inputs {
        let total: u64 = 1u64 << n_vars;
        let mut base = 0u64;
        while base < total {
            let valid = if total - base >= 64 {
                !0u64
            } else {
                (1u64 << (total - base)) - 1
            };
            for (j, w) in vars.iter_mut().enumerate() {
                *w = if j < 6 {
                    lane_pattern(j)
                } else if (base >> j) & 1 == 1 {
                    !0
                } else {
                    0
                };
            }
            let d = miter.diff(&vars) & valid;
            if d != 0 {
                let lane = d.trailing_zeros();
                return Ok(EquivalenceVerdict {
                    equivalent: false,
                    mode: EquivalenceMode::Exhaustive,
                    vectors_checked: base + lane as u64 + 1,
                    counterexample: Some(lane_vector(&vars, lane)),
                    unrolled_cycles,
                });
            }
            base += 64;
        }
        return Ok(EquivalenceVerdict {
            equivalent: true,
            mode: EquivalenceMode::Exhaustive,
            vectors_checked: total,
            counterexample: None,
            unrolled_cycles,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut checked = 0u64;
    let target = opts.sample_count.max(1) as u64;
    while checked < target {
        let batch = (target - checked).min(64);
        let valid = if batch == 64 { !0 } else { (1u64 << batch) - 1 };
        for w in vars.iter_mut() {
            *w = rng.gen();
        }
        let d = miter.diff(&vars) & valid;
        if d != 0 {
            let lane = d.trailing_zeros();
            return Ok(EquivalenceVerdict {
                equivalent: false,
                mode: EquivalenceMode::Sampled,
                vectors_checked: checked + lane as u64 + 1,
                counterexample: Some(lane_vector(&vars, lane)),
                unrolled_cycles,
            });
        }
        checked += batch;
    }
    Ok(EquivalenceVerdict {
        equivalent: true,
        mode: EquivalenceMode::Sampled,
        vectors_checked: checked,
        counterexample: None,
        unrolled_cycles,
    })
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::full_adder;
    use super::super::parse_netlist;
    use super::*;

    #[test]
    fn reflexive_exhaustive() {
        let fa = full_adder();
        let v = check_equivalence(&fa, &fa, &EquivalenceOptions::default()).unwrap();
        assert!(v.equivalent);
        assert_eq!(v.mode, EquivalenceMode::Exhaustive);
        assert_eq!(v.vectors_checked, 8);
        assert!(v.unrolled_cycles.is_none());
    }

    #[test]
    fn counterexample_replays() {
        let fa = full_adder();
        let broken = parse_netlist(
            ".inputs a b cin\n.outputs s cout\nx1 = XOR(a, b)\ns = XOR(x1, cin)\na1 = AND(a, b)\na2 = AND(x1, cin)\ncout = AND(a1, a2)\n",
        )
        .unwrap();
        let v = check_equivalence(&fa, &broken, &EquivalenceOptions::default()).unwrap();
        assert!(!v.equivalent);
        assert!(v.replays(&fa, &broken));
    }

    #[test]
    fn sampled_mode_above_threshold() {
        let fa = full_adder();
        let opts = EquivalenceOptions {
            max_exhaustive_inputs: 2,
            sample_count: 100,
            ..Default::default()
        };
        let v = check_equivalence(&fa, &fa, &opts).unwrap();
        assert!(v.equivalent);
        assert_eq!(v.mode, EquivalenceMode::Sampled);
        assert_eq!(v.vectors_checked, 100);
    }

    #[test]
    fn arity_mismatch() {
        let fa = full_adder();
        let buf = parse_netlist(".inputs a\n.outputs y\ny = BUF(a)\n").unwrap();
        assert!(matches!(
            check_equivalence(&fa, &buf, &EquivalenceOptions::default()),
            Err(NetlistError::ArityMismatch(_))
        ));
    }

    #[test]
    fn sequential_unrolling() {
        // toggle flip-flop vs. a version whose state starts inverted
        let t1 = parse_netlist(".inputs a\n.outputs q\nd = XOR(a, q)\nq = DFF(d)\n").unwrap();
        let t2 = parse_netlist(".inputs a\n.outputs y\nd = XOR(a, q)\nq = DFF(d)\ny = BUF(q)\n").unwrap();
        let t3 = parse_netlist(".inputs a\n.outputs y\nd = XNORISH(a)\n");
        assert!(t3.is_err());
        let v = check_equivalence(&t1, &t2, &EquivalenceOptions::default()).unwrap();
        assert!(v.equivalent);
        assert_eq!(v.unrolled_cycles, Some(4));
        assert_eq!(v.vectors_checked, 16);
        let t4 = parse_netlist(".inputs a\n.outputs y\nd = XOR(a, q)\nq = DFF(d)\ny = NOT(q)\n").unwrap();
        let v = check_equivalence(&t1, &t4, &EquivalenceOptions::default()).unwrap();
        assert!(!v.equivalent);
        assert!(v.replays(&t1, &t4));
    }
}
