//! Randomized systematic parity codes over GF(2).
//!
//! A code is described by the `r x k` matrix `A` of its parity-check matrix
//! `H = [A | I_r]`. Check bit `i` is the parity of the information bits
//! selected by row `i` of `A`. Every row and every column of `A` is
//! nonzero, so no check bit is constant and every information bit is
//! covered by at least one check.
//!
//! Columns are stored as `u64` masks (bit `i` = row `i`), which bounds `r`
//! at 64.

use std::fmt::Write as _;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::bits::BitVector;
use crate::error::WidthMismatch;
use crate::netlist::{simplify, GateKind, Netlist, NetlistBuilder, NetlistError, WireId};
use crate::stats::{trial_rng, Proportion};

pub const MAX_CHECK_BITS: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParityError {
    #[error("invalid code dimensions k={k}, r={r}")]
    Dimensions { k: usize, r: usize },
    #[error("row {0} of A is zero")]
    ZeroRow(usize),
    #[error("column {0} of A is zero")]
    ZeroColumn(usize),
    #[error(transparent)]
    Width(#[from] WidthMismatch),
    #[error("error weight {weight} outside 1..={max}")]
    InvalidWeight { weight: usize, max: usize },
    #[error("function has {got} outputs, code expects k={expected}")]
    OutputArity { expected: usize, got: usize },
    #[error("matrix file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Netlist(#[from] NetlistError),
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ParityCheckMatrix {
    k: usize,
    r: usize,
    cols: Vec<u64>,
}

impl std::fmt::Debug for ParityCheckMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ParityCheckMatrix(k={}, r={}) [", self.k, self.r)?;
        for i in 0..self.r {
            if i > 0 {
                f.write_str(" / ")?;
            }
            for j in 0..self.k {
                f.write_str(if self.get(i, j) { "1" } else { "0" })?;
            }
        }
        f.write_str("]")
    }
}

fn row_mask(r: usize) -> u64 {
    if r == 64 {
        !0
    } else {
        (1u64 << r) - 1
    }
}

impl ParityCheckMatrix {
    fn check_dims(k: usize, r: usize) -> Result<(), ParityError> {
        if k == 0 || r == 0 || r > MAX_CHECK_BITS {
            Err(ParityError::Dimensions { k, r })
        } else {
            Ok(())
        }
    }

    /// Builds `A` from its rows, enforcing the nonzero row/column invariant.
    pub fn from_rows(rows: &[Vec<bool>]) -> Result<Self, ParityError> {
        let r = rows.len();
        let k = rows.first().map_or(0, Vec::len);
        Self::check_dims(k, r)?;
        let mut cols = vec![0u64; k];
        for (i, row) in rows.iter().enumerate() {
            WidthMismatch::check(k, row.len())?;
            for (j, &b) in row.iter().enumerate() {
                if b {
                    cols[j] |= 1 << i;
                }
            }
        }
        Self::from_columns(k, r, cols)
    }

    /// Builds `A` from column masks (bit `i` of a mask is row `i`).
    pub fn from_columns(k: usize, r: usize, cols: Vec<u64>) -> Result<Self, ParityError> {
        Self::check_dims(k, r)?;
        WidthMismatch::check(k, cols.len())?;
        if let Some(j) = cols.iter().position(|&c| c & row_mask(r) == 0) {
            return Err(ParityError::ZeroColumn(j));
        }
        let union = cols.iter().fold(0u64, |a, &c| a | c);
        if let Some(i) = (0..r).find(|&i| union >> i & 1 == 0) {
            return Err(ParityError::ZeroRow(i));
        }
        Ok(ParityCheckMatrix {
            k,
            r,
            cols: cols.into_iter().map(|c| c & row_mask(r)).collect(),
        })
    }

    /// Uniform sample from all valid `A` of the given shape.
    ///
    /// Each column is drawn uniformly from the `2^r - 1` nonzero vectors and
    /// the whole draw is rejected only if some row ends up zero. Conditioning
    /// the product of uniform nonzero columns on "no zero row" gives the same
    /// law as rejecting whole uniform matrices on both constraints.
    pub fn sample<R: Rng + ?Sized>(k: usize, r: usize, rng: &mut R) -> Result<Self, ParityError> {
        Self::check_dims(k, r)?;
        let mask = row_mask(r);
        loop {
            let cols: Vec<u64> = (0..k)
                .map(|_| loop {
                    let c = rng.gen::<u64>() & mask;
                    if c != 0 {
                        break c;
                    }
                })
                .collect();
            if cols.iter().fold(0u64, |a, &c| a | c) == mask {
                return Ok(ParityCheckMatrix { k, r, cols });
            }
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn n(&self) -> usize {
        self.k + self.r
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.cols[col] >> row & 1 == 1
    }

    pub fn column(&self, j: usize) -> u64 {
        self.cols[j]
    }

    pub fn row(&self, i: usize) -> Vec<bool> {
        (0..self.k).map(|j| self.get(i, j)).collect()
    }

    /// Full `r x (k + r)` parity-check matrix `[A | I_r]`.
    pub fn h_rows(&self) -> Vec<Vec<bool>> {
        (0..self.r)
            .map(|i| {
                let mut row = self.row(i);
                row.extend((0..self.r).map(|c| c == i));
                row
            })
            .collect()
    }

    /// Check bits as an integer mask (bit `i` = check bit `i`).
    pub fn check_mask(&self, info: &BitVector) -> Result<u64, ParityError> {
        WidthMismatch::check(self.k, info.width())?;
        Ok(info
            .iter()
            .zip(&self.cols)
            .filter(|(b, _)| *b)
            .fold(0u64, |acc, (_, &c)| acc ^ c))
    }

    pub fn compute_check_bits(&self, info: &BitVector) -> Result<BitVector, ParityError> {
        Ok(BitVector::from_u64(self.check_mask(info)?, self.r))
    }

    pub fn verify_codeword(&self, word: &Codeword) -> Result<bool, ParityError> {
        WidthMismatch::check(self.r, word.check.width())?;
        Ok(self.check_mask(&word.info)? == word.check.to_u64())
    }

    pub fn encode(&self, info: BitVector) -> Result<Codeword, ParityError> {
        let check = self.compute_check_bits(&info)?;
        Ok(Codeword { info, check })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {}", self.k, self.r);
        for i in 0..self.r {
            for j in 0..self.k {
                s.push(if self.get(i, j) { '1' } else { '0' });
            }
            s.push('\n');
        }
        s
    }

    /// Reads the matrix file format: a `k r` header then `r` lines of `k` bits.
    pub fn from_text(text: &str) -> Result<Self, ParityError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let fmt_err = |line, message: &str| ParityError::Format {
            line,
            message: message.to_string(),
        };
        let (hl, header) = lines.next().ok_or_else(|| fmt_err(1, "missing header"))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| fmt_err(hl, "header must be `k r`"))?;
        let [k, r] = dims[..] else {
            return Err(fmt_err(hl, "header must be `k r`"));
        };
        let mut rows = Vec::with_capacity(r);
        for _ in 0..r {
            let (ln, l) = lines.next().ok_or_else(|| fmt_err(hl, "too few rows"))?;
            let row: Vec<bool> = l
                .chars()
                .filter(|c| !c.is_whitespace())
                .map(|c| match c {
                    '0' => Ok(false),
                    '1' => Ok(true),
                    _ => Err(fmt_err(ln, "rows hold only 0 and 1")),
                })
                .collect::<Result<_, _>>()?;
            if row.len() != k {
                return Err(fmt_err(ln, "row length differs from k"));
            }
            rows.push(row);
        }
        if let Some((ln, _)) = lines.next() {
            return Err(fmt_err(ln, "trailing data"));
        }
        Self::from_rows(&rows)
    }
}

/// Convenience wrapper around [`ParityCheckMatrix::sample`] with a seed.
pub fn sample_parity_code(k: usize, r: usize, seed: u64) -> Result<ParityCheckMatrix, ParityError> {
    ParityCheckMatrix::sample(k, r, &mut trial_rng(seed, 0))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Codeword {
    pub info: BitVector,
    pub check: BitVector,
}

impl Codeword {
    /// Flips bit `pos` of the `n`-bit word; positions `>= k` hit check bits.
    pub fn flip(&mut self, pos: usize) {
        let k = self.info.width();
        if pos < k {
            self.info.flip(pos);
        } else {
            self.check.flip(pos - k);
        }
    }
}

pub(crate) fn xor_tree(b: &mut NetlistBuilder, mut terms: Vec<WireId>) -> WireId {
    while terms.len() > 1 {
        let mut next = Vec::with_capacity(terms.len().div_ceil(2));
        for pair in terms.chunks(2) {
            match pair {
                [x, y] => next.push(b.add(GateKind::Xor, &[*x, *y])),
                [x] => next.push(*x),
                _ => unreachable!(),
            }
        }
        terms = next;
    }
    terms[0]
}

/// Output characteristic predictor: a netlist computing the check bits of
/// `f`'s outputs directly from `f`'s inputs.
///
/// A copy of `f` feeds one balanced XOR tree per row of `A`; the result is
/// then simplified.
pub fn build_ocp(f: &Netlist, code: &ParityCheckMatrix) -> Result<Netlist, ParityError> {
    if f.num_outputs() != code.k() {
        return Err(ParityError::OutputArity {
            expected: code.k(),
            got: f.num_outputs(),
        });
    }
    let mut b = f.to_builder();
    b.set_name(format!("{}_ocp", f.name()));
    let outs = f.outputs().to_vec();
    let mut preds = Vec::with_capacity(code.r());
    for i in 0..code.r() {
        let terms: Vec<WireId> = (0..code.k())
            .filter(|&j| code.get(i, j))
            .map(|j| outs[j])
            .collect();
        let root = xor_tree(&mut b, terms);
        let name = b.fresh_name("_p");
        preds.push(b.gate(GateKind::Buf, &name, &[root]));
    }
    *b.outputs_mut() = preds;
    Ok(simplify(&b.build()?))
}

/// Monte Carlo probability that a weight-`weight` error on a random codeword
/// of a freshly sampled `(k + r, k)` code is detected.
///
/// Error positions are drawn uniformly without replacement over all `k + r`
/// codeword bits.
pub fn estimate_detection(
    k: usize,
    r: usize,
    weight: usize,
    trials: u64,
    seed: u64,
) -> Result<Proportion, ParityError> {
    ParityCheckMatrix::check_dims(k, r)?;
    let n = k + r;
    if weight == 0 || weight > n {
        return Err(ParityError::InvalidWeight { weight, max: n });
    }
    estimate_with(k, r, trials, seed, move |_| weight)
}

/// As [`estimate_detection`], with the error weight drawn uniformly from
/// `1..=k+r` in every trial.
pub fn estimate_detection_uniform_weight(
    k: usize,
    r: usize,
    trials: u64,
    seed: u64,
) -> Result<Proportion, ParityError> {
    ParityCheckMatrix::check_dims(k, r)?;
    let n = k + r;
    estimate_with(k, r, trials, seed, move |rng| rng.gen_range(1..=n))
}

fn estimate_with<F>(k: usize, r: usize, trials: u64, seed: u64, weight: F) -> Result<Proportion, ParityError>
where
    F: Fn(&mut rand_chacha::ChaCha8Rng) -> usize + Sync,
{
    let n = k + r;
    let hits = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t);
            let code = ParityCheckMatrix::sample(k, r, &mut rng).expect("dimensions checked");
            let w = weight(&mut rng);
            let mut word = code
                .encode(BitVector::random(k, &mut rng))
                .expect("width k");
            for pos in index::sample(&mut rng, n, w) {
                word.flip(pos);
            }
            !code.verify_codeword(&word).expect("widths match") as u64
        })
        .sum();
    Ok(Proportion::new(hits, trials))
}

/// Fraction form of [`estimate_detection`].
pub fn estimate_detection_probability(
    k: usize,
    r: usize,
    weight: usize,
    trials: u64,
    seed: u64,
) -> Result<f64, ParityError> {
    Ok(estimate_detection(k, r, weight, trials, seed)?.rate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::{check_equivalence, parse_netlist, EquivalenceOptions};
    use std::collections::HashMap;

    fn a_example() -> ParityCheckMatrix {
        ParityCheckMatrix::from_rows(&[
            vec![true, true, false, false],
            vec![false, false, true, true],
            vec![true, false, true, false],
        ])
        .unwrap()
    }

    #[test]
    fn one_by_one_is_forced() {
        for seed in 0..5 {
            let h = sample_parity_code(1, 1, seed).unwrap();
            assert!(h.get(0, 0));
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        assert_eq!(sample_parity_code(4, 3, 9).unwrap(), sample_parity_code(4, 3, 9).unwrap());
        assert_ne!(sample_parity_code(40, 8, 9).unwrap(), sample_parity_code(40, 8, 10).unwrap());
    }

    /// Enumerates all 2^6 matrices for (k=3, r=2), keeps the valid ones and
    /// compares sampled frequencies against the uniform law.
    #[test]
    fn sampling_is_uniform_over_valid_matrices() {
        let (k, r) = (3, 2);
        let mut valid = Vec::new();
        for bits in 0u32..64 {
            let rows: Vec<Vec<bool>> = (0..r)
                .map(|i| (0..k).map(|j| bits >> (i * k + j) & 1 == 1).collect())
                .collect();
            let row_ok = rows.iter().all(|row| row.iter().any(|&b| b));
            let col_ok = (0..k).all(|j| rows.iter().any(|row| row[j]));
            if row_ok && col_ok {
                valid.push(ParityCheckMatrix::from_rows(&rows).unwrap());
            }
        }
        assert_eq!(valid.len(), 25);

        let samples = 10_000u64;
        let mut counts: HashMap<ParityCheckMatrix, u64> = HashMap::new();
        let mut rng = trial_rng(2024, 0);
        for _ in 0..samples {
            *counts.entry(ParityCheckMatrix::sample(k, r, &mut rng).unwrap()).or_default() += 1;
        }
        assert_eq!(counts.len(), valid.len());
        let p = 1.0 / valid.len() as f64;
        let expected = samples as f64 * p;
        let sigma = (samples as f64 * p * (1.0 - p)).sqrt();
        let mut chi2 = 0.0;
        for m in &valid {
            let c = counts[m] as f64;
            assert!((c - expected).abs() <= 3.0 * sigma, "{m:?}: {c}");
            chi2 += (c - expected).powi(2) / expected;
        }
        // chi-square, 24 degrees of freedom, p = 0.001
        assert!(chi2 < 51.18, "chi2 = {chi2}");
    }

    #[test]
    fn invariants_rejected() {
        assert_eq!(
            ParityCheckMatrix::from_rows(&[vec![true, true], vec![false, false]]),
            Err(ParityError::ZeroRow(1))
        );
        assert_eq!(
            ParityCheckMatrix::from_rows(&[vec![true, false], vec![true, false]]),
            Err(ParityError::ZeroColumn(1))
        );
        assert!(matches!(
            ParityCheckMatrix::sample(0, 3, &mut trial_rng(0, 0)),
            Err(ParityError::Dimensions { .. })
        ));
    }

    #[test]
    fn check_bits_by_hand() {
        // info = 1011 written MSB-first, i.e. info[0]=1, info[1]=1, info[2]=0, info[3]=1
        let info = BitVector::from_bit_str("1011").unwrap();
        let check = a_example().compute_check_bits(&info).unwrap();
        // row0: i0^i1 = 0, row1: i2^i3 = 1, row2: i0^i2 = 1
        assert_eq!(check.to_bit_string(), "110");

        // same rows applied to info bits listed left to right
        let info_lr = BitVector::from_bits(vec![true, false, true, true]);
        let check_lr = a_example().compute_check_bits(&info_lr).unwrap();
        assert_eq!(check_lr.bits(), &[true, false, false]);
    }

    #[test]
    fn zero_info_gives_zero_checks_and_identity() {
        let h = sample_parity_code(10, 4, 3).unwrap();
        assert!(h.compute_check_bits(&BitVector::zeros(10)).unwrap().is_zero());
        let id = ParityCheckMatrix::from_columns(3, 3, vec![1, 2, 4]).unwrap();
        let v = BitVector::from_u64(0b101, 3);
        assert_eq!(id.compute_check_bits(&v).unwrap(), v);
        assert!(matches!(
            h.compute_check_bits(&BitVector::zeros(9)),
            Err(ParityError::Width(_))
        ));
    }

    #[test]
    fn single_flips_always_break_codewords() {
        let mut rng = trial_rng(11, 0);
        for _ in 0..50 {
            let h = ParityCheckMatrix::sample(12, 3, &mut rng).unwrap();
            let word = h.encode(BitVector::random(12, &mut rng)).unwrap();
            assert!(h.verify_codeword(&word).unwrap());
            for pos in 0..h.n() {
                let mut bad = word.clone();
                bad.flip(pos);
                assert!(!h.verify_codeword(&bad).unwrap());
            }
        }
        let h = sample_parity_code(5, 2, 0).unwrap();
        let zero = Codeword {
            info: BitVector::zeros(5),
            check: BitVector::zeros(2),
        };
        assert!(h.verify_codeword(&zero).unwrap());
    }

    #[test]
    fn text_round_trip() {
        let h = sample_parity_code(7, 3, 5).unwrap();
        assert_eq!(ParityCheckMatrix::from_text(&h.to_text()).unwrap(), h);
        assert!(matches!(
            ParityCheckMatrix::from_text("2 1\n1x\n"),
            Err(ParityError::Format { line: 2, .. })
        ));
        assert!(matches!(ParityCheckMatrix::from_text("2 1\n00\n"), Err(ParityError::ZeroColumn(0))));
    }

    fn full_adder() -> Netlist {
        parse_netlist(
            ".inputs a b cin\n.outputs s cout\nx1 = XOR(a, b)\ns = XOR(x1, cin)\na1 = AND(a, b)\na2 = AND(x1, cin)\ncout = OR(a1, a2)\n",
        )
        .unwrap()
    }

    #[test]
    fn ocp_for_full_adder() {
        let fa = full_adder();
        let h = ParityCheckMatrix::from_rows(&[vec![true, true]]).unwrap();
        let ocp = build_ocp(&fa, &h).unwrap();
        assert_eq!(ocp.num_outputs(), 1);
        assert_eq!(ocp.eval_comb(&BitVector::from_u64(0b011, 3)).unwrap().to_u64(), 1);
        for v in 0..8 {
            let x = BitVector::from_u64(v, 3);
            let reference = h.compute_check_bits(&fa.eval_comb(&x).unwrap()).unwrap();
            assert_eq!(ocp.eval_comb(&x).unwrap(), reference);
        }
    }

    #[test]
    fn identity_code_ocp_is_the_function() {
        let fa = full_adder();
        let id = ParityCheckMatrix::from_columns(2, 2, vec![1, 2]).unwrap();
        let ocp = build_ocp(&fa, &id).unwrap();
        assert!(check_equivalence(&ocp, &fa, &EquivalenceOptions::default()).unwrap().equivalent);
    }

    #[test]
    fn ocp_output_arity_checked() {
        let h = sample_parity_code(3, 2, 0).unwrap();
        assert!(matches!(build_ocp(&full_adder(), &h), Err(ParityError::OutputArity { .. })));
    }

    #[test]
    fn weight_one_detection_is_certain() {
        let p = estimate_detection(100, 3, 1, 2_000, 1).unwrap();
        assert_eq!(p.hits, p.trials);
        assert!(estimate_detection(10, 3, 14, 10, 0).is_err());
        assert!(estimate_detection(10, 3, 0, 10, 0).is_err());
    }
}
