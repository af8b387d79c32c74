//! LFSR-encoded error signals and the trusted monitor that reads them.
//!
//! A healthy checker emits the current LFSR tap bits; any mismatch between
//! predicted and actual check bits perturbs that value. Several checker
//! outputs are merged bitwise with OR where the tap bit is 0 and AND where it
//! is 1, so a deviation in any one checker survives the merge.

use std::fmt::Write as _;

use thiserror::Error;

use crate::bits::BitVector;
use crate::error::WidthMismatch;

/// Largest degree accepted by [`is_primitive`] (exhaustive period walk).
pub const MAX_PRIMITIVE_CHECK_DEGREE: u32 = 24;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LfsrError {
    #[error("LFSR state is zero")]
    ZeroState,
    #[error("degree must be in 1..=64, got {0}")]
    Degree(u32),
    #[error("unsupported degree {degree} for primitivity testing (max {max})")]
    UnsupportedDegree { degree: u32, max: u32 },
    #[error("polynomial {poly:#x} does not have degree {degree} with constant term 1")]
    Polynomial { poly: u128, degree: u32 },
    #[error("seed {seed:#x} does not fit in {degree} bits")]
    Seed { seed: u64, degree: u32 },
    #[error("tap {0} repeated or out of range")]
    Tap(usize),
    #[error("no error signals to combine")]
    NoSignals,
    #[error(transparent)]
    Width(#[from] WidthMismatch),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

fn low_mask(degree: u32) -> u64 {
    if degree == 64 {
        u64::MAX
    } else {
        (1u64 << degree) - 1
    }
}

/// Fibonacci LFSR description.
///
/// `poly` holds the coefficients of `x^0 .. x^L` (bit `i` is the coefficient
/// of `x^i`); both `x^L` and `1` must be present. The state bit `i` is the
/// `i`-th oldest element of the sequence window; each step shifts toward
/// bit 0 and feeds the parity of the polynomial-selected bits into bit
/// `L - 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LfsrSpec {
    degree: u32,
    poly: u128,
    seed: u64,
    taps: Vec<usize>,
}

impl LfsrSpec {
    pub fn new(degree: u32, poly: u128, seed: u64, taps: Vec<usize>) -> Result<Self, LfsrError> {
        if !(1..=64).contains(&degree) {
            return Err(LfsrError::Degree(degree));
        }
        if poly >> degree != 1 || poly & 1 == 0 {
            return Err(LfsrError::Polynomial { poly, degree });
        }
        if seed == 0 {
            return Err(LfsrError::ZeroState);
        }
        if seed & !low_mask(degree) != 0 {
            return Err(LfsrError::Seed { seed, degree });
        }
        for (i, &t) in taps.iter().enumerate() {
            if t >= degree as usize || taps[..i].contains(&t) {
                return Err(LfsrError::Tap(t));
            }
        }
        Ok(LfsrSpec {
            degree,
            poly,
            seed,
            taps,
        })
    }

    /// A spec using a built-in primitive polynomial of the given degree.
    pub fn standard(degree: u32, seed: u64, taps: Vec<usize>) -> Result<Self, LfsrError> {
        let poly = standard_primitive(degree).ok_or(LfsrError::Degree(degree))?;
        Self::new(degree, poly, seed, taps)
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn poly(&self) -> u128 {
        self.poly
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn taps(&self) -> &[usize] {
        &self.taps
    }

    pub fn r(&self) -> usize {
        self.taps.len()
    }

    fn feedback_mask(&self) -> u64 {
        (self.poly as u64) & low_mask(self.degree)
    }

    /// Spec file text (`key = value` lines).
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "L = {}", self.degree);
        let _ = writeln!(s, "poly = {:#x}", self.poly);
        let _ = writeln!(s, "seed = {:#x}", self.seed);
        let taps: Vec<String> = self.taps.iter().map(|t| t.to_string()).collect();
        let _ = writeln!(s, "taps = {}", taps.join(","));
        s
    }

    pub fn from_text(text: &str) -> Result<Self, LfsrError> {
        let (mut degree, mut poly, mut seed, mut taps) = (None, None, None, None);
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: String| LfsrError::Format {
                line: i + 1,
                message: m,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err("expected `key = value`".into()))?;
            let v = v.trim();
            match k.trim() {
                "L" => degree = Some(v.parse::<u32>().map_err(|e| err(format!("L: {e}")))?),
                "poly" => poly = Some(parse_hex(v).ok_or_else(|| err("poly: expected hex".into()))?),
                "seed" => {
                    let s = parse_hex(v).ok_or_else(|| err("seed: expected hex".into()))?;
                    seed = Some(u64::try_from(s).map_err(|_| err("seed too wide".into()))?);
                }
                "taps" => {
                    let t: Result<Vec<usize>, _> = v
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(str::parse)
                        .collect();
                    taps = Some(t.map_err(|e| err(format!("taps: {e}")))?);
                }
                other => return Err(err(format!("unknown key `{other}`"))),
            }
        }
        let missing = |k: &str| LfsrError::Format {
            line: 0,
            message: format!("missing `{k}`"),
        };
        Self::new(
            degree.ok_or_else(|| missing("L"))?,
            poly.ok_or_else(|| missing("poly"))?,
            seed.ok_or_else(|| missing("seed"))?,
            taps.ok_or_else(|| missing("taps"))?,
        )
    }
}

fn parse_hex(s: &str) -> Option<u128> {
    let digits = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")).unwrap_or(s);
    u128::from_str_radix(digits, 16).ok()
}

/// Known primitive polynomials (x^L + ... + 1) for a few degrees.
pub fn standard_primitive(degree: u32) -> Option<u128> {
    let low: u128 = match degree {
        1 => 0x1,
        2 => 0x3,
        3 => 0x3,
        4 => 0x3,
        5 => 0x5,
        6 => 0x3,
        7 => 0x3,
        8 => 0x1d,
        9 => 0x11,
        10 => 0x9,
        11 => 0x5,
        12 => 0x53,
        16 => 0x2d,
        20 => 0x9,
        24 => 0x87,
        32 => 0xaf,
        64 => 0x1b,
        _ => return None,
    };
    Some((1u128 << degree) | low)
}

/// One Fibonacci step.
pub fn step_lfsr(state: u64, spec: &LfsrSpec) -> Result<u64, LfsrError> {
    if state == 0 {
        return Err(LfsrError::ZeroState);
    }
    Ok(step_raw(state, spec.feedback_mask(), spec.degree))
}

#[inline]
fn step_raw(state: u64, feedback: u64, degree: u32) -> u64 {
    let bit = ((state & feedback).count_ones() & 1) as u64;
    (state >> 1) | (bit << (degree - 1))
}

/// True iff the sequence from state 1 has period exactly `2^L - 1`.
pub fn is_primitive(poly: u128, degree: u32) -> Result<bool, LfsrError> {
    if degree > MAX_PRIMITIVE_CHECK_DEGREE {
        return Err(LfsrError::UnsupportedDegree {
            degree,
            max: MAX_PRIMITIVE_CHECK_DEGREE,
        });
    }
    if degree == 0 {
        return Err(LfsrError::Degree(degree));
    }
    if poly >> degree != 1 || poly & 1 == 0 {
        return Ok(false);
    }
    let feedback = poly as u64 & low_mask(degree);
    let full = (1u64 << degree) - 1;
    let mut s = step_raw(1, feedback, degree);
    let mut steps = 1u64;
    while s != 1 {
        if steps >= full {
            return Ok(false);
        }
        s = step_raw(s, feedback, degree);
        steps += 1;
    }
    Ok(steps == full)
}

/// Running LFSR with its tap readout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lfsr {
    spec: LfsrSpec,
    state: u64,
}

impl Lfsr {
    pub fn new(spec: LfsrSpec) -> Self {
        let state = spec.seed;
        Lfsr { spec, state }
    }

    pub fn spec(&self) -> &LfsrSpec {
        &self.spec
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    pub fn reset(&mut self) {
        self.state = self.spec.seed;
    }

    /// The `r` tapped bits of the current state.
    pub fn taps(&self) -> BitVector {
        self.spec.taps.iter().map(|&t| self.state >> t & 1 == 1).collect()
    }

    pub fn advance(&mut self) {
        self.state = step_raw(self.state, self.spec.feedback_mask(), self.spec.degree);
    }
}

/// Error signal of a checker: `taps ^ predicted ^ actual`.
pub fn checker_output(
    taps: &BitVector,
    predicted: &BitVector,
    actual: &BitVector,
) -> Result<BitVector, WidthMismatch> {
    taps.checked_xor(predicted)?.checked_xor(actual)
}

/// Merges checker signals bitwise: OR where the tap bit is 0, AND where 1.
pub fn combine_error_signals(taps: &BitVector, signals: &[BitVector]) -> Result<BitVector, LfsrError> {
    if signals.is_empty() {
        return Err(LfsrError::NoSignals);
    }
    for s in signals {
        WidthMismatch::check(taps.width(), s.width())?;
    }
    Ok((0..taps.width())
        .map(|i| {
            if taps.get(i) {
                signals.iter().all(|s| s.get(i))
            } else {
                signals.iter().any(|s| s.get(i))
            }
        })
        .collect())
}

/// Trusted monitor mirroring a chip's LFSR.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErrorMonitor {
    lfsr: Lfsr,
    cycle: u64,
}

impl ErrorMonitor {
    pub fn new(spec: LfsrSpec) -> Self {
        ErrorMonitor {
            lfsr: Lfsr::new(spec),
            cycle: 0,
        }
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn reset(&mut self) {
        self.lfsr.reset();
        self.cycle = 0;
    }

    /// Compares one received signal with the local taps, then advances.
    /// Returns `true` when an attack is reported.
    pub fn check(&mut self, received: &BitVector) -> Result<bool, WidthMismatch> {
        let expected = self.lfsr.taps();
        WidthMismatch::check(expected.width(), received.width())?;
        self.lfsr.advance();
        self.cycle += 1;
        Ok(&expected != received)
    }
}

/// Per-cycle verdicts for a whole stream.
pub fn monitor_check(spec: &LfsrSpec, received: &[BitVector]) -> Result<Vec<bool>, WidthMismatch> {
    let mut m = ErrorMonitor::new(spec.clone());
    received.iter().map(|s| m.check(s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn period(spec: &LfsrSpec) -> u64 {
        let mut s = step_lfsr(spec.seed(), spec).unwrap();
        let mut n = 1;
        while s != spec.seed() {
            s = step_lfsr(s, spec).unwrap();
            n += 1;
        }
        n
    }

    #[test]
    fn x4_x_1_has_period_15() {
        let spec = LfsrSpec::new(4, 0b10011, 1, vec![0]).unwrap();
        assert_eq!(period(&spec), 15);
        assert_eq!(is_primitive(0b10011, 4), Ok(true));
        // (x^2 + x + 1)^2
        assert_eq!(is_primitive(0b10101, 4), Ok(false));
        assert_eq!(is_primitive(0b11, 1), Ok(true));
        let one = LfsrSpec::new(1, 0b11, 1, vec![0]).unwrap();
        assert_eq!(step_lfsr(1, &one), Ok(1));
    }

    #[test]
    fn primitive_walk_visits_every_nonzero_state() {
        for degree in 1..=12u32 {
            let poly = standard_primitive(degree).unwrap();
            assert_eq!(is_primitive(poly, degree), Ok(true), "degree {degree}");
            let spec = LfsrSpec::new(degree, poly, 1, vec![]).unwrap();
            let mut seen = vec![false; 1 << degree];
            let mut s = 1u64;
            for _ in 0..(1u64 << degree) - 1 {
                assert!(!seen[s as usize] && s != 0);
                seen[s as usize] = true;
                s = step_lfsr(s, &spec).unwrap();
            }
            assert_eq!(s, 1);
        }
    }

    #[test]
    fn standard_polynomials_up_to_24_are_primitive() {
        for degree in [16u32, 20, 24] {
            assert_eq!(is_primitive(standard_primitive(degree).unwrap(), degree), Ok(true));
        }
        assert!(matches!(is_primitive(0, 25), Err(LfsrError::UnsupportedDegree { .. })));
    }

    #[test]
    fn spec_validation() {
        assert_eq!(LfsrSpec::new(4, 0b10011, 0, vec![]), Err(LfsrError::ZeroState));
        assert!(matches!(LfsrSpec::new(4, 0b1001, 1, vec![]), Err(LfsrError::Polynomial { .. })));
        assert!(matches!(LfsrSpec::new(4, 0b10010, 1, vec![]), Err(LfsrError::Polynomial { .. })));
        assert_eq!(LfsrSpec::new(4, 0b10011, 1, vec![1, 1]), Err(LfsrError::Tap(1)));
        assert_eq!(LfsrSpec::new(4, 0b10011, 1, vec![4]), Err(LfsrError::Tap(4)));
        let spec = LfsrSpec::new(4, 0b10011, 1, vec![0]).unwrap();
        assert_eq!(step_lfsr(0, &spec), Err(LfsrError::ZeroState));
    }

    #[test]
    fn spec_text_round_trip() {
        let spec = LfsrSpec::standard(16, 0xACE1, vec![0, 5, 9]).unwrap();
        let text = spec.to_text();
        assert!(text.contains("poly = 0x1002d"));
        assert_eq!(LfsrSpec::from_text(&text).unwrap(), spec);
        assert!(LfsrSpec::from_text("L = 4\n").is_err());
    }

    #[test]
    fn checker_output_examples() {
        let taps = BitVector::from_bit_str("110101").unwrap();
        let p = BitVector::from_u64(0b1011, 6);
        assert_eq!(checker_output(&taps, &p, &p).unwrap(), taps);
        let a = BitVector::from_u64(0b1010, 6);
        assert_eq!(checker_output(&taps, &p, &a).unwrap().to_bit_string(), "110100");
        assert!(checker_output(&taps, &p, &BitVector::zeros(5)).is_err());
    }

    #[test]
    fn combine_examples() {
        let taps = BitVector::from_bit_str("10").unwrap();
        assert_eq!(combine_error_signals(&taps, &[taps.clone(), taps.clone()]).unwrap(), taps);
        // deviation on the 0 tap (bit 0)
        let dev0 = BitVector::from_bit_str("11").unwrap();
        assert_ne!(combine_error_signals(&taps, &[taps.clone(), dev0]).unwrap(), taps);
        // deviation on the 1 tap (bit 1)
        let dev1 = BitVector::from_bit_str("00").unwrap();
        assert_ne!(combine_error_signals(&taps, &[dev1, taps.clone()]).unwrap(), taps);
        assert_eq!(combine_error_signals(&taps, &[]), Err(LfsrError::NoSignals));
    }

    #[test]
    fn combine_never_cancels_a_deviation() {
        // exhaustive over r <= 4 and up to 4 checkers
        for r in 1..=4usize {
            for taps in 0..1u64 << r {
                let t = BitVector::from_u64(taps, r);
                for m in 1..=4usize {
                    for signals in 0..1u64 << (r * m) {
                        let sigs: Vec<BitVector> = (0..m)
                            .map(|j| BitVector::from_u64(signals >> (j * r) & ((1 << r) - 1), r))
                            .collect();
                        let any_dev = sigs.iter().any(|s| *s != t);
                        let combined = combine_error_signals(&t, &sigs).unwrap();
                        assert_eq!(combined != t, any_dev);
                    }
                }
            }
        }
    }

    #[test]
    fn monitor_follows_chip() {
        let spec = LfsrSpec::standard(8, 0x5a, vec![0, 3, 7]).unwrap();
        let mut chip = Lfsr::new(spec.clone());
        let mut stream = Vec::new();
        for _ in 0..1000 {
            stream.push(chip.taps());
            chip.advance();
        }
        assert!(monitor_check(&spec, &stream).unwrap().iter().all(|&v| !v));
        stream[417].flip(1);
        let verdicts = monitor_check(&spec, &stream).unwrap();
        assert_eq!(verdicts.iter().position(|&v| v), Some(417));
        assert_eq!(verdicts.iter().filter(|&&v| v).count(), 1);
        let other = LfsrSpec::standard(8, 0x5b, vec![0, 3, 7]).unwrap();
        let mut chip2 = Lfsr::new(other);
        let s2: Vec<BitVector> = (0..50)
            .map(|_| {
                let t = chip2.taps();
                chip2.advance();
                t
            })
            .collect();
        assert!(monitor_check(&spec, &s2).unwrap().iter().any(|&v| v));
    }
}
