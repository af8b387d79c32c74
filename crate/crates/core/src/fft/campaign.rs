//! Attacks on the FFT engine and the reference self-test.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{fft_tampered, plancherel_check, white_noise, ButterflyTap, CheckVerdict, FftError, HalfComplex, PlancherelReference};
use crate::attack::{DetectionReport, TrialOutcome};
use crate::stats::trial_rng;

#[derive(Debug, Clone, PartialEq)]
pub enum EngineAttack {
    /// flip one bit of the real or imaginary half of a butterfly output
    ButterflyFlip { tap: ButterflyTap, imag: bool, bit: u8 },
    /// output k is replaced by true output perm[k]
    Permute(Vec<usize>),
    /// add c/conj(Y_a) to X_a and −c/conj(Y_b) to X_b, which leaves
    /// ⟨X, Y⟩ unchanged
    PlancherelPreserving { a: usize, b: usize, c: (f64, f64) },
    /// the checker's reference slots are forced to zero
    ZeroReference,
}

impl EngineAttack {
    pub fn label(&self) -> &'static str {
        match self {
            EngineAttack::ButterflyFlip { .. } => "butterfly_flip",
            EngineAttack::Permute(_) => "permute",
            EngineAttack::PlancherelPreserving { .. } => "plancherel_preserving",
            EngineAttack::ZeroReference => "zero_reference",
        }
    }
}

/// FFT datapath plus Plancherel checker.
#[derive(Debug, Clone)]
pub struct FftEngine {
    pub reference: PlancherelReference,
    pub threshold: f64,
    pub attack: Option<EngineAttack>,
}

fn div(num: (f64, f64), den: HalfComplex) -> (f64, f64) {
    let (dr, di) = den.to_f64();
    let m = dr * dr + di * di;
    ((num.0 * dr + num.1 * di) / m, (num.1 * dr - num.0 * di) / m)
}

impl FftEngine {
    pub fn new(reference: PlancherelReference, threshold: f64) -> Self {
        FftEngine {
            reference,
            threshold,
            attack: None,
        }
    }

    pub fn with_attack(&self, attack: EngineAttack) -> Self {
        FftEngine {
            attack: Some(attack),
            ..self.clone()
        }
    }

    /// One transform and its check.
    pub fn run(&self, x: &[HalfComplex]) -> Result<(Vec<HalfComplex>, CheckVerdict), FftError> {
        let n = self.reference.len();
        if x.len() != n {
            return Err(FftError::Length { expected: n, got: x.len() });
        }
        let mut out = match &self.attack {
            Some(EngineAttack::ButterflyFlip { tap, imag, bit }) => fft_tampered(x, false, |t, mut v| {
                if t == *tap {
                    let (re, im) = v.to_bits();
                    v = if *imag {
                        HalfComplex::from_bits(re, im ^ (1 << bit))
                    } else {
                        HalfComplex::from_bits(re ^ (1 << bit), im)
                    };
                }
                v
            })?,
            _ => fft_tampered(x, true, |_, v| v)?,
        };
        match &self.attack {
            Some(EngineAttack::Permute(perm)) => {
                if perm.len() != n {
                    return Err(FftError::Length {
                        expected: n,
                        got: perm.len(),
                    });
                }
                out = perm.iter().map(|&k| out[k]).collect();
            }
            Some(EngineAttack::PlancherelPreserving { a, b, c }) => {
                let (a, b, c) = (*a, *b, *c);
                let (y_a, y_b) = (self.reference.big_y[a], self.reference.big_y[b]);
                // c / conj(Y) = c·Y / |Y|²
                let conj = |v: HalfComplex| HalfComplex { re: v.re, im: -v.im };
                let da = div(c, conj(y_a));
                let db = div((-c.0, -c.1), conj(y_b));
                let shift = |v: HalfComplex, d: (f64, f64)| {
                    let (r, i) = v.to_f64();
                    HalfComplex::from_f64(r + d.0, i + d.1)
                };
                out[a] = shift(out[a], da);
                out[b] = shift(out[b], db);
            }
            _ => {}
        }
        let zeroed;
        let reference = if self.attack == Some(EngineAttack::ZeroReference) {
            zeroed = PlancherelReference {
                y: vec![HalfComplex::ZERO; n],
                big_y: vec![HalfComplex::ZERO; n],
                programmed_at_startup: self.reference.programmed_at_startup,
            };
            &zeroed
        } else {
            &self.reference
        };
        let verdict = plancherel_check(x, &out, reference, self.threshold)?;
        Ok((out, verdict))
    }
}

/// Attack distributions for FFT campaigns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FftAttackGenerator {
    AttackFree,
    /// uniform stage, butterfly output and half; one of the sign and
    /// exponent bits
    ButterflyFlips,
    /// as above but any of the 16 bits
    ButterflyFlipsAnyBit,
    /// uniform non-identity permutation of the outputs
    Permutations,
    PlancherelPreserving,
    ZeroReference,
}

impl FftAttackGenerator {
    pub const ALL: [FftAttackGenerator; 6] = [
        FftAttackGenerator::AttackFree,
        FftAttackGenerator::ButterflyFlips,
        FftAttackGenerator::ButterflyFlipsAnyBit,
        FftAttackGenerator::Permutations,
        FftAttackGenerator::PlancherelPreserving,
        FftAttackGenerator::ZeroReference,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FftAttackGenerator::AttackFree => "attack_free",
            FftAttackGenerator::ButterflyFlips => "butterfly_flip",
            FftAttackGenerator::ButterflyFlipsAnyBit => "butterfly_flip_any_bit",
            FftAttackGenerator::Permutations => "permute",
            FftAttackGenerator::PlancherelPreserving => "plancherel_preserving",
            FftAttackGenerator::ZeroReference => "zero_reference",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|g| g.name() == s)
    }

    pub fn sample(self, n: usize, rng: &mut ChaCha8Rng) -> Option<EngineAttack> {
        let stages = n.trailing_zeros() as usize;
        let flip = |rng: &mut ChaCha8Rng, bits: std::ops::RangeInclusive<u8>| EngineAttack::ButterflyFlip {
            tap: ButterflyTap {
                stage: rng.gen_range(0..stages.max(1)),
                index: rng.gen_range(0..n),
            },
            imag: rng.gen(),
            bit: rng.gen_range(bits),
        };
        match self {
            FftAttackGenerator::AttackFree => None,
            FftAttackGenerator::ButterflyFlips => Some(flip(rng, 10..=15)),
            FftAttackGenerator::ButterflyFlipsAnyBit => Some(flip(rng, 0..=15)),
            FftAttackGenerator::Permutations => {
                let mut p: Vec<usize> = (0..n).collect();
                if n > 1 {
                    while p.iter().enumerate().all(|(i, &v)| i == v) {
                        p.shuffle(rng);
                    }
                }
                Some(EngineAttack::Permute(p))
            }
            FftAttackGenerator::PlancherelPreserving => {
                let a = rng.gen_range(0..n);
                let b = (a + rng.gen_range(1..n.max(2))) % n;
                let c = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                Some(EngineAttack::PlancherelPreserving { a, b, c })
            }
            FftAttackGenerator::ZeroReference => Some(EngineAttack::ZeroReference),
        }
    }
}

/// Runs `trials` transforms of unit-scale white noise, each under an
/// attack drawn from `generator`, against the white-noise reference of
/// `seed`. Every trial is paired with an attack-free run on the same input.
pub fn fft_attack_campaign(
    n: usize,
    generator: FftAttackGenerator,
    trials: u64,
    threshold: f64,
    seed: u64,
) -> Result<DetectionReport, FftError> {
    let engine = FftEngine::new(PlancherelReference::white_noise(n, seed)?, threshold);
    let rows = (0..trials)
        .into_par_iter()
        .map(|trial| -> Result<TrialOutcome, FftError> {
            let mut rng = trial_rng(seed, trial);
            let x = white_noise(n, &mut rng);
            let false_positive = engine.run(&x)?.1.attack;
            let attack = generator.sample(n, &mut rng);
            let (kind, detected) = match &attack {
                None => ("none".to_string(), false_positive),
                Some(a) => (a.label().to_string(), engine.with_attack(a.clone()).run(&x)?.1.attack),
            };
            Ok(TrialOutcome {
                trial,
                kind,
                detected,
                first_detect_cycle: detected.then_some(0),
                false_positive,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DetectionReport::from_rows(rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelftestVerdict {
    CheckerAlive,
    CheckerCompromised,
}

impl PlancherelReference {
    /// A reference whose Y is independent noise of the right magnitude, so
    /// that the checker must fire on essentially any input.
    pub fn non_pair(n: usize, seed: u64) -> Result<Self, FftError> {
        let mut r = PlancherelReference::white_noise(n, seed)?;
        let mut rng = trial_rng(seed, u64::MAX);
        let s = (n as f64).sqrt();
        r.big_y = white_noise(n, &mut rng)
            .into_iter()
            .map(|v| {
                let (a, b) = v.to_f64();
                HalfComplex::from_f64(a * s, b * s)
            })
            .collect();
        Ok(r)
    }
}

/// Programs `non_pair` into the engine's reference slots, runs one
/// transform and reports whether the checker objected.
pub fn reference_selftest(engine: &FftEngine, non_pair: &PlancherelReference) -> Result<SelftestVerdict, FftError> {
    if non_pair.is_fft_pair()? {
        return Err(FftError::NonPairRequired);
    }
    let programmed = FftEngine {
        reference: non_pair.clone(),
        ..engine.clone()
    };
    let x = white_noise(non_pair.len(), &mut trial_rng(0x5e1f, 0));
    Ok(if programmed.run(&x)?.1.attack {
        SelftestVerdict::CheckerAlive
    } else {
        SelftestVerdict::CheckerCompromised
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fft::calibrate_threshold;

    #[test]
    fn honest_engine_matches_fft() {
        let engine = FftEngine::new(PlancherelReference::white_noise(16, 1).unwrap(), 1.0);
        let x = white_noise(16, &mut trial_rng(2, 0));
        let (out, v) = engine.run(&x).unwrap();
        assert_eq!(out, crate::fft::fft(&x).unwrap());
        assert!(!v.attack);
        assert!(engine.run(&x[..8]).is_err());
    }

    #[test]
    fn preserving_attack_keeps_residual() {
        let t = calibrate_threshold(64, 200, 2.0, 5).unwrap();
        let engine = FftEngine::new(PlancherelReference::white_noise(64, 5).unwrap(), t);
        let x = white_noise(64, &mut trial_rng(1, 1));
        let honest = engine.run(&x).unwrap();
        let atk = engine.with_attack(EngineAttack::PlancherelPreserving { a: 3, b: 40, c: (0.7, -0.4) });
        let (out, v) = atk.run(&x).unwrap();
        assert_ne!(out, honest.0);
        assert!(!v.attack, "{v:?}");
        let zeroed = engine.with_attack(EngineAttack::ZeroReference).run(&x).unwrap().1;
        assert_eq!(zeroed.residual, 0.0);
    }

    #[test]
    fn selftest() {
        let engine = FftEngine::new(PlancherelReference::white_noise(32, 3).unwrap(), 0.05);
        let np = PlancherelReference::non_pair(32, 9).unwrap();
        assert_eq!(reference_selftest(&engine, &np).unwrap(), SelftestVerdict::CheckerAlive);
        let zeroed = engine.with_attack(EngineAttack::ZeroReference);
        assert_eq!(reference_selftest(&zeroed, &np).unwrap(), SelftestVerdict::CheckerCompromised);
        let pair = PlancherelReference::white_noise(32, 9).unwrap();
        assert!(matches!(reference_selftest(&engine, &pair), Err(FftError::NonPairRequired)));
    }

    #[test]
    fn small_campaigns() {
        let t = calibrate_threshold(32, 300, 2.0, 11).unwrap();
        let free = fft_attack_campaign(32, FftAttackGenerator::AttackFree, 500, t, 11).unwrap();
        assert_eq!((free.detected, free.false_positives), (0, 0));
        let perm = fft_attack_campaign(32, FftAttackGenerator::Permutations, 300, t, 11).unwrap();
        assert!(perm.rate() > 0.97, "{}", perm.summary());
        let pres = fft_attack_campaign(32, FftAttackGenerator::PlancherelPreserving, 300, t, 11).unwrap();
        assert!(pres.rate() < 0.05, "{}", pres.summary());
        let zero = fft_attack_campaign(32, FftAttackGenerator::ZeroReference, 100, t, 11).unwrap();
        assert_eq!(zero.detected, 0);
        let a = fft_attack_campaign(32, FftAttackGenerator::ButterflyFlips, 200, t, 4).unwrap();
        let b = fft_attack_campaign(32, FftAttackGenerator::ButterflyFlips, 200, t, 4).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
    }
}
