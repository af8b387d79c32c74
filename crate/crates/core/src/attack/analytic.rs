//! Closed-form attack probabilities and decoupling costs.

use rand::seq::index::sample;
use rayon::prelude::*;

use super::AttackError;
use crate::stats::{trial_rng, Proportion};

fn unit(name: &str, v: f64) -> Result<(), AttackError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(AttackError::Domain(format!("{name} = {v} is not in [0, 1]")))
    }
}

/// Chance of guessing all `x` switchboxes of a cone when each guess is
/// wrong with probability `theta`.
pub fn cp_attack_probability(theta: f64, x: u32) -> Result<f64, AttackError> {
    unit("theta", theta)?;
    Ok((1.0 - theta).powi(x as i32))
}

/// Chance of recovering all `x` switchboxes when each is recovered
/// independently with probability `p`.
pub fn per_sb_attack_probability(p: f64, x: u32) -> Result<f64, AttackError> {
    unit("p", p)?;
    Ok(p.powi(x as i32))
}

/// Probability that destroying `t` of `n` chips hits at least one of the
/// `a` attacked ones.
pub fn destructive_detection_probability(n: u64, a: u64, t: u64) -> Result<f64, AttackError> {
    if a > n || t > n {
        return Err(AttackError::Domain(format!("need a, t <= N (N={n}, a={a}, t={t})")));
    }
    if t > n - a {
        return Ok(1.0);
    }
    // log of the miss probability C(n-a, t) / C(n, t)
    let log_miss: f64 = (0..t).map(|i| ((n - a - i) as f64 / (n - i) as f64).ln()).sum();
    Ok(-log_miss.exp_m1())
}

/// Sampling-without-replacement estimate of the same probability.
pub fn destructive_monte_carlo(n: u64, a: u64, t: u64, trials: u64, seed: u64) -> Result<Proportion, AttackError> {
    if a > n || t > n {
        return Err(AttackError::Domain(format!("need a, t <= N (N={n}, a={a}, t={t})")));
    }
    let hits = (0..trials)
        .into_par_iter()
        .filter(|&trial| {
            let mut rng = trial_rng(seed, trial);
            // attacked chips are indices 0..a
            sample(&mut rng, n as usize, t as usize).iter().any(|i| (i as u64) < a)
        })
        .count() as u64;
    Ok(Proportion::new(hits, trials))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecouplingKind {
    ParityNull,
    StoredState,
    FftZero,
}

/// Design parameters relevant to a decoupling attack; only the fields of
/// the chosen kind are required.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecouplingDesign {
    pub kind: DecouplingKind,
    pub outputs: Option<u64>,
    pub check_bits: Option<u64>,
    pub flip_flops: Option<u64>,
    pub fft_points: Option<u64>,
}

impl DecouplingDesign {
    pub fn new(kind: DecouplingKind) -> Self {
        DecouplingDesign {
            kind,
            outputs: None,
            check_bits: None,
            flip_flops: None,
            fft_points: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DecouplingCost {
    pub transistors: u64,
    pub flip_flops: u64,
}

/// Minimum extra hardware an adversary needs for the attack.
pub fn decoupling_cost(d: &DecouplingDesign) -> Result<DecouplingCost, AttackError> {
    let need = |v: Option<u64>, name: &str| v.ok_or_else(|| AttackError::Domain(format!("missing field `{name}`")));
    Ok(match d.kind {
        DecouplingKind::ParityNull => DecouplingCost {
            transistors: 2 * need(d.outputs, "outputs")?,
            flip_flops: need(d.check_bits, "check_bits")?,
        },
        DecouplingKind::StoredState => DecouplingCost {
            transistors: 0,
            flip_flops: need(d.flip_flops, "flip_flops")?,
        },
        DecouplingKind::FftZero => DecouplingCost {
            transistors: 120 * need(d.fft_points, "fft_points")?,
            flip_flops: 0,
        },
    })
}

/// Whether the extra hardware would stand out in a post-manufacture
/// inspection with the given transistor threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InspectionReport {
    pub cost: DecouplingCost,
    pub threshold: u64,
    pub exceeds: bool,
}

impl DecouplingCost {
    /// Flip-flops are counted at a nominal 20 transistors each.
    pub fn transistor_equivalent(&self) -> u64 {
        self.transistors + 20 * self.flip_flops
    }

    pub fn inspect(self, threshold: u64) -> InspectionReport {
        InspectionReport {
            cost: self,
            threshold,
            exceeds: self.transistor_equivalent() > threshold,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(got: f64, want: f64, digits: i32) -> bool {
        // equal when rounded to `digits` significant figures
        let scale = 10f64.powi(digits - 1 - want.abs().log10().floor() as i32);
        (got * scale).round() == (want * scale).round()
    }

    #[test]
    fn table_values() {
        assert!(close(cp_attack_probability(0.1, 64).unwrap(), 1.18e-3, 3));
        assert!(close(cp_attack_probability(0.05, 64).unwrap(), 0.0375, 3));
        assert_eq!(cp_attack_probability(0.0, 17).unwrap(), 1.0);
        assert!(close(per_sb_attack_probability(0.5, 64).unwrap(), 5.4e-20, 2));
        assert!(close(per_sb_attack_probability(0.5001, 64).unwrap(), 5.5e-20, 2));
        assert_eq!(per_sb_attack_probability(1.0, 9).unwrap(), 1.0);
        assert!(cp_attack_probability(1.1, 3).is_err());
        assert!(per_sb_attack_probability(-0.1, 3).is_err());
    }

    /// Miss probability as a product over the attacked chips instead of
    /// over the sampled ones: C(N-t, a) / C(N, a).
    fn miss_by_attacked(n: u64, a: u64, t: u64) -> f64 {
        (0..a).map(|i| (n - t - i) as f64 / (n - i) as f64).product()
    }

    #[test]
    fn destructive_anchors() {
        for (n, a, t) in [(100_000, 50, 8_000), (10_000, 5, 5_800), (1_000, 20, 333), (50, 3, 10)] {
            let p = destructive_detection_probability(n, a, t).unwrap();
            assert!((p - (1.0 - miss_by_attacked(n, a, t))).abs() < 1e-9, "{n} {a} {t}");
        }
        // the quoted 8% / 58% sampling fractions land just under 0.99
        let p = destructive_detection_probability(100_000, 50, 8_000).unwrap();
        assert!((p - 0.9845).abs() < 5e-4, "{p}");
        let p = destructive_detection_probability(10_000, 5, 5_800).unwrap();
        assert!((p - 0.9869).abs() < 5e-4, "{p}");
        assert!(destructive_detection_probability(100_000, 50, 8_900).unwrap() >= 0.99);
        assert!(destructive_detection_probability(10_000, 5, 6_100).unwrap() >= 0.99);
        assert!(destructive_detection_probability(10_000, 1, 9_900).unwrap() >= 0.99);
        assert_eq!(destructive_detection_probability(500, 7, 0).unwrap(), 0.0);
        assert_eq!(destructive_detection_probability(10, 5, 6).unwrap(), 1.0);
        assert!(destructive_detection_probability(10, 11, 1).is_err());
        // C(8,2)/C(10,2) = 28/45 misses
        let p = destructive_detection_probability(10, 2, 2).unwrap();
        assert!((p - 17.0 / 45.0).abs() < 1e-12);
    }

    #[test]
    fn destructive_monotone() {
        let mut last = 0.0;
        for t in (0..=1000).step_by(50) {
            let p = destructive_detection_probability(1000, 3, t).unwrap();
            assert!(p >= last);
            last = p;
        }
        let mut last = 0.0;
        for a in 0..=30 {
            let p = destructive_detection_probability(1000, a, 40).unwrap();
            assert!(p >= last);
            last = p;
        }
    }

    #[test]
    fn monte_carlo_agrees() {
        let exact = destructive_detection_probability(200, 4, 30).unwrap();
        let mc = destructive_monte_carlo(200, 4, 30, 20_000, 3).unwrap();
        assert!((mc.rate() - exact).abs() < 3.0 * mc.std_error().max(1e-3));
    }

    #[test]
    fn costs() {
        let mut d = DecouplingDesign::new(DecouplingKind::FftZero);
        d.fft_points = Some(128);
        assert_eq!(decoupling_cost(&d).unwrap().transistors, 15_360);
        let mut d = DecouplingDesign::new(DecouplingKind::ParityNull);
        d.outputs = Some(0);
        d.check_bits = Some(8);
        assert_eq!(
            decoupling_cost(&d).unwrap(),
            DecouplingCost {
                transistors: 0,
                flip_flops: 8
            }
        );
        let mut d = DecouplingDesign::new(DecouplingKind::StoredState);
        assert!(decoupling_cost(&d).is_err());
        d.flip_flops = Some(77);
        assert_eq!(decoupling_cost(&d).unwrap().flip_flops, 77);
        assert!(decoupling_cost(&d).unwrap().inspect(1000).exceeds);
    }
}
