//! Detection-rate campaigns over many independently seeded trials.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{inject, AttackDescriptor, AttackError, AttackedChip, Payload, Trigger};
use crate::bits::BitVector;
use crate::chip::{random_ram_request, CycleFaults, PinTarget, ProtectedChip, Testbench};
use crate::stats::{trial_rng, Proportion};

/// Draws the attacks for one trial.
pub trait AttackGenerator: Sync {
    fn name(&self) -> String;
    fn sample(&self, chip: &ProtectedChip, cycles: u64, rng: &mut ChaCha8Rng) -> Vec<AttackDescriptor>;
}

pub struct AttackFree;

impl AttackGenerator for AttackFree {
    fn name(&self) -> String {
        "none".into()
    }
    fn sample(&self, _: &ProtectedChip, _: u64, _: &mut ChaCha8Rng) -> Vec<AttackDescriptor> {
        Vec::new()
    }
}

fn nonempty_subset(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    assert!(n > 0 && n < 64);
    let mask = rng.gen_range(1..1u64 << n);
    (0..n).filter(|i| mask >> i & 1 == 1).collect()
}

/// A uniformly random nonempty set of f's outputs flipped on one uniformly
/// random cycle.
pub struct UniformLogicFlips;

impl AttackGenerator for UniformLogicFlips {
    fn name(&self) -> String {
        "logic".into()
    }
    fn sample(&self, chip: &ProtectedChip, cycles: u64, rng: &mut ChaCha8Rng) -> Vec<AttackDescriptor> {
        let at = Trigger::AtCycle(rng.gen_range(0..cycles));
        nonempty_subset(chip.f.num_outputs(), rng)
            .into_iter()
            .map(|i| {
                let w = chip.f.outputs()[i];
                AttackDescriptor::logic(chip.f.wire_name(w), Payload::Flip, at)
            })
            .collect()
    }
}

/// One random output of f flipped on every cycle.
pub struct SingleOutputFlip;

impl AttackGenerator for SingleOutputFlip {
    fn name(&self) -> String {
        "logic".into()
    }
    fn sample(&self, chip: &ProtectedChip, _: u64, rng: &mut ChaCha8Rng) -> Vec<AttackDescriptor> {
        let w = *chip.f.outputs().choose(rng).expect("f has outputs");
        vec![AttackDescriptor::logic(chip.f.wire_name(w), Payload::Flip, Trigger::Always)]
    }
}

/// A uniformly random nonzero pattern on the data input pins, on one
/// random cycle.
pub struct PinDataFlips;

impl AttackGenerator for PinDataFlips {
    fn name(&self) -> String {
        "pin".into()
    }
    fn sample(&self, chip: &ProtectedChip, cycles: u64, rng: &mut ChaCha8Rng) -> Vec<AttackDescriptor> {
        let at = Trigger::AtCycle(rng.gen_range(0..cycles));
        nonempty_subset(chip.f.num_inputs(), rng)
            .into_iter()
            .map(|i| AttackDescriptor::pin(PinTarget::InData(i), Payload::Flip, at))
            .collect()
    }
}

/// The same attacks in every trial (e.g. from a file); random triggers and
/// stimulus still vary per trial.
pub struct FixedAttacks(pub Vec<AttackDescriptor>);

impl AttackGenerator for FixedAttacks {
    fn name(&self) -> String {
        "fixed".into()
    }
    fn sample(&self, _: &ProtectedChip, _: u64, _: &mut ChaCha8Rng) -> Vec<AttackDescriptor> {
        self.0.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialOutcome {
    pub trial: u64,
    pub kind: String,
    pub detected: bool,
    pub first_detect_cycle: Option<u64>,
    /// the paired attack-free run reported something
    pub false_positive: bool,
}

/// Runs `cycles` cycles of random stimulus through an honest sender and
/// receivers; returns the first cycle on which anything reported.
pub fn run_trial(atk: &AttackedChip<'_>, cycles: u64, stimulus_seed: u64, attack_seed: u64) -> Result<Option<u64>, AttackError> {
    let chip = atk.chip;
    let mut st = chip.reset();
    let mut tb = Testbench::new(chip);
    let mut stim = trial_rng(stimulus_seed, 0);
    let mut arng = trial_rng(attack_seed, 0);
    let clean = CycleFaults::default();
    for cycle in 0..cycles {
        let data = BitVector::random(chip.f.num_inputs(), &mut stim);
        let ram = chip.ram.as_ref().map(|(p, _)| random_ram_request(p, &mut stim));
        let faults = if atk.attacks.is_empty() {
            clean.clone()
        } else {
            atk.faults_at(cycle, &mut arng)
        };
        if tb.step(chip, &mut st, data, ram, &faults)?.detected() {
            return Ok(Some(cycle));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectionReport {
    pub trials: u64,
    pub detected: u64,
    pub false_positives: u64,
    pub per_kind: BTreeMap<String, Proportion>,
    pub rows: Vec<TrialOutcome>,
}

impl DetectionReport {
    pub fn from_rows(rows: Vec<TrialOutcome>) -> Self {
        let mut per_kind: BTreeMap<String, Proportion> = BTreeMap::new();
        for r in &rows {
            let e = per_kind.entry(r.kind.clone()).or_insert(Proportion::new(0, 0));
            *e = e.merge(Proportion::new(r.detected as u64, 1));
        }
        DetectionReport {
            trials: rows.len() as u64,
            detected: rows.iter().filter(|r| r.detected).count() as u64,
            false_positives: rows.iter().filter(|r| r.false_positive).count() as u64,
            per_kind,
            rows,
        }
    }

    pub fn proportion(&self) -> Proportion {
        Proportion::new(self.detected, self.trials)
    }

    pub fn rate(&self) -> f64 {
        self.proportion().rate()
    }

    /// Combines two reports, renumbering the second's trials.
    pub fn merge(mut self, other: DetectionReport) -> DetectionReport {
        let offset = self.trials;
        self.rows.extend(other.rows.into_iter().map(|mut r| {
            r.trial += offset;
            r
        }));
        DetectionReport::from_rows(self.rows)
    }

    /// `trial,attack_kind,detected,first_detect_cycle` rows, then
    /// `summary,all,<detected>,<trials>`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("trial,attack_kind,detected,first_detect_cycle\n");
        for r in &self.rows {
            let first = r.first_detect_cycle.map(|c| c.to_string()).unwrap_or_default();
            let _ = writeln!(s, "{},{},{},{first}", r.trial, r.kind, r.detected as u8);
        }
        let _ = writeln!(s, "summary,all,{},{}", self.detected, self.trials);
        s
    }

    pub fn summary(&self) -> String {
        let p = self.proportion();
        let (lo, hi) = p.wilson(1.96);
        format!(
            "trials={} detected={} rate={:.4} ci95=[{lo:.4}, {hi:.4}] false_positives={}",
            self.trials,
            self.detected,
            p.rate(),
            self.false_positives
        )
    }
}

/// One sampled attack per trial, each with a paired attack-free run on the
/// same stimulus.
pub fn run_campaign(
    chip: &ProtectedChip,
    generator: &dyn AttackGenerator,
    trials: u64,
    cycles: u64,
    seed: u64,
) -> Result<DetectionReport, AttackError> {
    if trials == 0 || cycles == 0 {
        return Err(AttackError::Domain("trials and cycles must be positive".into()));
    }
    let rows = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(seed, trial);
            let attacks = generator.sample(chip, cycles, &mut rng);
            let stimulus_seed: u64 = rng.gen();
            let attack_seed: u64 = rng.gen();
            let atk = inject(chip, &attacks)?;
            let first = run_trial(&atk, cycles, stimulus_seed, attack_seed)?;
            let clean = inject(chip, &[])?;
            let false_positive = run_trial(&clean, cycles, stimulus_seed, attack_seed)?.is_some();
            Ok(TrialOutcome {
                trial,
                kind: atk.kind_label(),
                detected: first.is_some(),
                first_detect_cycle: first,
                false_positive,
            })
        })
        .collect::<Result<Vec<_>, AttackError>>()?;
    Ok(DetectionReport::from_rows(rows))
}

/// Each descriptor in the file as its own campaign, merged.
pub fn run_attack_file(
    chip: &ProtectedChip,
    attacks: &[AttackDescriptor],
    trials: u64,
    cycles: u64,
    seed: u64,
) -> Result<DetectionReport, AttackError> {
    let mut report: Option<DetectionReport> = None;
    for (i, d) in attacks.iter().enumerate() {
        let r = run_campaign(chip, &FixedAttacks(vec![d.clone()]), trials, cycles, seed.wrapping_add(i as u64))?;
        report = Some(match report {
            Some(acc) => acc.merge(r),
            None => r,
        });
    }
    report.ok_or_else(|| AttackError::Invalid("no attacks given".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chip::{build_protected_chip, ChipOptions, RamParams};
    use crate::lfsr::LfsrSpec;
    use crate::library;
    use crate::parity::ParityCheckMatrix;

    fn chip(n: &crate::netlist::Netlist, r: usize, t: usize, seed: u64) -> ProtectedChip {
        let taps = (0..r).map(|i| 2 * i).collect();
        let lfsr = LfsrSpec::standard(20, 0x5a5a5, taps).unwrap();
        build_protected_chip(n, r, t, lfsr, seed, &ChipOptions::default()).unwrap()
    }

    /// Fraction of nonzero error patterns the code catches.
    fn exact_rate(code: &ParityCheckMatrix) -> f64 {
        let k = code.k();
        let caught = (1..1u64 << k)
            .filter(|&e| code.check_mask(&BitVector::from_u64(e, k)).unwrap() != 0)
            .count();
        caught as f64 / ((1u64 << k) - 1) as f64
    }

    #[test]
    fn multi_bit_logic_flips_match_code_oracle() {
        let c = chip(&library::ripple_adder(8), 3, 0, 21);
        let want = exact_rate(&c.logic_code);
        let rep = run_campaign(&c, &UniformLogicFlips, 4_000, 8, 1).unwrap();
        assert_eq!(rep.false_positives, 0);
        let p = rep.proportion();
        assert!((p.rate() - want).abs() < 4.0 * p.std_error(), "{} vs {want}", p.rate());
    }

    #[test]
    fn single_output_flips_always_caught() {
        let c = chip(&library::alu2(), 3, 1, 5);
        let rep = run_campaign(&c, &SingleOutputFlip, 300, 4, 2).unwrap();
        assert_eq!(rep.detected, rep.trials);
        assert!(rep.rows.iter().all(|r| r.first_detect_cycle == Some(0)));
    }

    #[test]
    fn attack_free_reports_nothing() {
        let mut opts = ChipOptions {
            ram: Some(RamParams {
                addr_bits: 3,
                word_bits: 8,
                r: 3,
            }),
            ..Default::default()
        };
        opts.pipeline_stages = 1;
        let lfsr = LfsrSpec::standard(16, 7, vec![1, 2, 9]).unwrap();
        let c = build_protected_chip(&library::ripple_adder(3), 3, 1, lfsr, 3, &opts).unwrap();
        let rep = run_campaign(&c, &AttackFree, 50, 100, 3).unwrap();
        assert_eq!((rep.detected, rep.false_positives), (0, 0));
        assert_eq!(rep.per_kind["none"].trials, 50);
    }

    #[test]
    fn reliability_never_fires_early() {
        let c = chip(&library::ripple_adder(4), 4, 0, 8);
        let d: AttackDescriptor = "reliability stuck0 gate=s2 trigger=after_cycle:500".parse().unwrap();
        let rep = run_campaign(&c, &FixedAttacks(vec![d]), 20, 600, 4).unwrap();
        assert!(rep.detected > 0);
        for r in &rep.rows {
            if let Some(c) = r.first_detect_cycle {
                assert!(c >= 500);
            }
        }
    }

    #[test]
    fn decoupling_attacks() {
        let c = chip(&library::ripple_adder(4), 4, 0, 9);
        let null: AttackDescriptor = "decoupling_parity_null - trigger=after_cycle:3".parse().unwrap();
        let stored: AttackDescriptor = "decoupling_stored_state replay:2 trigger=after_cycle:5".parse().unwrap();
        let dos: AttackDescriptor = "dos - trigger=at_cycle:7".parse().unwrap();
        let replay: AttackDescriptor = "pin replay:3 trigger=at_cycle:9".parse().unwrap();
        assert_eq!(run_campaign(&c, &FixedAttacks(vec![null]), 40, 30, 1).unwrap().detected, 0);
        assert_eq!(run_campaign(&c, &FixedAttacks(vec![stored]), 40, 30, 1).unwrap().detected, 0);
        let rep = run_campaign(&c, &FixedAttacks(vec![dos]), 40, 30, 1).unwrap();
        assert!(rep.rows.iter().all(|r| r.first_detect_cycle == Some(7)));
        assert!(run_campaign(&c, &FixedAttacks(vec![replay]), 40, 30, 1).unwrap().rate() > 0.8);
    }

    #[test]
    fn csv_shape_and_reproducibility() {
        let c = chip(&library::ripple_adder(2), 2, 0, 1);
        let a = run_campaign(&c, &UniformLogicFlips, 25, 5, 77).unwrap();
        let b = run_campaign(&c, &UniformLogicFlips, 25, 5, 77).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        let csv = a.to_csv();
        assert!(csv.starts_with("trial,attack_kind,detected,first_detect_cycle\n"));
        assert_eq!(csv.lines().count(), 27);
        assert!(csv.lines().last().unwrap().starts_with("summary,all,"));
        let m = a.clone().merge(b);
        assert_eq!(m.trials, 50);
        assert_eq!(m.rows[30].trial, 30);
    }
}
