//! Lockstep simulation of several protected chips wired together by
//! encoded channels, each chip paired with its trusted error monitor.
//!
//! A channel word produced in cycle c is consumed in cycle c + 1. A chip
//! fed by a channel is not clocked until its first word arrives, so
//! chip cycles lag the system cycle by the chip's depth in the topology.
//! Ports that feed no chip end at a trusted receiver outside the system.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::attack::{inject, AttackDescriptor, AttackError, AttackedChip, DetectionReport, TrialOutcome};
use crate::bits::BitVector;
use crate::chip::bundle::bundle_files;
use crate::chip::{
    build_protected_chip, decode_inputs, encode_outputs, random_ram_request, ChipError, ChipInput, ChipOptions,
    InputDecoderState, OutputEncoderState, ProtectedChip,
};
use crate::lfsr::LfsrSpec;
use crate::netlist::Netlist;
use crate::stats::trial_rng;

#[derive(Debug, Error)]
pub enum SystemError {
    #[error("topology: {0}")]
    Topology(String),
    #[error("stimulus: {0}")]
    Stimulus(String),
    #[error(transparent)]
    Chip(#[from] ChipError),
    #[error(transparent)]
    Attack(#[from] AttackError),
}

/// Output port `port` of chip `from` drives all primary inputs of chip `to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Channel {
    pub from: usize,
    pub port: usize,
    pub to: usize,
}

#[derive(Debug, Clone)]
pub struct SystemTopology {
    pub chips: Vec<ProtectedChip>,
    pub channels: Vec<Channel>,
}

impl SystemTopology {
    /// Channels must point forward (`from < to`), each chip has at most
    /// one feeding channel, and a receiving chip decodes with exactly the
    /// code and initial check of the port it listens to. Several chips on
    /// one port therefore share that port's encoding.
    pub fn validate(&self) -> Result<(), SystemError> {
        let bad = |m: String| Err(SystemError::Topology(m));
        let mut fed = vec![false; self.chips.len()];
        for ch in &self.channels {
            let Channel { from, port, to } = *ch;
            if from >= to || to >= self.chips.len() {
                return bad(format!("channel {from}.{port} -> {to} must point forward to an existing chip"));
            }
            let Some(p) = self.chips[from].outputs.get(port) else {
                return bad(format!("chip {from} has no port {port}"));
            };
            if std::mem::replace(&mut fed[to], true) {
                return bad(format!("chip {to} is fed by more than one channel"));
            }
            let rx = &self.chips[to];
            if p.subset.len() != rx.f.num_inputs() {
                return bad(format!(
                    "port {from}.{port} carries {} bits but chip {to} has {} inputs",
                    p.subset.len(),
                    rx.f.num_inputs()
                ));
            }
            if rx.input.code != p.code || rx.input.initial_prev != p.initial_prev {
                return bad(format!("chip {to} does not decode with the encoding of port {from}.{port}"));
            }
        }
        Ok(())
    }

    fn feeder(&self, chip: usize) -> Option<Channel> {
        self.channels.iter().copied().find(|c| c.to == chip)
    }

    /// (chip, port) pairs that leave the system.
    pub fn sinks(&self) -> Vec<(usize, usize)> {
        let mut v = Vec::new();
        for (i, c) in self.chips.iter().enumerate() {
            for p in 0..c.outputs.len() {
                if !self.channels.iter().any(|ch| ch.from == i && ch.port == p) {
                    v.push((i, p));
                }
            }
        }
        v
    }
}

/// Builds a chain f0 → f1 → … in which every chip sends all its outputs
/// on one port to the next.
pub fn pipeline_topology(
    fs: &[Netlist],
    r: usize,
    t: usize,
    seed: u64,
    options: &ChipOptions,
) -> Result<SystemTopology, SystemError> {
    let mut chips: Vec<ProtectedChip> = Vec::with_capacity(fs.len());
    for (i, f) in fs.iter().enumerate() {
        let mut opts = options.clone();
        opts.output_subsets = Vec::new();
        if let Some(prev) = chips.last() {
            let p = &prev.outputs[0];
            opts.input_code = Some((p.code.clone(), p.initial_prev.clone()));
        }
        let lfsr = LfsrSpec::standard(16, 0xACE1 ^ (i as u64 + 1), (0..r).collect())
            .map_err(|e| SystemError::Topology(e.to_string()))?;
        chips.push(build_protected_chip(f, r, t, lfsr, trial_rng(seed, i as u64).gen(), &opts)?);
    }
    let channels = (1..chips.len()).map(|i| Channel { from: i - 1, port: 0, to: i }).collect();
    let topo = SystemTopology { chips, channels };
    topo.validate()?;
    Ok(topo)
}

/// Primary-input vectors for chips without a feeding channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stimulus {
    /// uniform random vectors from the run seed
    Random,
    /// per source chip, vectors replayed cyclically
    Vectors(BTreeMap<usize, Vec<BitVector>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemAttack {
    pub chip: usize,
    pub descriptor: AttackDescriptor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub cycles: u64,
    pub seed: u64,
    /// per chip: system cycles in which its monitor reported an attack
    pub monitor_fires: Vec<Vec<u64>>,
    /// per chip: system cycles in which its input decoder objected
    pub decoder_fires: Vec<Vec<u64>>,
    /// per off-system port: cycles in which its trusted receiver objected
    pub sink_fires: Vec<((usize, usize), Vec<u64>)>,
    /// per injected attack, the first report at or after its trigger
    pub first_detection: Vec<Option<u64>>,
    pub detection: DetectionReport,
    /// SHA-256 over seed, cycle count, stimulus, attacks, channels and
    /// every chip bundle
    pub digest: String,
}

impl RunReport {
    pub fn total_reports(&self) -> usize {
        self.monitor_fires.iter().map(Vec::len).sum::<usize>()
            + self.sink_fires.iter().map(|(_, v)| v.len()).sum::<usize>()
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "cycles = {}", self.cycles);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "digest = {}", self.digest);
        for (i, (m, d)) in self.monitor_fires.iter().zip(&self.decoder_fires).enumerate() {
            let first = |v: &Vec<u64>| v.first().map_or("-".to_string(), u64::to_string);
            let _ = writeln!(
                s,
                "chip {i}: monitor reports {} (first {}), decoder objections {} (first {})",
                m.len(),
                first(m),
                d.len(),
                first(d)
            );
        }
        for ((c, p), v) in &self.sink_fires {
            let _ = writeln!(s, "sink {c}.{p}: reports {}", v.len());
        }
        for (i, f) in self.first_detection.iter().enumerate() {
            let _ = writeln!(s, "attack {i}: first detection {}", f.map_or("never".into(), |c| c.to_string()));
        }
        s
    }
}

const ATTACK_STREAM: u64 = 0x6174_7461_636b;

fn config_digest(topo: &SystemTopology, stimulus: &Stimulus, attacks: &[SystemAttack], cycles: u64, seed: u64) -> String {
    let mut h = Sha256::new();
    h.update(format!("seed={seed}\ncycles={cycles}\n"));
    match stimulus {
        Stimulus::Random => h.update("stimulus=random\n"),
        Stimulus::Vectors(m) => {
            for (c, vs) in m {
                for v in vs {
                    h.update(format!("stimulus {c} {}\n", v.to_bit_string()));
                }
            }
        }
    }
    for a in attacks {
        h.update(format!("attack {} {}\n", a.chip, a.descriptor));
    }
    for ch in &topo.channels {
        h.update(format!("channel {}.{} -> {}\n", ch.from, ch.port, ch.to));
    }
    for (i, chip) in topo.chips.iter().enumerate() {
        for (name, text) in bundle_files(chip) {
            h.update(format!("chip {i} {name}\n"));
            h.update(text);
        }
    }
    hex::encode(h.finalize())
}

/// Simulates `cycles` system cycles.
pub fn run_system(
    topo: &SystemTopology,
    stimulus: &Stimulus,
    attacks: &[SystemAttack],
    cycles: u64,
    seed: u64,
) -> Result<RunReport, SystemError> {
    topo.validate()?;
    let n = topo.chips.len();
    let mut per_chip: Vec<Vec<AttackDescriptor>> = vec![Vec::new(); n];
    for a in attacks {
        per_chip
            .get_mut(a.chip)
            .ok_or_else(|| SystemError::Topology(format!("attack names chip {} of {n}", a.chip)))?
            .push(a.descriptor.clone());
    }
    let attacked: Vec<AttackedChip<'_>> = topo
        .chips
        .iter()
        .zip(&per_chip)
        .map(|(c, d)| inject(c, d))
        .collect::<Result<_, _>>()?;
    let feeders: Vec<Option<Channel>> = (0..n).map(|i| topo.feeder(i)).collect();
    if let Stimulus::Vectors(m) = stimulus {
        for (i, f) in feeders.iter().enumerate() {
            if f.is_none() {
                let vs = m.get(&i).ok_or_else(|| SystemError::Stimulus(format!("no vectors for source chip {i}")))?;
                if vs.is_empty() || vs.iter().any(|v| v.width() != topo.chips[i].f.num_inputs()) {
                    return Err(SystemError::Stimulus(format!("vectors for chip {i} are empty or of the wrong width")));
                }
            }
        }
    }

    let mut states: Vec<_> = topo.chips.iter().map(ProtectedChip::reset).collect();
    let mut senders: Vec<OutputEncoderState> = topo.chips.iter().map(ProtectedChip::sender_state).collect();
    let sinks = topo.sinks();
    let mut sink_rx: Vec<InputDecoderState> = sinks.iter().map(|&(c, p)| topo.chips[c].receiver_state(p)).collect();
    let mut stim_rng: Vec<ChaCha8Rng> = (0..n as u64).map(|i| trial_rng(seed, i)).collect();
    let mut atk_rng: Vec<ChaCha8Rng> = (0..n as u64).map(|i| trial_rng(seed ^ ATTACK_STREAM, i)).collect();
    let mut latched: Vec<Option<(BitVector, BitVector)>> = vec![None; n];
    let mut monitor_fires = vec![Vec::new(); n];
    let mut decoder_fires = vec![Vec::new(); n];
    let mut sink_fires: Vec<Vec<u64>> = vec![Vec::new(); sinks.len()];

    for cycle in 0..cycles {
        let mut next: Vec<Option<(BitVector, BitVector)>> = vec![None; n];
        for i in 0..n {
            let chip = &topo.chips[i];
            let (data, check) = match feeders[i] {
                Some(_) => match latched[i].take() {
                    Some(word) => word,
                    None => continue,
                },
                None => {
                    let data = match stimulus {
                        Stimulus::Random => BitVector::random(chip.f.num_inputs(), &mut stim_rng[i]),
                        Stimulus::Vectors(m) => {
                            let vs = &m[&i];
                            vs[(states[i].cycle % vs.len() as u64) as usize].clone()
                        }
                    };
                    let (check, s) = encode_outputs(&senders[i], &data)?;
                    senders[i] = s;
                    (data, check)
                }
            };
            let ram = chip.ram.as_ref().map(|(p, _)| random_ram_request(p, &mut stim_rng[i]));
            let faults = attacked[i].faults_at(cycle, &mut atk_rng[i]);
            let out = chip.chip_cycle_with(&mut states[i], &ChipInput { data, check, ram }, &faults)?;
            if out.monitor_attack {
                monitor_fires[i].push(cycle);
            }
            if out.decoder_signal != out.taps {
                decoder_fires[i].push(cycle);
            }
            for ch in topo.channels.iter().filter(|c| c.from == i) {
                next[ch.to] = Some(out.ports[ch.port].clone());
            }
            for (s, &(c, p)) in sinks.iter().enumerate() {
                if c == i {
                    let (d, k) = &out.ports[p];
                    let (bad, st) = decode_inputs(&sink_rx[s], d, k)?;
                    sink_rx[s] = st;
                    if bad {
                        sink_fires[s].push(cycle);
                    }
                }
            }
        }
        latched = next;
    }

    let mut any: Vec<u64> = monitor_fires.iter().chain(&sink_fires).flatten().copied().collect();
    any.sort_unstable();
    let first_detection: Vec<Option<u64>> = attacks
        .iter()
        .map(|a| {
            let from = a.descriptor.trigger.earliest();
            any.iter().copied().find(|&c| c >= from)
        })
        .collect();
    let rows = attacks
        .iter()
        .zip(&first_detection)
        .enumerate()
        .map(|(i, (a, f))| TrialOutcome {
            trial: i as u64,
            kind: a.descriptor.kind.name().to_string(),
            detected: f.is_some(),
            first_detect_cycle: *f,
            false_positive: false,
        })
        .collect();
    Ok(RunReport {
        cycles,
        seed,
        monitor_fires,
        decoder_fires,
        sink_fires: sinks.into_iter().zip(sink_fires).collect(),
        first_detection,
        detection: DetectionReport::from_rows(rows),
        digest: config_digest(topo, stimulus, attacks, cycles, seed),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::{Payload, Trigger};
    use crate::chip::PinTarget;
    use crate::library;

    fn two_chips(seed: u64) -> SystemTopology {
        let a = library::random_circuit(6, 5, 30, 1);
        let b = library::random_circuit(5, 4, 30, 2);
        pipeline_topology(&[a, b], 3, 1, seed, &ChipOptions::default()).unwrap()
    }

    #[test]
    fn untampered_pipeline_is_silent() {
        let topo = two_chips(1);
        let rep = run_system(&topo, &Stimulus::Random, &[], 3000, 9).unwrap();
        assert_eq!(rep.total_reports(), 0, "{}", rep.summary());
        assert!(rep.decoder_fires.iter().all(Vec::is_empty));
        assert_eq!(rep.sink_fires.len(), 1);
    }

    #[test]
    fn pin_attack_is_caught_downstream() {
        let topo = two_chips(2);
        let atk = SystemAttack {
            chip: 0,
            descriptor: AttackDescriptor::pin(PinTarget::OutData(1), Payload::Flip, Trigger::AtCycle(40)),
        };
        let rep = run_system(&topo, &Stimulus::Random, &[atk], 100, 3).unwrap();
        // sent in cycle 40, decoded by chip 1 in cycle 41
        assert_eq!(rep.decoder_fires[1], vec![41]);
        assert_eq!(rep.monitor_fires[1], vec![41]);
        assert!(rep.monitor_fires[0].is_empty());
        assert_eq!(rep.first_detection, vec![Some(41)]);
    }

    #[test]
    fn logic_attack_is_localised() {
        let topo = two_chips(4);
        let f = &topo.chips[1].f;
        let out = f.wire_name(f.outputs()[0]).to_string();
        let atk = SystemAttack {
            chip: 1,
            descriptor: AttackDescriptor::logic(&out, Payload::Flip, Trigger::AfterCycle(10)),
        };
        let rep = run_system(&topo, &Stimulus::Random, &[atk], 50, 5).unwrap();
        assert!(rep.monitor_fires[0].is_empty());
        assert_eq!(rep.monitor_fires[1].first(), Some(&10));
        assert!(rep.decoder_fires.iter().all(Vec::is_empty));
    }

    #[test]
    fn reports_reproduce() {
        let topo = two_chips(3);
        let a = run_system(&topo, &Stimulus::Random, &[], 200, 1).unwrap();
        let b = run_system(&topo, &Stimulus::Random, &[], 200, 1).unwrap();
        assert_eq!(a, b);
        let c = run_system(&topo, &Stimulus::Random, &[], 200, 2).unwrap();
        assert_ne!(a.digest, c.digest);
    }

    #[test]
    fn topology_violations() {
        let mut topo = two_chips(1);
        topo.channels.push(Channel { from: 0, port: 0, to: 1 });
        assert!(matches!(topo.validate(), Err(SystemError::Topology(_))));
        let mut topo = two_chips(1);
        topo.channels[0] = Channel { from: 1, port: 0, to: 0 };
        assert!(topo.validate().is_err());
        // a receiver with its own, unrelated input code
        let a = library::random_circuit(6, 5, 30, 1);
        let b = library::random_circuit(5, 4, 30, 2);
        let lfsr = |s| LfsrSpec::standard(16, s, vec![0, 1, 2]).unwrap();
        let c0 = build_protected_chip(&a, 3, 0, lfsr(1), 1, &ChipOptions::default()).unwrap();
        let c1 = build_protected_chip(&b, 3, 0, lfsr(2), 2, &ChipOptions::default()).unwrap();
        let topo = SystemTopology {
            chips: vec![c0, c1],
            channels: vec![Channel { from: 0, port: 0, to: 1 }],
        };
        assert!(topo.validate().is_err());
        let mut m = BTreeMap::new();
        m.insert(0, vec![BitVector::zeros(3)]);
        let topo = two_chips(1);
        assert!(matches!(
            run_system(&topo, &Stimulus::Vectors(m), &[], 5, 1),
            Err(SystemError::Stimulus(_))
        ));
    }
}
