//! Trojan attacks on a protected chip: descriptors, injection, campaigns
//! and the analytic reverse-engineering calculators.
//!
//! A descriptor is one line of text:
//!
//! ```text
//! <kind> <payload> [gate=<name> [block=f|ced|enc<i>|dec]] [pin=<pin>] [trigger=<trigger>]
//! ```
//!
//! * kinds: `pin`, `logic`, `electrical`, `reliability`,
//!   `decoupling_stored_state`, `decoupling_parity_null`,
//!   `decoupling_fft_zero`, `dos`
//! * payloads: `flip`, `stuck0`, `stuck1`, `replay:<j>`, or `-` where the
//!   kind needs none
//! * pins: `in:<i>`, `incheck:<i>`, `out:<i>`, `outcheck:<port>.<i>`
//! * triggers: `always` (default), `at_cycle:<c>`, `after_cycle:<c>`,
//!   `random:<p>`

mod analytic;
mod campaign;
mod submatch;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

use crate::bits::BitVector;
use crate::chip::{Block, ChipError, CycleFaults, PinTarget, ProtectedChip};
use crate::netlist::{FaultKind, WireFault, WireId};

pub use analytic::{
    cp_attack_probability, decoupling_cost, destructive_detection_probability, destructive_monte_carlo,
    per_sb_attack_probability, DecouplingCost, DecouplingDesign, DecouplingKind, InspectionReport,
};
pub use campaign::{
    run_attack_file, run_campaign, run_trial, AttackFree, AttackGenerator, DetectionReport, FixedAttacks,
    PinDataFlips, SingleOutputFlip, TrialOutcome, UniformLogicFlips,
};
pub use submatch::{subcircuit_match_attack, MatchOptions, SubcircuitMatchReport};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AttackError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown target: {0}")]
    UnknownTarget(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Chip(#[from] ChipError),
    #[error("argument out of domain: {0}")]
    Domain(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AttackKind {
    Pin,
    Logic,
    Electrical,
    Reliability,
    DecouplingStoredState,
    DecouplingParityNull,
    DecouplingFftZero,
    Dos,
}

impl AttackKind {
    pub const ALL: [AttackKind; 8] = [
        AttackKind::Pin,
        AttackKind::Logic,
        AttackKind::Electrical,
        AttackKind::Reliability,
        AttackKind::DecouplingStoredState,
        AttackKind::DecouplingParityNull,
        AttackKind::DecouplingFftZero,
        AttackKind::Dos,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Pin => "pin",
            AttackKind::Logic => "logic",
            AttackKind::Electrical => "electrical",
            AttackKind::Reliability => "reliability",
            AttackKind::DecouplingStoredState => "decoupling_stored_state",
            AttackKind::DecouplingParityNull => "decoupling_parity_null",
            AttackKind::DecouplingFftZero => "decoupling_fft_zero",
            AttackKind::Dos => "dos",
        }
    }
}

impl FromStr for AttackKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        AttackKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown attack kind `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Payload {
    Flip,
    Stuck0,
    Stuck1,
    Replay(usize),
    None,
}

impl Payload {
    fn fault_kind(self) -> Option<FaultKind> {
        match self {
            Payload::Flip => Some(FaultKind::Flip),
            Payload::Stuck0 => Some(FaultKind::Stuck0),
            Payload::Stuck1 => Some(FaultKind::Stuck1),
            _ => None,
        }
    }
}

impl fmt::Display for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Payload::Flip => f.write_str("flip"),
            Payload::Stuck0 => f.write_str("stuck0"),
            Payload::Stuck1 => f.write_str("stuck1"),
            Payload::Replay(j) => write!(f, "replay:{j}"),
            Payload::None => f.write_str("-"),
        }
    }
}

impl FromStr for Payload {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "flip" => Ok(Payload::Flip),
            "stuck0" => Ok(Payload::Stuck0),
            "stuck1" => Ok(Payload::Stuck1),
            "-" => Ok(Payload::None),
            _ => s
                .strip_prefix("replay:")
                .and_then(|j| j.parse().ok())
                .filter(|&j| j > 0)
                .map(Payload::Replay)
                .ok_or_else(|| format!("bad payload `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Trigger {
    Always,
    /// one cycle only
    AtCycle(u64),
    /// every cycle from `c` on (aging)
    AfterCycle(u64),
    /// independently each cycle
    Random(f64),
}

impl Trigger {
    pub fn fires<R: Rng + ?Sized>(&self, cycle: u64, rng: &mut R) -> bool {
        match *self {
            Trigger::Always => true,
            Trigger::AtCycle(c) => cycle == c,
            Trigger::AfterCycle(c) => cycle >= c,
            Trigger::Random(p) => rng.gen_bool(p),
        }
    }

    /// Earliest cycle on which the trigger can fire.
    pub fn earliest(&self) -> u64 {
        match *self {
            Trigger::AtCycle(c) | Trigger::AfterCycle(c) => c,
            _ => 0,
        }
    }
}

impl fmt::Display for Trigger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Trigger::Always => f.write_str("always"),
            Trigger::AtCycle(c) => write!(f, "at_cycle:{c}"),
            Trigger::AfterCycle(c) => write!(f, "after_cycle:{c}"),
            Trigger::Random(p) => write!(f, "random:{p}"),
        }
    }
}

impl FromStr for Trigger {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let bad = || format!("bad trigger `{s}`");
        if s == "always" {
            return Ok(Trigger::Always);
        }
        let (k, v) = s.split_once(':').ok_or_else(bad)?;
        match k {
            "at_cycle" => v.parse().map(Trigger::AtCycle).map_err(|_| bad()),
            "after_cycle" => v.parse().map(Trigger::AfterCycle).map_err(|_| bad()),
            "random" => v
                .parse::<f64>()
                .ok()
                .filter(|p| (0.0..=1.0).contains(p))
                .map(Trigger::Random)
                .ok_or_else(bad),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    None,
    Gate { block: Block, name: String },
    Pin(PinTarget),
}

fn parse_pin(s: &str) -> Option<PinTarget> {
    let (k, v) = s.split_once(':')?;
    match k {
        "in" => v.parse().ok().map(PinTarget::InData),
        "incheck" => v.parse().ok().map(PinTarget::InCheck),
        "out" => v.parse().ok().map(PinTarget::OutData),
        "outcheck" => {
            let (p, b) = v.split_once('.')?;
            Some(PinTarget::OutCheck {
                port: p.parse().ok()?,
                bit: b.parse().ok()?,
            })
        }
        _ => None,
    }
}

fn pin_text(p: PinTarget) -> String {
    match p {
        PinTarget::InData(i) => format!("in:{i}"),
        PinTarget::InCheck(i) => format!("incheck:{i}"),
        PinTarget::OutData(i) => format!("out:{i}"),
        PinTarget::OutCheck { port, bit } => format!("outcheck:{port}.{bit}"),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackDescriptor {
    pub kind: AttackKind,
    pub payload: Payload,
    pub target: Target,
    pub trigger: Trigger,
}

impl AttackDescriptor {
    pub fn new(kind: AttackKind, payload: Payload, target: Target, trigger: Trigger) -> Self {
        AttackDescriptor {
            kind,
            payload,
            target,
            trigger,
        }
    }

    pub fn logic(gate: &str, payload: Payload, trigger: Trigger) -> Self {
        Self::new(
            AttackKind::Logic,
            payload,
            Target::Gate {
                block: Block::F,
                name: gate.into(),
            },
            trigger,
        )
    }

    pub fn pin(pin: PinTarget, payload: Payload, trigger: Trigger) -> Self {
        Self::new(AttackKind::Pin, payload, Target::Pin(pin), trigger)
    }

    /// Checks the kind/payload/target combination, independent of any chip.
    pub fn validate(&self) -> Result<(), String> {
        use AttackKind::*;
        let fault = self.payload.fault_kind().is_some();
        match self.kind {
            Pin => match (&self.target, self.payload) {
                (Target::Pin(_), p) if p.fault_kind().is_some() => Ok(()),
                (Target::None, Payload::Replay(_)) => Ok(()),
                _ => Err("pin attacks need `pin=` with flip/stuck, or a bare replay:<j>".into()),
            },
            Logic | Electrical | Reliability => match &self.target {
                Target::Gate { .. } | Target::Pin(_) if fault => Ok(()),
                _ => Err(format!("{} attacks need a gate or pin and a flip/stuck payload", self.kind.name())),
            },
            DecouplingStoredState => match self.payload {
                Payload::Replay(_) => Ok(()),
                _ => Err("decoupling_stored_state needs replay:<j>".into()),
            },
            DecouplingParityNull | DecouplingFftZero | Dos => Ok(()),
        }
    }
}

impl fmt::Display for AttackDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.kind.name(), self.payload)?;
        match &self.target {
            Target::None => {}
            Target::Gate { block, name } => {
                write!(f, " gate={name}")?;
                if *block != Block::F {
                    write!(f, " block={}", block.name())?;
                }
            }
            Target::Pin(p) => write!(f, " pin={}", pin_text(*p))?,
        }
        write!(f, " trigger={}", self.trigger)
    }
}

impl FromStr for AttackDescriptor {
    type Err = String;

    fn from_str(line: &str) -> Result<Self, String> {
        let mut words = line.split_whitespace();
        let kind: AttackKind = words.next().ok_or("empty descriptor")?.parse()?;
        let mut payload = Payload::None;
        let mut gate = None;
        let mut block = Block::F;
        let mut pin = None;
        let mut trigger = Trigger::Always;
        for (i, w) in words.enumerate() {
            match w.split_once('=') {
                Some(("gate", v)) => gate = Some(v.to_string()),
                Some(("block", v)) => block = Block::parse(v).ok_or_else(|| format!("unknown block `{v}`"))?,
                Some(("pin", v)) => pin = Some(parse_pin(v).ok_or_else(|| format!("bad pin `{v}`"))?),
                Some(("trigger", v)) => trigger = v.parse()?,
                Some((k, _)) => return Err(format!("unknown key `{k}`")),
                None if i == 0 => payload = w.parse()?,
                None => return Err(format!("unexpected `{w}`")),
            }
        }
        let target = match (gate, pin) {
            (Some(_), Some(_)) => return Err("give either gate= or pin=, not both".into()),
            (Some(name), None) => Target::Gate { block, name },
            (None, Some(p)) => Target::Pin(p),
            (None, None) => Target::None,
        };
        let d = AttackDescriptor::new(kind, payload, target, trigger);
        d.validate()?;
        Ok(d)
    }
}

/// Parses an attack file: one descriptor per line, `#` comments.
pub fn parse_attacks(text: &str) -> Result<Vec<AttackDescriptor>, AttackError> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
        .map(|(line, l)| l.parse().map_err(|message| AttackError::Parse { line, message }))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
enum Action {
    Wire(Block, WireId, FaultKind),
    Pin(PinTarget, FaultKind),
    Replay(usize),
    StoredState(usize),
    ParityNull,
    PowerOff,
}

/// A descriptor bound to a particular chip.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedAttack {
    pub descriptor: AttackDescriptor,
    action: Action,
}

impl ResolvedAttack {
    pub fn resolve(chip: &ProtectedChip, d: &AttackDescriptor) -> Result<Self, AttackError> {
        d.validate().map_err(AttackError::Invalid)?;
        let fault = d.payload.fault_kind();
        let action = match (d.kind, &d.target) {
            (AttackKind::DecouplingFftZero, _) => {
                return Err(AttackError::Invalid(
                    "decoupling_fft_zero applies to the FFT engine, not a logic chip".into(),
                ))
            }
            (AttackKind::DecouplingParityNull, _) => Action::ParityNull,
            (AttackKind::Dos, _) => Action::PowerOff,
            (AttackKind::DecouplingStoredState, _) => match d.payload {
                Payload::Replay(j) => Action::StoredState(j),
                _ => unreachable!("validated"),
            },
            (_, Target::None) => match d.payload {
                Payload::Replay(j) => Action::Replay(j),
                _ => unreachable!("validated"),
            },
            (_, Target::Gate { block, name }) => {
                let w = chip
                    .wire(*block, name)
                    .ok_or_else(|| AttackError::UnknownTarget(format!("{}:{name}", block.name())))?;
                Action::Wire(*block, w, fault.expect("validated"))
            }
            (_, Target::Pin(p)) => {
                let ok = match *p {
                    PinTarget::InData(i) => i < chip.f.num_inputs(),
                    PinTarget::InCheck(i) => i < chip.r,
                    PinTarget::OutData(i) => i < chip.f.num_outputs(),
                    PinTarget::OutCheck { port, bit } => port < chip.outputs.len() && bit < chip.r,
                };
                if !ok {
                    return Err(AttackError::UnknownTarget(pin_text(*p)));
                }
                Action::Pin(*p, fault.expect("validated"))
            }
        };
        Ok(ResolvedAttack {
            descriptor: d.clone(),
            action,
        })
    }
}

/// A chip with a set of attacks installed.
#[derive(Debug, Clone)]
pub struct AttackedChip<'a> {
    pub chip: &'a ProtectedChip,
    pub attacks: Vec<ResolvedAttack>,
}

/// Binds descriptors to the chip's wires and pins.
pub fn inject<'a>(chip: &'a ProtectedChip, attacks: &[AttackDescriptor]) -> Result<AttackedChip<'a>, AttackError> {
    Ok(AttackedChip {
        chip,
        attacks: attacks
            .iter()
            .map(|d| ResolvedAttack::resolve(chip, d))
            .collect::<Result<_, _>>()?,
    })
}

impl AttackedChip<'_> {
    /// Faults for one cycle. `rng` drives random triggers and the arbitrary
    /// outputs of a stored-state attack.
    pub fn faults_at<R: Rng + ?Sized>(&self, cycle: u64, rng: &mut R) -> CycleFaults {
        let mut f = CycleFaults::default();
        for a in &self.attacks {
            if !a.descriptor.trigger.fires(cycle, rng) {
                continue;
            }
            match a.action {
                Action::Wire(block, w, kind) => f.wires.push((block, WireFault::new(w, kind))),
                Action::Pin(p, kind) => f.pins.push((p, kind)),
                Action::Replay(j) => f.replay = Some(j),
                Action::StoredState(j) => {
                    f.ced_stale = Some(j);
                    f.outputs_override = Some(BitVector::random(self.chip.f.num_outputs(), rng));
                }
                Action::ParityNull => f.parity_null = true,
                Action::PowerOff => f.power_off = true,
            }
        }
        f
    }

    pub fn kind_label(&self) -> String {
        let mut kinds: Vec<&str> = self.attacks.iter().map(|a| a.descriptor.kind.name()).collect();
        kinds.sort_unstable();
        kinds.dedup();
        if kinds.is_empty() {
            "none".into()
        } else {
            kinds.join("+")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chip::{build_protected_chip, ChipOptions};
    use crate::lfsr::LfsrSpec;
    use crate::library;

    #[test]
    fn descriptor_round_trip() {
        for line in [
            "logic flip gate=g7 trigger=at_cycle:120",
            "pin stuck1 pin=outcheck:0.2 trigger=after_cycle:5",
            "electrical flip gate=e0 block=ced trigger=random:0.25",
            "reliability stuck0 gate=s1 trigger=after_cycle:500",
            "decoupling_stored_state replay:3 trigger=always",
            "decoupling_parity_null - trigger=after_cycle:10",
            "pin replay:2 trigger=at_cycle:4",
            "dos - trigger=always",
        ] {
            let d: AttackDescriptor = line.parse().unwrap();
            assert_eq!(d.to_string(), line);
        }
        let d: AttackDescriptor = "logic flip gate=x".parse().unwrap();
        assert_eq!(d.trigger, Trigger::Always);
    }

    #[test]
    fn malformed_descriptors() {
        for bad in [
            "",
            "magic flip gate=x",
            "logic flip",
            "logic replay:2 gate=x",
            "pin flip gate=x",
            "logic flip gate=x pin=in:0",
            "logic flip gate=x trigger=sometimes",
            "logic flip gate=x trigger=random:1.5",
            "decoupling_stored_state flip",
            "logic flip gate=x block=gpu",
            "pin flip pin=in",
        ] {
            assert!(bad.parse::<AttackDescriptor>().is_err(), "{bad}");
        }
        let err = parse_attacks("# header\nlogic flip gate=a\n\nlogic zap gate=b\n").unwrap_err();
        assert!(matches!(err, AttackError::Parse { line: 4, .. }));
    }

    #[test]
    fn triggers() {
        let mut rng = crate::stats::trial_rng(0, 0);
        assert!(Trigger::AtCycle(3).fires(3, &mut rng));
        assert!(!Trigger::AtCycle(3).fires(4, &mut rng));
        assert!(!Trigger::AfterCycle(3).fires(2, &mut rng));
        assert!(Trigger::AfterCycle(3).fires(300, &mut rng));
        let hits = (0..10_000).filter(|&c| Trigger::Random(0.2).fires(c, &mut rng)).count();
        assert!((1_800..2_200).contains(&hits));
    }

    #[test]
    fn unknown_targets_are_rejected() {
        let lfsr = LfsrSpec::standard(16, 1, vec![0, 3]).unwrap();
        let chip = build_protected_chip(&library::ripple_adder(2), 2, 0, lfsr, 1, &ChipOptions::default()).unwrap();
        let bad = ["logic flip gate=nope", "pin flip pin=in:5", "pin flip pin=outcheck:1.0", "decoupling_fft_zero -"];
        for b in bad {
            let d: AttackDescriptor = b.parse().unwrap();
            assert!(inject(&chip, &[d]).is_err(), "{b}");
        }
        let ok: AttackDescriptor = "logic stuck1 gate=s1 trigger=after_cycle:2".parse().unwrap();
        let atk = inject(&chip, &[ok]).unwrap();
        let mut rng = crate::stats::trial_rng(0, 0);
        assert!(atk.faults_at(1, &mut rng).is_empty());
        assert_eq!(atk.faults_at(2, &mut rng).wires.len(), 1);
    }
}
