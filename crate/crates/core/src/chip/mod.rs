//! A protected chip: the function, its logic CED, encoded outputs, decoded
//! inputs, an optional protected RAM and the LFSR error path.
//!
//! Every checker emits the LFSR tap bits while things are healthy. The
//! checker outputs are merged with [`combine_error_signals`] and read by a
//! trusted [`ErrorMonitor`] running the same LFSR.
//!
//! The logic CED, output encoders and input decoder are real netlists that
//! get switchbox-obfuscated; `f` itself is left alone.

pub mod bundle;
pub mod ram;

use std::collections::VecDeque;

use rand::Rng;
use thiserror::Error;

use crate::bits::BitVector;
use crate::error::WidthMismatch;
use crate::lfsr::{combine_error_signals, ErrorMonitor, Lfsr, LfsrError, LfsrSpec};
use crate::netlist::{simplify, FaultKind, GateKind, Netlist, NetlistBuilder, NetlistError, WireFault, WireId};
use crate::parity::{build_ocp, xor_tree, ParityCheckMatrix, ParityError};
use crate::stats::trial_rng;
use crate::switchbox::{insert_switchboxes, InsertOptions, ObfuscatedNetlist, SwitchboxConfig, SwitchboxError};

pub use ram::{ProtectedRam, RamCycle, RamError, RamOp, RamSymptom, RamTrojan};

/// Cycles of sent data kept for replay-style attacks.
pub const HISTORY_DEPTH: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChipError {
    #[error(transparent)]
    Parity(#[from] ParityError),
    #[error(transparent)]
    Switchbox(#[from] SwitchboxError),
    #[error(transparent)]
    Netlist(#[from] NetlistError),
    #[error(transparent)]
    Width(#[from] WidthMismatch),
    #[error(transparent)]
    Lfsr(#[from] LfsrError),
    #[error(transparent)]
    Ram(#[from] RamError),
    #[error("invalid option: {0}")]
    Option(String),
    #[error("bundle: {0}")]
    Bundle(String),
}

// ---------------------------------------------------------------------------
// Behavioral encoder / decoder

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputEncoderState {
    pub code: ParityCheckMatrix,
    pub prev_check: BitVector,
}

/// `check = H(outputs) ^ prev`; the new state remembers `check`.
pub fn encode_outputs(
    state: &OutputEncoderState,
    outputs: &BitVector,
) -> Result<(BitVector, OutputEncoderState), ChipError> {
    WidthMismatch::check(state.code.r(), state.prev_check.width())?;
    let check = state.code.compute_check_bits(outputs)?.checked_xor(&state.prev_check)?;
    Ok((
        check.clone(),
        OutputEncoderState {
            code: state.code.clone(),
            prev_check: check,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputDecoderState {
    pub code: ParityCheckMatrix,
    pub prev_check: BitVector,
}

/// Returns `true` on attack: `recv ^ prev != H(inputs)`. The new state
/// remembers `recv`.
pub fn decode_inputs(
    state: &InputDecoderState,
    inputs: &BitVector,
    recv_check: &BitVector,
) -> Result<(bool, InputDecoderState), ChipError> {
    WidthMismatch::check(state.code.r(), recv_check.width())?;
    let expected = recv_check.checked_xor(&state.prev_check)?;
    let actual = state.code.compute_check_bits(inputs)?;
    Ok((
        expected != actual,
        InputDecoderState {
            code: state.code.clone(),
            prev_check: recv_check.clone(),
        },
    ))
}

// ---------------------------------------------------------------------------
// Netlist realizations

fn parity_rows(b: &mut NetlistBuilder, code: &ParityCheckMatrix, info: &[WireId], extra: &[Vec<WireId>]) -> Vec<WireId> {
    (0..code.r())
        .map(|i| {
            let mut terms: Vec<WireId> = extra.iter().map(|v| v[i]).collect();
            terms.extend((0..code.k()).filter(|&j| code.get(i, j)).map(|j| info[j]));
            xor_tree(b, terms)
        })
        .collect()
}

fn finish_outputs(mut b: NetlistBuilder, roots: Vec<WireId>, prefix: &str) -> Result<Netlist, NetlistError> {
    for (i, w) in roots.into_iter().enumerate() {
        let o = b.gate(GateKind::Buf, &format!("{prefix}{i}"), &[w]);
        b.output(o);
    }
    Ok(simplify(&b.build()?))
}

/// Inputs `o0.. , prev0..`; outputs `c0..` with `c = H(o) ^ prev`.
pub fn encoder_netlist(code: &ParityCheckMatrix) -> Result<Netlist, ChipError> {
    let mut b = NetlistBuilder::new("out_encoder");
    let o: Vec<WireId> = (0..code.k()).map(|j| b.input(&format!("o{j}"))).collect();
    let prev: Vec<WireId> = (0..code.r()).map(|i| b.input(&format!("prev{i}"))).collect();
    let roots = parity_rows(&mut b, code, &o, &[prev]);
    Ok(finish_outputs(b, roots, "c")?)
}

/// Inputs `x0.., recv0.., prev0.., tap0..`; outputs `e = tap ^ recv ^ prev ^ H(x)`.
pub fn decoder_netlist(code: &ParityCheckMatrix) -> Result<Netlist, ChipError> {
    let mut b = NetlistBuilder::new("in_decoder");
    let x: Vec<WireId> = (0..code.k()).map(|j| b.input(&format!("x{j}"))).collect();
    let recv: Vec<WireId> = (0..code.r()).map(|i| b.input(&format!("recv{i}"))).collect();
    let prev: Vec<WireId> = (0..code.r()).map(|i| b.input(&format!("prev{i}"))).collect();
    let tap: Vec<WireId> = (0..code.r()).map(|i| b.input(&format!("tap{i}"))).collect();
    let roots = parity_rows(&mut b, code, &x, &[tap, recv, prev]);
    Ok(finish_outputs(b, roots, "e")?)
}

/// OCP plus checker. Inputs are f's inputs, then `fo0..` (f's observed
/// outputs), then `tap0..`; outputs `e = tap ^ OCP(x) ^ H(fo)`.
pub fn logic_ced_netlist(f: &Netlist, code: &ParityCheckMatrix) -> Result<Netlist, ChipError> {
    let ocp = build_ocp(f, code)?;
    let mut b = ocp.to_builder();
    b.set_name(format!("{}_ced", f.name()));
    let preds = ocp.outputs().to_vec();
    let fo: Vec<WireId> = (0..code.k())
        .map(|j| {
            let n = b.fresh_name(&format!("fo{j}_"));
            b.input(&n)
        })
        .collect();
    let tap: Vec<WireId> = (0..code.r())
        .map(|i| {
            let n = b.fresh_name(&format!("tap{i}_"));
            b.input(&n)
        })
        .collect();
    let pred_cols: Vec<Vec<WireId>> = vec![tap, preds];
    let roots = parity_rows(&mut b, code, &fo, &pred_cols);
    b.outputs_mut().clear();
    let mut names = Vec::new();
    for i in 0..code.r() {
        names.push(b.fresh_name(&format!("e{i}_")));
    }
    for (w, name) in roots.into_iter().zip(names) {
        let o = b.gate(GateKind::Buf, &name, &[w]);
        b.output(o);
    }
    Ok(simplify(&b.build()?))
}

// ---------------------------------------------------------------------------
// Chip

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Block {
    F,
    Ced,
    Encoder(usize),
    Decoder,
}

impl Block {
    pub fn parse(s: &str) -> Option<Block> {
        match s {
            "f" => Some(Block::F),
            "ced" => Some(Block::Ced),
            "dec" => Some(Block::Decoder),
            _ => s.strip_prefix("enc").and_then(|d| d.parse().ok()).map(Block::Encoder),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Block::F => "f".into(),
            Block::Ced => "ced".into(),
            Block::Encoder(i) => format!("enc{i}"),
            Block::Decoder => "dec".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RamParams {
    pub addr_bits: usize,
    pub word_bits: usize,
    pub r: usize,
}

impl Default for RamParams {
    fn default() -> Self {
        RamParams {
            addr_bits: 8,
            word_bits: 16,
            r: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChipOptions {
    /// 0 or 1: register between the function and its CED.
    pub pipeline_stages: usize,
    /// Output subsets sent to different receivers; empty means one port
    /// carrying every output.
    pub output_subsets: Vec<Vec<usize>>,
    /// Input code and initial check shared with the sender; sampled when
    /// absent.
    pub input_code: Option<(ParityCheckMatrix, BitVector)>,
    /// Code for the logic CED; sampled when absent.
    pub logic_code: Option<ParityCheckMatrix>,
    pub ram: Option<RamParams>,
    /// Obfuscate the encoder and decoder netlists too (skipped for r = 1,
    /// where every switchbox in a single parity tree is degenerate).
    pub obfuscate_io: bool,
    pub max_iterations: usize,
}

impl Default for ChipOptions {
    fn default() -> Self {
        ChipOptions {
            pipeline_stages: 0,
            output_subsets: Vec::new(),
            input_code: None,
            logic_code: None,
            ram: None,
            obfuscate_io: true,
            max_iterations: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputPort {
    pub subset: Vec<usize>,
    pub code: ParityCheckMatrix,
    pub encoder: ObfuscatedNetlist,
    pub initial_prev: BitVector,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputPort {
    pub code: ParityCheckMatrix,
    pub decoder: ObfuscatedNetlist,
    pub initial_prev: BitVector,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtectedChip {
    pub f: Netlist,
    pub r: usize,
    pub t: usize,
    pub logic_code: ParityCheckMatrix,
    pub ced: ObfuscatedNetlist,
    pub outputs: Vec<OutputPort>,
    pub input: InputPort,
    pub ram: Option<(RamParams, ParityCheckMatrix)>,
    pub lfsr: LfsrSpec,
    pub pipeline_stages: usize,
    programmed: Vec<(Block, SwitchboxConfig)>,
    // netlists as configured
    ced_net: Netlist,
    enc_nets: Vec<Netlist>,
    dec_net: Netlist,
}

fn obfuscate(n: Netlist, t: usize, seed: u64, max_iterations: usize) -> Result<ObfuscatedNetlist, ChipError> {
    if t == 0 {
        return Ok(ObfuscatedNetlist::plain(n));
    }
    let mut opts = InsertOptions::new(t, seed);
    opts.max_iterations = max_iterations;
    Ok(insert_switchboxes(&n, &opts)?)
}

/// Builds a chip around `f` with `r` check bits everywhere and at least
/// `t` switchboxes per output cone of each obfuscated block.
pub fn build_protected_chip(
    f: &Netlist,
    r: usize,
    t: usize,
    lfsr: LfsrSpec,
    seed: u64,
    options: &ChipOptions,
) -> Result<ProtectedChip, ChipError> {
    if lfsr.r() != r {
        return Err(ChipError::Option(format!("LFSR taps {} but r = {r}", lfsr.r())));
    }
    if options.pipeline_stages > 1 {
        return Err(ChipError::Option("at most one pipeline stage".into()));
    }
    if t > 0 && !f.is_combinational() {
        return Err(SwitchboxError::NotCombinational.into());
    }
    let k = f.num_outputs();
    let mut rng = trial_rng(seed, 0);
    let logic_code = match &options.logic_code {
        Some(c) => {
            WidthMismatch::check(k, c.k())?;
            WidthMismatch::check(r, c.r())?;
            c.clone()
        }
        None => ParityCheckMatrix::sample(k, r, &mut rng)?,
    };

    let mut subsets: Vec<Vec<usize>> = if options.output_subsets.is_empty() {
        vec![(0..k).collect()]
    } else {
        options.output_subsets.clone()
    };
    for s in &subsets {
        if s.is_empty() || s.iter().any(|&i| i >= k) {
            return Err(ChipError::Option(format!("bad output subset {s:?}")));
        }
    }
    // identical subsets share one port and one encoding
    let mut seen = Vec::new();
    subsets.retain(|s| {
        if seen.contains(s) {
            false
        } else {
            seen.push(s.clone());
            true
        }
    });

    let (in_code, in_prev) = match &options.input_code {
        Some((c, p)) => {
            WidthMismatch::check(f.num_inputs(), c.k())?;
            WidthMismatch::check(r, c.r())?;
            WidthMismatch::check(r, p.width())?;
            (c.clone(), p.clone())
        }
        None => (
            ParityCheckMatrix::sample(f.num_inputs(), r, &mut rng)?,
            BitVector::random(r, &mut rng),
        ),
    };

    let ram = match options.ram {
        Some(p) => {
            let code = ParityCheckMatrix::sample(p.addr_bits + p.word_bits, p.r, &mut rng)?;
            ProtectedRam::new(code.clone(), p.addr_bits, p.word_bits)?;
            Some((p, code))
        }
        None => None,
    };

    let io_t = if options.obfuscate_io && r > 1 { t } else { 0 };
    let mut block_seed = || rng.gen::<u64>();

    let ced = obfuscate(logic_ced_netlist(f, &logic_code)?, t, block_seed(), options.max_iterations)?;
    let mut outputs = Vec::new();
    for subset in subsets {
        let code = ParityCheckMatrix::sample(subset.len(), r, &mut trial_rng(block_seed(), 0))?;
        let encoder = obfuscate(encoder_netlist(&code)?, io_t, block_seed(), options.max_iterations)?;
        let initial_prev = BitVector::random(r, &mut trial_rng(block_seed(), 0));
        outputs.push(OutputPort {
            subset,
            code,
            encoder,
            initial_prev,
        });
    }
    let decoder = obfuscate(decoder_netlist(&in_code)?, io_t, block_seed(), options.max_iterations)?;
    let input = InputPort {
        code: in_code,
        decoder,
        initial_prev: in_prev,
    };
    ProtectedChip::assemble(f.clone(), r, t, logic_code, ced, outputs, input, ram, lfsr, options.pipeline_stages)
}

/// Signals of one simulated cycle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleOutput {
    /// (data, check) per output port, as driven on the pins
    pub ports: Vec<(BitVector, BitVector)>,
    pub error_signal: BitVector,
    pub taps: BitVector,
    pub decoder_signal: BitVector,
    pub ced_signal: BitVector,
    pub ram: Option<RamCycle>,
    pub monitor_attack: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RamRequest {
    pub op: RamOp,
    pub addr: u64,
    pub data: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChipInput {
    pub data: BitVector,
    pub check: BitVector,
    pub ram: Option<RamRequest>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PinTarget {
    InData(usize),
    InCheck(usize),
    OutData(usize),
    OutCheck { port: usize, bit: usize },
}

/// Faults active during one cycle. Built by the attack engine.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CycleFaults {
    pub wires: Vec<(Block, WireFault)>,
    pub pins: Vec<(PinTarget, FaultKind)>,
    pub ram: Option<RamTrojan>,
    /// feed the CED with the (inputs, outputs) pair from this many cycles ago
    pub ced_stale: Option<usize>,
    /// replace the primary outputs before encoding
    pub outputs_override: Option<BitVector>,
    /// output pins carry zeros and re-send the previously sent check bits
    pub parity_null: bool,
    /// output pins re-send the (data, check) pair from this many cycles ago
    pub replay: Option<usize>,
    /// chip dead: outputs and error signal all zero
    pub power_off: bool,
}

impl CycleFaults {
    pub fn is_empty(&self) -> bool {
        *self == CycleFaults::default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Record {
    x: BitVector,
    fo: BitVector,
    sent: Vec<(BitVector, BitVector)>,
}

/// Runtime state of a chip and its paired trusted monitor.
#[derive(Debug, Clone)]
pub struct ChipState {
    pub cycle: u64,
    lfsr: Lfsr,
    monitor: ErrorMonitor,
    f_state: BitVector,
    ced_state: BitVector,
    in_prev: BitVector,
    out_prev: Vec<BitVector>,
    pipe: Option<(BitVector, BitVector)>,
    ram: Option<ProtectedRam>,
    history: VecDeque<Record>,
    scratch: Vec<u64>,
}

impl ChipState {
    pub fn ram(&self) -> Option<&ProtectedRam> {
        self.ram.as_ref()
    }
}

fn apply_bit_fault(v: &mut BitVector, i: usize, kind: FaultKind) {
    if i < v.width() {
        match kind {
            FaultKind::Flip => v.flip(i),
            FaultKind::Stuck0 => v.set(i, false),
            FaultKind::Stuck1 => v.set(i, true),
        }
    }
}

impl ProtectedChip {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn assemble(
        f: Netlist,
        r: usize,
        t: usize,
        logic_code: ParityCheckMatrix,
        ced: ObfuscatedNetlist,
        outputs: Vec<OutputPort>,
        input: InputPort,
        ram: Option<(RamParams, ParityCheckMatrix)>,
        lfsr: LfsrSpec,
        pipeline_stages: usize,
    ) -> Result<Self, ChipError> {
        let ced_net = ced.intended_netlist();
        let enc_nets = outputs.iter().map(|p| p.encoder.intended_netlist()).collect();
        let dec_net = input.decoder.intended_netlist();
        let mut programmed = vec![(Block::Ced, ced.intended.clone()), (Block::Decoder, input.decoder.intended.clone())];
        for (i, p) in outputs.iter().enumerate() {
            programmed.push((Block::Encoder(i), p.encoder.intended.clone()));
        }
        Ok(ProtectedChip {
            f,
            r,
            t,
            logic_code,
            ced,
            outputs,
            input,
            ram,
            lfsr,
            pipeline_stages,
            programmed,
            ced_net,
            enc_nets,
            dec_net,
        })
    }

    pub fn obfuscated(&self, block: Block) -> Option<&ObfuscatedNetlist> {
        match block {
            Block::F => None,
            Block::Ced => Some(&self.ced),
            Block::Encoder(i) => self.outputs.get(i).map(|p| &p.encoder),
            Block::Decoder => Some(&self.input.decoder),
        }
    }

    /// The netlist a block currently evaluates.
    pub fn block_netlist(&self, block: Block) -> Option<&Netlist> {
        match block {
            Block::F => Some(&self.f),
            Block::Ced => Some(&self.ced_net),
            Block::Encoder(i) => self.enc_nets.get(i),
            Block::Decoder => Some(&self.dec_net),
        }
    }

    pub fn blocks(&self) -> Vec<Block> {
        let mut v = vec![Block::F, Block::Ced, Block::Decoder];
        v.extend((0..self.outputs.len()).map(Block::Encoder));
        v
    }

    pub fn configuration(&self, block: Block) -> Option<&SwitchboxConfig> {
        self.programmed.iter().find(|(b, _)| *b == block).map(|(_, c)| c)
    }

    /// Reprograms the switchboxes of one block.
    pub fn program(&mut self, block: Block, cfg: SwitchboxConfig) -> Result<(), ChipError> {
        let obf = self
            .obfuscated(block)
            .ok_or_else(|| ChipError::Option(format!("block {} has no switchboxes", block.name())))?;
        let net = obf.apply_config(&cfg)?;
        match block {
            Block::Ced => self.ced_net = net,
            Block::Encoder(i) => self.enc_nets[i] = net,
            Block::Decoder => self.dec_net = net,
            Block::F => unreachable!(),
        }
        for (b, c) in &mut self.programmed {
            if *b == block {
                *c = cfg.clone();
            }
        }
        Ok(())
    }

    pub fn total_switchboxes(&self) -> usize {
        self.ced.num_switchboxes()
            + self.input.decoder.num_switchboxes()
            + self.outputs.iter().map(|p| p.encoder.num_switchboxes()).sum::<usize>()
    }

    pub fn sender_state(&self) -> OutputEncoderState {
        OutputEncoderState {
            code: self.input.code.clone(),
            prev_check: self.input.initial_prev.clone(),
        }
    }

    /// Decoder state a receiver of port `port` must start from.
    pub fn receiver_state(&self, port: usize) -> InputDecoderState {
        let p = &self.outputs[port];
        InputDecoderState {
            code: p.code.clone(),
            prev_check: p.initial_prev.clone(),
        }
    }

    pub fn reset(&self) -> ChipState {
        let ram = self
            .ram
            .as_ref()
            .map(|(p, code)| ProtectedRam::new(code.clone(), p.addr_bits, p.word_bits).expect("validated at build"));
        ChipState {
            cycle: 0,
            lfsr: Lfsr::new(self.lfsr.clone()),
            monitor: ErrorMonitor::new(self.lfsr.clone()),
            f_state: BitVector::zeros(self.f.num_dffs()),
            ced_state: BitVector::zeros(self.ced_net.num_dffs()),
            in_prev: self.input.initial_prev.clone(),
            out_prev: self.outputs.iter().map(|p| p.initial_prev.clone()).collect(),
            pipe: None,
            ram,
            history: VecDeque::with_capacity(HISTORY_DEPTH),
            scratch: Vec::new(),
        }
    }

    fn faults_for(faults: &CycleFaults, block: Block) -> Vec<WireFault> {
        faults.wires.iter().filter(|(b, _)| *b == block).map(|(_, f)| *f).collect()
    }

    pub fn chip_cycle(&self, st: &mut ChipState, input: &ChipInput) -> Result<CycleOutput, ChipError> {
        self.chip_cycle_with(st, input, &CycleFaults::default())
    }

    /// Decode, evaluate f and its CED, run the RAM, merge the error
    /// signals and encode the outputs, all in one cycle.
    pub fn chip_cycle_with(
        &self,
        st: &mut ChipState,
        input: &ChipInput,
        faults: &CycleFaults,
    ) -> Result<CycleOutput, ChipError> {
        WidthMismatch::check(self.f.num_inputs(), input.data.width())?;
        WidthMismatch::check(self.r, input.check.width())?;
        let taps = st.lfsr.taps();

        let mut x = input.data.clone();
        let mut recv = input.check.clone();
        for &(pin, kind) in &faults.pins {
            match pin {
                PinTarget::InData(i) => apply_bit_fault(&mut x, i, kind),
                PinTarget::InCheck(i) => apply_bit_fault(&mut recv, i, kind),
                _ => {}
            }
        }

        // input decoding
        let dec_in: Vec<bool> = x
            .iter()
            .chain(recv.iter())
            .chain(st.in_prev.iter())
            .chain(taps.iter())
            .collect();
        let (decoder_signal, _) = self.dec_net.eval_bits(
            &dec_in,
            &[],
            &Self::faults_for(faults, Block::Decoder),
            &mut st.scratch,
        );
        st.in_prev = recv;

        // function
        let (fo, f_next) = self
            .f
            .eval_bits(x.bits(), st.f_state.bits(), &Self::faults_for(faults, Block::F), &mut st.scratch);
        st.f_state = f_next;
        // what f really computed; a stored-state attacker replays these
        let f_true = fo.clone();
        let fo = match &faults.outputs_override {
            Some(o) => {
                WidthMismatch::check(fo.width(), o.width())?;
                o.clone()
            }
            None => fo,
        };

        // logic CED, possibly one cycle behind and possibly decoupled
        let current = match faults.ced_stale {
            Some(j) if j > 0 => st
                .history
                .get(j - 1)
                .or(st.history.back())
                .map(|r| (r.x.clone(), r.fo.clone()))
                .unwrap_or_else(|| (x.clone(), fo.clone())),
            _ => (x.clone(), fo.clone()),
        };
        let feed = if self.pipeline_stages == 1 {
            st.pipe.replace(current)
        } else {
            Some(current)
        };
        let ced_signal = match feed {
            Some((cx, cfo)) => {
                let ced_in: Vec<bool> = cx.iter().chain(cfo.iter()).chain(taps.iter()).collect();
                let (sig, next) = self.ced_net.eval_bits(
                    &ced_in,
                    st.ced_state.bits(),
                    &Self::faults_for(faults, Block::Ced),
                    &mut st.scratch,
                );
                st.ced_state = next;
                sig
            }
            None => taps.clone(),
        };

        // memory
        let mut signals = vec![decoder_signal.clone(), ced_signal.clone()];
        let ram = match st.ram.as_mut() {
            Some(mem) => {
                let req = input.ram.unwrap_or(RamRequest {
                    op: RamOp::Idle,
                    addr: 0,
                    data: 0,
                });
                let c = mem.ram_cycle_with(req.op, req.addr, req.data, faults.ram)?;
                let sig = if c.symptom.is_some() {
                    taps.iter().map(|b| !b).collect()
                } else {
                    taps.clone()
                };
                signals.push(sig);
                Some(c)
            }
            None => None,
        };
        let mut error_signal = combine_error_signals(&taps, &signals)?;

        // output encoding
        let mut ports = Vec::with_capacity(self.outputs.len());
        for (p, port) in self.outputs.iter().enumerate() {
            let data: BitVector = port.subset.iter().map(|&i| fo.get(i)).collect();
            let enc_in: Vec<bool> = data.iter().chain(st.out_prev[p].iter()).collect();
            let (check, _) = self.enc_nets[p].eval_bits(
                &enc_in,
                &[],
                &Self::faults_for(faults, Block::Encoder(p)),
                &mut st.scratch,
            );
            st.out_prev[p] = check.clone();
            ports.push((data, check));
        }
        for &(pin, kind) in &faults.pins {
            match pin {
                PinTarget::OutData(i) => {
                    for (p, port) in self.outputs.iter().enumerate() {
                        if let Some(pos) = port.subset.iter().position(|&s| s == i) {
                            apply_bit_fault(&mut ports[p].0, pos, kind);
                        }
                    }
                }
                PinTarget::OutCheck { port, bit } => {
                    if let Some(pc) = ports.get_mut(port) {
                        apply_bit_fault(&mut pc.1, bit, kind);
                    }
                }
                _ => {}
            }
        }
        if faults.parity_null {
            for (p, pc) in ports.iter_mut().enumerate() {
                let last = st
                    .history
                    .front()
                    .map(|r| r.sent[p].1.clone())
                    .unwrap_or_else(|| self.outputs[p].initial_prev.clone());
                *pc = (BitVector::zeros(pc.0.width()), last);
            }
        }
        if let Some(j) = faults.replay.filter(|&j| j > 0) {
            if let Some(rec) = st.history.get(j - 1) {
                ports = rec.sent.clone();
            }
        }
        if faults.power_off {
            for pc in ports.iter_mut() {
                *pc = (BitVector::zeros(pc.0.width()), BitVector::zeros(pc.1.width()));
            }
            error_signal = BitVector::zeros(self.r);
        }

        let monitor_attack = st.monitor.check(&error_signal)?;
        st.lfsr.advance();
        st.cycle += 1;
        if st.history.len() == HISTORY_DEPTH {
            st.history.pop_back();
        }
        st.history.push_front(Record {
            x,
            fo: f_true,
            sent: ports.clone(),
        });

        Ok(CycleOutput {
            ports,
            error_signal,
            taps,
            decoder_signal,
            ced_signal,
            ram,
            monitor_attack,
        })
    }

    /// Gate name → wire id in a block, for building wire faults.
    pub fn wire(&self, block: Block, name: &str) -> Option<WireId> {
        self.block_netlist(block).and_then(|n| n.wire_by_name(name))
    }
}

/// Drives a chip with random stimulus through an honest sender and
/// checks every port with an honest receiver.
#[derive(Debug, Clone)]
pub struct Testbench {
    pub sender: OutputEncoderState,
    pub receivers: Vec<InputDecoderState>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchCycle {
    pub output: CycleOutput,
    /// per port: receiver flagged an attack
    pub receiver_attack: Vec<bool>,
}

impl BenchCycle {
    pub fn detected(&self) -> bool {
        self.output.monitor_attack || self.receiver_attack.iter().any(|&a| a)
    }
}

impl Testbench {
    pub fn new(chip: &ProtectedChip) -> Self {
        Testbench {
            sender: chip.sender_state(),
            receivers: (0..chip.outputs.len()).map(|p| chip.receiver_state(p)).collect(),
        }
    }

    /// Encodes `data` as the upstream chip would and runs one cycle.
    pub fn step(
        &mut self,
        chip: &ProtectedChip,
        st: &mut ChipState,
        data: BitVector,
        ram: Option<RamRequest>,
        faults: &CycleFaults,
    ) -> Result<BenchCycle, ChipError> {
        let (check, next) = encode_outputs(&self.sender, &data)?;
        self.sender = next;
        let output = chip.chip_cycle_with(st, &ChipInput { data, check, ram }, faults)?;
        let mut receiver_attack = Vec::with_capacity(self.receivers.len());
        for (rx, (d, c)) in self.receivers.iter_mut().zip(&output.ports) {
            let (attack, next) = decode_inputs(rx, d, c)?;
            *rx = next;
            receiver_attack.push(attack);
        }
        Ok(BenchCycle {
            output,
            receiver_attack,
        })
    }
}

/// Random RAM traffic for a chip with a RAM.
pub fn random_ram_request<R: Rng + ?Sized>(p: &RamParams, rng: &mut R) -> RamRequest {
    let op = match rng.gen_range(0..3) {
        0 => RamOp::Read,
        1 => RamOp::Write,
        _ => RamOp::Idle,
    };
    RamRequest {
        op,
        addr: rng.gen_range(0..1u64 << p.addr_bits),
        data: rng.gen::<u64>() & ((1u64 << p.word_bits) - 1),
    }
}
