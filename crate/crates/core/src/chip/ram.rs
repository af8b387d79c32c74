//! Write-through RAM guarded by a randomized parity code over
//! `address ∥ data`.
//!
//! Three observation points are modelled: `RAM_In` (data on the write bus
//! with its freshly encoded check bits), `RAM_Out` (what the array presents
//! after the cycle; during a write this is the bus value, by write-through)
//! and `Data_Out` (a latch that only opens when the array really performs
//! a read). The checker compares them according to the operation the core
//! asked for, so an array that does something else shows a symptom.

use std::fmt;

use thiserror::Error;

use crate::bits::BitVector;
use crate::parity::ParityCheckMatrix;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RamError {
    #[error("address {addr:#x} out of range (depth {depth})")]
    Address { addr: u64, depth: usize },
    #[error("data {data:#x} wider than {bits} bits")]
    Data { data: u64, bits: usize },
    #[error("code covers {got} bits, expected address {addr_bits} + word {word_bits}")]
    CodeWidth {
        got: usize,
        addr_bits: usize,
        word_bits: usize,
    },
    #[error("address and word must fit in 64 bits together")]
    TooWide,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RamOp {
    Read,
    Write,
    Idle,
}

/// One Trojan behavior from the RAM threat table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RamTrojan {
    WrongAddressRead { addr: u64 },
    WrongDataRead { mask: u64 },
    WriteInsteadOfRead,
    DoesNotRead,
    WrongWriteAddress { addr: u64 },
    WrongDataWritten { mask: u64 },
    ReadInsteadOfWrite,
    DoesNotWrite,
    ReadsInsteadOfIdle,
    WritesInsteadOfIdle,
}

impl RamTrojan {
    /// The operation during which the Trojan acts.
    pub fn active_on(&self) -> RamOp {
        use RamTrojan::*;
        match self {
            WrongAddressRead { .. } | WrongDataRead { .. } | WriteInsteadOfRead | DoesNotRead => RamOp::Read,
            WrongWriteAddress { .. } | WrongDataWritten { .. } | ReadInsteadOfWrite | DoesNotWrite => RamOp::Write,
            ReadsInsteadOfIdle | WritesInsteadOfIdle => RamOp::Idle,
        }
    }
}

/// Checker symptom, named after the comparison that fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RamSymptom {
    /// Check bits at RAM_Out incorrect
    CheckBitsIncorrect,
    /// RAM_Out ≠ Data_Out on a read
    RamOutNeDataOut,
    /// RAM_In ≠ RAM_Out on a write
    RamInNeRamOut,
    /// Data_Out latched a fresh RAM_Out while idle (RAM_Out = Data_Out)
    IdleRamOutEqDataOut,
    /// RAM_Out took the bus value while idle (RAM_In = RAM_Out)
    IdleRamInEqRamOut,
}

impl fmt::Display for RamSymptom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RamSymptom::CheckBitsIncorrect => "check bits at RAM_Out incorrect",
            RamSymptom::RamOutNeDataOut => "RAM_Out != Data_Out",
            RamSymptom::RamInNeRamOut => "RAM_In != RAM_Out",
            RamSymptom::IdleRamOutEqDataOut => "RAM_Out = Data_Out",
            RamSymptom::IdleRamInEqRamOut => "RAM_In = RAM_Out",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RamCycle {
    pub data_out: u64,
    pub ram_out: (u64, u64),
    pub symptom: Option<RamSymptom>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtectedRam {
    code: ParityCheckMatrix,
    addr_bits: usize,
    word_bits: usize,
    cells: Vec<(u64, u64)>,
    ram_out: (u64, u64),
    data_out: u64,
}

impl ProtectedRam {
    /// Depth `2^addr_bits`; every cell starts as a valid encoding of 0.
    pub fn new(code: ParityCheckMatrix, addr_bits: usize, word_bits: usize) -> Result<Self, RamError> {
        if addr_bits + word_bits > 64 || addr_bits > 24 {
            return Err(RamError::TooWide);
        }
        if code.k() != addr_bits + word_bits {
            return Err(RamError::CodeWidth {
                got: code.k(),
                addr_bits,
                word_bits,
            });
        }
        let mut ram = ProtectedRam {
            code,
            addr_bits,
            word_bits,
            cells: Vec::new(),
            ram_out: (0, 0),
            data_out: 0,
        };
        ram.cells = (0..1u64 << addr_bits).map(|a| (0, ram.check_of(a, 0))).collect();
        ram.ram_out = ram.cells[0];
        Ok(ram)
    }

    pub fn depth(&self) -> usize {
        self.cells.len()
    }

    pub fn code(&self) -> &ParityCheckMatrix {
        &self.code
    }

    pub fn addr_bits(&self) -> usize {
        self.addr_bits
    }

    pub fn word_bits(&self) -> usize {
        self.word_bits
    }

    pub fn data_out(&self) -> u64 {
        self.data_out
    }

    pub fn ram_out(&self) -> (u64, u64) {
        self.ram_out
    }

    pub fn cell(&self, addr: u64) -> Option<(u64, u64)> {
        self.cells.get(addr as usize).copied()
    }

    /// Check bits of `addr ∥ data`.
    pub fn check_of(&self, addr: u64, data: u64) -> u64 {
        let word = BitVector::from_u64((addr << self.word_bits) | data, self.addr_bits + self.word_bits);
        self.code.check_mask(&word).expect("width fixed at construction")
    }

    fn validate(&self, addr: u64, data: u64) -> Result<(), RamError> {
        if addr as usize >= self.cells.len() {
            return Err(RamError::Address {
                addr,
                depth: self.cells.len(),
            });
        }
        if self.word_bits < 64 && data >> self.word_bits != 0 {
            return Err(RamError::Data {
                data,
                bits: self.word_bits,
            });
        }
        Ok(())
    }

    pub fn ram_cycle(&mut self, op: RamOp, addr: u64, data_in: u64) -> Result<RamCycle, RamError> {
        self.ram_cycle_with(op, addr, data_in, None)
    }

    /// One cycle with an optional Trojan. The Trojan only acts when the
    /// requested operation matches [`RamTrojan::active_on`].
    pub fn ram_cycle_with(
        &mut self,
        op: RamOp,
        addr: u64,
        data_in: u64,
        trojan: Option<RamTrojan>,
    ) -> Result<RamCycle, RamError> {
        self.validate(addr, data_in)?;
        let trojan = trojan.filter(|t| t.active_on() == op);
        if let Some(RamTrojan::WrongAddressRead { addr: a } | RamTrojan::WrongWriteAddress { addr: a }) = trojan {
            self.validate(a, 0)?;
        }
        let ram_in = (data_in, self.check_of(addr, data_in));
        let prev_out = self.ram_out;
        let prev_data_out = self.data_out;

        use RamTrojan::*;
        let (actual, actual_addr) = match trojan {
            Some(WrongAddressRead { addr: a }) | Some(WrongWriteAddress { addr: a }) => (op, a),
            Some(WriteInsteadOfRead) | Some(WritesInsteadOfIdle) => (RamOp::Write, addr),
            Some(ReadInsteadOfWrite) | Some(ReadsInsteadOfIdle) => (RamOp::Read, addr),
            Some(DoesNotRead) | Some(DoesNotWrite) => (RamOp::Idle, addr),
            _ => (op, addr),
        };
        match actual {
            RamOp::Write => {
                let mut stored = ram_in;
                if let Some(WrongDataWritten { mask }) = trojan {
                    stored.0 ^= mask;
                }
                self.cells[actual_addr as usize] = stored;
                self.ram_out = ram_in;
            }
            RamOp::Read => {
                let mut v = self.cells[actual_addr as usize];
                if let Some(WrongDataRead { mask }) = trojan {
                    v.0 ^= mask;
                }
                self.ram_out = v;
                self.data_out = v.0;
            }
            RamOp::Idle => {}
        }

        let (out_data, out_check) = self.ram_out;
        let symptom = match op {
            RamOp::Read => {
                if self.check_of(addr, out_data) != out_check {
                    Some(RamSymptom::CheckBitsIncorrect)
                } else if out_data != self.data_out {
                    Some(RamSymptom::RamOutNeDataOut)
                } else {
                    None
                }
            }
            RamOp::Write => {
                if ram_in != self.ram_out {
                    Some(RamSymptom::RamInNeRamOut)
                } else if self.check_of(addr, out_data) != out_check {
                    Some(RamSymptom::CheckBitsIncorrect)
                } else {
                    None
                }
            }
            RamOp::Idle => {
                if self.data_out != prev_data_out {
                    Some(RamSymptom::IdleRamOutEqDataOut)
                } else if self.ram_out != prev_out {
                    Some(RamSymptom::IdleRamInEqRamOut)
                } else {
                    None
                }
            }
        };
        Ok(RamCycle {
            data_out: self.data_out,
            ram_out: self.ram_out,
            symptom,
        })
    }
}

/// A scripted RAM scenario for one threat-table row: a warm-up sequence,
/// the attacked cycle, and optionally a follow-up read that exposes a
/// corrupted cell.
#[derive(Debug, Clone)]
pub struct TableRow {
    pub operation: RamOp,
    pub effect: &'static str,
    pub symptom: RamSymptom,
    pub trojan: RamTrojan,
}

/// The ten RAM threat rows with their expected checker symptoms.
pub fn threat_table() -> Vec<TableRow> {
    use RamSymptom::*;
    use RamTrojan::*;
    let row = |operation, effect, symptom, trojan| TableRow {
        operation,
        effect,
        symptom,
        trojan,
    };
    vec![
        row(RamOp::Read, "wrong address read", CheckBitsIncorrect, WrongAddressRead { addr: 0 }),
        row(RamOp::Read, "wrong data read", CheckBitsIncorrect, WrongDataRead { mask: 1 }),
        row(RamOp::Read, "write instead of read", RamOutNeDataOut, WriteInsteadOfRead),
        row(RamOp::Read, "does not read", CheckBitsIncorrect, DoesNotRead),
        row(RamOp::Write, "wrong write address", CheckBitsIncorrect, WrongWriteAddress { addr: 0 }),
        row(RamOp::Write, "wrong data written", CheckBitsIncorrect, WrongDataWritten { mask: 1 }),
        row(RamOp::Write, "read instead of write", RamInNeRamOut, ReadInsteadOfWrite),
        row(RamOp::Write, "does not write", RamInNeRamOut, DoesNotWrite),
        row(RamOp::Idle, "reads instead of idle", IdleRamOutEqDataOut, ReadsInsteadOfIdle),
        row(RamOp::Idle, "writes instead of idle", IdleRamInEqRamOut, WritesInsteadOfIdle),
    ]
}

/// Outcome of replaying one threat row on a fresh RAM.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowOutcome {
    pub observed: Option<RamSymptom>,
    /// cycle index within the scenario at which the symptom appeared
    pub at_step: Option<usize>,
}

/// Runs a threat row against `ram` at address `addr` (the wrong address,
/// where one is needed, is `addr ^ 1`). The scenario writes distinct data
/// to `addr` and its neighbor first so that every effect is observable,
/// then performs the attacked operation, then reads back the locations an
/// attacked write could have corrupted.
pub fn replay_row(ram: &mut ProtectedRam, row: &TableRow, addr: u64) -> Result<RowOutcome, RamError> {
    let other = addr ^ 1;
    let word_mask = if ram.word_bits() >= 64 {
        u64::MAX
    } else {
        (1u64 << ram.word_bits()) - 1
    };
    let d_addr = 0x124 & word_mask;
    let d_other = 0x0c3 & word_mask;
    let d_new = 0x3a5 & word_mask;
    let trojan = match row.trojan {
        RamTrojan::WrongAddressRead { .. } => RamTrojan::WrongAddressRead { addr: other },
        RamTrojan::WrongWriteAddress { .. } => RamTrojan::WrongWriteAddress { addr: other },
        t => t,
    };
    let mut steps: Vec<(RamOp, u64, u64, Option<RamTrojan>)> = vec![
        (RamOp::Write, other, d_other, None),
        (RamOp::Write, addr, d_addr, None),
        (RamOp::Read, other, 0, None),
    ];
    let attacked_data = if row.operation == RamOp::Write { d_new } else { d_new ^ 0x10 };
    steps.push((row.operation, addr, attacked_data & word_mask, Some(trojan)));
    steps.push((RamOp::Read, addr, 0, None));
    steps.push((RamOp::Read, other, 0, None));
    for (i, (op, a, d, t)) in steps.into_iter().enumerate() {
        let c = ram.ram_cycle_with(op, a, d, t)?;
        if let Some(s) = c.symptom {
            return Ok(RowOutcome {
                observed: Some(s),
                at_step: Some(i),
            });
        }
    }
    Ok(RowOutcome {
        observed: None,
        at_step: None,
    })
}

/// The r = 3 code over 8 address + 16 data bits used in the worked RAM
/// example: `check(BE ∥ 0124) = 6` and `check(BF ∥ 0124) = 2`.
pub fn demo_code() -> ParityCheckMatrix {
    // columns 0..15 are data bits, 16..23 address bits
    let mut cols = vec![0u64; 24];
    let assign = [
        (0, 3),
        (1, 6),
        (2, 1),
        (3, 5),
        (4, 7),
        (5, 2),
        (6, 3),
        (7, 1),
        (8, 4),
        (9, 6),
        (10, 5),
        (11, 2),
        (12, 7),
        (13, 1),
        (14, 3),
        (15, 6),
        (16, 4),
        (17, 1),
        (18, 2),
        (19, 4),
        (20, 1),
        (21, 2),
        (22, 7),
        (23, 5),
    ];
    for (c, v) in assign {
        cols[c] = v;
    }
    ParityCheckMatrix::from_columns(24, 3, cols).expect("demo code is valid")
}
