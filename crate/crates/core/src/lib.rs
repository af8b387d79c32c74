//! Gate-level laboratory for Trojan prevention and detection.

pub mod attack;
pub mod bits;
pub mod chip;
pub mod error;
pub mod fft;
pub mod harness;
pub mod lfsr;
pub mod library;
pub mod netlist;
pub mod parity;
pub mod stats;
pub mod switchbox;

pub use bits::BitVector;
