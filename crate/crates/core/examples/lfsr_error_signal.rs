//! Error signals encoded with an LFSR: a healthy checker echoes the tap
//! bits, any disagreement shows up at the trusted monitor.

use tpad::lfsr::{checker_output, combine_error_signals, is_primitive, ErrorMonitor, Lfsr, LfsrSpec};
use tpad::BitVector;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = LfsrSpec::standard(16, 0xACE1, vec![0, 5, 11])?;
    println!("x^16 polynomial {:#x} primitive: {}", spec.poly(), is_primitive(spec.poly(), 16)?);

    let mut chip_lfsr = Lfsr::new(spec.clone());
    let mut monitor = ErrorMonitor::new(spec);
    for cycle in 0..8 {
        let taps = chip_lfsr.taps();
        let predicted = BitVector::from_u64(cycle % 5, 3);
        // a fault in cycle 5 corrupts one check bit
        let mut actual = predicted.clone();
        if cycle == 5 {
            actual.flip(1);
        }
        let logic = checker_output(&taps, &predicted, &actual)?;
        let io = taps.clone();
        let merged = combine_error_signals(&taps, &[logic, io])?;
        let attack = monitor.check(&merged)?;
        println!(
            "cycle {cycle}: taps {} signal {} -> {}",
            taps.to_bit_string(),
            merged.to_bit_string(),
            if attack { "ATTACK" } else { "ok" }
        );
        chip_lfsr.advance();
    }
    Ok(())
}
