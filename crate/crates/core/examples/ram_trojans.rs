//! Replay every RAM threat row against the parity-protected RAM and print
//! the symptom the checker raises.

use tpad::chip::ram::{demo_code, replay_row, threat_table};
use tpad::chip::ProtectedRam;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for row in threat_table() {
        let mut ram = ProtectedRam::new(demo_code(), 8, 16)?;
        let out = replay_row(&mut ram, &row, 0xBE)?;
        println!(
            "{:<6} {:<24} expected {:<22} observed {:<22} at step {:?}",
            format!("{:?}", row.operation),
            row.effect,
            format!("{:?}", row.symptom),
            format!("{:?}", out.observed),
            out.at_step
        );
    }
    Ok(())
}
