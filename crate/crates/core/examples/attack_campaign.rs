//! Inject attacks from descriptors and from random generators, and compare
//! what the CED, the I/O codes and the monitor catch.

use tpad::attack::{parse_attacks, run_attack_file, run_campaign, PinDataFlips, UniformLogicFlips};
use tpad::chip::{build_protected_chip, ChipOptions};
use tpad::lfsr::LfsrSpec;
use tpad::library;

const ATTACKS: &str = "\
logic flip gate=s1 trigger=at_cycle:10
pin flip pin=in:2 trigger=after_cycle:3
pin stuck0 pin=outcheck:0.1 trigger=random:0.1
decoupling_parity_null - trigger=after_cycle:4
decoupling_stored_state replay:2 trigger=after_cycle:4
dos - trigger=at_cycle:20
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let f = library::ripple_adder(4);
    let chip = build_protected_chip(&f, 4, 2, LfsrSpec::standard(16, 3, vec![0, 1, 2, 3])?, 8, &ChipOptions::default())?;

    let attacks = parse_attacks(ATTACKS)?;
    let report = run_attack_file(&chip, &attacks, 200, 64, 1)?;
    println!("per descriptor, 200 trials of 64 cycles:");
    for (kind, p) in &report.per_kind {
        println!("  {kind:<24} detected {:.3}", p.rate());
    }

    for (name, rep) in [
        ("random multi-output logic flips", run_campaign(&chip, &UniformLogicFlips, 2000, 64, 2)?),
        ("random input-pin flips", run_campaign(&chip, &PinDataFlips, 2000, 64, 3)?),
    ] {
        println!("{name}: {}", rep.summary());
    }
    Ok(())
}
