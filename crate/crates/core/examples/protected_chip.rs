//! Build a protected chip (logic CED, encoded I/O, RAM, error LFSR), run it
//! clean, save and reload the bundle, then tamper with one gate.

use tpad::chip::bundle::{load_chip, save_chip};
use tpad::chip::{build_protected_chip, random_ram_request, Block, ChipOptions, CycleFaults, RamParams, Testbench};
use tpad::lfsr::LfsrSpec;
use tpad::library;
use tpad::netlist::{FaultKind, WireFault};
use tpad::stats::trial_rng;
use tpad::BitVector;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let f = library::alu2();
    let opts = ChipOptions {
        pipeline_stages: 1,
        ram: Some(RamParams {
            addr_bits: 4,
            word_bits: 8,
            r: 3,
        }),
        ..ChipOptions::default()
    };
    let chip = build_protected_chip(&f, 3, 2, LfsrSpec::standard(16, 7, vec![0, 1, 2])?, 42, &opts)?;
    println!("chip with {} switchboxes across {:?}", chip.total_switchboxes(), chip.blocks());

    let dir = std::env::temp_dir().join("tpad-example-chip");
    save_chip(&chip, &dir)?;
    let chip = load_chip(&dir)?;
    println!("bundle saved and verified at {}", dir.display());

    let run = |faults: CycleFaults| -> Result<Option<u64>, Box<dyn std::error::Error>> {
        let mut st = chip.reset();
        let mut tb = Testbench::new(&chip);
        let mut rng = trial_rng(1, 0);
        for c in 0..2000 {
            let data = BitVector::random(chip.f.num_inputs(), &mut rng);
            let ram = chip.ram.as_ref().map(|(p, _)| random_ram_request(p, &mut rng));
            let active = if c >= 100 { faults.clone() } else { CycleFaults::default() };
            if tb.step(&chip, &mut st, data, ram, &active)?.detected() {
                return Ok(Some(c));
            }
        }
        Ok(None)
    };
    println!("clean run, 2000 cycles: first report {:?}", run(CycleFaults::default())?);

    let y0 = chip.wire(Block::F, "y0").expect("alu2 has y0");
    let faults = CycleFaults {
        wires: vec![(Block::F, WireFault::new(y0, FaultKind::Stuck1))],
        ..CycleFaults::default()
    };
    println!("y0 stuck at 1 from cycle 100: first report {:?}", run(faults)?);
    Ok(())
}
