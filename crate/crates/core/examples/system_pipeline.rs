//! Two chips in a pipeline with encoded channels and one trusted monitor
//! per chip: a clean run, a pin attack between them, and a logic attack
//! inside the second chip.

use tpad::attack::{AttackDescriptor, Payload, Trigger};
use tpad::chip::{ChipOptions, PinTarget};
use tpad::harness::{pipeline_topology, run_system, Stimulus, SystemAttack};
use tpad::library;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fs = [library::random_circuit(6, 5, 30, 1), library::random_circuit(5, 4, 30, 2)];
    let topo = pipeline_topology(&fs, 3, 2, 7, &ChipOptions::default())?;

    let clean = run_system(&topo, &Stimulus::Random, &[], 10_000, 1)?;
    print!("clean run:\n{}", clean.summary());

    let pin = SystemAttack {
        chip: 0,
        descriptor: AttackDescriptor::pin(PinTarget::OutData(2), Payload::Flip, Trigger::AtCycle(500)),
    };
    let out = topo.chips[1].f.outputs()[1];
    let logic = SystemAttack {
        chip: 1,
        descriptor: AttackDescriptor::logic(topo.chips[1].f.wire_name(out), Payload::Stuck0, Trigger::AfterCycle(800)),
    };
    let rep = run_system(&topo, &Stimulus::Random, &[pin, logic], 1000, 1)?;
    print!("attacked run:\n{}", rep.summary());
    Ok(())
}
