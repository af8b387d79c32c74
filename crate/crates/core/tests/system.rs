//! Multi-chip runs and sweeps through the public harness.

use tpad::attack::{AttackDescriptor, Payload, Trigger};
use tpad::chip::{ChipOptions, PinTarget, RamParams};
use tpad::harness::{pipeline_topology, run_sweep, run_system, Stimulus, SystemAttack};
use tpad::library;

fn column(csv: &str) -> Vec<(f64, f64)> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| {
            let f: Vec<f64> = l.split(',').map(|v| v.parse().unwrap()).collect();
            (f[0], f[1])
        })
        .collect()
}

#[test]
fn two_chip_pipeline_is_silent_for_1e5_cycles() {
    let fs = [library::random_circuit(6, 5, 30, 11), library::random_circuit(5, 4, 30, 12)];
    let topo = pipeline_topology(&fs, 3, 2, 5, &ChipOptions::default()).unwrap();
    let rep = run_system(&topo, &Stimulus::Random, &[], 100_000, 3).unwrap();
    assert_eq!(rep.total_reports(), 0, "{}", rep.summary());
    assert!(rep.first_detection.iter().all(Option::is_none));
}

#[test]
fn pipelined_ram_chips_in_a_chain() {
    let opts = ChipOptions {
        pipeline_stages: 1,
        ram: Some(RamParams {
            addr_bits: 4,
            word_bits: 8,
            r: 3,
        }),
        ..Default::default()
    };
    let fs = [library::random_circuit(6, 5, 30, 3), library::random_circuit(5, 3, 20, 4), library::random_circuit(3, 2, 12, 5)];
    let topo = pipeline_topology(&fs, 3, 1, 9, &opts).unwrap();
    let clean = run_system(&topo, &Stimulus::Random, &[], 20_000, 1).unwrap();
    assert_eq!(clean.total_reports(), 0, "{}", clean.summary());

    // tampering with the link into the last chip is seen there, one cycle on
    let pin = SystemAttack {
        chip: 1,
        descriptor: AttackDescriptor::pin(PinTarget::OutData(0), Payload::Flip, Trigger::AtCycle(300)),
    };
    let rep = run_system(&topo, &Stimulus::Random, std::slice::from_ref(&pin), 1_000, 1).unwrap();
    assert!(rep.total_reports() > 0, "{}", rep.summary());
    let again = run_system(&topo, &Stimulus::Random, &[pin], 1_000, 1).unwrap();
    assert_eq!(rep, again);
}

#[test]
fn parity_sweep_reproduces_the_detection_column() {
    let spec = "experiment = parity\nvary = r\nvalues = 3..8\nk = 100\nw = 50\ntrials = 20000\nseed = 4\n";
    let a = run_sweep(spec).unwrap();
    assert_eq!(a, run_sweep(spec).unwrap());
    assert_ne!(a, run_sweep(&spec.replace("seed = 4", "seed = 5")).unwrap());
    let expected = [0.875, 0.937, 0.968, 0.984, 0.992, 0.996];
    let got = column(&a);
    assert_eq!(got.len(), 6);
    for ((r, p), want) in got.iter().zip(expected) {
        assert!((p - want).abs() <= 0.01, "r = {r}: {p} vs {want}");
    }
}

#[test]
fn analytic_sweeps() {
    let cp = column(&run_sweep("experiment = cp_attack\nvary = theta\nvalues = 0.05, 0.1\nx = 64\n").unwrap());
    assert!((cp[0].1 - 0.0375).abs() < 5e-5);
    assert!((cp[1].1 - 1.18e-3).abs() < 5e-6);

    // the 0.99 crossing for 50 bad parts in 100000 falls a little past 8%
    let d = column(
        &run_sweep("experiment = destructive\nvary = t\nvalues = 7000..10000 step 100\nN = 100000\na = 50\n").unwrap(),
    );
    let crossing = d.iter().find(|(_, p)| *p >= 0.99).unwrap().0;
    assert!((8000.0..=9000.0).contains(&crossing), "{crossing}");
}
