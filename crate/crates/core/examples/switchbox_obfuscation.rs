//! Hide a circuit's structure behind switchboxes, audit the insertion and
//! show what a wrong configuration does.

use tpad::library;
use tpad::netlist::{check_equivalence, EquivalenceOptions};
use tpad::switchbox::{degeneracy_scan, insert_switchboxes, InsertOptions, SbState};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let f = library::random_circuit(8, 4, 40, 3);
    let t = 4;
    let obf = insert_switchboxes(&f, &InsertOptions::new(t, 1))?;
    println!("{} switchboxes; per-cone counts:", obf.num_switchboxes());
    for i in 0..f.num_outputs() {
        println!("  output {i}: {}", obf.count_cone_switchboxes(i)?);
    }

    let eq = EquivalenceOptions::default();
    let audit = obf.verify(&f, t, &eq)?;
    println!("audit passed: {audit:?}");

    // the stored netlist is wired all-parallel; only the intended
    // configuration restores f
    let mut wrong = obf.intended.clone();
    let s0 = wrong.get(0).unwrap();
    wrong.set(0, s0.flipped());
    let bad = obf.apply_config(&wrong)?;
    let v = check_equivalence(&f, &bad, &eq)?;
    println!("flipping sb0 to {}: equivalent = {}", s0.flipped().name(), v.equivalent);
    let parallel = obf.apply_config(&tpad::switchbox::SwitchboxConfig::uniform(obf.num_switchboxes(), SbState::Parallel))?;
    println!("all-parallel equivalent: {}", check_equivalence(&f, &parallel, &eq)?.equivalent);

    let scan = degeneracy_scan(&obf, 2000, 9, &eq)?;
    println!("{} random wrong configurations, {} equivalent to f", scan.samples, scan.equivalent);
    Ok(())
}
