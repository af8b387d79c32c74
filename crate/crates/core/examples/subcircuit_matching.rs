//! An adversary looks for a piece of f inside the CED block, flips both
//! copies and hopes the check bits still agree.

use tpad::attack::{subcircuit_match_attack, MatchOptions};
use tpad::chip::{build_protected_chip, ChipOptions};
use tpad::lfsr::LfsrSpec;
use tpad::library;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let opts = MatchOptions {
        max_seeds: 2000,
        ..MatchOptions::default()
    };
    for (name, f) in [("adder3", library::ripple_adder(3)), ("alu2", library::alu2())] {
        for t in [0, 2, 6] {
            let chip = build_protected_chip(&f, 3, t, LfsrSpec::standard(16, 1, vec![0, 1, 2])?, 1, &ChipOptions::default())?;
            let rep = subcircuit_match_attack(&chip, 200, 5, &opts)?;
            println!(
                "{name} t={t} ({} SBs in CED): matched {}/{}, undetected {:.3}",
                chip.ced.num_switchboxes(),
                rep.matched,
                rep.trials,
                rep.success_rate()
            );
        }
    }
    Ok(())
}
