//! Parameter sweeps from a key = value spec, printed as CSV.

use tpad::harness::run_sweep;

const SPECS: [&str; 3] = [
    "experiment = parity\nvary = r\nvalues = 3..8\nseed = 1\ntrials = 10000\nk = 100\nw = 50\n",
    "experiment = destructive\nvary = t\nvalues = 6000..10000 step 1000\nN = 100000\na = 50\n",
    "experiment = cp_attack\nvary = θ\nvalues = 0.05, 0.1\nx = 64\n",
];

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for spec in SPECS {
        println!("{}", run_sweep(spec)?);
    }
    Ok(())
}
