//! Closed-form attack probabilities: guessing switchbox configurations,
//! destructive sampling, and the hardware cost of decoupling attacks.

use tpad::attack::{
    cp_attack_probability, decoupling_cost, destructive_detection_probability, destructive_monte_carlo,
    per_sb_attack_probability, DecouplingDesign, DecouplingKind,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("all x switchboxes right, per-guess error θ:");
    for theta in [0.05, 0.1] {
        for x in [64, 72, 80] {
            println!("  θ={theta} x={x}: {:.3e}", cp_attack_probability(theta, x)?);
        }
    }
    println!("per-switchbox recovery probability p:");
    for p in [0.5, 0.5001] {
        println!("  p={p} x=64: {:.2e}", per_sb_attack_probability(p, 64)?);
    }

    println!("destructive sampling:");
    for (n, a, t) in [(100_000, 50, 8_000), (100_000, 50, 9_000), (10_000, 5, 5_800), (10_000, 5, 6_100)] {
        println!("  N={n} a={a} t={t}: {:.4}", destructive_detection_probability(n, a, t)?);
    }
    let mc = destructive_monte_carlo(1000, 10, 200, 20_000, 1)?;
    println!(
        "  N=1000 a=10 t=200: exact {:.4}, sampled {:.4} ± {:.4}",
        destructive_detection_probability(1000, 10, 200)?,
        mc.rate(),
        3.0 * mc.std_error()
    );

    let mut null = DecouplingDesign::new(DecouplingKind::ParityNull);
    null.outputs = Some(32);
    null.check_bits = Some(4);
    let mut fft = DecouplingDesign::new(DecouplingKind::FftZero);
    fft.fft_points = Some(128);
    for d in [null, fft] {
        let c = decoupling_cost(&d)?;
        println!("{:?}: {c:?}, visible above 1000 transistors: {}", d.kind, c.inspect(1000).exceeds);
    }
    Ok(())
}
