//! Half-precision FFT guarded by a Plancherel check: calibrate the
//! threshold, run attack campaigns and the reference self-test.

use tpad::fft::{
    calibrate_threshold, fft, fft_attack_campaign, reference_selftest, EngineAttack, FftAttackGenerator, FftEngine,
    HalfComplex, PlancherelReference,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = 128;
    let mut x = vec![HalfComplex::ZERO; n];
    x[0] = HalfComplex::from_f64(1.0, 0.0);
    println!("FFT of an impulse is flat: {}", fft(&x)?.iter().all(|v| *v == HalfComplex::from_f64(1.0, 0.0)));

    let t = calibrate_threshold(n, 1000, 2.0, 42)?;
    println!("threshold T = {t:.5}");
    for g in FftAttackGenerator::ALL {
        let rep = fft_attack_campaign(n, g, 2000, t, 42)?;
        println!("  {:<24} {}", g.name(), rep.summary());
    }

    let engine = FftEngine::new(PlancherelReference::white_noise(n, 42)?, t);
    let probe = PlancherelReference::non_pair(n, 7)?;
    println!("self-test, honest engine:  {:?}", reference_selftest(&engine, &probe)?);
    println!(
        "self-test, zeroed reference: {:?}",
        reference_selftest(&engine.with_attack(EngineAttack::ZeroReference), &probe)?
    );
    Ok(())
}
