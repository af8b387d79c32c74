//! Sample a randomized parity code, build the output characteristic
//! predictor for a circuit and estimate detection of multi-bit errors.

use tpad::library;
use tpad::parity::{build_ocp, estimate_detection, estimate_detection_uniform_weight, sample_parity_code};
use tpad::BitVector;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let code = sample_parity_code(8, 3, 11)?;
    print!("H's A part (k=8, r=3):\n{}", code.to_text());

    let info = BitVector::from_bit_str("10110010").unwrap();
    let mut word = code.encode(info)?;
    println!("codeword valid: {}", code.verify_codeword(&word)?);
    word.flip(2);
    println!("after one flip: {}", code.verify_codeword(&word)?);

    // the OCP predicts f's check bits straight from f's inputs
    let f = library::ripple_adder(4);
    let code = sample_parity_code(f.num_outputs(), 3, 5)?;
    let ocp = build_ocp(&f, &code)?;
    println!("adder4 OCP: {} gates predicting {} check bits", ocp.gates().len(), ocp.num_outputs());

    println!("detection of random errors, k = 100:");
    for r in 3..=8 {
        let w50 = estimate_detection(100, r, 50, 5000, r as u64)?;
        let uni = estimate_detection_uniform_weight(100, r, 5000, r as u64)?;
        println!(
            "  r={r}: weight 50 {:.4}, uniform weight {:.4}, 1 - 2^-r = {:.4}",
            w50.rate(),
            uni.rate(),
            1.0 - 0.5f64.powi(r as i32)
        );
    }
    Ok(())
}
