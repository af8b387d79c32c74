//! Parse a netlist, evaluate it, inject a wire fault, extract a cone and
//! check equivalence against a restructured version.

use tpad::netlist::{check_equivalence, parse_netlist, EquivalenceOptions, FaultKind, WireFault};
use tpad::BitVector;

const MAJ: &str = "\
.model maj3
.inputs a b c
.outputs m p
ab = AND(a, b)
bc = AND(b, c)
ac = AND(a, c)
m = OR(ab, bc, ac)
p = XOR(a, b, c)
";

// majority as (a & (b | c)) | (b & c)
const MAJ2: &str = "\
.model maj3b
.inputs a b c
.outputs m p
o = OR(b, c)
x = AND(a, o)
bc = AND(b, c)
m = OR(x, bc)
t = XOR(a, b)
p = XOR(t, c)
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = parse_netlist(MAJ)?;
    println!("{}: {} inputs, {} gates, {} outputs", n.name(), n.num_inputs(), n.gates().len(), n.num_outputs());

    for v in 0..8u64 {
        let x = BitVector::from_u64(v, 3);
        let y = n.eval_comb(&x)?;
        println!("  abc={} -> m p = {}", x.to_bit_string(), y.to_bit_string());
    }

    let bc = n.wire_by_name("bc").unwrap();
    let (y, _) = n.evaluate_with_faults(
        &BitVector::from_bit_str("011").unwrap(),
        &BitVector::zeros(0),
        &[WireFault::new(bc, FaultKind::Stuck0)],
    )?;
    println!("with bc stuck at 0, abc=011 gives m p = {}", y.to_bit_string());

    let cone = n.output_cone(0)?;
    println!("cone of m keeps {} of {} gates", cone.gates().len(), n.gates().len());

    let v = check_equivalence(&n, &parse_netlist(MAJ2)?, &EquivalenceOptions::default())?;
    println!("restructured version equivalent: {} ({:?}, {} vectors)", v.equivalent, v.mode, v.vectors_checked);
    Ok(())
}
