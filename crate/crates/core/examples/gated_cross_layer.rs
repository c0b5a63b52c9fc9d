//! One gated cross layer by hand, with and without gates.

use gdcn::crossnet::{gated_cross_forward, GateMode, GatedCrossParams};
use ndarray::array;

fn main() -> gdcn::Result<()> {
    let c0 = array![[1.0, -0.5, 2.0]];
    let mut p = GatedCrossParams::zeros(3);
    p.w_c = array![[0.5, 0.0, 0.1], [0.0, 1.0, 0.0], [0.2, 0.0, -0.3]];
    p.w_g = array![[4.0, 0.0, 0.0], [0.0, -4.0, 0.0], [0.0, 0.0, 0.0]];
    p.b = array![0.1, 0.0, -0.1];

    let (gated, cache) = gated_cross_forward(&c0, &c0, &p, GateMode::Learned)?;
    let (plain, _) = gated_cross_forward(&c0, &c0, &p, GateMode::AllOnes)?;
    println!("c0          {c0}");
    println!("gates       {}", cache.g.expect("learned gates are cached"));
    println!("gated c1    {gated}");
    println!("gate-off c1 {plain}");

    // depth 2: the cross order grows by one per layer
    let (c2, _) = gated_cross_forward(&c0, &gated, &p, GateMode::Learned)?;
    println!("gated c2    {c2}");
    Ok(())
}
