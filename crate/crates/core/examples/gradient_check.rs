//! Finite-difference audit of the hand-written backward passes.

use latent_safety::nn::gradcheck::{check_cosine, check_network};
use latent_safety::nn::{Activation, LayerSpec};

fn main() -> latent_safety::Result<()> {
    let stacks = [
        ("critic", vec![LayerSpec::new(32, true, Activation::Silu), LayerSpec::new(1, false, Activation::Identity)]),
        ("actor", vec![LayerSpec::new(32, true, Activation::Silu), LayerSpec::new(1, false, Activation::Tanh)]),
    ];
    for (name, specs) in &stacks {
        let c = check_network(specs, 10, 8, 500, 1)?;
        println!("{name}: {} probes, worst relative error {:.2e}", c.probes, c.worst_rel_err);
    }
    let c = check_cosine(8, 16, 2);
    println!("cosine: {} probes, worst relative error {:.2e}", c.probes, c.worst_rel_err);
    Ok(())
}
