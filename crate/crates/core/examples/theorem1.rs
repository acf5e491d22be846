//! Shifting the margin by a constant shifts the discounted avoid value by the same constant.

use latent_safety::grid::{sample_margin, verify_theorem1, GridSpec, SolverConfig, TabularChain};
use latent_safety::sim::{signed_distance_margin, DubinsParams, FailureDisc};

fn main() -> latent_safety::Result<()> {
    let chain = TabularChain::two_state(1.0, -1.0);
    let v = chain.solve(0.9, 1e-12, 10_000)?;
    let vs = chain.shifted(0.3).solve(0.9, 1e-12, 10_000)?;
    println!("two states: V = {v:.4?}, shifted by 0.3 = {vs:.4?}");

    let params = DubinsParams::default();
    let spec = GridSpec::cube(25, params.bound);
    let disc = FailureDisc::new(0.0, 0.0, 0.5, params.bound)?;
    let ell = sample_margin(&spec, |s| signed_distance_margin(s, &disc));
    let cfg = SolverConfig {
        gamma: 0.99,
        ..Default::default()
    };
    let r = verify_theorem1(&ell, 0.2, &params, &spec, &cfg)?;
    println!(
        "grid: max |V_shift - (V - 0.2)| = {:.2e}, {} sublevel disagreements ({} off the band)",
        r.max_abs_diff, r.sublevel_symmetric_difference, r.symmetric_difference_off_band
    );
    Ok(())
}
