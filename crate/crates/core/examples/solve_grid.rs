//! Solves the disc avoid problem at the origin and reuses it for a shifted constraint.

use latent_safety::grid::{oracle_for_constraint, solve_disc, ActionSet, GridSpec, SolverConfig};
use latent_safety::sim::{DubinsParams, FailureDisc, PrivilegedState};

fn main() -> latent_safety::Result<()> {
    let params = DubinsParams::default();
    let spec = GridSpec::cube(41, params.bound);
    let grid = solve_disc(0.5, &params, &spec, &SolverConfig::default())?;
    grid.ensure_converged()?;
    let unsafe_nodes = grid.classify_nodes(0.0).iter().filter(|&&u| u).count();
    println!(
        "{} iterations, residual {:.1e}, {unsafe_nodes} of {} nodes unsafe",
        grid.iterations,
        grid.residual,
        spec.len()
    );

    let disc = FailureDisc::new(0.6, -0.4, 0.5, params.bound)?;
    let oracle = oracle_for_constraint(&grid, disc)?;
    let actions = ActionSet::uniform(21, params.a_max)?;
    for theta in [0.0, std::f64::consts::PI] {
        let s = PrivilegedState::new(-0.3, -0.4, theta);
        println!(
            "heading {theta:.2}: value {:+.3}, best turn rate {:+.2}",
            oracle.value(&s),
            oracle.best_action(&s, &params, &actions)
        );
    }
    Ok(())
}
