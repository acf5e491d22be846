//! Trains a small safety critic and runs the filtered straight-line driver.

use std::sync::Arc;

use latent_safety::conformal::{build_calibration_set, calibrate};
use latent_safety::eval::{eval_filtered_driver, straight_line_driver, RolloutConfig};
use latent_safety::filter::filtered_step;
use latent_safety::grid::{solve_disc, GridSpec, SolverConfig};
use latent_safety::hj_rl::{train_filter, Conditioning, FilterTrainConfig};
use latent_safety::latent::{train_projector, Encoder, EncoderConfig, LatentSession, ProjectorTrainConfig, SimilarityModel};
use latent_safety::sim::{flatten_states, generate_dataset, DubinsParams, FailureDisc, PrivilegedState};

fn main() -> latent_safety::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let params = DubinsParams::default();
    let enc = Arc::new(Encoder::new(EncoderConfig::default()));
    let data = generate_dataset(1000, &params, 0)?;
    let pcfg = ProjectorTrainConfig {
        pairs: 50_000,
        epochs: 15,
        holdout_pairs: 2_000,
        ..Default::default()
    };
    let sim = SimilarityModel::Projected(train_projector(&data, &enc, &pcfg)?.0);
    let cfg = FilterTrainConfig {
        conditioning: Conditioning::Zz,
        hidden: vec![64, 64],
        steps: 6000,
        log_every: 1000,
        ..Default::default()
    };
    let (nets, log) = train_filter(&data, Arc::clone(&enc), params, sim.clone(), &cfg)?;
    println!("trained {} updates in {:.0} s", cfg.steps, log.seconds);

    let held = flatten_states(&generate_dataset(150, &params, 99)?);
    let pairs = build_calibration_set(&held, &enc, 20_000, 0.5, 3)?;
    let t = calibrate(&pairs, &sim, 0.01, 0.5)?;

    // One drive towards a constraint, step by step.
    let disc = FailureDisc::new(0.5, 0.0, 0.5, params.bound)?;
    let z_c = enc.encode_constraint(disc.cx, disc.cy);
    let mut session = LatentSession::new(Arc::clone(&enc), params, PrivilegedState::new(-1.0, 0.0, 0.0));
    let mut interventions = 0;
    let mut closest = f64::INFINITY;
    for _ in 0..60 {
        let s = session.privileged_state();
        let a = straight_line_driver(&s, (disc.cx, disc.cy), params.a_max);
        interventions += filtered_step(&mut session, &nets, &z_c, &t, a, 0)?.intervened as usize;
        closest = closest.min(disc.center_distance(&session.privileged_state()));
    }
    println!("single drive: {interventions} interventions, closest approach {closest:.3}");

    let grid = solve_disc(0.5, &params, &GridSpec::cube(31, params.bound), &SolverConfig::default())?;
    let rollout = RolloutConfig {
        n: 50,
        ..Default::default()
    };
    let r = eval_filtered_driver(&nets, &enc, &t, &grid, &params, &rollout)?;
    println!("filtered driver over {} starts: safe rate {:.2}", r.n_rollouts, r.safe_rate);
    Ok(())
}
