//! A miniature comparison of raw and projected similarity, printed as a markdown table.

use std::sync::Arc;

use latent_safety::conformal::{build_calibration_set, ScoreCache};
use latent_safety::eval::{emit_report, run_ablation, AblationArtifacts, ClassifyConfig, FilterEntry, ReportFormat, RolloutConfig, Suite};
use latent_safety::grid::{solve_disc, GridSpec, SolverConfig};
use latent_safety::hj_rl::{train_filter, FilterTrainConfig};
use latent_safety::latent::{train_projector, Encoder, EncoderConfig, ProjectorTrainConfig, SimilarityModel};
use latent_safety::sim::{flatten_states, generate_dataset, DubinsParams};

fn main() -> latent_safety::Result<()> {
    let params = DubinsParams::default();
    let enc = Arc::new(Encoder::new(EncoderConfig::default()));
    let data = generate_dataset(500, &params, 0)?;
    let held = flatten_states(&generate_dataset(100, &params, 99)?);
    let pairs = build_calibration_set(&held, &enc, 20_000, 0.5, 3)?;
    let pcfg = ProjectorTrainConfig {
        pairs: 30_000,
        epochs: 10,
        holdout_pairs: 2_000,
        ..Default::default()
    };
    let (proj, _) = train_projector(&data, &enc, &pcfg)?;
    let fcfg = FilterTrainConfig {
        hidden: vec![32, 32],
        steps: 800,
        ..Default::default()
    };

    let mut entries = Vec::new();
    for (label, sim) in [("projected", SimilarityModel::Projected(proj)), ("raw", SimilarityModel::Raw)] {
        let cache = ScoreCache::build(&pairs, &sim, &[0.5])?;
        let (nets, _) = train_filter(&data, Arc::clone(&enc), params, sim, &fcfg)?;
        entries.push(FilterEntry {
            label: label.into(),
            nets,
            thresholds: vec![cache.threshold(0.5, 0.01, 0.0)?],
        });
    }
    let grid = solve_disc(0.5, &params, &GridSpec::cube(25, params.bound), &SolverConfig::default())?;
    let artifacts = AblationArtifacts {
        encoder: enc,
        params,
        grids: vec![grid],
        entries,
        classify: ClassifyConfig {
            n_constraints: 5,
            lattice: Some(GridSpec::cube(15, params.bound)),
            ..Default::default()
        },
        rollout: RolloutConfig {
            n: 30,
            ..Default::default()
        },
        epsilon: 0.5,
    };
    let report = run_ablation(Suite::Table1, &artifacts)?;
    print!("{}", emit_report(&[report], ReportFormat::Text)?);
    Ok(())
}
