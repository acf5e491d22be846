//! Fits the failure projector and compares its heading invariance with raw cosine.

use latent_safety::latent::{heading_invariance, train_projector, Encoder, EncoderConfig, ProjectorTrainConfig, SimilarityModel};
use latent_safety::sim::{generate_dataset, similarity_at_distance, DubinsParams, PrivilegedState};

fn main() -> latent_safety::Result<()> {
    let params = DubinsParams::default();
    let data = generate_dataset(500, &params, 0)?;
    let enc = Encoder::new(EncoderConfig::default());
    let cfg = ProjectorTrainConfig {
        pairs: 50_000,
        epochs: 15,
        holdout_pairs: 5_000,
        ..Default::default()
    };
    let (proj, report) = train_projector(&data, &enc, &cfg)?;
    println!(
        "held-out mse {:.3} (local {:.3}, uniform {:.3})",
        report.heldout_mse, report.local_heldout_mse, report.uniform_heldout_mse
    );

    let projected = SimilarityModel::Projected(proj);
    for (name, model) in [("raw", &SimilarityModel::Raw), ("projected", &projected)] {
        println!("{name:>9}: heading invariance {:.3}", heading_invariance(model, &enc, 2000, 0.05, 1));
    }

    let a = enc.encode(&PrivilegedState::new(0.0, 0.0, 0.0));
    for d in [0.0, 0.25, 0.5, 1.0, 2.0] {
        let b = enc.encode(&PrivilegedState::new(d, 0.0, 2.0));
        println!(
            "distance {d:.2}: target {:+.3} projected {:+.3}",
            similarity_at_distance(d),
            projected.similarity(&a, &b)?
        );
    }
    Ok(())
}
