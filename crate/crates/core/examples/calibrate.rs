//! Conformal thresholds for raw cosine and for the ideal distance scorer.

use latent_safety::conformal::{audit_recall, build_calibration_set, calibrate, IdealScorer, ScoreCache};
use latent_safety::latent::{Encoder, EncoderConfig, SimilarityModel};
use latent_safety::sim::{flatten_states, generate_dataset, DubinsParams};

fn main() -> latent_safety::Result<()> {
    let params = DubinsParams::default();
    let enc = Encoder::new(EncoderConfig::default());
    let calib = flatten_states(&generate_dataset(150, &params, 99)?);
    let test = flatten_states(&generate_dataset(150, &params, 100)?);
    let pairs = build_calibration_set(&calib, &enc, 30_000, 0.5, 3)?;
    let fresh = build_calibration_set(&test, &enc, 30_000, 0.5, 4)?;

    for alpha in [0.1, 0.05, 0.005] {
        let t = calibrate(&pairs, &SimilarityModel::Raw, alpha, 0.5)?;
        let audit = audit_recall(&fresh, &SimilarityModel::Raw, &t)?;
        println!(
            "alpha {alpha:<5}: delta {:+.4} from {} positives, fresh recall {:.4}",
            t.delta, t.n_positive, audit.recall
        );
    }

    // The ideal scorer is monotone in distance, so nested positive sets give ordered thresholds.
    let cache = ScoreCache::build(&pairs, &IdealScorer, &[0.3, 0.4, 0.5])?;
    for eps in cache.epsilons() {
        let t = cache.threshold(eps, 0.05, 0.0)?;
        println!("ideal scorer at epsilon {eps}: delta {:+.4}", t.delta);
    }
    Ok(())
}
