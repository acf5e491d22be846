//! File-level plumbing shared by the command line, the examples and the
//! acceptance harness: load and store every artifact by path.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::conformal::{build_calibration_set, CalibrationPair, ScoreCache, Threshold};
use crate::error::{Error, Result};
use crate::grid::{read_grid, write_grid, ValueGrid};
use crate::hj_rl::{read_filter, write_filter, FilterNets};
use crate::latent::{Encoder, FailureProjector, SimilarityModel};
use crate::sim::{flatten_states, read_dataset, write_dataset, Trajectory};

pub fn save_dataset(path: &Path, data: &[Trajectory]) -> Result<()> {
    write_dataset(BufWriter::new(File::create(path)?), data)
}

pub fn load_dataset(path: &Path) -> Result<Vec<Trajectory>> {
    read_dataset(BufReader::new(File::open(path)?))
}

pub fn save_projector(path: &Path, p: &FailureProjector) -> Result<()> {
    p.write(BufWriter::new(File::create(path)?))
}

pub fn load_projector(path: &Path) -> Result<FailureProjector> {
    FailureProjector::read(BufReader::new(File::open(path)?))
}

/// `Raw` when no projector path is given.
pub fn similarity_model(projector: Option<&Path>) -> Result<SimilarityModel> {
    Ok(match projector {
        Some(p) => SimilarityModel::Projected(load_projector(p)?),
        None => SimilarityModel::Raw,
    })
}

pub fn save_grid(path: &Path, g: &ValueGrid) -> Result<()> {
    write_grid(g, BufWriter::new(File::create(path)?))
}

pub fn load_grid(path: &Path, tol: f64) -> Result<ValueGrid> {
    read_grid(BufReader::new(File::open(path)?), tol)
}

pub fn save_filter(path: &Path, nets: &FilterNets) -> Result<()> {
    write_filter(nets, BufWriter::new(File::create(path)?))
}

/// Loads a filter with the projector it was trained against, falling back to
/// the raw model for filters trained without one.
pub fn load_filter(path: &Path, projector: Option<&FailureProjector>) -> Result<FilterNets> {
    let open = || -> Result<BufReader<File>> { Ok(BufReader::new(File::open(path)?)) };
    match projector {
        Some(p) => match read_filter(open()?, SimilarityModel::Projected(p.clone())) {
            Err(Error::ProvenanceMismatch { .. }) => read_filter(open()?, SimilarityModel::Raw),
            other => other,
        },
        None => read_filter(open()?, SimilarityModel::Raw),
    }
}

/// Calibration pool from a held-out dataset.
pub fn calibration_pairs(
    heldout: &[Trajectory],
    encoder: &Encoder,
    n_pairs: usize,
    epsilon: f64,
    seed: u64,
) -> Result<Vec<CalibrationPair>> {
    build_calibration_set(&flatten_states(heldout), encoder, n_pairs, epsilon, seed)
}

/// Thresholds for `nets` at every ε in the first cache with matching provenance.
pub fn thresholds_for(nets: &FilterNets, caches: &[ScoreCache], alpha: f64, runtime_margin: f64) -> Result<Vec<Threshold>> {
    let sum = nets.projector_checksum();
    let cache = caches
        .iter()
        .find(|c| c.projector_checksum == sum)
        .ok_or_else(|| Error::MissingArtifact(format!("calibration cache for projector {sum}")))?;
    cache
        .epsilons()
        .into_iter()
        .map(|e| cache.threshold(e, alpha, runtime_margin))
        .collect()
}
