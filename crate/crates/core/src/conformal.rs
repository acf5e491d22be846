//! Class-conditioned split-conformal calibration of the failure threshold δ.

use std::collections::BTreeMap;
use std::path::Path;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::{Encoder, LatentVec, SimilarityModel};
use crate::sim::{ground_truth_similarity, PrivilegedState};

pub const MIN_POSITIVES: usize = 50;
pub const DEFAULT_RUNTIME_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationPair {
    pub z: LatentVec,
    pub z_prime: LatentVec,
    pub positive: bool,
    /// Ground-truth positions, kept for auditing and the ideal scorer.
    pub positions: ((f64, f64), (f64, f64)),
}

fn squared_distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
}

/// Pairs of uniformly drawn held-out states, positive iff `d² < ε²`.
pub fn build_calibration_set(
    states: &[PrivilegedState],
    encoder: &Encoder,
    n_pairs: usize,
    epsilon: f64,
    seed: u64,
) -> Result<Vec<CalibrationPair>> {
    if states.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if epsilon <= 0.0 {
        return Err(Error::InvalidParameter(format!("epsilon {epsilon} must be positive")));
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let pairs: Vec<CalibrationPair> = (0..n_pairs)
        .map(|_| {
            let a = &states[rng.gen_range(0..states.len())];
            let b = &states[rng.gen_range(0..states.len())];
            pair_of(encoder, a, b, epsilon)
        })
        .collect();
    let found = pairs.iter().filter(|p| p.positive).count();
    if found < MIN_POSITIVES {
        return Err(Error::TooFewPositives {
            found,
            required: MIN_POSITIVES,
        });
    }
    Ok(pairs)
}

pub fn pair_of(encoder: &Encoder, a: &PrivilegedState, b: &PrivilegedState, epsilon: f64) -> CalibrationPair {
    let positions = (a.position(), b.position());
    CalibrationPair {
        z: encoder.encode(a),
        z_prime: encoder.encode(b),
        positive: squared_distance(positions.0, positions.1) < epsilon * epsilon,
        positions,
    }
}

/// Relabels a pair pool for another radius (the latents are unchanged).
pub fn relabel(pairs: &[CalibrationPair], epsilon: f64) -> Vec<CalibrationPair> {
    pairs
        .iter()
        .map(|p| CalibrationPair {
            positive: squared_distance(p.positions.0, p.positions.1) < epsilon * epsilon,
            ..p.clone()
        })
        .collect()
}

/// Nonconformity score `−sim` of a pair.
pub trait PairScorer {
    fn score(&self, pair: &CalibrationPair) -> Result<f64>;
    fn provenance(&self) -> String;
}

/// Scores with the exact position similarity.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdealScorer;

impl PairScorer for IdealScorer {
    fn score(&self, pair: &CalibrationPair) -> Result<f64> {
        Ok(-ground_truth_similarity(pair.positions.0, pair.positions.1))
    }

    fn provenance(&self) -> String {
        "ideal".into()
    }
}

impl PairScorer for SimilarityModel {
    fn score(&self, pair: &CalibrationPair) -> Result<f64> {
        self.margin(&pair.z, &pair.z_prime)
    }

    fn provenance(&self) -> String {
        self.checksum()
    }
}

/// Sorted scores of the positive pairs. Negative pairs are never scored.
pub fn positive_scores<S: PairScorer + ?Sized>(pairs: &[CalibrationPair], scorer: &S) -> Result<Vec<f64>> {
    let mut scores = pairs
        .iter()
        .filter(|p| p.positive)
        .map(|p| scorer.score(p))
        .collect::<Result<Vec<f64>>>()?;
    scores.sort_by(f64::total_cmp);
    Ok(scores)
}

/// 1-based rank `⌈(1−α)(N+1)⌉`, with products that land within rounding of an
/// integer (e.g. `0.9 · 10`) treated as that integer.
pub fn conformal_rank(n: usize, alpha: f64) -> usize {
    let x = (1.0 - alpha) * (n as f64 + 1.0);
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r as usize
    } else {
        x.ceil() as usize
    }
}

/// The rank-th smallest of `sorted`, or `+∞` when the rank exceeds the sample.
pub fn quantile_threshold(sorted: &[f64], alpha: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::NoPositives);
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha {alpha} outside (0, 1)")));
    }
    let k = conformal_rank(sorted.len(), alpha);
    if k > sorted.len() {
        log::warn!(
            "conformal rank {k} exceeds {} positives at alpha {alpha}; threshold is +inf and every state will be flagged",
            sorted.len()
        );
        return Ok(f64::INFINITY);
    }
    Ok(sorted[k.max(1) - 1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub delta: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub n_positive: usize,
    pub runtime_margin: f64,
    pub projector_checksum: String,
}

impl Threshold {
    pub fn is_sentinel(&self) -> bool {
        self.delta == f64::INFINITY
    }

    /// `δ + runtime_margin`, the level the switching law compares against.
    pub fn effective(&self) -> f64 {
        self.delta + self.runtime_margin
    }

    pub fn with_runtime_margin(&self, margin: f64) -> Self {
        Self {
            runtime_margin: margin,
            ..self.clone()
        }
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("threshold serializes")
    }

    pub fn from_text(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_text())?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

pub fn calibrate<S: PairScorer + ?Sized>(
    pairs: &[CalibrationPair],
    scorer: &S,
    alpha: f64,
    epsilon: f64,
) -> Result<Threshold> {
    let scores = positive_scores(pairs, scorer)?;
    threshold_from_scores(&scores, alpha, epsilon, scorer.provenance())
}

pub fn threshold_from_scores(sorted: &[f64], alpha: f64, epsilon: f64, provenance: String) -> Result<Threshold> {
    Ok(Threshold {
        delta: quantile_threshold(sorted, alpha)?,
        alpha,
        epsilon,
        n_positive: sorted.len(),
        runtime_margin: DEFAULT_RUNTIME_MARGIN,
        projector_checksum: provenance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecallAudit {
    pub n_positive: usize,
    pub covered: usize,
    pub recall: f64,
    /// 95% Wilson score interval for the recall.
    pub ci_low: f64,
    pub ci_high: f64,
}

pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Empirical `P(score ≤ δ | positive)`.
pub fn audit_recall<S: PairScorer + ?Sized>(pairs: &[CalibrationPair], scorer: &S, t: &Threshold) -> Result<RecallAudit> {
    let scores = positive_scores(pairs, scorer)?;
    let covered = scores.iter().filter(|&&s| s <= t.delta).count();
    let n = scores.len();
    let (ci_low, ci_high) = wilson_interval(covered, n, 1.959_963_984_540_054);
    Ok(RecallAudit {
        n_positive: n,
        covered,
        recall: if n == 0 { 1.0 } else { covered as f64 / n as f64 },
        ci_low,
        ci_high,
    })
}

/// Sorted positive scores per ε, so α and ε can change at runtime without
/// touching the pair pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreCache {
    pub projector_checksum: String,
    /// Keyed by ε formatted with three decimals.
    pub scores: BTreeMap<String, Vec<f64>>,
}

fn eps_key(epsilon: f64) -> String {
    format!("{epsilon:.3}")
}

impl ScoreCache {
    pub fn build<S: PairScorer + ?Sized>(pairs: &[CalibrationPair], scorer: &S, epsilons: &[f64]) -> Result<Self> {
        let mut scores = BTreeMap::new();
        for &e in epsilons {
            scores.insert(eps_key(e), positive_scores(&relabel(pairs, e), scorer)?);
        }
        Ok(Self {
            projector_checksum: scorer.provenance(),
            scores,
        })
    }

    pub fn epsilons(&self) -> Vec<f64> {
        self.scores.keys().filter_map(|k| k.parse().ok()).collect()
    }

    pub fn threshold(&self, epsilon: f64, alpha: f64, runtime_margin: f64) -> Result<Threshold> {
        let sorted = self.scores.get(&eps_key(epsilon)).ok_or(Error::MissingCache(epsilon))?;
        let mut t = threshold_from_scores(sorted, alpha, epsilon, self.projector_checksum.clone())?;
        t.runtime_margin = runtime_margin;
        Ok(t)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, serde_json::to_string(self)?)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latent::EncoderConfig;
    use crate::sim::{flatten_states, generate_dataset, similarity_at_distance, DubinsParams};
    use proptest::prelude::*;

    fn scored(scores: &[f64]) -> Vec<f64> {
        let mut v = scores.to_vec();
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn hand_quantiles() {
        assert_eq!(conformal_rank(4, 0.25), 4);
        assert_eq!(quantile_threshold(&scored(&[-0.9, -0.85, -0.8, -0.7]), 0.25).unwrap(), -0.7);
        assert_eq!(conformal_rank(100, 0.005), 101);
        assert_eq!(quantile_threshold(&vec![0.0; 100], 0.005).unwrap(), f64::INFINITY);
        // 0.9 * 10 evaluates to 9.000000000000002 in floating point.
        assert_eq!(conformal_rank(9, 0.1), 9);
        assert_eq!(quantile_threshold(&[], 0.1).unwrap_err().to_string(), Error::NoPositives.to_string());
        assert!(quantile_threshold(&[0.0], 1.0).is_err());
    }

    fn exact_rank(n: usize, alpha_permille: u32) -> usize {
        // ⌈(1000 − a)(n + 1) / 1000⌉ in integers.
        let num = (1000 - alpha_permille as usize) * (n + 1);
        num.div_ceil(1000)
    }

    proptest! {
        #[test]
        fn rank_matches_integer_arithmetic(n in 1usize..5000, a in 1u32..999) {
            prop_assert_eq!(conformal_rank(n, a as f64 / 1000.0), exact_rank(n, a));
        }

        #[test]
        fn in_sample_recall_and_alpha_monotonicity(
            raw in prop::collection::vec(-1.0f64..1.0, 1..300),
            a1 in 0.001f64..0.5,
            a2 in 0.001f64..0.5,
        ) {
            let sorted = scored(&raw);
            let (lo, hi) = if a1 < a2 { (a1, a2) } else { (a2, a1) };
            let d_lo = quantile_threshold(&sorted, lo).unwrap();
            let d_hi = quantile_threshold(&sorted, hi).unwrap();
            prop_assert!(d_lo >= d_hi);
            let covered = sorted.iter().filter(|&&s| s <= d_lo).count();
            prop_assert!(covered as f64 / sorted.len() as f64 >= 1.0 - lo);
        }
    }

    fn pool(n_pairs: usize) -> Vec<CalibrationPair> {
        let data = generate_dataset(300, &DubinsParams::default(), 77).unwrap();
        let states = flatten_states(&data);
        build_calibration_set(&states, &Encoder::new(EncoderConfig::default()), n_pairs, 0.5, 3).unwrap()
    }

    #[test]
    fn calibration_set_properties() {
        let e = Encoder::new(EncoderConfig::default());
        let s = PrivilegedState::new(0.2, 0.2, 0.0);
        assert!(pair_of(&e, &s, &s, 1e-6).positive);
        let pairs = pool(20_000);
        assert_eq!(pairs, pool(20_000));
        let small = relabel(&pairs, 0.3);
        for (a, b) in small.iter().zip(&pairs) {
            assert!(!a.positive || b.positive);
        }
        let states = vec![PrivilegedState::new(-1.0, -1.0, 0.0), PrivilegedState::new(1.0, 1.0, 0.0)];
        assert!(matches!(
            build_calibration_set(&states, &e, 10, 0.5, 0),
            Err(Error::TooFewPositives { .. })
        ));
    }

    #[test]
    fn ideal_scorer_nested_epsilon_ordering() {
        let pairs = pool(30_000);
        let deltas: Vec<f64> = [0.3, 0.4, 0.5]
            .iter()
            .map(|&e| calibrate(&relabel(&pairs, e), &IdealScorer, 0.005, e).unwrap().delta)
            .collect();
        assert!(deltas[0] <= deltas[1] && deltas[1] <= deltas[2]);
        assert!(deltas[2] <= -similarity_at_distance(0.5) + 1e-12);
    }

    #[test]
    fn audit_in_sample_and_sentinel() {
        let pairs = pool(20_000);
        let t = calibrate(&pairs, &IdealScorer, 0.1, 0.5).unwrap();
        let audit = audit_recall(&pairs, &IdealScorer, &t).unwrap();
        assert!(audit.recall >= 0.9);
        assert!(audit.ci_low <= audit.recall && audit.recall <= audit.ci_high);
        let inf = Threshold {
            delta: f64::INFINITY,
            ..t.clone()
        };
        assert!(inf.is_sentinel());
        assert_eq!(audit_recall(&pairs, &IdealScorer, &inf).unwrap().recall, 1.0);
    }

    #[test]
    fn threshold_text_round_trip() {
        let t = Threshold {
            delta: -0.823_223_304_703_363_1,
            alpha: 0.005,
            epsilon: 0.5,
            n_positive: 2345,
            runtime_margin: 0.1,
            projector_checksum: "0123abcd".into(),
        };
        assert_eq!(Threshold::from_text(&t.to_text()).unwrap(), t);
        let inf = Threshold {
            delta: f64::INFINITY,
            ..t
        };
        let text = inf.to_text();
        assert!(text.contains("delta = inf"));
        assert_eq!(Threshold::from_text(&text).unwrap(), inf);
    }

    #[test]
    fn score_cache_requantiles() {
        let pairs = pool(20_000);
        let cache = ScoreCache::build(&pairs, &IdealScorer, &[0.3, 0.5]).unwrap();
        let a = cache.threshold(0.5, 0.1, 0.1).unwrap();
        assert_eq!(a, calibrate(&pairs, &IdealScorer, 0.1, 0.5).unwrap());
        assert!(cache.threshold(0.5, 0.005, 0.1).unwrap().delta >= a.delta);
        assert!(matches!(cache.threshold(0.4, 0.1, 0.1), Err(Error::MissingCache(_))));
        let json = serde_json::to_string(&cache).unwrap();
        assert_eq!(serde_json::from_str::<ScoreCache>(&json).unwrap(), cache);
    }

    #[test]
    fn wilson_interval_examples() {
        let (lo, hi) = wilson_interval(90, 100, 1.96);
        assert!((lo - 0.8256).abs() < 1e-3 && (hi - 0.9448).abs() < 1e-3);
        assert_eq!(wilson_interval(0, 0, 1.96), (0.0, 1.0));
    }
}
