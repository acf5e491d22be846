//! Reproduction harness: classification against the grid oracle, rollout
//! safety rates, ablation sweeps and report files.

mod ablation;
mod metrics;
mod report;

pub use ablation::{run_ablation, AblationArtifacts, AblationReport, CalibrationRow, FilterEntry, MethodRow, Suite};
pub use metrics::{ClassificationReport, Counts, Metrics};
pub use report::{emit_report, parse_records, ReportFormat};

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use ndarray::{s, Array2};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::conformal::Threshold;
use crate::error::{Error, Result};
use crate::filter::filtered_step;
use crate::grid::{oracle_for_constraint, ActionSet, GridSpec, ValueGrid};
use crate::hj_rl::FilterNets;
use crate::latent::{Encoder, LatentSession};
use crate::sim::{step, wrap_angle, DubinsParams, FailureDisc, PrivilegedState};

const CHUNK: usize = 16_384;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifyConfig {
    pub n_constraints: usize,
    pub seed: u64,
    /// Nodes whose oracle value lies within this many x-cells of zero are skipped.
    pub band_cells: f64,
    /// Lattice the labels are evaluated on; the oracle grid when unset.
    pub lattice: Option<GridSpec>,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            n_constraints: 50,
            seed: 0,
            band_cells: 0.0,
            lattice: None,
        }
    }
}

fn check_epsilon(base: &ValueGrid, t: &Threshold) -> Result<f64> {
    match base.epsilon {
        Some(e) if (e - t.epsilon).abs() <= 1e-9 => Ok(e),
        Some(e) => Err(Error::EpsilonMismatch(e, t.epsilon)),
        None => Err(Error::InvalidParameter("oracle grid has no disc radius".into())),
    }
}

fn check_provenance(nets: &FilterNets, t: &Threshold) -> Result<()> {
    if nets.projector_checksum() != t.projector_checksum {
        return Err(Error::ProvenanceMismatch {
            filter: nets.projector_checksum(),
            threshold: t.projector_checksum.clone(),
        });
    }
    Ok(())
}

/// Constraint centre uniform over the box shrunk by `epsilon`.
pub fn sample_center<R: Rng + ?Sized>(rng: &mut R, bound: f64, epsilon: f64) -> (f64, f64) {
    let r = bound - epsilon;
    (rng.gen_range(-r..=r), rng.gen_range(-r..=r))
}

/// Values of `nets` on every lattice node for one constraint, in lattice order.
pub fn lattice_values(
    nets: &FilterNets,
    state_inputs: &Array2<f32>,
    encoder: &Encoder,
    center: (f64, f64),
) -> Result<Vec<f32>> {
    let cond = nets.condition(&encoder.encode_constraint(center.0, center.1))?;
    let mut out = Vec::with_capacity(state_inputs.nrows());
    let mut start = 0;
    while start < state_inputs.nrows() {
        let end = (start + CHUNK).min(state_inputs.nrows());
        out.extend(nets.evaluate_inputs(state_inputs.slice(s![start..end, ..]), &cond)?.0);
        start = end;
    }
    Ok(out)
}

/// Predicted unsafe iff `V(z; z_c) < δ`; truth is the oracle value below zero.
pub fn eval_classification(
    nets: &FilterNets,
    encoder: &Encoder,
    t: &Threshold,
    base: &ValueGrid,
    cfg: &ClassifyConfig,
    bound: f64,
) -> Result<ClassificationReport> {
    let clock = Instant::now();
    let epsilon = check_epsilon(base, t)?;
    check_provenance(nets, t)?;
    let lattice = cfg.lattice.unwrap_or(base.spec);
    lattice.validate()?;
    let nodes: Vec<PrivilegedState> = (0..lattice.len()).map(|n| lattice.node_at(n)).collect();
    let mut inputs = Array2::zeros((0, nets.state_dim()));
    for chunk in nodes.chunks(CHUNK) {
        let s = nets.state_inputs(encoder.encode_batch(chunk).view())?;
        inputs.append(ndarray::Axis(0), s.view()).expect("matching widths");
    }
    let band = cfg.band_cells * lattice.hx();
    let mut rng = StdRng::seed_from_u64(cfg.seed);
    let mut counts = Counts::default();
    let mut excluded = 0;
    for _ in 0..cfg.n_constraints {
        let (cx, cy) = sample_center(&mut rng, bound, epsilon);
        let oracle = oracle_for_constraint(base, FailureDisc::new(cx, cy, epsilon, bound)?)?;
        let values = lattice_values(nets, &inputs, encoder, (cx, cy))?;
        for (node, v) in nodes.iter().zip(&values) {
            let truth = oracle.value(node);
            if band > 0.0 && truth.abs() < band {
                excluded += 1;
                continue;
            }
            counts.record(truth < 0.0, (*v as f64) < t.delta);
        }
    }
    let mut report = ClassificationReport::from_counts(
        &format!("{}", nets.conditioning()),
        counts,
        cfg.n_constraints,
        lattice,
        excluded,
    );
    report.seconds = clock.elapsed().as_secs_f64();
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RolloutConfig {
    pub n: usize,
    pub seed: u64,
    pub horizon: usize,
    pub max_attempts: usize,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            n: 250,
            seed: 1,
            horizon: 100,
            max_attempts: 200_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutReport {
    pub label: String,
    pub n_rollouts: usize,
    pub safe_count: usize,
    pub safe_rate: f64,
    /// Smallest distance to the constraint centre along each trajectory.
    pub min_distances: Vec<f64>,
    pub mean_min_distance: f64,
    /// Filtered steps where the fallback replaced the task action.
    pub interventions: u64,
    pub seconds: f64,
}

impl RolloutReport {
    fn new(label: &str, outcomes: Vec<(bool, f64)>, interventions: u64, seconds: f64) -> Self {
        let n = outcomes.len();
        let safe_count = outcomes.iter().filter(|o| o.0).count();
        let min_distances: Vec<f64> = outcomes.iter().map(|o| o.1).collect();
        Self {
            label: label.to_string(),
            n_rollouts: n,
            safe_count,
            safe_rate: if n == 0 { 0.0 } else { safe_count as f64 / n as f64 },
            mean_min_distance: if n == 0 { 0.0 } else { min_distances.iter().sum::<f64>() / n as f64 },
            min_distances,
            interventions,
            seconds,
        }
    }

    /// Share of trajectories whose minimum centre distance is at least `d`.
    pub fn fraction_beyond(&self, d: f64) -> f64 {
        if self.n_rollouts == 0 {
            return 0.0;
        }
        self.min_distances.iter().filter(|&&m| m >= d).count() as f64 / self.n_rollouts as f64
    }
}

/// Start states with positive oracle value (inside the solved extents), each with its own constraint.
pub fn sample_safe_starts(
    base: &ValueGrid,
    epsilon: f64,
    bound: f64,
    cfg: &RolloutConfig,
) -> Result<Vec<(PrivilegedState, FailureDisc)>> {
    let mut rng = StdRng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(cfg.n);
    let mut attempts = 0;
    while out.len() < cfg.n {
        if attempts >= cfg.max_attempts {
            return Err(Error::NoSafeStart(attempts));
        }
        attempts += 1;
        let (cx, cy) = sample_center(&mut rng, bound, epsilon);
        let disc = FailureDisc::new(cx, cy, epsilon, bound)?;
        let s = PrivilegedState::new(
            rng.gen_range(-bound..=bound),
            rng.gen_range(-bound..=bound),
            rng.gen_range(-PI..PI),
        );
        let oracle = oracle_for_constraint(base, disc)?;
        if oracle.in_base_grid(&s) && oracle.value(&s) > 0.0 {
            out.push((s, disc));
        }
    }
    Ok(out)
}

/// Rolls `policy` from each start under the true simulator.
fn roll<F>(starts: &[(PrivilegedState, FailureDisc)], horizon: usize, params: &DubinsParams, mut policy: F) -> Result<Vec<(bool, f64)>>
where
    F: FnMut(usize, &PrivilegedState, &FailureDisc) -> Result<f64>,
{
    starts
        .iter()
        .enumerate()
        .map(|(idx, (start, disc))| {
            let mut s = *start;
            let mut safe = !disc.contains(&s);
            let mut min_d = disc.center_distance(&s);
            for _ in 0..horizon {
                let a = policy(idx, &s, disc)?;
                s = step(&s, a, params)?;
                safe &= !disc.contains(&s);
                min_d = min_d.min(disc.center_distance(&s));
            }
            Ok((safe, min_d))
        })
        .collect()
}

/// Learned fallback policy from oracle-safe starts. The policy only ever sees latents.
pub fn eval_safe_rate(
    nets: &FilterNets,
    encoder: &Arc<Encoder>,
    base: &ValueGrid,
    params: &DubinsParams,
    cfg: &RolloutConfig,
) -> Result<RolloutReport> {
    let clock = Instant::now();
    let epsilon = base.epsilon.ok_or_else(|| Error::InvalidParameter("oracle grid has no disc radius".into()))?;
    let starts = sample_safe_starts(base, epsilon, params.bound, cfg)?;
    let mut outcomes = Vec::with_capacity(starts.len());
    for (start, disc) in &starts {
        let z_c = encoder.encode_constraint(disc.cx, disc.cy);
        let mut session = LatentSession::new(Arc::clone(encoder), *params, *start);
        let mut min_d = disc.center_distance(start);
        let mut safe = true;
        for _ in 0..cfg.horizon {
            let a = nets.fallback_action(&session.latent(), &z_c)?;
            session.step(a)?;
            let s = session.privileged_state();
            safe &= !disc.contains(&s);
            min_d = min_d.min(disc.center_distance(&s));
        }
        outcomes.push((safe, min_d));
    }
    Ok(RolloutReport::new(
        &format!("{} fallback", nets.conditioning()),
        outcomes,
        0,
        clock.elapsed().as_secs_f64(),
    ))
}

/// Greedy grid-argmax policy on the oracle values; the certificate run.
pub fn eval_grid_policy(
    base: &ValueGrid,
    params: &DubinsParams,
    actions: &ActionSet,
    cfg: &RolloutConfig,
) -> Result<RolloutReport> {
    let clock = Instant::now();
    let epsilon = base.epsilon.ok_or_else(|| Error::InvalidParameter("oracle grid has no disc radius".into()))?;
    let starts = sample_safe_starts(base, epsilon, params.bound, cfg)?;
    let outcomes = roll(&starts, cfg.horizon, params, |_, s, disc| {
        Ok(oracle_for_constraint(base, *disc)?.best_action(s, params, actions))
    })?;
    Ok(RolloutReport::new("grid argmax", outcomes, 0, clock.elapsed().as_secs_f64()))
}

/// Task policy that steers straight at the constraint centre at full authority.
pub fn straight_line_driver(s: &PrivilegedState, center: (f64, f64), a_max: f64) -> f64 {
    let desired = (center.1 - s.y).atan2(center.0 - s.x);
    (4.0 * wrap_angle(desired - s.theta)).clamp(-a_max, a_max)
}

/// Adversarial driver passed through the filter at threshold `t`.
pub fn eval_filtered_driver(
    nets: &FilterNets,
    encoder: &Arc<Encoder>,
    t: &Threshold,
    base: &ValueGrid,
    params: &DubinsParams,
    cfg: &RolloutConfig,
) -> Result<RolloutReport> {
    let clock = Instant::now();
    let epsilon = check_epsilon(base, t)?;
    check_provenance(nets, t)?;
    let starts = sample_safe_starts(base, epsilon, params.bound, cfg)?;
    let mut outcomes = Vec::with_capacity(starts.len());
    let mut interventions = 0;
    for (idx, (start, disc)) in starts.iter().enumerate() {
        let z_c = encoder.encode_constraint(disc.cx, disc.cy);
        let mut session = LatentSession::new(Arc::clone(encoder), *params, *start);
        let mut min_d = disc.center_distance(start);
        let mut safe = true;
        for _ in 0..cfg.horizon {
            // The driver plays the human and may look at the world; the filter sees latents only.
            let task = straight_line_driver(&session.privileged_state(), (disc.cx, disc.cy), params.a_max);
            let d = filtered_step(&mut session, nets, &z_c, t, task, idx as u64)?;
            interventions += d.intervened as u64;
            let s = session.privileged_state();
            safe &= !disc.contains(&s);
            min_d = min_d.min(disc.center_distance(&s));
        }
        outcomes.push((safe, min_d));
    }
    Ok(RolloutReport::new(
        &format!("{} filtered driver eps {epsilon}", nets.conditioning()),
        outcomes,
        interventions,
        clock.elapsed().as_secs_f64(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{solve_disc, SolverConfig};

    fn small_grid() -> ValueGrid {
        solve_disc(
            0.5,
            &DubinsParams::default(),
            &GridSpec::cube(31, 1.5),
            &SolverConfig {
                gamma: 0.999,
                ..SolverConfig::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn safe_starts_have_positive_oracle_value() {
        let g = small_grid();
        let cfg = RolloutConfig { n: 40, ..RolloutConfig::default() };
        let starts = sample_safe_starts(&g, 0.5, 1.5, &cfg).unwrap();
        assert_eq!(starts.len(), 40);
        for (s, d) in &starts {
            assert!(oracle_for_constraint(&g, *d).unwrap().value(s) > 0.0);
            assert!(d.cx.abs() <= 1.0 && d.cy.abs() <= 1.0);
        }
    }

    #[test]
    fn grid_policy_is_safe_and_driver_alone_is_not() {
        let g = small_grid();
        let p = DubinsParams::default();
        let cfg = RolloutConfig { n: 40, ..RolloutConfig::default() };
        let cert = eval_grid_policy(&g, &p, &ActionSet::uniform(11, p.a_max).unwrap(), &cfg).unwrap();
        assert!(cert.safe_rate >= 0.95, "{}", cert.safe_rate);
        let starts = sample_safe_starts(&g, 0.5, 1.5, &cfg).unwrap();
        let unfiltered = roll(&starts, cfg.horizon, &p, |_, s, d| Ok(straight_line_driver(s, (d.cx, d.cy), p.a_max))).unwrap();
        // A few starts exit the box or orbit the disc before reaching it.
        let hit = unfiltered.iter().filter(|o| !o.0).count();
        assert!(hit * 10 >= unfiltered.len() * 8, "{hit} of {}", unfiltered.len());
    }

    #[test]
    fn degenerate_oracle_has_no_safe_starts() {
        let mut g = small_grid();
        g.values.iter_mut().for_each(|v| *v = -1.0);
        let cfg = RolloutConfig { n: 5, max_attempts: 100, ..RolloutConfig::default() };
        assert!(matches!(sample_safe_starts(&g, 0.5, 1.5, &cfg), Err(Error::NoSafeStart(100))));
    }
}
