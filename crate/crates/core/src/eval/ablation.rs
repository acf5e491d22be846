use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    eval_classification, eval_filtered_driver, eval_grid_policy, eval_safe_rate, ClassifyConfig, Counts, Metrics,
    RolloutConfig,
};
use crate::conformal::Threshold;
use crate::error::{Error, Result};
use crate::grid::{ActionSet, ValueGrid};
use crate::hj_rl::FilterNets;
use crate::latent::Encoder;
use crate::sim::DubinsParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    /// Projector against no projector, plus the oracle-policy certificate.
    Table1,
    /// The four conditioning strategies.
    Table2,
    /// Thresholds calibrated at several ε, one filter.
    Table3,
}

impl Suite {
    pub fn title(self) -> &'static str {
        match self {
            Suite::Table1 => "classification and safe rate",
            Suite::Table2 => "conditioning strategies",
            Suite::Table3 => "thresholds calibrated at different epsilon",
        }
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table1" => Ok(Suite::Table1),
            "table2" => Ok(Suite::Table2),
            "table3" => Ok(Suite::Table3),
            other => Err(Error::InvalidParameter(format!("unknown suite {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: String,
    pub counts: Option<Counts>,
    pub classification: Option<Metrics>,
    pub safe_positive: Option<Metrics>,
    pub safe_rate: Option<f64>,
    pub mean_min_distance: Option<f64>,
    /// Wall time of this row's evaluation.
    #[serde(default)]
    pub eval_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub epsilon: f64,
    pub alpha: f64,
    pub delta: f64,
    pub n_positive: usize,
    pub safe_rate: Option<f64>,
    pub mean_min_distance: Option<f64>,
    /// Share of trajectories staying at least ε minus one grid cell from the centre.
    pub fraction_respecting: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub suite: Suite,
    pub rows: Vec<MethodRow>,
    pub calibration: Vec<CalibrationRow>,
}

/// One trained filter with the thresholds calibrated for it.
#[derive(Debug, Clone)]
pub struct FilterEntry {
    pub label: String,
    pub nets: FilterNets,
    pub thresholds: Vec<Threshold>,
}

/// Everything a sweep reads. Grids are origin solves, one per ε.
#[derive(Debug, Clone)]
pub struct AblationArtifacts {
    pub encoder: Arc<Encoder>,
    pub params: DubinsParams,
    pub grids: Vec<ValueGrid>,
    pub entries: Vec<FilterEntry>,
    pub classify: ClassifyConfig,
    pub rollout: RolloutConfig,
    /// ε used for the classification suites.
    pub epsilon: f64,
}

impl AblationArtifacts {
    pub fn grid(&self, epsilon: f64) -> Result<&ValueGrid> {
        self.grids
            .iter()
            .find(|g| g.epsilon.is_some_and(|e| (e - epsilon).abs() <= 1e-9))
            .ok_or_else(|| Error::MissingArtifact(format!("oracle grid for epsilon {epsilon}")))
    }

    fn threshold<'a>(&self, entry: &'a FilterEntry, epsilon: f64) -> Result<&'a Threshold> {
        entry
            .thresholds
            .iter()
            .find(|t| (t.epsilon - epsilon).abs() <= 1e-9)
            .ok_or_else(|| Error::MissingArtifact(format!("threshold at epsilon {epsilon} for {}", entry.label)))
    }
}

fn method_row(a: &AblationArtifacts, entry: &FilterEntry) -> Result<MethodRow> {
    let grid = a.grid(a.epsilon)?;
    let t = a.threshold(entry, a.epsilon)?;
    let c = eval_classification(&entry.nets, &a.encoder, t, grid, &a.classify, a.params.bound)?;
    let r = eval_safe_rate(&entry.nets, &a.encoder, grid, &a.params, &a.rollout)?;
    log::info!("{}: B.Acc {:.3}, safe rate {:.3}", entry.label, c.metrics.balanced_accuracy, r.safe_rate);
    Ok(MethodRow {
        method: entry.label.clone(),
        counts: Some(c.counts),
        classification: Some(c.metrics),
        safe_positive: Some(c.safe_positive),
        safe_rate: Some(r.safe_rate),
        mean_min_distance: Some(r.mean_min_distance),
        eval_seconds: Some(c.seconds + r.seconds),
    })
}

pub fn run_ablation(suite: Suite, a: &AblationArtifacts) -> Result<AblationReport> {
    if a.entries.is_empty() {
        return Err(Error::MissingArtifact("no trained filters supplied".into()));
    }
    let mut report = AblationReport {
        suite,
        rows: Vec::new(),
        calibration: Vec::new(),
    };
    match suite {
        Suite::Table1 | Suite::Table2 => {
            for entry in &a.entries {
                report.rows.push(method_row(a, entry)?);
            }
            if suite == Suite::Table1 {
                let actions = ActionSet::uniform(11, a.params.a_max)?;
                let cert = eval_grid_policy(a.grid(a.epsilon)?, &a.params, &actions, &a.rollout)?;
                report.rows.push(MethodRow {
                    method: "grid argmax".into(),
                    counts: None,
                    classification: None,
                    safe_positive: None,
                    safe_rate: Some(cert.safe_rate),
                    mean_min_distance: Some(cert.mean_min_distance),
                    eval_seconds: Some(cert.seconds),
                });
            }
        }
        Suite::Table3 => {
            let entry = &a.entries[0];
            let mut thresholds: Vec<&Threshold> = entry.thresholds.iter().collect();
            thresholds.sort_by(|x, y| x.epsilon.total_cmp(&y.epsilon));
            for t in thresholds {
                let grid = a.grid(t.epsilon)?;
                let r = eval_filtered_driver(&entry.nets, &a.encoder, t, grid, &a.params, &a.rollout)?;
                let cell = grid.spec.hx();
                report.calibration.push(CalibrationRow {
                    epsilon: t.epsilon,
                    alpha: t.alpha,
                    delta: t.delta,
                    n_positive: t.n_positive,
                    safe_rate: Some(r.safe_rate),
                    mean_min_distance: Some(r.mean_min_distance),
                    fraction_respecting: Some(r.fraction_beyond(t.epsilon - cell)),
                });
            }
        }
    }
    Ok(report)
}
