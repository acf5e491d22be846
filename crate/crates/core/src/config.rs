//! One flat `key = value` file covering every tunable default. Missing keys
//! keep their defaults; unknown keys are rejected so typos surface.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::conformal::DEFAULT_RUNTIME_MARGIN;
use crate::error::{Error, Result};
use crate::eval::{ClassifyConfig, RolloutConfig};
use crate::grid::{GridSpec, SolverConfig};
use crate::hj_rl::{Conditioning, FilterTrainConfig};
use crate::latent::{EncoderConfig, ProjectorTrainConfig};
use crate::sim::DubinsParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    // plant
    pub speed: f64,
    pub dt: f64,
    pub a_max: f64,
    pub bound: f64,
    pub horizon: usize,

    // dataset
    pub episodes: usize,
    pub data_seed: u64,
    pub heldout_episodes: usize,
    pub heldout_seed: u64,

    // encoder
    pub latent_dim: usize,
    pub encoder_seed: u64,
    pub encoder_input_gain: f64,
    pub encoder_output_gain: f64,
    pub constraint_headings: usize,

    // projector
    pub projector_pairs: usize,
    pub projector_epochs: usize,
    pub projector_batch: usize,
    pub projector_lr: f64,
    pub projector_weight_decay: f64,
    pub projector_local_fraction: f64,
    pub projector_local_radius: f64,
    pub projector_holdout_pairs: usize,
    pub projector_seed: u64,

    // grid oracle
    pub grid_nx: usize,
    pub grid_ny: usize,
    pub grid_ntheta: usize,
    pub grid_actions: usize,
    pub grid_gamma: f64,
    pub grid_tol: f64,
    pub grid_max_iter: usize,

    // calibration
    pub epsilon: f64,
    pub alpha: f64,
    pub calibration_pairs: usize,
    pub calibration_seed: u64,
    pub cache_epsilons: Vec<f64>,
    pub runtime_margin: f64,

    // filter training
    pub conditioning: Conditioning,
    pub hidden: Vec<usize>,
    pub filter_steps: u64,
    pub filter_batch: usize,
    pub replay_capacity: usize,
    pub replay_warmup: usize,
    pub critic_lr: f64,
    pub actor_lr: f64,
    pub filter_weight_decay: f64,
    pub tau: f64,
    pub exploration_noise: f64,
    pub gamma_start: f64,
    pub gamma_end: f64,
    pub gamma_anneal_fraction: f64,
    pub max_episode_steps: usize,
    pub parallel_sessions: usize,
    pub transitions_per_update: usize,
    pub prototypes: usize,
    pub filter_seed: u64,
    pub log_every: u64,

    // evaluation
    pub eval_constraints: usize,
    pub eval_seed: u64,
    pub eval_band_cells: f64,
    /// Nodes per axis of the classification lattice; 0 uses the oracle grid itself.
    pub eval_lattice: usize,
    pub rollouts: usize,
    pub rollout_seed: u64,
    pub rollout_horizon: usize,
    pub rollout_max_attempts: usize,
}

impl Default for Config {
    fn default() -> Self {
        let p = DubinsParams::default();
        let e = EncoderConfig::default();
        let pr = ProjectorTrainConfig::default();
        let s = SolverConfig::default();
        let f = FilterTrainConfig::default();
        let c = ClassifyConfig::default();
        let r = RolloutConfig::default();
        Self {
            speed: p.v,
            dt: p.dt,
            a_max: p.a_max,
            bound: p.bound,
            horizon: p.horizon,
            episodes: 4000,
            data_seed: 0,
            heldout_episodes: 300,
            heldout_seed: 99,
            latent_dim: e.dim,
            encoder_seed: e.seed,
            encoder_input_gain: e.input_gain,
            encoder_output_gain: e.output_gain,
            constraint_headings: e.constraint_headings,
            projector_pairs: pr.pairs,
            projector_epochs: pr.epochs,
            projector_batch: pr.batch,
            projector_lr: pr.lr,
            projector_weight_decay: pr.weight_decay,
            projector_local_fraction: pr.local_fraction,
            projector_local_radius: pr.local_radius,
            projector_holdout_pairs: pr.holdout_pairs,
            projector_seed: pr.seed,
            grid_nx: 61,
            grid_ny: 61,
            grid_ntheta: 61,
            grid_actions: s.n_actions,
            grid_gamma: s.gamma,
            grid_tol: s.tol,
            grid_max_iter: s.max_iter,
            epsilon: 0.5,
            alpha: 0.005,
            calibration_pairs: 60_000,
            calibration_seed: 3,
            cache_epsilons: vec![0.3, 0.4, 0.5],
            runtime_margin: DEFAULT_RUNTIME_MARGIN,
            conditioning: f.conditioning,
            hidden: f.hidden,
            filter_steps: f.steps,
            filter_batch: f.batch,
            replay_capacity: f.replay_capacity,
            replay_warmup: f.warmup,
            critic_lr: f.critic_lr,
            actor_lr: f.actor_lr,
            filter_weight_decay: f.weight_decay,
            tau: f.tau,
            exploration_noise: f.noise_std,
            gamma_start: f.gamma_start,
            gamma_end: f.gamma_end,
            gamma_anneal_fraction: f.anneal_fraction,
            max_episode_steps: f.max_episode_steps,
            parallel_sessions: f.parallel_sessions,
            transitions_per_update: f.transitions_per_update,
            prototypes: f.prototypes,
            filter_seed: f.seed,
            log_every: f.log_every,
            eval_constraints: c.n_constraints,
            eval_seed: c.seed,
            eval_band_cells: c.band_cells,
            eval_lattice: 41,
            rollouts: r.n,
            rollout_seed: r.seed,
            rollout_horizon: r.horizon,
            rollout_max_attempts: r.max_attempts,
        }
    }
}

impl Config {
    pub fn from_text(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn params(&self) -> DubinsParams {
        DubinsParams {
            v: self.speed,
            dt: self.dt,
            a_max: self.a_max,
            bound: self.bound,
            horizon: self.horizon,
        }
    }

    pub fn encoder(&self) -> EncoderConfig {
        EncoderConfig {
            dim: self.latent_dim,
            seed: self.encoder_seed,
            input_gain: self.encoder_input_gain,
            output_gain: self.encoder_output_gain,
            bound: self.bound,
            constraint_headings: self.constraint_headings,
        }
    }

    pub fn projector(&self) -> ProjectorTrainConfig {
        ProjectorTrainConfig {
            pairs: self.projector_pairs,
            epochs: self.projector_epochs,
            batch: self.projector_batch,
            lr: self.projector_lr,
            weight_decay: self.projector_weight_decay,
            local_fraction: self.projector_local_fraction,
            local_radius: self.projector_local_radius,
            holdout_pairs: self.projector_holdout_pairs,
            seed: self.projector_seed,
        }
    }

    pub fn grid_spec(&self) -> GridSpec {
        GridSpec {
            nx: self.grid_nx,
            ny: self.grid_ny,
            ntheta: self.grid_ntheta,
            ..GridSpec::cube(self.grid_nx, self.bound)
        }
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            gamma: self.grid_gamma,
            tol: self.grid_tol,
            max_iter: self.grid_max_iter,
            n_actions: self.grid_actions,
        }
    }

    pub fn filter(&self) -> FilterTrainConfig {
        FilterTrainConfig {
            conditioning: self.conditioning,
            hidden: self.hidden.clone(),
            steps: self.filter_steps,
            batch: self.filter_batch,
            replay_capacity: self.replay_capacity,
            warmup: self.replay_warmup,
            critic_lr: self.critic_lr,
            actor_lr: self.actor_lr,
            weight_decay: self.filter_weight_decay,
            tau: self.tau,
            noise_std: self.exploration_noise,
            gamma_start: self.gamma_start,
            gamma_end: self.gamma_end,
            anneal_fraction: self.gamma_anneal_fraction,
            max_episode_steps: self.max_episode_steps,
            parallel_sessions: self.parallel_sessions,
            transitions_per_update: self.transitions_per_update,
            prototypes: self.prototypes,
            seed: self.filter_seed,
            log_every: self.log_every,
        }
    }

    pub fn classify(&self) -> ClassifyConfig {
        ClassifyConfig {
            n_constraints: self.eval_constraints,
            seed: self.eval_seed,
            band_cells: self.eval_band_cells,
            lattice: (self.eval_lattice > 0).then(|| GridSpec::cube(self.eval_lattice, self.bound)),
        }
    }

    pub fn rollout(&self) -> RolloutConfig {
        RolloutConfig {
            n: self.rollouts,
            seed: self.rollout_seed,
            horizon: self.rollout_horizon,
            max_attempts: self.rollout_max_attempts,
        }
    }
}
