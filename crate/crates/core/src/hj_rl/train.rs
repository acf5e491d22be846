use std::sync::Arc;

use ndarray::{s, Array1, Array2, Axis};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::nets::{actor_input, critic_input};
use super::{fit_prototypes, Conditioning, FilterNets, GammaSchedule, ReplayBuffer, Standardizer};
use crate::error::{Error, Result};
use crate::latent::{Encoder, LatentSession, SimilarityModel};
use crate::nn::{cosine_rows, AdamWConfig, OptimState};
use crate::sim::{flatten_states, DubinsParams, PrivilegedState, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterTrainConfig {
    pub conditioning: Conditioning,
    pub hidden: Vec<usize>,
    /// Gradient updates.
    pub steps: u64,
    pub batch: usize,
    pub replay_capacity: usize,
    /// Transitions collected with uniform random actions before the first update.
    pub warmup: usize,
    pub critic_lr: f64,
    pub actor_lr: f64,
    pub weight_decay: f64,
    /// Polyak rate for the target networks.
    pub tau: f64,
    /// Std of the Gaussian noise added to normalized actions during rollouts.
    pub noise_std: f64,
    pub gamma_start: f64,
    pub gamma_end: f64,
    /// Share of `steps` over which the discount is annealed.
    pub anneal_fraction: f64,
    pub max_episode_steps: usize,
    /// Sessions rolled in lockstep; transitions are inserted in session order.
    pub parallel_sessions: usize,
    pub transitions_per_update: usize,
    pub prototypes: usize,
    pub seed: u64,
    pub log_every: u64,
}

impl Default for FilterTrainConfig {
    fn default() -> Self {
        Self {
            conditioning: Conditioning::Zz,
            hidden: vec![256, 256, 256],
            steps: 10_000,
            batch: 256,
            replay_capacity: 200_000,
            warmup: 5_000,
            critic_lr: 1e-3,
            actor_lr: 1e-4,
            weight_decay: 1e-4,
            tau: 0.005,
            noise_std: 0.2,
            gamma_start: 0.85,
            gamma_end: 0.9999,
            anneal_fraction: 0.8,
            max_episode_steps: 30,
            parallel_sessions: 16,
            transitions_per_update: 1,
            prototypes: 9,
            seed: 0,
            log_every: 1_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: u64,
    pub gamma: f64,
    /// Mean critic MSE over the logging window.
    pub critic_loss: f64,
    /// Mean `Q(s, π(s))` over the window; the actor maximizes it.
    pub actor_q: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub records: Vec<LossRecord>,
    pub transitions: u64,
    pub episodes: u64,
    pub seconds: f64,
}

struct Slot {
    session: LatentSession,
    cond: Vec<f32>,
    /// Embedding of the constraint that margins are measured against.
    target: Vec<f32>,
    t: usize,
}

struct Rollouts<'a> {
    states: &'a [PrivilegedState],
    encoder: Arc<Encoder>,
    params: DubinsParams,
    max_steps: usize,
    slots: Vec<Slot>,
    episodes: u64,
}

impl Rollouts<'_> {
    fn fresh_slot(&mut self, nets: &FilterNets, rng: &mut StdRng) -> Result<Slot> {
        let start = self.states[rng.gen_range(0..self.states.len())];
        let (cx, cy) = self.states[rng.gen_range(0..self.states.len())].position();
        let z_c = self.encoder.encode_constraint(cx, cy);
        self.episodes += 1;
        Ok(Slot {
            session: LatentSession::new(Arc::clone(&self.encoder), self.params, start),
            cond: nets.condition(&z_c)?,
            target: nets.similarity().embed(&z_c),
            t: 0,
        })
    }

    fn latents(&self) -> Array2<f32> {
        let d = self.encoder.dim();
        let mut z = Array2::zeros((self.slots.len(), d));
        for (mut row, slot) in z.rows_mut().into_iter().zip(&self.slots) {
            row.as_slice_mut().expect("standard layout").copy_from_slice(&slot.session.latent().0);
        }
        z
    }

    /// Steps every session once and pushes its transition.
    fn tick(
        &mut self,
        nets: &FilterNets,
        replay: &mut ReplayBuffer,
        explore: bool,
        noise: &Normal<f64>,
        rng: &mut StdRng,
    ) -> Result<()> {
        let n = self.slots.len();
        let z = self.latents();
        let s_in = nets.state_inputs(z.view())?;
        let conds = Array2::from_shape_fn((n, nets.cond_dim()), |(i, j)| self.slots[i].cond[j]);
        let targets = Array2::from_shape_fn((n, self.slots[0].target.len()), |(i, j)| self.slots[i].target[j]);
        let margins = cosine_rows(nets.similarity().embed_batch(z.view())?.view(), targets.view())
            .mapv(|v| (-v).clamp(-1.0, 1.0));
        let actions: Vec<f32> = if explore {
            let a = nets.actor.predict(actor_input(s_in.view(), conds.view()).view())?;
            a.iter()
                .map(|&v| (v as f64 + noise.sample(rng)).clamp(-1.0, 1.0) as f32)
                .collect()
        } else {
            (0..n).map(|_| rng.gen_range(-1.0f32..=1.0)).collect()
        };
        let a_max = self.params.a_max;
        let mut next = Array2::zeros(z.raw_dim());
        for (i, slot) in self.slots.iter_mut().enumerate() {
            let z_next = slot.session.step(actions[i] as f64 * a_max)?;
            next.row_mut(i).assign(&Array1::from(z_next.0));
        }
        let s_next = nets.state_inputs(next.view())?;
        for i in 0..n {
            replay.push(
                s_in.row(i).as_slice().expect("standard layout"),
                conds.row(i).as_slice().expect("standard layout"),
                actions[i],
                margins[i],
                s_next.row(i).as_slice().expect("standard layout"),
            );
        }
        for i in 0..n {
            self.slots[i].t += 1;
            // Leaving the box ends the episode; the step is still bootstrapped
            // since the backup has no terminal states.
            let out = !self.slots[i].session.privileged_state().in_bounds(self.params.bound);
            if out || self.slots[i].t >= self.max_steps {
                self.slots[i] = self.fresh_slot(nets, rng)?;
            }
        }
        Ok(())
    }
}

fn row_subsample<T: Copy>(items: &[T], n: usize, rng: &mut StdRng) -> Vec<T> {
    if items.len() <= n {
        return items.to_vec();
    }
    (0..n).map(|_| items[rng.gen_range(0..items.len())]).collect()
}

/// Input scalers and (for ZP) prototypes, fitted on dataset states.
fn prepare(
    states: &[PrivilegedState],
    encoder: &Encoder,
    similarity: &SimilarityModel,
    cfg: &FilterTrainConfig,
    rng: &mut StdRng,
) -> Result<(Option<super::PrototypeSet>, Standardizer, Standardizer)> {
    let picks = row_subsample(states, 20_000, rng);
    let z = encoder.encode_batch(&picks);
    let constraints: Vec<PrivilegedState> =
        picks.iter().map(|s| PrivilegedState::new(s.x, s.y, 0.0)).collect();
    let zc = encoder.encode_batch(&constraints);

    let s_raw = if cfg.conditioning.projects_state() {
        similarity.embed_batch(z.view())?
    } else {
        z
    };
    let prototypes = if cfg.conditioning == Conditioning::Zp {
        Some(fit_prototypes(zc.view(), cfg.prototypes, cfg.seed ^ 0x9e37, 300)?)
    } else {
        None
    };
    let c_raw = match cfg.conditioning {
        Conditioning::Zz => zc,
        Conditioning::Zp => {
            let p = prototypes.as_ref().expect("fitted above");
            let mut out = zc.clone();
            for mut row in out.rows_mut() {
                let c = p.nearest(row.as_slice().expect("standard layout")).1;
                row.assign(&Array1::from(c));
            }
            out
        }
        Conditioning::Zzt | Conditioning::Ztzt => similarity.embed_batch(zc.view())?,
    };
    Ok((prototypes, Standardizer::fit(s_raw.view()), Standardizer::fit(c_raw.view())))
}

/// DDPG on the safety backup. Start states and constraint positions are drawn
/// uniformly from the dataset; constraints are encoded with heading 0.
pub fn train_filter(
    data: &[Trajectory],
    encoder: Arc<Encoder>,
    params: DubinsParams,
    similarity: SimilarityModel,
    cfg: &FilterTrainConfig,
) -> Result<(FilterNets, TrainingLog)> {
    let clock = std::time::Instant::now();
    params.validate()?;
    let states = flatten_states(data);
    if states.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let warmup = cfg.warmup.max(cfg.batch);
    if warmup > cfg.replay_capacity {
        return Err(Error::ReplayWarmup {
            have: cfg.replay_capacity,
            need: warmup,
        });
    }
    if cfg.parallel_sessions == 0 || cfg.transitions_per_update == 0 || cfg.max_episode_steps == 0 {
        return Err(Error::InvalidParameter("session count, episode length and update ratio must be positive".into()));
    }
    // Fails early for Z̃ strategies without a projector.
    FilterNets::input_dims(cfg.conditioning, &similarity, encoder.dim())?;

    let mut rng = StdRng::seed_from_u64(cfg.seed);
    let (prototypes, state_scale, cond_scale) = prepare(&states, &encoder, &similarity, cfg, &mut rng)?;
    let gamma = GammaSchedule {
        start: cfg.gamma_start,
        end: cfg.gamma_end,
        anneal_steps: (cfg.steps as f64 * cfg.anneal_fraction).round() as u64,
    };
    let mut nets = FilterNets::new(
        cfg.conditioning,
        similarity,
        prototypes,
        state_scale,
        cond_scale,
        &cfg.hidden,
        params.a_max,
        gamma,
        rng.gen(),
    )?;
    let mut critic_opt = OptimState::new(&nets.critic, AdamWConfig {
        lr: cfg.critic_lr,
        weight_decay: cfg.weight_decay,
        ..AdamWConfig::default()
    });
    let mut actor_opt = OptimState::new(&nets.actor, AdamWConfig {
        lr: cfg.actor_lr,
        weight_decay: cfg.weight_decay,
        ..AdamWConfig::default()
    });
    let noise = Normal::new(0.0, cfg.noise_std).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut replay = ReplayBuffer::new(cfg.replay_capacity, nets.state_dim(), nets.cond_dim());
    let mut log = TrainingLog::default();
    let mut roll = Rollouts {
        states: &states,
        encoder: Arc::clone(&encoder),
        params,
        max_steps: cfg.max_episode_steps,
        slots: Vec::with_capacity(cfg.parallel_sessions),
        episodes: 0,
    };
    for _ in 0..cfg.parallel_sessions {
        let slot = roll.fresh_slot(&nets, &mut rng)?;
        roll.slots.push(slot);
    }

    let mut window = (0.0f64, 0.0f64, 0u64);
    for update in 0..cfg.steps {
        let needed = warmup + (update as usize + 1) * cfg.transitions_per_update;
        while (log.transitions as usize) < needed {
            let explore = log.transitions as usize >= warmup;
            roll.tick(&nets, &mut replay, explore, &noise, &mut rng)?;
            log.transitions += cfg.parallel_sessions as u64;
        }
        let g = nets.gamma.at(update);
        let (critic_loss, actor_q) = update_step(&mut nets, &mut critic_opt, &mut actor_opt, &replay, g, cfg, &mut rng)?;
        window.0 += critic_loss;
        window.1 += actor_q;
        window.2 += 1;
        if (update + 1) % cfg.log_every.max(1) == 0 || update + 1 == cfg.steps {
            log.records.push(LossRecord {
                step: update + 1,
                gamma: g,
                critic_loss: window.0 / window.2 as f64,
                actor_q: window.1 / window.2 as f64,
            });
            log::debug!("update {} gamma {g:.5} critic {:.3e}", update + 1, window.0 / window.2 as f64);
            window = (0.0, 0.0, 0);
        }
    }
    nets.steps_trained = cfg.steps;
    log.episodes = roll.episodes;
    log.seconds = clock.elapsed().as_secs_f64();
    Ok((nets, log))
}

/// One critic step toward the backup target, one actor step, then Polyak.
fn update_step(
    nets: &mut FilterNets,
    critic_opt: &mut OptimState<f32>,
    actor_opt: &mut OptimState<f32>,
    replay: &ReplayBuffer,
    gamma: f64,
    cfg: &FilterTrainConfig,
    rng: &mut StdRng,
) -> Result<(f64, f64)> {
    let b = replay.sample(cfg.batch, rng);
    let n = b.s.nrows();
    let inv_n = 1.0 / n as f32;
    let s_dim = b.s.ncols();

    let a_next = nets.target_actor.predict(actor_input(b.s_next.view(), b.c.view()).view())?;
    let q_next = nets.target_critic.predict(critic_input(b.s_next.view(), a_next.view(), b.c.view()).view())?;
    let y: Vec<f32> = b
        .margin
        .iter()
        .zip(q_next.iter())
        .map(|(&l, &q)| super::critic_target(l as f64, gamma, q as f64) as f32)
        .collect();

    let (q, cache) = nets.critic.forward(critic_input(b.s.view(), b.a.view(), b.c.view()).view())?;
    let mut loss = 0.0f64;
    let grad = Array2::from_shape_fn((n, 1), |(i, _)| {
        let e = q[[i, 0]] - y[i];
        loss += (e as f64) * (e as f64);
        2.0 * e * inv_n
    });
    let (grads, _) = nets.critic.backward(&cache, grad.view())?;
    critic_opt.step(&mut nets.critic, &grads)?;

    let (a_pi, actor_cache) = nets.actor.forward(actor_input(b.s.view(), b.c.view()).view())?;
    let (q_pi, critic_cache) = nets.critic.forward(critic_input(b.s.view(), a_pi.view(), b.c.view()).view())?;
    let upstream = Array2::from_elem((n, 1), -inv_n);
    let dx = nets.critic.backward_input(&critic_cache, upstream.view())?;
    let da = dx.slice(s![.., s_dim..s_dim + 1]).to_owned();
    let (actor_grads, _) = nets.actor.backward(&actor_cache, da.view())?;
    actor_opt.step(&mut nets.actor, &actor_grads)?;

    let tau = cfg.tau as f32;
    nets.target_critic.soft_update_from(&nets.critic, tau)?;
    nets.target_actor.soft_update_from(&nets.actor, tau)?;
    Ok((loss / n as f64, q_pi.mean_axis(Axis(0)).map_or(0.0, |m| m[0] as f64)))
}
