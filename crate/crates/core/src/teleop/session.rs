use std::collections::VecDeque;
use std::f64::consts::PI;
use std::sync::Arc;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::protocol::{ClientMessage, HeatmapMessage, Point, ServerMessage, StateMessage};
use crate::conformal::{ScoreCache, Threshold, DEFAULT_RUNTIME_MARGIN};
use crate::error::{Error, Result};
use crate::filter::{filter_action, monitor};
use crate::grid::{oracle_for_constraint, ValueGrid};
use crate::hj_rl::FilterNets;
use crate::latent::{Encoder, LatentSession, LatentVec};
use crate::sim::{DubinsParams, FailureDisc, PrivilegedState};

pub const HEATMAP_CAP: u32 = 101;
pub const EVENT_LOG_CAPACITY: usize = 10_000;

/// Read-only artifacts shared by every connection.
#[derive(Debug)]
pub struct ServiceArtifacts {
    pub encoder: Arc<Encoder>,
    pub params: DubinsParams,
    pub nets: FilterNets,
    pub cache: ScoreCache,
    /// Origin solve used to pick safe starts; its ε must match the active one to be used.
    pub grid: Option<ValueGrid>,
    pub alpha: f64,
    pub epsilon: f64,
    pub runtime_margin: f64,
}

impl ServiceArtifacts {
    pub fn new(encoder: Arc<Encoder>, params: DubinsParams, nets: FilterNets, cache: ScoreCache) -> Self {
        Self {
            encoder,
            params,
            nets,
            cache,
            grid: None,
            alpha: 0.005,
            epsilon: 0.5,
            runtime_margin: DEFAULT_RUNTIME_MARGIN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub tick: u64,
    pub requested: f64,
    pub executed: f64,
    pub intervened: bool,
    pub value: f64,
}

/// One client's sandbox: a hidden simulator seen through latents, the active
/// constraint and threshold, and a bounded decision log.
#[derive(Debug)]
pub struct TeleopSession {
    shared: Arc<ServiceArtifacts>,
    session: LatentSession,
    constraint: Point,
    z_c: LatentVec,
    constraint_id: u64,
    alpha: f64,
    epsilon: f64,
    threshold: Threshold,
    tick: u64,
    log: VecDeque<EventRecord>,
    filter_privileged_reads: u64,
}

impl TeleopSession {
    /// Starts at the origin constraint with the service defaults for α and ε.
    pub fn new(shared: Arc<ServiceArtifacts>) -> Result<Self> {
        let threshold = shared.cache.threshold(shared.epsilon, shared.alpha, shared.runtime_margin)?;
        let z_c = shared.encoder.encode_constraint(0.0, 0.0);
        let session = LatentSession::new(
            Arc::clone(&shared.encoder),
            shared.params,
            PrivilegedState::new(-1.0, -1.0, PI / 4.0),
        );
        Ok(Self {
            alpha: shared.alpha,
            epsilon: shared.epsilon,
            shared,
            session,
            constraint: Point { x: 0.0, y: 0.0 },
            z_c,
            constraint_id: 0,
            threshold,
            tick: 0,
            log: VecDeque::new(),
            filter_privileged_reads: 0,
        })
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn threshold(&self) -> &Threshold {
        &self.threshold
    }

    pub fn events(&self) -> &VecDeque<EventRecord> {
        &self.log
    }

    /// Privileged reads made while filtering; stays zero by construction.
    pub fn filter_privileged_reads(&self) -> u64 {
        self.filter_privileged_reads
    }

    pub fn handle(&mut self, msg: ClientMessage) -> ServerMessage {
        let out = match msg {
            ClientMessage::Reset { seed, start } => self.handle_reset(seed, start).map(ServerMessage::State),
            ClientMessage::SetConstraint { x, y } => self.handle_set_constraint(x, y),
            ClientMessage::Action { omega } => self.handle_action(omega).map(ServerMessage::State),
            ClientMessage::SetAlpha { alpha } => self.handle_set_alpha(alpha),
            ClientMessage::SetEpsilon { epsilon } => self.handle_set_epsilon(epsilon),
            ClientMessage::Heatmap { theta, resolution } => {
                self.handle_heatmap(theta, resolution).map(ServerMessage::Heatmap)
            }
        };
        out.unwrap_or_else(|e| ServerMessage::error(e.to_string()))
    }

    /// Parses one NDJSON line and returns the reply line.
    pub fn handle_line(&mut self, line: &str) -> String {
        match serde_json::from_str::<ClientMessage>(line) {
            Ok(msg) => self.handle(msg).to_line(),
            Err(e) => ServerMessage::error(format!("malformed message: {e}")).to_line(),
        }
    }

    fn state_message(&self, value: f64, intervened: bool, omega: f64, notice: Option<String>) -> StateMessage {
        // Pose is for rendering only; the filter path never reads it.
        let s = self.session.privileged_state();
        StateMessage {
            x: s.x,
            y: s.y,
            theta: s.theta,
            value,
            delta_effective: self.threshold.effective(),
            intervened,
            omega,
            tick: self.tick,
            constraint: self.constraint,
            delta: self.threshold.delta,
            notice,
        }
    }

    fn sample_start(&self, seed: u64) -> PrivilegedState {
        let b = self.shared.params.bound;
        let mut rng = StdRng::seed_from_u64(seed);
        let grid = self.shared.grid.as_ref().filter(|g| g.epsilon.is_some_and(|e| (e - self.epsilon).abs() <= 1e-9));
        let disc = FailureDisc {
            cx: self.constraint.x,
            cy: self.constraint.y,
            radius: self.epsilon,
        };
        // Without an oracle, keep two turning radii of clearance from the disc.
        let clearance = self.epsilon + 2.0 * self.shared.params.turn_radius();
        let mut best = (PrivilegedState::new(0.0, 0.0, 0.0), f64::NEG_INFINITY);
        for _ in 0..10_000 {
            let s = PrivilegedState::new(rng.gen_range(-b..=b), rng.gen_range(-b..=b), rng.gen_range(-PI..PI));
            let score = match grid.and_then(|g| oracle_for_constraint(g, disc).ok()) {
                Some(o) if o.in_base_grid(&s) => o.value(&s),
                _ => disc.center_distance(&s) - clearance,
            };
            if score > 0.0 {
                return s;
            }
            if score > best.1 {
                best = (s, score);
            }
        }
        best.0
    }

    /// Fresh session; the constraint, α and ε carry over, the event log does not.
    pub fn handle_reset(&mut self, seed: u64, start: Option<[f64; 3]>) -> Result<StateMessage> {
        let s = match start {
            Some([x, y, theta]) => PrivilegedState::new(x, y, theta),
            None => self.sample_start(seed),
        };
        self.session = LatentSession::new(Arc::clone(&self.shared.encoder), self.shared.params, s);
        self.tick = 0;
        self.log.clear();
        let value = monitor(&self.session, &self.shared.nets, &self.z_c)?;
        // No action was filtered yet; the flag reports whether the start itself sits at or below the threshold.
        let below = !(value > self.threshold.effective());
        Ok(self.state_message(value, below, 0.0, None))
    }

    pub fn handle_set_constraint(&mut self, x: f64, y: f64) -> Result<ServerMessage> {
        let b = self.shared.params.bound;
        if !(x.abs() <= b && y.abs() <= b) {
            return Err(Error::ConstraintOutOfBounds(x, y));
        }
        self.constraint = Point { x, y };
        self.z_c = self.shared.encoder.encode_constraint(x, y);
        self.constraint_id += 1;
        Ok(ServerMessage::Ack {
            detail: format!("constraint set to ({x}, {y})"),
            delta: None,
        })
    }

    pub fn handle_action(&mut self, omega: f64) -> Result<StateMessage> {
        if !omega.is_finite() {
            return Err(Error::InvalidParameter("omega must be finite".into()));
        }
        let a_max = self.shared.params.a_max;
        let notice = (omega.abs() > a_max).then(|| format!("omega {omega} clamped to ±{a_max}"));
        let requested = omega.clamp(-a_max, a_max);
        let reads = self.session.privileged_reads();
        let d = filter_action(&self.session, &self.shared.nets, &self.z_c, &self.threshold, requested, self.constraint_id)?;
        self.filter_privileged_reads += self.session.privileged_reads() - reads;
        self.session.step(d.action)?;
        self.tick += 1;
        if self.log.len() == EVENT_LOG_CAPACITY {
            self.log.pop_front();
        }
        self.log.push_back(EventRecord {
            tick: self.tick,
            requested,
            executed: d.action,
            intervened: d.intervened,
            value: d.value,
        });
        Ok(self.state_message(d.value, d.intervened, d.action, notice))
    }

    fn retune(&mut self, alpha: f64, epsilon: f64) -> Result<ServerMessage> {
        let t = self.shared.cache.threshold(epsilon, alpha, self.shared.runtime_margin)?;
        self.alpha = alpha;
        self.epsilon = epsilon;
        self.threshold = t;
        Ok(ServerMessage::Ack {
            detail: format!("alpha {alpha}, epsilon {epsilon}"),
            delta: Some(self.threshold.delta),
        })
    }

    pub fn handle_set_alpha(&mut self, alpha: f64) -> Result<ServerMessage> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("alpha {alpha} outside (0, 1)")));
        }
        self.retune(alpha, self.epsilon)
    }

    pub fn handle_set_epsilon(&mut self, epsilon: f64) -> Result<ServerMessage> {
        self.retune(self.alpha, epsilon)
    }

    pub fn handle_heatmap(&self, theta: f64, resolution: u32) -> Result<HeatmapMessage> {
        if resolution > HEATMAP_CAP {
            return Err(Error::ResolutionCap(resolution, HEATMAP_CAP));
        }
        if resolution == 0 || !theta.is_finite() {
            return Err(Error::InvalidParameter("resolution must be positive and theta finite".into()));
        }
        let n = resolution as usize;
        let b = self.shared.params.bound;
        let h = 2.0 * b / n as f64;
        let states: Vec<PrivilegedState> = (0..n * n)
            .map(|k| {
                let (j, i) = (k / n, k % n);
                PrivilegedState::new(-b + (i as f64 + 0.5) * h, -b + (j as f64 + 0.5) * h, theta)
            })
            .collect();
        let z = self.shared.encoder.encode_batch(&states);
        let values = self.shared.nets.values(z.view(), &self.z_c)?;
        Ok(HeatmapMessage {
            theta,
            resolution,
            values: values.into_iter().map(f64::from).collect(),
            delta: self.threshold.effective(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::build_calibration_set;
    use crate::hj_rl::{Conditioning, GammaSchedule, Standardizer};
    use crate::latent::{EncoderConfig, SimilarityModel};

    fn shared() -> Arc<ServiceArtifacts> {
        let enc = Arc::new(Encoder::new(EncoderConfig::default()));
        let nets = FilterNets::new(
            Conditioning::Zz,
            SimilarityModel::Raw,
            None,
            Standardizer::identity(16),
            Standardizer::identity(16),
            &[16],
            1.25,
            GammaSchedule {
                start: 0.85,
                end: 0.9999,
                anneal_steps: 1,
            },
            4,
        )
        .unwrap();
        let mut rng = StdRng::seed_from_u64(0);
        let states: Vec<PrivilegedState> = (0..3000)
            .map(|_| PrivilegedState::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5), rng.gen_range(-PI..PI)))
            .collect();
        let pairs = build_calibration_set(&states, &enc, 20_000, 0.5, 1).unwrap();
        let cache = ScoreCache::build(&pairs, &SimilarityModel::Raw, &[0.3, 0.4, 0.5]).unwrap();
        Arc::new(ServiceArtifacts::new(enc, DubinsParams::default(), nets, cache))
    }

    fn state(m: ServerMessage) -> StateMessage {
        match m {
            ServerMessage::State(s) => s,
            other => panic!("expected state, got {other:?}"),
        }
    }

    fn ack_delta(m: ServerMessage) -> f64 {
        match m {
            ServerMessage::Ack { delta: Some(d), .. } => d,
            other => panic!("expected ack with delta, got {other:?}"),
        }
    }

    #[test]
    fn reset_keeps_constraint_and_clears_the_log() {
        let mut s = TeleopSession::new(shared()).unwrap();
        s.handle(ClientMessage::SetConstraint { x: 0.7, y: -0.2 });
        for _ in 0..5 {
            state(s.handle(ClientMessage::Action { omega: 0.3 }));
        }
        assert_eq!((s.tick(), s.events().len()), (5, 5));
        let r = state(s.handle(ClientMessage::Reset {
            seed: 3,
            start: Some([-1.0, 1.0, 0.0]),
        }));
        assert_eq!((r.tick, r.x, r.y), (0, -1.0, 1.0));
        assert_eq!(r.constraint, Point { x: 0.7, y: -0.2 });
        assert!(s.events().is_empty());
        assert_eq!(s.filter_privileged_reads(), 0);
    }

    #[test]
    fn latest_constraint_wins_and_bounds_are_enforced() {
        let mut s = TeleopSession::new(shared()).unwrap();
        s.handle(ClientMessage::SetConstraint { x: 0.1, y: 0.1 });
        s.handle(ClientMessage::SetConstraint { x: -0.4, y: 0.9 });
        let bad = s.handle(ClientMessage::SetConstraint { x: 2.0, y: 0.0 });
        assert!(matches!(bad, ServerMessage::Error { .. }));
        let st = state(s.handle(ClientMessage::Action { omega: 0.0 }));
        assert_eq!(st.constraint, Point { x: -0.4, y: 0.9 });
    }

    #[test]
    fn heatmap_limits_and_single_cell() {
        let sh = shared();
        let s = TeleopSession::new(Arc::clone(&sh)).unwrap();
        assert!(matches!(s.handle_heatmap(0.0, HEATMAP_CAP + 1), Err(Error::ResolutionCap(102, 101))));
        assert!(s.handle_heatmap(0.0, 0).is_err());
        let one = s.handle_heatmap(0.4, 1).unwrap();
        let z = sh.encoder.encode(&PrivilegedState::new(0.0, 0.0, 0.4));
        let want = sh.nets.value(&z, &sh.encoder.encode_constraint(0.0, 0.0)).unwrap();
        assert_eq!(one.values, vec![want]);
        assert_eq!(s.handle_heatmap(0.0, 5).unwrap().values.len(), 25);
    }

    #[test]
    fn lowering_alpha_never_lowers_delta() {
        let mut s = TeleopSession::new(shared()).unwrap();
        let mut last = f64::NEG_INFINITY;
        for alpha in [0.3, 0.1, 0.05, 0.01, 0.005] {
            let d = ack_delta(s.handle(ClientMessage::SetAlpha { alpha }));
            assert!(d >= last, "alpha {alpha}: {d} < {last}");
            last = d;
        }
        assert!(matches!(s.handle(ClientMessage::SetAlpha { alpha: 0.0 }), ServerMessage::Error { .. }));
    }

    #[test]
    fn epsilon_swaps_use_the_cache() {
        let sh = shared();
        let mut s = TeleopSession::new(Arc::clone(&sh)).unwrap();
        let d = ack_delta(s.handle(ClientMessage::SetEpsilon { epsilon: 0.3 }));
        assert_eq!(d, sh.cache.threshold(0.3, sh.alpha, sh.runtime_margin).unwrap().delta);
        let missing = s.handle(ClientMessage::SetEpsilon { epsilon: 0.35 });
        assert!(matches!(missing, ServerMessage::Error { .. }));
        assert_eq!(s.threshold().epsilon, 0.3);
    }

    #[test]
    fn oversized_actions_are_clamped_with_a_notice() {
        let mut s = TeleopSession::new(shared()).unwrap();
        let st = state(s.handle(ClientMessage::Action { omega: 9.0 }));
        assert!(st.notice.is_some());
        assert_eq!(s.events()[0].requested, 1.25);
        assert!(st.omega.abs() <= 1.25);
        assert!(s.handle_line("{\"type\":\"action\"}").contains("malformed"));
        assert!(s.handle_line("not json").starts_with("{\"type\":\"error\""));
    }
}
