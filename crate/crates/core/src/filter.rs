//! Runtime switching law: peek one step under the task action, keep it if the
//! learned value there clears the calibrated threshold, otherwise fall back.

use serde::{Deserialize, Serialize};

use crate::conformal::Threshold;
use crate::error::{Error, Result};
use crate::hj_rl::FilterNets;
use crate::latent::{LatentSession, LatentVec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterDecision {
    /// rad/s
    pub action: f64,
    pub intervened: bool,
    /// `V(z′; z_c)` after the task action.
    pub value: f64,
    /// `δ + runtime margin`.
    pub threshold: f64,
    pub constraint_id: u64,
}

fn check_provenance(nets: &FilterNets, t: &Threshold) -> Result<()> {
    let ours = nets.projector_checksum();
    if ours != t.projector_checksum {
        return Err(Error::ProvenanceMismatch {
            filter: ours,
            threshold: t.projector_checksum.clone(),
        });
    }
    Ok(())
}

/// Decides the action to execute without touching `session`.
///
/// Ties intervene: the task action passes only if `V(z′) > δ + margin`.
pub fn filter_action(
    session: &LatentSession,
    nets: &FilterNets,
    z_c: &LatentVec,
    t: &Threshold,
    a_task: f64,
    constraint_id: u64,
) -> Result<FilterDecision> {
    let a_max = session.params().a_max;
    if !(a_task.abs() <= a_max) {
        return Err(Error::ActionOutOfRange { action: a_task, a_max });
    }
    check_provenance(nets, t)?;
    let threshold = t.effective();
    if t.is_sentinel() {
        log::warn!("threshold is the +inf sentinel; every step falls back");
    }
    let z_next = session.peek(a_task)?;
    let value = nets.value(&z_next, z_c)?;
    let intervened = !(value > threshold);
    let action = if intervened {
        nets.fallback_action(&session.latent(), z_c)?
    } else {
        a_task
    };
    Ok(FilterDecision {
        action,
        intervened,
        value,
        threshold,
        constraint_id,
    })
}

/// Filters and then executes the decided action on the live session.
pub fn filtered_step(
    session: &mut LatentSession,
    nets: &FilterNets,
    z_c: &LatentVec,
    t: &Threshold,
    a_task: f64,
    constraint_id: u64,
) -> Result<FilterDecision> {
    let d = filter_action(session, nets, z_c, t, a_task, constraint_id)?;
    session.step(d.action)?;
    Ok(d)
}

/// Current-state value, for display.
pub fn monitor(session: &LatentSession, nets: &FilterNets, z_c: &LatentVec) -> Result<f64> {
    nets.value(&session.latent(), z_c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hj_rl::{Conditioning, GammaSchedule, Standardizer};
    use crate::latent::{Encoder, EncoderConfig, SimilarityModel};
    use crate::sim::{DubinsParams, PrivilegedState};
    use std::sync::Arc;

    fn setup() -> (LatentSession, FilterNets, LatentVec) {
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
        let z_c = enc.encode_constraint(0.5, 0.5);
        let sess = LatentSession::new(enc, DubinsParams::default(), PrivilegedState::new(-0.5, 0.2, 0.3));
        (sess, nets, z_c)
    }

    fn threshold_at(delta: f64, margin: f64) -> Threshold {
        Threshold {
            delta,
            alpha: 0.1,
            epsilon: 0.5,
            n_positive: 100,
            runtime_margin: margin,
            projector_checksum: "raw".into(),
        }
    }

    #[test]
    fn boundary_is_strict() {
        let (sess, nets, z_c) = setup();
        let v = nets.value(&sess.peek(0.4).unwrap(), &z_c).unwrap();
        let pass = filter_action(&sess, &nets, &z_c, &threshold_at(v - 0.2, 0.1), 0.4, 0).unwrap();
        assert!(!pass.intervened);
        assert_eq!(pass.action, 0.4);
        let tie = filter_action(&sess, &nets, &z_c, &threshold_at(v, 0.0), 0.4, 0).unwrap();
        assert!(tie.intervened);
        assert_eq!(tie.action, nets.fallback_action(&sess.latent(), &z_c).unwrap());
    }

    #[test]
    fn sentinel_always_falls_back() {
        let (sess, nets, z_c) = setup();
        let d = filter_action(&sess, &nets, &z_c, &threshold_at(f64::INFINITY, 0.1), 0.0, 0).unwrap();
        assert!(d.intervened);
    }

    #[test]
    fn rejects_foreign_threshold_and_bad_action() {
        let (sess, nets, z_c) = setup();
        let mut t = threshold_at(0.0, 0.1);
        t.projector_checksum = "0123456789abcdef".into();
        assert!(matches!(
            filter_action(&sess, &nets, &z_c, &t, 0.0, 0),
            Err(Error::ProvenanceMismatch { .. })
        ));
        assert!(filter_action(&sess, &nets, &z_c, &threshold_at(0.0, 0.1), 2.0, 0).is_err());
    }

    #[test]
    fn filtering_never_moves_the_live_session() {
        let (sess, nets, z_c) = setup();
        let before = sess.branch().privileged_state();
        filter_action(&sess, &nets, &z_c, &threshold_at(10.0, 0.1), 1.0, 0).unwrap();
        assert_eq!(sess.branch().privileged_state(), before);
        assert_eq!(monitor(&sess, &nets, &z_c).unwrap(), monitor(&sess, &nets, &z_c).unwrap());
        assert_eq!(sess.privileged_reads(), 0);
    }
}
