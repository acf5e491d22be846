//! Constraint-conditioned safety value and fallback policy, learned with DDPG
//! on the discounted min-over-time backup inside oracle sessions.

mod checkpoint;
mod nets;
mod prototypes;
mod replay;
mod train;

pub use checkpoint::{read_filter, write_filter};
pub use nets::{FilterNets, Standardizer};
pub use prototypes::{fit_prototypes, PrototypeSet};
pub use replay::{ReplayBatch, ReplayBuffer};
pub use train::{train_filter, FilterTrainConfig, LossRecord, TrainingLog};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Which representations the critic and actor see.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Conditioning {
    /// Raw latent state, raw constraint latent.
    Zz,
    /// Raw latent state, nearest K-means prototype of the constraint latent.
    Zp,
    /// Raw latent state, projected constraint.
    Zzt,
    /// Projected state, projected constraint.
    Ztzt,
}

impl Conditioning {
    pub const ALL: [Conditioning; 4] = [Conditioning::Zz, Conditioning::Zp, Conditioning::Zzt, Conditioning::Ztzt];

    pub fn tag(self) -> u8 {
        match self {
            Conditioning::Zz => 0,
            Conditioning::Zp => 1,
            Conditioning::Zzt => 2,
            Conditioning::Ztzt => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.tag() == tag)
    }

    pub fn projects_state(self) -> bool {
        self == Conditioning::Ztzt
    }

    pub fn projects_constraint(self) -> bool {
        matches!(self, Conditioning::Zzt | Conditioning::Ztzt)
    }

    pub fn label(self) -> &'static str {
        match self {
            Conditioning::Zz => "ZZ",
            Conditioning::Zp => "ZP",
            Conditioning::Zzt => "ZZt",
            Conditioning::Ztzt => "ZtZt",
        }
    }
}

impl fmt::Display for Conditioning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Conditioning {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "zz" => Ok(Conditioning::Zz),
            "zp" => Ok(Conditioning::Zp),
            "zzt" => Ok(Conditioning::Zzt),
            "ztzt" => Ok(Conditioning::Ztzt),
            other => Err(Error::InvalidParameter(format!("unknown conditioning strategy {other:?}"))),
        }
    }
}

/// Safety backup target `(1−γ)ℓ + γ·min(ℓ, q_next)`.
pub fn critic_target(margin: f64, gamma: f64, q_next: f64) -> f64 {
    debug_assert!((0.0..1.0).contains(&gamma));
    (1.0 - gamma) * margin + gamma * margin.min(q_next)
}

/// Linear discount annealing that holds at `end` after `anneal_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaSchedule {
    pub start: f64,
    pub end: f64,
    pub anneal_steps: u64,
}

impl GammaSchedule {
    pub fn at(&self, step: u64) -> f64 {
        if self.anneal_steps == 0 || step >= self.anneal_steps {
            return self.end;
        }
        self.start + (self.end - self.start) * step as f64 / self.anneal_steps as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn target_examples() {
        assert_eq!(critic_target(0.3, 0.0, -0.9), 0.3);
        assert!((critic_target(0.5, 0.9, 0.2) - 0.23).abs() < 1e-15);
    }

    #[test]
    fn schedule_endpoints() {
        let g = GammaSchedule {
            start: 0.85,
            end: 0.9999,
            anneal_steps: 800,
        };
        assert_eq!(g.at(0), 0.85);
        assert_eq!(g.at(800), 0.9999);
        assert_eq!(g.at(1000), 0.9999);
        assert!((g.at(400) - (0.85 + 0.9999) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn strategy_names_round_trip() {
        for c in Conditioning::ALL {
            assert_eq!(c.label().parse::<Conditioning>().unwrap(), c);
            assert_eq!(Conditioning::from_tag(c.tag()), Some(c));
        }
        assert!("zq".parse::<Conditioning>().is_err());
    }

    proptest! {
        #[test]
        fn target_bounded_by_margin(l in -1.0f64..1.0, g in 0.0f64..0.9999, q in -2.0f64..2.0) {
            prop_assert!(critic_target(l, g, q) <= l + 1e-15);
        }

        #[test]
        fn target_monotone(l in -1.0f64..1.0, g in 0.0f64..0.9999, q in -2.0f64..2.0,
                           dl in 0.0f64..0.5, dq in 0.0f64..0.5) {
            let y = critic_target(l, g, q);
            prop_assert!(critic_target(l, g, q + dq) >= y);
            prop_assert!(critic_target(l + dl, g, q) >= y);
        }
    }
}
