//! Privileged Dubins car simulator.
//!
//! This is the only module that works with the true vehicle state. Everything
//! downstream of the encoder sees latents only, with the evaluation harness as
//! the explicitly privileged exception.
//!
//! Headings are wrapped into `[-π, π)` after every update ([`wrap_angle`]);
//! every other module reuses that convention.

use std::f64::consts::PI;
use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DATASET_MAGIC: &[u8; 4] = b"ASD1";

/// Wraps an angle into `[-π, π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut t = (theta + PI).rem_euclid(two_pi) - PI;
    // rem_euclid can round up to exactly 2π for tiny negative inputs.
    if t >= PI {
        t -= two_pi;
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivilegedState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl PrivilegedState {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn position(&self) -> (f64, f64) {
        (self.x, self.y)
    }

    pub fn in_bounds(&self, bound: f64) -> bool {
        self.x.abs() <= bound && self.y.abs() <= bound
    }

    /// Same state shifted in the plane; heading unchanged.
    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            x: self.x + dx,
            y: self.y + dy,
            theta: self.theta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DubinsParams {
    /// Longitudinal speed, m/s.
    pub v: f64,
    /// Time step, s.
    pub dt: f64,
    /// Maximum angular velocity, rad/s.
    pub a_max: f64,
    /// Half-width of the square environment, m.
    pub bound: f64,
    /// Episode length in steps.
    pub horizon: usize,
}

impl Default for DubinsParams {
    fn default() -> Self {
        Self {
            v: 1.0,
            dt: 0.05,
            a_max: 1.25,
            bound: 1.5,
            horizon: 100,
        }
    }
}

impl DubinsParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.v > 0.0 && self.dt > 0.0 && self.a_max > 0.0 && self.bound > 0.0;
        if !ok || self.horizon < 1 {
            return Err(Error::InvalidParameter(format!("{self:?}")));
        }
        Ok(())
    }

    /// Minimum turning radius `v / a_max`.
    pub fn turn_radius(&self) -> f64 {
        self.v / self.a_max
    }
}

/// One explicit Euler step of the kinematic car.
pub fn step(s: &PrivilegedState, a: f64, p: &DubinsParams) -> Result<PrivilegedState> {
    if !a.is_finite() || a.abs() > p.a_max * (1.0 + 1e-12) {
        return Err(Error::ActionOutOfRange {
            action: a,
            a_max: p.a_max,
        });
    }
    Ok(step_unchecked(s, a, p))
}

pub(crate) fn step_unchecked(s: &PrivilegedState, a: f64, p: &DubinsParams) -> PrivilegedState {
    PrivilegedState {
        x: s.x + p.dt * p.v * s.theta.cos(),
        y: s.y + p.dt * p.v * s.theta.sin(),
        theta: wrap_angle(s.theta + p.dt * a),
    }
}

/// Position similarity used as the supervision target for the failure
/// projector: `max(1 - d²/√2, -1)`.
pub fn ground_truth_similarity(p1: (f64, f64), p2: (f64, f64)) -> f64 {
    let d2 = (p1.0 - p2.0).powi(2) + (p1.1 - p2.1).powi(2);
    (1.0 - d2 / std::f64::consts::SQRT_2).max(-1.0)
}

/// Similarity value at which a pair sits exactly `distance` apart.
pub fn similarity_at_distance(distance: f64) -> f64 {
    (1.0 - distance * distance / std::f64::consts::SQRT_2).max(-1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailureDisc {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
}

impl FailureDisc {
    pub fn new(cx: f64, cy: f64, radius: f64, bound: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidParameter(format!("disc radius {radius}")));
        }
        if cx.abs() > bound || cy.abs() > bound {
            return Err(Error::ConstraintOutOfBounds(cx, cy));
        }
        Ok(Self { cx, cy, radius })
    }

    pub fn contains(&self, s: &PrivilegedState) -> bool {
        signed_distance_margin(s, self) < 0.0
    }

    pub fn center_distance(&self, s: &PrivilegedState) -> f64 {
        (s.x - self.cx).hypot(s.y - self.cy)
    }
}

/// `‖p − c‖ − ε`: negative inside the disc, zero on the rim.
pub fn signed_distance_margin(s: &PrivilegedState, f: &FailureDisc) -> f64 {
    f.center_distance(s) - f.radius
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<PrivilegedState>,
    pub actions: Vec<f64>,
    pub terminated_out_of_bounds: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Random-action episodes from uniform in-bounds starts.
///
/// The start distribution is uniform over the box with uniform heading. Each
/// episode draws from its own stream seeded with `seed + episode_index`, so
/// the output does not depend on generation order.
pub fn generate_dataset(n_episodes: usize, p: &DubinsParams, seed: u64) -> Result<Vec<Trajectory>> {
    p.validate()?;
    if n_episodes == 0 {
        return Err(Error::InvalidParameter("n_episodes must be >= 1".into()));
    }
    Ok((0..n_episodes)
        .map(|ep| generate_episode(p, seed.wrapping_add(ep as u64)))
        .collect())
}

fn generate_episode(p: &DubinsParams, seed: u64) -> Trajectory {
    let mut rng = StdRng::seed_from_u64(seed);
    let b = p.bound;
    let mut s = PrivilegedState::new(
        rng.gen_range(-b..b),
        rng.gen_range(-b..b),
        rng.gen_range(-PI..PI),
    );
    let mut states = vec![s];
    let mut actions = Vec::with_capacity(p.horizon);
    let mut out = false;
    for _ in 0..p.horizon {
        let a = rng.gen_range(-p.a_max..=p.a_max);
        s = step_unchecked(&s, a, p);
        states.push(s);
        actions.push(a);
        if !s.in_bounds(p.bound) {
            out = true;
            break;
        }
    }
    Trajectory {
        states,
        actions,
        terminated_out_of_bounds: out,
    }
}

/// All states of a dataset, flattened in episode order.
pub fn flatten_states(data: &[Trajectory]) -> Vec<PrivilegedState> {
    data.iter().flat_map(|t| t.states.iter().copied()).collect()
}

/// Writes the `ASD1` trajectory file.
pub fn write_dataset<W: Write>(mut w: W, data: &[Trajectory]) -> Result<()> {
    w.write_all(DATASET_MAGIC)?;
    w.write_u32::<LittleEndian>(data.len() as u32)?;
    for t in data {
        w.write_u32::<LittleEndian>(t.actions.len() as u32)?;
        for s in &t.states {
            w.write_f32::<LittleEndian>(s.x as f32)?;
            w.write_f32::<LittleEndian>(s.y as f32)?;
            w.write_f32::<LittleEndian>(s.theta as f32)?;
        }
        for &a in &t.actions {
            w.write_f32::<LittleEndian>(a as f32)?;
        }
        w.write_u8(t.terminated_out_of_bounds as u8)?;
    }
    Ok(())
}

pub fn read_dataset<R: Read>(mut r: R) -> Result<Vec<Trajectory>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != DATASET_MAGIC {
        return Err(Error::Format("not an ASD1 dataset".into()));
    }
    let n = r.read_u32::<LittleEndian>()? as usize;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let steps = r.read_u32::<LittleEndian>()? as usize;
        let mut states = Vec::with_capacity(steps + 1);
        for _ in 0..=steps {
            let x = r.read_f32::<LittleEndian>()? as f64;
            let y = r.read_f32::<LittleEndian>()? as f64;
            let theta = r.read_f32::<LittleEndian>()? as f64;
            states.push(PrivilegedState { x, y, theta });
        }
        let mut actions = Vec::with_capacity(steps);
        for _ in 0..steps {
            actions.push(r.read_f32::<LittleEndian>()? as f64);
        }
        let flag = r.read_u8()?;
        out.push(Trajectory {
            states,
            actions,
            terminated_out_of_bounds: flag != 0,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn p() -> DubinsParams {
        DubinsParams::default()
    }

    #[test]
    fn straight_and_turning_steps() {
        let s = step(&PrivilegedState::new(0.0, 0.0, 0.0), 0.0, &p()).unwrap();
        assert_abs_diff_eq!(s.x, 0.05, epsilon = 1e-15);
        assert_abs_diff_eq!(s.y, 0.0, epsilon = 1e-15);

        let s = step(&PrivilegedState::new(0.0, 0.0, PI / 2.0), 0.0, &p()).unwrap();
        assert_abs_diff_eq!(s.x, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.y, 0.05, epsilon = 1e-15);
        assert_abs_diff_eq!(s.theta, PI / 2.0, epsilon = 1e-15);

        let s = step(&PrivilegedState::new(0.0, 0.0, 0.0), 1.25, &p()).unwrap();
        assert_abs_diff_eq!(s.x, 0.05, epsilon = 1e-15);
        assert_abs_diff_eq!(s.theta, 0.0625, epsilon = 1e-15);
    }

    #[test]
    fn rejects_out_of_range_action() {
        let err = step(&PrivilegedState::new(0.0, 0.0, 0.0), 1.3, &p()).unwrap_err();
        assert!(matches!(err, Error::ActionOutOfRange { .. }));
        assert!(step(&PrivilegedState::new(0.0, 0.0, 0.0), f64::NAN, &p()).is_err());
    }

    #[test]
    fn wrap_is_half_open() {
        assert_eq!(wrap_angle(PI), -PI);
        assert_eq!(wrap_angle(-PI), -PI);
        assert_abs_diff_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-12);
        assert!(wrap_angle(-1e-18) < PI);
    }

    #[test]
    fn similarity_examples() {
        assert_eq!(ground_truth_similarity((0.3, -0.2), (0.3, -0.2)), 1.0);
        assert_abs_diff_eq!(
            ground_truth_similarity((0.0, 0.0), (0.5, 0.0)),
            0.823_223_3,
            epsilon = 1e-7
        );
        assert_eq!(ground_truth_similarity((0.0, 0.0), (2.0, 0.0)), -1.0);
        // decision boundary at distance ε
        for eps in [0.3, 0.4, 0.5] {
            assert_abs_diff_eq!(
                ground_truth_similarity((0.0, 0.0), (0.0, eps)),
                1.0 - eps * eps / std::f64::consts::SQRT_2,
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn margin_signs() {
        let f = FailureDisc::new(0.2, -0.1, 0.5, 1.5).unwrap();
        assert_abs_diff_eq!(
            signed_distance_margin(&PrivilegedState::new(0.2, -0.1, 0.0), &f),
            -0.5,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            signed_distance_margin(&PrivilegedState::new(0.7, -0.1, 1.0), &f),
            0.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            signed_distance_margin(&PrivilegedState::new(0.2, 0.9, 1.0), &f),
            0.5,
            epsilon = 1e-15
        );
        assert!(FailureDisc::new(2.0, 0.0, 0.5, 1.5).is_err());
        assert!(FailureDisc::new(0.0, 0.0, 0.0, 1.5).is_err());
    }

    #[test]
    fn dataset_is_deterministic_and_bounded() {
        let a = generate_dataset(1, &p(), 42).unwrap();
        let b = generate_dataset(1, &p(), 42).unwrap();
        assert_eq!(a, b);

        let data = generate_dataset(200, &p(), 7).unwrap();
        let total: usize = data.iter().map(|t| t.len()).sum();
        assert!(total <= 200 * 100);
        for t in &data {
            assert_eq!(t.actions.len() + 1, t.states.len());
            for s in &t.states[..t.states.len() - 1] {
                assert!(s.x.abs() < 1.5 && s.y.abs() < 1.5);
            }
            let last = t.states.last().unwrap();
            assert_eq!(t.terminated_out_of_bounds, !last.in_bounds(1.5));
            if !t.terminated_out_of_bounds {
                assert_eq!(t.len(), 100);
            }
        }
        assert!(generate_dataset(0, &p(), 0).is_err());
    }

    #[test]
    fn dataset_file_round_trip() {
        let data = generate_dataset(5, &p(), 3).unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &data).unwrap();
        assert_eq!(&buf[..4], b"ASD1");
        let back = read_dataset(&buf[..]).unwrap();
        assert_eq!(back.len(), data.len());
        for (t, u) in data.iter().zip(&back) {
            assert_eq!(t.actions.len(), u.actions.len());
            assert_eq!(t.terminated_out_of_bounds, u.terminated_out_of_bounds);
            for (s, r) in t.states.iter().zip(&u.states) {
                assert_eq!(s.x as f32 as f64, r.x);
                assert_eq!(s.theta as f32 as f64, r.theta);
            }
        }
        assert!(read_dataset(&b"XXXX\0\0\0\0"[..]).is_err());
    }

    proptest! {
        #[test]
        fn step_is_translation_equivariant(
            x in -2.0f64..2.0, y in -2.0f64..2.0, th in -PI..PI,
            dx in -1.0f64..1.0, dy in -1.0f64..1.0, a in -1.25f64..1.25,
        ) {
            // Dyadic offsets keep float addition exact on both sides.
            let dx = (dx * 1024.0).round() / 1024.0;
            let dy = (dy * 1024.0).round() / 1024.0;
            let x = (x * 1024.0).round() / 1024.0;
            let y = (y * 1024.0).round() / 1024.0;
            let s = PrivilegedState::new(x, y, th);
            let moved = step(&s.translated(dx, dy), a, &p()).unwrap();
            let base = step(&s, a, &p()).unwrap().translated(dx, dy);
            prop_assert!((moved.x - base.x).abs() <= 1e-15 * (1.0 + base.x.abs()));
            prop_assert!((moved.y - base.y).abs() <= 1e-15 * (1.0 + base.y.abs()));
            prop_assert_eq!(moved.theta, base.theta);
        }

        #[test]
        fn similarity_symmetric_and_signed(
            a in (-1.5f64..1.5, -1.5f64..1.5), b in (-1.5f64..1.5, -1.5f64..1.5),
        ) {
            let s = ground_truth_similarity(a, b);
            prop_assert_eq!(s, ground_truth_similarity(b, a));
            prop_assert!((-1.0..=1.0).contains(&s));
            let d2 = (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2);
            prop_assert_eq!(s >= 0.0, d2 <= std::f64::consts::SQRT_2);
            prop_assert_eq!(s == 1.0, d2 == 0.0);
        }

        #[test]
        fn dataset_actions_within_limit(seed in 0u64..1000) {
            let data = generate_dataset(3, &p(), seed).unwrap();
            for t in &data {
                for &a in &t.actions {
                    prop_assert!(a.abs() <= 1.25);
                }
                for s in &t.states {
                    prop_assert!(s.theta >= -PI && s.theta < PI);
                }
            }
        }
    }
}
