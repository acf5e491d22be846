//! Ground-truth safety values by semi-Lagrangian value iteration on an
//! `(x, y, θ)` lattice.

mod io;
mod tabular;

pub use io::{read_grid, write_grid};
pub use tabular::TabularChain;

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{signed_distance_margin, step_unchecked, wrap_angle, DubinsParams, FailureDisc, PrivilegedState};

/// Lattice layout. Nodes include both x/y endpoints; θ nodes are
/// `−π + 2πk/nθ` and wrap periodically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub ntheta: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::cube(61, 1.5)
    }
}

impl GridSpec {
    pub fn cube(n: usize, bound: f64) -> Self {
        Self {
            nx: n,
            ny: n,
            ntheta: n,
            x_min: -bound,
            x_max: bound,
            y_min: -bound,
            y_max: bound,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 2 || self.ny < 2 || self.ntheta < 1 {
            return Err(Error::InvalidParameter("grid needs ≥2 x/y nodes and ≥1 θ node".into()));
        }
        if !(self.x_max > self.x_min && self.y_max > self.y_min) {
            return Err(Error::InvalidParameter("empty grid extents".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.ntheta
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx - 1) as f64
    }

    pub fn hy(&self) -> f64 {
        (self.y_max - self.y_min) / (self.ny - 1) as f64
    }

    pub fn htheta(&self) -> f64 {
        2.0 * PI / self.ntheta as f64
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.ny + j) * self.ntheta + k
    }

    pub fn unindex(&self, n: usize) -> (usize, usize, usize) {
        let k = n % self.ntheta;
        let ij = n / self.ntheta;
        (ij / self.ny, ij % self.ny, k)
    }

    pub fn node(&self, i: usize, j: usize, k: usize) -> PrivilegedState {
        PrivilegedState {
            x: self.x_min + i as f64 * self.hx(),
            y: self.y_min + j as f64 * self.hy(),
            theta: -PI + k as f64 * self.htheta(),
        }
    }

    pub fn node_at(&self, n: usize) -> PrivilegedState {
        let (i, j, k) = self.unindex(n);
        self.node(i, j, k)
    }

    pub fn contains_xy(&self, x: f64, y: f64) -> bool {
        (self.x_min..=self.x_max).contains(&x) && (self.y_min..=self.y_max).contains(&y)
    }
}

/// Discrete angular velocities, evenly spaced over `[−a_max, a_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSet {
    actions: Vec<f64>,
}

impl ActionSet {
    pub fn uniform(n: usize, a_max: f64) -> Result<Self> {
        if n < 2 || a_max <= 0.0 {
            return Err(Error::InvalidParameter("need ≥2 actions and a_max > 0".into()));
        }
        let actions = (0..n)
            .map(|k| {
                if 2 * k + 1 == n {
                    0.0
                } else {
                    -a_max + 2.0 * a_max * k as f64 / (n - 1) as f64
                }
            })
            .collect();
        Ok(Self { actions })
    }

    pub fn actions(&self) -> &[f64] {
        &self.actions
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub gamma: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub n_actions: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9999,
            tol: 1e-6,
            max_iter: 5000,
            n_actions: 11,
        }
    }
}

/// Solved value lattice with convergence metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueGrid {
    pub spec: GridSpec,
    pub values: Vec<f64>,
    pub gamma: f64,
    /// Disc radius of the failure margin, when the margin is a disc at the origin.
    pub epsilon: Option<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
struct Stencil {
    lo: u32,
    w: f64,
}

/// Interpolation stencils for every (θ node, action) successor.
struct Backup {
    spec: GridSpec,
    n_actions: usize,
    // [(k * na + a) * nx + i]
    xs: Vec<Stencil>,
    ys: Vec<Stencil>,
    // [k * na + a]
    ts: Vec<(u32, u32, f64)>,
}

fn axis_stencil(pos: f64, n: usize) -> Stencil {
    let u = pos.clamp(0.0, (n - 1) as f64);
    let lo = (u.floor() as usize).min(n - 2);
    Stencil {
        lo: lo as u32,
        w: u - lo as f64,
    }
}

fn theta_stencil(theta: f64, spec: &GridSpec) -> (u32, u32, f64) {
    let n = spec.ntheta;
    let u = ((wrap_angle(theta) + PI) / spec.htheta()).rem_euclid(n as f64);
    let lo = (u.floor() as usize).min(n - 1);
    let w = u - lo as f64;
    (lo as u32, ((lo + 1) % n) as u32, w)
}

impl Backup {
    fn new(spec: &GridSpec, actions: &ActionSet, params: &DubinsParams) -> Self {
        let na = actions.actions().len();
        let (hx, hy) = (spec.hx(), spec.hy());
        let mut xs = Vec::with_capacity(spec.ntheta * na * spec.nx);
        let mut ys = Vec::with_capacity(spec.ntheta * na * spec.ny);
        let mut ts = Vec::with_capacity(spec.ntheta * na);
        for k in 0..spec.ntheta {
            for &a in actions.actions() {
                let origin = spec.node(0, 0, k);
                let next = step_unchecked(&origin, a, params);
                let (dx, dy) = (next.x - origin.x, next.y - origin.y);
                for i in 0..spec.nx {
                    xs.push(axis_stencil(i as f64 + dx / hx, spec.nx));
                }
                for j in 0..spec.ny {
                    ys.push(axis_stencil(j as f64 + dy / hy, spec.ny));
                }
                ts.push(theta_stencil(next.theta, spec));
            }
        }
        Self {
            spec: *spec,
            n_actions: na,
            xs,
            ys,
            ts,
        }
    }

    #[inline]
    fn successor_value(&self, v: &[f64], i: usize, j: usize, k: usize, a: usize) -> f64 {
        let s = &self.spec;
        let ka = k * self.n_actions + a;
        let sx = self.xs[ka * s.nx + i];
        let sy = self.ys[ka * s.ny + j];
        let (t0, t1, wt) = self.ts[ka];
        let (i0, j0) = (sx.lo as usize, sy.lo as usize);
        let nt = s.ntheta;
        let base00 = (i0 * s.ny + j0) * nt;
        let base01 = base00 + nt;
        let base10 = base00 + s.ny * nt;
        let base11 = base10 + nt;
        let lerp_t = |b: usize| v[b + t0 as usize] * (1.0 - wt) + v[b + t1 as usize] * wt;
        let c00 = lerp_t(base00);
        let c01 = lerp_t(base01);
        let c10 = lerp_t(base10);
        let c11 = lerp_t(base11);
        let c0 = c00 * (1.0 - sy.w) + c01 * sy.w;
        let c1 = c10 * (1.0 - sy.w) + c11 * sy.w;
        c0 * (1.0 - sx.w) + c1 * sx.w
    }

    /// One Jacobi sweep `out = T(v)`; returns `max |out − v|`.
    fn sweep(&self, v: &[f64], ell: &[f64], gamma: f64, out: &mut [f64]) -> f64 {
        let s = &self.spec;
        let mut residual = 0.0f64;
        for i in 0..s.nx {
            for j in 0..s.ny {
                for k in 0..s.ntheta {
                    let n = s.index(i, j, k);
                    let best = (0..self.n_actions)
                        .map(|a| self.successor_value(v, i, j, k, a))
                        .fold(f64::NEG_INFINITY, f64::max);
                    let l = ell[n];
                    let next = (1.0 - gamma) * l + gamma * l.min(best);
                    residual = residual.max((next - v[n]).abs());
                    out[n] = next;
                }
            }
        }
        residual
    }

    fn best_action(&self, v: &[f64], i: usize, j: usize, k: usize) -> usize {
        let mut best = (0, f64::NEG_INFINITY);
        for a in 0..self.n_actions {
            let q = self.successor_value(v, i, j, k, a);
            if q > best.1 {
                best = (a, q);
            }
        }
        best.0
    }
}

/// Margin values at every node.
pub fn sample_margin<F: Fn(&PrivilegedState) -> f64>(spec: &GridSpec, margin: F) -> Vec<f64> {
    (0..spec.len()).map(|n| margin(&spec.node_at(n))).collect()
}

/// One application of the safety backup to `v`; exposed for property checks.
pub fn bellman_backup(
    spec: &GridSpec,
    actions: &ActionSet,
    params: &DubinsParams,
    gamma: f64,
    ell: &[f64],
    v: &[f64],
) -> Vec<f64> {
    let b = Backup::new(spec, actions, params);
    let mut out = vec![0.0; spec.len()];
    b.sweep(v, ell, gamma, &mut out);
    out
}

/// Iterates `V ← (1−γ)ℓ + γ·min{ℓ, max_a V(step(s,a))}` from `V₀ = ℓ`.
///
/// Non-convergence is not an error here: the grid comes back with
/// `converged = false` (see [`ValueGrid::ensure_converged`]).
pub fn value_iteration_from_samples(
    ell: &[f64],
    params: &DubinsParams,
    spec: &GridSpec,
    cfg: &SolverConfig,
) -> Result<ValueGrid> {
    spec.validate()?;
    params.validate()?;
    if !(0.0..1.0).contains(&cfg.gamma) || cfg.tol <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "gamma {} must be in [0,1) and tol > 0",
            cfg.gamma
        )));
    }
    if ell.len() != spec.len() {
        return Err(Error::DimensionMismatch {
            expected: spec.len(),
            got: ell.len(),
        });
    }
    let actions = ActionSet::uniform(cfg.n_actions, params.a_max)?;
    let backup = Backup::new(spec, &actions, params);
    let mut v = ell.to_vec();
    let mut next = vec![0.0; v.len()];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        residual = backup.sweep(&v, ell, cfg.gamma, &mut next);
        std::mem::swap(&mut v, &mut next);
        iterations += 1;
        if residual < cfg.tol {
            break;
        }
    }
    let converged = residual < cfg.tol;
    if !converged {
        log::warn!("value iteration stopped after {iterations} sweeps, residual {residual:e}");
    }
    Ok(ValueGrid {
        spec: *spec,
        values: v,
        gamma: cfg.gamma,
        epsilon: None,
        iterations,
        residual,
        converged,
    })
}

pub fn value_iteration<F: Fn(&PrivilegedState) -> f64>(
    margin: F,
    params: &DubinsParams,
    spec: &GridSpec,
    cfg: &SolverConfig,
) -> Result<ValueGrid> {
    spec.validate()?;
    value_iteration_from_samples(&sample_margin(spec, margin), params, spec, cfg)
}

/// Solves the origin-centred disc of radius `epsilon` with the signed-distance margin.
pub fn solve_disc(epsilon: f64, params: &DubinsParams, spec: &GridSpec, cfg: &SolverConfig) -> Result<ValueGrid> {
    let disc = FailureDisc::new(0.0, 0.0, epsilon, params.bound)?;
    let mut g = value_iteration(|s| signed_distance_margin(s, &disc), params, spec, cfg)?;
    g.epsilon = Some(epsilon);
    Ok(g)
}

impl ValueGrid {
    pub fn ensure_converged(&self) -> Result<&Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NotConverged {
                iterations: self.iterations,
                residual: self.residual,
            })
        }
    }

    pub fn node_value(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.spec.index(i, j, k)]
    }

    /// Trilinear interpolation; x/y clamped to the extents, θ periodic.
    pub fn value_at(&self, s: &PrivilegedState) -> f64 {
        let sp = &self.spec;
        let sx = axis_stencil((s.x - sp.x_min) / sp.hx(), sp.nx);
        let sy = axis_stencil((s.y - sp.y_min) / sp.hy(), sp.ny);
        let (t0, t1, wt) = theta_stencil(s.theta, sp);
        let v = &self.values;
        let at = |i: usize, j: usize| {
            let b = sp.index(i, j, 0);
            v[b + t0 as usize] * (1.0 - wt) + v[b + t1 as usize] * wt
        };
        let (i0, j0) = (sx.lo as usize, sy.lo as usize);
        let c0 = at(i0, j0) * (1.0 - sy.w) + at(i0, j0 + 1) * sy.w;
        let c1 = at(i0 + 1, j0) * (1.0 - sy.w) + at(i0 + 1, j0 + 1) * sy.w;
        c0 * (1.0 - sx.w) + c1 * sx.w
    }

    /// Unsafe label per node: value strictly below `threshold`.
    pub fn classify_nodes(&self, threshold: f64) -> Vec<bool> {
        classify_nodes(&self.values, threshold)
    }

    /// Greedy safety policy: the action whose one-step successor has the largest value.
    pub fn best_action(&self, s: &PrivilegedState, params: &DubinsParams, actions: &ActionSet) -> f64 {
        let mut best = (0.0, f64::NEG_INFINITY);
        for &a in actions.actions() {
            let q = self.value_at(&step_unchecked(s, a, params));
            if q > best.1 {
                best = (a, q);
            }
        }
        best.0
    }

    /// Greedy action index at each node, via the same stencils as the solver.
    pub fn node_policy(&self, params: &DubinsParams, actions: &ActionSet) -> Vec<usize> {
        let b = Backup::new(&self.spec, actions, params);
        (0..self.spec.len())
            .map(|n| {
                let (i, j, k) = self.spec.unindex(n);
                b.best_action(&self.values, i, j, k)
            })
            .collect()
    }
}

pub fn classify_nodes(values: &[f64], threshold: f64) -> Vec<bool> {
    values.iter().map(|&v| v < threshold).collect()
}

/// Value of a disc centred at `(cx, cy)`, read off a grid solved for the origin.
#[derive(Debug, Clone, Copy)]
pub struct ConstraintOracle<'a> {
    pub base: &'a ValueGrid,
    pub disc: FailureDisc,
}

impl ConstraintOracle<'_> {
    pub fn value(&self, s: &PrivilegedState) -> f64 {
        self.base.value_at(&s.translated(-self.disc.cx, -self.disc.cy))
    }

    /// Whether the state, shifted into the base frame, lies inside the solved extents.
    pub fn in_base_grid(&self, s: &PrivilegedState) -> bool {
        self.base.spec.contains_xy(s.x - self.disc.cx, s.y - self.disc.cy)
    }

    pub fn best_action(&self, s: &PrivilegedState, params: &DubinsParams, actions: &ActionSet) -> f64 {
        self.base
            .best_action(&s.translated(-self.disc.cx, -self.disc.cy), params, actions)
    }
}

/// Reuses one origin solve for any constraint centre (the dynamics are translation invariant).
pub fn oracle_for_constraint(base: &ValueGrid, disc: FailureDisc) -> Result<ConstraintOracle<'_>> {
    match base.epsilon {
        Some(e) if (e - disc.radius).abs() <= 1e-9 => Ok(ConstraintOracle { base, disc }),
        Some(e) => Err(Error::EpsilonMismatch(e, disc.radius)),
        None => Err(Error::InvalidParameter("base grid has no disc radius".into())),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Theorem1Report {
    pub delta: f64,
    pub max_abs_diff: f64,
    pub sublevel_symmetric_difference: usize,
    /// Symmetric-difference nodes whose value is not within `band` of δ.
    pub symmetric_difference_off_band: usize,
    pub band: f64,
    pub iterations: (usize, usize),
    pub residuals: (f64, f64),
    pub runtime: Duration,
}

/// Solves with `ℓ` and with `ℓ − δ` and compares `V_δ` against `V − δ`.
pub fn verify_theorem1(
    ell: &[f64],
    delta: f64,
    params: &DubinsParams,
    spec: &GridSpec,
    cfg: &SolverConfig,
) -> Result<Theorem1Report> {
    let start = Instant::now();
    let base = value_iteration_from_samples(ell, params, spec, cfg)?;
    let shifted_ell: Vec<f64> = ell.iter().map(|l| l - delta).collect();
    let shifted = value_iteration_from_samples(&shifted_ell, params, spec, cfg)?;
    let max_abs_diff = base
        .values
        .iter()
        .zip(&shifted.values)
        .map(|(v, vd)| (vd - (v - delta)).abs())
        .fold(0.0, f64::max);
    let band = (10.0 * max_abs_diff).max(1e-9);
    let mut symdiff = 0;
    let mut off_band = 0;
    for (v, vd) in base.values.iter().zip(&shifted.values) {
        if (*vd < 0.0) != (*v < delta) {
            symdiff += 1;
            if (v - delta).abs() > band {
                off_band += 1;
            }
        }
    }
    Ok(Theorem1Report {
        delta,
        max_abs_diff,
        sublevel_symmetric_difference: symdiff,
        symmetric_difference_off_band: off_band,
        band,
        iterations: (base.iterations, shifted.iterations),
        residuals: (base.residual, shifted.residual),
        runtime: start.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn small() -> GridSpec {
        GridSpec::cube(13, 1.5)
    }

    fn quick_cfg(gamma: f64) -> SolverConfig {
        SolverConfig {
            gamma,
            tol: 1e-9,
            max_iter: 20_000,
            n_actions: 5,
        }
    }

    #[test]
    fn action_set_contains_endpoints_and_zero() {
        let a = ActionSet::uniform(11, 1.25).unwrap();
        assert_eq!(a.actions().len(), 11);
        assert_eq!(a.actions()[0], -1.25);
        assert_eq!(a.actions()[10], 1.25);
        assert_eq!(a.actions()[5], 0.0);
    }

    #[test]
    fn index_round_trip() {
        let s = GridSpec {
            nx: 4,
            ny: 5,
            ntheta: 6,
            ..GridSpec::default()
        };
        for n in 0..s.len() {
            let (i, j, k) = s.unindex(n);
            assert_eq!(s.index(i, j, k), n);
        }
    }

    #[test]
    fn constant_margin_is_a_fixed_point() {
        let g = value_iteration(|_| 0.3, &DubinsParams::default(), &small(), &quick_cfg(0.9)).unwrap();
        assert!(g.converged);
        assert!(g.values.iter().all(|&v| (v - 0.3).abs() < 1e-12));
    }

    #[test]
    fn value_at_nodes_midpoints_and_periodicity() {
        let spec = small();
        let mut rng = StdRng::seed_from_u64(3);
        let g = ValueGrid {
            spec,
            values: (0..spec.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            gamma: 0.9,
            epsilon: None,
            iterations: 0,
            residual: 0.0,
            converged: true,
        };
        for &(i, j, k) in &[(0, 0, 0), (3, 7, 5), (12, 12, 12), (5, 0, 11)] {
            let s = spec.node(i, j, k);
            assert!((g.value_at(&s) - g.node_value(i, j, k)).abs() < 1e-12);
            let wrapped = PrivilegedState {
                theta: s.theta + 2.0 * PI,
                ..s
            };
            assert!((g.value_at(&wrapped) - g.value_at(&s)).abs() < 1e-12);
        }
        let a = spec.node(4, 6, 2);
        let mid = PrivilegedState {
            x: a.x + 0.5 * spec.hx(),
            ..a
        };
        let expected = 0.5 * (g.node_value(4, 6, 2) + g.node_value(5, 6, 2));
        assert!((g.value_at(&mid) - expected).abs() < 1e-12);
    }

    #[test]
    fn classification_thresholds() {
        let v = vec![-0.5, 0.0, 0.3];
        assert!(classify_nodes(&v, f64::NEG_INFINITY).iter().all(|u| !u));
        assert!(classify_nodes(&v, f64::INFINITY).iter().all(|u| *u));
        assert_eq!(classify_nodes(&v, 0.0), vec![true, false, false]);
    }

    #[test]
    fn disc_solution_properties() {
        let spec = GridSpec::cube(21, 1.5);
        let p = DubinsParams::default();
        let g = solve_disc(0.5, &p, &spec, &quick_cfg(0.99)).unwrap();
        assert!(g.converged);
        let disc = FailureDisc::new(0.0, 0.0, 0.5, 1.5).unwrap();
        let mut strict = 0;
        for n in 0..spec.len() {
            let s = spec.node_at(n);
            let l = signed_distance_margin(&s, &disc);
            assert!(g.values[n] <= l + 1e-5);
            if l < 0.0 {
                assert!(g.values[n] < 0.0);
            } else if g.values[n] < 0.0 {
                strict += 1;
            }
        }
        assert!(strict > 0, "unsafe set should extend beyond the disc");
    }

    #[test]
    fn oracle_translation_and_epsilon_check() {
        let spec = GridSpec::cube(15, 1.5);
        let p = DubinsParams::default();
        let g = solve_disc(0.5, &p, &spec, &quick_cfg(0.95)).unwrap();
        let origin = FailureDisc::new(0.0, 0.0, 0.5, 1.5).unwrap();
        let o = oracle_for_constraint(&g, origin).unwrap();
        let s = PrivilegedState::new(0.31, -0.42, 1.1);
        assert_eq!(o.value(&s), g.value_at(&s));
        let c = FailureDisc::new(0.4, -0.2, 0.5, 1.5).unwrap();
        let shifted = oracle_for_constraint(&g, c).unwrap();
        assert_eq!(shifted.value(&s), g.value_at(&s.translated(-0.4, 0.2)));
        let wrong = FailureDisc::new(0.0, 0.0, 0.3, 1.5).unwrap();
        assert!(matches!(oracle_for_constraint(&g, wrong), Err(Error::EpsilonMismatch(..))));
    }

    #[test]
    fn theorem1_on_small_grid() {
        let spec = GridSpec::cube(11, 1.5);
        let p = DubinsParams::default();
        let disc = FailureDisc::new(0.0, 0.0, 0.5, 1.5).unwrap();
        let ell = sample_margin(&spec, |s| signed_distance_margin(s, &disc));
        let cfg = SolverConfig {
            max_iter: 300,
            ..quick_cfg(0.99)
        };
        let zero = verify_theorem1(&ell, 0.0, &p, &spec, &cfg).unwrap();
        assert_eq!(zero.max_abs_diff, 0.0);
        let r = verify_theorem1(&ell, 0.2, &p, &spec, &cfg).unwrap();
        assert!(r.max_abs_diff < 1e-10);
        assert_eq!(r.symmetric_difference_off_band, 0);
    }

    fn random_values(rng: &mut StdRng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]
        #[test]
        fn backup_contracts_and_is_monotone(seed in any::<u64>(), gamma in 0.5f64..0.999) {
            let spec = GridSpec::cube(7, 1.5);
            let p = DubinsParams::default();
            let acts = ActionSet::uniform(5, p.a_max).unwrap();
            let mut rng = StdRng::seed_from_u64(seed);
            let ell = random_values(&mut rng, spec.len());
            let v1 = random_values(&mut rng, spec.len());
            let v2 = random_values(&mut rng, spec.len());
            let t1 = bellman_backup(&spec, &acts, &p, gamma, &ell, &v1);
            let t2 = bellman_backup(&spec, &acts, &p, gamma, &ell, &v2);
            let d_in = v1.iter().zip(&v2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let d_out = t1.iter().zip(&t2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prop_assert!(d_out <= gamma * d_in + 1e-15);
            let hi: Vec<f64> = v1.iter().zip(&v2).map(|(a, b)| a.max(*b)).collect();
            let th = bellman_backup(&spec, &acts, &p, gamma, &ell, &hi);
            prop_assert!(t1.iter().zip(&th).all(|(a, b)| a <= b));
        }
    }
}
