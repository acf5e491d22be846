use nalgebra::DMatrix;
use ndarray::Array2;
use rand::rngs::StdRng;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::LatentVec;
use crate::sim::PrivilegedState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub dim: usize,
    pub seed: u64,
    /// Standard deviation of the first-layer weights.
    pub input_gain: f64,
    /// Second-layer weights have standard deviation `output_gain / sqrt(dim)`.
    pub output_gain: f64,
    pub bound: f64,
    /// Constraint latents average this many evenly spaced headings; 1 means heading 0 only.
    pub constraint_headings: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            dim: 16,
            seed: 7,
            input_gain: 0.15,
            output_gain: 0.25,
            bound: 1.5,
            constraint_headings: 1,
        }
    }
}

/// Fixed map `z = tanh(W2 · tanh(W1 · ψ(s)))` with
/// `ψ = [x/b, y/b, cos θ, sin θ]` (positions clamped to the box).
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    config: EncoderConfig,
    w1: Array2<f64>,
    w2: Array2<f64>,
    resamples: u32,
}

fn rank_and_min_singular(m: &Array2<f64>) -> (usize, f64) {
    let dm = DMatrix::from_row_slice(m.nrows(), m.ncols(), m.as_slice().expect("standard layout"));
    let sv = dm.singular_values();
    let max = sv.max();
    let tol = 1e-9 * max.max(1.0);
    (sv.iter().filter(|&&s| s > tol).count(), sv.min())
}

impl Encoder {
    pub fn new(config: EncoderConfig) -> Self {
        assert!(config.dim >= 4, "latent dimension must be at least 4");
        let mut rng = StdRng::seed_from_u64(config.seed);
        let mut draw = |rows: usize, cols: usize, std: f64| {
            Array2::from_shape_fn((rows, cols), |_| {
                let v: f64 = StandardNormal.sample(&mut rng);
                v * std
            })
        };
        let d = config.dim;
        let mut resamples = 0;
        loop {
            let w1 = draw(d, 4, config.input_gain);
            let w2 = draw(d, d, config.output_gain / (d as f64).sqrt());
            let (r1, _) = rank_and_min_singular(&w1);
            let (r2, s2) = rank_and_min_singular(&w2);
            if r1 == 4 && r2 == d && s2 > 1e-6 {
                return Self {
                    config,
                    w1,
                    w2,
                    resamples,
                };
            }
            resamples += 1;
        }
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    /// Draws rejected by the rank checks before an injective pair was found.
    pub fn resamples(&self) -> u32 {
        self.resamples
    }

    pub fn features(&self, s: &PrivilegedState) -> [f64; 4] {
        let b = self.config.bound;
        [
            (s.x / b).clamp(-1.0, 1.0),
            (s.y / b).clamp(-1.0, 1.0),
            s.theta.cos(),
            s.theta.sin(),
        ]
    }

    fn encode_into(&self, s: &PrivilegedState, out: &mut [f32]) {
        let psi = self.features(s);
        let d = self.config.dim;
        let mut h = vec![0.0; d];
        for (i, hi) in h.iter_mut().enumerate() {
            let row = self.w1.row(i);
            *hi = (row[0] * psi[0] + row[1] * psi[1] + row[2] * psi[2] + row[3] * psi[3]).tanh();
        }
        for (i, o) in out.iter_mut().enumerate() {
            let pre: f64 = self.w2.row(i).iter().zip(&h).map(|(w, v)| w * v).sum();
            *o = pre.tanh() as f32;
        }
    }

    pub fn encode(&self, s: &PrivilegedState) -> LatentVec {
        let mut out = vec![0f32; self.config.dim];
        self.encode_into(s, &mut out);
        LatentVec(out)
    }

    /// One row per state.
    pub fn encode_batch(&self, states: &[PrivilegedState]) -> Array2<f32> {
        let d = self.config.dim;
        let mut out = Array2::zeros((states.len(), d));
        for (s, mut row) in states.iter().zip(out.rows_mut()) {
            self.encode_into(s, row.as_slice_mut().expect("standard layout"));
        }
        out
    }

    /// Latent of a constraint placed at `(cx, cy)`: heading 0, or the mean over
    /// `constraint_headings` evenly spaced headings.
    pub fn encode_constraint(&self, cx: f64, cy: f64) -> LatentVec {
        let n = self.config.constraint_headings.max(1);
        if n == 1 {
            return self.encode(&PrivilegedState::new(cx, cy, 0.0));
        }
        let mut acc = vec![0f32; self.config.dim];
        let mut z = vec![0f32; self.config.dim];
        for k in 0..n {
            let theta = -std::f64::consts::PI + 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            self.encode_into(&PrivilegedState::new(cx, cy, theta), &mut z);
            acc.iter_mut().zip(&z).for_each(|(a, v)| *a += v / n as f32);
        }
        LatentVec(acc)
    }
}
