use std::collections::HashMap;

use rand::Rng;

use crate::sim::{ground_truth_similarity, PrivilegedState};

/// Draws state-index pairs for projector training.
///
/// A `local_fraction` of pairs take their second state uniformly among dataset
/// states within `local_radius` of the first; the rest pair two independent
/// uniform draws.
#[derive(Debug, Clone)]
pub struct PairSampler {
    positions: Vec<(f64, f64)>,
    cells: HashMap<(i64, i64), Vec<u32>>,
    radius: f64,
    local_fraction: f64,
}

impl PairSampler {
    pub fn new(states: &[PrivilegedState], local_fraction: f64, local_radius: f64) -> Self {
        assert!(!states.is_empty(), "pair sampler needs states");
        assert!((0.0..=1.0).contains(&local_fraction));
        let radius = if local_radius > 0.0 { local_radius } else { 1.0 };
        let positions: Vec<(f64, f64)> = states.iter().map(|s| s.position()).collect();
        let mut cells: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
        for (k, &(x, y)) in positions.iter().enumerate() {
            cells.entry(cell_of(x, y, radius)).or_default().push(k as u32);
        }
        Self {
            positions,
            cells,
            radius,
            local_fraction,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn position(&self, k: usize) -> (f64, f64) {
        self.positions[k]
    }

    pub fn target(&self, i: usize, j: usize) -> f32 {
        ground_truth_similarity(self.positions[i], self.positions[j]) as f32
    }

    fn local_partner<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> usize {
        let (x, y) = self.positions[i];
        let (cx, cy) = cell_of(x, y, self.radius);
        let lists: Vec<&Vec<u32>> = (-1..=1)
            .flat_map(|dx| (-1..=1).map(move |dy| (cx + dx, cy + dy)))
            .filter_map(|c| self.cells.get(&c))
            .collect();
        let total: usize = lists.iter().map(|l| l.len()).sum();
        let r2 = self.radius * self.radius;
        // Rejection over the 3x3 neighbourhood is uniform on the disc; `i` itself always qualifies.
        loop {
            let mut k = rng.gen_range(0..total);
            let mut pick = 0u32;
            for l in &lists {
                if k < l.len() {
                    pick = l[k];
                    break;
                }
                k -= l.len();
            }
            let (px, py) = self.positions[pick as usize];
            if (px - x).powi(2) + (py - y).powi(2) <= r2 {
                return pick as usize;
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        let n = self.positions.len();
        let i = rng.gen_range(0..n);
        let local = rng.gen::<f64>() < self.local_fraction;
        let j = if local {
            self.local_partner(i, rng)
        } else {
            rng.gen_range(0..n)
        };
        (i, j)
    }

    pub fn sample_many<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<(u32, u32)> {
        (0..count)
            .map(|_| {
                let (i, j) = self.sample(rng);
                (i as u32, j as u32)
            })
            .collect()
    }
}

fn cell_of(x: f64, y: f64, size: f64) -> (i64, i64) {
    ((x / size).floor() as i64, (y / size).floor() as i64)
}
