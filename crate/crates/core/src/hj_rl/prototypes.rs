use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};

/// K-means centres over constraint latents.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeSet {
    pub centers: Array2<f32>,
    pub assignments: Vec<usize>,
    /// Sum of squared distances after seeding and after each Lloyd iteration.
    pub objective_trace: Vec<f64>,
}

fn sq_dist(a: ArrayView1<f32>, b: ArrayView1<f32>) -> f64 {
    a.iter().zip(b).map(|(x, y)| ((x - y) as f64).powi(2)).sum()
}

fn nearest(centers: &Array2<f32>, p: ArrayView1<f32>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, row) in centers.rows().into_iter().enumerate() {
        let d = sq_dist(row, p);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// k-means++ seeding followed by Lloyd iterations until assignments stop changing.
///
/// A centre that loses all its points is moved onto the point farthest from its
/// current centre.
pub fn fit_prototypes(points: ArrayView2<f32>, k: usize, seed: u64, max_iter: usize) -> Result<PrototypeSet> {
    let n = points.nrows();
    if k == 0 {
        return Err(Error::InvalidParameter("k must be positive".into()));
    }
    if n < k {
        return Err(Error::InvalidParameter(format!("{n} points for {k} prototypes")));
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let dim = points.ncols();
    let mut centers = Array2::zeros((k, dim));
    centers.row_mut(0).assign(&points.row(rng.gen_range(0..n)));
    let mut d2: Vec<f64> = points.rows().into_iter().map(|p| sq_dist(p, centers.row(0))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total <= 0.0 {
            rng.gen_range(0..n)
        } else {
            let mut target = rng.gen::<f64>() * total;
            let mut idx = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    idx = i;
                    break;
                }
                target -= d;
            }
            idx
        };
        centers.row_mut(c).assign(&points.row(pick));
        for (i, p) in points.rows().into_iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, centers.row(c)));
        }
    }

    let mut assignments = vec![usize::MAX; n];
    let mut trace = Vec::new();
    for _ in 0..max_iter.max(1) {
        let mut changed = false;
        let mut objective = 0.0;
        for (i, p) in points.rows().into_iter().enumerate() {
            let (c, d) = nearest(&centers, p);
            objective += d;
            if assignments[i] != c {
                assignments[i] = c;
                changed = true;
            }
        }
        trace.push(objective);
        if !changed {
            break;
        }
        let mut sums = Array2::<f64>::zeros((k, dim));
        let mut counts = vec![0usize; k];
        for (i, p) in points.rows().into_iter().enumerate() {
            let c = assignments[i];
            counts[c] += 1;
            sums.row_mut(c).zip_mut_with(&p, |s, &v| *s += v as f64);
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                centers.row_mut(c).zip_mut_with(&sums.row(c), |x, &s| *x = (s * inv) as f32);
            } else {
                let far = points
                    .rows()
                    .into_iter()
                    .enumerate()
                    .map(|(i, p)| (i, sq_dist(p, centers.row(assignments[i]))))
                    .fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a })
                    .0;
                centers.row_mut(c).assign(&points.row(far));
            }
        }
    }
    Ok(PrototypeSet {
        centers,
        assignments,
        objective_trace: trace,
    })
}

impl PrototypeSet {
    pub fn len(&self) -> usize {
        self.centers.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.centers.ncols()
    }

    /// Index and coordinates of the Euclidean-nearest centre.
    pub fn nearest(&self, z: &[f32]) -> (usize, Vec<f32>) {
        let (c, _) = nearest(&self.centers, ArrayView1::from(z));
        (c, self.centers.row(c).to_vec())
    }

    pub fn center(&self, c: usize) -> Vec<f32> {
        self.centers.row(c).to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn blobs() -> Array2<f32> {
        let mut rng = StdRng::seed_from_u64(0);
        let anchors = [(-2.0f32, -2.0f32), (2.0, 2.0), (2.0, -2.0)];
        Array2::from_shape_fn((300, 2), |(i, j)| {
            let (ax, ay) = anchors[i % 3];
            (if j == 0 { ax } else { ay }) + rng.gen_range(-0.3..0.3)
        })
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let p = array![[0.0f32, 1.0], [2.0, 3.0], [4.0, -1.0]];
        let ps = fit_prototypes(p.view(), 1, 3, 50).unwrap();
        assert_eq!(ps.center(0), vec![2.0, 1.0]);
    }

    #[test]
    fn objective_never_increases_and_centers_are_means() {
        let p = blobs();
        let ps = fit_prototypes(p.view(), 3, 5, 100).unwrap();
        for w in ps.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
        for c in 0..3 {
            let members: Vec<usize> = (0..p.nrows()).filter(|&i| ps.assignments[i] == c).collect();
            assert!(!members.is_empty());
            for j in 0..2 {
                let mean = members.iter().map(|&i| p[[i, j]] as f64).sum::<f64>() / members.len() as f64;
                assert!((mean - ps.centers[[c, j]] as f64).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn nearest_of_a_center_is_itself_and_fit_is_deterministic() {
        let p = blobs();
        let a = fit_prototypes(p.view(), 3, 9, 100).unwrap();
        let b = fit_prototypes(p.view(), 3, 9, 100).unwrap();
        assert_eq!(a, b);
        for c in 0..3 {
            assert_eq!(a.nearest(&a.center(c)).0, c);
        }
    }

    #[test]
    fn too_few_points_rejected() {
        let p = array![[0.0f32, 1.0]];
        assert!(fit_prototypes(p.view(), 2, 0, 10).is_err());
    }
}
