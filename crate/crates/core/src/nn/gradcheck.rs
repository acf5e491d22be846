//! Central-difference checks of the analytic backward passes, run in `f64`.

use ndarray::{Array, Array1, Array2};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::{cosine_rows, cosine_rows_grad, LayerSpec, MlpNet};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub probes: usize,
    pub worst_rel_err: f64,
}

impl GradCheck {
    fn merge(self, other: GradCheck) -> GradCheck {
        GradCheck {
            probes: self.probes + other.probes,
            worst_rel_err: self.worst_rel_err.max(other.worst_rel_err),
        }
    }
}

/// Relative error with a floor on the denominator so near-zero gradients
/// are judged on absolute error.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

const STEP: f64 = 1e-5;

fn probe_loss(net: &MlpNet<f64>, x: &Array2<f64>, w: &Array2<f64>) -> Result<f64> {
    Ok((&net.predict(x.view())? * w).sum())
}

/// `probes` random parameter coordinates plus every input coordinate of a
/// random net built from `specs`, against the loss `Σ w ⊙ f(x)`.
pub fn check_network(specs: &[LayerSpec], input_dim: usize, batch: usize, probes: usize, seed: u64) -> Result<GradCheck> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut net: MlpNet<f64> = MlpNet::new(input_dim, specs, &mut rng)?;
    // Move layer-norm gains and offsets off their initial values so their gradients are exercised.
    for t in net.tensors_mut() {
        t.iter_mut().for_each(|v| *v += rng.gen_range(-0.1..0.1));
    }
    let x = Array::from_shape_fn((batch, input_dim), |_| rng.gen_range(-1.5..1.5));
    let w = Array::from_shape_fn((batch, net.output_dim()), |_| rng.gen_range(-1.0..1.0));
    let (_, cache) = net.forward(x.view())?;
    let (grads, dx) = net.backward(&cache, w.view())?;
    let flat: Vec<f64> = grads.tensors().concat();
    let sizes: Vec<usize> = net.tensors().iter().map(|t| t.len()).collect();
    let mut worst = 0.0f64;
    for _ in 0..probes {
        let idx = rng.gen_range(0..flat.len());
        let (mut t, mut off) = (0, idx);
        while off >= sizes[t] {
            off -= sizes[t];
            t += 1;
        }
        let mut plus = net.clone();
        plus.tensors_mut()[t][off] += STEP;
        let mut minus = net.clone();
        minus.tensors_mut()[t][off] -= STEP;
        let fd = (probe_loss(&plus, &x, &w)? - probe_loss(&minus, &x, &w)?) / (2.0 * STEP);
        worst = worst.max(rel_err(fd, flat[idx]));
    }
    for ((i, j), &g) in dx.indexed_iter() {
        let mut xp = x.clone();
        xp[[i, j]] += STEP;
        let mut xm = x.clone();
        xm[[i, j]] -= STEP;
        let fd = (probe_loss(&net, &xp, &w)? - probe_loss(&net, &xm, &w)?) / (2.0 * STEP);
        worst = worst.max(rel_err(fd, g));
    }
    Ok(GradCheck {
        probes: probes + dx.len(),
        worst_rel_err: worst,
    })
}

/// Every coordinate of both sides of a batch of cosine similarities.
pub fn check_cosine(batch: usize, dim: usize, seed: u64) -> GradCheck {
    let mut rng = StdRng::seed_from_u64(seed);
    let a = Array::from_shape_fn((batch, dim), |_| rng.gen_range(-2.0..2.0));
    let b = Array::from_shape_fn((batch, dim), |_| rng.gen_range(-2.0..2.0));
    let up: Array1<f64> = Array::from_shape_fn(batch, |_| rng.gen_range(-1.0..1.0));
    let loss = |a: &Array2<f64>, b: &Array2<f64>| (cosine_rows(a.view(), b.view()) * &up).sum();
    let (da, db) = cosine_rows_grad(a.view(), b.view(), &up);
    let mut check = GradCheck {
        probes: 0,
        worst_rel_err: 0.0,
    };
    for (side, grad) in [(0, &da), (1, &db)] {
        for ((i, j), &g) in grad.indexed_iter() {
            let (mut ap, mut am, mut bp, mut bm) = (a.clone(), a.clone(), b.clone(), b.clone());
            if side == 0 {
                ap[[i, j]] += STEP;
                am[[i, j]] -= STEP;
            } else {
                bp[[i, j]] += STEP;
                bm[[i, j]] -= STEP;
            }
            let fd = (loss(&ap, &bp) - loss(&am, &bm)) / (2.0 * STEP);
            check = check.merge(GradCheck {
                probes: 1,
                worst_rel_err: rel_err(fd, g),
            });
        }
    }
    check
}
