use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};

use super::Scalar;
use crate::error::{Error, Result};

/// Norm floor for cosine similarity.
pub const COSINE_EPS: f64 = 1e-8;

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let (na, nb) = (norm(a), norm(b));
    if !(na >= COSINE_EPS && nb >= COSINE_EPS) {
        return Err(Error::DegenerateNorm(COSINE_EPS));
    }
    Ok((na, nb))
}

/// Cosine of the angle between `a` and `b`. Errors on near-zero vectors.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    let (na, nb) = check_pair(a, b)?;
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Cosine plus its gradients with respect to `a` and `b`.
pub fn cosine_similarity_grad(a: &[f64], b: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let (na, nb) = check_pair(a, b)?;
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let c = dot / (na * nb);
    let inv = 1.0 / (na * nb);
    let da = a
        .iter()
        .zip(b)
        .map(|(x, y)| y * inv - c * x / (na * na))
        .collect();
    let db = a
        .iter()
        .zip(b)
        .map(|(x, y)| x * inv - c * y / (nb * nb))
        .collect();
    Ok((c, da, db))
}

/// Row-wise cosine with the norm floored at [`COSINE_EPS`].
pub fn cosine_rows<T: Scalar>(a: ArrayView2<T>, b: ArrayView2<T>) -> Array1<T> {
    assert_eq!(a.dim(), b.dim(), "cosine_rows shape mismatch");
    let mut out = Array1::zeros(a.nrows());
    Zip::from(&mut out)
        .and(a.rows())
        .and(b.rows())
        .for_each(|o, ra, rb| {
            let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
            for (x, y) in ra.iter().zip(rb) {
                let (x, y) = (x.as_f64(), y.as_f64());
                dot += x * y;
                na += x * x;
                nb += y * y;
            }
            let denom = na.sqrt().max(COSINE_EPS) * nb.sqrt().max(COSINE_EPS);
            *o = T::of(dot / denom);
        });
    out
}

/// Backward pass of [`cosine_rows`]: `upstream[i]` is the gradient of the loss
/// with respect to row `i`'s cosine.
pub fn cosine_rows_grad<T: Scalar>(
    a: ArrayView2<T>,
    b: ArrayView2<T>,
    upstream: &Array1<T>,
) -> (Array2<T>, Array2<T>) {
    assert_eq!(a.dim(), b.dim(), "cosine_rows_grad shape mismatch");
    let mut da = Array2::zeros(a.raw_dim());
    let mut db = Array2::zeros(b.raw_dim());
    for (i, ((ra, rb), g)) in a.axis_iter(Axis(0)).zip(b.axis_iter(Axis(0))).zip(upstream).enumerate() {
        let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
        for (x, y) in ra.iter().zip(rb) {
            let (x, y) = (x.as_f64(), y.as_f64());
            dot += x * y;
            na += x * x;
            nb += y * y;
        }
        let (na, nb) = (na.sqrt().max(COSINE_EPS), nb.sqrt().max(COSINE_EPS));
        let c = dot / (na * nb);
        let g = g.as_f64();
        let inv = g / (na * nb);
        for (j, (x, y)) in ra.iter().zip(rb).enumerate() {
            let (x, y) = (x.as_f64(), y.as_f64());
            da[[i, j]] = T::of(y * inv - g * c * x / (na * na));
            db[[i, j]] = T::of(x * inv - g * c * y / (nb * nb));
        }
    }
    (da, db)
}
