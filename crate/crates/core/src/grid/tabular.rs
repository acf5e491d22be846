use crate::error::{Error, Result};

/// Finite deterministic system with explicit successor lists, for hand-checkable
/// fixed points of the same backup the lattice solver uses.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularChain {
    pub successors: Vec<Vec<usize>>,
    pub margin: Vec<f64>,
}

impl TabularChain {
    pub fn new(successors: Vec<Vec<usize>>, margin: Vec<f64>) -> Result<Self> {
        if successors.len() != margin.len() {
            return Err(Error::DimensionMismatch {
                expected: margin.len(),
                got: successors.len(),
            });
        }
        let n = margin.len();
        if successors.iter().any(|s| s.is_empty() || s.iter().any(|&t| t >= n)) {
            return Err(Error::InvalidParameter("every state needs valid successors".into()));
        }
        Ok(Self { successors, margin })
    }

    /// The two-state example: `A → B`, `B → B`.
    pub fn two_state(margin_a: f64, margin_b: f64) -> Self {
        Self::new(vec![vec![1], vec![1]], vec![margin_a, margin_b]).expect("valid chain")
    }

    pub fn backup(&self, v: &[f64], gamma: f64) -> Vec<f64> {
        self.successors
            .iter()
            .zip(&self.margin)
            .map(|(succ, &l)| {
                let best = succ.iter().map(|&t| v[t]).fold(f64::NEG_INFINITY, f64::max);
                (1.0 - gamma) * l + gamma * l.min(best)
            })
            .collect()
    }

    /// Iterates from `V₀ = ℓ` until the sup-norm change is below `tol`.
    pub fn solve(&self, gamma: f64, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
        let mut v = self.margin.clone();
        for iterations in 1..=max_iter {
            let next = self.backup(&v, gamma);
            let residual = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            v = next;
            if residual < tol {
                return Ok(v);
            }
            if iterations == max_iter {
                return Err(Error::NotConverged { iterations, residual });
            }
        }
        Ok(v)
    }

    pub fn shifted(&self, delta: f64) -> Self {
        Self {
            successors: self.successors.clone(),
            margin: self.margin.iter().map(|l| l - delta).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_state_chain_hand_fixed_point() {
        let v = TabularChain::two_state(1.0, -1.0).solve(0.9, 1e-15, 1000).unwrap();
        assert_eq!(v, vec![-0.8, -1.0]);
    }

    #[test]
    fn shifted_chain_matches_threshold_shift() {
        let chain = TabularChain::two_state(1.0, -1.0);
        let v = chain.shifted(0.5).solve(0.9, 1e-15, 1000).unwrap();
        assert!((v[0] + 1.3).abs() < 1e-12);
        assert!((v[1] + 1.5).abs() < 1e-12);
    }
}
