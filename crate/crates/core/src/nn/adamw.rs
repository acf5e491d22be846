use super::{GradientBundle, MlpNet, Scalar};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Rescale the whole gradient when its global L2 norm exceeds this.
    pub clip_norm: Option<f64>,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
            clip_norm: None,
        }
    }
}

impl AdamWConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// Moment estimates for one network.
#[derive(Debug, Clone)]
pub struct OptimState<T> {
    pub config: AdamWConfig,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    t: u64,
}

impl<T: Scalar> OptimState<T> {
    pub fn new(net: &MlpNet<T>, config: AdamWConfig) -> Self {
        let zeros: Vec<Vec<T>> = net.tensors().iter().map(|t| vec![T::zero(); t.len()]).collect();
        Self {
            config,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Decoupled weight decay followed by the bias-corrected Adam update.
    pub fn step(&mut self, net: &mut MlpNet<T>, grads: &GradientBundle<T>) -> Result<()> {
        let g = grads.tensors();
        if g.len() != self.m.len() || g.iter().zip(&self.m).any(|(a, b)| a.len() != b.len()) {
            return Err(Error::ShapeMismatch("gradient does not match optimizer state".into()));
        }
        let c = self.config;
        let scale = match c.clip_norm {
            Some(max) => {
                let norm = g
                    .iter()
                    .flat_map(|t| t.iter())
                    .map(|v| v.as_f64() * v.as_f64())
                    .sum::<f64>()
                    .sqrt();
                if norm > max {
                    max / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        self.t += 1;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        let decay = T::of(1.0 - c.lr * c.weight_decay);
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (nb1, nb2) = (T::of(1.0 - c.beta1), T::of(1.0 - c.beta2));
        let step = T::of(c.lr / bc1);
        let inv_bc2 = T::of(1.0 / bc2);
        let eps = T::of(c.eps);
        let sc = T::of(scale);
        for (((p, g), m), v) in net.tensors_mut().into_iter().zip(g).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                let gi = g[i] * sc;
                m[i] = b1 * m[i] + nb1 * gi;
                v[i] = b2 * v[i] + nb2 * gi * gi;
                p[i] = p[i] * decay - step * m[i] / ((v[i] * inv_bc2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Dense};
    use ndarray::{array, Array1};

    fn one_param_net(w: f64) -> MlpNet<f64> {
        MlpNet::from_layers(vec![Dense {
            weight: array![[w]],
            bias: Array1::zeros(1),
            norm: None,
            activation: Activation::Identity,
        }])
        .unwrap()
    }

    #[test]
    fn first_step_matches_hand_computation() {
        let mut net = one_param_net(2.0);
        let mut grads = GradientBundle::zeros_like(&net);
        grads.layers[0].weight[[0, 0]] = 0.5;
        let cfg = AdamWConfig {
            lr: 0.1,
            weight_decay: 0.01,
            ..AdamWConfig::default()
        };
        let mut opt = OptimState::new(&net, cfg);
        opt.step(&mut net, &grads).unwrap();
        // m̂ = 0.5, v̂ = 0.25, so the Adam part moves by lr·0.5/(0.5 + 1e-8).
        let expected = 2.0 * (1.0 - 0.1 * 0.01) - 0.1 * 0.5 / (0.5 + 1e-8);
        assert!((net.layers()[0].weight[[0, 0]] - expected).abs() < 1e-12);
        // Zero-gradient bias only decays (from zero it stays zero).
        assert_eq!(net.layers()[0].bias[0], 0.0);
    }

    #[test]
    fn second_step_uses_bias_correction() {
        let mut net = one_param_net(1.0);
        let mut grads = GradientBundle::zeros_like(&net);
        grads.layers[0].weight[[0, 0]] = 1.0;
        let cfg = AdamWConfig {
            lr: 0.01,
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        let mut opt = OptimState::new(&net, cfg);
        opt.step(&mut net, &grads).unwrap();
        grads.layers[0].weight[[0, 0]] = -1.0;
        opt.step(&mut net, &grads).unwrap();
        let m = 0.9 * 0.1 - 0.1;
        let v = 0.999 * 0.001 + 0.001;
        let m_hat = m / (1.0 - 0.81);
        let v_hat = v / (1.0 - 0.999f64.powi(2));
        let first = 1.0 - 0.01 * 1.0 / (1.0 + 1e-8);
        let expected = first - 0.01 * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((net.layers()[0].weight[[0, 0]] - expected).abs() < 1e-12);
    }

    #[test]
    fn clip_norm_bounds_effective_gradient() {
        let mut a = one_param_net(0.0);
        let mut b = one_param_net(0.0);
        let mut big = GradientBundle::zeros_like(&a);
        big.layers[0].weight[[0, 0]] = 100.0;
        big.layers[0].bias[0] = -50.0;
        let cfg = AdamWConfig {
            clip_norm: Some(1.0),
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        OptimState::new(&a, cfg).step(&mut a, &big).unwrap();
        OptimState::new(&b, AdamWConfig { clip_norm: None, ..cfg })
            .step(&mut b, &big)
            .unwrap();
        // Adam's first step is scale-invariant, so clipping changes nothing here.
        assert!((a.layers()[0].weight[[0, 0]] - b.layers()[0].weight[[0, 0]]).abs() < 1e-9);
    }

    #[test]
    fn mismatched_gradient_rejected() {
        let mut net = one_param_net(1.0);
        let other = MlpNet::from_layers(vec![Dense {
            weight: array![[1.0, 2.0]],
            bias: Array1::zeros(1),
            norm: None,
            activation: Activation::Identity,
        }])
        .unwrap();
        let grads = GradientBundle::zeros_like(&other);
        let mut opt = OptimState::new(&net, AdamWConfig::default());
        assert!(opt.step(&mut net, &grads).is_err());
    }
}
