use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::Scalar;
use crate::error::{Error, Result};

/// Variance floor inside layer normalization.
pub const LAYER_NORM_EPS: f64 = 1e-7;

static NEXT_NET_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_NET_ID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Silu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Silu => 2,
            Activation::Tanh => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            0 => Activation::Identity,
            1 => Activation::Relu,
            2 => Activation::Silu,
            3 => Activation::Tanh,
            _ => return None,
        })
    }

    #[inline]
    pub fn apply<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Identity => y,
            Activation::Relu => {
                if y > T::zero() {
                    y
                } else {
                    T::zero()
                }
            }
            Activation::Silu => y / (T::one() + (-y).exp()),
            Activation::Tanh => y.tanh(),
        }
    }

    /// Derivative with respect to the pre-activation `y`. ReLU uses 0 at the kink.
    #[inline]
    pub fn derivative<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Identity => T::one(),
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Silu => {
                let s = T::one() / (T::one() + (-y).exp());
                s * (T::one() + y * (T::one() - s))
            }
            Activation::Tanh => {
                let t = y.tanh();
                T::one() - t * t
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm<T> {
    pub gain: Array1<T>,
    pub offset: Array1<T>,
}

/// Linear map, optional layer normalization, then activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    /// `out × in`.
    pub weight: Array2<T>,
    pub bias: Array1<T>,
    pub norm: Option<LayerNorm<T>>,
    pub activation: Activation,
}

impl<T: Scalar> Dense<T> {
    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }

    fn check(&self) -> Result<()> {
        let out = self.output_dim();
        if self.bias.len() != out {
            return Err(Error::ShapeMismatch(format!(
                "bias {} for {} outputs",
                self.bias.len(),
                out
            )));
        }
        if let Some(n) = &self.norm {
            if n.gain.len() != out || n.offset.len() != out {
                return Err(Error::ShapeMismatch("layer-norm parameter length".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub out: usize,
    pub norm: bool,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(out: usize, norm: bool, activation: Activation) -> Self {
        Self {
            out,
            norm,
            activation,
        }
    }
}

#[derive(Debug)]
pub struct MlpNet<T = f32> {
    layers: Vec<Dense<T>>,
    id: u64,
    version: u64,
}

impl<T: Scalar> Clone for MlpNet<T> {
    fn clone(&self) -> Self {
        Self {
            layers: self.layers.clone(),
            id: fresh_id(),
            version: 0,
        }
    }
}

impl<T: Scalar> PartialEq for MlpNet<T> {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

#[derive(Debug, Clone)]
struct LayerCache<T> {
    input: Array2<T>,
    pre_act: Array2<T>,
    xhat: Option<Array2<T>>,
    inv_std: Option<Array1<T>>,
}

/// Intermediates of one forward pass, tied to the network state that made it.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    net_id: u64,
    version: u64,
    layers: Vec<LayerCache<T>>,
}

impl<T> ForwardCache<T> {
    pub fn batch_size(&self) -> usize {
        self.layers.first().map_or(0, |l| l.input.nrows())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
    pub gain: Option<Array1<T>>,
    pub offset: Option<Array1<T>>,
}

/// Parameter gradients mirroring an [`MlpNet`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle<T> {
    pub layers: Vec<LayerGrad<T>>,
}

impl<T: Scalar> GradientBundle<T> {
    pub fn zeros_like(net: &MlpNet<T>) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weight: Array2::zeros(l.weight.raw_dim()),
                    bias: Array1::zeros(l.bias.len()),
                    gain: l.norm.as_ref().map(|n| Array1::zeros(n.gain.len())),
                    offset: l.norm.as_ref().map(|n| Array1::zeros(n.offset.len())),
                })
                .collect(),
        }
    }

    /// Flat views in the same order as [`MlpNet::tensors`].
    pub fn tensors(&self) -> Vec<&[T]> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(l.weight.as_slice().expect("standard layout"));
            out.push(l.bias.as_slice().expect("standard layout"));
            if let (Some(g), Some(o)) = (&l.gain, &l.offset) {
                out.push(g.as_slice().expect("standard layout"));
                out.push(o.as_slice().expect("standard layout"));
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.push(l.weight.as_slice_mut().expect("standard layout"));
            out.push(l.bias.as_slice_mut().expect("standard layout"));
            if let (Some(g), Some(o)) = (&mut l.gain, &mut l.offset) {
                out.push(g.as_slice_mut().expect("standard layout"));
                out.push(o.as_slice_mut().expect("standard layout"));
            }
        }
        out
    }

    pub fn max_abs(&self) -> T {
        self.tensors()
            .into_iter()
            .flat_map(|t| t.iter().copied())
            .fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn scale(&mut self, k: T) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v = *v * k);
        }
    }

    pub fn add_assign(&mut self, other: &GradientBundle<T>) -> Result<()> {
        let theirs = other.tensors();
        let mut mine = self.tensors_mut();
        if mine.len() != theirs.len() {
            return Err(Error::ShapeMismatch("gradient bundle layout".into()));
        }
        for (m, t) in mine.iter_mut().zip(theirs) {
            if m.len() != t.len() {
                return Err(Error::ShapeMismatch("gradient tensor length".into()));
            }
            m.iter_mut().zip(t).for_each(|(a, b)| *a = *a + *b);
        }
        Ok(())
    }
}

impl<T: Scalar> MlpNet<T> {
    /// Uniform `±1/√fan_in` weights, zero biases, unit gain and zero offset.
    pub fn new<R: Rng + ?Sized>(input_dim: usize, specs: &[LayerSpec], rng: &mut R) -> Result<Self> {
        if input_dim == 0 || specs.is_empty() || specs.iter().any(|s| s.out == 0) {
            return Err(Error::InvalidParameter("empty network layout".into()));
        }
        let mut layers = Vec::with_capacity(specs.len());
        let mut fan_in = input_dim;
        for spec in specs {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let weight =
                Array2::from_shape_fn((spec.out, fan_in), |_| T::of(rng.gen_range(-bound..bound)));
            let norm = spec.norm.then(|| LayerNorm {
                gain: Array1::from_elem(spec.out, T::one()),
                offset: Array1::zeros(spec.out),
            });
            layers.push(Dense {
                weight,
                bias: Array1::zeros(spec.out),
                norm,
                activation: spec.activation,
            });
            fan_in = spec.out;
        }
        Self::from_layers(layers)
    }

    pub fn from_layers(layers: Vec<Dense<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidParameter("network without layers".into()));
        }
        for l in &layers {
            l.check()?;
        }
        for w in layers.windows(2) {
            if w[0].output_dim() != w[1].input_dim() {
                return Err(Error::DimensionMismatch {
                    expected: w[0].output_dim(),
                    got: w[1].input_dim(),
                });
            }
        }
        Ok(Self {
            layers,
            id: fresh_id(),
            version: 0,
        })
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    /// Mutable access to the layers; invalidates outstanding caches.
    pub fn layers_mut(&mut self) -> &mut [Dense<T>] {
        self.version += 1;
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn tensors(&self) -> Vec<&[T]> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(l.weight.as_slice().expect("standard layout"));
            out.push(l.bias.as_slice().expect("standard layout"));
            if let Some(n) = &l.norm {
                out.push(n.gain.as_slice().expect("standard layout"));
                out.push(n.offset.as_slice().expect("standard layout"));
            }
        }
        out
    }

    /// Flat mutable parameter views; invalidates outstanding caches.
    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        self.version += 1;
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.push(l.weight.as_slice_mut().expect("standard layout"));
            out.push(l.bias.as_slice_mut().expect("standard layout"));
            if let Some(n) = &mut l.norm {
                out.push(n.gain.as_slice_mut().expect("standard layout"));
                out.push(n.offset.as_slice_mut().expect("standard layout"));
            }
        }
        out
    }

    /// Polyak averaging: `self ← (1 − τ)·self + τ·online`.
    pub fn soft_update_from(&mut self, online: &MlpNet<T>, tau: T) -> Result<()> {
        let src = online.tensors();
        let mut dst = self.tensors_mut();
        if src.len() != dst.len() || src.iter().zip(&dst).any(|(a, b)| a.len() != b.len()) {
            return Err(Error::ShapeMismatch("soft update between different layouts".into()));
        }
        let keep = T::one() - tau;
        for (d, s) in dst.iter_mut().zip(src) {
            d.iter_mut().zip(s).for_each(|(a, b)| *a = keep * *a + tau * *b);
        }
        Ok(())
    }

    /// Converts every parameter to another float type.
    pub fn cast<U: Scalar>(&self) -> MlpNet<U> {
        let conv1 = |a: &Array1<T>| a.mapv(|v| U::of(v.as_f64()));
        let layers = self
            .layers
            .iter()
            .map(|l| Dense {
                weight: l.weight.mapv(|v| U::of(v.as_f64())),
                bias: conv1(&l.bias),
                norm: l.norm.as_ref().map(|n| LayerNorm {
                    gain: conv1(&n.gain),
                    offset: conv1(&n.offset),
                }),
                activation: l.activation,
            })
            .collect();
        MlpNet {
            layers,
            id: fresh_id(),
            version: 0,
        }
    }

    /// Batched forward pass (`batch × input_dim`) keeping what backward needs.
    pub fn forward(&self, x: ArrayView2<T>) -> Result<(Array2<T>, ForwardCache<T>)> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let out = self.run(x, Some(&mut caches))?;
        Ok((
            out,
            ForwardCache {
                net_id: self.id,
                version: self.version,
                layers: caches,
            },
        ))
    }

    /// Forward pass without caching.
    pub fn predict(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        self.run(x, None)
    }

    /// Single-vector convenience wrapper around [`MlpNet::predict`].
    pub fn predict_one(&self, x: &[T]) -> Result<Vec<T>> {
        let view = ArrayView2::from_shape((1, x.len()), x)
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        Ok(self.predict(view)?.into_raw_vec())
    }

    fn run(&self, x: ArrayView2<T>, mut caches: Option<&mut Vec<LayerCache<T>>>) -> Result<Array2<T>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        let mut h = x.to_owned();
        for layer in &self.layers {
            let mut u = h.dot(&layer.weight.t());
            u += &layer.bias;
            let (y, xhat, inv_std) = match &layer.norm {
                Some(norm) => {
                    let (y, xhat, inv) = layer_norm_forward(u, norm);
                    (y, Some(xhat), Some(inv))
                }
                None => (u, None, None),
            };
            let act = layer.activation;
            let a = if act == Activation::Identity {
                y.clone()
            } else {
                y.mapv(|v| act.apply(v))
            };
            match caches.as_deref_mut() {
                Some(c) => c.push(LayerCache {
                    input: std::mem::replace(&mut h, a),
                    pre_act: y,
                    xhat,
                    inv_std,
                }),
                None => h = a,
            }
        }
        Ok(h)
    }

    fn check_cache(&self, cache: &ForwardCache<T>, grad_out: &ArrayView2<T>) -> Result<()> {
        if cache.net_id != self.id || cache.version != self.version {
            return Err(Error::StaleCache(format!(
                "cache from net {} v{}, network is {} v{}",
                cache.net_id, cache.version, self.id, self.version
            )));
        }
        if cache.layers.len() != self.layers.len() {
            return Err(Error::StaleCache("layer count".into()));
        }
        let b = cache.batch_size();
        if grad_out.nrows() != b || grad_out.ncols() != self.output_dim() {
            return Err(Error::ShapeMismatch(format!(
                "output gradient {}x{}, expected {}x{}",
                grad_out.nrows(),
                grad_out.ncols(),
                b,
                self.output_dim()
            )));
        }
        Ok(())
    }

    /// Parameter and input gradients of the scalar whose output gradient is `grad_out`.
    pub fn backward(
        &self,
        cache: &ForwardCache<T>,
        grad_out: ArrayView2<T>,
    ) -> Result<(GradientBundle<T>, Array2<T>)> {
        self.check_cache(cache, &grad_out)?;
        let mut grads = Vec::with_capacity(self.layers.len());
        let dx = self.back(cache, grad_out, Some(&mut grads));
        grads.reverse();
        Ok((GradientBundle { layers: grads }, dx))
    }

    /// Input gradient only; skips the weight-gradient products.
    pub fn backward_input(&self, cache: &ForwardCache<T>, grad_out: ArrayView2<T>) -> Result<Array2<T>> {
        self.check_cache(cache, &grad_out)?;
        Ok(self.back(cache, grad_out, None))
    }

    fn back(
        &self,
        cache: &ForwardCache<T>,
        grad_out: ArrayView2<T>,
        mut grads: Option<&mut Vec<LayerGrad<T>>>,
    ) -> Array2<T> {
        let mut g = grad_out.to_owned();
        for (layer, lc) in self.layers.iter().zip(&cache.layers).rev() {
            let act = layer.activation;
            if act != Activation::Identity {
                g.zip_mut_with(&lc.pre_act, |gi, &y| *gi = *gi * act.derivative(y));
            }
            let mut norm_grads = None;
            if let (Some(norm), Some(xhat), Some(inv)) = (&layer.norm, &lc.xhat, &lc.inv_std) {
                if grads.is_some() {
                    let dgain = (&g * xhat).sum_axis(Axis(0));
                    let doffset = g.sum_axis(Axis(0));
                    norm_grads = Some((dgain, doffset));
                }
                layer_norm_backward(&mut g, xhat, inv, &norm.gain);
            }
            if let Some(out) = grads.as_deref_mut() {
                let dw = g.t().dot(&lc.input);
                let db = g.sum_axis(Axis(0));
                let (gain, offset) = match norm_grads {
                    Some((a, b)) => (Some(a), Some(b)),
                    None => (None, None),
                };
                out.push(LayerGrad {
                    weight: dw,
                    bias: db,
                    gain,
                    offset,
                });
            }
            g = g.dot(&layer.weight);
        }
        g
    }
}

fn layer_norm_forward<T: Scalar>(mut u: Array2<T>, norm: &LayerNorm<T>) -> (Array2<T>, Array2<T>, Array1<T>) {
    let n = T::of(u.ncols() as f64);
    let eps = T::of(LAYER_NORM_EPS);
    let mut inv_std = Array1::zeros(u.nrows());
    for (mut row, inv) in u.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let r = row.as_slice_mut().expect("standard layout");
        let mean = r.iter().fold(T::zero(), |s, &v| s + v) / n;
        let var = r.iter().fold(T::zero(), |s, &v| s + (v - mean) * (v - mean)) / n;
        let istd = T::one() / (var + eps).sqrt();
        r.iter_mut().for_each(|v| *v = (*v - mean) * istd);
        *inv = istd;
    }
    let xhat = u;
    let mut y = xhat.clone();
    let (gain, offset) = (
        norm.gain.as_slice().expect("contiguous"),
        norm.offset.as_slice().expect("contiguous"),
    );
    for mut row in y.rows_mut() {
        row.as_slice_mut()
            .expect("standard layout")
            .iter_mut()
            .zip(gain.iter().zip(offset))
            .for_each(|(v, (&g, &o))| *v = *v * g + o);
    }
    (y, xhat, inv_std)
}

/// Turns `dy` (in place) into the gradient with respect to the pre-norm input.
fn layer_norm_backward<T: Scalar>(g: &mut Array2<T>, xhat: &Array2<T>, inv: &Array1<T>, gain: &Array1<T>) {
    let n = T::of(g.ncols() as f64);
    let gain = gain.as_slice().expect("contiguous");
    for ((mut grow, xrow), &istd) in g.rows_mut().into_iter().zip(xhat.rows()).zip(inv) {
        let d = grow.as_slice_mut().expect("standard layout");
        let x = xrow.to_slice().expect("standard layout");
        d.iter_mut().zip(gain).for_each(|(v, &k)| *v = *v * k);
        let mut m1 = T::zero();
        let mut m2 = T::zero();
        for (&dv, &xv) in d.iter().zip(x) {
            m1 += dv;
            m2 += dv * xv;
        }
        m1 = m1 / n;
        m2 = m2 / n;
        d.iter_mut().zip(x).for_each(|(dv, &xv)| *dv = istd * (*dv - m1 - xv * m2));
    }
}
