use std::io::{Read, Write};

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::pairs::PairSampler;
use super::{Encoder, LatentVec, ProjectedVec};
use crate::error::{Error, Result};
use crate::nn::{
    checksum_hex, cosine_rows, cosine_rows_grad, cosine_similarity, read_asnn, write_asnn,
    Activation, AdamWConfig, LayerSpec, MlpNet, OptimState,
};
use crate::sim::{flatten_states, PrivilegedState, Trajectory};

pub const PROJECTED_DIM: usize = 32;

/// Two-layer map `d_z → d_z (layer-norm, SiLU) → 32 (layer-norm)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FailureProjector {
    net: MlpNet<f32>,
}

impl FailureProjector {
    pub fn specs(latent_dim: usize) -> [LayerSpec; 2] {
        [
            LayerSpec::new(latent_dim, true, Activation::Silu),
            LayerSpec::new(PROJECTED_DIM, true, Activation::Identity),
        ]
    }

    pub fn new_random(latent_dim: usize, seed: u64) -> Self {
        let mut rng = StdRng::seed_from_u64(seed);
        let net = MlpNet::new(latent_dim, &Self::specs(latent_dim), &mut rng)
            .expect("projector layout is valid");
        Self { net }
    }

    /// Wraps a network after checking it has the projector architecture.
    pub fn from_net(net: MlpNet<f32>) -> Result<Self> {
        let d = net.input_dim();
        let expected = Self::specs(d);
        let layers = net.layers();
        let ok = layers.len() == 2
            && layers
                .iter()
                .zip(&expected)
                .all(|(l, s)| l.output_dim() == s.out && l.norm.is_some() == s.norm && l.activation == s.activation);
        if !ok {
            return Err(Error::ShapeMismatch("network is not a failure projector".into()));
        }
        Ok(Self { net })
    }

    pub fn net(&self) -> &MlpNet<f32> {
        &self.net
    }

    pub fn latent_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn project(&self, z: &LatentVec) -> ProjectedVec {
        ProjectedVec(self.net.predict_one(&z.0).expect("latent dimension matches projector"))
    }

    pub fn project_batch(&self, z: ArrayView2<f32>) -> Result<Array2<f32>> {
        self.net.predict(z)
    }

    pub fn checksum(&self) -> String {
        checksum_hex(&self.net)
    }

    pub fn write<W: Write>(&self, w: W) -> Result<()> {
        write_asnn(&self.net, w)
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        Self::from_net(read_asnn(r)?)
    }
}

/// How two latents are compared.
#[derive(Debug, Clone, PartialEq)]
pub enum SimilarityModel {
    Projected(FailureProjector),
    /// Cosine directly on the latents (no projector).
    Raw,
}

impl SimilarityModel {
    pub fn projector(&self) -> Option<&FailureProjector> {
        match self {
            SimilarityModel::Projected(p) => Some(p),
            SimilarityModel::Raw => None,
        }
    }

    /// Provenance string stored alongside thresholds and filters.
    pub fn checksum(&self) -> String {
        match self {
            SimilarityModel::Projected(p) => p.checksum(),
            SimilarityModel::Raw => "raw".to_string(),
        }
    }

    /// The vectors cosine is taken over.
    pub fn embed_batch(&self, z: ArrayView2<f32>) -> Result<Array2<f32>> {
        match self {
            SimilarityModel::Projected(p) => p.project_batch(z),
            SimilarityModel::Raw => Ok(z.to_owned()),
        }
    }

    pub fn embed(&self, z: &LatentVec) -> Vec<f32> {
        match self {
            SimilarityModel::Projected(p) => p.project(z).0,
            SimilarityModel::Raw => z.0.clone(),
        }
    }

    pub fn similarity(&self, a: &LatentVec, b: &LatentVec) -> Result<f64> {
        let (ea, eb): (Vec<f64>, Vec<f64>) = (
            self.embed(a).iter().map(|&v| v as f64).collect(),
            self.embed(b).iter().map(|&v| v as f64).collect(),
        );
        cosine_similarity(&ea, &eb)
    }

    /// Failure margin `−sim(z, z_c)`, in `[−1, 1]`.
    pub fn margin(&self, z: &LatentVec, z_c: &LatentVec) -> Result<f64> {
        Ok(-self.similarity(z, z_c)?)
    }

    pub fn similarity_rows(&self, a: ArrayView2<f32>, b: ArrayView2<f32>) -> Result<Array1<f32>> {
        let (ea, eb) = (self.embed_batch(a)?, self.embed_batch(b)?);
        Ok(cosine_rows(ea.view(), eb.view()).mapv(|v| v.clamp(-1.0, 1.0)))
    }
}

/// Failure margin under the projector: `−cos(project(z), project(z_c))`.
pub fn latent_margin(proj: &FailureProjector, z: &LatentVec, z_c: &LatentVec) -> Result<f64> {
    SimilarityModel::Projected(proj.clone()).margin(z, z_c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectorTrainConfig {
    pub pairs: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Fraction of pairs whose partner is drawn from the first state's neighbourhood.
    pub local_fraction: f64,
    pub local_radius: f64,
    pub holdout_pairs: usize,
    pub seed: u64,
}

impl Default for ProjectorTrainConfig {
    fn default() -> Self {
        Self {
            pairs: 200_000,
            epochs: 60,
            batch: 256,
            lr: 1e-3,
            weight_decay: 1e-4,
            local_fraction: 0.5,
            local_radius: 1.2,
            holdout_pairs: 20_000,
            seed: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectorReport {
    pub train_mse: f64,
    /// Fresh pairs from the training pair distribution.
    pub heldout_mse: f64,
    /// Fresh pairs of two independent uniform states.
    pub uniform_heldout_mse: f64,
    /// Fresh local pairs only.
    pub local_heldout_mse: f64,
    pub epoch_losses: Vec<f64>,
}

struct PairSet {
    i: Vec<u32>,
    j: Vec<u32>,
    target: Vec<f32>,
}

impl PairSet {
    fn draw(sampler: &PairSampler, n: usize, rng: &mut StdRng) -> Self {
        let idx = sampler.sample_many(n, rng);
        let target = idx.iter().map(|&(i, j)| sampler.target(i as usize, j as usize)).collect();
        let (i, j) = idx.into_iter().unzip();
        Self { i, j, target }
    }
}

fn gather(latents: &Array2<f32>, idx: &[u32]) -> Array2<f32> {
    let d = latents.ncols();
    let mut out = Array2::zeros((idx.len(), d));
    for (row, &k) in out.rows_mut().into_iter().zip(idx) {
        let mut row = row;
        row.assign(&latents.row(k as usize));
    }
    out
}

fn pair_mse(proj: &FailureProjector, latents: &Array2<f32>, pairs: &PairSet) -> f64 {
    if pairs.i.is_empty() {
        return 0.0;
    }
    let model = SimilarityModel::Projected(proj.clone());
    let mut total = 0.0;
    for start in (0..pairs.i.len()).step_by(4096) {
        let end = (start + 4096).min(pairs.i.len());
        let a = gather(latents, &pairs.i[start..end]);
        let b = gather(latents, &pairs.j[start..end]);
        let sim = model.similarity_rows(a.view(), b.view()).expect("projector dims");
        total += sim
            .iter()
            .zip(&pairs.target[start..end])
            .map(|(p, t)| ((p - t) as f64).powi(2))
            .sum::<f64>();
    }
    total / pairs.i.len() as f64
}

/// Fits the projector so that cosine of projected latents regresses onto the
/// position similarity of the underlying states.
pub fn train_projector(
    data: &[Trajectory],
    encoder: &Encoder,
    cfg: &ProjectorTrainConfig,
) -> Result<(FailureProjector, ProjectorReport)> {
    let states = flatten_states(data);
    if states.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if cfg.batch == 0 || !(0.0..=1.0).contains(&cfg.local_fraction) {
        return Err(Error::InvalidParameter("projector batch/local_fraction".into()));
    }
    train_projector_on_states(&states, encoder, cfg)
}

pub fn train_projector_on_states(
    states: &[PrivilegedState],
    encoder: &Encoder,
    cfg: &ProjectorTrainConfig,
) -> Result<(FailureProjector, ProjectorReport)> {
    let mut rng = StdRng::seed_from_u64(cfg.seed);
    let latents = encoder.encode_batch(states);
    let sampler = PairSampler::new(states, cfg.local_fraction, cfg.local_radius);
    let train = PairSet::draw(&sampler, cfg.pairs, &mut rng);
    let heldout = PairSet::draw(&sampler, cfg.holdout_pairs, &mut rng);
    let uniform = PairSet::draw(
        &PairSampler::new(states, 0.0, cfg.local_radius),
        cfg.holdout_pairs,
        &mut rng,
    );
    let local = PairSet::draw(
        &PairSampler::new(states, 1.0, cfg.local_radius),
        cfg.holdout_pairs,
        &mut rng,
    );

    let mut proj = FailureProjector::new_random(encoder.dim(), rng.gen());
    let mut opt = OptimState::new(
        &proj.net,
        AdamWConfig {
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            ..AdamWConfig::default()
        },
    );
    let mut order: Vec<usize> = (0..train.i.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let ii: Vec<u32> = chunk.iter().map(|&k| train.i[k]).collect();
            let jj: Vec<u32> = chunk.iter().map(|&k| train.j[k]).collect();
            let t = Array1::from_iter(chunk.iter().map(|&k| train.target[k]));
            let b = chunk.len();
            let input = concatenate![Axis(0), gather(&latents, &ii), gather(&latents, &jj)];
            let (out, cache) = proj.net.forward(input.view())?;
            let (pa, pb) = (out.slice(s![..b, ..]), out.slice(s![b.., ..]));
            let sim = cosine_rows(pa, pb);
            let err = &sim - &t;
            sum += err.iter().map(|e| (*e as f64).powi(2)).sum::<f64>();
            let upstream = err.mapv(|e| 2.0 * e / b as f32);
            let (ga, gb) = cosine_rows_grad(pa, pb, &upstream);
            let gout = concatenate![Axis(0), ga, gb];
            let (grads, _) = proj.net.backward(&cache, gout.view())?;
            opt.step(&mut proj.net, &grads)?;
        }
        let mean = sum / train.i.len().max(1) as f64;
        log::info!("projector epoch {epoch}: train mse {mean:.5}");
        epoch_losses.push(mean);
    }
    let report = ProjectorReport {
        train_mse: pair_mse(&proj, &latents, &train),
        heldout_mse: pair_mse(&proj, &latents, &heldout),
        uniform_heldout_mse: pair_mse(&proj, &latents, &uniform),
        local_heldout_mse: pair_mse(&proj, &latents, &local),
        epoch_losses,
    };
    Ok((proj, report))
}

/// Fraction of probes where swapping the heading at a fixed position moves the
/// similarity to a random constraint by at most `tol`.
pub fn heading_invariance(
    model: &SimilarityModel,
    encoder: &Encoder,
    probes: usize,
    tol: f64,
    seed: u64,
) -> f64 {
    let b = encoder.config().bound;
    let mut rng = StdRng::seed_from_u64(seed);
    let mut s1 = Vec::with_capacity(probes);
    let mut s2 = Vec::with_capacity(probes);
    let mut c = Vec::with_capacity(probes);
    let pi = std::f64::consts::PI;
    for _ in 0..probes {
        let (x, y) = (rng.gen_range(-b..b), rng.gen_range(-b..b));
        s1.push(PrivilegedState::new(x, y, rng.gen_range(-pi..pi)));
        s2.push(PrivilegedState::new(x, y, rng.gen_range(-pi..pi)));
        c.push(PrivilegedState::new(rng.gen_range(-b..b), rng.gen_range(-b..b), 0.0));
    }
    let zc = encoder.encode_batch(&c);
    let a = model
        .similarity_rows(encoder.encode_batch(&s1).view(), zc.view())
        .expect("dims");
    let bb = model
        .similarity_rows(encoder.encode_batch(&s2).view(), zc.view())
        .expect("dims");
    let ok = a
        .iter()
        .zip(&bb)
        .filter(|(p, q)| ((**p - **q) as f64).abs() <= tol)
        .count();
    ok as f64 / probes.max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latent::EncoderConfig;
    use crate::sim::{generate_dataset, DubinsParams};

    fn small_cfg() -> ProjectorTrainConfig {
        ProjectorTrainConfig {
            pairs: 4000,
            epochs: 2,
            holdout_pairs: 500,
            ..ProjectorTrainConfig::default()
        }
    }

    #[test]
    fn architecture_and_output_dim() {
        let p = FailureProjector::new_random(16, 0);
        let layers = p.net().layers();
        assert_eq!(layers.len(), 2);
        assert_eq!(layers[0].output_dim(), 16);
        assert_eq!(layers[1].output_dim(), PROJECTED_DIM);
        assert!(layers.iter().all(|l| l.norm.is_some()));
        assert_eq!(layers[0].activation, Activation::Silu);
        assert_eq!(layers[1].activation, Activation::Identity);
        assert_eq!(p.project(&LatentVec(vec![0.1; 16])).0.len(), 32);
    }

    #[test]
    fn zero_weight_projector_outputs_offset() {
        let mut p = FailureProjector::new_random(16, 0);
        for l in p.net.layers_mut() {
            l.weight.fill(0.0);
            l.bias.fill(0.0);
        }
        let offset: Vec<f32> = (0..32).map(|k| k as f32 * 0.1 - 1.0).collect();
        p.net.layers_mut()[1].norm.as_mut().unwrap().offset = Array1::from(offset.clone());
        assert_eq!(p.project(&LatentVec(vec![0.3; 16])).0, offset);
        assert_eq!(p.project(&LatentVec(vec![-0.7; 16])).0, offset);
    }

    #[test]
    fn margin_examples() {
        let p = FailureProjector::new_random(16, 3);
        let e = Encoder::new(EncoderConfig::default());
        let z = e.encode(&PrivilegedState::new(0.1, 0.2, 0.3));
        let zc = e.encode(&PrivilegedState::new(-1.0, 0.5, 0.0));
        assert!((latent_margin(&p, &z, &z).unwrap() + 1.0).abs() < 1e-6);
        let m = latent_margin(&p, &z, &zc).unwrap();
        assert_eq!(m, latent_margin(&p, &zc, &z).unwrap());
        assert!((-1.0..=1.0).contains(&m));
        let raw = SimilarityModel::Raw.margin(&z, &zc).unwrap();
        assert!((-1.0..=1.0).contains(&raw));
    }

    #[test]
    fn zero_epochs_returns_initial_weights() {
        let data = generate_dataset(20, &DubinsParams::default(), 1).unwrap();
        let e = Encoder::new(EncoderConfig::default());
        let cfg = ProjectorTrainConfig {
            epochs: 0,
            ..small_cfg()
        };
        let (p, report) = train_projector(&data, &e, &cfg).unwrap();
        let (q, _) = train_projector(&data, &e, &cfg).unwrap();
        assert_eq!(p, q);
        assert!(report.epoch_losses.is_empty());
        assert!(report.heldout_mse.is_finite());
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        let data = generate_dataset(60, &DubinsParams::default(), 2).unwrap();
        let e = Encoder::new(EncoderConfig::default());
        let (p, r) = train_projector(&data, &e, &small_cfg()).unwrap();
        let (q, _) = train_projector(&data, &e, &small_cfg()).unwrap();
        assert_eq!(p, q);
        let (_, init) = train_projector(&data, &e, &ProjectorTrainConfig { epochs: 0, ..small_cfg() }).unwrap();
        assert!(r.heldout_mse < init.heldout_mse);
    }

    #[test]
    fn empty_dataset_rejected() {
        let e = Encoder::new(EncoderConfig::default());
        assert!(matches!(
            train_projector(&[], &e, &small_cfg()),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = FailureProjector::new_random(16, 5);
        let mut buf = Vec::new();
        p.write(&mut buf).unwrap();
        let q = FailureProjector::read(buf.as_slice()).unwrap();
        assert_eq!(p, q);
        assert_eq!(p.checksum(), q.checksum());
    }
}
