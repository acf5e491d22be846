use ndarray::{s, Array2, ArrayView2, Axis};
use rand::rngs::StdRng;
use rand::SeedableRng;

use super::{Conditioning, GammaSchedule, PrototypeSet};
use crate::error::{Error, Result};
use crate::latent::{LatentVec, SimilarityModel};
use crate::nn::{Activation, LayerSpec, MlpNet};

/// Per-feature affine map `(x − mean) · scale`, fitted once on training inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f32>,
    pub scale: Vec<f32>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    pub fn fit(x: ArrayView2<f32>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut scale = Vec::with_capacity(x.ncols());
        for col in x.columns() {
            let m = col.iter().map(|&v| v as f64).sum::<f64>() / n;
            let var = col.iter().map(|&v| (v as f64 - m).powi(2)).sum::<f64>() / n;
            mean.push(m as f32);
            scale.push((1.0 / var.sqrt().max(1e-6)) as f32);
        }
        Self { mean, scale }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &mut [f32]) {
        for ((v, m), k) in x.iter_mut().zip(&self.mean).zip(&self.scale) {
            *v = (*v - m) * k;
        }
    }

    pub fn apply_rows(&self, x: &mut Array2<f32>) {
        for mut row in x.rows_mut() {
            self.apply(row.as_slice_mut().expect("standard layout"));
        }
    }
}

/// Critic `Q(s, a; c)`, actor `π(s; c)` and their target copies, plus everything
/// needed to turn latents into network inputs.
#[derive(Debug, Clone)]
pub struct FilterNets {
    conditioning: Conditioning,
    similarity: SimilarityModel,
    prototypes: Option<PrototypeSet>,
    state_scale: Standardizer,
    cond_scale: Standardizer,
    pub(crate) critic: MlpNet<f32>,
    pub(crate) actor: MlpNet<f32>,
    pub(crate) target_critic: MlpNet<f32>,
    pub(crate) target_actor: MlpNet<f32>,
    pub gamma: GammaSchedule,
    pub steps_trained: u64,
    pub a_max: f64,
}

/// `[s | c]`, with `c` repeated on every row.
pub(crate) fn actor_input(s: ArrayView2<f32>, c: ArrayView2<f32>) -> Array2<f32> {
    let n = s.nrows();
    let mut x = Array2::zeros((n, s.ncols() + c.ncols()));
    x.slice_mut(s![.., ..s.ncols()]).assign(&s);
    x.slice_mut(s![.., s.ncols()..]).assign(&c.broadcast((n, c.ncols())).expect("row broadcast"));
    x
}

/// `[s | a | c]`.
pub(crate) fn critic_input(s: ArrayView2<f32>, a: ArrayView2<f32>, c: ArrayView2<f32>) -> Array2<f32> {
    let n = s.nrows();
    let ds = s.ncols();
    let mut x = Array2::zeros((n, ds + 1 + c.ncols()));
    x.slice_mut(s![.., ..ds]).assign(&s);
    x.slice_mut(s![.., ds..ds + 1]).assign(&a);
    x.slice_mut(s![.., ds + 1..]).assign(&c.broadcast((n, c.ncols())).expect("row broadcast"));
    x
}

impl FilterNets {
    pub fn critic_specs(hidden: &[usize]) -> Vec<LayerSpec> {
        let mut specs: Vec<LayerSpec> = hidden.iter().map(|&h| LayerSpec::new(h, true, Activation::Relu)).collect();
        specs.push(LayerSpec::new(1, false, Activation::Identity));
        specs
    }

    pub fn actor_specs(hidden: &[usize]) -> Vec<LayerSpec> {
        let mut specs: Vec<LayerSpec> = hidden.iter().map(|&h| LayerSpec::new(h, true, Activation::Relu)).collect();
        specs.push(LayerSpec::new(1, false, Activation::Tanh));
        specs
    }

    /// Input dimensions `(state, condition)` implied by a strategy.
    pub fn input_dims(
        conditioning: Conditioning,
        similarity: &SimilarityModel,
        latent_dim: usize,
    ) -> Result<(usize, usize)> {
        let projected = match (conditioning.projects_constraint(), similarity.projector()) {
            (false, _) => 0,
            (true, Some(p)) => p.net().output_dim(),
            (true, None) => return Err(Error::MissingProjector(conditioning.to_string())),
        };
        let s_dim = if conditioning.projects_state() { projected } else { latent_dim };
        let c_dim = if conditioning.projects_constraint() { projected } else { latent_dim };
        Ok((s_dim, c_dim))
    }

    #[allow(clippy::too_many_arguments)]
    pub fn new(
        conditioning: Conditioning,
        similarity: SimilarityModel,
        prototypes: Option<PrototypeSet>,
        state_scale: Standardizer,
        cond_scale: Standardizer,
        hidden: &[usize],
        a_max: f64,
        gamma: GammaSchedule,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = StdRng::seed_from_u64(seed);
        let critic = MlpNet::new(state_scale.dim() + 1 + cond_scale.dim(), &Self::critic_specs(hidden), &mut rng)?;
        let actor = MlpNet::new(state_scale.dim() + cond_scale.dim(), &Self::actor_specs(hidden), &mut rng)?;
        Self::from_parts(conditioning, similarity, prototypes, state_scale, cond_scale, critic, actor, a_max, gamma, 0)
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        conditioning: Conditioning,
        similarity: SimilarityModel,
        prototypes: Option<PrototypeSet>,
        state_scale: Standardizer,
        cond_scale: Standardizer,
        critic: MlpNet<f32>,
        actor: MlpNet<f32>,
        a_max: f64,
        gamma: GammaSchedule,
        steps_trained: u64,
    ) -> Result<Self> {
        if conditioning == Conditioning::Zp && prototypes.is_none() {
            return Err(Error::MissingPrototypes);
        }
        // Projected-input strategies need the projector; the latent dimension is
        // read off the prototypes or the projector, whichever exists.
        let latent_dim = if conditioning.projects_state() {
            similarity.projector().map(|p| p.latent_dim()).unwrap_or(0)
        } else {
            state_scale.dim()
        };
        let (s_dim, c_dim) = Self::input_dims(conditioning, &similarity, latent_dim)?;
        if let Some(p) = &prototypes {
            if p.dim() != c_dim {
                return Err(Error::DimensionMismatch { expected: c_dim, got: p.dim() });
            }
        }
        let checks = [
            (s_dim, state_scale.dim()),
            (c_dim, cond_scale.dim()),
            (s_dim + 1 + c_dim, critic.input_dim()),
            (s_dim + c_dim, actor.input_dim()),
            (1, critic.output_dim()),
            (1, actor.output_dim()),
        ];
        for (expected, got) in checks {
            if expected != got {
                return Err(Error::DimensionMismatch { expected, got });
            }
        }
        if actor.layers().last().map(|l| l.activation) != Some(Activation::Tanh) {
            return Err(Error::ShapeMismatch("actor must end in a tanh head".into()));
        }
        Ok(Self {
            conditioning,
            similarity,
            prototypes,
            state_scale,
            cond_scale,
            target_critic: critic.clone(),
            target_actor: actor.clone(),
            critic,
            actor,
            gamma,
            steps_trained,
            a_max,
        })
    }

    pub fn conditioning(&self) -> Conditioning {
        self.conditioning
    }

    pub fn similarity(&self) -> &SimilarityModel {
        &self.similarity
    }

    /// Checksum of the projector the margins were computed with ("raw" without one).
    pub fn projector_checksum(&self) -> String {
        self.similarity.checksum()
    }

    pub fn prototypes(&self) -> Option<&PrototypeSet> {
        self.prototypes.as_ref()
    }

    pub fn critic(&self) -> &MlpNet<f32> {
        &self.critic
    }

    pub fn actor(&self) -> &MlpNet<f32> {
        &self.actor
    }

    pub fn target_critic(&self) -> &MlpNet<f32> {
        &self.target_critic
    }

    pub fn target_actor(&self) -> &MlpNet<f32> {
        &self.target_actor
    }

    pub fn state_scale(&self) -> &Standardizer {
        &self.state_scale
    }

    pub fn cond_scale(&self) -> &Standardizer {
        &self.cond_scale
    }

    pub fn state_dim(&self) -> usize {
        self.state_scale.dim()
    }

    pub fn cond_dim(&self) -> usize {
        self.cond_scale.dim()
    }

    /// Latent width the nets expect.
    pub fn latent_dim(&self) -> usize {
        match self.similarity.projector() {
            Some(p) if self.conditioning.projects_state() => p.latent_dim(),
            _ => self.state_dim(),
        }
    }

    /// Network-ready state rows for a batch of latents.
    pub fn state_inputs(&self, z: ArrayView2<f32>) -> Result<Array2<f32>> {
        if z.ncols() != self.latent_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.latent_dim(),
                got: z.ncols(),
            });
        }
        let mut s = if self.conditioning.projects_state() {
            self.similarity.embed_batch(z)?
        } else {
            z.to_owned()
        };
        self.state_scale.apply_rows(&mut s);
        Ok(s)
    }

    /// Constraint representation before standardization.
    pub fn raw_condition(&self, z_c: &LatentVec) -> Result<Vec<f32>> {
        if z_c.dim() != self.latent_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.latent_dim(),
                got: z_c.dim(),
            });
        }
        Ok(match self.conditioning {
            Conditioning::Zz => z_c.0.clone(),
            Conditioning::Zp => self.prototypes.as_ref().ok_or(Error::MissingPrototypes)?.nearest(&z_c.0).1,
            Conditioning::Zzt | Conditioning::Ztzt => self.similarity.embed(z_c),
        })
    }

    /// Network-ready conditioning vector for a constraint latent.
    pub fn condition(&self, z_c: &LatentVec) -> Result<Vec<f32>> {
        let mut c = self.raw_condition(z_c)?;
        self.cond_scale.apply(&mut c);
        Ok(c)
    }

    fn check_condition(&self, c: &[f32]) -> Result<()> {
        if c.len() != self.cond_dim() {
            return Err(Error::StrategyMismatch(format!(
                "{} expects a {}-dimensional condition, got {}",
                self.conditioning,
                self.cond_dim(),
                c.len()
            )));
        }
        Ok(())
    }

    /// `(V, π)` on prepared inputs; actions are normalized to `[−1, 1]`.
    pub fn evaluate_inputs(&self, s: ArrayView2<f32>, c: &[f32]) -> Result<(Vec<f32>, Vec<f32>)> {
        self.check_condition(c)?;
        let c = ArrayView2::from_shape((1, c.len()), c).expect("row view");
        let a = self.actor.predict(actor_input(s, c).view())?;
        let q = self.critic.predict(critic_input(s, a.view(), c).view())?;
        Ok((q.index_axis(Axis(1), 0).to_vec(), a.index_axis(Axis(1), 0).to_vec()))
    }

    /// Safety values `V(z; z_c) = Q(z, π(z; z_c); z_c)` for each latent row.
    pub fn values(&self, z: ArrayView2<f32>, z_c: &LatentVec) -> Result<Vec<f32>> {
        let s = self.state_inputs(z)?;
        Ok(self.evaluate_inputs(s.view(), &self.condition(z_c)?)?.0)
    }

    pub fn value(&self, z: &LatentVec, z_c: &LatentVec) -> Result<f64> {
        let z = ArrayView2::from_shape((1, z.dim()), &z.0).expect("row view");
        Ok(self.values(z, z_c)?[0] as f64)
    }

    /// Value under an explicit, already standardized conditioning vector.
    pub fn value_with_condition(&self, z: &LatentVec, c: &[f32]) -> Result<f64> {
        let z = ArrayView2::from_shape((1, z.dim()), &z.0).expect("row view");
        let s = self.state_inputs(z)?;
        Ok(self.evaluate_inputs(s.view(), c)?.0[0] as f64)
    }

    /// Fallback action in rad/s.
    pub fn fallback_action(&self, z: &LatentVec, z_c: &LatentVec) -> Result<f64> {
        let z = ArrayView2::from_shape((1, z.dim()), &z.0).expect("row view");
        let s = self.state_inputs(z)?;
        let (_, a) = self.evaluate_inputs(s.view(), &self.condition(z_c)?)?;
        Ok(a[0] as f64 * self.a_max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latent::FailureProjector;

    fn nets(c: Conditioning) -> Result<FilterNets> {
        let proj = FailureProjector::new_random(16, 1);
        let (s, cd) = FilterNets::input_dims(c, &SimilarityModel::Projected(proj.clone()), 16)?;
        let protos = (c == Conditioning::Zp).then(|| PrototypeSet {
            centers: Array2::from_shape_fn((3, 16), |(i, j)| (i * 16 + j) as f32 * 0.01),
            assignments: vec![],
            objective_trace: vec![],
        });
        FilterNets::new(
            c,
            SimilarityModel::Projected(proj),
            protos,
            Standardizer::identity(s),
            Standardizer::identity(cd),
            &[8, 8],
            1.25,
            GammaSchedule {
                start: 0.85,
                end: 0.9999,
                anneal_steps: 10,
            },
            3,
        )
    }

    #[test]
    fn input_dimensions_follow_strategy() {
        let dims: Vec<(usize, usize)> = Conditioning::ALL
            .iter()
            .map(|&c| {
                let n = nets(c).unwrap();
                (n.critic().input_dim(), n.actor().input_dim())
            })
            .collect();
        assert_eq!(dims, vec![(33, 32), (33, 32), (49, 48), (65, 64)]);
    }

    #[test]
    fn projected_strategies_need_projector() {
        for c in [Conditioning::Zzt, Conditioning::Ztzt] {
            assert!(matches!(
                FilterNets::input_dims(c, &SimilarityModel::Raw, 16),
                Err(Error::MissingProjector(_))
            ));
        }
        assert_eq!(FilterNets::input_dims(Conditioning::Zz, &SimilarityModel::Raw, 16).unwrap(), (16, 16));
    }

    #[test]
    fn prototype_condition_is_a_center() {
        let n = nets(Conditioning::Zp).unwrap();
        let z_c = LatentVec(n.prototypes().unwrap().center(2).iter().map(|v| v + 1e-4).collect());
        assert_eq!(n.condition(&z_c).unwrap(), n.prototypes().unwrap().center(2));
    }

    #[test]
    fn wrong_condition_width_is_a_strategy_mismatch() {
        let n = nets(Conditioning::Zz).unwrap();
        let z = LatentVec(vec![0.1; 16]);
        assert!(matches!(n.value_with_condition(&z, &[0.0; 32]), Err(Error::StrategyMismatch(_))));
    }

    #[test]
    fn fallback_within_actuation_limit_and_batch_matches_single() {
        let n = nets(Conditioning::Zzt).unwrap();
        let z_c = LatentVec((0..16).map(|i| i as f32 * 0.03 - 0.2).collect());
        let zs = Array2::from_shape_fn((5, 16), |(i, j)| ((i * 7 + j) as f32 * 0.37).sin() * 0.5);
        let batch = n.values(zs.view(), &z_c).unwrap();
        for (row, v) in zs.rows().into_iter().zip(&batch) {
            let z = LatentVec(row.to_vec());
            assert!((n.value(&z, &z_c).unwrap() - *v as f64).abs() < 1e-6);
            assert!(n.fallback_action(&z, &z_c).unwrap().abs() <= 1.25);
        }
    }
}
