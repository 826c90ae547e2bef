//! Mixture density network mapping similarity features to a distribution
//! over trajectory weight vectors.
//!
//! The default architecture is five 500-unit ReLU layers with batch
//! normalisation after the first and 0.25 dropout after the second, third
//! and fourth, feeding three heads: linear means, exponential scales and
//! softmax component weights.

mod density;
mod model;
mod network;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use density::{
    component_log_density, log_sum_exp, nll_loss, sample_component, sample_weights, Family, MixtureParams,
};
pub use model::{load_model, save_model, MdnModel, FORMAT_VERSION};
pub use network::Mode;

use crate::embedding::TrajectoryWeights;
use crate::similarity::SimilarityFeature;
use crate::{Error, Result};
use network::{mixture_row, nll_with_head_grads, Network};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdnConfig {
    /// Length of the similarity feature (number of training maps).
    pub input_dim: usize,
    /// Widths of the ReLU hidden layers.
    pub hidden: Vec<usize>,
    /// Batch normalisation after the first hidden layer.
    pub batch_norm: bool,
    pub dropout_rate: f64,
    /// Zero-based hidden-layer indices followed by dropout.
    pub dropout_after: Vec<usize>,
    pub num_components: usize,
    /// `2M`.
    pub weight_dim: usize,
    pub family: Family,
}

impl MdnConfig {
    /// Five 500-unit layers, batch norm after layer 1, dropout 0.25 after
    /// layers 2-4, four components.
    pub fn new(input_dim: usize, weight_dim: usize, family: Family) -> Self {
        MdnConfig {
            input_dim,
            hidden: vec![500; 5],
            batch_norm: true,
            dropout_rate: 0.25,
            dropout_after: vec![1, 2, 3],
            num_components: 4,
            weight_dim,
            family,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::invalid("input_dim must be positive"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::invalid("hidden layers must be non-empty with positive widths"));
        }
        if self.num_components == 0 {
            return Err(Error::invalid("need at least one mixture component"));
        }
        if self.weight_dim == 0 || !self.weight_dim.is_multiple_of(2) {
            return Err(Error::invalid("weight_dim must be positive and even"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::invalid("dropout_rate must lie in [0, 1)"));
        }
        if let Some(&l) = self.dropout_after.iter().find(|&&l| l >= self.hidden.len()) {
            return Err(Error::invalid(format!("dropout after missing hidden layer {l}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Added to the exponential scale activation.
    pub scale_floor: f64,
    /// Fit the network to per-dimension standardised weights.
    pub standardise_targets: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            scale_floor: 1e-6,
            standardise_targets: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if !(self.scale_floor > 0.0) {
            return Err(Error::invalid("scale_floor must be positive"));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("bad optimiser parameters"));
        }
        Ok(())
    }
}

/// Per-dimension affine map between weight space and the space the network
/// is fitted in: `w = mean + std * z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetScaling {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl TargetScaling {
    pub fn identity(dim: usize) -> Self {
        TargetScaling {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Column means and population standard deviations; constant columns
    /// keep unit scale.
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let dim = rows.first().map_or(0, Vec::len);
        let n = rows.len() as f64;
        let mean: Vec<f64> = (0..dim).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let std = (0..dim)
            .map(|j| {
                let var = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                if var > 1e-24 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        TargetScaling { mean, std }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.mean.len() != dim || self.std.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: self.mean.len().min(self.std.len()),
            });
        }
        if self.mean.iter().any(|v| !v.is_finite()) || self.std.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid("target scaling must be finite with positive std"));
        }
        Ok(())
    }

    fn standardise(&self, w: &[f64]) -> Vec<f64> {
        w.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    /// log of the Jacobian of `z -> w`; the weight-space NLL is the
    /// standardised NLL plus this.
    fn log_det(&self) -> f64 {
        self.std.iter().map(|s| s.ln()).sum()
    }

    fn unstandardise(&self, mut p: MixtureParams) -> MixtureParams {
        for (mu, scale) in p.mu.iter_mut().zip(p.scale.iter_mut()) {
            for j in 0..mu.len() {
                mu[j] = self.mean[j] + self.std[j] * mu[j];
                scale[j] *= self.std[j];
            }
        }
        p
    }
}

/// A trained (or freshly initialised) mixture density network.
#[derive(Debug, Clone, PartialEq)]
pub struct Mdn {
    config: MdnConfig,
    train_config: TrainConfig,
    network: Network,
    scaling: TargetScaling,
    /// Mean training NLL of each epoch, in weight space.
    history: Vec<f64>,
}

impl Mdn {
    /// Randomly initialised network drawn from `rng`.
    pub fn init<R: Rng + ?Sized>(config: MdnConfig, train_config: TrainConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        train_config.validate()?;
        let network = Network::init(&config, rng);
        Ok(Mdn {
            scaling: TargetScaling::identity(config.weight_dim),
            config,
            train_config,
            network,
            history: Vec::new(),
        })
    }

    /// Map from network outputs to weight space; identity until trained
    /// with `standardise_targets`.
    pub fn scaling(&self) -> &TargetScaling {
        &self.scaling
    }

    /// Replaces the output map to weight space.
    pub fn set_scaling(&mut self, scaling: TargetScaling) -> Result<()> {
        scaling.validate(self.config.weight_dim)?;
        self.scaling = scaling;
        Ok(())
    }

    pub fn config(&self) -> &MdnConfig {
        &self.config
    }

    pub fn train_config(&self) -> &TrainConfig {
        &self.train_config
    }

    pub fn history(&self) -> &[f64] {
        &self.history
    }

    pub fn param_count(&mut self) -> usize {
        self.network.param_count()
    }

    /// Mixture parameters for one feature vector.
    pub fn forward<R: Rng + ?Sized>(&self, phi: &[f64], mode: Mode, rng: &mut R) -> Result<MixtureParams> {
        let x = self.input_batch(&[phi])?;
        let (heads, _) = self.network.forward(&self.config, &x, mode, rng);
        let p = mixture_row(
            &heads,
            0,
            self.config.family,
            self.config.weight_dim,
            self.train_config.scale_floor,
        );
        let p = self.scaling.unstandardise(p);
        check_finite(&p)?;
        Ok(p)
    }

    /// Eval-mode forward; deterministic.
    pub fn predict(&self, phi: &[f64]) -> Result<MixtureParams> {
        // eval mode draws nothing from the generator
        self.forward(phi, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0))
    }

    /// Eval-mode forward over a batch of feature vectors.
    pub fn predict_batch(&self, phis: &[&[f64]]) -> Result<Vec<MixtureParams>> {
        if phis.is_empty() {
            return Ok(Vec::new());
        }
        let x = self.input_batch(phis)?;
        let (heads, _) = self
            .network
            .forward(&self.config, &x, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0));
        (0..phis.len())
            .map(|i| {
                let p = mixture_row(
                    &heads,
                    i,
                    self.config.family,
                    self.config.weight_dim,
                    self.train_config.scale_floor,
                );
                let p = self.scaling.unstandardise(p);
                check_finite(&p)?;
                Ok(p)
            })
            .collect()
    }

    /// Mean eval-mode NLL over the flattened `(phi, w)` pairs.
    pub fn mean_nll(&self, dataset: &[(SimilarityFeature, Vec<TrajectoryWeights>)]) -> Result<f64> {
        let (xs, ws) = flatten(dataset, &self.config)?;
        let phis: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
        let params = self.predict_batch(&phis)?;
        nll_loss(&params, &ws)
    }

    fn input_batch(&self, phis: &[&[f64]]) -> Result<Array2<f64>> {
        let n = self.config.input_dim;
        let mut x = Array2::zeros((phis.len(), n));
        for (i, phi) in phis.iter().enumerate() {
            if phi.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    got: phi.len(),
                });
            }
            x.row_mut(i).assign(&ndarray::ArrayView1::from(*phi));
        }
        Ok(x)
    }

    /// Mean weight-space NLL of `targets` and its gradient with respect to
    /// every trainable parameter, in the order of [`Mdn::parameters_mut`].
    pub fn loss_and_gradients<R: Rng + ?Sized>(
        &self,
        phis: &[&[f64]],
        targets: &[Vec<f64>],
        mode: Mode,
        rng: &mut R,
    ) -> Result<(f64, Vec<Vec<f64>>)> {
        if phis.is_empty() || phis.len() != targets.len() {
            return Err(Error::invalid(
                "feature and target batches must be non-empty and aligned",
            ));
        }
        let x = self.input_batch(phis)?;
        let d = self.config.weight_dim;
        if let Some(t) = targets.iter().find(|t| t.len() != d) {
            return Err(Error::Dimension {
                expected: d,
                got: t.len(),
            });
        }
        let z: Vec<Vec<f64>> = targets.iter().map(|t| self.scaling.standardise(t)).collect();
        let y = Array2::from_shape_fn((targets.len(), d), |(i, j)| z[i][j]);
        let (loss, grads, _) = self.loss_and_grads(&x, &y, mode, rng)?;
        Ok((loss + self.scaling.log_det(), grads))
    }

    /// Trainable tensors as flat slices: hidden layers `(W, b)` in order,
    /// batch-norm `(gamma, beta)`, then the mu, scale and alpha heads.
    /// Weight matrices are row-major `fan_in x fan_out`.
    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        self.network.params_mut()
    }

    /// Batch-norm running `(mean, variance)`, if the network has batch norm.
    pub fn running_stats_mut(&mut self) -> Option<(&mut [f64], &mut [f64])> {
        self.network.bn.as_mut().map(|bn| {
            (
                bn.running_mean.as_slice_mut().expect("standard layout"),
                bn.running_var.as_slice_mut().expect("standard layout"),
            )
        })
    }

    pub(crate) fn loss_and_grads<R: Rng + ?Sized>(
        &self,
        x: &Array2<f64>,
        targets: &Array2<f64>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(f64, Vec<Vec<f64>>, network::Cache)> {
        let (heads, cache) = self.network.forward(&self.config, x, mode, rng);
        let (loss, (dl, dm, ds)) =
            nll_with_head_grads(&heads, targets, self.config.family, self.train_config.scale_floor)?;
        let grads = self.network.backward(&cache, &dl, &dm, &ds);
        Ok((loss, grads, cache))
    }
}

fn check_finite(p: &MixtureParams) -> Result<()> {
    let finite = p
        .alpha
        .iter()
        .chain(p.mu.iter().flatten())
        .chain(p.scale.iter().flatten())
        .all(|v| v.is_finite());
    if finite {
        Ok(())
    } else {
        Err(Error::NonFinite("network activations".into()))
    }
}

type Flattened = (Vec<Vec<f64>>, Vec<Vec<f64>>);

fn flatten(dataset: &[(SimilarityFeature, Vec<TrajectoryWeights>)], cfg: &MdnConfig) -> Result<Flattened> {
    let mut xs = Vec::new();
    let mut ws = Vec::new();
    for (phi, weights) in dataset {
        if phi.len() != cfg.input_dim {
            return Err(Error::Dimension {
                expected: cfg.input_dim,
                got: phi.len(),
            });
        }
        for w in weights {
            let v = w.to_concat();
            if v.len() != cfg.weight_dim {
                return Err(Error::Dimension {
                    expected: cfg.weight_dim,
                    got: v.len(),
                });
            }
            xs.push(phi.values.clone());
            ws.push(v);
        }
    }
    if xs.is_empty() {
        return Err(Error::invalid("training set has no (map, trajectory) pairs"));
    }
    Ok((xs, ws))
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    fn new(shapes: &[&mut [f64]]) -> Self {
        Adam {
            m: shapes.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: shapes.iter().map(|p| vec![0.0; p.len()]).collect(),
            t: 0,
        }
    }

    fn step(&mut self, params: Vec<&mut [f64]>, grads: &[Vec<f64>], cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p[i] -= cfg.learning_rate * mhat / (vhat.sqrt() + cfg.epsilon);
            }
        }
    }
}

/// Trains a network on `(phi, weights)` groups.
///
/// Pairs are flattened, reshuffled every epoch and fed in mini-batches to
/// Adam. Initialisation, shuffling and dropout all draw from one ChaCha
/// generator seeded by `train_cfg.seed`, so training is bit-reproducible.
///
/// With `standardise_targets` the network is fitted to per-dimension
/// standardised weights and its outputs are mapped back to weight space.
pub fn train(
    dataset: &[(SimilarityFeature, Vec<TrajectoryWeights>)],
    mdn_cfg: &MdnConfig,
    train_cfg: &TrainConfig,
) -> Result<Mdn> {
    mdn_cfg.validate()?;
    train_cfg.validate()?;
    let (xs, ws) = flatten(dataset, mdn_cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(train_cfg.seed);
    let mut mdn = Mdn::init(mdn_cfg.clone(), train_cfg.clone(), &mut rng)?;
    if train_cfg.standardise_targets {
        mdn.scaling = TargetScaling::fit(&ws);
    }
    let ws: Vec<Vec<f64>> = ws.iter().map(|w| mdn.scaling.standardise(w)).collect();
    let log_det = mdn.scaling.log_det();
    let mut adam = Adam::new(&mdn.network.params_mut());
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let (n_in, d) = (mdn_cfg.input_dim, mdn_cfg.weight_dim);
    for epoch in 0..train_cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (step, chunk) in order.chunks(train_cfg.batch_size).enumerate() {
            let x = Array2::from_shape_fn((chunk.len(), n_in), |(i, j)| xs[chunk[i]][j]);
            let y = Array2::from_shape_fn((chunk.len(), d), |(i, j)| ws[chunk[i]][j]);
            let (loss, grads, cache) = mdn
                .loss_and_grads(&x, &y, Mode::Train, &mut rng)
                .map_err(|e| Error::NonFinite(format!("epoch {epoch}, step {step}: {e}")))?;
            if !loss.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!("loss {loss} at epoch {epoch}, step {step}")));
            }
            adam.step(mdn.network.params_mut(), &grads, train_cfg);
            mdn.network.update_running_stats(&cache);
            epoch_loss += loss * chunk.len() as f64;
        }
        mdn.history.push(epoch_loss / xs.len() as f64 + log_det);
    }
    if !mdn.network.all_finite() {
        return Err(Error::NonFinite("trained parameters".into()));
    }
    Ok(mdn)
}

#[cfg(test)]
mod tests;
