//! The trained model bundle and its on-disk JSON format.
//!
//! Top-level fields of a model file:
//!
//! | field | contents |
//! |---|---|
//! | `format_version` | integer, currently [`FORMAT_VERSION`] |
//! | `mdn_config` | architecture ([`MdnConfig`]) |
//! | `train_config_echo` | optimiser settings used ([`TrainConfig`]) |
//! | `basis_config`, `ridge_config`, `kernel_config` | embedding and similarity settings |
//! | `training_map_ids` | ids of the reference maps, in feature order |
//! | `training_map_pointsets` | occupied points of each reference map as `[x, y]` pairs |
//! | `hidden_layers` | `[{weights: [[..fan_out]; fan_in], bias: [..]}]` |
//! | `batch_norm` | `{gamma, beta, running_mean, running_var}` or `null` |
//! | `mu_head`, `scale_head`, `alpha_head` | dense heads, same layout as hidden layers |
//! | `target_scaling` | `{mean, std}`: head outputs map to weights as `mean + std * z` |
//! | `train_history` | mean training NLL per epoch, in weight space |
//!
//! Floats are written in shortest round-trip form and parsed with exact
//! rounding, so a save/load cycle preserves every value bit for bit.

use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::network::{BatchNorm, Dense, Network};
use super::{Mdn, MdnConfig, MixtureParams, TargetScaling, TrainConfig};
use crate::embedding::{BasisConfig, RidgeConfig};
use crate::grid::PointSet;
use crate::similarity::{KernelConfig, ReferenceMaps, SimilarityFeature};
use crate::{Error, Point, Result};

pub const FORMAT_VERSION: u32 = 1;

/// Everything needed to generate trajectories for a new map: the network,
/// the embedding basis and the frozen reference maps.
#[derive(Debug, Clone)]
pub struct MdnModel {
    pub mdn: Mdn,
    pub basis: BasisConfig,
    pub ridge: RidgeConfig,
    pub kernel: KernelConfig,
    references: ReferenceMaps,
}

impl MdnModel {
    pub fn new(
        mdn: Mdn,
        basis: BasisConfig,
        ridge: RidgeConfig,
        kernel: KernelConfig,
        references: ReferenceMaps,
    ) -> Result<Self> {
        if mdn.config().input_dim != references.len() {
            return Err(Error::Dimension {
                expected: mdn.config().input_dim,
                got: references.len(),
            });
        }
        if mdn.config().weight_dim != 2 * basis.num_basis() {
            return Err(Error::Dimension {
                expected: mdn.config().weight_dim,
                got: 2 * basis.num_basis(),
            });
        }
        basis.validate()?;
        ridge.validate()?;
        kernel.validate()?;
        Ok(MdnModel {
            mdn,
            basis,
            ridge,
            kernel,
            references,
        })
    }

    pub fn references(&self) -> &ReferenceMaps {
        &self.references
    }

    pub fn query_feature(&self, map: &PointSet) -> Result<SimilarityFeature> {
        self.references.query_feature(map, &self.kernel)
    }

    /// Eval-mode mixture for a map.
    pub fn mixture_for(&self, map: &PointSet) -> Result<MixtureParams> {
        let phi = self.query_feature(map)?;
        self.mdn.predict(&phi.values)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(&self.to_file()).map_err(|e| Error::ModelFormat(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::ModelFormat(format!("malformed JSON: {e}")))?;
        match value.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == FORMAT_VERSION as u64 => {}
            Some(v) => {
                return Err(Error::ModelFormat(format!(
                    "unsupported format_version {v} (expected {FORMAT_VERSION})"
                )))
            }
            None => return Err(Error::ModelFormat("missing format_version".into())),
        }
        let file: ModelFile = serde_json::from_value(value).map_err(|e| Error::ModelFormat(e.to_string()))?;
        Self::from_file(file)
    }

    fn to_file(&self) -> ModelFile {
        let net = &self.mdn.network;
        ModelFile {
            format_version: FORMAT_VERSION,
            mdn_config: self.mdn.config.clone(),
            train_config_echo: self.mdn.train_config.clone(),
            basis_config: self.basis.clone(),
            ridge_config: self.ridge,
            kernel_config: self.kernel,
            training_map_ids: self.references.ids().to_vec(),
            training_map_pointsets: self
                .references
                .point_sets()
                .iter()
                .map(|s| s.points().iter().map(|p| [p.x, p.y]).collect())
                .collect(),
            hidden_layers: net.hidden.iter().map(DenseFile::from).collect(),
            batch_norm: net.bn.as_ref().map(|bn| BatchNormFile {
                gamma: bn.gamma.to_vec(),
                beta: bn.beta.to_vec(),
                running_mean: bn.running_mean.to_vec(),
                running_var: bn.running_var.to_vec(),
            }),
            mu_head: DenseFile::from(&net.mu_head),
            scale_head: DenseFile::from(&net.scale_head),
            alpha_head: DenseFile::from(&net.alpha_head),
            target_scaling: self.mdn.scaling.clone(),
            train_history: self.mdn.history.clone(),
        }
    }

    fn from_file(f: ModelFile) -> Result<Self> {
        let cfg = f.mdn_config;
        cfg.validate()?;
        f.train_config_echo.validate()?;
        let bad = |msg: String| Error::ModelFormat(msg);
        if f.hidden_layers.len() != cfg.hidden.len() {
            return Err(bad(format!(
                "{} hidden layers in file, config says {}",
                f.hidden_layers.len(),
                cfg.hidden.len()
            )));
        }
        let mut fan_in = cfg.input_dim;
        let mut hidden = Vec::with_capacity(cfg.hidden.len());
        for (i, (layer, &width)) in f.hidden_layers.into_iter().zip(&cfg.hidden).enumerate() {
            hidden.push(layer.into_dense(fan_in, width, &format!("hidden layer {i}"))?);
            fan_in = width;
        }
        let out = cfg.num_components * cfg.weight_dim;
        let mu_head = f.mu_head.into_dense(fan_in, out, "mu head")?;
        let scale_head = f.scale_head.into_dense(fan_in, out, "scale head")?;
        let alpha_head = f.alpha_head.into_dense(fan_in, cfg.num_components, "alpha head")?;
        let bn = match (cfg.batch_norm, f.batch_norm) {
            (true, Some(b)) => {
                let w = cfg.hidden[0];
                if [&b.gamma, &b.beta, &b.running_mean, &b.running_var]
                    .iter()
                    .any(|v| v.len() != w)
                {
                    return Err(bad(format!("batch-norm vectors must have length {w}")));
                }
                Some(BatchNorm {
                    gamma: Array1::from(b.gamma),
                    beta: Array1::from(b.beta),
                    running_mean: Array1::from(b.running_mean),
                    running_var: Array1::from(b.running_var),
                })
            }
            (false, None) => None,
            (true, None) => return Err(bad("config enables batch norm but file has none".into())),
            (false, Some(_)) => return Err(bad("file has batch norm but config disables it".into())),
        };
        let network = Network {
            hidden,
            bn,
            mu_head,
            scale_head,
            alpha_head,
        };
        if !network.all_finite() {
            return Err(bad("non-finite parameter".into()));
        }
        let sets = f
            .training_map_pointsets
            .into_iter()
            .map(|pts| PointSet(pts.into_iter().map(|[x, y]| Point::new(x, y)).collect()))
            .collect();
        let references = ReferenceMaps::new(f.training_map_ids, sets)?;
        f.target_scaling
            .validate(cfg.weight_dim)
            .map_err(|e| bad(format!("target_scaling: {e}")))?;
        let mdn = Mdn {
            config: cfg,
            train_config: f.train_config_echo,
            network,
            scaling: f.target_scaling,
            history: f.train_history,
        };
        Self::new(mdn, f.basis_config, f.ridge_config, f.kernel_config, references)
    }
}

pub fn save_model(model: &MdnModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, &model.to_file()).map_err(|e| Error::ModelFormat(e.to_string()))?;
    w.write_all(b"\n")
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MdnModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    MdnModel::from_json(&text)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format_version: u32,
    mdn_config: MdnConfig,
    train_config_echo: TrainConfig,
    basis_config: BasisConfig,
    ridge_config: RidgeConfig,
    kernel_config: KernelConfig,
    training_map_ids: Vec<String>,
    training_map_pointsets: Vec<Vec<[f64; 2]>>,
    hidden_layers: Vec<DenseFile>,
    batch_norm: Option<BatchNormFile>,
    mu_head: DenseFile,
    scale_head: DenseFile,
    alpha_head: DenseFile,
    target_scaling: TargetScaling,
    train_history: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DenseFile {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

impl From<&Dense> for DenseFile {
    fn from(d: &Dense) -> Self {
        DenseFile {
            weights: d.w.rows().into_iter().map(|r| r.to_vec()).collect(),
            bias: d.b.to_vec(),
        }
    }
}

impl DenseFile {
    fn into_dense(self, fan_in: usize, fan_out: usize, what: &str) -> Result<Dense> {
        if self.weights.len() != fan_in || self.weights.iter().any(|r| r.len() != fan_out) || self.bias.len() != fan_out
        {
            return Err(Error::ModelFormat(format!(
                "{what}: expected {fan_in}x{fan_out} weights and {fan_out} biases"
            )));
        }
        let flat: Vec<f64> = self.weights.into_iter().flatten().collect();
        let w = Array2::from_shape_vec((fan_in, fan_out), flat).map_err(|e| Error::ModelFormat(e.to_string()))?;
        Ok(Dense {
            w,
            b: Array1::from(self.bias),
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BatchNormFile {
    gamma: Vec<f64>,
    beta: Vec<f64>,
    running_mean: Vec<f64>,
    running_var: Vec<f64>,
}
