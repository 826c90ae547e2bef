//! Dense network with batch normalisation, inverted dropout and the three
//! mixture heads, with hand-written reverse-mode gradients.

use ndarray::{Array1, Array2, Axis, Zip};
use rand::Rng;

use super::density::{component_log_density_unchecked, Family, MixtureParams};
use super::MdnConfig;
use crate::{Error, Result};

pub(crate) const BN_MOMENTUM: f64 = 0.9;
pub(crate) const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active, batch norm on batch statistics.
    Train,
    /// Deterministic: no dropout, batch norm on running statistics.
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Dense {
    /// `fan_in x fan_out`
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    fn init<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, limit: f64, rng: &mut R) -> Self {
        let w = Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-limit..limit));
        Dense {
            w,
            b: Array1::zeros(fan_out),
        }
    }

    fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w) + &self.b
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

impl BatchNorm {
    fn new(width: usize) -> Self {
        BatchNorm {
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Network {
    pub hidden: Vec<Dense>,
    pub bn: Option<BatchNorm>,
    pub mu_head: Dense,
    pub scale_head: Dense,
    pub alpha_head: Dense,
}

/// Raw head outputs for a batch, before the softmax/exponential
/// constraints are applied.
pub(crate) struct Heads {
    pub logits: Array2<f64>,
    pub mu: Array2<f64>,
    pub scale_pre: Array2<f64>,
}

struct BnCache {
    xhat: Array2<f64>,
    std_inv: Array1<f64>,
    batch_mean: Array1<f64>,
    batch_var: Array1<f64>,
}

pub(crate) struct Cache {
    mode: Mode,
    inputs: Vec<Array2<f64>>,
    relu_out: Vec<Array2<f64>>,
    bn: Option<BnCache>,
    dropout: Vec<Option<Array2<f64>>>,
    last_hidden: Array2<f64>,
}

impl Cache {
    /// Batch mean and (biased) variance seen by the batch-norm layer.
    pub fn batch_stats(&self) -> Option<(&Array1<f64>, &Array1<f64>)> {
        self.bn.as_ref().map(|c| (&c.batch_mean, &c.batch_var))
    }
}

/// Gradients in the order of [`Network::params_mut`].
pub(crate) type Grads = Vec<Vec<f64>>;

impl Network {
    pub fn init<R: Rng + ?Sized>(cfg: &MdnConfig, rng: &mut R) -> Self {
        let mut fan_in = cfg.input_dim;
        let mut hidden = Vec::with_capacity(cfg.hidden.len());
        for &width in &cfg.hidden {
            hidden.push(Dense::init(fan_in, width, (6.0 / fan_in as f64).sqrt(), rng));
            fan_in = width;
        }
        let head_limit = (3.0 / fan_in as f64).sqrt();
        let out = cfg.num_components * cfg.weight_dim;
        let mu_head = Dense::init(fan_in, out, head_limit, rng);
        let scale_head = Dense::init(fan_in, out, head_limit, rng);
        let alpha_head = Dense::init(fan_in, cfg.num_components, head_limit, rng);
        let bn = cfg.batch_norm.then(|| BatchNorm::new(cfg.hidden[0]));
        Network {
            hidden,
            bn,
            mu_head,
            scale_head,
            alpha_head,
        }
    }

    /// Every trainable tensor as a flat slice: hidden layers (W, b) in
    /// order, batch-norm (gamma, beta), then the mu, scale and alpha heads.
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for layer in &mut self.hidden {
            out.push(layer.w.as_slice_mut().expect("standard layout"));
            out.push(layer.b.as_slice_mut().expect("standard layout"));
        }
        if let Some(bn) = &mut self.bn {
            out.push(bn.gamma.as_slice_mut().expect("standard layout"));
            out.push(bn.beta.as_slice_mut().expect("standard layout"));
        }
        for head in [&mut self.mu_head, &mut self.scale_head, &mut self.alpha_head] {
            out.push(head.w.as_slice_mut().expect("standard layout"));
            out.push(head.b.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn param_count(&mut self) -> usize {
        self.params_mut().iter().map(|p| p.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        let dense_ok = |d: &Dense| d.w.iter().chain(d.b.iter()).all(|v| v.is_finite());
        self.hidden.iter().all(dense_ok)
            && dense_ok(&self.mu_head)
            && dense_ok(&self.scale_head)
            && dense_ok(&self.alpha_head)
            && self.bn.as_ref().is_none_or(|bn| {
                bn.gamma
                    .iter()
                    .chain(bn.beta.iter())
                    .chain(bn.running_mean.iter())
                    .chain(bn.running_var.iter())
                    .all(|v| v.is_finite())
            })
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        cfg: &MdnConfig,
        x: &Array2<f64>,
        mode: Mode,
        rng: &mut R,
    ) -> (Heads, Cache) {
        let batch = x.nrows();
        let mut inputs = Vec::with_capacity(self.hidden.len());
        let mut relu_out = Vec::with_capacity(self.hidden.len());
        let mut dropout = Vec::with_capacity(self.hidden.len());
        let mut bn_cache = None;
        let mut h = x.clone();
        for (l, layer) in self.hidden.iter().enumerate() {
            let mut a = layer.forward(&h);
            a.mapv_inplace(|v| v.max(0.0));
            inputs.push(std::mem::replace(&mut h, Array2::zeros((0, 0))));
            let mut y = a.clone();
            relu_out.push(a);
            if l == 0 {
                if let Some(bn) = &self.bn {
                    let (out, cache) = bn_forward(bn, &y, mode);
                    y = out;
                    bn_cache = Some(cache);
                }
            }
            let mask = if mode == Mode::Train && cfg.dropout_rate > 0.0 && cfg.dropout_after.contains(&l) {
                let keep = 1.0 - cfg.dropout_rate;
                let m = Array2::from_shape_fn((batch, y.ncols()), |_| {
                    if rng.random::<f64>() < cfg.dropout_rate {
                        0.0
                    } else {
                        1.0 / keep
                    }
                });
                y *= &m;
                Some(m)
            } else {
                None
            };
            dropout.push(mask);
            h = y;
        }
        let heads = Heads {
            logits: self.alpha_head.forward(&h),
            mu: self.mu_head.forward(&h),
            scale_pre: self.scale_head.forward(&h),
        };
        let cache = Cache {
            mode,
            inputs,
            relu_out,
            bn: bn_cache,
            dropout,
            last_hidden: h,
        };
        (heads, cache)
    }

    /// Back-propagates head gradients to every parameter.
    pub fn backward(
        &self,
        cache: &Cache,
        d_logits: &Array2<f64>,
        d_mu: &Array2<f64>,
        d_scale_pre: &Array2<f64>,
    ) -> Grads {
        let h = &cache.last_hidden;
        let mut head_grads = Vec::with_capacity(6);
        let mut dh = Array2::<f64>::zeros(h.raw_dim());
        for (head, dz) in [
            (&self.mu_head, d_mu),
            (&self.scale_head, d_scale_pre),
            (&self.alpha_head, d_logits),
        ] {
            head_grads.push(h.t().dot(dz).into_raw_vec_and_offset().0);
            head_grads.push(dz.sum_axis(Axis(0)).to_vec());
            dh += &dz.dot(&head.w.t());
        }

        let mut layer_grads: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(self.hidden.len());
        let mut bn_grads = None;
        for l in (0..self.hidden.len()).rev() {
            if let Some(mask) = &cache.dropout[l] {
                dh *= mask;
            }
            if l == 0 {
                if let (Some(bn), Some(bc)) = (&self.bn, &cache.bn) {
                    let (dx, dgamma, dbeta) = bn_backward(bn, bc, &dh, cache.mode);
                    dh = dx;
                    bn_grads = Some((dgamma, dbeta));
                }
            }
            Zip::from(&mut dh).and(&cache.relu_out[l]).for_each(|g, &a| {
                if a <= 0.0 {
                    *g = 0.0;
                }
            });
            let dw = cache.inputs[l].t().dot(&dh);
            let db = dh.sum_axis(Axis(0));
            if l > 0 {
                dh = dh.dot(&self.hidden[l].w.t());
            }
            layer_grads.push((dw.into_raw_vec_and_offset().0, db.to_vec()));
        }
        layer_grads.reverse();

        let mut grads = Vec::with_capacity(layer_grads.len() * 2 + 8);
        for (dw, db) in layer_grads {
            grads.push(dw);
            grads.push(db);
        }
        if let Some((dg, dbeta)) = bn_grads {
            grads.push(dg);
            grads.push(dbeta);
        } else if self.bn.is_some() {
            unreachable!("batch-norm cache missing");
        }
        grads.extend(head_grads);
        grads
    }

    /// Moves batch-norm running statistics towards the batch statistics
    /// recorded in a train-mode cache.
    pub fn update_running_stats(&mut self, cache: &Cache) {
        if let (Some(bn), Some((mean, var))) = (&mut self.bn, cache.batch_stats()) {
            Zip::from(&mut bn.running_mean).and(mean).for_each(|r, &m| {
                *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * m;
            });
            Zip::from(&mut bn.running_var).and(var).for_each(|r, &v| {
                *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * v;
            });
        }
    }
}

fn bn_forward(bn: &BatchNorm, x: &Array2<f64>, mode: Mode) -> (Array2<f64>, BnCache) {
    let (mean, var) = match mode {
        Mode::Train => {
            let mean = x.mean_axis(Axis(0)).expect("non-empty batch");
            let var = x.var_axis(Axis(0), 0.0);
            (mean, var)
        }
        Mode::Eval => (bn.running_mean.clone(), bn.running_var.clone()),
    };
    let std_inv = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
    let xhat = (x - &mean) * &std_inv;
    let y = &xhat * &bn.gamma + &bn.beta;
    (
        y,
        BnCache {
            xhat,
            std_inv,
            batch_mean: mean,
            batch_var: var,
        },
    )
}

fn bn_backward(bn: &BatchNorm, c: &BnCache, dy: &Array2<f64>, mode: Mode) -> (Array2<f64>, Vec<f64>, Vec<f64>) {
    let dgamma = (dy * &c.xhat).sum_axis(Axis(0));
    let dbeta = dy.sum_axis(Axis(0));
    let dxhat = dy * &bn.gamma;
    let dx = match mode {
        Mode::Eval => &dxhat * &c.std_inv,
        Mode::Train => {
            let n = dy.nrows() as f64;
            let sum_dxhat = dxhat.sum_axis(Axis(0));
            let sum_dxhat_xhat = (&dxhat * &c.xhat).sum_axis(Axis(0));
            let centred = &dxhat * n - &sum_dxhat - &c.xhat * &sum_dxhat_xhat;
            centred * &(&c.std_inv / n)
        }
    };
    (dx, dgamma.to_vec(), dbeta.to_vec())
}

/// Converts raw head outputs for row `i` into constrained mixture parameters.
pub(crate) fn mixture_row(heads: &Heads, i: usize, family: Family, d: usize, floor: f64) -> MixtureParams {
    let logits = heads.logits.row(i);
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let alpha = exps.iter().map(|e| e / sum).collect();
    let q = heads.logits.ncols();
    let mu_row = heads.mu.row(i);
    let s_row = heads.scale_pre.row(i);
    let mu = (0..q).map(|k| (0..d).map(|m| mu_row[k * d + m]).collect()).collect();
    let scale = (0..q)
        .map(|k| (0..d).map(|m| s_row[k * d + m].exp() + floor).collect())
        .collect();
    MixtureParams {
        family,
        alpha,
        mu,
        scale,
    }
}

/// Gradients with respect to `(logits, mu, pre-exponential scale)`.
pub(crate) type HeadGrads = (Array2<f64>, Array2<f64>, Array2<f64>);

/// Mean NLL over the batch and its gradients with respect to the raw head
/// outputs (`logits`, `mu`, pre-exponential scale).
pub(crate) fn nll_with_head_grads(
    heads: &Heads,
    targets: &Array2<f64>,
    family: Family,
    floor: f64,
) -> Result<(f64, HeadGrads)> {
    let batch = targets.nrows();
    let d = targets.ncols();
    let q = heads.logits.ncols();
    let mut d_logits = Array2::zeros((batch, q));
    let mut d_mu = Array2::zeros((batch, q * d));
    let mut d_scale = Array2::zeros((batch, q * d));
    let inv_b = 1.0 / batch as f64;
    let mut total = 0.0;
    let mut comp = vec![0.0; q];
    for i in 0..batch {
        let p = mixture_row(heads, i, family, d, floor);
        let w = targets.row(i);
        let w = w.as_slice().expect("standard layout");
        for k in 0..q {
            comp[k] = p.alpha[k].ln() + component_log_density_unchecked(family, w, &p.mu[k], &p.scale[k]);
        }
        let lse = super::density::log_sum_exp(&comp);
        if !lse.is_finite() {
            return Err(Error::NonFinite(format!("log-likelihood of sample {i}")));
        }
        total -= lse;
        for k in 0..q {
            let r = (comp[k] - lse).exp();
            d_logits[(i, k)] = (p.alpha[k] - r) * inv_b;
            for m in 0..d {
                let (mu, s) = (p.mu[k][m], p.scale[k][m]);
                let diff = w[m] - mu;
                let (dmu, dscale) = match family {
                    Family::Normal => (diff / (s * s), -1.0 / s + diff * diff / (s * s * s)),
                    Family::Laplace => (diff.signum() / s, -1.0 / s + diff.abs() / (s * s)),
                };
                d_mu[(i, k * d + m)] = -r * dmu * inv_b;
                let ds_dpre = heads.scale_pre[(i, k * d + m)].exp();
                d_scale[(i, k * d + m)] = -r * dscale * ds_dpre * inv_b;
            }
        }
    }
    Ok((total * inv_b, (d_logits, d_mu, d_scale)))
}
