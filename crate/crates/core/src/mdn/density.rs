//! Mixture parameters, component densities, the NLL loss and sampling.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Per-element distribution family of a mixture component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Normal,
    Laplace,
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(Family::Normal),
            "laplace" => Ok(Family::Laplace),
            other => Err(Error::invalid(format!("unknown distribution {other:?}"))),
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Family::Normal => "normal",
            Family::Laplace => "laplace",
        })
    }
}

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Mixture over `Q` diagonal components in `D = 2M` dimensions.
///
/// `scale` holds standard deviations for [`Family::Normal`] and Laplace
/// scales `b` for [`Family::Laplace`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams {
    pub family: Family,
    pub alpha: Vec<f64>,
    pub mu: Vec<Vec<f64>>,
    pub scale: Vec<Vec<f64>>,
}

impl MixtureParams {
    pub fn num_components(&self) -> usize {
        self.alpha.len()
    }

    pub fn dim(&self) -> usize {
        self.mu.first().map_or(0, Vec::len)
    }

    /// Checks shapes, the simplex constraint on `alpha` (within 1e-9) and
    /// positivity of every scale.
    pub fn validate(&self) -> Result<()> {
        let q = self.alpha.len();
        if q == 0 || self.mu.len() != q || self.scale.len() != q {
            return Err(Error::invalid("mixture shapes are inconsistent"));
        }
        let d = self.dim();
        if d == 0 || self.mu.iter().chain(&self.scale).any(|row| row.len() != d) {
            return Err(Error::invalid("mixture component dimensions are inconsistent"));
        }
        let sum: f64 = self.alpha.iter().sum();
        if self.alpha.iter().any(|&a| !(a >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "mixture weights do not form a simplex (sum {sum})"
            )));
        }
        if self.scale.iter().flatten().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::invalid("mixture scales must be positive and finite"));
        }
        if self.mu.iter().flatten().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite("mixture means".into()));
        }
        Ok(())
    }

    /// `log p(w)` under the mixture, via log-sum-exp.
    pub fn log_density(&self, w: &[f64]) -> Result<f64> {
        let mut logs = Vec::with_capacity(self.alpha.len());
        for q in 0..self.alpha.len() {
            logs.push(self.alpha[q].ln() + component_log_density(self.family, w, &self.mu[q], &self.scale[q])?);
        }
        Ok(log_sum_exp(&logs))
    }
}

/// Sum over elements of the univariate log densities of one component.
pub fn component_log_density(family: Family, w: &[f64], mu: &[f64], scale: &[f64]) -> Result<f64> {
    if w.len() != mu.len() || w.len() != scale.len() {
        return Err(Error::Dimension {
            expected: mu.len(),
            got: w.len(),
        });
    }
    if let Some(s) = scale.iter().find(|&&s| !(s > 0.0)) {
        return Err(Error::invalid(format!("scale must be positive, got {s}")));
    }
    Ok(component_log_density_unchecked(family, w, mu, scale))
}

#[inline]
pub(crate) fn component_log_density_unchecked(family: Family, w: &[f64], mu: &[f64], scale: &[f64]) -> f64 {
    let mut acc = 0.0;
    match family {
        Family::Normal => {
            for ((&x, &m), &s) in w.iter().zip(mu).zip(scale) {
                let z = (x - m) / s;
                acc += -0.5 * LN_2PI - s.ln() - 0.5 * z * z;
            }
        }
        Family::Laplace => {
            for ((&x, &m), &b) in w.iter().zip(mu).zip(scale) {
                acc += -(2.0 * b).ln() - (x - m).abs() / b;
            }
        }
    }
    acc
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// Mean negative log-likelihood of `w_batch` under the aligned mixtures.
pub fn nll_loss(params_batch: &[MixtureParams], w_batch: &[Vec<f64>]) -> Result<f64> {
    if params_batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    if params_batch.len() != w_batch.len() {
        return Err(Error::Dimension {
            expected: params_batch.len(),
            got: w_batch.len(),
        });
    }
    let mut total = 0.0;
    for (p, w) in params_batch.iter().zip(w_batch) {
        total -= p.log_density(w)?;
    }
    Ok(total / params_batch.len() as f64)
}

/// Draws a component from `alpha`, then each element independently.
///
/// Laplace elements use the inverse CDF of a uniform draw.
pub fn sample_weights<R: Rng + ?Sized>(params: &MixtureParams, rng: &mut R) -> Vec<f64> {
    let q = sample_component(&params.alpha, rng);
    let (mu, scale) = (&params.mu[q], &params.scale[q]);
    match params.family {
        Family::Normal => mu
            .iter()
            .zip(scale)
            .map(|(&m, &s)| {
                let z: f64 = rng.sample(StandardNormal);
                m + s * z
            })
            .collect(),
        Family::Laplace => mu
            .iter()
            .zip(scale)
            .map(|(&m, &b)| {
                let u = rng.random::<f64>() - 0.5;
                m - b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            })
            .collect(),
    }
}

/// Categorical draw by inverse CDF; the last component absorbs rounding.
pub fn sample_component<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (q, &a) in alpha.iter().enumerate() {
        acc += a;
        if u < acc {
            return q;
        }
    }
    alpha.len() - 1
}
