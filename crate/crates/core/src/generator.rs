//! Rejection sampling of valid trajectories for a queried map.
//!
//! Candidate weight vectors are drawn from the model's mixture for the map
//! and accepted only if every checked point of the reconstructed trajectory
//! falls in a free cell. Checked points are `n` evenly spaced normalised
//! times including both endpoints; out-of-bounds points count as occupied.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::{reconstruct_with, uniform_tau, BasisConfig, TrajectoryWeights};
use crate::grid::OccupancyGrid;
use crate::mdn::{sample_weights, MdnModel, MixtureParams};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub num_validity_checks: usize,
    /// Sampling budget per accepted trajectory.
    pub max_attempts: usize,
    pub seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            num_validity_checks: 100,
            max_attempts: 1000,
            seed: 0,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_validity_checks < 2 {
            return Err(Error::invalid("num_validity_checks must be at least 2"));
        }
        if self.max_attempts == 0 {
            return Err(Error::invalid("max_attempts must be at least 1"));
        }
        Ok(())
    }
}

/// True when every checked point of the trajectory lies in a free cell.
pub fn is_valid(w: &TrajectoryWeights, basis: &BasisConfig, grid: &OccupancyGrid, cfg: &GenerationConfig) -> bool {
    let m = basis.num_basis();
    if w.wx.len() != m || w.wy.len() != m {
        return false;
    }
    let n = cfg.num_validity_checks.max(2);
    let mut k = vec![0.0; m];
    (0..n).all(|i| !grid.is_occupied(reconstruct_with(w, basis, uniform_tau(i, n), &mut k)))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptanceStats {
    pub accepted: usize,
    pub attempts: usize,
}

impl AcceptanceStats {
    pub fn rate(&self) -> f64 {
        if self.attempts == 0 {
            0.0
        } else {
            self.accepted as f64 / self.attempts as f64
        }
    }

    pub fn merge(&mut self, other: AcceptanceStats) {
        self.accepted += other.accepted;
        self.attempts += other.attempts;
    }
}

/// Draws until a valid sample appears. Returns the weights and the number
/// of attempts used.
pub fn sample_valid<R: Rng + ?Sized>(
    mixture: &MixtureParams,
    basis: &BasisConfig,
    grid: &OccupancyGrid,
    cfg: &GenerationConfig,
    rng: &mut R,
) -> Result<(TrajectoryWeights, usize)> {
    cfg.validate()?;
    for attempt in 1..=cfg.max_attempts {
        let w = TrajectoryWeights::from_concat(&sample_weights(mixture, rng))?;
        if is_valid(&w, basis, grid, cfg) {
            return Ok((w, attempt));
        }
    }
    Err(Error::GenerationFailed {
        attempts: cfg.max_attempts,
    })
}

/// Generates one valid trajectory for `grid`.
///
/// The eval-mode forward pass is deterministic, so the mixture is computed
/// once and reused for every attempt.
pub fn generate<R: Rng + ?Sized>(
    model: &MdnModel,
    grid: &OccupancyGrid,
    cfg: &GenerationConfig,
    rng: &mut R,
) -> Result<TrajectoryWeights> {
    let mixture = model.mixture_for(&grid.occupied_points())?;
    sample_valid(&mixture, &model.basis, grid, cfg, rng).map(|(w, _)| w)
}

/// Result of [`generate_batch`]: the accepted trajectories and sampling
/// statistics. When sampling fails part-way, `failure` is set and
/// `trajectories` holds what was accepted before the failure.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub trajectories: Vec<TrajectoryWeights>,
    pub stats: AcceptanceStats,
    pub failure: Option<usize>,
}

impl Batch {
    pub fn into_result(self) -> Result<(Vec<TrajectoryWeights>, AcceptanceStats)> {
        match self.failure {
            None => Ok((self.trajectories, self.stats)),
            Some(attempts) => Err(Error::GenerationFailed { attempts }),
        }
    }
}

/// Generates `count` valid trajectories, stopping at the first one whose
/// attempt budget runs out.
pub fn generate_batch<R: Rng + ?Sized>(
    model: &MdnModel,
    grid: &OccupancyGrid,
    cfg: &GenerationConfig,
    count: usize,
    rng: &mut R,
) -> Result<Batch> {
    if count == 0 {
        return Err(Error::invalid("count must be at least 1"));
    }
    cfg.validate()?;
    let mixture = model.mixture_for(&grid.occupied_points())?;
    let mut stats = AcceptanceStats::default();
    let mut trajectories = Vec::with_capacity(count);
    for _ in 0..count {
        match sample_valid(&mixture, &model.basis, grid, cfg, rng) {
            Ok((w, attempts)) => {
                stats.accepted += 1;
                stats.attempts += attempts;
                trajectories.push(w);
            }
            Err(Error::GenerationFailed { attempts }) => {
                stats.attempts += attempts;
                return Ok(Batch {
                    trajectories,
                    stats,
                    failure: Some(attempts),
                });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(Batch {
        trajectories,
        stats,
        failure: None,
    })
}
