//! Map-conditioned trajectory generation.
//!
//! Occupancy grids are encoded as vectors of Hausdorff-kernel similarities to
//! a frozen set of training maps. Observed trajectories are embedded as
//! radial-basis weight vectors by kernel ridge regression. A mixture density
//! network learns `p(w | phi)`, and new trajectories are produced by sampling
//! weight vectors and rejecting those that touch occupied space.
//!
//! The crate is organised bottom-up:
//!
//! - [`grid`]: occupancy grids, the `.occ` format and point extraction
//! - [`similarity`]: Hausdorff distances, the distance-substitute kernel and
//!   similarity features
//! - [`embedding`]: discrete trajectories, the RBF basis and ridge embedding
//! - [`mdn`]: the dense network, mixture heads, NLL training and sampling
//! - [`generator`]: rejection sampling against a queried map
//! - [`metrics`]: Hausdorff, discrete Fréchet, DTW and the minimum
//!   trajectory distance
//! - [`dataset`]: synthetic indoor maps, on-disk datasets and splits
//! - [`pipeline`]: training/evaluation flows, run reports and SVG plots
//!
//! Batch work (Gram matrices, embedding, evaluation) runs through
//! [`Exec`], which uses rayon when the `parallel` feature is enabled and
//! falls back to plain iteration otherwise. Both paths produce bit-identical
//! results.

// Index loops mirror the maths, and `!(x > 0.0)` style checks reject NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod embedding;
mod error;
pub mod generator;
pub mod grid;
pub mod mdn;
pub mod metrics;
mod parallel;
pub mod pipeline;
pub mod similarity;

pub use error::{Error, Result};
pub use parallel::Exec;

/// A point in world coordinates (cell units, `x` along columns, `y` along rows).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    #[inline]
    pub fn dist_sq(self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    /// Euclidean distance, computed as `sqrt(dx*dx + dy*dy)`.
    #[inline]
    pub fn dist(self, other: Point) -> f64 {
        self.dist_sq(other).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Point { x, y }
    }
}
