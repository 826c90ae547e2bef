//! Trajectory representations and the radial-basis embedding.
//!
//! A discrete trajectory `(x_t, y_t), t = 1..T` is fitted at normalised
//! times `tau_t = t / T` by a pair of ridge regressions over `M` squared
//! exponential basis functions centred on evenly spaced points of `[0, 1]`.
//! The fitted weights `w = (w_x, w_y)` define a continuous trajectory that
//! can be evaluated at any `tau`.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Exec, Point, Result};

/// Ordered waypoints in world coordinates, `T >= 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteTrajectory {
    waypoints: Vec<Point>,
}

impl DiscreteTrajectory {
    pub fn new(waypoints: Vec<Point>) -> Result<Self> {
        if waypoints.len() < 2 {
            return Err(Error::invalid(format!(
                "trajectory needs at least 2 waypoints, got {}",
                waypoints.len()
            )));
        }
        if let Some(p) = waypoints.iter().find(|p| !p.is_finite()) {
            return Err(Error::NonFinite(format!("waypoint ({}, {})", p.x, p.y)));
        }
        Ok(DiscreteTrajectory { waypoints })
    }

    pub fn waypoints(&self) -> &[Point] {
        &self.waypoints
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn into_waypoints(self) -> Vec<Point> {
        self.waypoints
    }
}

impl AsRef<[Point]> for DiscreteTrajectory {
    fn as_ref(&self) -> &[Point] {
        &self.waypoints
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisConfig {
    /// Basis centers in `[0, 1]`, strictly increasing from 0 to 1.
    pub centers: Vec<f64>,
    /// Length scale in normalised-time units.
    pub length_scale_b: f64,
}

impl Default for BasisConfig {
    fn default() -> Self {
        BasisConfig::evenly_spaced(10, 0.1)
    }
}

impl BasisConfig {
    /// `m` centers evenly spaced over `[0, 1]`, endpoints included.
    pub fn evenly_spaced(m: usize, length_scale_b: f64) -> Self {
        let denom = m.saturating_sub(1).max(1) as f64;
        let centers = (0..m).map(|i| i as f64 / denom).collect();
        BasisConfig {
            centers,
            length_scale_b,
        }
    }

    pub fn num_basis(&self) -> usize {
        self.centers.len()
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.centers;
        if c.len() < 2 {
            return Err(Error::invalid("basis needs at least 2 centers"));
        }
        if c[0] != 0.0 || c[c.len() - 1] != 1.0 || c.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("basis centers must increase strictly from 0 to 1"));
        }
        if !(self.length_scale_b > 0.0 && self.length_scale_b.is_finite()) {
            return Err(Error::invalid(format!(
                "basis length scale must be positive, got {}",
                self.length_scale_b
            )));
        }
        Ok(())
    }

    /// Writes `exp(-(tau - c_m)² / (2 l_b²))` for every center into `out`.
    #[inline]
    pub fn fill_basis(&self, tau: f64, out: &mut [f64]) {
        let denom = 2.0 * self.length_scale_b * self.length_scale_b;
        for (o, &c) in out.iter_mut().zip(&self.centers) {
            let d = tau - c;
            *o = (-(d * d) / denom).exp();
        }
    }
}

/// Basis function values `k(tau)`.
pub fn basis_vector(tau: f64, cfg: &BasisConfig) -> Vec<f64> {
    let mut k = vec![0.0; cfg.num_basis()];
    cfg.fill_basis(tau, &mut k);
    k
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RidgeConfig {
    pub lambda: f64,
}

impl Default for RidgeConfig {
    fn default() -> Self {
        RidgeConfig { lambda: 1e-4 }
    }
}

impl RidgeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!(
                "ridge lambda must be positive, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Basis weights of a continuous trajectory: `wx` then `wy`, `M` each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryWeights {
    pub wx: Vec<f64>,
    pub wy: Vec<f64>,
}

impl TrajectoryWeights {
    pub fn zeros(m: usize) -> Self {
        TrajectoryWeights {
            wx: vec![0.0; m],
            wy: vec![0.0; m],
        }
    }

    /// Splits a `2M` vector into `(wx, wy)`.
    pub fn from_concat(w: &[f64]) -> Result<Self> {
        if w.is_empty() || !w.len().is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "weight vector length {} is not a positive even number",
                w.len()
            )));
        }
        let (wx, wy) = w.split_at(w.len() / 2);
        Ok(TrajectoryWeights {
            wx: wx.to_vec(),
            wy: wy.to_vec(),
        })
    }

    pub fn to_concat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.wx.len() * 2);
        v.extend_from_slice(&self.wx);
        v.extend_from_slice(&self.wy);
        v
    }

    pub fn num_basis(&self) -> usize {
        self.wx.len()
    }

    pub fn scaled(&self, s: f64) -> Self {
        TrajectoryWeights {
            wx: self.wx.iter().map(|v| v * s).collect(),
            wy: self.wy.iter().map(|v| v * s).collect(),
        }
    }

    fn check(&self, cfg: &BasisConfig) -> Result<()> {
        let m = cfg.num_basis();
        if self.wx.len() != m || self.wy.len() != m {
            return Err(Error::Dimension {
                expected: 2 * m,
                got: self.wx.len() + self.wy.len(),
            });
        }
        Ok(())
    }
}

/// Ridge system `lambda I + sum_t k(tau_t) k(tau_t)^T` and right-hand sides
/// for a trajectory.
fn normal_equations(
    traj: &DiscreteTrajectory,
    basis: &BasisConfig,
    ridge: &RidgeConfig,
) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
    let m = basis.num_basis();
    let t_len = traj.len() as f64;
    let mut a = DMatrix::<f64>::zeros(m, m);
    let mut bx = DVector::<f64>::zeros(m);
    let mut by = DVector::<f64>::zeros(m);
    let mut k = vec![0.0; m];
    for (i, p) in traj.waypoints().iter().enumerate() {
        let tau = (i + 1) as f64 / t_len;
        basis.fill_basis(tau, &mut k);
        for r in 0..m {
            bx[r] += p.x * k[r];
            by[r] += p.y * k[r];
            for c in 0..m {
                a[(r, c)] += k[r] * k[c];
            }
        }
    }
    for d in 0..m {
        a[(d, d)] += ridge.lambda;
    }
    (a, bx, by)
}

/// Ridge system matrix for a trajectory of length `t_len`; exposed for
/// conditioning checks.
pub fn system_matrix(t_len: usize, basis: &BasisConfig, ridge: &RidgeConfig) -> Result<Vec<Vec<f64>>> {
    let traj = DiscreteTrajectory::new(vec![Point::new(0.0, 0.0); t_len.max(2)])?;
    let (a, _, _) = normal_equations(&traj, basis, ridge);
    Ok((0..a.nrows()).map(|r| a.row(r).iter().copied().collect()).collect())
}

/// Fits basis weights to a discrete trajectory by ridge regression.
///
/// Both coordinates share one Cholesky factorisation of the system matrix.
pub fn embed(traj: &DiscreteTrajectory, basis: &BasisConfig, ridge: &RidgeConfig) -> Result<TrajectoryWeights> {
    basis.validate()?;
    ridge.validate()?;
    if traj.len() < 2 {
        return Err(Error::invalid("trajectory needs at least 2 waypoints"));
    }
    let (a, bx, by) = normal_equations(traj, basis, ridge);
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::NonFinite("ridge system is not positive definite".into()))?;
    let wx = chol.solve(&bx);
    let wy = chol.solve(&by);
    let w = TrajectoryWeights {
        wx: wx.iter().copied().collect(),
        wy: wy.iter().copied().collect(),
    };
    if w.wx.iter().chain(&w.wy).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("embedding weights".into()));
    }
    Ok(w)
}

/// Embeds many trajectories, preserving input order.
pub fn embed_all(
    trajs: &[DiscreteTrajectory],
    basis: &BasisConfig,
    ridge: &RidgeConfig,
    exec: Exec,
) -> Result<Vec<TrajectoryWeights>> {
    exec.try_map_range(trajs.len(), |i| embed(&trajs[i], basis, ridge))
}

/// Evaluates the continuous trajectory at `tau`.
pub fn reconstruct(w: &TrajectoryWeights, cfg: &BasisConfig, tau: f64) -> Point {
    let mut k = vec![0.0; cfg.num_basis()];
    reconstruct_with(w, cfg, tau, &mut k)
}

#[inline]
pub(crate) fn reconstruct_with(w: &TrajectoryWeights, cfg: &BasisConfig, tau: f64, k: &mut [f64]) -> Point {
    cfg.fill_basis(tau, k);
    let x = w.wx.iter().zip(k.iter()).map(|(a, b)| a * b).sum();
    let y = w.wy.iter().zip(k.iter()).map(|(a, b)| a * b).sum();
    Point::new(x, y)
}

/// `i`-th of `n` evenly spaced normalised times, endpoints included.
#[inline]
pub fn uniform_tau(i: usize, n: usize) -> f64 {
    if i + 1 == n {
        1.0
    } else {
        i as f64 / (n - 1) as f64
    }
}

/// Samples the continuous trajectory at `n >= 2` evenly spaced times.
pub fn discretise(w: &TrajectoryWeights, cfg: &BasisConfig, n: usize) -> Result<DiscreteTrajectory> {
    if n < 2 {
        return Err(Error::invalid(format!("need at least 2 sample points, got {n}")));
    }
    w.check(cfg)?;
    let mut k = vec![0.0; cfg.num_basis()];
    let pts = (0..n)
        .map(|i| reconstruct_with(w, cfg, uniform_tau(i, n), &mut k))
        .collect();
    DiscreteTrajectory::new(pts)
}

const CSV_HEADER: &str = "traj_id,t,x,y";

/// Serialises trajectories as `traj_id,t,x,y` rows, ids `0..`, `t` from 1.
///
/// Coordinates are written in shortest round-trip form.
pub fn trajectories_to_csv(trajs: &[DiscreteTrajectory]) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (id, traj) in trajs.iter().enumerate() {
        for (t, p) in traj.waypoints().iter().enumerate() {
            let _ = writeln!(out, "{},{},{},{}", id, t + 1, p.x, p.y);
        }
    }
    out
}

/// Parses the trajectory CSV format. Rows must be grouped by ascending
/// `traj_id` with `t` running `1..=T` inside each group.
pub fn parse_trajectories_csv(text: &str, path: &Path) -> Result<Vec<DiscreteTrajectory>> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        other => {
            return Err(err(
                1,
                format!("expected header {CSV_HEADER:?}, found {:?}", other.map(|(_, h)| h)),
            ))
        }
    }
    let mut out = Vec::new();
    let mut current: Option<(u64, Vec<Point>)> = None;
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(err(lineno, format!("expected 4 fields, found {}", fields.len())));
        }
        let id: u64 = fields[0]
            .parse()
            .map_err(|_| err(lineno, format!("bad traj_id {:?}", fields[0])))?;
        let t: usize = fields[1]
            .parse()
            .map_err(|_| err(lineno, format!("bad t {:?}", fields[1])))?;
        let x: f64 = fields[2]
            .parse()
            .map_err(|_| err(lineno, format!("bad x {:?}", fields[2])))?;
        let y: f64 = fields[3]
            .parse()
            .map_err(|_| err(lineno, format!("bad y {:?}", fields[3])))?;
        match &mut current {
            Some((cur, pts)) if *cur == id => {
                if t != pts.len() + 1 {
                    return Err(err(lineno, format!("expected t = {}, found {t}", pts.len() + 1)));
                }
                pts.push(Point::new(x, y));
            }
            _ => {
                if let Some((cur, pts)) = current.take() {
                    if id < cur {
                        return Err(err(lineno, "rows are not sorted by traj_id".into()));
                    }
                    out.push(DiscreteTrajectory::new(pts).map_err(|e| err(lineno, format!("trajectory {cur}: {e}")))?);
                }
                if t != 1 {
                    return Err(err(lineno, format!("trajectory {id} must start at t = 1")));
                }
                current = Some((id, vec![Point::new(x, y)]));
            }
        }
    }
    if let Some((cur, pts)) = current {
        out.push(
            DiscreteTrajectory::new(pts).map_err(|e| err(text.lines().count(), format!("trajectory {cur}: {e}")))?,
        );
    }
    Ok(out)
}

pub fn load_trajectories(path: impl AsRef<Path>) -> Result<Vec<DiscreteTrajectory>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trajectories_csv(&text, path)
}

pub fn save_trajectories(trajs: &[DiscreteTrajectory], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, trajectories_to_csv(trajs)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Regularised least squares by explicit design matrix and Gauss-Jordan
    /// inversion; independent of the Cholesky path.
    fn oracle_embed(traj: &DiscreteTrajectory, basis: &BasisConfig, lambda: f64) -> Vec<f64> {
        let m = basis.num_basis();
        let t_len = traj.len();
        let phi: Vec<Vec<f64>> = (1..=t_len)
            .map(|t| {
                let tau = t as f64 / t_len as f64;
                basis
                    .centers
                    .iter()
                    .map(|c| (-(tau - c).powi(2) / (2.0 * basis.length_scale_b.powi(2))).exp())
                    .collect()
            })
            .collect();
        let mut a = vec![vec![0.0; 2 * m]; m];
        for r in 0..m {
            for c in 0..m {
                a[r][c] = (0..t_len).map(|t| phi[t][r] * phi[t][c]).sum::<f64>();
            }
            a[r][r] += lambda;
            a[r][m + r] = 1.0;
        }
        for col in 0..m {
            let piv = (col..m)
                .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
                .unwrap();
            a.swap(col, piv);
            let d = a[col][col];
            for v in a[col].iter_mut() {
                *v /= d;
            }
            for r in 0..m {
                if r != col {
                    let f = a[r][col];
                    let pivot_row = a[col].clone();
                    for (v, p) in a[r].iter_mut().zip(pivot_row) {
                        *v -= f * p;
                    }
                }
            }
        }
        let inv: Vec<Vec<f64>> = a.iter().map(|row| row[m..].to_vec()).collect();
        let solve = |coord: &dyn Fn(&Point) -> f64| -> Vec<f64> {
            let rhs: Vec<f64> = (0..m)
                .map(|r| (0..t_len).map(|t| coord(&traj.waypoints()[t]) * phi[t][r]).sum())
                .collect();
            (0..m).map(|r| (0..m).map(|c| inv[r][c] * rhs[c]).sum()).collect()
        };
        let mut w = solve(&|p| p.x);
        w.extend(solve(&|p| p.y));
        w
    }

    fn constant(c: f64, d: f64, t: usize) -> DiscreteTrajectory {
        DiscreteTrajectory::new(vec![Point::new(c, d); t]).unwrap()
    }

    #[test]
    fn basis_examples() {
        let cfg = BasisConfig::evenly_spaced(2, 0.5);
        assert_eq!(cfg.centers, vec![0.0, 1.0]);
        let k = basis_vector(0.0, &cfg);
        assert_eq!(k[0], 1.0);
        assert!((k[1] - (-2.0f64).exp()).abs() < 1e-15);
        assert!((k[1] - 0.1353).abs() < 1e-4);
        let cfg = BasisConfig::default();
        for (m, &c) in cfg.centers.iter().enumerate() {
            assert_eq!(basis_vector(c, &cfg)[m], 1.0);
        }
        for i in 0..=100 {
            assert!(basis_vector(i as f64 / 100.0, &cfg)
                .iter()
                .all(|&v| v > 0.0 && v <= 1.0));
        }
    }

    #[test]
    fn basis_config_validation() {
        assert!(BasisConfig::default().validate().is_ok());
        assert!(BasisConfig::evenly_spaced(1, 0.1).validate().is_err());
        assert!(BasisConfig::evenly_spaced(4, 0.0).validate().is_err());
        let bad = BasisConfig {
            centers: vec![0.0, 0.7, 0.5, 1.0],
            length_scale_b: 0.1,
        };
        assert!(bad.validate().is_err());
        assert!(RidgeConfig { lambda: 0.0 }.validate().is_err());
    }

    #[test]
    fn constant_trajectory_fits() {
        let basis = BasisConfig::evenly_spaced(10, 0.15);
        let ridge = RidgeConfig { lambda: 1e-6 };
        let traj = constant(3.5, -2.0, 50);
        let w = embed(&traj, &basis, &ridge).unwrap();
        let oracle = oracle_embed(&traj, &basis, ridge.lambda);
        for (a, b) in w.to_concat().iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
        let ow = TrajectoryWeights::from_concat(&oracle).unwrap();
        // Ten Gaussians of width 0.15 cannot hold a constant to better than ~0.85%.
        let tol = 1e-2 * 3.5;
        for t in 1..=50 {
            let tau = t as f64 / 50.0;
            let (p, q) = (reconstruct(&w, &basis, tau), reconstruct(&ow, &basis, tau));
            assert!((p.x - q.x).abs() < 1e-8 && (p.y - q.y).abs() < 1e-8);
            assert!((p.x - 3.5).abs() < tol && (p.y + 2.0).abs() < tol, "{p:?}");
        }
        for p in discretise(&w, &basis, 37).unwrap().waypoints() {
            assert!(
                (p.x - 3.5).abs() < 2.5e-2 * 3.5 && (p.y + 2.0).abs() < 2.5e-2 * 3.5,
                "{p:?}"
            );
        }
    }

    #[test]
    fn heavy_ridge_shrinks_to_zero() {
        let traj = DiscreteTrajectory::new((0..20).map(|i| Point::new(i as f64 / 20.0, 1.0)).collect()).unwrap();
        let w = embed(&traj, &BasisConfig::default(), &RidgeConfig { lambda: 1e12 }).unwrap();
        assert!(w.to_concat().iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn degenerate_inputs_rejected() {
        assert!(DiscreteTrajectory::new(vec![Point::new(0.0, 0.0)]).is_err());
        assert!(DiscreteTrajectory::new(vec![Point::new(0.0, 0.0), Point::new(f64::NAN, 0.0)]).is_err());
        let w = TrajectoryWeights::zeros(10);
        assert!(discretise(&w, &BasisConfig::default(), 1).is_err());
        assert!(discretise(&TrajectoryWeights::zeros(3), &BasisConfig::default(), 5).is_err());
    }

    #[test]
    fn reconstruct_is_linear() {
        let basis = BasisConfig::default();
        assert_eq!(
            reconstruct(&TrajectoryWeights::zeros(10), &basis, 0.3),
            Point::new(0.0, 0.0)
        );
        let w = TrajectoryWeights::from_concat(&(0..20).map(|i| (i as f64 * 0.37).sin()).collect::<Vec<_>>()).unwrap();
        for i in 0..=10 {
            let tau = i as f64 / 10.0;
            let p = reconstruct(&w, &basis, tau);
            let q = reconstruct(&w.scaled(2.0), &basis, tau);
            assert_eq!((q.x, q.y), (2.0 * p.x, 2.0 * p.y));
        }
    }

    #[test]
    fn discretise_endpoints() {
        let basis = BasisConfig::default();
        let w = TrajectoryWeights::from_concat(&(0..20).map(|i| i as f64).collect::<Vec<_>>()).unwrap();
        let d = discretise(&w, &basis, 2).unwrap();
        assert_eq!(
            d.waypoints(),
            &[reconstruct(&w, &basis, 0.0), reconstruct(&w, &basis, 1.0)]
        );
        for n in [2, 3, 10, 100] {
            assert_eq!(discretise(&w, &basis, n).unwrap().len(), n);
        }
    }

    #[test]
    fn system_matrix_is_spd() {
        let basis = BasisConfig::default();
        let a = system_matrix(100, &basis, &RidgeConfig::default()).unwrap();
        for r in 0..a.len() {
            for c in 0..a.len() {
                assert!((a[r][c] - a[c][r]).abs() <= 1e-12);
            }
        }
        let m = DMatrix::from_fn(a.len(), a.len(), |r, c| a[r][c]);
        assert!(m.cholesky().is_some());
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let trajs = vec![
            DiscreteTrajectory::new(vec![Point::new(0.1, 0.2), Point::new(1.0 / 3.0, 1e-9)]).unwrap(),
            DiscreteTrajectory::new(vec![Point::new(5.0, 6.0), Point::new(7.0, 8.0), Point::new(-1.5, 2.25)]).unwrap(),
        ];
        let csv = trajectories_to_csv(&trajs);
        assert!(csv.starts_with("traj_id,t,x,y\n0,1,0.1,0.2\n"));
        let p = Path::new("t.csv");
        assert_eq!(parse_trajectories_csv(&csv, p).unwrap(), trajs);
        assert!(parse_trajectories_csv("id,t,x,y\n", p).is_err());
        assert!(parse_trajectories_csv("traj_id,t,x,y\n0,1,0,0\n0,3,1,1\n", p).is_err());
        assert!(parse_trajectories_csv("traj_id,t,x,y\n1,1,0,0\n1,2,0,0\n0,1,1,1\n0,2,1,1\n", p).is_err());
        assert!(parse_trajectories_csv("traj_id,t,x,y\n0,1,0,0\n", p).is_err());
        assert!(parse_trajectories_csv("traj_id,t,x,y\n0,1,a,0\n0,2,0,0\n", p).is_err());
    }

    fn arb_traj() -> impl Strategy<Value = DiscreteTrajectory> {
        proptest::collection::vec((-30.0f64..30.0, -30.0f64..30.0), 2..120)
            .prop_map(|v| DiscreteTrajectory::new(v.into_iter().map(Point::from).collect()).unwrap())
    }

    proptest! {
        #[test]
        fn matches_normal_equation_oracle(traj in arb_traj(), m in 2usize..16, lb in 0.08f64..0.6) {
            let basis = BasisConfig::evenly_spaced(m, lb);
            let ridge = RidgeConfig { lambda: 1e-3 };
            let w = embed(&traj, &basis, &ridge).unwrap().to_concat();
            let o = oracle_embed(&traj, &basis, ridge.lambda);
            let scale = o.iter().fold(1.0f64, |a, v| a.max(v.abs()));
            for (a, b) in w.iter().zip(&o) {
                prop_assert!((a - b).abs() <= 1e-8 * scale, "{} vs {}", a, b);
            }
        }

        #[test]
        fn recovers_representable_weights(
            w0 in proptest::collection::vec(-5.0f64..5.0, 12),
            t_len in 40usize..150,
        ) {
            let basis = BasisConfig::evenly_spaced(6, 0.15);
            let w0 = TrajectoryWeights::from_concat(&w0).unwrap();
            let pts = (1..=t_len).map(|t| reconstruct(&w0, &basis, t as f64 / t_len as f64)).collect();
            let traj = DiscreteTrajectory::new(pts).unwrap();
            let w = embed(&traj, &basis, &RidgeConfig { lambda: 1e-10 }).unwrap();
            for (a, b) in w.to_concat().iter().zip(w0.to_concat()) {
                prop_assert!((a - b).abs() <= 1e-4, "{} vs {}", a, b);
            }
        }

        #[test]
        fn translation_equivariance(traj in arb_traj(), dx in -10.0f64..10.0, dy in -10.0f64..10.0) {
            let basis = BasisConfig::default();
            let ridge = RidgeConfig::default();
            let shifted = DiscreteTrajectory::new(
                traj.waypoints().iter().map(|p| Point::new(p.x + dx, p.y + dy)).collect(),
            ).unwrap();
            let w = embed(&traj, &basis, &ridge).unwrap().to_concat();
            let ws = embed(&shifted, &basis, &ridge).unwrap().to_concat();
            let wc = embed(&constant(dx, dy, traj.len()), &basis, &ridge).unwrap().to_concat();
            for i in 0..w.len() {
                let scale = 1.0 + w[i].abs() + wc[i].abs();
                prop_assert!((ws[i] - w[i] - wc[i]).abs() <= 1e-8 * scale);
            }
        }
    }
}
