//! Trajectory distances and the minimum trajectory distance (MTD).
//!
//! All distances take waypoint slices so single-point sequences are allowed;
//! empty inputs are rejected.

use serde::{Deserialize, Serialize};

use crate::grid::PointSet;
use crate::similarity::PointIndex;
use crate::{Error, Point, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceKind {
    Hausdorff,
    Frechet,
    Dtw,
}

impl DistanceKind {
    pub const ALL: [DistanceKind; 3] = [DistanceKind::Hausdorff, DistanceKind::Frechet, DistanceKind::Dtw];

    pub fn name(self) -> &'static str {
        match self {
            DistanceKind::Hausdorff => "hausdorff",
            DistanceKind::Frechet => "frechet",
            DistanceKind::Dtw => "dtw",
        }
    }

    pub fn distance(self, a: &[Point], b: &[Point]) -> Result<f64> {
        match self {
            DistanceKind::Hausdorff => traj_hausdorff(a, b),
            DistanceKind::Frechet => discrete_frechet(a, b),
            DistanceKind::Dtw => dtw(a, b),
        }
    }
}

impl std::str::FromStr for DistanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hausdorff" => Ok(DistanceKind::Hausdorff),
            "frechet" => Ok(DistanceKind::Frechet),
            "dtw" => Ok(DistanceKind::Dtw),
            other => Err(Error::invalid(format!("unknown distance kind {other:?}"))),
        }
    }
}

fn non_empty(a: &[Point], b: &[Point]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        Err(Error::invalid("trajectory is empty"))
    } else {
        Ok(())
    }
}

/// Averaged two-sided Hausdorff distance between the waypoint sets.
pub fn traj_hausdorff(a: &[Point], b: &[Point]) -> Result<f64> {
    non_empty(a, b)?;
    let ab = PointIndex::new(&PointSet(b.to_vec())).one_sided_from(a)?;
    let ba = PointIndex::new(&PointSet(a.to_vec())).one_sided_from(b)?;
    Ok(0.5 * (ab + ba))
}

/// Discrete Fréchet distance: min over monotone couplings of the max
/// pairwise distance. O(|a|·|b|) time, O(|b|) memory.
pub fn discrete_frechet(a: &[Point], b: &[Point]) -> Result<f64> {
    non_empty(a, b)?;
    let m = b.len();
    let mut prev = vec![0.0; m];
    let mut cur = vec![0.0; m];
    for (i, &p) in a.iter().enumerate() {
        for (j, &q) in b.iter().enumerate() {
            let d = p.dist(q);
            cur[j] = match (i, j) {
                (0, 0) => d,
                (0, _) => d.max(cur[j - 1]),
                (_, 0) => d.max(prev[0]),
                _ => d.max(prev[j].min(cur[j - 1]).min(prev[j - 1])),
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m - 1])
}

/// DTW with Euclidean point cost, summed along the optimal alignment, no
/// warping window.
pub fn dtw(a: &[Point], b: &[Point]) -> Result<f64> {
    non_empty(a, b)?;
    let m = b.len();
    let mut prev = vec![f64::INFINITY; m];
    let mut cur = vec![f64::INFINITY; m];
    for (i, &p) in a.iter().enumerate() {
        for (j, &q) in b.iter().enumerate() {
            let d = p.dist(q);
            cur[j] = match (i, j) {
                (0, 0) => d,
                (0, _) => d + cur[j - 1],
                (_, 0) => d + prev[0],
                _ => d + prev[j].min(cur[j - 1]).min(prev[j - 1]),
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m - 1])
}

/// DTW cost together with one optimal alignment path of `(i, j)` index
/// pairs from `(0, 0)` to `(|a|-1, |b|-1)`.
pub fn dtw_with_path(a: &[Point], b: &[Point]) -> Result<(f64, Vec<(usize, usize)>)> {
    non_empty(a, b)?;
    let (n, m) = (a.len(), b.len());
    let mut acc = vec![f64::INFINITY; n * m];
    for i in 0..n {
        for j in 0..m {
            let d = a[i].dist(b[j]);
            acc[i * m + j] = match (i, j) {
                (0, 0) => d,
                (0, _) => d + acc[j - 1],
                (_, 0) => d + acc[(i - 1) * m],
                _ => {
                    d + acc[(i - 1) * m + j]
                        .min(acc[i * m + j - 1])
                        .min(acc[(i - 1) * m + j - 1])
                }
            };
        }
    }
    let mut path = vec![(n - 1, m - 1)];
    let (mut i, mut j) = (n - 1, m - 1);
    while (i, j) != (0, 0) {
        (i, j) = match (i, j) {
            (0, _) => (0, j - 1),
            (_, 0) => (i - 1, 0),
            _ => {
                let diag = acc[(i - 1) * m + j - 1];
                let up = acc[(i - 1) * m + j];
                let left = acc[i * m + j - 1];
                if diag <= up && diag <= left {
                    (i - 1, j - 1)
                } else if up <= left {
                    (i - 1, j)
                } else {
                    (i, j - 1)
                }
            }
        };
        path.push((i, j));
    }
    path.reverse();
    Ok((acc[n * m - 1], path))
}

/// Minimum distance from a generated trajectory to any ground truth.
pub fn mtd<T: AsRef<[Point]>>(gen: &[Point], ground_truths: &[T], kind: DistanceKind) -> Result<f64> {
    if ground_truths.is_empty() {
        return Err(Error::invalid("ground-truth set is empty"));
    }
    let mut best = f64::INFINITY;
    for gt in ground_truths {
        best = best.min(kind.distance(gen, gt.as_ref())?);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(v: &[(f64, f64)]) -> Vec<Point> {
        v.iter().map(|&p| p.into()).collect()
    }

    #[test]
    fn hausdorff_examples() {
        let a = pts(&[(0.0, 0.0), (3.0, 1.0), (5.0, 2.0)]);
        let rev: Vec<Point> = a.iter().rev().copied().collect();
        assert_eq!(traj_hausdorff(&a, &a).unwrap(), 0.0);
        assert_eq!(traj_hausdorff(&a, &rev).unwrap(), 0.0);
        assert_eq!(
            traj_hausdorff(&pts(&[(0.0, 0.0), (10.0, 0.0)]), &pts(&[(0.0, 0.0)])).unwrap(),
            5.0
        );
        assert!(traj_hausdorff(&a, &[]).is_err());
    }

    #[test]
    fn frechet_examples() {
        let a = pts(&[(0.0, 0.0), (1.0, 0.0)]);
        assert_eq!(discrete_frechet(&a, &a).unwrap(), 0.0);
        assert_eq!(discrete_frechet(&pts(&[(0.0, 0.0)]), &pts(&[(3.0, 4.0)])).unwrap(), 5.0);
        assert_eq!(discrete_frechet(&a, &pts(&[(0.0, 1.0), (1.0, 1.0)])).unwrap(), 1.0);
        assert!(discrete_frechet(&[], &a).is_err());
    }

    #[test]
    fn dtw_examples() {
        let a = pts(&[(0.0, 0.0), (1.0, 0.0)]);
        assert_eq!(dtw(&a, &a).unwrap(), 0.0);
        assert_eq!(dtw(&pts(&[(0.0, 0.0)]), &pts(&[(1.0, 0.0)])).unwrap(), 1.0);
        assert_eq!(dtw(&a, &pts(&[(0.0, 0.0), (1.0, 0.0), (1.0, 0.0)])).unwrap(), 0.0);
        assert!(dtw(&a, &[]).is_err());
    }

    #[test]
    fn mtd_examples() {
        let gen = pts(&[(0.0, 0.0), (1.0, 0.0)]);
        let far = pts(&[(0.0, 3.0), (1.0, 3.0)]);
        let near = pts(&[(0.0, 1.0), (1.0, 1.0)]);
        assert_eq!(
            mtd(&gen, &[gen.clone(), far.clone()], DistanceKind::Frechet).unwrap(),
            0.0
        );
        assert_eq!(
            mtd(&gen, std::slice::from_ref(&far), DistanceKind::Dtw).unwrap(),
            dtw(&gen, &far).unwrap()
        );
        assert_eq!(mtd(&gen, &[far, near], DistanceKind::Frechet).unwrap(), 1.0);
        assert!(mtd::<Vec<Point>>(&gen, &[], DistanceKind::Dtw).is_err());
    }

    #[test]
    fn kind_names_round_trip() {
        for k in DistanceKind::ALL {
            assert_eq!(k.name().parse::<DistanceKind>().unwrap(), k);
        }
        assert!("euclid".parse::<DistanceKind>().is_err());
    }

    fn arb_traj(max: usize) -> impl Strategy<Value = Vec<Point>> {
        proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..max)
            .prop_map(|v| v.into_iter().map(Point::from).collect())
    }

    proptest! {
        #[test]
        fn distances_symmetric_and_zero_on_self(a in arb_traj(30), b in arb_traj(30)) {
            for k in DistanceKind::ALL {
                prop_assert_eq!(k.distance(&a, &a).unwrap(), 0.0);
                prop_assert_eq!(k.distance(&a, &b).unwrap(), k.distance(&b, &a).unwrap());
            }
        }

        #[test]
        fn frechet_dominates_hausdorff(a in arb_traj(30), b in arb_traj(30)) {
            prop_assert!(discrete_frechet(&a, &b).unwrap() >= traj_hausdorff(&a, &b).unwrap());
        }

        #[test]
        fn dtw_path_is_consistent(a in arb_traj(25), b in arb_traj(25)) {
            let (cost, path) = dtw_with_path(&a, &b).unwrap();
            prop_assert_eq!(cost, dtw(&a, &b).unwrap());
            prop_assert_eq!(path[0], (0, 0));
            prop_assert_eq!(*path.last().unwrap(), (a.len() - 1, b.len() - 1));
            for w in path.windows(2) {
                let (di, dj) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
                prop_assert!(di <= 1 && dj <= 1 && di + dj >= 1);
            }
            let max_step = path.iter().map(|&(i, j)| a[i].dist(b[j])).fold(0.0, f64::max);
            prop_assert!(cost >= max_step);
            let summed = path.iter().fold(0.0, |acc, &(i, j)| acc + a[i].dist(b[j]));
            prop_assert!((summed - cost).abs() <= 1e-9 * (1.0 + cost));
        }

        #[test]
        fn mtd_monotone(gen in arb_traj(10), gts in proptest::collection::vec(arb_traj(10), 1..5), extra in arb_traj(10)) {
            for k in DistanceKind::ALL {
                let before = mtd(&gen, &gts, k).unwrap();
                let mut more = gts.clone();
                more.push(extra.clone());
                prop_assert!(mtd(&gen, &more, k).unwrap() <= before);
            }
        }
    }
}
