//! Hausdorff distances between occupied point sets and the similarity
//! features built from them.
//!
//! A map is compared to the frozen set of training ("reference") maps with
//! the distance-substitute kernel `exp(-d² / (2 l_h))`, where `d` is the
//! averaged two-sided Hausdorff distance. Note that `l_h` enters unsquared.

use serde::{Deserialize, Serialize};

use crate::grid::PointSet;
use crate::{Error, Exec, Point, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub length_scale_h: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig { length_scale_h: 50.0 }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.length_scale_h > 0.0 && self.length_scale_h.is_finite()) {
            return Err(Error::invalid(format!(
                "kernel length scale must be positive, got {}",
                self.length_scale_h
            )));
        }
        Ok(())
    }
}

/// Points sorted by `x` for pruned nearest-neighbour scans.
///
/// The scan returns exactly the minimum squared distance a brute-force pass
/// would find: pruning only skips points whose `dx²` already meets the best
/// candidate, and `dx² <= dx² + dy²` holds after rounding.
#[derive(Debug, Clone)]
pub struct PointIndex {
    sorted: Vec<Point>,
}

impl PointIndex {
    pub fn new(set: &PointSet) -> Self {
        let mut sorted = set.points().to_vec();
        sorted.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
        PointIndex { sorted }
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Minimum squared distance from `p` to the set. Stops early and returns
    /// some value `<= floor` as soon as one is found; the exact minimum is
    /// returned whenever it exceeds `floor`.
    fn nearest_sq_above(&self, p: Point, floor: f64) -> f64 {
        let pts = &self.sorted;
        let start = pts.partition_point(|q| q.x < p.x);
        let mut best = f64::INFINITY;
        let (mut left, mut right) = (start, start);
        let (mut left_open, mut right_open) = (true, true);
        while left_open || right_open {
            if right_open {
                if right < pts.len() {
                    let dx = pts[right].x - p.x;
                    if dx * dx >= best {
                        right_open = false;
                    } else {
                        best = best.min(pts[right].dist_sq(p));
                        right += 1;
                    }
                } else {
                    right_open = false;
                }
            }
            if left_open {
                if left > 0 {
                    let dx = p.x - pts[left - 1].x;
                    if dx * dx >= best {
                        left_open = false;
                    } else {
                        best = best.min(pts[left - 1].dist_sq(p));
                        left -= 1;
                    }
                } else {
                    left_open = false;
                }
            }
            if best <= floor {
                return best;
            }
        }
        best
    }

    /// `max_{a in from} min_{b in self} |a - b|`.
    pub fn one_sided_from(&self, from: &[Point]) -> Result<f64> {
        if from.is_empty() || self.is_empty() {
            return Err(Error::EmptyPointSet);
        }
        let mut worst = 0.0f64;
        for &a in from {
            let d = self.nearest_sq_above(a, worst);
            if d > worst {
                worst = d;
            }
        }
        Ok(worst.sqrt())
    }
}

/// One-sided Hausdorff distance `max_{a in A} min_{b in B} |a - b|`.
pub fn one_sided_hausdorff(a: &PointSet, b: &PointSet) -> Result<f64> {
    PointIndex::new(b).one_sided_from(a.points())
}

/// Average of the two one-sided Hausdorff distances.
pub fn symmetric_hausdorff(a: &PointSet, b: &PointSet) -> Result<f64> {
    symmetric_indexed(a.points(), &PointIndex::new(a), b.points(), &PointIndex::new(b))
}

fn symmetric_indexed(a: &[Point], ia: &PointIndex, b: &[Point], ib: &PointIndex) -> Result<f64> {
    let ab = ib.one_sided_from(a)?;
    let ba = ia.one_sided_from(b)?;
    Ok(0.5 * (ab + ba))
}

/// Kernel value for a precomputed distance. Underflow is clamped to the
/// smallest positive normal so similarities stay strictly positive.
#[inline]
pub fn kernel_from_distance(d: f64, cfg: &KernelConfig) -> f64 {
    (-(d * d) / (2.0 * cfg.length_scale_h)).exp().max(f64::MIN_POSITIVE)
}

/// `exp(-d_H(A, B)² / (2 l_h))`.
pub fn hausdorff_kernel(a: &PointSet, b: &PointSet, cfg: &KernelConfig) -> Result<f64> {
    cfg.validate()?;
    Ok(kernel_from_distance(symmetric_hausdorff(a, b)?, cfg))
}

/// Similarities between one map and every reference map, in reference order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityFeature {
    pub values: Vec<f64>,
    pub reference_ids: Vec<String>,
}

impl SimilarityFeature {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// The frozen set of training maps that similarity features are computed
/// against.
#[derive(Debug, Clone)]
pub struct ReferenceMaps {
    ids: Vec<String>,
    sets: Vec<PointSet>,
    indexes: Vec<PointIndex>,
}

impl ReferenceMaps {
    pub fn new(ids: Vec<String>, sets: Vec<PointSet>) -> Result<Self> {
        if sets.is_empty() {
            return Err(Error::invalid("at least one reference map is required"));
        }
        if ids.len() != sets.len() {
            return Err(Error::Dimension {
                expected: sets.len(),
                got: ids.len(),
            });
        }
        if sets.iter().any(PointSet::is_empty) {
            return Err(Error::EmptyPointSet);
        }
        let indexes = sets.iter().map(PointIndex::new).collect();
        Ok(ReferenceMaps { ids, sets, indexes })
    }

    /// Reference maps with ids `"0"`, `"1"`, ...
    pub fn from_sets(sets: Vec<PointSet>) -> Result<Self> {
        let ids = (0..sets.len()).map(|i| i.to_string()).collect();
        Self::new(ids, sets)
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn point_sets(&self) -> &[PointSet] {
        &self.sets
    }

    /// Full Gram matrix of the similarity kernel between reference maps.
    ///
    /// Only the upper triangle is evaluated; the lower one is mirrored, so
    /// the result is exactly symmetric.
    pub fn gram_matrix(&self, cfg: &KernelConfig, exec: Exec) -> Result<Vec<Vec<f64>>> {
        cfg.validate()?;
        let n = self.len();
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
        let values = exec.try_map_range(pairs.len(), |k| {
            let (i, j) = pairs[k];
            let d = symmetric_indexed(
                self.sets[i].points(),
                &self.indexes[i],
                self.sets[j].points(),
                &self.indexes[j],
            )?;
            Ok::<_, Error>(kernel_from_distance(d, cfg))
        })?;
        let mut gram = vec![vec![0.0; n]; n];
        for (&(i, j), v) in pairs.iter().zip(values) {
            gram[i][j] = v;
            gram[j][i] = v;
        }
        Ok(gram)
    }

    /// Rows of the Gram matrix as similarity features.
    pub fn gram_features(&self, cfg: &KernelConfig, exec: Exec) -> Result<Vec<SimilarityFeature>> {
        Ok(self
            .gram_matrix(cfg, exec)?
            .into_iter()
            .map(|values| SimilarityFeature {
                values,
                reference_ids: self.ids.clone(),
            })
            .collect())
    }

    /// Similarity feature of a (possibly unseen) map against every reference.
    ///
    /// A map with no occupied cells is treated as infinitely far from every
    /// reference, so each entry takes the kernel's floor value.
    pub fn query_feature(&self, map: &PointSet, cfg: &KernelConfig) -> Result<SimilarityFeature> {
        cfg.validate()?;
        if map.is_empty() {
            return Ok(SimilarityFeature {
                values: vec![kernel_from_distance(f64::INFINITY, cfg); self.len()],
                reference_ids: self.ids.clone(),
            });
        }
        let index = PointIndex::new(map);
        let values = self
            .sets
            .iter()
            .zip(&self.indexes)
            .map(|(set, idx)| {
                symmetric_indexed(map.points(), &index, set.points(), idx).map(|d| kernel_from_distance(d, cfg))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SimilarityFeature {
            values,
            reference_ids: self.ids.clone(),
        })
    }
}

/// Gram-matrix rows for `maps`, using positional ids.
pub fn gram_features(maps: &[PointSet], cfg: &KernelConfig) -> Result<Vec<SimilarityFeature>> {
    ReferenceMaps::from_sets(maps.to_vec())?.gram_features(cfg, Exec::default())
}

/// Similarity feature of `new_map` against `training_maps`, using positional ids.
pub fn query_feature(new_map: &PointSet, training_maps: &[PointSet], cfg: &KernelConfig) -> Result<SimilarityFeature> {
    ReferenceMaps::from_sets(training_maps.to_vec())?.query_feature(new_map, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(pts: &[(f64, f64)]) -> PointSet {
        PointSet(pts.iter().map(|&p| p.into()).collect())
    }

    /// Exhaustive `max min` over all pairs.
    fn brute_one_sided(a: &PointSet, b: &PointSet) -> f64 {
        a.points()
            .iter()
            .map(|&p| b.points().iter().map(|&q| p.dist(q)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    }

    #[test]
    fn scalar_examples() {
        let a = set(&[(0.0, 0.0), (10.0, 0.0)]);
        let b = set(&[(0.0, 0.0)]);
        assert_eq!(one_sided_hausdorff(&a, &a).unwrap(), 0.0);
        assert_eq!(
            one_sided_hausdorff(&set(&[(0.0, 0.0)]), &set(&[(3.0, 4.0)])).unwrap(),
            5.0
        );
        assert_eq!(one_sided_hausdorff(&a, &b).unwrap(), brute_one_sided(&a, &b));
        assert_eq!(one_sided_hausdorff(&a, &b).unwrap(), 10.0);
        assert_eq!(symmetric_hausdorff(&a, &b).unwrap(), 5.0);
        assert_eq!(symmetric_hausdorff(&b, &a).unwrap(), 5.0);
        assert_eq!(symmetric_hausdorff(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn empty_sets_rejected() {
        let a = set(&[(0.0, 0.0)]);
        let e = PointSet::default();
        assert!(matches!(one_sided_hausdorff(&a, &e), Err(Error::EmptyPointSet)));
        assert!(matches!(symmetric_hausdorff(&e, &a), Err(Error::EmptyPointSet)));
        assert!(matches!(
            query_feature(&a, std::slice::from_ref(&e), &KernelConfig::default()),
            Err(Error::EmptyPointSet)
        ));
    }

    #[test]
    fn obstacle_free_query_takes_kernel_floor() {
        let refs = [set(&[(0.0, 0.0)]), set(&[(5.0, 5.0), (6.0, 5.0)])];
        let f = query_feature(&PointSet::default(), &refs, &KernelConfig::default()).unwrap();
        assert_eq!(f.values, vec![f64::MIN_POSITIVE; 2]);
    }

    #[test]
    fn kernel_values() {
        let cfg = KernelConfig::default();
        let a = set(&[(0.0, 0.0), (10.0, 0.0)]);
        let b = set(&[(0.0, 0.0)]);
        assert_eq!(hausdorff_kernel(&a, &a, &cfg).unwrap(), 1.0);
        // d = 5, l_h = 50: exp(-25 / 100)
        let k = hausdorff_kernel(&a, &b, &cfg).unwrap();
        assert!((k - (-0.25f64).exp()).abs() < 1e-15);
        assert!((k - 0.7788).abs() < 1e-4);
        let mut last = k;
        for lh in [1e2, 1e3, 1e5, 1e12] {
            let k = hausdorff_kernel(&a, &b, &KernelConfig { length_scale_h: lh }).unwrap();
            assert!(k > last && k <= 1.0);
            last = k;
        }
        assert!(1.0 - last < 1e-8);
        assert!(KernelConfig { length_scale_h: 0.0 }.validate().is_err());
    }

    #[test]
    fn gram_examples() {
        let cfg = KernelConfig::default();
        let a = set(&[(0.0, 0.0), (10.0, 0.0)]);
        let b = set(&[(0.0, 0.0), (1.0, 1.0)]);
        let one = gram_features(std::slice::from_ref(&a), &cfg).unwrap();
        assert_eq!(one[0].values, vec![1.0]);
        let two = gram_features(&[a.clone(), b.clone()], &cfg).unwrap();
        assert_eq!(two[0].values[0], 1.0);
        assert_eq!(two[1].values[1], 1.0);
        assert_eq!(two[0].values[1], two[1].values[0]);
        assert_eq!(two[0].values[1], hausdorff_kernel(&a, &b, &cfg).unwrap());
        assert_eq!(two[0].reference_ids, vec!["0", "1"]);
    }

    #[test]
    fn query_matches_pairwise_kernel() {
        let cfg = KernelConfig { length_scale_h: 3.0 };
        let maps = vec![
            set(&[(0.0, 0.0), (4.0, 1.0)]),
            set(&[(2.0, 2.0)]),
            set(&[(0.5, 0.5), (1.5, 3.5), (7.0, 0.0)]),
        ];
        let q = set(&[(2.0, 2.0)]);
        let f = query_feature(&q, &maps, &cfg).unwrap();
        assert_eq!(f.len(), 3);
        assert_eq!(f.values[1], 1.0);
        for (v, m) in f.values.iter().zip(&maps) {
            assert_eq!(*v, hausdorff_kernel(&q, m, &cfg).unwrap());
        }
    }

    #[test]
    fn sequential_and_parallel_gram_agree() {
        let maps: Vec<PointSet> = (0..7)
            .map(|k| {
                set(&(0..(k + 3))
                    .map(|i| ((i * k) as f64 % 5.0, i as f64 * 0.7))
                    .collect::<Vec<_>>())
            })
            .collect();
        let refs = ReferenceMaps::from_sets(maps).unwrap();
        let cfg = KernelConfig::default();
        assert_eq!(
            refs.gram_matrix(&cfg, Exec::Sequential).unwrap(),
            refs.gram_matrix(&cfg, Exec::Parallel).unwrap()
        );
    }

    fn arb_set(max: usize) -> impl Strategy<Value = PointSet> {
        proptest::collection::vec((-20.0f64..20.0, -20.0f64..20.0), 1..max)
            .prop_map(|v| PointSet(v.into_iter().map(Point::from).collect()))
    }

    fn arb_lattice_set(max: usize) -> impl Strategy<Value = PointSet> {
        proptest::collection::vec((0i32..8, 0i32..8), 1..max).prop_map(|v| {
            PointSet(
                v.into_iter()
                    .map(|(c, r)| Point::new(c as f64 + 0.5, r as f64 + 0.5))
                    .collect(),
            )
        })
    }

    proptest! {
        #[test]
        fn pruned_matches_brute_force(a in arb_set(50), b in arb_set(50)) {
            prop_assert_eq!(one_sided_hausdorff(&a, &b).unwrap().to_bits(), brute_one_sided(&a, &b).to_bits());
        }

        #[test]
        fn pruned_matches_brute_force_on_lattice(a in arb_lattice_set(50), b in arb_lattice_set(50)) {
            prop_assert_eq!(one_sided_hausdorff(&a, &b).unwrap().to_bits(), brute_one_sided(&a, &b).to_bits());
        }

        #[test]
        fn symmetric_is_symmetric(a in arb_set(30), b in arb_set(30)) {
            prop_assert_eq!(symmetric_hausdorff(&a, &b).unwrap(), symmetric_hausdorff(&b, &a).unwrap());
        }

        #[test]
        fn zero_iff_subset(a in arb_lattice_set(20), b in arb_lattice_set(20)) {
            let subset = a.points().iter().all(|p| b.points().contains(p));
            prop_assert_eq!(one_sided_hausdorff(&a, &b).unwrap() <= 1e-12, subset);
            let mut sup = b.clone();
            sup.0.extend_from_slice(a.points());
            prop_assert_eq!(one_sided_hausdorff(&a, &sup).unwrap(), 0.0);
        }

        #[test]
        fn kernel_in_unit_interval(a in arb_set(20), b in arb_set(20), lh in 0.01f64..500.0) {
            let k = hausdorff_kernel(&a, &b, &KernelConfig { length_scale_h: lh }).unwrap();
            prop_assert!(k > 0.0 && k <= 1.0);
        }
    }
}
