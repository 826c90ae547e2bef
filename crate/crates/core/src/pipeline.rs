//! End-to-end flows: training a model from a dataset, evaluating models on
//! held-out maps against ground truth and a random-walk baseline, and SVG
//! rendering of maps with trajectories.

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::{map_rng, random_baseline, Dataset, Entry};
use crate::embedding::{discretise, embed_all, BasisConfig, DiscreteTrajectory, RidgeConfig, TrajectoryWeights};
use crate::generator::{generate_batch, AcceptanceStats, GenerationConfig};
use crate::grid::OccupancyGrid;
use crate::mdn::{train, Family, MdnConfig, MdnModel, TrainConfig};
use crate::metrics::{mtd, DistanceKind};
use crate::similarity::{KernelConfig, ReferenceMaps};
use crate::{Error, Exec, Point, Result};

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub kernel: KernelConfig,
    pub basis: BasisConfig,
    pub ridge: RidgeConfig,
    pub family: Family,
    pub num_components: usize,
    pub train: TrainConfig,
}

impl TrainOptions {
    pub fn new(family: Family) -> Self {
        TrainOptions {
            kernel: KernelConfig::default(),
            basis: BasisConfig::default(),
            ridge: RidgeConfig::default(),
            family,
            num_components: 4,
            train: TrainConfig::default(),
        }
    }
}

/// Gram features of the training maps, weights of their trajectories, then
/// MDN training. The training maps become the model's reference set.
pub fn train_model(train_set: &Dataset, opts: &TrainOptions, exec: Exec) -> Result<MdnModel> {
    if train_set.is_empty() {
        return Err(Error::Dataset("no training maps".into()));
    }
    opts.kernel.validate()?;
    opts.basis.validate()?;
    opts.ridge.validate()?;
    let references = ReferenceMaps::new(
        train_set.entries.iter().map(|e| e.map_id.clone()).collect(),
        train_set.entries.iter().map(|e| e.grid.occupied_points()).collect(),
    )?;
    let features = references.gram_features(&opts.kernel, exec)?;
    let weights = exec.try_map_range(train_set.len(), |i| {
        embed_all(
            &train_set.entries[i].trajectories,
            &opts.basis,
            &opts.ridge,
            Exec::Sequential,
        )
    })?;
    let data: Vec<_> = features.into_iter().zip(weights).collect();
    let mut cfg = MdnConfig::new(references.len(), 2 * opts.basis.num_basis(), opts.family);
    cfg.num_components = opts.num_components;
    let mdn = train(&data, &cfg, &opts.train)?;
    MdnModel::new(mdn, opts.basis.clone(), opts.ridge, opts.kernel, references)
}

/// Maps of `dataset` not used to train any of `models`, sorted by id.
pub fn held_out<'a>(dataset: &'a Dataset, models: &[&MdnModel]) -> Vec<&'a Entry> {
    let seen: HashSet<&str> = models
        .iter()
        .flat_map(|m| m.references().ids().iter().map(String::as_str))
        .collect();
    let mut maps: Vec<&Entry> = dataset
        .entries
        .iter()
        .filter(|e| !seen.contains(e.map_id.as_str()))
        .collect();
    maps.sort_by(|a, b| a.map_id.cmp(&b.map_id));
    maps
}

/// MTD of one trajectory under each distance kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MtdRow {
    pub hausdorff: f64,
    pub frechet: f64,
    pub dtw: f64,
}

impl MtdRow {
    pub fn compute<T: AsRef<[Point]>>(traj: &[Point], ground_truths: &[T]) -> Result<Self> {
        Ok(MtdRow {
            hausdorff: mtd(traj, ground_truths, DistanceKind::Hausdorff)?,
            frechet: mtd(traj, ground_truths, DistanceKind::Frechet)?,
            dtw: mtd(traj, ground_truths, DistanceKind::Dtw)?,
        })
    }

    pub fn get(&self, kind: DistanceKind) -> f64 {
        match kind {
            DistanceKind::Hausdorff => self.hausdorff,
            DistanceKind::Frechet => self.frechet,
            DistanceKind::Dtw => self.dtw,
        }
    }

    /// Elementwise mean; `None` for no rows.
    pub fn mean<'a>(rows: impl IntoIterator<Item = &'a MtdRow>) -> Option<MtdRow> {
        let mut sum = [0.0; 3];
        let mut n = 0usize;
        for r in rows {
            sum[0] += r.hausdorff;
            sum[1] += r.frechet;
            sum[2] += r.dtw;
            n += 1;
        }
        (n > 0).then(|| MtdRow {
            hausdorff: sum[0] / n as f64,
            frechet: sum[1] / n as f64,
            dtw: sum[2] / n as f64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Acceptance {
    pub accepted: usize,
    pub attempts: usize,
    pub rate: f64,
}

impl From<AcceptanceStats> for Acceptance {
    fn from(s: AcceptanceStats) -> Self {
        Acceptance {
            accepted: s.accepted,
            attempts: s.attempts,
            rate: s.rate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapReport {
    pub map_id: String,
    pub acceptance: Acceptance,
    /// Set when a trajectory exhausted its attempt budget; later
    /// trajectories for the map were not sampled.
    pub generation_failed: bool,
    pub generated: Vec<MtdRow>,
    pub baseline: Vec<MtdRow>,
    pub mean_generated: Option<MtdRow>,
    pub mean_baseline: Option<MtdRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    /// Mean over every generated trajectory of every map.
    pub generated: Option<MtdRow>,
    pub baseline: Option<MtdRow>,
    /// Generated over baseline mean DTW-MTD.
    pub dtw_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub label: String,
    pub family: Family,
    pub final_train_nll: Option<f64>,
    pub acceptance: Acceptance,
    pub failed_maps: Vec<String>,
    pub aggregate: Aggregate,
    pub maps: Vec<MapReport>,
}

impl VariantReport {
    pub fn failed(&self) -> bool {
        !self.failed_maps.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Trajectories generated (and baseline walks drawn) per map.
    pub num: usize,
    /// Waypoints per generated trajectory and per baseline walk.
    pub points: usize,
    pub generation: GenerationConfig,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            num: 50,
            points: 100,
            generation: GenerationConfig::default(),
        }
    }
}

impl EvalOptions {
    pub fn validate(&self) -> Result<()> {
        if self.num == 0 {
            return Err(Error::invalid("num must be at least 1"));
        }
        if self.points < 2 {
            return Err(Error::invalid("points must be at least 2"));
        }
        self.generation.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format_version: u32,
    pub seed: u64,
    pub config: EvalOptions,
    pub test_map_ids: Vec<String>,
    pub variants: Vec<VariantReport>,
    /// Wall-clock timings in seconds; left out unless requested, so reports
    /// of identical runs are byte-identical.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub durations: Option<Vec<(String, f64)>>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    pub fn failed(&self) -> bool {
        self.variants.iter().any(VariantReport::failed)
    }
}

/// Generated trajectories for one map plus sampling statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub weights: Vec<TrajectoryWeights>,
    pub trajectories: Vec<DiscreteTrajectory>,
    pub stats: AcceptanceStats,
    pub failed: bool,
}

/// Samples `num` valid trajectories and discretises each to `points`
/// waypoints. Generation failure is reported in the result, not as an error.
pub fn generate_for_map(
    model: &MdnModel,
    grid: &OccupancyGrid,
    opts: &EvalOptions,
    stream: usize,
) -> Result<Generated> {
    let mut rng = map_rng(opts.generation.seed, 2 * stream);
    let batch = generate_batch(model, grid, &opts.generation, opts.num, &mut rng)?;
    let trajectories = batch
        .trajectories
        .iter()
        .map(|w| discretise(w, &model.basis, opts.points))
        .collect::<Result<Vec<_>>>()?;
    Ok(Generated {
        weights: batch.trajectories,
        trajectories,
        stats: batch.stats,
        failed: batch.failure.is_some(),
    })
}

fn evaluate_map(model: &MdnModel, entry: &Entry, opts: &EvalOptions, stream: usize) -> Result<MapReport> {
    let gen = generate_for_map(model, &entry.grid, opts, stream)?;
    let generated = gen
        .trajectories
        .iter()
        .map(|t| MtdRow::compute(t.waypoints(), &entry.trajectories))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = map_rng(opts.generation.seed, 2 * stream + 1);
    let baseline = (0..opts.num)
        .map(|_| {
            let walk = random_baseline(&entry.grid, opts.points, &mut rng)?;
            MtdRow::compute(walk.waypoints(), &entry.trajectories)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MapReport {
        map_id: entry.map_id.clone(),
        acceptance: gen.stats.into(),
        generation_failed: gen.failed,
        mean_generated: MtdRow::mean(&generated),
        mean_baseline: MtdRow::mean(&baseline),
        generated,
        baseline,
    })
}

/// Evaluates one model on `maps`. Maps are processed independently, each
/// with its own generator streams derived from the generation seed and the
/// map's position, and reported in input order.
pub fn evaluate_variant(
    label: &str,
    model: &MdnModel,
    maps: &[&Entry],
    opts: &EvalOptions,
    exec: Exec,
) -> Result<VariantReport> {
    opts.validate()?;
    let reports = exec.try_map_range(maps.len(), |i| evaluate_map(model, maps[i], opts, i))?;
    let mut stats = AcceptanceStats::default();
    for r in &reports {
        stats.merge(AcceptanceStats {
            accepted: r.acceptance.accepted,
            attempts: r.acceptance.attempts,
        });
    }
    let generated = MtdRow::mean(reports.iter().flat_map(|r| &r.generated));
    let baseline = MtdRow::mean(reports.iter().flat_map(|r| &r.baseline));
    let dtw_ratio = match (generated, baseline) {
        (Some(g), Some(b)) if b.dtw > 0.0 => Some(g.dtw / b.dtw),
        _ => None,
    };
    Ok(VariantReport {
        label: label.to_string(),
        family: model.mdn.config().family,
        final_train_nll: model.mdn.history().last().copied(),
        acceptance: stats.into(),
        failed_maps: reports
            .iter()
            .filter(|r| r.generation_failed)
            .map(|r| r.map_id.clone())
            .collect(),
        aggregate: Aggregate {
            generated,
            baseline,
            dtw_ratio,
        },
        maps: reports,
    })
}

/// Evaluates every model on the maps of `dataset` that none of them was
/// trained on.
pub fn evaluate(models: &[(&str, &MdnModel)], dataset: &Dataset, opts: &EvalOptions, exec: Exec) -> Result<RunReport> {
    if models.is_empty() {
        return Err(Error::invalid("no models to evaluate"));
    }
    let refs: Vec<&MdnModel> = models.iter().map(|(_, m)| *m).collect();
    let maps = held_out(dataset, &refs);
    if maps.is_empty() {
        return Err(Error::Dataset("every map in the dataset was used for training".into()));
    }
    let variants = models
        .iter()
        .map(|(label, model)| evaluate_variant(label, model, &maps, opts, exec))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunReport {
        format_version: REPORT_VERSION,
        seed: opts.generation.seed,
        config: opts.clone(),
        test_map_ids: maps.iter().map(|e| e.map_id.clone()).collect(),
        variants,
        durations: None,
    })
}

const CELL_PX: f64 = 10.0;

/// SVG 1.1 drawing of a map: one rectangle per occupied cell, one polyline
/// per trajectory and one circle at each trajectory's final waypoint.
/// Ground truth is drawn in blue, generated trajectories in red.
pub fn render_svg(grid: &OccupancyGrid, truth: &[DiscreteTrajectory], generated: &[DiscreteTrajectory]) -> String {
    let (w, h) = (grid.cols() as f64 * CELL_PX, grid.rows() as f64 * CELL_PX);
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(
        s,
        r##"<rect class="background" x="0" y="0" width="{w}" height="{h}" fill="#ffffff"/>"##
    );
    let _ = writeln!(s, r##"<g class="occupied" fill="#404040">"##);
    for r in 0..grid.rows() {
        for c in 0..grid.cols() {
            if grid.get(r, c) {
                let _ = writeln!(
                    s,
                    r#"<rect x="{}" y="{}" width="{CELL_PX}" height="{CELL_PX}"/>"#,
                    c as f64 * CELL_PX,
                    r as f64 * CELL_PX
                );
            }
        }
    }
    s.push_str("</g>\n");
    for (class, colour, trajs) in [("truth", "#1f77b4", truth), ("generated", "#d62728", generated)] {
        let _ = writeln!(s, r#"<g class="{class}" stroke="{colour}" fill="{colour}">"#);
        for t in trajs {
            let pts: Vec<String> = t
                .waypoints()
                .iter()
                .map(|p| format!("{:.2},{:.2}", p.x * CELL_PX, p.y * CELL_PX))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke-width="1.5" stroke-opacity="0.7" points="{}"/>"#,
                pts.join(" ")
            );
            let end = t.waypoints()[t.len() - 1];
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3"/>"#,
                end.x * CELL_PX,
                end.y * CELL_PX
            );
        }
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{split, synth_dataset, SynthParams};

    fn tiny_options(family: Family) -> TrainOptions {
        let mut o = TrainOptions::new(family);
        o.train.epochs = 2;
        o
    }

    fn tiny_dataset() -> Dataset {
        let p = SynthParams {
            num_maps: 5,
            trajectories_per_map: 2,
            seed: 4,
            ..SynthParams::default()
        };
        synth_dataset(&p, Exec::Sequential).unwrap()
    }

    #[test]
    fn mtd_row_zero_for_ground_truth() {
        let d = tiny_dataset();
        let e = &d.entries[0];
        let row = MtdRow::compute(e.trajectories[1].waypoints(), &e.trajectories).unwrap();
        assert_eq!(
            row,
            MtdRow {
                hausdorff: 0.0,
                frechet: 0.0,
                dtw: 0.0
            }
        );
    }

    #[test]
    fn mean_of_rows() {
        let rows = [
            MtdRow {
                hausdorff: 1.0,
                frechet: 2.0,
                dtw: 3.0,
            },
            MtdRow {
                hausdorff: 3.0,
                frechet: 4.0,
                dtw: 9.0,
            },
        ];
        assert_eq!(
            MtdRow::mean(&rows),
            Some(MtdRow {
                hausdorff: 2.0,
                frechet: 3.0,
                dtw: 6.0
            })
        );
        assert_eq!(MtdRow::mean(&[]), None);
    }

    #[test]
    fn train_and_evaluate_small_run() {
        let d = tiny_dataset();
        let (train_set, _) = split(&d, 0.6, 1).unwrap();
        let normal = train_model(&train_set, &tiny_options(Family::Normal), Exec::Parallel).unwrap();
        let laplace = train_model(&train_set, &tiny_options(Family::Laplace), Exec::Parallel).unwrap();
        assert_eq!(normal.references().ids(), train_set.map_ids().as_slice());
        let opts = EvalOptions {
            num: 3,
            points: 30,
            generation: GenerationConfig {
                max_attempts: 50,
                ..GenerationConfig::default()
            },
        };
        let report = evaluate(&[("normal", &normal), ("laplace", &laplace)], &d, &opts, Exec::Parallel).unwrap();
        assert_eq!(report.test_map_ids.len(), 2);
        assert_eq!(report.variants.len(), 2);
        for v in &report.variants {
            assert_eq!(v.maps.len(), 2);
            for m in &v.maps {
                assert_eq!(m.baseline.len(), 3);
                assert!(m.generated.len() <= 3);
                assert_eq!(m.generation_failed, m.generated.len() < 3);
                assert!(m.acceptance.attempts >= m.acceptance.accepted);
            }
            let pooled: Vec<&MtdRow> = v.maps.iter().flat_map(|m| &m.baseline).collect();
            let mean = pooled.iter().map(|r| r.dtw).sum::<f64>() / pooled.len() as f64;
            assert!((v.aggregate.baseline.unwrap().dtw - mean).abs() < 1e-9);
        }
        let again = evaluate(
            &[("normal", &normal), ("laplace", &laplace)],
            &d,
            &opts,
            Exec::Sequential,
        )
        .unwrap();
        assert_eq!(report.to_json(), again.to_json());
        assert!(!report.to_json().contains("durations"));
    }

    #[test]
    fn evaluate_needs_held_out_maps() {
        let d = tiny_dataset();
        let model = train_model(&d, &tiny_options(Family::Normal), Exec::Sequential).unwrap();
        assert!(evaluate(&[("m", &model)], &d, &EvalOptions::default(), Exec::Sequential).is_err());
        assert!(evaluate(&[], &d, &EvalOptions::default(), Exec::Sequential).is_err());
    }

    #[test]
    fn svg_element_counts() {
        let d = tiny_dataset();
        let e = &d.entries[0];
        let svg = render_svg(&e.grid, &[], &[]);
        // One extra rect for the background.
        assert_eq!(svg.matches("<rect ").count(), e.grid.occupied_count() + 1);
        assert_eq!(svg.matches("<polyline").count(), 0);
        let svg = render_svg(&e.grid, &e.trajectories, &e.trajectories[..1]);
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert_eq!(svg.matches("<circle").count(), 3);
        assert_eq!(svg, render_svg(&e.grid, &e.trajectories, &e.trajectories[..1]));
    }
}
