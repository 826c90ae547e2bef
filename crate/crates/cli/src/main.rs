//! `octnet` command-line tool: dataset synthesis, training, generation,
//! evaluation and plotting.
//!
//! Exit codes: 0 success, 1 usage error, 2 I/O or malformed input file,
//! 3 numerical or sampling failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use octnet::dataset::{load_dataset, save_dataset, split, synth_dataset, SynthParams};
use octnet::embedding::{load_trajectories, save_trajectories, BasisConfig, RidgeConfig};
use octnet::generator::GenerationConfig;
use octnet::grid::load_grid;
use octnet::mdn::{load_model, save_model, Family, MdnModel, TrainConfig};
use octnet::pipeline::{evaluate, generate_for_map, render_svg, train_model, EvalOptions, TrainOptions};
use octnet::similarity::KernelConfig;
use octnet::{Error, Exec};

const USAGE: u8 = 1;
const IO: u8 = 2;
const NUMERIC: u8 = 3;

#[derive(Parser)]
#[command(name = "octnet", version, about = "Map-conditioned trajectory generation")]
struct Cli {
    /// Run batch work on one thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset of room-and-corridor maps.
    Synth(SynthArgs),
    /// Train a model on a dataset's training split.
    Train(TrainArgs),
    /// Sample trajectories for one map.
    Generate(GenerateArgs),
    /// Score models on the maps they were not trained on.
    Evaluate(EvaluateArgs),
    /// Render a map and trajectories as SVG.
    Plot(PlotArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = SynthParams::default().num_maps)]
    num_maps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = SynthParams::default().rows)]
    rows: usize,
    #[arg(long, default_value_t = SynthParams::default().cols)]
    cols: usize,
    #[arg(long, default_value_t = SynthParams::default().min_rooms)]
    min_rooms: usize,
    #[arg(long, default_value_t = SynthParams::default().max_rooms)]
    max_rooms: usize,
    /// Corridor width in cells.
    #[arg(long, default_value_t = SynthParams::default().corridor_width)]
    corridor_width: usize,
    #[arg(long, default_value_t = SynthParams::default().trajectories_per_map)]
    trajectories_per_map: usize,
    /// Waypoints per trajectory.
    #[arg(long, default_value_t = SynthParams::default().waypoints)]
    waypoints: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Dist {
    Normal,
    Laplace,
}

impl From<Dist> for Family {
    fn from(d: Dist) -> Self {
        match d {
            Dist::Normal => Family::Normal,
            Dist::Laplace => Family::Laplace,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset manifest.
    #[arg(long)]
    data: PathBuf,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
    /// Mixture component family.
    #[arg(long, value_enum, default_value_t = Dist::Normal)]
    dist: Dist,
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    epochs: usize,
    /// Map kernel length scale.
    #[arg(long, default_value_t = KernelConfig::default().length_scale_h)]
    lh: f64,
    /// Basis length scale in normalised time.
    #[arg(long, default_value_t = BasisConfig::default().length_scale_b)]
    lb: f64,
    /// Number of mixture components.
    #[arg(long, default_value_t = 4)]
    components: usize,
    /// Number of basis functions per coordinate.
    #[arg(long, default_value_t = BasisConfig::default().num_basis())]
    basis: usize,
    /// Ridge regulariser for the trajectory embedding.
    #[arg(long, default_value_t = RidgeConfig::default().lambda)]
    lambda: f64,
    /// Seed for the split and for training.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fraction of maps used for training.
    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    batch_size: usize,
    #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
    lr: f64,
}

#[derive(Args)]
struct SamplingArgs {
    /// Trajectories per map.
    #[arg(long, default_value_t = 50)]
    num: usize,
    /// Waypoints per output trajectory.
    #[arg(long, default_value_t = 100)]
    points: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Evenly spaced points checked against the map.
    #[arg(long, default_value_t = GenerationConfig::default().num_validity_checks)]
    checks: usize,
    /// Sampling budget per accepted trajectory.
    #[arg(long, default_value_t = GenerationConfig::default().max_attempts)]
    max_attempts: usize,
}

impl SamplingArgs {
    fn options(&self) -> EvalOptions {
        EvalOptions {
            num: self.num,
            points: self.points,
            generation: GenerationConfig {
                num_validity_checks: self.checks,
                max_attempts: self.max_attempts,
                seed: self.seed,
            },
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Occupancy grid (.occ).
    #[arg(long)]
    map: PathBuf,
    /// Trajectory CSV to write.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    sampling: SamplingArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Model file; repeat to compare variants side by side.
    #[arg(long, required = true)]
    model: Vec<PathBuf>,
    /// Dataset manifest.
    #[arg(long)]
    data: PathBuf,
    /// Report file to write.
    #[arg(long)]
    out: PathBuf,
    /// Record wall-clock durations in the report.
    #[arg(long)]
    timings: bool,
    #[command(flatten)]
    sampling: SamplingArgs,
}

#[derive(Args)]
struct PlotArgs {
    /// Occupancy grid (.occ).
    #[arg(long)]
    map: PathBuf,
    /// Ground-truth trajectory CSV.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Generated trajectory CSV.
    #[arg(long)]
    generated: Option<PathBuf>,
    /// SVG file to write.
    #[arg(long)]
    out: PathBuf,
}

struct Failure {
    code: u8,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io { .. } | Error::Parse { .. } | Error::ModelFormat(_) | Error::Dataset(_) => IO,
            Error::InvalidInput(_) => USAGE,
            Error::EmptyPointSet | Error::Dimension { .. } | Error::NonFinite(_) | Error::GenerationFailed { .. } => {
                NUMERIC
            }
        };
        Failure {
            code,
            msg: e.to_string(),
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| {
        Error::Io {
            path: path.into(),
            source: e,
        }
        .into()
    })
}

fn synth(a: SynthArgs, exec: Exec) -> Result<(), Failure> {
    let params = SynthParams {
        rows: a.rows,
        cols: a.cols,
        min_rooms: a.min_rooms,
        max_rooms: a.max_rooms,
        corridor_width: a.corridor_width,
        trajectories_per_map: a.trajectories_per_map,
        waypoints: a.waypoints,
        num_maps: a.num_maps,
        seed: a.seed,
    };
    params.validate()?;
    let dataset = synth_dataset(&params, exec)?;
    let manifest = save_dataset(&dataset, &a.out)?;
    println!("wrote {} maps, manifest {}", dataset.len(), manifest.display());
    Ok(())
}

fn train(a: TrainArgs, exec: Exec) -> Result<(), Failure> {
    let mut opts = TrainOptions::new(a.dist.into());
    opts.kernel = KernelConfig { length_scale_h: a.lh };
    opts.basis = BasisConfig::evenly_spaced(a.basis, a.lb);
    opts.ridge = RidgeConfig { lambda: a.lambda };
    opts.num_components = a.components;
    opts.train = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        learning_rate: a.lr,
        seed: a.seed,
        ..TrainConfig::default()
    };
    opts.basis.validate()?;
    opts.train.validate()?;
    let dataset = load_dataset(&a.data)?;
    let (train_set, test_set) = split(&dataset, a.train_fraction, a.seed)?;
    let start = Instant::now();
    let model = train_model(&train_set, &opts, exec)?;
    save_model(&model, &a.out)?;
    println!(
        "trained on {} maps ({} held out) in {:.1} s",
        train_set.len(),
        test_set.len(),
        start.elapsed().as_secs_f64()
    );
    let nll = model.mdn.history().last().copied().unwrap_or(f64::NAN);
    println!("final mean NLL: {nll:.6}");
    Ok(())
}

fn generate(a: GenerateArgs) -> Result<(), Failure> {
    let opts = a.sampling.options();
    opts.validate()?;
    let model = load_model(&a.model)?;
    let grid = load_grid(&a.map)?;
    let gen = generate_for_map(&model, &grid, &opts, 0)?;
    println!(
        "acceptance rate: {:.4} ({} of {} attempts)",
        gen.stats.rate(),
        gen.stats.accepted,
        gen.stats.attempts
    );
    if gen.failed {
        return Err(Error::GenerationFailed {
            attempts: opts.generation.max_attempts,
        }
        .into());
    }
    save_trajectories(&gen.trajectories, &a.out)?;
    Ok(())
}

fn label_for(path: &Path, all: &[PathBuf]) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let clash = all.iter().filter(|p| p.file_stem() == path.file_stem()).count() > 1;
    if stem.is_empty() || clash {
        path.display().to_string()
    } else {
        stem
    }
}

fn evaluate_cmd(a: EvaluateArgs, exec: Exec) -> Result<(), Failure> {
    let opts = a.sampling.options();
    opts.validate()?;
    let start = Instant::now();
    let models = a.model.iter().map(load_model).collect::<Result<Vec<MdnModel>, _>>()?;
    let labels: Vec<String> = a.model.iter().map(|p| label_for(p, &a.model)).collect();
    let dataset = load_dataset(&a.data)?;
    let loaded = start.elapsed().as_secs_f64();
    let pairs: Vec<(&str, &MdnModel)> = labels.iter().map(String::as_str).zip(&models).collect();
    let mut report = evaluate(&pairs, &dataset, &opts, exec)?;
    if a.timings {
        report.durations = Some(vec![
            ("load".to_string(), loaded),
            ("evaluate".to_string(), start.elapsed().as_secs_f64() - loaded),
        ]);
    }
    write_file(&a.out, &report.to_json())?;
    println!(
        "{} test maps, {} trajectories each",
        report.test_map_ids.len(),
        opts.num
    );
    for v in &report.variants {
        let fmt = |r: Option<octnet::pipeline::MtdRow>| match r {
            Some(r) => format!("{:.3}/{:.3}/{:.3}", r.hausdorff, r.frechet, r.dtw),
            None => "-".to_string(),
        };
        println!(
            "{}: acceptance {:.4}, MTD H/F/DTW {} (baseline {}), failed maps {}",
            v.label,
            v.acceptance.rate,
            fmt(v.aggregate.generated),
            fmt(v.aggregate.baseline),
            v.failed_maps.len()
        );
    }
    println!("evaluated in {:.1} s", start.elapsed().as_secs_f64());
    if report.failed() {
        return Err(Failure {
            code: NUMERIC,
            msg: "generation failed on some maps; see failed_maps in the report".into(),
        });
    }
    Ok(())
}

fn plot(a: PlotArgs) -> Result<(), Failure> {
    let grid = load_grid(&a.map)?;
    let truth = a.truth.as_ref().map(load_trajectories).transpose()?.unwrap_or_default();
    let generated = a
        .generated
        .as_ref()
        .map(load_trajectories)
        .transpose()?
        .unwrap_or_default();
    write_file(&a.out, &render_svg(&grid, &truth, &generated))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let exec = if cli.sequential {
        Exec::Sequential
    } else {
        Exec::default()
    };
    let result = match cli.command {
        Command::Synth(a) => synth(a, exec),
        Command::Train(a) => train(a, exec),
        Command::Generate(a) => generate(a),
        Command::Evaluate(a) => evaluate_cmd(a, exec),
        Command::Plot(a) => plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
