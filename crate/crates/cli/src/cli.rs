use std::ffi::OsString;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use reach_surrogate_core::ablation::{ablate_data_volume, ablate_features, Arm, Evaluation, Series};
use reach_surrogate_core::features::ChannelMask;
use reach_surrogate_core::geometry::static_features;
use reach_surrogate_core::hydro::OracleConfig;
use reach_surrogate_core::metrics::evaluate_reach;
use reach_surrogate_core::model::ModelConfig;
use reach_surrogate_core::rollout::{rollout, RolloutConfig};
use reach_surrogate_core::synthetic::{Scenario, SyntheticSpec};
use reach_surrogate_core::train::{make_windows, train_reach, TrainConfig, TrainedModel};

use crate::bench::{benchmark, BenchCase};
use crate::checkpoint::Checkpoint;
use crate::container::write_atomic;
use crate::dataset::{load_forcings, load_state, read_geometry, save_state, Dataset, Role};
use crate::reports::{metrics_json, train_report_jsonl, write_evaluation};
use crate::WallClock;

pub const THREADS_ENV: &str = "REACH_SURROGATE_THREADS";

/// Bad input or configuration: exit 1. Anything that fails while running: exit 2.
#[derive(Debug)]
pub enum CliError {
    Invalid(String),
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Invalid(m) => write!(f, "invalid input: {m}"),
            CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

fn invalid(e: impl Display) -> CliError {
    CliError::Invalid(e.to_string())
}

fn runtime(e: impl Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "reach-surrogate", version, about = "Per-reach river surrogate: data, training, rollout, evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic reach with routed ground truth.
    GenData(GenData),
    /// Train a surrogate on a dataset directory and write a checkpoint.
    Train(Train),
    /// Roll a checkpoint forward from warmup truth.
    Rollout(RolloutCmd),
    /// Score a predicted state field against truth.
    Evaluate(Evaluate),
    /// Paired feature or data-volume experiments.
    Ablate(Ablate),
    /// Time the routing oracle against the surrogate on several reaches.
    Bench(Bench),
}

#[derive(Debug, Args)]
pub struct SpecArgs {
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 40)]
    pub n_xs: usize,
    /// Hours per simulated period.
    #[arg(long, default_value_t = 2000)]
    pub hours: usize,
    #[arg(long, default_value_t = 0.025)]
    pub manning_min: f64,
    #[arg(long, default_value_t = 0.065)]
    pub manning_max: f64,
}

impl SpecArgs {
    fn spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            seed: self.seed,
            n_xs: self.n_xs,
            duration_hours: self.hours,
            manning_range: (self.manning_min, self.manning_max),
            ..SyntheticSpec::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct GenData {
    #[command(flatten)]
    pub spec: SpecArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 60)]
    pub epochs: usize,
    #[arg(long, default_value_t = 2e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.0)]
    pub lambda_smooth: f64,
    #[arg(long, default_value_t = 0.2)]
    pub val_fraction: f64,
    /// Training seed (initialisation and shuffling).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 96)]
    pub hidden: usize,
    #[arg(long, default_value_t = 48)]
    pub max_modes: usize,
    /// Predict the state directly instead of an increment on the last hour.
    #[arg(long)]
    pub direct: bool,
    /// Comma-separated static or forcing channels to withhold, e.g. `z_bank,n_man`.
    #[arg(long, default_value = "")]
    pub drop_channels: String,
}

impl TrainArgs {
    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            lr: self.lr,
            batch_size: self.batch_size,
            smoothness_weight: self.lambda_smooth,
            val_fraction: self.val_fraction,
            seed: self.seed,
            ..TrainConfig::default()
        }
    }

    fn model_config(&self) -> Result<ModelConfig, CliError> {
        let mask = ChannelMask::parse_drop_list(&self.drop_channels).map_err(invalid)?;
        let cfg = ModelConfig {
            hidden: self.hidden,
            max_modes: self.max_modes,
            residual: !self.direct,
            ..ModelConfig::default()
        }
        .with_mask(mask);
        cfg.validate().map_err(invalid)?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct Train {
    #[arg(long)]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub train: TrainArgs,
    /// Round parameters to single precision before saving.
    #[arg(long)]
    pub float32: bool,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Directory for `train_report.jsonl`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RolloutCmd {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub geometry: PathBuf,
    /// Forcings starting at the first warmup hour.
    #[arg(long)]
    pub forcings: PathBuf,
    /// State CSV whose first hours seed the history window.
    #[arg(long)]
    pub warmup: PathBuf,
    /// Defaults to every hour the forcings cover after warmup.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Channels the checkpoint is expected to have been trained without.
    #[arg(long, default_value = "")]
    pub drop_channels: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct Evaluate {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Leading hours excluded from every metric.
    #[arg(long, default_value_t = 12)]
    pub warmup: usize,
    /// Directory for metrics.json and the CSVs; JSON goes to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Protocol {
    Features,
    Volume,
}

#[derive(Debug, Args)]
pub struct Ablate {
    #[arg(long, value_enum)]
    pub protocol: Protocol,
    #[arg(long)]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub train: TrainArgs,
    /// Training seeds of the paired runs.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    pub seeds: Vec<u64>,
    #[arg(long, default_value_t = 240)]
    pub horizon: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct Bench {
    #[arg(long, default_value_t = 5)]
    pub reaches: usize,
    #[command(flatten)]
    pub spec: SpecArgs,
    /// Epochs per reach model; timing does not depend on how well it fits.
    #[arg(long, default_value_t = 1)]
    pub epochs: usize,
    #[arg(long, default_value_t = 96)]
    pub hidden: usize,
    #[arg(long, default_value_t = 240)]
    pub horizon: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `argv` and runs the command; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return e.code();
    }
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Invalid(format!("{THREADS_ENV}={raw:?} is not a positive integer")))?;
    // A pool built earlier in this process already honours the cap.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::GenData(a) => gen_data(&a),
        Command::Train(a) => train(&a),
        Command::Rollout(a) => rollout_cmd(&a),
        Command::Evaluate(a) => evaluate(&a),
        Command::Ablate(a) => ablate(&a),
        Command::Bench(a) => bench(&a),
    }
}

fn gen_data(a: &GenData) -> Result<(), CliError> {
    let spec = a.spec.spec();
    spec.validate().map_err(invalid)?;
    let sc = Scenario::build(spec).map_err(runtime)?;
    Dataset::from_scenario(&sc).write(&a.out).map_err(runtime)?;
    eprintln!("wrote {} ({} sections, {} periods)", a.out.display(), sc.reach.len(), sc.train.len() + 1);
    Ok(())
}

fn require(path: &Path, what: &str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Invalid(format!("{what} {} does not exist", path.display())))
    }
}

fn load_dataset(dir: &Path) -> Result<Dataset, CliError> {
    require(dir, "dataset")?;
    Dataset::read(dir).map_err(invalid)
}

fn series(ds: &Dataset, role: Role) -> Vec<Series<'_>> {
    ds.role(role)
        .map(|p| Series {
            truth: &p.truth,
            forcings: &p.forcings,
        })
        .collect()
}

/// Trains on every training period of `ds`.
pub fn train_on(ds: &Dataset, model_cfg: ModelConfig, cfg: TrainConfig, verbose: bool) -> Result<TrainedModel, CliError> {
    cfg.validate().map_err(invalid)?;
    let st = static_features(&ds.reach);
    let mut samples = Vec::new();
    for s in series(ds, Role::Train) {
        samples.extend(make_windows(s.truth, &st, s.forcings, model_cfg.seq_len).map_err(invalid)?);
    }
    if samples.is_empty() {
        return Err(CliError::Invalid("dataset has no training periods".into()));
    }
    train_reach(model_cfg, cfg, samples, ds.reach.x_coord.clone(), &WallClock::new(), |r| {
        if verbose {
            let val = r.val_loss.map_or_else(|| "-".to_string(), |v| format!("{v:.4e}"));
            eprintln!(
                "epoch {:>3}  train {:.4e}  val {val}  {:.1}s",
                r.epoch,
                r.train_loss,
                r.seconds.unwrap_or(f64::NAN)
            );
        }
    })
    .map_err(runtime)
}

fn train(a: &Train) -> Result<(), CliError> {
    let ds = load_dataset(&a.dataset)?;
    let model_cfg = a.train.model_config()?;
    let cfg = a.train.train_config();
    let model = train_on(&ds, model_cfg, cfg.clone(), true)?;
    let mut ck = Checkpoint::new(ds.reach.id.clone(), ds.reach.len(), cfg, model);
    if a.float32 {
        ck.round_to_f32();
    }
    ck.save(&a.checkpoint).map_err(runtime)?;
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir).map_err(runtime)?;
        let log = train_report_jsonl(&ck.model.report).map_err(runtime)?;
        write_atomic(&dir.join("train_report.jsonl"), &log).map_err(runtime)?;
    }
    eprintln!(
        "best epoch {} of {}; checkpoint {}",
        ck.model.report.best_epoch,
        ck.model.report.epochs.len(),
        a.checkpoint.display()
    );
    Ok(())
}

fn rollout_cmd(a: &RolloutCmd) -> Result<(), CliError> {
    for (p, what) in [
        (&a.checkpoint, "checkpoint"),
        (&a.geometry, "geometry"),
        (&a.forcings, "forcings"),
        (&a.warmup, "warmup"),
    ] {
        require(p, what)?;
    }
    let ck = Checkpoint::load(&a.checkpoint).map_err(invalid)?;
    let reach = read_geometry(&a.geometry).map_err(invalid)?;
    if reach.len() != ck.n_xs {
        return Err(CliError::Invalid(format!(
            "checkpoint is for {} sections, geometry has {}",
            ck.n_xs,
            reach.len()
        )));
    }
    let forcings = load_forcings(&a.forcings).map_err(invalid)?;
    let seq_len = ck.model.config.seq_len;
    let state = load_state(&a.warmup, &reach.id).map_err(invalid)?;
    if state.hours() < seq_len {
        return Err(CliError::Invalid(format!("warmup has {} hours, model needs {seq_len}", state.hours())));
    }
    let warm = state.slice(0, seq_len);
    let horizon = match a.horizon {
        Some(h) => h,
        None => forcings.len().checked_sub(seq_len).filter(|&h| h > 0).ok_or_else(|| {
            CliError::Invalid(format!("forcings cover {} hours, nothing left after warmup", forcings.len()))
        })?,
    };
    let mut cfg = RolloutConfig::new(horizon, seq_len, reach.id.clone());
    cfg.mask = Some(ChannelMask::parse_drop_list(&a.drop_channels).map_err(invalid)?);
    let pred = rollout(&ck.model, &reach, &forcings, &warm, &cfg).map_err(|e| match e {
        reach_surrogate_core::rollout::RolloutError::Unstable { .. } => runtime(e),
        other => invalid(other),
    })?;
    save_state(&a.out, &pred).map_err(runtime)?;
    eprintln!("wrote {} hours to {}", pred.hours(), a.out.display());
    Ok(())
}

fn evaluate(a: &Evaluate) -> Result<(), CliError> {
    require(&a.pred, "prediction")?;
    require(&a.truth, "truth")?;
    let id = a.truth.file_stem().map_or_else(|| "reach".into(), |s| s.to_string_lossy().into_owned());
    let truth = load_state(&a.truth, &id).map_err(invalid)?;
    let pred = load_state(&a.pred, &id).map_err(invalid)?;
    let report = evaluate_reach(&pred, &truth, a.warmup).map_err(invalid)?;
    match &a.out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(runtime)?;
            write_evaluation(dir, &report, &pred, &truth, a.warmup).map_err(runtime)?;
        }
        None => print!("{}", String::from_utf8_lossy(&metrics_json(&report).map_err(runtime)?)),
    }
    Ok(())
}

/// Rollout window for the volume experiment: the held-out extreme event centred in `horizon`.
pub fn event_window(ds: &Dataset, horizon: usize, warmup: usize) -> Result<usize, CliError> {
    let test = ds.test().ok_or_else(|| CliError::Invalid("dataset has no test period".into()))?;
    let peak = test.largest_event().map_or(0.0, |e| e.peak_hour).max(0.0) as usize;
    let start = peak.saturating_sub(horizon / 2 + warmup);
    if start + warmup + horizon > test.truth.hours() {
        return Err(CliError::Invalid(format!(
            "test period of {} hours cannot hold warmup {warmup} + horizon {horizon} around hour {peak}",
            test.truth.hours()
        )));
    }
    Ok(start)
}

fn ablate(a: &Ablate) -> Result<(), CliError> {
    let ds = load_dataset(&a.dataset)?;
    let model_cfg = a.train.model_config()?;
    let test = ds.test().ok_or_else(|| CliError::Invalid("dataset has no test period".into()))?;
    let data = series(&ds, Role::Train);
    let clock = WallClock::new();
    fs::create_dir_all(&a.out).map_err(runtime)?;
    let mut lines = Vec::new();
    let mut wins = 0;
    for &seed in &a.seeds {
        let train_cfg = TrainConfig {
            seed,
            ..a.train.train_config()
        };
        let (value, better) = match a.protocol {
            Protocol::Features => {
                let eval = Evaluation {
                    series: Series {
                        truth: &test.truth,
                        forcings: &test.forcings,
                    },
                    start: 0,
                    horizon: a.horizon,
                };
                let drop = ChannelMask::parse_drop_list(if a.train.drop_channels.is_empty() {
                    "z_bank,n_man"
                } else {
                    &a.train.drop_channels
                })
                .map_err(invalid)?
                .dropped();
                let full_cfg = model_cfg.clone().with_mask(ChannelMask::all());
                let r = ablate_features(&drop, &ds.reach, &data, &full_cfg, &train_cfg, &eval, &clock).map_err(runtime)?;
                let better = r.ablated.stage.rmse > r.full.stage.rmse;
                (serde_json::to_value(&r).map_err(runtime)?, better)
            }
            Protocol::Volume => {
                let start = event_window(&ds, a.horizon, model_cfg.seq_len)?;
                let eval = Evaluation {
                    series: Series {
                        truth: &test.truth,
                        forcings: &test.forcings,
                    },
                    start,
                    horizon: a.horizon,
                };
                let arms = [
                    Arm {
                        name: "A: final 20% withheld".into(),
                        data: data.clone(),
                        train: TrainConfig {
                            val_fraction: 0.2,
                            ..train_cfg.clone()
                        },
                    },
                    Arm {
                        name: "B: all data".into(),
                        data: data.clone(),
                        train: TrainConfig {
                            val_fraction: 0.0,
                            ..train_cfg.clone()
                        },
                    },
                ];
                let gauge = ds.reach.len() / 2;
                let r = ablate_data_volume(&arms, &ds.reach, &model_cfg, &eval, gauge, &clock).map_err(runtime)?;
                let better = r[1].peak_stage_error <= r[0].peak_stage_error;
                (serde_json::to_value(&r).map_err(runtime)?, better)
            }
        };
        wins += usize::from(better);
        eprintln!("seed {seed}: expected direction {}", if better { "holds" } else { "fails" });
        lines.push(serde_json::json!({ "seed": seed, "direction_holds": better, "result": value }));
    }
    let summary = serde_json::json!({
        "protocol": format!("{:?}", a.protocol).to_lowercase(),
        "seeds": a.seeds,
        "direction_holds": wins,
        "runs": lines,
    });
    let mut bytes = serde_json::to_vec_pretty(&summary).map_err(runtime)?;
    bytes.push(b'\n');
    write_atomic(&a.out.join("ablation.json"), &bytes).map_err(runtime)?;
    println!("expected direction in {wins} of {} paired seeds", a.seeds.len());
    Ok(())
}

fn bench(a: &Bench) -> Result<(), CliError> {
    if a.reaches == 0 {
        return Err(CliError::Invalid("--reaches must be positive".into()));
    }
    let base = a.spec.spec();
    base.validate().map_err(invalid)?;
    // Reaches are independent: generate and train them in parallel, time them one by one.
    let prepared: Vec<(Dataset, TrainedModel)> = (0..a.reaches as u64)
        .into_par_iter()
        .map(|k| {
            let spec = SyntheticSpec {
                seed: base.seed + k,
                ..base.clone()
            };
            let ds = Dataset::from_scenario(&Scenario::build(spec).map_err(runtime)?);
            let model_cfg = ModelConfig {
                hidden: a.hidden,
                residual: true,
                ..ModelConfig::default()
            };
            let cfg = TrainConfig {
                epochs: a.epochs,
                seed: k,
                ..TrainConfig::default()
            };
            let model = train_on(&ds, model_cfg, cfg, false)?;
            Ok((ds, model))
        })
        .collect::<Result<_, CliError>>()?;
    let mut windows = Vec::new();
    for (ds, model) in &prepared {
        let test = ds.test().expect("scenario has a test period");
        let warm = model.config.seq_len;
        if test.truth.hours() < warm + a.horizon {
            return Err(CliError::Invalid(format!(
                "--hours {} is too short for horizon {}",
                test.truth.hours(),
                a.horizon
            )));
        }
        windows.push((test.forcings.slice(0, warm + a.horizon), test.truth.slice(0, warm)));
    }
    let cases: Vec<BenchCase<'_>> = prepared
        .iter()
        .zip(&windows)
        .map(|((ds, model), (forcings, warmup))| BenchCase {
            reach: &ds.reach,
            model,
            forcings,
            warmup,
        })
        .collect();
    let table = benchmark(&cases, &OracleConfig::default()).map_err(runtime)?;
    print!("{}", table.to_text());
    println!("speedup (oracle total / surrogate total): {:.3}", table.speedup());
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir).map_err(runtime)?;
        write_atomic(&dir.join("bench.csv"), &table.to_csv().map_err(runtime)?).map_err(runtime)?;
        write_atomic(&dir.join("bench.txt"), table.to_text().as_bytes()).map_err(runtime)?;
    }
    Ok(())
}
