use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use greenladder::harness::{measure_ladder, run_anchor, ExternalProvider, PowerModel};
use greenladder::model::{AnchorMeasurement, QualityMetric};
use greenladder::pipeline::{
    dataset_csv, load_data, load_models, resolve_seed, run_analyze, run_evaluate, run_train, save_models, synth_dataset,
    write_aggregate_reports, write_analysis_reports, write_file, write_policy_reports, write_train_reports, AppError, RunConfig,
    SEED_ENV,
};
use greenladder::predictors::{Family, Target};
use greenladder::report::{dataset_summary, model_report_text, policy_report_text};
use greenladder::selector::{build_grid_weighted, select, Rho, StageWeights};

#[derive(Parser)]
#[command(name = "greenladder", version, about = "Energy-aware bitrate ladder construction")]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed; falls back to the config file, then GREENLADDER_SEED, then 42.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Produce a measurement dataset.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Grid-search every family per target and report held-out scores.
    Train(TrainArgs),
    /// Pick the green representation for one video.
    Select(SelectArgs),
    /// Score the selector over a list of rho values on held-out videos.
    Evaluate(EvaluateArgs),
    /// Correlation matrix, anchor ranking and anchor sweep.
    Analyze(AnalyzeArgs),
    /// Per-resolution and per-QP aggregates of the dataset.
    Report(ReportArgs),
}

#[derive(Subcommand)]
enum DatasetCommand {
    /// Sample the closed-form synthetic world.
    Synth(SynthArgs),
    /// Run external encode/decode commands over a set of source videos.
    Measure(MeasureArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    videos: Option<usize>,
    #[arg(long)]
    noise_sd: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExternalArgs {
    /// Encode command; placeholders {input} {width} {height} {qp} {output} {sidecar}.
    #[arg(long)]
    encode_template: String,
    /// Decode command; placeholders {output} {sidecar}.
    #[arg(long)]
    decode_template: String,
    #[arg(long, default_value = "work")]
    work_dir: PathBuf,
    #[arg(long, default_value_t = 3600.0)]
    timeout_s: f64,
    /// Average encoder power draw in watts, used when the sidecar has no energy.
    #[arg(long, default_value_t = 100.0)]
    enc_power: f64,
    #[arg(long, default_value_t = 30.0)]
    dec_power: f64,
}

impl ExternalArgs {
    fn provider(&self) -> Result<ExternalProvider, AppError> {
        if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
            return Err(AppError::Usage("--timeout-s must be positive".into()));
        }
        let mut p = ExternalProvider::new(&self.encode_template, &self.decode_template, &self.work_dir);
        p.timeout = Duration::from_secs_f64(self.timeout_s);
        p.enc_power = PowerModel::new(self.enc_power);
        p.dec_power = PowerModel::new(self.dec_power);
        p.validate()?;
        Ok(p)
    }
}

#[derive(Args)]
struct MeasureArgs {
    #[command(flatten)]
    external: ExternalArgs,
    /// Source video; the file stem becomes the video id.
    #[arg(long = "video", required = true)]
    videos: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    /// Directory for model files and the report.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long = "family")]
    families: Vec<Family>,
    #[arg(long = "target")]
    targets: Vec<Target>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Search the reduced grids.
    #[arg(long)]
    quick: bool,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    models: Option<PathBuf>,
    #[arg(long)]
    rho: f64,
    #[arg(long)]
    metric: Option<QualityMetric>,
    #[arg(long, default_value_t = 1.0)]
    enc_weight: f64,
    #[arg(long, default_value_t = 1.0)]
    dec_weight: f64,
    /// Take the anchor from this dataset (with --video).
    #[arg(long, requires = "video")]
    data: Option<PathBuf>,
    #[arg(long)]
    video: Option<String>,
    #[arg(long, conflicts_with = "data")]
    anchor_enc_time: Option<f64>,
    #[arg(long, conflicts_with = "data")]
    anchor_dec_time: Option<f64>,
    #[arg(long, conflicts_with = "data")]
    anchor_vmaf: Option<f64>,
    #[arg(long, conflicts_with = "data")]
    anchor_psnr: Option<f64>,
    /// Measure the anchor of this source file with the external commands.
    #[arg(long, conflicts_with_all = ["data", "anchor_enc_time"], requires = "encode_template")]
    input: Option<PathBuf>,
    #[arg(long)]
    encode_template: Option<String>,
    #[arg(long)]
    decode_template: Option<String>,
    #[arg(long, default_value = "work")]
    work_dir: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    models: Option<PathBuf>,
    /// Comma-separated rho values.
    #[arg(long, value_delimiter = ',')]
    rho: Vec<f64>,
    #[arg(long)]
    metric: Option<QualityMetric>,
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Directory for policy.csv and policy.txt.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Family retrained for each anchor candidate.
    #[arg(long)]
    sweep_family: Option<Family>,
    #[arg(long, conflicts_with = "sweep_family")]
    no_sweep: bool,
    #[arg(long)]
    quick: bool,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// `flag`, else the config path `paths.<key>`.
fn required(flag: Option<PathBuf>, fallback: &Option<PathBuf>, name: &str, key: &str) -> Result<PathBuf, AppError> {
    flag.or_else(|| fallback.clone()).ok_or_else(|| AppError::Usage(format!("missing --{name} (or paths.{key} in the config)")))
}

/// Runs one command and returns what it prints.
fn run(cli: Cli) -> Result<String, AppError> {
    let mut out_text = String::new();
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let env = std::env::var(SEED_ENV).ok();
    let seed = resolve_seed(cli.seed, cfg.seed, env.as_deref())?;
    let paths = cfg.paths.clone();

    match cli.command {
        Command::Dataset(DatasetCommand::Synth(a)) => {
            let out = required(a.out, &paths.dataset, "out", "dataset")?;
            if let Some(n) = a.videos {
                cfg.synthetic.n_videos = n;
            }
            if let Some(sd) = a.noise_sd {
                cfg.synthetic.noise_sd = sd;
            }
            cfg.validate()?;
            let ds = synth_dataset(&cfg, seed)?;
            write_file(&out, &dataset_csv(&ds))?;
            out_text.push_str(&dataset_summary(&ds));
        }
        Command::Dataset(DatasetCommand::Measure(a)) => {
            let out = required(a.out, &paths.dataset, "out", "dataset")?;
            let mut provider = a.external.provider()?;
            let mut ids = Vec::new();
            for path in &a.videos {
                let id = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .ok_or_else(|| AppError::Usage(format!("{} has no file name", path.display())))?;
                if provider.videos.insert(id.clone(), path.clone()).is_some() {
                    return Err(AppError::Usage(format!("two videos share the id `{id}`")));
                }
                ids.push(id);
            }
            let ds = measure_ladder(&provider, &ids, &cfg.space)?;
            write_file(&out, &dataset_csv(&ds))?;
            out_text.push_str(&dataset_summary(&ds));
        }
        Command::Train(a) => {
            let data = required(a.data, &paths.dataset, "data", "dataset")?;
            let out = required(a.out, &paths.models, "out", "models")?;
            if !a.families.is_empty() {
                cfg.families = a.families;
            }
            if !a.targets.is_empty() {
                cfg.targets = a.targets;
            }
            cfg.folds = a.folds.unwrap_or(cfg.folds);
            cfg.train_fraction = a.train_fraction.unwrap_or(cfg.train_fraction);
            cfg.quick_grids |= a.quick;
            cfg.validate()?;
            let ds = load_data(&data)?;
            let summary = run_train(&ds, &cfg, seed)?;
            save_models(&summary.models, &out)?;
            write_train_reports(&summary.evaluation, &out)?;
            out_text.push_str(&model_report_text(&summary.evaluation));
        }
        Command::Select(a) => {
            let models_dir = required(a.models, &paths.models, "models", "models")?;
            let metric = a.metric.unwrap_or(cfg.quality_metric);
            let rho = Rho::new(a.rho).map_err(|e| AppError::Usage(e.to_string()))?;
            let anchor = if let Some(input) = &a.input {
                let decode = a.decode_template.clone().ok_or_else(|| AppError::Usage("--input needs --decode-template".into()))?;
                let encode = a.encode_template.clone().expect("clap enforces --encode-template");
                let mut provider = ExternalProvider::new(encode, decode, &a.work_dir);
                provider.validate()?;
                let id = a.video.clone().unwrap_or_else(|| input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
                provider.videos.insert(id.clone(), input.clone());
                run_anchor(&provider, &id, &cfg.space)?
            } else if let Some(data) = &a.data {
                let ds = load_data(data)?;
                ds.anchor_of(a.video.as_deref().expect("clap enforces --video"), &cfg.space)?
            } else {
                let (Some(enc_time), Some(dec_time)) = (a.anchor_enc_time, a.anchor_dec_time) else {
                    return Err(AppError::Usage("give --data/--video, --input, or --anchor-enc-time and --anchor-dec-time".into()));
                };
                let quality = match metric {
                    QualityMetric::Vmaf => a.anchor_vmaf,
                    QualityMetric::Psnr => a.anchor_psnr,
                };
                if quality.is_none() {
                    return Err(AppError::Usage(format!("missing --anchor-{metric}")));
                }
                AnchorMeasurement {
                    video_id: a.video.clone().unwrap_or_else(|| "input".into()),
                    enc_time,
                    dec_time,
                    psnr: a.anchor_psnr.unwrap_or(0.0),
                    vmaf: a.anchor_vmaf.unwrap_or(0.0),
                }
            };
            let targets = RunConfig { quality_metric: metric, ..cfg.clone() }.selection_targets();
            let models = load_models(&models_dir, &targets)?;
            let weights = StageWeights { enc: a.enc_weight, dec: a.dec_weight };
            let grid = build_grid_weighted(&models, &anchor, &cfg.space, metric, weights)?;
            let result = select(&grid, rho)?;
            let _ = writeln!(out_text, "{}", serde_json::to_string_pretty(&result).expect("selection serializes"));
        }
        Command::Evaluate(a) => {
            let data = required(a.data, &paths.dataset, "data", "dataset")?;
            let models_dir = required(a.models, &paths.models, "models", "models")?;
            if !a.rho.is_empty() {
                cfg.rho_list = a.rho.iter().map(|&r| Rho::new(r)).collect::<Result<_, _>>().map_err(|e| AppError::Usage(e.to_string()))?;
            }
            cfg.quality_metric = a.metric.unwrap_or(cfg.quality_metric);
            cfg.train_fraction = a.train_fraction.unwrap_or(cfg.train_fraction);
            cfg.validate()?;
            let ds = load_data(&data)?;
            let models = load_models(&models_dir, &cfg.selection_targets())?;
            let eval = run_evaluate(&ds, &models, &cfg, seed)?;
            if let Some(out) = a.out.or(paths.output.clone()) {
                write_policy_reports(&eval, &out)?;
            }
            out_text.push_str(&policy_report_text(&eval.reports));
        }
        Command::Analyze(a) => {
            let data = required(a.data, &paths.dataset, "data", "dataset")?;
            let out = required(a.out, &paths.output, "out", "output")?;
            if a.no_sweep {
                cfg.sweep_family = None;
            } else if a.sweep_family.is_some() {
                cfg.sweep_family = a.sweep_family;
            }
            cfg.quick_grids |= a.quick;
            let ds = load_data(&data)?;
            let summary = run_analyze(&ds, &cfg, seed)?;
            write_analysis_reports(&summary, &out)?;
            for row in summary.ranking.iter().take(5) {
                let _ = writeln!(out_text, "{:<12} mean corr {:.3}  mean time {:.3} s", row.rep.to_string(), row.mean_corr, row.mean_time);
            }
            if let Some(sweep) = &summary.sweep {
                for row in sweep {
                    let _ = writeln!(out_text, "anchor {:<12} time {:>9.3} s  R2 {:.4}", row.anchor.to_string(), row.mean_anchor_time, row.r2);
                }
            }
        }
        Command::Report(a) => {
            let data = required(a.data, &paths.dataset, "data", "dataset")?;
            let out = required(a.out, &paths.output, "out", "output")?;
            let ds = load_data(&data)?;
            write_aggregate_reports(&ds, &out)?;
            out_text.push_str(&dataset_summary(&ds));
        }
    }
    Ok(out_text)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(text) => {
            // a closed pipe downstream is not an error
            let _ = std::io::stdout().write_all(text.as_bytes());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
