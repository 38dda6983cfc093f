//! Command-line front end.
//!
//! Four subcommands cover the library's workflows:
//!
//! * `simulate` sweeps detection noise on a synthetic cluster and writes
//!   `noise_sweep.csv` comparing the propagated covariance against Monte
//!   Carlo.
//! * `padding-study` runs the two-arm matching experiment and writes
//!   `padding_study.csv`.
//! * `match REF OBS` gates two datasets against each other and writes
//!   `match_pairs.csv` plus `match_summary.json`.
//! * `describe DATASET` writes per-frame descriptors (`descriptors.csv`)
//!   and one frame's tolerance region (`distribution.json`).
//!
//! Options resolve as defaults, then `--config` file entries (`key = value`
//! lines, `#` comments), then explicit flags. All outputs are
//! byte-deterministic for a fixed seed, so runs can be diffed.

use crate::datasets::{self, CountRule, Dataset, PruneReport};
use crate::descriptor::{compute_descriptor, DescriptorError};
use crate::geometry::DepthModel;
use crate::matching::{match_datasets, MatchConfig, MatchError, MatchReport};
use crate::metrics::{self, MetricsError};
use crate::montecarlo::{
    self, noise_sweep, padding_study, simulate_initial_cluster, trial_rng, McError,
    PaddingStudyConfig, SweepRow,
};
use crate::unscented::{ut_descriptor_distribution, NoiseModel, UtError, UtParams};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::fmt::Write as FmtWrite;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}:{line}: {reason}")]
    Config {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("invalid value for {flag}: {reason}")]
    InvalidValue { flag: &'static str, reason: String },
    #[error("frame index {index} is out of range (dataset has {frames} frames)")]
    FrameOutOfRange { index: usize, frames: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Dataset(#[from] datasets::DatasetError),
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    MonteCarlo(#[from] McError),
    #[error(transparent)]
    Unscented(#[from] UtError),
}

#[derive(Debug, Parser)]
#[command(
    name = "flowermatch",
    version,
    about = "Re-identify 3D flower clusters across observation frames"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sweep detection noise on a synthetic cluster and compare the
    /// propagated descriptor covariance against Monte Carlo.
    Simulate(SimulateArgs),
    /// Measure how covariance padding trades correct matches against false
    /// positives over a population of random clusters.
    PaddingStudy(PaddingStudyArgs),
    /// Match every frame of an observed dataset against every frame of a
    /// reference dataset.
    Match(MatchArgs),
    /// Compute descriptors for a dataset and export one frame's tolerance
    /// region.
    Describe(DescribeArgs),
}

/// Options shared by every subcommand; unset options fall back to the
/// `--config` file and then to built-in defaults.
#[derive(Debug, Args, Default)]
pub struct CommonArgs {
    /// Options file with `key = value` lines.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// RNG seed for everything synthetic.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Gate confidence as a probability in (0, 1).
    #[arg(long)]
    pub confidence: Option<f64>,
    /// Gate confidence as a percentage in (0, 100).
    #[arg(long, conflicts_with = "confidence")]
    pub confidence_pct: Option<f64>,
    /// Detection noise sigma in meters; repeat the flag for a sweep grid.
    #[arg(long = "noise", value_name = "SIGMA")]
    pub noise: Vec<f64>,
    /// Extra diagonal covariance added to tolerance regions.
    #[arg(long)]
    pub padding: Option<f64>,
    /// Sigma-point spread parameter.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Prior-distribution weight parameter.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Secondary sigma-point scaling parameter.
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Monte Carlo trials per experiment.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Flowers per synthetic cluster; for dataset commands, the declared
    /// per-frame count to prune against (majority vote when unset).
    #[arg(long)]
    pub flowers: Option<usize>,
    /// Directory the report files are written to.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct PaddingStudyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Detection noise of the padded arm (defaults to the baseline noise).
    #[arg(long, value_name = "SIGMA")]
    pub padded_noise: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    /// Reference dataset (JSONL, or CSV by extension).
    pub reference: PathBuf,
    /// Observed dataset (JSONL, or CSV by extension).
    pub observed: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
    /// Treat the datasets as unrelated instead of frame-aligned.
    #[arg(long)]
    pub unaligned: bool,
    /// Interpretation of the depth channel in raw records.
    #[arg(long, value_enum, default_value_t)]
    pub depth_model: DepthModelArg,
}

#[derive(Debug, Args)]
pub struct DescribeArgs {
    /// Dataset to describe (JSONL, or CSV by extension).
    pub dataset: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
    /// Index (after pruning) of the frame whose tolerance region is exported.
    #[arg(long, default_value_t = 0)]
    pub frame: usize,
    /// Interpretation of the depth channel in raw records.
    #[arg(long, value_enum, default_value_t)]
    pub depth_model: DepthModelArg,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum DepthModelArg {
    /// Depth is distance along the viewing ray.
    #[default]
    Ray,
    /// Depth is the camera-space z coordinate.
    ZAxis,
}

impl From<DepthModelArg> for DepthModel {
    fn from(arg: DepthModelArg) -> Self {
        match arg {
            DepthModelArg::Ray => DepthModel::Ray,
            DepthModelArg::ZAxis => DepthModel::ZAxis,
        }
    }
}

/// Fully resolved options.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub seed: u64,
    pub confidence: f64,
    /// Noise grid; the first entry is the single noise level for commands
    /// that take only one.
    pub noise: Vec<f64>,
    /// Unset padding resolves per subcommand (0.005 for the padding study,
    /// 0 elsewhere).
    pub padding: Option<f64>,
    pub params: UtParams,
    pub trials: usize,
    pub flowers: Option<usize>,
    pub out: PathBuf,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            seed: 42,
            confidence: 0.95,
            noise: Vec::new(),
            padding: None,
            params: UtParams::default(),
            trials: 10_000,
            flowers: None,
            out: PathBuf::from("."),
        }
    }
}

fn parse_value<T: std::str::FromStr>(flag: &'static str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse().map_err(|e| CliError::InvalidValue {
        flag,
        reason: format!("{e} (got {value:?})"),
    })
}

fn pct_to_confidence(pct: f64) -> Result<f64, CliError> {
    if !(pct > 0.0 && pct < 100.0) {
        return Err(CliError::InvalidValue {
            flag: "--confidence-pct",
            reason: format!("must be in (0, 100), got {pct}"),
        });
    }
    Ok(pct / 100.0)
}

fn apply_config_line(settings: &mut Settings, key: &str, value: &str) -> Result<(), CliError> {
    match key {
        "seed" => settings.seed = parse_value("seed", value)?,
        "confidence" => settings.confidence = parse_value("confidence", value)?,
        "confidence-pct" => {
            settings.confidence = pct_to_confidence(parse_value("confidence-pct", value)?)?;
        }
        "noise" => {
            settings.noise = value
                .split(',')
                .map(|v| parse_value("noise", v))
                .collect::<Result<_, _>>()?;
        }
        "padding" => settings.padding = Some(parse_value("padding", value)?),
        "alpha" => settings.params.alpha = parse_value("alpha", value)?,
        "beta" => settings.params.beta = parse_value("beta", value)?,
        "kappa" => settings.params.kappa = parse_value("kappa", value)?,
        "trials" => settings.trials = parse_value("trials", value)?,
        "flowers" => settings.flowers = Some(parse_value("flowers", value)?),
        "out" => settings.out = PathBuf::from(value.trim()),
        _ => {
            return Err(CliError::InvalidValue {
                flag: "--config",
                reason: format!("unknown key {key:?}"),
            })
        }
    }
    Ok(())
}

fn load_config(settings: &mut Settings, path: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| CliError::Config {
            path: path.display().to_string(),
            line: idx + 1,
            reason: format!("expected `key = value`, got {raw:?}"),
        })?;
        apply_config_line(settings, key.trim(), value).map_err(|e| CliError::Config {
            path: path.display().to_string(),
            line: idx + 1,
            reason: e.to_string(),
        })?;
    }
    Ok(())
}

/// Resolves defaults, the config file, and explicit flags, in that order.
pub fn resolve_settings(common: &CommonArgs) -> Result<Settings, CliError> {
    let mut s = Settings::default();
    if let Some(path) = &common.config {
        load_config(&mut s, path)?;
    }
    if let Some(seed) = common.seed {
        s.seed = seed;
    }
    if let Some(confidence) = common.confidence {
        s.confidence = confidence;
    }
    if let Some(pct) = common.confidence_pct {
        s.confidence = pct_to_confidence(pct)?;
    }
    if !common.noise.is_empty() {
        s.noise = common.noise.clone();
    }
    if let Some(padding) = common.padding {
        s.padding = Some(padding);
    }
    if let Some(alpha) = common.alpha {
        s.params.alpha = alpha;
    }
    if let Some(beta) = common.beta {
        s.params.beta = beta;
    }
    if let Some(kappa) = common.kappa {
        s.params.kappa = kappa;
    }
    if let Some(trials) = common.trials {
        s.trials = trials;
    }
    if let Some(flowers) = common.flowers {
        s.flowers = Some(flowers);
    }
    if let Some(out) = &common.out {
        s.out = out.clone();
    }

    if !(s.confidence > 0.0 && s.confidence < 1.0) {
        return Err(CliError::InvalidValue {
            flag: "--confidence",
            reason: format!("must be in (0, 1), got {}", s.confidence),
        });
    }
    s.params.validate()?;
    if !s.params.alpha_in_recommended_range() {
        eprintln!(
            "warning: alpha = {} is outside the usual (1e-4, 1] range; \
             sigma points may spread poorly",
            s.params.alpha
        );
    }
    Ok(s)
}

fn write_output(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    let io_at = |path: &Path| {
        let path = path.display().to_string();
        move |source| CliError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io_at(dir))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(io_at(&path))?;
    Ok(path)
}

fn load_any_dataset(
    path: &Path,
    model: DepthModel,
    rule: CountRule,
) -> Result<(Dataset, PruneReport), CliError> {
    let by_extension = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.eq_ignore_ascii_case("csv"))
        .unwrap_or(false);
    let loaded = if by_extension {
        datasets::load_dataset_csv(path, rule)?
    } else {
        datasets::load_dataset_with(path, model, rule)?
    };
    Ok(loaded)
}

/// `--flowers` declares the per-frame count; without it each dataset is
/// pruned to its own majority count.
fn count_rule(s: &Settings) -> CountRule {
    s.flowers.map_or(CountRule::Majority, CountRule::Declared)
}

fn report_pruning(label: &str, report: &PruneReport) {
    if !report.pruned.is_empty() {
        eprintln!(
            "note: {label}: dropped {} frame(s) deviating from the declared flower count {}",
            report.pruned.len(),
            report.declared_count
        );
    }
}

fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("noise,frobenius_norm,outlier_pct\n");
    for row in rows {
        writeln!(
            out,
            "{},{},{}",
            row.noise, row.frobenius_norm, row.outlier_pct
        )
        .expect("writing to a String cannot fail");
    }
    out
}

fn padding_csv(arms: &[montecarlo::ArmOutcome]) -> String {
    let mut out = String::from(
        "label,noise,padding,correct_matches,total_false_positives,avg_false_positives\n",
    );
    for arm in arms {
        let avg = arm
            .avg_false_positives
            .map(|v| v.to_string())
            .unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{}",
            arm.label, arm.noise, arm.padding, arm.correct_matches, arm.total_false_positives, avg
        )
        .expect("writing to a String cannot fail");
    }
    out
}

fn pairs_csv(report: &MatchReport) -> String {
    let mut out = String::from("ref_frame,obs_frame,d2,threshold,count_ok,matched\n");
    for p in &report.pairs {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            p.reference_frame, p.observed_frame, p.d2, p.threshold, p.count_ok, p.matched
        )
        .expect("writing to a String cannot fail");
    }
    out
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(&args),
        Command::PaddingStudy(args) => cmd_padding_study(&args),
        Command::Match(args) => cmd_match(&args),
        Command::Describe(args) => cmd_describe(&args),
    }
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let s = resolve_settings(&args.common)?;
    let flowers = s.flowers.unwrap_or(3);
    if !(2..=100).contains(&flowers) {
        return Err(CliError::InvalidValue {
            flag: "--flowers",
            reason: format!("must be in 2..=100, got {flowers}"),
        });
    }
    if !(3..=6).contains(&flowers) {
        eprintln!("warning: {flowers} flowers is outside the validated 3..=6 range");
    }
    let grid = if s.noise.is_empty() {
        vec![0.01, 0.02, 0.03, 0.04, 0.05]
    } else {
        s.noise.clone()
    };
    let mut rng = trial_rng(s.seed, montecarlo::CLUSTER_STREAM);
    let cluster = simulate_initial_cluster(flowers, 1.0, &mut rng)?;
    let rows = noise_sweep(&cluster, &grid, s.trials, s.seed, &s.params, s.confidence)?;
    let path = write_output(&s.out, "noise_sweep.csv", &sweep_csv(&rows))?;
    for row in &rows {
        println!(
            "noise {}: frobenius {} outliers {}%",
            row.noise, row.frobenius_norm, row.outlier_pct
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_padding_study(args: &PaddingStudyArgs) -> Result<(), CliError> {
    let s = resolve_settings(&args.common)?;
    if s.flowers.is_some() {
        eprintln!("warning: the padding study draws 3..=6 flowers per trial; --flowers is ignored");
    }
    let baseline_noise = s.noise.first().copied().unwrap_or(0.01);
    let cfg = PaddingStudyConfig {
        trials: s.trials,
        seed: s.seed,
        confidence: s.confidence,
        baseline_noise,
        padded_noise: args.padded_noise.unwrap_or(baseline_noise),
        padding: s.padding.unwrap_or(0.005),
        params: s.params,
        ..PaddingStudyConfig::default()
    };
    let arms = padding_study(&cfg)?;
    let path = write_output(&s.out, "padding_study.csv", &padding_csv(&arms))?;
    for arm in &arms {
        println!(
            "{}: noise {} padding {} correct {} false-positives {} avg-fp {}",
            arm.label,
            arm.noise,
            arm.padding,
            arm.correct_matches,
            arm.total_false_positives,
            arm.avg_false_positives
                .map(|v| v.to_string())
                .unwrap_or_else(|| "n/a".to_string())
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct MatchSummary {
    version: u32,
    reference_frames: usize,
    observed_frames: usize,
    total_matches: usize,
    correct_matches: Option<usize>,
    total_false_positives: Option<u64>,
    avg_false_positives: Option<f64>,
    confidence: f64,
    noise: f64,
    padding: f64,
}

fn cmd_match(args: &MatchArgs) -> Result<(), CliError> {
    let s = resolve_settings(&args.common)?;
    let model = args.depth_model.into();
    let rule = count_rule(&s);
    let (reference, ref_report) = load_any_dataset(&args.reference, model, rule)?;
    report_pruning("reference", &ref_report);
    let (observed, obs_report) = load_any_dataset(&args.observed, model, rule)?;
    report_pruning("observed", &obs_report);

    let sigma = s.noise.first().copied().unwrap_or(0.01);
    let noise = NoiseModel::isotropic(sigma);
    let cfg = MatchConfig {
        confidence: s.confidence,
        padding: s.padding.unwrap_or(0.0),
        require_count: true,
    };
    let report = match_datasets(
        &reference,
        &observed,
        &noise,
        &s.params,
        &cfg,
        !args.unaligned,
    )?;

    let pairs_path = write_output(&s.out, "match_pairs.csv", &pairs_csv(&report))?;
    let summary = MatchSummary {
        version: 1,
        reference_frames: report.reference_frames,
        observed_frames: report.observed_frames,
        total_matches: report.total_matches,
        correct_matches: report.correct_matches,
        total_false_positives: report.total_false_positives,
        avg_false_positives: report.avg_false_positives,
        confidence: s.confidence,
        noise: sigma,
        padding: cfg.padding,
    };
    let mut summary_json =
        serde_json::to_string_pretty(&summary).expect("serialization is infallible");
    summary_json.push('\n');
    let summary_path = write_output(&s.out, "match_summary.json", &summary_json)?;

    println!(
        "{} x {} frames: {} match(es)",
        report.reference_frames, report.observed_frames, report.total_matches
    );
    if let Some(correct) = report.correct_matches {
        println!(
            "correct {} false-positives {} avg-fp {}",
            correct,
            report.total_false_positives.unwrap_or(0),
            report
                .avg_false_positives
                .map(|v| v.to_string())
                .unwrap_or_else(|| "n/a".to_string())
        );
    }
    println!("wrote {}", pairs_path.display());
    println!("wrote {}", summary_path.display());
    Ok(())
}

#[derive(Serialize)]
struct DistributionExport {
    version: u32,
    flower_count: usize,
    mean: [f64; 2],
    cov: [[f64; 2]; 2],
    // Extra context beyond the loadable core; readers ignore unknown fields.
    frame_id: i64,
    confidence: f64,
    threshold: f64,
    ellipse_semi_axes: [f64; 2],
    ellipse_axes: [[f64; 2]; 2],
}

fn cmd_describe(args: &DescribeArgs) -> Result<(), CliError> {
    let s = resolve_settings(&args.common)?;
    let rule = count_rule(&s);
    let (dataset, prune_report) = load_any_dataset(&args.dataset, args.depth_model.into(), rule)?;
    report_pruning("dataset", &prune_report);
    if args.frame >= dataset.len() {
        return Err(CliError::FrameOutOfRange {
            index: args.frame,
            frames: dataset.len(),
        });
    }

    let mut csv = String::from("frame_id,flowers,inertia,avg_distance\n");
    for frame in &dataset.frames {
        let d = compute_descriptor(frame)?;
        writeln!(
            csv,
            "{},{},{},{}",
            frame.frame_id,
            frame.len(),
            d.inertia,
            d.avg_distance
        )
        .expect("writing to a String cannot fail");
    }
    let csv_path = write_output(&s.out, "descriptors.csv", &csv)?;

    let sigma = s.noise.first().copied().unwrap_or(0.01);
    let frame = &dataset.frames[args.frame];
    let dist = ut_descriptor_distribution(
        frame,
        &NoiseModel::isotropic(sigma),
        &s.params,
        s.padding.unwrap_or(0.0),
    )?;
    let ellipse = metrics::confidence_ellipse(&dist.mean, &dist.cov, s.confidence)?;
    let export = DistributionExport {
        version: 1,
        flower_count: dist.flower_count,
        mean: [dist.mean.x, dist.mean.y],
        cov: [
            [dist.cov[(0, 0)], dist.cov[(0, 1)]],
            [dist.cov[(1, 0)], dist.cov[(1, 1)]],
        ],
        frame_id: frame.frame_id,
        confidence: s.confidence,
        threshold: ellipse.threshold,
        ellipse_semi_axes: ellipse.semi_axes,
        ellipse_axes: ellipse.axes,
    };
    let mut json = serde_json::to_string_pretty(&export).expect("serialization is infallible");
    json.push('\n');
    let json_path = write_output(&s.out, "distribution.json", &json)?;

    if !prune_report.pruned.is_empty() {
        write_output(&s.out, "prune_report.csv", &prune_report.to_csv())?;
    }
    println!(
        "{} frame(s) of {} flowers; tolerance region for frame {} (id {})",
        dataset.len(),
        dataset.declared_flower_count,
        args.frame,
        frame.frame_id
    );
    println!("wrote {}", csv_path.display());
    println!("wrote {}", json_path.display());
    Ok(())
}
