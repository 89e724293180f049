//! The `redemption` command line.
//!
//! Exit codes: 0 success, 1 output could not be written, 2 invalid input
//! or usage, 3 calibration not significant under `--strict-significance`.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use indexmap::IndexMap;
use serde::Serialize;
use serde_json::{json, Value};

use crate::ablation::{self, combination_sweep, strategy_ablation, BootstrapConfig};
use crate::calibration::{calibrate, CalibrateOptions, CalibrationResult, GridSpec};
use crate::channels::{build_channels, parse_channel_list, Aggregation, ChannelOptions, ChannelSet, ChannelSpec};
use crate::data::{filter_identity_pairs, load_dataset, validate_join, Dataset, JoinMode, JoinReport, Requirement};
use crate::error::{Error, Result};
use crate::fusion::{score_dataset, FusionWeights};
use crate::gaussian::{self, Shrinkage};
use crate::rank::{bootstrap_tau, kendall_tau, p_value, PValueMethod, TauVariant};
use crate::report::{self, emit_report, MetricRow, Report, ReportFormat};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OUTPUT: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NOT_SIGNIFICANT: i32 = 3;

const DEFAULT_WEIGHTS: &str = "0.15,0.35,0.5,0.8";
const BOTH: &[ReportFormat] = &[ReportFormat::Structured, ReportFormat::Table];

#[derive(Debug, Parser)]
#[command(name = "redemption", version, about = "Hybrid image-caption evaluation with the Redemption Score")]
struct Cli {
    /// Worker threads for grid search and bootstrap (default: all cores)
    #[arg(long, env = "RS_WORKERS", global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load a manifest and check bundles, records and channel coverage
    Validate(ValidateArgs),
    /// Score every sample with fixed or calibrated weights
    Score(ScoreArgs),
    /// Grid-search weights and λ against human ratings
    Calibrate(CalibrateArgs),
    /// Bootstrap confidence intervals for Kendall's τ
    Bootstrap(BootstrapArgs),
    /// Strategy comparison and channel-combination sweep
    #[command(subcommand)]
    Ablate(AblateCommand),
    /// Per-channel and fused correlation table
    Report(ReportArgs),
}

#[derive(Debug, Subcommand)]
enum AblateCommand {
    /// Hybrid vs additive (λ=1) vs multiplicative (λ=0)
    Strategy(StrategyArgs),
    /// Calibrate every three-channel subset of a pool
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum JoinArg {
    Strict,
    Skip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum PValueArg {
    Normal,
    Permutation,
}

#[derive(Debug, Args, Serialize)]
struct DataArgs {
    /// Dataset manifest (JSON)
    #[arg(long)]
    manifest: PathBuf,
    /// Missing embeddings: fail (strict) or drop the sample (skip)
    #[arg(long, value_enum, default_value_t = JoinArg::Strict)]
    join: JoinArg,
    /// Keep samples whose candidate equals one of its references
    #[arg(long)]
    keep_identity_pairs: bool,
    /// How GTE scores combine multiple references: first, max or mean
    #[arg(long, default_value = "first")]
    gte_aggregation: Aggregation,
    /// Covariance ridge for MID: `auto` or a fixed non-negative value
    #[arg(long, default_value = "auto")]
    shrinkage: String,
    /// MID statistics file; read if present, otherwise fitted and written
    #[arg(long)]
    stats_cache: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct GridArgs {
    #[arg(long, default_value_t = 0.05)]
    weight_step: f64,
    #[arg(long, default_value_t = 0.15)]
    min_weight: f64,
    #[arg(long, default_value_t = 0.1)]
    lambda_step: f64,
}

#[derive(Debug, Args, Serialize)]
struct TauArgs {
    /// tau_c or tau_b
    #[arg(long, default_value = "tau_c")]
    variant: TauVariant,
    #[arg(long, value_enum, default_value_t = PValueArg::Normal)]
    pvalue: PValueArg,
    #[arg(long, default_value_t = 9999)]
    perm_iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args, Serialize)]
struct OutArgs {
    #[arg(long, default_value = "redemption-out")]
    output_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct ValidateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Also check coverage for these channels (comma-separated)
    #[arg(long)]
    channels: Option<String>,
    /// Write validation.json here
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct ScoreArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "mid,dino,gte")]
    channels: String,
    /// α,β,γ,λ
    #[arg(long, conflicts_with = "calibrate")]
    weights: Option<String>,
    /// Calibrate weights on the rated samples first
    #[arg(long)]
    calibrate: bool,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    tau: TauArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Debug, Args, Serialize)]
struct CalibrateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "mid,dino,gte")]
    channels: String,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    tau: TauArgs,
    /// Exit with code 3 when the best τ is not significant at 0.05
    #[arg(long)]
    strict_significance: bool,
    /// Include the full grid trace in the text report
    #[arg(long)]
    trace: bool,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Debug, Args, Serialize)]
struct BootstrapArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "mid,dino,gte")]
    channels: String,
    #[arg(long, default_value = DEFAULT_WEIGHTS)]
    weights: String,
    #[arg(long, default_value_t = 1000)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "tau_c")]
    variant: TauVariant,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Debug, Args, Serialize)]
struct AblationBootstrapArgs {
    /// Bootstrap each row's τ for a standard deviation column
    #[arg(long)]
    bootstrap: bool,
    #[arg(long, default_value_t = 1000)]
    runs: usize,
}

#[derive(Debug, Args, Serialize)]
struct StrategyArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "mid,dino,gte")]
    channels: String,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    tau: TauArgs,
    #[command(flatten)]
    boot: AblationBootstrapArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Debug, Args, Serialize)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "mid,gte,dino,bertscore,lpips,clip")]
    pool: String,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    tau: TauArgs,
    #[command(flatten)]
    boot: AblationBootstrapArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Debug, Args, Serialize)]
struct ReportArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Fused channels
    #[arg(long, default_value = "mid,dino,gte")]
    channels: String,
    /// Extra single-channel rows
    #[arg(long, default_value = "")]
    baselines: String,
    #[arg(long, default_value = DEFAULT_WEIGHTS)]
    weights: String,
    #[command(flatten)]
    tau: TauArgs,
    #[command(flatten)]
    out: OutArgs,
}

enum Failure {
    Input(Error),
    Output(Error),
    NotSignificant(f64),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Input(e)
    }
}

type CmdResult = std::result::Result<(), Failure>;

/// Parses `argv` (including the program name), runs the command and
/// returns the process exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers {
        pool = pool.num_threads(n);
    }
    let outcome = match pool.build() {
        Ok(pool) => pool.install(|| dispatch(cli.command)),
        Err(e) => Err(Failure::Input(Error::InvalidInput(format!("worker pool: {e}")))),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(Failure::Input(e)) => {
            report_error(&e);
            EXIT_INPUT
        }
        Err(Failure::Output(e)) => {
            eprintln!("error: {e}");
            EXIT_OUTPUT
        }
        Err(Failure::NotSignificant(p)) => {
            eprintln!("error: best τ is not significant (p = {}, threshold 0.05)", report::fmt_p(p));
            EXIT_NOT_SIGNIFICANT
        }
    }
}

fn report_error(e: &Error) {
    eprintln!("error: {e}");
    if let Error::MissingEmbeddings(r) = e {
        for m in r.missing.iter().take(20) {
            eprintln!("  sample {} channel {} key {}", m.sample_id, m.channel, m.key);
        }
        if r.missing.len() > 20 {
            eprintln!("  ... {} more", r.missing.len() - 20);
        }
    }
}

fn dispatch(command: Command) -> CmdResult {
    match command {
        Command::Validate(a) => validate(a),
        Command::Score(a) => score(a),
        Command::Calibrate(a) => calibrate_cmd(a),
        Command::Bootstrap(a) => bootstrap(a),
        Command::Ablate(AblateCommand::Strategy(a)) => ablate_strategy(a),
        Command::Ablate(AblateCommand::Sweep(a)) => ablate_sweep(a),
        Command::Report(a) => report_cmd(a),
    }
}

fn config<T: Serialize>(command: &str, args: &T) -> Value {
    json!({ "command": command, "args": args })
}

fn emit(report: Report, dir: &Path) -> CmdResult {
    let paths = emit_report(&report, BOTH, dir).map_err(Failure::Output)?;
    print!("{}", report.text());
    for p in paths {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn parse_shrinkage(s: &str) -> Result<Shrinkage> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(Shrinkage::Auto);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(Shrinkage::Fixed(v)),
        _ => Err(Error::InvalidInput(format!("shrinkage must be `auto` or a non-negative number, got `{s}`"))),
    }
}

fn parse_weights(s: &str) -> Result<FusionWeights> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidInput(format!("bad weight `{p}`")))
        })
        .collect::<Result<_>>()?;
    match parts[..] {
        [a, b, g, l] => FusionWeights::from_decimal(a, b, g, l),
        _ => Err(Error::InvalidInput(format!("--weights needs α,β,γ,λ, got `{s}`"))),
    }
}

fn parse_selection(s: &str) -> Result<[ChannelSpec; 3]> {
    let list = parse_channel_list(s)?;
    <[ChannelSpec; 3]>::try_from(list.as_slice())
        .map_err(|_| Error::InvalidInput(format!("exactly three channels are fused, got `{s}`")))
}

fn grid_spec(g: &GridArgs) -> Result<GridSpec> {
    let spec = GridSpec::from_decimal(g.weight_step, g.min_weight, g.lambda_step)?;
    spec.validate()?;
    Ok(spec)
}

fn calibrate_options(t: &TauArgs) -> CalibrateOptions {
    CalibrateOptions {
        variant: t.variant,
        p_value: pvalue_method(t),
    }
}

fn pvalue_method(t: &TauArgs) -> PValueMethod {
    match t.pvalue {
        PValueArg::Normal => PValueMethod::Normal,
        PValueArg::Permutation => PValueMethod::Permutation {
            iters: t.perm_iters,
            seed: t.seed,
        },
    }
}

struct Loaded {
    dataset: Dataset,
    identity_removed: usize,
    join: JoinReport,
    channels: ChannelSet,
}

impl Loaded {
    fn ratings(&self) -> IndexMap<String, f64> {
        self.dataset
            .samples
            .iter()
            .filter_map(|s| s.human_rating.map(|r| (s.sample_id.clone(), r)))
            .collect()
    }
}

fn requirements(requested: &[ChannelSpec], options: &ChannelOptions) -> Vec<Requirement> {
    requested.iter().flat_map(|c| c.requirements(options)).collect()
}

fn load(args: &DataArgs, requested: &[ChannelSpec]) -> Result<Loaded> {
    let shrinkage = parse_shrinkage(&args.shrinkage)?;
    let dataset = load_dataset(&args.manifest)?;
    let (dataset, identity_removed) = if args.keep_identity_pairs {
        (dataset, 0)
    } else {
        filter_identity_pairs(dataset)
    };
    let mut options = ChannelOptions {
        gte_aggregation: args.gte_aggregation,
        shrinkage,
        mid_stats: None,
    };
    let mode = match args.join {
        JoinArg::Strict => JoinMode::Strict,
        JoinArg::Skip => JoinMode::Skip,
    };
    let (dataset, join) = validate_join(&dataset, &requirements(requested, &options), mode)?;
    if dataset.is_empty() {
        return Err(Error::InvalidInput("no samples left after filtering".into()));
    }
    for d in &join.dropped {
        eprintln!("warning: skipped sample {d} (missing embeddings)");
    }

    if requested.contains(&ChannelSpec::Mid) {
        if let Some(path) = &args.stats_cache {
            let stats = if path.exists() {
                gaussian::read_stats(path)?
            } else {
                let s = gaussian::fit_dataset(&dataset, shrinkage)?;
                gaussian::write_stats(path, &s)?;
                s
            };
            options.mid_stats = Some(stats);
        }
    }
    let channels = build_channels(&dataset, requested, &options)?;
    Ok(Loaded {
        dataset,
        identity_removed,
        join,
        channels,
    })
}

#[derive(Serialize)]
struct ValidationSummary {
    samples: usize,
    rated: usize,
    identity_pairs_removed: usize,
    tables: IndexMap<String, (usize, usize)>,
    channels_checked: Vec<ChannelSpec>,
    join: JoinReport,
}

fn validate(a: ValidateArgs) -> CmdResult {
    let requested = match &a.channels {
        Some(s) => parse_channel_list(s)?,
        None => Vec::new(),
    };
    let loaded = load(&a.data, &requested)?;
    let summary = ValidationSummary {
        samples: loaded.dataset.len(),
        rated: loaded.ratings().len(),
        identity_pairs_removed: loaded.identity_removed,
        tables: loaded
            .dataset
            .tables
            .iter()
            .map(|(k, t)| (k.clone(), (t.len(), t.dim)))
            .collect(),
        channels_checked: requested,
        join: loaded.join,
    };

    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "samples: {} ({} rated)", summary.samples, summary.rated);
    let _ = writeln!(out, "identity pairs removed: {}", summary.identity_pairs_removed);
    for (name, (len, dim)) in &summary.tables {
        let _ = writeln!(out, "table {name}: {len} vectors, dim {dim}");
    }
    if !summary.channels_checked.is_empty() {
        let names: Vec<&str> = summary.channels_checked.iter().map(|c| c.name()).collect();
        let _ = writeln!(out, "channels ok: {}", names.join(", "));
    }
    let _ = writeln!(out, "skipped samples: {}", summary.join.dropped.len());

    if let Some(dir) = &a.output_dir {
        let report = Report::new("validation", config("validate", &a), &summary)?;
        emit_report(&report, &[ReportFormat::Structured], dir).map_err(Failure::Output)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ScoreLine<'a> {
    sample_id: &'a str,
    z: [f64; 3],
    rs: f64,
}

#[derive(Serialize)]
struct ScoreSummary {
    n: usize,
    channels: [ChannelSpec; 3],
    weights: FusionWeights,
    mean: f64,
    calibration: Option<CalibrationResult>,
}

fn score(a: ScoreArgs) -> CmdResult {
    let selection = parse_selection(&a.channels)?;
    let fixed = a.weights.as_deref().map(parse_weights).transpose()?;
    let spec = grid_spec(&a.grid)?;
    let loaded = load(&a.data, &selection)?;

    let (weights, calibration) = match fixed {
        Some(w) if !a.calibrate => (w, None),
        _ if a.calibrate => {
            let r = calibrate(&loaded.channels, selection, &loaded.ratings(), &spec, &calibrate_options(&a.tau))?;
            (r.best, Some(r))
        }
        _ => (parse_weights(DEFAULT_WEIGHTS)?, None),
    };
    let scores = score_dataset(&loaded.channels, selection, &weights)?;

    let mut lines = String::new();
    for (id, rs) in &scores.per_sample {
        let line = ScoreLine {
            sample_id: id,
            z: scores.z[id],
            rs: *rs,
        };
        lines.push_str(&serde_json::to_string(&line).expect("plain struct serializes"));
        lines.push('\n');
    }
    fs::create_dir_all(&a.out.output_dir).map_err(|e| Failure::Output(Error::io(&a.out.output_dir, e)))?;
    let path = a.out.output_dir.join("scores.jsonl");
    fs::write(&path, lines).map_err(|e| Failure::Output(Error::io(&path, e)))?;

    let summary = ScoreSummary {
        n: scores.per_sample.len(),
        channels: selection,
        weights,
        mean: scores.mean,
        calibration,
    };
    let mut t = report::TextTable::new(["n", "weights", "mean RS"]);
    t.push([summary.n.to_string(), weights.to_string(), report::fmt_score(summary.mean)]);
    let report = Report::new("score", config("score", &a), &summary)?.with_table("Scores", t);
    emit(report, &a.out.output_dir)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn calibrate_cmd(a: CalibrateArgs) -> CmdResult {
    let selection = parse_selection(&a.channels)?;
    let spec = grid_spec(&a.grid)?;
    let loaded = load(&a.data, &selection)?;
    let result = calibrate(&loaded.channels, selection, &loaded.ratings(), &spec, &calibrate_options(&a.tau))?;

    let mut report = Report::new("calibration", config("calibrate", &a), &result)?
        .with_table("Calibration", report::calibration_table(&result))
        .with_table("Sensitivity", report::sensitivity_table(&result));
    if a.trace {
        report = report.with_table("Grid trace", report::grid_trace_table(&result));
    }
    emit(report, &a.out.output_dir)?;
    if a.strict_significance && !result.significant {
        return Err(Failure::NotSignificant(result.p_value));
    }
    Ok(())
}

fn aligned(loaded: &Loaded, values: &IndexMap<String, f64>) -> (Vec<f64>, Vec<f64>) {
    loaded
        .ratings()
        .into_iter()
        .filter_map(|(id, r)| values.get(&id).map(|v| (*v, r)))
        .unzip()
}

fn bootstrap(a: BootstrapArgs) -> CmdResult {
    let selection = parse_selection(&a.channels)?;
    let weights = parse_weights(&a.weights)?;
    let loaded = load(&a.data, &selection)?;
    let scores = score_dataset(&loaded.channels, selection, &weights)?;

    let mut rows = Vec::new();
    let (x, y) = aligned(&loaded, &scores.per_sample);
    rows.push(("Redemption Score".to_string(), bootstrap_tau(&x, &y, a.runs, a.seed, a.variant)?));
    for c in selection {
        let (x, y) = aligned(&loaded, &loaded.channels[c.name()].values);
        rows.push((ablation::display_name(c).to_string(), bootstrap_tau(&x, &y, a.runs, a.seed, a.variant)?));
    }

    let result: IndexMap<&str, _> = rows.iter().map(|(n, s)| (n.as_str(), s)).collect();
    let report = Report::new("bootstrap", config("bootstrap", &a), &result)?
        .with_table("Bootstrap", report::bootstrap_table(&rows));
    emit(report, &a.out.output_dir)?;
    println!("\nRedemption Score: {}", report::format_bootstrap(&rows[0].1));
    Ok(())
}

fn boot_config(b: &AblationBootstrapArgs, t: &TauArgs) -> Option<BootstrapConfig> {
    b.bootstrap.then_some(BootstrapConfig {
        runs: b.runs,
        seed: t.seed,
        variant: t.variant,
    })
}

fn ablate_strategy(a: StrategyArgs) -> CmdResult {
    let selection = parse_selection(&a.channels)?;
    let spec = grid_spec(&a.grid)?;
    let loaded = load(&a.data, &selection)?;
    let boot = boot_config(&a.boot, &a.tau);
    let rows = strategy_ablation(
        &loaded.channels,
        selection,
        &loaded.ratings(),
        &spec,
        &calibrate_options(&a.tau),
        boot.as_ref(),
    )?;
    let report = Report::new("ablation_strategy", config("ablate strategy", &a), &rows)?
        .with_table("Aggregation strategy", report::ablation_table("approach", &rows));
    emit(report, &a.out.output_dir)
}

fn ablate_sweep(a: SweepArgs) -> CmdResult {
    let pool = ablation::canonical_pool(&parse_channel_list(&a.pool)?);
    let spec = grid_spec(&a.grid)?;
    let loaded = load(&a.data, &pool)?;
    let boot = boot_config(&a.boot, &a.tau);
    let rows = combination_sweep(
        &pool,
        &loaded.channels,
        &loaded.ratings(),
        &spec,
        &calibrate_options(&a.tau),
        boot.as_ref(),
    )?;
    let report = Report::new("ablation_sweep", config("ablate sweep", &a), &rows)?
        .with_table("Channel combinations", report::ablation_table("combination", &rows));
    emit(report, &a.out.output_dir)
}

fn metric_row(loaded: &Loaded, name: &str, values: &IndexMap<String, f64>, t: &TauArgs) -> Result<MetricRow> {
    let (x, y) = aligned(loaded, values);
    let result = kendall_tau(&x, &y, t.variant)?;
    Ok(MetricRow {
        metric: name.to_string(),
        mean: values.values().sum::<f64>() / values.len() as f64,
        tau: result.tau,
        p_value: p_value(&x, &y, &result, pvalue_method(t))?,
    })
}

fn report_cmd(a: ReportArgs) -> CmdResult {
    let selection = parse_selection(&a.channels)?;
    let weights = parse_weights(&a.weights)?;
    let mut requested = selection.to_vec();
    if !a.baselines.trim().is_empty() {
        for c in parse_channel_list(&a.baselines)? {
            if !requested.contains(&c) {
                requested.push(c);
            }
        }
    }
    let loaded = load(&a.data, &requested)?;
    let scores = score_dataset(&loaded.channels, selection, &weights)?;

    let mut rows = Vec::new();
    for c in &requested {
        rows.push(metric_row(&loaded, ablation::display_name(*c), &loaded.channels[c.name()].values, &a.tau)?);
    }
    rows.push(metric_row(&loaded, "Redemption Score", &scores.per_sample, &a.tau)?);

    let report = Report::new("report", config("report", &a), &json!({ "weights": weights, "metrics": rows }))?
        .with_table("Correlation with human ratings", report::metric_table(&rows));
    emit(report, &a.out.output_dir)
}
