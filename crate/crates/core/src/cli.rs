//! Command-line entry point.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use log::{error, info};

use crate::config::{RunConfig, Seeds};
use crate::dataset::{
    load_static_csv, load_timeseries_csv, parse_date, slice_date_range, variable_index, write_static_csv,
    write_timeseries_csv, DynamicSchema, NormalizationSpec, StaticAttributeTable, TimeSeriesPanel, DISPLAY_NAMES,
    DYNAMIC_COLUMNS,
};
use crate::error::{Error, Result};
use crate::eval::{
    compare_external, generate_synthetic_dataset, load_forecasts, local_forecasts, rmse_per_variable, run_ablation,
    write_forecasts, AblationGrid, ForecastSet, MetricsReport, SyntheticRecipe,
};
use crate::nn::{grad_check, random_tiny_problem, ModelParams};
use crate::pipeline::prepare_data;
use crate::train::{fit, predict_dataset, select_checkpoint, training_log_csv, Checkpoint, Selection};
use crate::viz::{plot_rmse_bars, plot_series, report_to_tidy_csv, PlotSeries, PlotSpec, SeriesRole};

pub const OUTPUT_DIR_ENV: &str = "EXOHYDRO_OUTPUT_DIR";
pub const CONFIG_ECHO: &str = "run_config.toml";
pub const GRAD_CHECK_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Parser)]
#[command(name = "exohydro", version, about = "Catchment forecasting with space-time input encodings")]
pub struct Cli {
    /// Where outputs go; overrides the config file.
    #[arg(long, global = true, env = OUTPUT_DIR_ENV)]
    pub output_dir: Option<PathBuf>,
    /// Worker threads; 1 is fully deterministic.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dynamic CSV and static CSV.
    SynthData(SynthArgs),
    /// Train a model and write checkpoints, split, normalization and log.
    Train(RunArgs),
    /// Score a checkpoint on the validation catchments.
    Evaluate(EvaluateArgs),
    /// Train one model per encoding variant and report validation RMSE.
    Ablate(AblateArgs),
    /// RMSE of external forecast files against truth.
    Compare(CompareArgs),
    /// Render SVG figures.
    #[command(subcommand)]
    Plot(PlotCommand),
    /// Check analytic gradients against finite differences on a tiny model.
    GradCheck(GradCheckArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 8)]
    pub catchments: usize,
    #[arg(long, default_value_t = 1096)]
    pub days: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub noise_scale: f64,
}

/// Flags shared by commands that prepare data and train.
#[derive(Debug, Args, Clone, Default)]
pub struct RunArgs {
    /// TOML run configuration (for example an echoed `run_config.toml`).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `paper` or `ablation-<variant>`.
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
    #[arg(long)]
    pub dynamic: Option<PathBuf>,
    #[arg(long = "static")]
    pub static_csv: Option<PathBuf>,
    /// Sets all four seeds.
    #[arg(long)]
    pub seed: Option<u64>,
    /// `rainfall_runoff` or `multivariate`.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub context: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub start_date: Option<String>,
    #[arg(long)]
    pub end_date: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Defaults to `checkpoint.ckpt` in the output directory.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// `default`, `encodings` or a comma-separated list of variants.
    #[arg(long, default_value = "default")]
    pub grid: String,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Dynamic CSV with the observed values.
    #[arg(long)]
    pub truth: PathBuf,
    /// `name=path` or a bare path named after its file stem; repeatable.
    #[arg(long, required = true, num_args = 1..)]
    pub forecasts: Vec<String>,
    /// First evaluation day; the truth's first day when absent.
    #[arg(long)]
    pub eval_start: Option<String>,
    #[arg(long)]
    pub eval_end: Option<String>,
    /// Normalization spec written by `train`; RMSE is on raw values without it.
    #[arg(long)]
    pub normalization: Option<PathBuf>,
    #[arg(long, default_value = "Forecast RMSE by variable")]
    pub title: String,
}

#[derive(Debug, Subcommand)]
pub enum PlotCommand {
    /// Truth and forecast lines for one catchment and variable.
    Series(SeriesPlotArgs),
    /// Grouped bars from a metrics report CSV.
    Bars(BarsPlotArgs),
}

#[derive(Debug, Args)]
pub struct SeriesPlotArgs {
    #[arg(long)]
    pub truth: PathBuf,
    /// `name=path`; repeatable.
    #[arg(long)]
    pub forecasts: Vec<String>,
    #[arg(long)]
    pub catchment: String,
    #[arg(long, default_value = "q")]
    pub variable: String,
    #[arg(long)]
    pub start: Option<String>,
    #[arg(long)]
    pub end: Option<String>,
    #[arg(long, default_value = "series.svg")]
    pub out: String,
}

#[derive(Debug, Args)]
pub struct BarsPlotArgs {
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long, default_value = "Validation RMSE by variable")]
    pub title: String,
    #[arg(long, default_value = "rmse_bars.svg")]
    pub out: String,
}

#[derive(Debug, Args)]
pub struct GradCheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<i32> {
    let ctx = Context { output_dir: cli.output_dir, threads: cli.threads };
    match cli.command {
        Command::SynthData(a) => cmd_synth_data(&ctx, &a),
        Command::Train(a) => cmd_train(&ctx, &a),
        Command::Evaluate(a) => cmd_evaluate(&ctx, &a),
        Command::Ablate(a) => cmd_ablate(&ctx, &a),
        Command::Compare(a) => cmd_compare(&ctx, &a),
        Command::Plot(PlotCommand::Series(a)) => cmd_plot_series(&ctx, &a),
        Command::Plot(PlotCommand::Bars(a)) => cmd_plot_bars(&ctx, &a),
        Command::GradCheck(a) => cmd_grad_check(&ctx, &a),
    }
}

struct Context {
    output_dir: Option<PathBuf>,
    threads: Option<usize>,
}

impl Context {
    /// Config with the global flags applied.
    fn finish(&self, mut cfg: RunConfig) -> RunConfig {
        if let Some(d) = &self.output_dir {
            cfg.paths.output_dir = d.clone();
        }
        if let Some(t) = self.threads {
            cfg.threads = t;
        }
        cfg
    }
}

fn prepare_output(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.paths.output_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    cfg.save(&dir.join(CONFIG_ECHO))?;
    Ok(dir)
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Resolves config file or preset, then applies flag overrides.
pub fn resolve_run_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match (&args.config, &args.preset) {
        (Some(p), _) => RunConfig::load(p)?,
        (None, Some(name)) => RunConfig::preset(name)?,
        (None, None) => RunConfig::default(),
    };
    if let Some(p) = &args.dynamic {
        cfg.paths.dynamic_csv = Some(p.clone());
    }
    if let Some(p) = &args.static_csv {
        cfg.paths.static_csv = Some(p.clone());
    }
    if let Some(s) = args.seed {
        cfg.seeds = Seeds::all(s);
    }
    if let Some(m) = &args.mode {
        cfg.data.mode = m.parse()?;
    }
    if let Some(v) = args.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = args.batch_size {
        cfg.train.batch_size = v;
    }
    if let Some(v) = args.learning_rate {
        cfg.train.learning_rate = v;
    }
    if let Some(v) = args.context {
        cfg.data.window.context_len = v;
    }
    if let Some(v) = args.hidden {
        cfg.model.hidden_size = v;
    }
    if let Some(d) = &args.start_date {
        cfg.start_date = Some(d.clone());
    }
    if let Some(d) = &args.end_date {
        cfg.end_date = Some(d.clone());
    }
    Ok(cfg)
}

/// Loads the panels (clipped to the study interval) and the static table if
/// one is configured.
pub fn load_inputs(cfg: &RunConfig) -> Result<(Vec<TimeSeriesPanel>, Option<StaticAttributeTable>)> {
    let dyn_path = cfg
        .paths
        .dynamic_csv
        .as_ref()
        .ok_or_else(|| Error::Config("no dynamic CSV configured".into()))?;
    let mut panels = load_timeseries_csv(dyn_path, &DynamicSchema::default())?;
    if cfg.start_date.is_some() || cfg.end_date.is_some() {
        let start = cfg.start_date.as_deref().map(parse_date).transpose()?.unwrap_or(NaiveDate::MIN);
        let end = cfg.end_date.as_deref().map(parse_date).transpose()?.unwrap_or(NaiveDate::MAX);
        panels = panels.iter().map(|p| slice_date_range(p, start, end)).collect::<Result<_>>()?;
    }
    let statics = cfg.paths.static_csv.as_deref().map(load_static_csv).transpose()?;
    info!("loaded {} catchments", panels.len());
    Ok((panels, statics))
}

fn cmd_synth_data(ctx: &Context, a: &SynthArgs) -> Result<i32> {
    let mut cfg = ctx.finish(RunConfig::default());
    let dir = cfg.paths.output_dir.clone();
    cfg.paths.dynamic_csv = Some(dir.join("dynamic.csv"));
    cfg.paths.static_csv = Some(dir.join("static.csv"));
    cfg.seeds = Seeds::all(a.seed);
    let recipe = SyntheticRecipe { noise_scale: a.noise_scale, ..SyntheticRecipe::default() };
    let (panels, table) = generate_synthetic_dataset(a.catchments, a.days, a.seed, &recipe)?;
    prepare_output(&cfg)?;
    write_timeseries_csv(&dir.join("dynamic.csv"), &panels)?;
    write_static_csv(&dir.join("static.csv"), &table)?;
    println!("wrote {} catchments x {} days to {}", a.catchments, a.days, dir.display());
    Ok(0)
}

fn cmd_train(ctx: &Context, a: &RunArgs) -> Result<i32> {
    let cfg = ctx.finish(resolve_run_config(a)?);
    cfg.validate()?;
    let dir = prepare_output(&cfg)?;
    let (panels, statics) = load_inputs(&cfg)?;
    let protocol = cfg.protocol();
    let prepared = prepare_data(&panels, statics.as_ref(), &protocol.data)?;
    prepared.split.save(&dir.join("split.csv"))?;
    prepared.normalization.save(&dir.join("normalization.txt"))?;
    write(&dir.join("features.txt"), &(prepared.manifest.feature_names.join("\n") + "\n"))?;
    info!(
        "{} training windows from {} catchments, {} validation windows from {}",
        prepared.train.len(),
        prepared.split.train_ids.len(),
        prepared.val.len(),
        prepared.split.val_ids.len()
    );

    let (fk, fo, ft) = prepared.train.widths();
    let params = ModelParams::init(fk, fo, ft, &protocol.model, protocol.init_seed)?;
    let outcome = fit(params, &prepared.train, &prepared.val, &protocol.train, &prepared.manifest, Some(&dir))?;
    write(&dir.join("training_log.csv"), &training_log_csv(&outcome.records))?;
    let (chosen, selection) = select_checkpoint(
        &outcome.records,
        &outcome.final_checkpoint,
        &outcome.best_checkpoint,
        protocol.train.overfit_factor,
    )?;
    chosen.save(&dir.join("checkpoint.ckpt"))?;
    let which = match selection {
        Selection::Final => "final",
        Selection::BestEarlier => "best earlier",
    };
    println!(
        "trained {} epochs; kept {which} checkpoint (epoch {}, validation loss {:.6e}) in {}",
        outcome.records.len(),
        chosen.epoch,
        chosen.val_loss,
        dir.display()
    );
    Ok(0)
}

fn run_label(cfg: &RunConfig) -> String {
    format!("LSTM-{}", cfg.data.mode).replace('_', "-")
}

fn cmd_evaluate(ctx: &Context, a: &EvaluateArgs) -> Result<i32> {
    let cfg = ctx.finish(resolve_run_config(&a.run)?);
    cfg.validate()?;
    let ckpt_path = a.checkpoint.clone().unwrap_or_else(|| cfg.paths.output_dir.join("checkpoint.ckpt"));
    if !ckpt_path.is_file() {
        return Err(Error::Config(format!(
            "checkpoint {} not found; run `train` first or pass --checkpoint",
            ckpt_path.display()
        )));
    }
    let ckpt = Checkpoint::load(&ckpt_path)?;
    let dir = prepare_output(&cfg)?;
    let (panels, statics) = load_inputs(&cfg)?;
    let protocol = cfg.protocol();
    let prepared = prepare_data(&panels, statics.as_ref(), &protocol.data)?;
    if ckpt.manifest.feature_names != prepared.manifest.feature_names
        || ckpt.manifest.observed != prepared.manifest.observed
    {
        return Err(Error::Config(format!(
            "checkpoint {} was trained with different inputs than this configuration",
            ckpt_path.display()
        )));
    }
    let (pred, target) = predict_dataset(&ckpt.params, &prepared.val, protocol.train.batch_size)?;
    let rmse = rmse_per_variable(&pred, &target)?;
    let mut report = MetricsReport::standard();
    report.push(run_label(&cfg), rmse.into_iter().map(Some).collect())?;
    report.metadata.insert("scale".into(), "normalized".into());
    report.metadata.insert("validation_catchments".into(), prepared.split.val_ids.len().to_string());
    write(&dir.join("metrics.csv"), &report.to_csv())?;
    write_forecasts(&dir.join("forecasts.csv"), &local_forecasts(&ckpt.params, &prepared, protocol.train.batch_size)?)?;
    print!("{}", report.to_table());
    Ok(0)
}

fn cmd_ablate(ctx: &Context, a: &AblateArgs) -> Result<i32> {
    let cfg = ctx.finish(resolve_run_config(&a.run)?);
    let grid = AblationGrid::named(&a.grid)?;
    let mut check = cfg.clone();
    check.data.encoding = crate::encodings::EncodingConfig::none();
    check.validate()?;
    if grid.variants.iter().any(|(_, e)| e.include_static || e.use_linear_space) && cfg.paths.static_csv.is_none() {
        return Err(Error::Config("the grid has variants using static attributes; pass --static".into()));
    }
    let dir = prepare_output(&cfg)?;
    let (panels, statics) = load_inputs(&cfg)?;
    let report = run_ablation(&panels, statics.as_ref(), &grid, &cfg.protocol(), cfg.threads)?;
    write(&dir.join("ablation.csv"), &report.to_csv())?;
    write(&dir.join("ablation_tidy.csv"), &report_to_tidy_csv(&report))?;
    write(&dir.join("ablation.svg"), &plot_rmse_bars(&report, "Validation RMSE by encoding variant")?)?;
    print!("{}", report.to_table());
    Ok(if report.rows.iter().any(|r| r.failure.is_some()) { 3 } else { 0 })
}

fn named_path(spec: &str) -> (String, PathBuf) {
    match spec.split_once('=') {
        Some((n, p)) if !n.is_empty() => (n.to_string(), PathBuf::from(p)),
        _ => {
            let p = PathBuf::from(spec);
            let n = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| spec.to_string());
            (n, p)
        }
    }
}

/// Reads a forecast file, or a dynamic CSV of the truth's shape.
fn read_forecast_file(path: &Path) -> Result<ForecastSet> {
    let first = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let header = first.lines().next().unwrap_or("");
    if header.split(',').map(str::trim).any(|c| c == DYNAMIC_COLUMNS[0]) {
        let panels = load_timeseries_csv(path, &DynamicSchema::default())?;
        let mut set = ForecastSet::new();
        for p in &panels {
            for (d, row) in p.dates().iter().zip(p.values()) {
                for (v, &x) in row.iter().enumerate() {
                    set.insert((p.catchment_id().to_string(), *d, v), x);
                }
            }
        }
        Ok(set)
    } else {
        load_forecasts(path)
    }
}

fn cmd_compare(ctx: &Context, a: &CompareArgs) -> Result<i32> {
    let mut cfg = ctx.finish(RunConfig::default());
    cfg.paths.dynamic_csv = Some(a.truth.clone());
    cfg.start_date = a.eval_start.clone();
    cfg.end_date = a.eval_end.clone();
    let truth = load_inputs(&cfg)?.0;
    let mut dates: Vec<NaiveDate> = truth.first().map(|p| p.dates().to_vec()).unwrap_or_default();
    dates.retain(|d| truth.iter().all(|p| p.date_index(*d).is_some()));
    let norm = a.normalization.as_deref().map(NormalizationSpec::load).transpose()?;
    let mut sets = Vec::new();
    for spec in &a.forecasts {
        let (name, path) = named_path(spec);
        sets.push((name, read_forecast_file(&path)?));
    }
    let dir = prepare_output(&cfg)?;
    let report = compare_external(&truth, &sets, &dates, norm.as_ref())?;
    write(&dir.join("comparison.csv"), &report.to_csv())?;
    write(&dir.join("comparison_tidy.csv"), &report_to_tidy_csv(&report))?;
    write(&dir.join("comparison.svg"), &plot_rmse_bars(&report, &a.title)?)?;
    print!("{}", report.to_table());
    Ok(0)
}

fn cmd_plot_series(ctx: &Context, a: &SeriesPlotArgs) -> Result<i32> {
    let mut cfg = ctx.finish(RunConfig::default());
    cfg.paths.dynamic_csv = Some(a.truth.clone());
    let var = variable_index(&a.variable)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown variable {:?}", a.variable)))?;
    let panels = load_inputs(&cfg)?.0;
    let panel = panels
        .iter()
        .find(|p| p.catchment_id() == a.catchment)
        .ok_or_else(|| Error::Data(format!("catchment {} not in {}", a.catchment, a.truth.display())))?;
    let start = a.start.as_deref().map(parse_date).transpose()?;
    let end = a.end.as_deref().map(parse_date).transpose()?;
    let keep = |d: &NaiveDate| start.map_or(true, |s| *d >= s) && end.map_or(true, |e| *d <= e);
    let (timestamps, values): (Vec<_>, Vec<_>) =
        panel.dates().iter().zip(panel.values()).filter(|(d, _)| keep(d)).map(|(d, r)| (*d, r[var])).unzip();
    let mut series = vec![PlotSeries { name: "observed".into(), role: SeriesRole::Truth, timestamps, values }];
    for spec in &a.forecasts {
        let (name, path) = named_path(spec);
        let set = read_forecast_file(&path)?;
        let (timestamps, values) = set
            .iter()
            .filter(|((c, d, v), _)| *c == a.catchment && *v == var && keep(d))
            .map(|((_, d, _), x)| (*d, *x))
            .unzip();
        series.push(PlotSeries { name, role: SeriesRole::Prediction, timestamps, values });
    }
    let spec = PlotSpec {
        title: format!("{} at {}", DISPLAY_NAMES[var], a.catchment),
        x_label: "date".into(),
        y_label: DISPLAY_NAMES[var].into(),
        series,
        date_range: match (start, end) {
            (Some(s), Some(e)) => Some((s, e)),
            _ => None,
        },
    };
    let dir = prepare_output(&cfg)?;
    let path = dir.join(&a.out);
    write(&path, &plot_series(&spec)?)?;
    println!("wrote {}", path.display());
    Ok(0)
}

fn cmd_plot_bars(ctx: &Context, a: &BarsPlotArgs) -> Result<i32> {
    let cfg = ctx.finish(RunConfig::default());
    let text = std::fs::read_to_string(&a.report).map_err(|e| Error::io(&a.report, e))?;
    let report = MetricsReport::from_csv(&text)?;
    let dir = prepare_output(&cfg)?;
    let path = dir.join(&a.out);
    write(&path, &plot_rmse_bars(&report, &a.title)?)?;
    println!("wrote {}", path.display());
    Ok(0)
}

fn cmd_grad_check(ctx: &Context, a: &GradCheckArgs) -> Result<i32> {
    let mut cfg = ctx.finish(RunConfig::default());
    cfg.seeds = Seeds::all(a.seed);
    prepare_output(&cfg)?;
    let (params, batch) = random_tiny_problem(a.seed);
    let r = grad_check(&params, &batch, a.step)?;
    println!(
        "max relative error {:.3e} over {} parameters (worst: {}[{}], analytic {:.6e}, numeric {:.6e})",
        r.max_rel_error, r.checked, r.worst_tensor, r.worst_index, r.analytic, r.numeric
    );
    if r.max_rel_error <= GRAD_CHECK_TOLERANCE {
        Ok(0)
    } else {
        eprintln!("gradient check failed: {:.3e} > {GRAD_CHECK_TOLERANCE:e}", r.max_rel_error);
        Ok(3)
    }
}
