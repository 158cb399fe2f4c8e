//! Per-variable RMSE, ablation runs, comparison against external forecasts
//! and a seeded synthetic catchment generator.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use chrono::NaiveDate;
use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{
    parse_date, variable_index, NormalizationSpec, StaticAttributeTable, TimeSeriesPanel, DATE_FORMAT, DISPLAY_NAMES,
    DYNAMIC_COLUMNS, N_DYNAMIC,
};
use crate::encodings::EncodingConfig;
use crate::error::{Error, Result};
use crate::nn::{ModelConfig, ModelParams};
use crate::pipeline::{prepare_data, DataConfig, PreparedData};
use crate::tensor::Tensor;
use crate::train::{fit, predict_dataset, select_checkpoint, TrainConfig};
use crate::windowing::ExperimentMode;

/// RMSE per variable (last axis) pooled over every other axis.
pub fn rmse_per_variable(pred: &Tensor, target: &Tensor) -> Result<Vec<f64>> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!("prediction {:?} vs target {:?}", pred.shape(), target.shape())));
    }
    let nv = pred.last_dim();
    if nv == 0 {
        return Ok(Vec::new());
    }
    let count = pred.len() / nv;
    if count == 0 {
        return Err(Error::InvalidArgument("RMSE over zero elements".into()));
    }
    let mut sums = vec![0.0; nv];
    for (k, (p, t)) in pred.data().iter().zip(target.data()).enumerate() {
        let d = p - t;
        sums[k % nv] += d * d;
    }
    Ok(sums.into_iter().map(|s| (s / count as f64).sqrt()).collect())
}

/// One named row of a report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub name: String,
    /// One cell per report variable; `None` when absent.
    pub values: Vec<Option<f64>>,
    /// Reason the row could not be produced.
    pub failure: Option<String>,
}

/// RMSE table: rows are models or configurations, columns are variables.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    pub variables: Vec<String>,
    pub rows: Vec<ReportRow>,
    pub metadata: BTreeMap<String, String>,
}

impl MetricsReport {
    pub fn new(variables: Vec<String>) -> Self {
        Self { variables, rows: Vec::new(), metadata: BTreeMap::new() }
    }

    /// Six columns in display order P, SR, Tmax, Tmin, VP, Q.
    pub fn standard() -> Self {
        Self::new(DISPLAY_NAMES.iter().map(|s| s.to_string()).collect())
    }

    pub fn push(&mut self, name: impl Into<String>, values: Vec<Option<f64>>) -> Result<()> {
        if values.len() != self.variables.len() {
            return Err(Error::Shape(format!(
                "report has {} columns, row has {}",
                self.variables.len(),
                values.len()
            )));
        }
        if let Some(bad) = values.iter().flatten().find(|v| !(**v >= 0.0)) {
            return Err(Error::InvalidArgument(format!("RMSE cell {bad} is negative or NaN")));
        }
        self.rows.push(ReportRow { name: name.into(), values, failure: None });
        Ok(())
    }

    pub fn push_failure(&mut self, name: impl Into<String>, reason: impl Into<String>) {
        let n = self.variables.len();
        self.rows.push(ReportRow { name: name.into(), values: vec![None; n], failure: Some(reason.into()) });
    }

    pub fn row(&self, name: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn column(&self, variable: &str) -> Option<usize> {
        self.variables.iter().position(|v| v == variable)
    }

    /// `flags[row][col]` is true where the cell holds the column minimum.
    pub fn lowest_flags(&self) -> Vec<Vec<bool>> {
        let mins: Vec<Option<f64>> = (0..self.variables.len())
            .map(|c| self.rows.iter().filter_map(|r| r.values[c]).reduce(f64::min))
            .collect();
        self.rows
            .iter()
            .map(|r| r.values.iter().zip(&mins).map(|(v, m)| v.is_some() && *v == *m).collect())
            .collect()
    }

    /// Wide CSV: `model,<variables...>,status`; absent cells are empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model");
        for v in &self.variables {
            write!(out, ",{v}").unwrap();
        }
        out.push_str(",status\n");
        for r in &self.rows {
            out.push_str(&csv_field(&r.name));
            for v in &r.values {
                match v {
                    Some(x) => write!(out, ",{x:?}").unwrap(),
                    None => out.push(','),
                }
            }
            match &r.failure {
                Some(f) => writeln!(out, ",{}", csv_field(&format!("failed: {f}"))).unwrap(),
                None => out.push_str(",ok\n"),
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let header = reader.headers().map_err(|e| Error::parse("report", 1, e.to_string()))?.clone();
        if header.get(0) != Some("model") || header.iter().last() != Some("status") || header.len() < 2 {
            return Err(Error::parse("report", 1, "expected header model,<variables...>,status"));
        }
        let variables: Vec<String> = header.iter().skip(1).take(header.len() - 2).map(String::from).collect();
        let mut report = Self::new(variables);
        for (i, rec) in reader.records().enumerate() {
            let line = i as u64 + 2;
            let rec = rec.map_err(|e| Error::parse("report", line, e.to_string()))?;
            if rec.len() != header.len() {
                return Err(Error::parse("report", line, "wrong number of fields"));
            }
            let status = &rec[rec.len() - 1];
            if let Some(reason) = status.strip_prefix("failed: ") {
                report.push_failure(&rec[0], reason);
                continue;
            }
            let values = (1..rec.len() - 1)
                .map(|c| match &rec[c] {
                    "" => Ok(None),
                    s => s.parse().map(Some).map_err(|_| Error::parse("report", line, format!("bad number {s:?}"))),
                })
                .collect::<Result<Vec<_>>>()?;
            report.push(&rec[0], values)?;
        }
        Ok(report)
    }

    /// Aligned text table; `*` marks the lowest value of each column.
    pub fn to_table(&self) -> String {
        let flags = self.lowest_flags();
        let cells: Vec<Vec<String>> = self
            .rows
            .iter()
            .zip(&flags)
            .map(|(r, f)| {
                let mut row = vec![r.name.clone()];
                row.extend(r.values.iter().zip(f).map(|(v, low)| match v {
                    Some(x) => format!("{x:.4}{}", if *low { "*" } else { " " }),
                    None if r.failure.is_some() => "failed ".into(),
                    None => "-      ".into(),
                }));
                row
            })
            .collect();
        let mut header = vec!["Model".to_string()];
        header.extend(self.variables.iter().cloned());
        let widths: Vec<usize> = (0..header.len())
            .map(|c| cells.iter().map(|r| r[c].chars().count()).chain([header[c].chars().count()]).max().unwrap_or(0))
            .collect();
        let line = |cols: &[String]| {
            let mut s = String::new();
            for (c, text) in cols.iter().enumerate() {
                if c == 0 {
                    write!(s, "{text:<w$}", w = widths[0]).unwrap();
                } else {
                    write!(s, " | {text:>w$}", w = widths[c]).unwrap();
                }
            }
            s.trim_end().to_string() + "\n"
        };
        let mut out = line(&header);
        out.push_str(&"-".repeat(out.len() - 1));
        out.push('\n');
        for r in &cells {
            out.push_str(&line(r));
        }
        out.push_str("* lowest value in column\n");
        for r in self.rows.iter().filter(|r| r.failure.is_some()) {
            writeln!(out, "{} failed: {}", r.name, r.failure.as_deref().unwrap_or("")).unwrap();
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Named encoding variants trained side by side.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationGrid {
    pub variants: Vec<(String, EncodingConfig)>,
}

impl AblationGrid {
    pub const VARIANT_NAMES: [&'static str; 8] = [
        "just_ts",
        "linear",
        "annual",
        "extra",
        "just_ts_static",
        "linear_static",
        "annual_static",
        "extra_static",
    ];

    /// Encoding configuration of a named variant. A `_static` suffix adds
    /// the static attributes.
    pub fn variant(name: &str) -> Result<EncodingConfig> {
        let (base, with_static) = match name.strip_suffix("_static") {
            Some(b) => (b, true),
            None => (name, false),
        };
        let cfg = match base {
            "just_ts" => EncodingConfig::none(),
            "linear" => EncodingConfig::linear(),
            "annual" => EncodingConfig::annual(),
            "extra" => EncodingConfig::extra(),
            _ => {
                return Err(Error::Config(format!(
                    "unknown ablation variant {name:?}; expected one of {}",
                    Self::VARIANT_NAMES.join(", ")
                )))
            }
        };
        Ok(cfg.with_static(with_static))
    }

    /// `default` (all eight variants), `encodings` (the four without
    /// statics), or a comma-separated list of variant names.
    pub fn named(spec: &str) -> Result<Self> {
        let names: Vec<&str> = match spec {
            "default" => Self::VARIANT_NAMES.to_vec(),
            "encodings" => Self::VARIANT_NAMES[..4].to_vec(),
            list => list.split(',').map(str::trim).filter(|s| !s.is_empty()).collect(),
        };
        Self::from_names(&names)
    }

    pub fn from_names(names: &[&str]) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::Config("ablation grid is empty".into()));
        }
        let mut seen = BTreeSet::new();
        let mut variants = Vec::new();
        for n in names {
            if !seen.insert(*n) {
                return Err(Error::Config(format!("duplicate ablation variant {n}")));
            }
            variants.push((n.to_string(), Self::variant(n)?));
        }
        Ok(Self { variants })
    }
}

/// Protocol shared by every variant of an ablation run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentProtocol {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub init_seed: u64,
}

/// Outcome of training and validating one configuration.
#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub prepared: PreparedData,
    pub params: ModelParams,
    pub records: Vec<crate::train::EpochRecord>,
    pub val_rmse: Vec<f64>,
}

/// Prepares data, trains, selects a checkpoint and measures validation RMSE
/// per target variable on the normalized scale.
pub fn train_and_validate(
    panels: &[TimeSeriesPanel],
    statics: Option<&StaticAttributeTable>,
    protocol: &ExperimentProtocol,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainedRun> {
    let prepared = prepare_data(panels, statics, &protocol.data)?;
    let (fk, fo, ft) = prepared.train.widths();
    let params = ModelParams::init(fk, fo, ft, &protocol.model, protocol.init_seed)?;
    let outcome = fit(params, &prepared.train, &prepared.val, &protocol.train, &prepared.manifest, checkpoint_dir)?;
    let (chosen, _) = select_checkpoint(
        &outcome.records,
        &outcome.final_checkpoint,
        &outcome.best_checkpoint,
        protocol.train.overfit_factor,
    )?;
    let (pred, target) = predict_dataset(&chosen.params, &prepared.val, protocol.train.batch_size)?;
    let val_rmse = rmse_per_variable(&pred, &target)?;
    Ok(TrainedRun { params: chosen.params.clone(), records: outcome.records, val_rmse, prepared })
}

/// Trains one model per grid variant under the same seeds and protocol with
/// streamflow excluded from the inputs, and reports validation RMSE for all
/// six variables. Variants that fail are marked in the report. `threads`
/// workers train variants concurrently; results do not depend on it.
pub fn run_ablation(
    panels: &[TimeSeriesPanel],
    statics: Option<&StaticAttributeTable>,
    grid: &AblationGrid,
    protocol: &ExperimentProtocol,
    threads: usize,
) -> Result<MetricsReport> {
    let results: Vec<Mutex<Option<Result<Vec<f64>>>>> = grid.variants.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let work = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        let Some((name, encoding)) = grid.variants.get(i) else { break };
        let mut p = protocol.clone();
        p.data.mode = ExperimentMode::RainfallRunoff;
        p.data.encoding = encoding.clone();
        info!("ablation variant {name}: training");
        let r = train_and_validate(panels, statics, &p, None).map(|run| run.val_rmse);
        *results[i].lock().expect("result slot") = Some(r);
    };
    let threads = threads.clamp(1, grid.variants.len().max(1));
    if threads == 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..threads {
                s.spawn(&work);
            }
        });
    }

    let mut report = MetricsReport::standard();
    for ((name, _), slot) in grid.variants.iter().zip(results) {
        match slot.into_inner().expect("result slot").expect("every variant ran") {
            Ok(rmse) => report.push(name.clone(), rmse.into_iter().map(Some).collect())?,
            Err(e) => {
                warn!("ablation variant {name} failed: {e}");
                report.push_failure(name.clone(), e.to_string());
            }
        }
    }
    report.metadata.insert("mode".into(), ExperimentMode::RainfallRunoff.to_string());
    report.metadata.insert("split_seed".into(), protocol.data.split.seed.to_string());
    report.metadata.insert(
        "window".into(),
        format!("context {} horizon {} stride {}", protocol.data.window.context_len, protocol.data.window.horizon, protocol.data.window.stride),
    );
    report.metadata.insert("normalization".into(), protocol.data.normalization.to_string());
    Ok(report)
}

/// One row of a long-form forecast file.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastRecord {
    pub catchment_id: String,
    pub date: NaiveDate,
    pub variable: usize,
    pub value: f64,
}

/// Forecast values keyed by catchment, date and variable index.
pub type ForecastSet = BTreeMap<(String, NaiveDate, usize), f64>;

/// Reads `catchment_id,date,variable,value`. Variables may be given by
/// column name (`q`) or display name (`Q`).
pub fn load_forecasts(path: &Path) -> Result<ForecastSet> {
    let shown = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(&shown, 0, format!("{other:?}")),
    })?;
    let header = reader.headers().map_err(|e| Error::parse(&shown, 1, e.to_string()))?.clone();
    let expected = ["catchment_id", "date", "variable", "value"];
    if header.iter().map(str::trim).ne(expected) {
        return Err(Error::parse(&shown, 1, format!("expected header {}", expected.join(","))));
    }
    let mut out = ForecastSet::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| Error::parse(&shown, line, e.to_string()))?;
        if rec.len() != 4 {
            return Err(Error::parse(&shown, line, "expected 4 fields"));
        }
        let date = parse_date(rec[1].trim()).map_err(|e| Error::parse(&shown, line, e.to_string()))?;
        let var = variable_index(rec[2].trim())
            .ok_or_else(|| Error::parse(&shown, line, format!("unknown variable {:?}", &rec[2])))?;
        let value: f64 = rec[3]
            .trim()
            .parse()
            .map_err(|_| Error::parse(&shown, line, format!("bad value {:?}", &rec[3])))?;
        if !value.is_finite() {
            return Err(Error::parse(&shown, line, "non-finite forecast value"));
        }
        if out.insert((rec[0].trim().to_string(), date, var), value).is_some() {
            return Err(Error::parse(&shown, line, format!("duplicate forecast for {} {} {}", &rec[0], date, &rec[2])));
        }
    }
    Ok(out)
}

pub fn forecasts_to_csv(records: &[ForecastRecord]) -> String {
    let mut out = String::from("catchment_id,date,variable,value\n");
    for r in records {
        writeln!(
            out,
            "{},{},{},{:?}",
            r.catchment_id,
            r.date.format(DATE_FORMAT),
            DYNAMIC_COLUMNS[r.variable],
            r.value
        )
        .unwrap();
    }
    out
}

pub fn write_forecasts(path: &Path, records: &[ForecastRecord]) -> Result<()> {
    std::fs::write(path, forecasts_to_csv(records)).map_err(|e| Error::io(path, e))
}

/// All six variables of every panel on the given dates, as forecast records.
pub fn panels_as_forecasts(panels: &[TimeSeriesPanel], dates: &[NaiveDate]) -> Result<Vec<ForecastRecord>> {
    let mut out = Vec::new();
    for p in panels {
        for &d in dates {
            let t = p
                .date_index(d)
                .ok_or_else(|| Error::Data(format!("catchment {} has no data on {d}", p.catchment_id())))?;
            for v in 0..N_DYNAMIC {
                out.push(ForecastRecord {
                    catchment_id: p.catchment_id().to_string(),
                    date: d,
                    variable: v,
                    value: p.values()[t][v],
                });
            }
        }
    }
    Ok(out)
}

/// One-step-ahead forecasts of a trained model for every validation window,
/// converted back to raw units and dated by the forecast day.
pub fn local_forecasts(params: &ModelParams, prepared: &PreparedData, batch_size: usize) -> Result<Vec<ForecastRecord>> {
    let (pred, _) = predict_dataset(params, &prepared.val, batch_size)?;
    let spec = prepared.val.spec();
    let ft = pred.last_dim();
    let mut out = Vec::with_capacity(prepared.val.len() * ft);
    for (w, win) in prepared.val.windows().iter().enumerate() {
        let panel = &prepared.val_panels[win.catchment];
        let t = win.start + spec.context_len;
        for (k, &var) in prepared.roles.targets.iter().enumerate() {
            let y = pred.data()[w * spec.horizon * ft + k];
            out.push(ForecastRecord {
                catchment_id: panel.catchment_id().to_string(),
                date: panel.dates()[t],
                variable: var,
                value: prepared.normalization.invert_value(var, y),
            });
        }
    }
    Ok(out)
}

/// Per-variable RMSE of each named forecast set against the truth panels on
/// the declared evaluation dates. With a normalization spec both sides are
/// normalized first. Coverage gaps are reported as errors.
pub fn compare_external(
    truth: &[TimeSeriesPanel],
    forecasts: &[(String, ForecastSet)],
    eval_dates: &[NaiveDate],
    normalization: Option<&NormalizationSpec>,
) -> Result<MetricsReport> {
    if eval_dates.is_empty() {
        return Err(Error::InvalidArgument("no evaluation dates declared".into()));
    }
    if truth.is_empty() {
        return Err(Error::InvalidArgument("no truth catchments".into()));
    }
    let norm = |v: usize, x: f64| normalization.map_or(x, |n| n.apply_value(v, x));
    let mut truth_rows = Vec::with_capacity(truth.len() * eval_dates.len());
    for p in truth {
        for &d in eval_dates {
            let t = p
                .date_index(d)
                .ok_or_else(|| Error::Data(format!("truth for catchment {} has no data on {d}", p.catchment_id())))?;
            truth_rows.push((p.catchment_id(), d, p.values()[t]));
        }
    }

    let mut report = MetricsReport::standard();
    for (name, set) in forecasts {
        let mut missing_catchments = BTreeSet::new();
        let mut missing = Vec::new();
        let mut sums = [0.0; N_DYNAMIC];
        for (id, d, row) in &truth_rows {
            for v in 0..N_DYNAMIC {
                match set.get(&(id.to_string(), *d, v)) {
                    Some(&f) => {
                        let e = norm(v, f) - norm(v, row[v]);
                        sums[v] += e * e;
                    }
                    None => {
                        if !set.keys().any(|(c, _, _)| c == id) {
                            missing_catchments.insert(id.to_string());
                        } else {
                            missing.push(format!("{id} {d} {}", DYNAMIC_COLUMNS[v]));
                        }
                    }
                }
            }
        }
        if !missing_catchments.is_empty() || !missing.is_empty() {
            let mut msg = format!("forecast {name:?} does not cover the evaluation set");
            if !missing_catchments.is_empty() {
                write!(msg, "; missing catchments: {}", missing_catchments.into_iter().collect::<Vec<_>>().join(", ")).unwrap();
            }
            if !missing.is_empty() {
                let shown: Vec<&str> = missing.iter().take(10).map(String::as_str).collect();
                write!(msg, "; {} missing entries, first: {}", missing.len(), shown.join("; ")).unwrap();
            }
            return Err(Error::Data(msg));
        }
        let n = truth_rows.len() as f64;
        report.push(name.clone(), sums.iter().map(|s| Some((s / n).sqrt())).collect())?;
    }
    report.metadata.insert("evaluation_days".into(), eval_dates.len().to_string());
    report.metadata.insert("catchments".into(), truth.len().to_string());
    report.metadata.insert(
        "scale".into(),
        if normalization.is_some() { "normalized" } else { "as given" }.into(),
    );
    Ok(report)
}

/// Parameters of the synthetic generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRecipe {
    pub start_date: NaiveDate,
    /// Multiplies every noise term; 0 gives exactly periodic series.
    pub noise_scale: f64,
    /// AR(1) coefficient of the noise processes.
    pub ar_coefficient: f64,
    /// Days between precipitation and its streamflow response.
    pub streamflow_lag: usize,
    /// Number of uninformative static attributes appended to the table.
    pub filler_attributes: usize,
    /// Multiplies the annual swing of streamflow.
    pub streamflow_seasonality: f64,
    /// Coefficient of the streamflow response to lagged precipitation.
    pub rainfall_response: f64,
    /// Export only the attributes that shape streamflow (aridity and
    /// baseflow index) in the static table.
    pub streamflow_attributes_only: bool,
}

impl Default for SyntheticRecipe {
    fn default() -> Self {
        Self {
            start_date: NaiveDate::from_ymd_opt(1989, 10, 2).expect("valid date"),
            noise_scale: 1.0,
            ar_coefficient: 0.8,
            streamflow_lag: 2,
            filler_attributes: 2,
            streamflow_seasonality: 1.0,
            rainfall_response: 0.6,
            streamflow_attributes_only: false,
        }
    }
}

impl SyntheticRecipe {
    /// Streamflow dominated by its annual cycle, whose level and swing are
    /// set by the static attributes; weaker noise and rainfall response.
    pub fn strongly_annual() -> Self {
        Self {
            noise_scale: 0.5,
            filler_attributes: 0,
            streamflow_seasonality: 3.0,
            rainfall_response: 0.15,
            streamflow_attributes_only: true,
            ..Self::default()
        }
    }
}

/// Static attributes that drive the synthetic signals.
pub const SYNTHETIC_ATTRIBUTES: [&str; 4] = ["elevation", "aridity", "baseflow_index", "precip_phase"];
const STREAMFLOW_ATTRIBUTES: [&str; 2] = ["aridity", "baseflow_index"];

/// Phase of the shared streamflow seasonal cycle, radians after the start day.
const STREAMFLOW_PHASE: f64 = 2.4;
const TEMPERATURE_PHASE: f64 = 3.9;

struct Catchment {
    lat: f64,
    elevation: f64,
    aridity: f64,
    baseflow: f64,
    precip_phase: f64,
}

impl Catchment {
    fn precip_rate(&self, angle: f64) -> f64 {
        (2.5 / self.aridity) * (1.0 + 0.6 * (angle - self.precip_phase).cos())
    }

    /// Seasonal streamflow level before the rainfall response.
    fn streamflow_base(&self, angle: f64, seasonality: f64) -> f64 {
        let swing = (2.5 / self.aridity) * (1.5 - self.baseflow);
        0.3 + 3.0 * self.baseflow + seasonality * swing * (1.0 + (angle - STREAMFLOW_PHASE).cos())
    }
}

/// Deterministic catchment panels and static table. Each variable is a
/// static-dependent level plus an annual sinusoid with static-dependent
/// amplitude or phase plus AR(1) noise; streamflow adds a nonlinear response
/// to precipitation `streamflow_lag` days earlier.
pub fn generate_synthetic_dataset(
    n_catchments: usize,
    days: usize,
    seed: u64,
    recipe: &SyntheticRecipe,
) -> Result<(Vec<TimeSeriesPanel>, StaticAttributeTable)> {
    if n_catchments == 0 || days == 0 {
        return Err(Error::InvalidArgument("need at least one catchment and one day".into()));
    }
    if !(recipe.noise_scale >= 0.0) || !(recipe.ar_coefficient.abs() < 1.0) {
        return Err(Error::InvalidArgument("noise scale must be >= 0 and |AR coefficient| < 1".into()));
    }
    if !(recipe.streamflow_seasonality >= 0.0) || !(recipe.rainfall_response >= 0.0) {
        return Err(Error::InvalidArgument("streamflow seasonality and rainfall response must be >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rho = recipe.ar_coefficient;
    let innov = (1.0 - rho * rho).sqrt();
    let lag = recipe.streamflow_lag;
    let dates: Vec<NaiveDate> = (0..days)
        .map(|d| recipe.start_date + chrono::Duration::days(d as i64))
        .collect();

    let width = (n_catchments.max(2) as f64).log10().ceil() as usize + 1;
    let mut panels = Vec::with_capacity(n_catchments);
    let (mut ids, mut statics, mut lats, mut lons) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for c in 0..n_catchments {
        let id = format!("syn{c:0width$}");
        let lat = rng.gen_range(30.0..48.0);
        let lon = rng.gen_range(-124.0..-68.0);
        let cat = Catchment {
            lat,
            elevation: rng.gen_range(0.0..3000.0),
            // drier towards the west
            aridity: 0.5 + 1.2 * (-68.0 - lon) / 56.0 + rng.gen_range(0.0..0.3),
            baseflow: rng.gen_range(0.1..0.9),
            precip_phase: rng.gen_range(0.0..std::f64::consts::TAU),
        };
        let mut row = if recipe.streamflow_attributes_only {
            vec![Some(cat.aridity), Some(cat.baseflow)]
        } else {
            vec![Some(cat.elevation), Some(cat.aridity), Some(cat.baseflow), Some(cat.precip_phase)]
        };
        row.extend((0..recipe.filler_attributes).map(|_| Some(rng.gen_range(0.0..1.0))));

        // AR(1) noise in stationary state; precipitation runs `lag` days ahead
        let mut state: [f64; N_DYNAMIC] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let mut noise = vec![[0.0; N_DYNAMIC]; days + lag];
        for n in noise.iter_mut() {
            for (k, s) in state.iter_mut().enumerate() {
                let z: f64 = standard_normal(&mut rng);
                *s = rho * *s + innov * z;
                n[k] = *s * recipe.noise_scale;
            }
        }
        let precip = |t: usize| {
            // day t - lag of the series, so index 0 of `noise` is lag days before the start
            let d = t as f64 - lag as f64;
            let angle = std::f64::consts::TAU * d / crate::encodings::DEFAULT_ANNUAL_PERIOD;
            let rate = cat.precip_rate(angle);
            (rate * (1.0 + 0.9 * noise[t][0])).max(0.0)
        };
        let mut values = Vec::with_capacity(days);
        for d in 0..days {
            let angle = std::f64::consts::TAU * d as f64 / crate::encodings::DEFAULT_ANNUAL_PERIOD;
            let e = &noise[d + lag];
            let season = (angle - TEMPERATURE_PHASE).cos();
            let tmax = 28.0 - 0.6 * (cat.lat - 30.0) - 0.004 * cat.elevation + 12.0 * season + 3.0 * e[2];
            let tmin = tmax - 11.0 + 2.0 * e[3];
            let srad = 220.0 - 2.0 * (cat.lat - 30.0) + 90.0 * season + 30.0 * e[1];
            let vp = (1100.0 - 0.1 * cat.elevation + 550.0 * season + 150.0 * e[4]).max(50.0);
            let p = precip(d + lag);
            let p_lagged = precip(d);
            let q = cat.streamflow_base(angle, recipe.streamflow_seasonality)
                + recipe.rainfall_response * p_lagged.powf(1.3)
                + 0.15 * e[5].abs();
            values.push([p, srad, tmax, tmin, vp, q]);
        }
        panels.push(TimeSeriesPanel::new(id.clone(), dates.clone(), values)?);
        ids.push(id);
        statics.push(row);
        lats.push(lat);
        lons.push(lon);
    }
    let mut names: Vec<String> = SYNTHETIC_ATTRIBUTES
        .iter()
        .filter(|a| !recipe.streamflow_attributes_only || STREAMFLOW_ATTRIBUTES.contains(a))
        .map(|s| s.to_string())
        .collect();
    names.extend((0..recipe.filler_attributes).map(|k| format!("filler_{k}")));
    let table = StaticAttributeTable::new(ids, names, statics, lats, lons)?;
    Ok((panels, table))
}

fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller on (0, 1]
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn t(shape: Vec<usize>, data: Vec<f64>) -> Tensor {
        Tensor::new(shape, data).unwrap()
    }

    #[test]
    fn rmse_examples() {
        let a = t(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(rmse_per_variable(&a, &a).unwrap(), vec![0.0; 3]);
        let p = t(vec![2, 1], vec![0.0, 0.0]);
        let q = t(vec![2, 1], vec![3.0, 4.0]);
        let r = rmse_per_variable(&p, &q).unwrap();
        assert!((r[0] - 12.5f64.sqrt()).abs() < 1e-15);
        assert!((r[0] - 3.53553).abs() < 1e-5);
        assert!(rmse_per_variable(&p, &a).is_err());
    }

    #[test]
    fn standard_columns() {
        assert_eq!(MetricsReport::standard().variables, ["P", "SR", "Tmax", "Tmin", "VP", "Q"]);
    }

    proptest! {
        #[test]
        fn rmse_matches_brute_force(
            b in 1usize..5, h in 1usize..4, v in 1usize..7,
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = b * h * v;
            let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let got = rmse_per_variable(&t(vec![b, h, v], p.clone()), &t(vec![b, h, v], q.clone())).unwrap();
            for var in 0..v {
                let mut sq = Vec::new();
                for i in 0..b * h {
                    sq.push((p[i * v + var] - q[i * v + var]).powi(2));
                }
                let want = (sq.iter().sum::<f64>() / sq.len() as f64).sqrt();
                prop_assert!((got[var] - want).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn grid_variants() {
        assert_eq!(AblationGrid::named("encodings").unwrap().variants.len(), 4);
        assert_eq!(AblationGrid::named("default").unwrap().variants.len(), 8);
        let g = AblationGrid::named("annual, annual_static").unwrap();
        assert!(!g.variants[0].1.include_static && g.variants[1].1.include_static);
        assert!(AblationGrid::named("annual,annual").is_err());
        assert!(AblationGrid::named("weekly").is_err());
    }

    #[test]
    fn grid_feature_counts_are_monotone() {
        let g = AblationGrid::named("default").unwrap();
        let count = |n: &str| g.variants.iter().find(|(v, _)| v == n).unwrap().1.feature_count(6);
        let chain = ["just_ts", "linear", "annual", "extra"];
        for w in chain.windows(2) {
            assert!(count(w[0]) <= count(w[1]));
            assert!(count(&format!("{}_static", w[0])) <= count(&format!("{}_static", w[1])));
        }
        for n in chain {
            assert!(count(n) <= count(&format!("{n}_static")));
        }
    }

    fn sample_report() -> MetricsReport {
        let mut r = MetricsReport::new(vec!["P".into(), "Q".into()]);
        r.push("a", vec![Some(0.5), Some(0.1)]).unwrap();
        r.push("b, quoted", vec![Some(0.2), None]).unwrap();
        r.push_failure("c", "diverged");
        r
    }

    #[test]
    fn report_csv_roundtrip_and_flags() {
        let r = sample_report();
        assert_eq!(MetricsReport::from_csv(&r.to_csv()).unwrap().rows, r.rows);
        assert_eq!(r.lowest_flags(), vec![vec![false, true], vec![true, false], vec![false, false]]);
        let table = r.to_table();
        assert!(table.contains("0.2000*"));
        assert!(table.contains("c failed: diverged"));
    }

    #[test]
    fn report_rejects_negative_cells() {
        let mut r = MetricsReport::new(vec!["P".into()]);
        assert!(r.push("x", vec![Some(-1.0)]).is_err());
        assert!(r.push("x", vec![Some(1.0), Some(1.0)]).is_err());
    }

    fn truth() -> Vec<TimeSeriesPanel> {
        generate_synthetic_dataset(3, 30, 11, &SyntheticRecipe::default()).unwrap().0
    }

    fn as_set(records: &[ForecastRecord]) -> ForecastSet {
        records.iter().map(|r| ((r.catchment_id.clone(), r.date, r.variable), r.value)).collect()
    }

    #[test]
    fn compare_identity_and_gaps() {
        let panels = truth();
        let dates: Vec<_> = panels[0].dates()[10..20].to_vec();
        let recs = panels_as_forecasts(&panels, &dates).unwrap();
        let r = compare_external(&panels, &[("truth".into(), as_set(&recs))], &dates, None).unwrap();
        assert_eq!(r.rows[0].values, vec![Some(0.0); 6]);
        assert!(r.lowest_flags()[0].iter().all(|f| *f));

        let missing: Vec<_> = recs.iter().filter(|r| r.catchment_id != panels[1].catchment_id()).cloned().collect();
        let err = compare_external(&panels, &[("m".into(), as_set(&missing))], &dates, None).unwrap_err();
        assert!(err.to_string().contains(panels[1].catchment_id()), "{err}");

        let one_gap: Vec<_> = recs[1..].to_vec();
        assert!(compare_external(&panels, &[("g".into(), as_set(&one_gap))], &dates, None).is_err());
        assert!(compare_external(&panels, &[("e".into(), as_set(&recs))], &[], None).is_err());
    }

    #[test]
    fn forecast_file_roundtrip_and_order_invariance() {
        let panels = truth();
        let dates: Vec<_> = panels[0].dates()[..5].to_vec();
        let mut recs = panels_as_forecasts(&panels, &dates).unwrap();
        for r in recs.iter_mut() {
            r.value += 0.25;
        }
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        write_forecasts(&a, &recs).unwrap();
        recs.reverse();
        let b = dir.path().join("b.csv");
        write_forecasts(&b, &recs).unwrap();
        let (fa, fb) = (load_forecasts(&a).unwrap(), load_forecasts(&b).unwrap());
        let ra = compare_external(&panels, &[("x".into(), fa)], &dates, None).unwrap();
        let rb = compare_external(&panels, &[("x".into(), fb)], &dates, None).unwrap();
        assert_eq!(ra, rb);
        for v in &ra.rows[0].values {
            assert!((v.unwrap() - 0.25).abs() < 1e-9);
        }
    }

    #[test]
    fn forecast_file_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        std::fs::write(&p, "catchment_id,date,variable,value\na,2000-01-01,q,1\na,2000-01-01,Q,2\n").unwrap();
        let e = load_forecasts(&p).unwrap_err().to_string();
        assert!(e.contains(":3:"), "{e}");
        std::fs::write(&p, "catchment_id,date,variable,value\na,2000-01-01,flow,1\n").unwrap();
        assert!(load_forecasts(&p).is_err());
    }

    #[test]
    fn synthetic_is_seeded() {
        let r = SyntheticRecipe::default();
        let a = generate_synthetic_dataset(3, 50, 9, &r).unwrap();
        let b = generate_synthetic_dataset(3, 50, 9, &r).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_dataset(3, 50, 10, &r).unwrap();
        assert_ne!(a.0, c.0);
        assert_eq!(a.1.attribute_names.len(), 4 + r.filler_attributes);
    }

    #[test]
    fn noiseless_synthetic_is_periodic() {
        let r = SyntheticRecipe { noise_scale: 0.0, ..SyntheticRecipe::default() };
        let (panels, _) = generate_synthetic_dataset(2, 4 * 1461, 1, &r).unwrap();
        for p in &panels {
            for t in 0..(3 * 1461) {
                for v in 0..N_DYNAMIC {
                    let (a, b) = (p.values()[t][v], p.values()[t + 1461][v]);
                    assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{} var {v} day {t}", p.catchment_id());
                }
            }
        }
    }

    #[test]
    fn streamflow_follows_lagged_precipitation() {
        let r = SyntheticRecipe::default();
        let (panels, _) = generate_synthetic_dataset(4, 1000, 2, &r).unwrap();
        for p in &panels {
            let prcp = p.column(0);
            let q = p.column(5);
            let x = &prcp[..prcp.len() - r.streamflow_lag];
            let y = &q[r.streamflow_lag..];
            let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
            let (mx, my) = (mean(x), mean(y));
            let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
            let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
            let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
            let corr = cov / (vx * vy).sqrt();
            assert!(corr > 0.5, "{}: {corr}", p.catchment_id());
        }
    }
}
