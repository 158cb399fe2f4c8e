//! Loading, validation, cleaning and normalization of CAMELS-style panel data.
//!
//! Dynamic data is one CSV row per catchment-day with header
//! `catchment_id,date,prcp,srad,tmax,tmin,vp,q`. Static data is one row per
//! catchment with header `catchment_id,gauge_lat,gauge_lon,<attr>...`, where an
//! empty attribute cell means "missing".

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of dynamic variables carried by every panel.
pub const N_DYNAMIC: usize = 6;

/// Canonical CSV column names of the dynamic variables, in storage order.
pub const DYNAMIC_COLUMNS: [&str; N_DYNAMIC] = ["prcp", "srad", "tmax", "tmin", "vp", "q"];

/// Short report labels (precipitation, solar radiation, max/min temperature,
/// vapor pressure, streamflow).
pub const DISPLAY_NAMES: [&str; N_DYNAMIC] = ["P", "SR", "Tmax", "Tmin", "VP", "Q"];

/// Column index of streamflow.
pub const STREAMFLOW: usize = 5;

pub const DATE_FORMAT: &str = "%Y-%m-%d";

pub fn parse_date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), DATE_FORMAT)
        .map_err(|e| Error::InvalidArgument(format!("bad date {s:?}: {e}")))
}

/// Index of a dynamic variable by CSV name or report label.
pub fn variable_index(name: &str) -> Option<usize> {
    DYNAMIC_COLUMNS
        .iter()
        .position(|c| c.eq_ignore_ascii_case(name))
        .or_else(|| DISPLAY_NAMES.iter().position(|c| c.eq_ignore_ascii_case(name)))
}

/// Daily series of the six dynamic variables for one catchment.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesPanel {
    catchment_id: String,
    dates: Vec<NaiveDate>,
    values: Vec<[f64; N_DYNAMIC]>,
}

impl TimeSeriesPanel {
    /// Builds a panel, checking that dates advance by exactly one day and
    /// that every value is finite.
    pub fn new(
        catchment_id: impl Into<String>,
        dates: Vec<NaiveDate>,
        values: Vec<[f64; N_DYNAMIC]>,
    ) -> Result<Self> {
        let catchment_id = catchment_id.into();
        if dates.len() != values.len() {
            return Err(Error::Shape(format!(
                "catchment {catchment_id}: {} dates but {} value rows",
                dates.len(),
                values.len()
            )));
        }
        for w in dates.windows(2) {
            if w[1] == w[0] {
                return Err(Error::Data(format!(
                    "catchment {catchment_id}: duplicated date {}",
                    w[0]
                )));
            }
            if (w[1] - w[0]).num_days() != 1 {
                return Err(Error::Data(format!(
                    "catchment {catchment_id}: dates not contiguous, gap between {} and {}",
                    w[0], w[1]
                )));
            }
        }
        for (row, d) in values.iter().zip(&dates) {
            if let Some(c) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::Data(format!(
                    "catchment {catchment_id}: missing or non-finite {} on {d}",
                    DYNAMIC_COLUMNS[c]
                )));
            }
        }
        Ok(Self {
            catchment_id,
            dates,
            values,
        })
    }

    pub fn catchment_id(&self) -> &str {
        &self.catchment_id
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &[[f64; N_DYNAMIC]] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn column(&self, var: usize) -> Vec<f64> {
        self.values.iter().map(|r| r[var]).collect()
    }

    pub fn date_index(&self, date: NaiveDate) -> Option<usize> {
        let first = *self.dates.first()?;
        let off = (date - first).num_days();
        (off >= 0 && (off as usize) < self.len()).then_some(off as usize)
    }

    fn with_values(&self, values: Vec<[f64; N_DYNAMIC]>) -> Self {
        Self {
            catchment_id: self.catchment_id.clone(),
            dates: self.dates.clone(),
            values,
        }
    }
}

/// Maps the dynamic CSV's column names onto the six variables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DynamicSchema {
    pub catchment_id: String,
    pub date: String,
    pub variables: [String; N_DYNAMIC],
}

impl Default for DynamicSchema {
    fn default() -> Self {
        Self {
            catchment_id: "catchment_id".into(),
            date: "date".into(),
            variables: DYNAMIC_COLUMNS.map(String::from),
        }
    }
}

fn open_csv(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::parse(path.display(), line, e.to_string())
}

/// Loads every catchment in a dynamic CSV. Panels come back sorted by
/// catchment id with rows sorted by date.
pub fn load_timeseries_csv(path: &Path, schema: &DynamicSchema) -> Result<Vec<TimeSeriesPanel>> {
    let mut rdr = open_csv(path)?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();

    let find = |name: &str| headers.iter().position(|h| h == name);
    let known: HashSet<&str> = std::iter::once(schema.catchment_id.as_str())
        .chain(std::iter::once(schema.date.as_str()))
        .chain(schema.variables.iter().map(String::as_str))
        .collect();
    if let Some(unknown) = headers.iter().find(|h| !known.contains(h)) {
        return Err(Error::parse(path.display(), 1, format!("unknown column {unknown:?}")));
    }
    let missing = |name: &str| Error::parse(path.display(), 1, format!("missing column {name:?}"));
    let id_col = find(&schema.catchment_id).ok_or_else(|| missing(&schema.catchment_id))?;
    let date_col = find(&schema.date).ok_or_else(|| missing(&schema.date))?;
    let mut var_cols = [0usize; N_DYNAMIC];
    for (slot, name) in var_cols.iter_mut().zip(&schema.variables) {
        *slot = find(name).ok_or_else(|| missing(name))?;
    }

    let mut by_catchment: BTreeMap<String, Vec<(NaiveDate, [f64; N_DYNAMIC], u64)>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != headers.len() {
            return Err(Error::parse(
                path.display(),
                line,
                format!("expected {} fields, found {}", headers.len(), rec.len()),
            ));
        }
        let id = rec[id_col].to_string();
        if id.is_empty() {
            return Err(Error::parse(path.display(), line, "empty catchment id"));
        }
        let date = NaiveDate::parse_from_str(&rec[date_col], DATE_FORMAT).map_err(|e| {
            Error::parse(path.display(), line, format!("bad date {:?}: {e}", &rec[date_col]))
        })?;
        let mut values = [0.0; N_DYNAMIC];
        for (k, &col) in var_cols.iter().enumerate() {
            let cell = &rec[col];
            values[k] = cell.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                Error::parse(
                    path.display(),
                    line,
                    format!("bad or missing value {cell:?} for {}", schema.variables[k]),
                )
            })?;
        }
        by_catchment.entry(id).or_default().push((date, values, line));
    }

    by_catchment
        .into_iter()
        .map(|(id, mut rows)| {
            rows.sort_by_key(|r| r.0);
            for w in rows.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(Error::parse(
                        path.display(),
                        w[1].2,
                        format!("catchment {id}: duplicated date {}", w[1].0),
                    ));
                }
            }
            let (dates, values): (Vec<_>, Vec<_>) = rows.into_iter().map(|(d, v, _)| (d, v)).unzip();
            TimeSeriesPanel::new(id, dates, values)
        })
        .collect()
}

pub fn write_timeseries_csv(path: &Path, panels: &[TimeSeriesPanel]) -> Result<()> {
    let mut out = String::from("catchment_id,date");
    for c in DYNAMIC_COLUMNS {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for p in panels {
        for (d, row) in p.dates.iter().zip(&p.values) {
            write!(out, "{},{}", p.catchment_id, d.format(DATE_FORMAT)).unwrap();
            for v in row {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Inclusive date slice of a panel.
pub fn slice_date_range(panel: &TimeSeriesPanel, start: NaiveDate, end: NaiveDate) -> Result<TimeSeriesPanel> {
    if start > end {
        return Err(Error::InvalidArgument(format!("start {start} is after end {end}")));
    }
    let (i0, i1) = match (panel.date_index(start), panel.date_index(end)) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::InvalidArgument(format!(
                "range {start}..={end} outside catchment {} span {}..={}",
                panel.catchment_id,
                panel.dates.first().map(|d| d.to_string()).unwrap_or_default(),
                panel.dates.last().map(|d| d.to_string()).unwrap_or_default(),
            )))
        }
    };
    Ok(TimeSeriesPanel {
        catchment_id: panel.catchment_id.clone(),
        dates: panel.dates[i0..=i1].to_vec(),
        values: panel.values[i0..=i1].to_vec(),
    })
}

/// Per-catchment static attributes and gauge coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticAttributeTable {
    pub catchment_ids: Vec<String>,
    pub attribute_names: Vec<String>,
    /// `values[catchment][attribute]`, `None` where missing.
    pub values: Vec<Vec<Option<f64>>>,
    pub gauge_lat: Vec<f64>,
    pub gauge_lon: Vec<f64>,
}

/// Fully imputed static row of one catchment.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticRow {
    pub lat: f64,
    pub lon: f64,
    pub values: Vec<f64>,
}

impl StaticAttributeTable {
    pub fn new(
        catchment_ids: Vec<String>,
        attribute_names: Vec<String>,
        values: Vec<Vec<Option<f64>>>,
        gauge_lat: Vec<f64>,
        gauge_lon: Vec<f64>,
    ) -> Result<Self> {
        let n = catchment_ids.len();
        if values.len() != n || gauge_lat.len() != n || gauge_lon.len() != n {
            return Err(Error::Shape("static table columns have different lengths".into()));
        }
        if let Some(r) = values.iter().position(|r| r.len() != attribute_names.len()) {
            return Err(Error::Shape(format!(
                "catchment {} has {} attributes, expected {}",
                catchment_ids[r],
                values[r].len(),
                attribute_names.len()
            )));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = catchment_ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::Data(format!("duplicated catchment id {dup} in static table")));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = attribute_names.iter().find(|a| !seen.insert(a.as_str())) {
            return Err(Error::Data(format!("duplicated attribute {dup}")));
        }
        Ok(Self {
            catchment_ids,
            attribute_names,
            values,
            gauge_lat,
            gauge_lon,
        })
    }

    pub fn len(&self) -> usize {
        self.catchment_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.catchment_ids.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.catchment_ids.iter().position(|c| c == id)
    }

    pub fn has_missing(&self) -> bool {
        self.values.iter().flatten().any(Option::is_none)
    }

    /// Complete row of a catchment; errors if absent or not yet imputed.
    pub fn row(&self, id: &str) -> Result<StaticRow> {
        let i = self
            .index_of(id)
            .ok_or_else(|| Error::Data(format!("catchment {id} not in static table")))?;
        let values = self.values[i]
            .iter()
            .zip(&self.attribute_names)
            .map(|(v, name)| v.ok_or_else(|| Error::Data(format!("catchment {id}: {name} is missing"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(StaticRow {
            lat: self.gauge_lat[i],
            lon: self.gauge_lon[i],
            values,
        })
    }

    /// Rows restricted to the given ids, in the table's order.
    pub fn subset(&self, ids: &HashSet<&str>) -> Self {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| ids.contains(self.catchment_ids[i].as_str()))
            .collect();
        Self {
            catchment_ids: keep.iter().map(|&i| self.catchment_ids[i].clone()).collect(),
            attribute_names: self.attribute_names.clone(),
            values: keep.iter().map(|&i| self.values[i].clone()).collect(),
            gauge_lat: keep.iter().map(|&i| self.gauge_lat[i]).collect(),
            gauge_lon: keep.iter().map(|&i| self.gauge_lon[i]).collect(),
        }
    }
}

pub fn load_static_csv(path: &Path) -> Result<StaticAttributeTable> {
    let mut rdr = open_csv(path)?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let expect = ["catchment_id", "gauge_lat", "gauge_lon"];
    for (i, name) in expect.iter().enumerate() {
        if headers.get(i) != Some(*name) {
            return Err(Error::parse(
                path.display(),
                1,
                format!("column {} must be {name:?}, found {:?}", i + 1, headers.get(i).unwrap_or("")),
            ));
        }
    }
    let attribute_names: Vec<String> = headers.iter().skip(3).map(String::from).collect();

    let (mut ids, mut lat, mut lon, mut values) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != headers.len() {
            return Err(Error::parse(
                path.display(),
                line,
                format!("expected {} fields, found {}", headers.len(), rec.len()),
            ));
        }
        let num = |col: usize| -> Result<Option<f64>> {
            let cell = &rec[col];
            if cell.is_empty() || cell.eq_ignore_ascii_case("nan") {
                return Ok(None);
            }
            cell.parse::<f64>().map(Some).map_err(|_| {
                Error::parse(path.display(), line, format!("bad number {cell:?} in column {}", &headers[col]))
            })
        };
        let coord = |col: usize| -> Result<f64> {
            num(col)?.ok_or_else(|| Error::parse(path.display(), line, format!("missing {}", &headers[col])))
        };
        ids.push(rec[0].to_string());
        lat.push(coord(1)?);
        lon.push(coord(2)?);
        values.push((3..headers.len()).map(num).collect::<Result<Vec<_>>>()?);
    }
    StaticAttributeTable::new(ids, attribute_names, values, lat, lon)
}

pub fn write_static_csv(path: &Path, table: &StaticAttributeTable) -> Result<()> {
    let mut out = String::from("catchment_id,gauge_lat,gauge_lon");
    for a in &table.attribute_names {
        write!(out, ",{a}").unwrap();
    }
    out.push('\n');
    for i in 0..table.len() {
        write!(out, "{},{},{}", table.catchment_ids[i], table.gauge_lat[i], table.gauge_lon[i]).unwrap();
        for v in &table.values[i] {
            match v {
                Some(v) => write!(out, ",{v}").unwrap(),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Replaces every missing attribute with the mean of its column's observed
/// entries.
pub fn impute_static_means(table: &StaticAttributeTable) -> Result<StaticAttributeTable> {
    let mut out = table.clone();
    for (a, name) in table.attribute_names.iter().enumerate() {
        let (sum, count) = table
            .values
            .iter()
            .filter_map(|r| r[a])
            .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
        if count == 0 {
            return Err(Error::Data(format!("attribute {name} has no observed values")));
        }
        let mean = sum / count as f64;
        for row in &mut out.values {
            row[a].get_or_insert(mean);
        }
    }
    Ok(out)
}

/// Month of each date mapped onto `[0, 1]`: January 0, December 1.
pub fn encode_month_ordinal(dates: &[NaiveDate]) -> Vec<f64> {
    dates.iter().map(|d| (d.month() - 1) as f64 / 11.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NormScheme {
    #[default]
    MinMax,
    ZScore,
}

impl std::str::FromStr for NormScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minmax" => Ok(NormScheme::MinMax),
            "zscore" => Ok(NormScheme::ZScore),
            other => Err(Error::InvalidArgument(format!("unknown normalization scheme {other:?}"))),
        }
    }
}

impl std::fmt::Display for NormScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NormScheme::MinMax => "minmax",
            NormScheme::ZScore => "zscore",
        })
    }
}

/// Fitted statistics of one column. For min-max `a` is the minimum and `b`
/// the maximum; for z-score `a` is the mean and `b` the standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnNorm {
    pub name: String,
    pub a: f64,
    pub b: f64,
}

impl ColumnNorm {
    fn span(&self, scheme: NormScheme) -> f64 {
        match scheme {
            NormScheme::MinMax => self.b - self.a,
            NormScheme::ZScore => self.b,
        }
    }

    pub fn is_degenerate(&self, scheme: NormScheme) -> bool {
        self.span(scheme) == 0.0
    }
}

/// Column scaling fitted on training catchments.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationSpec {
    pub scheme: NormScheme,
    pub dynamic: Vec<ColumnNorm>,
    pub statics: Vec<ColumnNorm>,
}

fn fit_column(name: &str, values: impl Iterator<Item = f64> + Clone, scheme: NormScheme) -> ColumnNorm {
    match scheme {
        NormScheme::MinMax => {
            let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
            ColumnNorm { name: name.into(), a: lo, b: hi }
        }
        NormScheme::ZScore => {
            let (s, n) = values.clone().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
            let mean = s / n as f64;
            let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            ColumnNorm { name: name.into(), a: mean, b: var.sqrt() }
        }
    }
}

/// Fits global per-variable statistics over the given (training) panels and,
/// when a table is given, over the rows of those same catchments.
pub fn fit_normalization(
    panels: &[TimeSeriesPanel],
    table: Option<&StaticAttributeTable>,
    scheme: NormScheme,
) -> Result<NormalizationSpec> {
    if panels.iter().all(|p| p.is_empty()) {
        return Err(Error::InvalidArgument("cannot fit normalization on an empty training set".into()));
    }
    let dynamic = DYNAMIC_COLUMNS
        .iter()
        .enumerate()
        .map(|(k, name)| fit_column(name, panels.iter().flat_map(|p| p.values.iter().map(move |r| r[k])), scheme))
        .collect();

    let statics = match table {
        None => Vec::new(),
        Some(t) => {
            let ids: HashSet<&str> = panels.iter().map(|p| p.catchment_id()).collect();
            let train = t.subset(&ids);
            if train.is_empty() {
                return Err(Error::Data("no training catchment appears in the static table".into()));
            }
            if train.has_missing() {
                return Err(Error::Data("static table must be imputed before fitting normalization".into()));
            }
            t.attribute_names
                .iter()
                .enumerate()
                .map(|(a, name)| fit_column(name, train.values.iter().map(move |r| r[a].unwrap_or(0.0)), scheme))
                .collect()
        }
    };
    Ok(NormalizationSpec { scheme, dynamic, statics })
}

impl NormalizationSpec {
    fn forward(&self, c: &ColumnNorm, x: f64) -> f64 {
        let span = c.span(self.scheme);
        if span == 0.0 {
            0.0
        } else {
            (x - c.a) / span
        }
    }

    fn inverse(&self, c: &ColumnNorm, y: f64) -> f64 {
        let span = c.span(self.scheme);
        if span == 0.0 {
            c.a
        } else {
            y * span + c.a
        }
    }

    fn check_dynamic(&self) -> Result<()> {
        let names: Vec<&str> = self.dynamic.iter().map(|c| c.name.as_str()).collect();
        if names != DYNAMIC_COLUMNS {
            return Err(Error::Shape(format!(
                "normalization columns {names:?} do not match dynamic columns {DYNAMIC_COLUMNS:?}"
            )));
        }
        Ok(())
    }

    fn check_statics(&self, table: &StaticAttributeTable) -> Result<()> {
        let ours: Vec<&str> = self.statics.iter().map(|c| c.name.as_str()).collect();
        let theirs: Vec<&str> = table.attribute_names.iter().map(String::as_str).collect();
        if ours != theirs {
            return Err(Error::Shape(format!(
                "normalization attributes {ours:?} do not match table attributes {theirs:?}"
            )));
        }
        Ok(())
    }

    pub fn apply_value(&self, var: usize, x: f64) -> f64 {
        self.forward(&self.dynamic[var], x)
    }

    pub fn invert_value(&self, var: usize, y: f64) -> f64 {
        self.inverse(&self.dynamic[var], y)
    }

    pub fn apply_panel(&self, panel: &TimeSeriesPanel) -> Result<TimeSeriesPanel> {
        self.check_dynamic()?;
        let values = panel
            .values
            .iter()
            .map(|r| std::array::from_fn(|k| self.forward(&self.dynamic[k], r[k])))
            .collect();
        Ok(panel.with_values(values))
    }

    pub fn invert_panel(&self, panel: &TimeSeriesPanel) -> Result<TimeSeriesPanel> {
        self.check_dynamic()?;
        let values = panel
            .values
            .iter()
            .map(|r| std::array::from_fn(|k| self.inverse(&self.dynamic[k], r[k])))
            .collect();
        Ok(panel.with_values(values))
    }

    fn map_table(&self, table: &StaticAttributeTable, f: impl Fn(&ColumnNorm, f64) -> f64) -> Result<StaticAttributeTable> {
        self.check_statics(table)?;
        let mut out = table.clone();
        for row in &mut out.values {
            for (v, c) in row.iter_mut().zip(&self.statics) {
                *v = v.map(|x| f(c, x));
            }
        }
        Ok(out)
    }

    pub fn apply_table(&self, table: &StaticAttributeTable) -> Result<StaticAttributeTable> {
        self.map_table(table, |c, x| self.forward(c, x))
    }

    pub fn invert_table(&self, table: &StaticAttributeTable) -> Result<StaticAttributeTable> {
        self.map_table(table, |c, y| self.inverse(c, y))
    }

    /// Serializes as `key = value` lines:
    ///
    /// ```text
    /// format = exohydro-normalization
    /// version = 1
    /// scheme = minmax
    /// dynamic.prcp = <min> <max>
    /// static.area = <min> <max>
    /// ```
    ///
    /// For the z-score scheme the two numbers are mean and standard deviation.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "format = exohydro-normalization").unwrap();
        writeln!(out, "version = 1").unwrap();
        writeln!(out, "scheme = {}", self.scheme).unwrap();
        for c in &self.dynamic {
            writeln!(out, "dynamic.{} = {:?} {:?}", c.name, c.a, c.b).unwrap();
        }
        for c in &self.statics {
            writeln!(out, "static.{} = {:?} {:?}", c.name, c.a, c.b).unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: String| Error::parse("normalization spec", line as u64, msg);
        let mut scheme = None;
        let mut version_ok = false;
        let (mut dynamic, mut statics) = (Vec::new(), Vec::new());
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| bad(i + 1, format!("expected key = value, got {line:?}")))?;
            match key {
                "format" if value == "exohydro-normalization" => {}
                "version" if value == "1" => version_ok = true,
                "version" => return Err(bad(i + 1, format!("unsupported version {value}"))),
                "scheme" => scheme = Some(value.parse::<NormScheme>()?),
                _ => {
                    let (target, name) = if let Some(n) = key.strip_prefix("dynamic.") {
                        (&mut dynamic, n)
                    } else if let Some(n) = key.strip_prefix("static.") {
                        (&mut statics, n)
                    } else {
                        return Err(bad(i + 1, format!("unknown key {key:?}")));
                    };
                    let nums: Vec<f64> = value
                        .split_whitespace()
                        .map(|s| s.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| bad(i + 1, e.to_string()))?;
                    if nums.len() != 2 {
                        return Err(bad(i + 1, format!("{key} needs two numbers")));
                    }
                    target.push(ColumnNorm { name: name.to_string(), a: nums[0], b: nums[1] });
                }
            }
        }
        if !version_ok {
            return Err(bad(0, "missing version".into()));
        }
        let scheme = scheme.ok_or_else(|| bad(0, "missing scheme".into()))?;
        Ok(Self { scheme, dynamic, statics })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(s: &str) -> NaiveDate {
        parse_date(s).unwrap()
    }

    fn days(start: &str, n: usize) -> Vec<NaiveDate> {
        let s = d(start);
        (0..n).map(|i| s + chrono::Days::new(i as u64)).collect()
    }

    fn panel(id: &str, n: usize) -> TimeSeriesPanel {
        let values = (0..n).map(|i| [i as f64; N_DYNAMIC]).collect();
        TimeSeriesPanel::new(id, days("2000-01-01", n), values).unwrap()
    }

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let f = tempfile::NamedTempFile::new().unwrap();
        fs::write(f.path(), content).unwrap();
        f
    }

    #[test]
    fn loads_two_catchments() {
        let mut csv = String::from("catchment_id,date,prcp,srad,tmax,tmin,vp,q\n");
        for id in ["b", "a"] {
            for (i, day) in days("2001-03-01", 10).iter().enumerate().rev() {
                csv.push_str(&format!("{id},{day},{i},1,2,3,4,5\n"));
            }
        }
        let f = write_tmp(&csv);
        let panels = load_timeseries_csv(f.path(), &DynamicSchema::default()).unwrap();
        assert_eq!(panels.len(), 2);
        assert_eq!(panels[0].catchment_id(), "a");
        assert!(panels.iter().all(|p| p.len() == 10));
        // rows sorted by date
        assert_eq!(panels[0].values()[0][0], 0.0);
        assert_eq!(panels[0].values()[9][0], 9.0);
    }

    #[test]
    fn duplicated_date_is_named() {
        let csv = "catchment_id,date,prcp,srad,tmax,tmin,vp,q\n\
                   a,2001-01-01,1,1,1,1,1,1\n\
                   a,2001-01-02,1,1,1,1,1,1\n\
                   a,2001-01-02,1,1,1,1,1,1\n";
        let f = write_tmp(csv);
        let err = load_timeseries_csv(f.path(), &DynamicSchema::default()).unwrap_err();
        assert!(err.to_string().contains("2001-01-02"), "{err}");
    }

    #[test]
    fn gap_is_named() {
        let csv = "catchment_id,date,prcp,srad,tmax,tmin,vp,q\n\
                   a,2001-01-01,1,1,1,1,1,1\n\
                   a,2001-01-03,1,1,1,1,1,1\n";
        let f = write_tmp(csv);
        let err = load_timeseries_csv(f.path(), &DynamicSchema::default()).unwrap_err();
        assert!(err.to_string().contains("2001-01-01 and 2001-01-03"), "{err}");
    }

    #[test]
    fn malformed_row_reports_line() {
        let csv = "catchment_id,date,prcp,srad,tmax,tmin,vp,q\n\
                   a,2001-01-01,1,1,1,1,1,1\n\
                   a,2001-01-02,1,x,1,1,1,1\n";
        let f = write_tmp(csv);
        match load_timeseries_csv(f.path(), &DynamicSchema::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_dynamic_value_rejected() {
        let csv = "catchment_id,date,prcp,srad,tmax,tmin,vp,q\na,2001-01-01,1,,1,1,1,1\n";
        let f = write_tmp(csv);
        assert!(load_timeseries_csv(f.path(), &DynamicSchema::default()).is_err());
    }

    #[test]
    fn unknown_column_rejected() {
        let csv = "catchment_id,date,prcp,srad,tmax,tmin,vp,q,extra\na,2001-01-01,1,1,1,1,1,1,1\n";
        let f = write_tmp(csv);
        let err = load_timeseries_csv(f.path(), &DynamicSchema::default()).unwrap_err();
        assert!(err.to_string().contains("unknown column"), "{err}");
    }

    #[test]
    fn custom_schema_mapping() {
        let csv = "gauge,day,p,s,tx,tn,v,flow\na,2001-01-01,1,2,3,4,5,6\n";
        let f = write_tmp(csv);
        let schema = DynamicSchema {
            catchment_id: "gauge".into(),
            date: "day".into(),
            variables: ["p", "s", "tx", "tn", "v", "flow"].map(String::from),
        };
        let p = load_timeseries_csv(f.path(), &schema).unwrap();
        assert_eq!(p[0].values()[0], [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn study_interval_length() {
        let p = TimeSeriesPanel::new(
            "x",
            days("1989-01-01", 8000),
            vec![[0.0; N_DYNAMIC]; 8000],
        )
        .unwrap();
        let s = slice_date_range(&p, d("1989-10-02"), d("2008-12-31")).unwrap();
        assert_eq!(s.len(), 7031);
        let one = slice_date_range(&p, d("1990-05-05"), d("1990-05-05")).unwrap();
        assert_eq!(one.len(), 1);
        assert!(slice_date_range(&p, d("1990-05-06"), d("1990-05-05")).is_err());
        assert!(slice_date_range(&p, d("1988-05-06"), d("1990-05-05")).is_err());
    }

    fn table(col: Vec<Option<f64>>) -> StaticAttributeTable {
        let n = col.len();
        StaticAttributeTable::new(
            (0..n).map(|i| format!("c{i}")).collect(),
            vec!["area".into()],
            col.into_iter().map(|v| vec![v]).collect(),
            vec![40.0; n],
            vec![-100.0; n],
        )
        .unwrap()
    }

    #[test]
    fn imputation_cases() {
        let t = impute_static_means(&table(vec![Some(1.0), None, Some(3.0)])).unwrap();
        assert_eq!(t.values, vec![vec![Some(1.0)], vec![Some(2.0)], vec![Some(3.0)]]);

        let full = table(vec![Some(1.0), Some(5.0)]);
        assert_eq!(impute_static_means(&full).unwrap(), full);

        let err = impute_static_means(&table(vec![None, None])).unwrap_err();
        assert!(err.to_string().contains("area"));
    }

    #[test]
    fn static_csv_roundtrip_with_missing() {
        let csv = "catchment_id,gauge_lat,gauge_lon,area,slope\n01,40.5,-100.25,12.5,\n02,41,-99,,0.3\n";
        let f = write_tmp(csv);
        let t = load_static_csv(f.path()).unwrap();
        assert_eq!(t.attribute_names, vec!["area", "slope"]);
        assert_eq!(t.values[0], vec![Some(12.5), None]);
        assert_eq!(t.catchment_ids[0], "01");
        let g = tempfile::NamedTempFile::new().unwrap();
        write_static_csv(g.path(), &t).unwrap();
        assert_eq!(load_static_csv(g.path()).unwrap(), t);
    }

    #[test]
    fn duplicate_static_ids_rejected() {
        let f = write_tmp("catchment_id,gauge_lat,gauge_lon,a\nx,1,1,1\nx,1,1,2\n");
        assert!(load_static_csv(f.path()).is_err());
    }

    #[test]
    fn month_encoding() {
        let m = encode_month_ordinal(&[d("2000-01-15"), d("2000-12-31"), d("2000-07-04")]);
        assert_eq!(m[0], 0.0);
        assert_eq!(m[1], 1.0);
        assert!((m[2] - 6.0 / 11.0).abs() < 1e-15);
        let year = encode_month_ordinal(&days("2001-01-01", 365));
        assert!(year.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn minmax_fit_and_apply() {
        let dates = days("2000-01-01", 3);
        let values = vec![[0.0; N_DYNAMIC], [5.0; N_DYNAMIC], [10.0; N_DYNAMIC]];
        let p = TimeSeriesPanel::new("a", dates, values).unwrap();
        let spec = fit_normalization(std::slice::from_ref(&p), None, NormScheme::MinMax).unwrap();
        assert_eq!((spec.dynamic[0].a, spec.dynamic[0].b), (0.0, 10.0));
        assert_eq!(spec.apply_value(0, 5.0), 0.5);
        assert_eq!(spec.apply_value(0, 0.0), 0.0);
        assert!((spec.apply_value(0, 12.0) - 1.2).abs() < 1e-15);

        let constant = panel("c", 1);
        let spec = fit_normalization(&[constant], None, NormScheme::MinMax).unwrap();
        assert!(spec.dynamic[0].is_degenerate(NormScheme::MinMax));
        assert_eq!(spec.apply_value(0, 42.0), 0.0);

        assert!(fit_normalization(&[], None, NormScheme::MinMax).is_err());
    }

    #[test]
    fn statics_fit_only_on_training_rows() {
        let t = StaticAttributeTable::new(
            vec!["a".into(), "b".into()],
            vec!["area".into()],
            vec![vec![Some(1.0)], vec![Some(100.0)]],
            vec![0.0, 1.0],
            vec![0.0, 1.0],
        )
        .unwrap();
        let spec = fit_normalization(&[panel("a", 2)], Some(&t), NormScheme::MinMax).unwrap();
        assert_eq!((spec.statics[0].a, spec.statics[0].b), (1.0, 1.0));

        let other = StaticAttributeTable { attribute_names: vec!["slope".into()], ..t };
        assert!(matches!(spec.apply_table(&other), Err(Error::Shape(_))));
    }

    #[test]
    fn spec_text_roundtrip() {
        let spec = NormalizationSpec {
            scheme: NormScheme::ZScore,
            dynamic: DYNAMIC_COLUMNS
                .iter()
                .enumerate()
                .map(|(i, n)| ColumnNorm { name: n.to_string(), a: 0.1 * i as f64, b: 1.0 / 3.0 })
                .collect(),
            statics: vec![ColumnNorm { name: "area".into(), a: -2.5e-7, b: 1e12 }],
        };
        assert_eq!(NormalizationSpec::from_text(&spec.to_text()).unwrap(), spec);
    }

    proptest! {
        #[test]
        fn apply_then_invert_is_identity(
            rows in proptest::collection::vec(proptest::array::uniform6(-1e3f64..1e3), 2..40),
            zscore in any::<bool>(),
        ) {
            let n = rows.len();
            let p = TimeSeriesPanel::new("r", days("2000-01-01", n), rows).unwrap();
            let scheme = if zscore { NormScheme::ZScore } else { NormScheme::MinMax };
            let spec = fit_normalization(std::slice::from_ref(&p), None, scheme).unwrap();
            let back = spec.invert_panel(&spec.apply_panel(&p).unwrap()).unwrap();
            for (x, y) in p.values().iter().zip(back.values()) {
                for k in 0..N_DYNAMIC {
                    if spec.dynamic[k].is_degenerate(scheme) { continue; }
                    prop_assert!((x[k] - y[k]).abs() <= 1e-10 * x[k].abs().max(1.0));
                }
            }
        }

        #[test]
        fn imputation_preserves_column_mean(
            col in proptest::collection::vec(proptest::option::weighted(0.7, -100.0f64..100.0), 1..30)
        ) {
            prop_assume!(col.iter().any(Option::is_some));
            let observed: Vec<f64> = col.iter().flatten().copied().collect();
            let mean = observed.iter().sum::<f64>() / observed.len() as f64;
            let t = impute_static_means(&table(col)).unwrap();
            let after: Vec<f64> = t.values.iter().map(|r| r[0].unwrap()).collect();
            let m2 = after.iter().sum::<f64>() / after.len() as f64;
            prop_assert!((m2 - mean).abs() <= 1e-12 * mean.abs().max(1.0));
        }
    }
}
