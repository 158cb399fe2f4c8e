//! Self-contained SVG plots of observed and predicted series, grouped RMSE
//! bars, and tidy CSV exports.
//!
//! Every plot area is a `<g id="plot-area">` whose `data-*` attributes record
//! the pixel box and the data domain, so coordinates can be mapped back to
//! data values.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::NaiveDate;

use crate::dataset::{parse_date, DATE_FORMAT};
use crate::error::{Error, Result};
use crate::eval::MetricsReport;

/// Series colours, assigned by series order.
pub const PALETTE: [&str; 8] = [
    "#000000", "#e69f00", "#56b4e9", "#009e73", "#f0e442", "#0072b2", "#d55e00", "#cc79a7",
];

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 200.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 70.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesRole {
    Truth,
    Prediction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub name: String,
    pub role: SeriesRole,
    pub timestamps: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlotSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<PlotSeries>,
    /// Inclusive date window; the data extent when absent.
    pub date_range: Option<(NaiveDate, NaiveDate)>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn day_number(d: NaiveDate) -> f64 {
    (d - NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid epoch")).num_days() as f64
}

/// Value range with a 5% margin on each side; a flat range is widened by 5%
/// of its magnitude (or 0.05 around zero).
pub fn padded_range(lo: f64, hi: f64) -> (f64, f64) {
    let span = hi - lo;
    let pad = if span > 0.0 {
        0.05 * span
    } else if lo != 0.0 {
        0.05 * lo.abs()
    } else {
        0.05
    };
    (lo - pad, hi + pad)
}

fn header(out: &mut String, title: &str) {
    writeln!(out, r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#).unwrap();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="Helvetica, Arial, sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(out, "<title>{}</title>", esc(title)).unwrap();
    writeln!(out, r##"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>"##).unwrap();
    writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="16">{}</text>"#,
        LEFT + (WIDTH - LEFT - RIGHT) / 2.0,
        TOP / 2.0 + 6.0,
        esc(title)
    )
    .unwrap();
}

fn axis_labels(out: &mut String, x_label: &str, y_label: &str) {
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 15.0,
        esc(x_label)
    )
    .unwrap();
    writeln!(
        out,
        r#"<text x="20" y="{}" text-anchor="middle" transform="rotate(-90 20 {})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        esc(y_label)
    )
    .unwrap();
}

fn legend(out: &mut String, entries: &[(String, &str, f64)]) {
    writeln!(out, r#"<g id="legend">"#).unwrap();
    for (i, (name, colour, stroke)) in entries.iter().enumerate() {
        let y = TOP + 10.0 + 22.0 * i as f64;
        let x = WIDTH - RIGHT + 20.0;
        writeln!(
            out,
            r#"<g class="legend-entry"><line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{colour}" stroke-width="{stroke}"/><text x="{}" y="{}">{}</text></g>"#,
            x + 24.0,
            x + 30.0,
            y + 4.0,
            esc(name)
        )
        .unwrap();
    }
    writeln!(out, "</g>").unwrap();
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

/// Line chart of one truth series and any number of prediction series.
pub fn plot_series(spec: &PlotSpec) -> Result<String> {
    if spec.series.is_empty() {
        return Err(Error::InvalidArgument("plot needs at least one series".into()));
    }
    if spec.series.iter().filter(|s| s.role == SeriesRole::Truth).count() > 1 {
        return Err(Error::InvalidArgument("at most one truth series per plot".into()));
    }
    for s in &spec.series {
        if s.timestamps.len() != s.values.len() {
            return Err(Error::Shape(format!("series {}: timestamps and values differ in length", s.name)));
        }
        if s.values.is_empty() {
            return Err(Error::InvalidArgument(format!("series {} is empty", s.name)));
        }
        if s.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("series {} has non-finite values", s.name)));
        }
    }
    let in_range = |d: &NaiveDate| spec.date_range.map_or(true, |(a, b)| *d >= a && *d <= b);
    let points: Vec<Vec<(f64, f64)>> = spec
        .series
        .iter()
        .map(|s| {
            s.timestamps
                .iter()
                .zip(&s.values)
                .filter(|(d, _)| in_range(d))
                .map(|(d, v)| (day_number(*d), *v))
                .collect()
        })
        .collect();
    if points.iter().all(|p| p.is_empty()) {
        return Err(Error::InvalidArgument("no data inside the requested date range".into()));
    }
    let (x_lo, x_hi) = match spec.date_range {
        Some((a, b)) => (day_number(a), day_number(b)),
        None => points.iter().flatten().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (x, _)| {
            (lo.min(*x), hi.max(*x))
        }),
    };
    let (x_lo, x_hi) = if x_hi > x_lo { (x_lo, x_hi) } else { (x_lo - 0.5, x_hi + 0.5) };
    let (v_lo, v_hi) = points
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, v)| (lo.min(*v), hi.max(*v)));
    let (y_lo, y_hi) = padded_range(v_lo, v_hi);

    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo) * pw;
    let py = |y: f64| TOP + ph - (y - y_lo) / (y_hi - y_lo) * ph;

    let mut out = String::new();
    header(&mut out, &spec.title);
    writeln!(
        out,
        r#"<g id="plot-area" data-left="{LEFT}" data-top="{TOP}" data-width="{pw}" data-height="{ph}" data-x-min="{x_lo}" data-x-max="{x_hi}" data-x-unit="days since 1970-01-01" data-y-min="{y_lo}" data-y-max="{y_hi}">"#
    )
    .unwrap();
    writeln!(
        out,
        r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#444444"/>"##
    )
    .unwrap();
    for k in 0..=5 {
        let v = y_lo + (y_hi - y_lo) * k as f64 / 5.0;
        let y = py(v);
        writeln!(
            out,
            r##"<g class="y-tick"><line x1="{LEFT}" y1="{y}" x2="{}" y2="{y}" stroke="#dddddd"/><text x="{}" y="{}" text-anchor="end">{}</text></g>"##,
            LEFT + pw,
            LEFT - 6.0,
            y + 4.0,
            fmt_tick(v)
        )
        .unwrap();
    }
    let epoch = NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid epoch");
    for k in 0..=5 {
        let day = (x_lo + (x_hi - x_lo) * k as f64 / 5.0).round();
        let date = epoch + chrono::Duration::days(day as i64);
        let x = px(day);
        writeln!(
            out,
            r##"<g class="x-tick"><line x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="#444444"/><text x="{x}" y="{}" text-anchor="middle">{}</text></g>"##,
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 20.0,
            date.format(DATE_FORMAT)
        )
        .unwrap();
    }
    let mut entries = Vec::new();
    for (i, (s, pts)) in spec.series.iter().zip(&points).enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let (class, stroke) = match s.role {
            SeriesRole::Truth => ("truth", 2.0),
            SeriesRole::Prediction => ("prediction", 1.25),
        };
        let coords: Vec<String> = pts.iter().map(|(x, v)| format!("{},{}", px(*x), py(*v))).collect();
        writeln!(
            out,
            r#"<polyline id="series-{i}" class="series {class}" data-name="{}" points="{}" fill="none" stroke="{colour}" stroke-width="{stroke}"/>"#,
            esc(&s.name),
            coords.join(" ")
        )
        .unwrap();
        entries.push((s.name.clone(), colour, stroke));
    }
    writeln!(out, "</g>").unwrap();
    axis_labels(&mut out, &spec.x_label, &spec.y_label);
    legend(&mut out, &entries);
    writeln!(out, "</svg>").unwrap();
    Ok(out)
}

/// Grouped bar chart: one group per report variable, one bar per row.
/// Absent cells have no bar.
pub fn plot_rmse_bars(report: &MetricsReport, title: &str) -> Result<String> {
    if report.rows.is_empty() || report.variables.is_empty() {
        return Err(Error::InvalidArgument("cannot plot an empty report".into()));
    }
    let max = report.rows.iter().flat_map(|r| r.values.iter().flatten()).fold(0.0f64, |a, b| a.max(*b));
    let y_max = if max > 0.0 { max * 1.05 } else { 1.0 };
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let groups = report.variables.len();
    let bars = report.rows.len();
    let group_w = pw / groups as f64;
    let bar_w = group_w * 0.8 / bars as f64;

    let mut out = String::new();
    header(&mut out, title);
    writeln!(
        out,
        r#"<g id="plot-area" data-left="{LEFT}" data-top="{TOP}" data-width="{pw}" data-height="{ph}" data-y-min="0" data-y-max="{y_max}">"#
    )
    .unwrap();
    writeln!(
        out,
        r##"<line x1="{LEFT}" y1="{}" x2="{}" y2="{}" stroke="#444444"/>"##,
        TOP + ph,
        LEFT + pw,
        TOP + ph
    )
    .unwrap();
    for k in 0..=5 {
        let v = y_max * k as f64 / 5.0;
        let y = TOP + ph - v / y_max * ph;
        writeln!(
            out,
            r##"<g class="y-tick"><line x1="{LEFT}" y1="{y}" x2="{}" y2="{y}" stroke="#dddddd"/><text x="{}" y="{}" text-anchor="end">{}</text></g>"##,
            LEFT + pw,
            LEFT - 6.0,
            y + 4.0,
            fmt_tick(v)
        )
        .unwrap();
    }
    for (g, var) in report.variables.iter().enumerate() {
        let gx = LEFT + g as f64 * group_w;
        writeln!(
            out,
            r#"<text class="group-label" x="{}" y="{}" text-anchor="middle">{}</text>"#,
            gx + group_w / 2.0,
            TOP + ph + 20.0,
            esc(var)
        )
        .unwrap();
        for (b, row) in report.rows.iter().enumerate() {
            let Some(v) = row.values[g] else { continue };
            let h = v / y_max * ph;
            writeln!(
                out,
                r#"<rect class="bar" data-config="{}" data-variable="{}" data-value="{v:?}" x="{}" y="{}" width="{bar_w}" height="{h}" fill="{}"/>"#,
                esc(&row.name),
                esc(var),
                gx + group_w * 0.1 + b as f64 * bar_w,
                TOP + ph - h,
                PALETTE[b % PALETTE.len()]
            )
            .unwrap();
        }
    }
    writeln!(out, "</g>").unwrap();
    axis_labels(&mut out, "Variable", "RMSE");
    let entries: Vec<_> = report
        .rows
        .iter()
        .enumerate()
        .map(|(b, r)| (r.name.clone(), PALETTE[b % PALETTE.len()], 8.0))
        .collect();
    legend(&mut out, &entries);
    writeln!(out, "</svg>").unwrap();
    Ok(out)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub const TIDY_HEADER: &str = "entity,variable,timestamp,value";

/// Long form of a report: one line per cell, empty timestamp, empty value
/// for absent cells.
pub fn report_to_tidy_csv(report: &MetricsReport) -> String {
    let mut out = format!("{TIDY_HEADER}\n");
    for r in &report.rows {
        for (var, v) in report.variables.iter().zip(&r.values) {
            let value = v.map(|x| format!("{x:?}")).unwrap_or_default();
            writeln!(out, "{},{},,{value}", csv_field(&r.name), csv_field(var)).unwrap();
        }
    }
    out
}

/// One parsed line of a tidy CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TidyRecord {
    pub entity: String,
    pub variable: String,
    pub timestamp: Option<NaiveDate>,
    pub value: Option<f64>,
}

pub fn parse_tidy_csv(text: &str) -> Result<Vec<TidyRecord>> {
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::parse("tidy csv", 1, e.to_string()))?;
    if header.iter().ne(TIDY_HEADER.split(',')) {
        return Err(Error::parse("tidy csv", 1, format!("expected header {TIDY_HEADER}")));
    }
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| Error::parse("tidy csv", line, e.to_string()))?;
        let timestamp = match &rec[2] {
            "" => None,
            s => Some(parse_date(s).map_err(|e| Error::parse("tidy csv", line, e.to_string()))?),
        };
        let value = match &rec[3] {
            "" => None,
            s => Some(s.parse().map_err(|_| Error::parse("tidy csv", line, format!("bad value {s:?}")))?),
        };
        out.push(TidyRecord { entity: rec[0].to_string(), variable: rec[1].to_string(), timestamp, value });
    }
    Ok(out)
}

/// Rebuilds a report from its tidy form; rows and columns keep their order
/// of first appearance.
pub fn report_from_tidy_csv(text: &str) -> Result<MetricsReport> {
    let records = parse_tidy_csv(text)?;
    let mut variables: Vec<String> = Vec::new();
    let mut rows: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(usize, usize), Option<f64>> = BTreeMap::new();
    for r in records {
        if r.timestamp.is_some() {
            return Err(Error::InvalidArgument("report cells carry no timestamp".into()));
        }
        let v = variables.iter().position(|x| *x == r.variable).unwrap_or_else(|| {
            variables.push(r.variable.clone());
            variables.len() - 1
        });
        let e = rows.iter().position(|x| *x == r.entity).unwrap_or_else(|| {
            rows.push(r.entity.clone());
            rows.len() - 1
        });
        if cells.insert((e, v), r.value).is_some() {
            return Err(Error::InvalidArgument(format!("duplicate cell {} / {}", r.entity, r.variable)));
        }
    }
    let mut report = MetricsReport::new(variables.clone());
    for (e, name) in rows.into_iter().enumerate() {
        let values = (0..variables.len()).map(|v| cells.get(&(e, v)).copied().flatten()).collect();
        report.push(name, values)?;
    }
    Ok(report)
}

/// Long form of plotted series under one variable name.
pub fn series_to_tidy_csv(series: &[PlotSeries], variable: &str) -> String {
    let mut out = format!("{TIDY_HEADER}\n");
    for s in series {
        for (d, v) in s.timestamps.iter().zip(&s.values) {
            writeln!(out, "{},{},{},{v:?}", csv_field(&s.name), csv_field(variable), d.format(DATE_FORMAT)).unwrap();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn day(n: i64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2000, 1, 1).unwrap() + chrono::Duration::days(n)
    }

    fn series(name: &str, role: SeriesRole, f: impl Fn(f64) -> f64) -> PlotSeries {
        PlotSeries {
            name: name.into(),
            role,
            timestamps: (0..50).map(day).collect(),
            values: (0..50).map(|i| f(i as f64)).collect(),
        }
    }

    fn four_series() -> PlotSpec {
        PlotSpec {
            title: "Streamflow <validation>".into(),
            x_label: "Date".into(),
            y_label: "Q".into(),
            series: vec![
                series("Observed", SeriesRole::Truth, |t| (t / 7.0).sin()),
                series("LSTM", SeriesRole::Prediction, |t| (t / 7.0).sin() * 0.9),
                series("Chronos", SeriesRole::Prediction, |t| (t / 6.0).sin()),
                series("Sundial", SeriesRole::Prediction, |t| 0.1 + (t / 7.5).sin()),
            ],
            date_range: None,
        }
    }

    #[test]
    fn series_plot_counts_and_determinism() {
        let a = plot_series(&four_series()).unwrap();
        assert_eq!(a, plot_series(&four_series()).unwrap());
        assert_eq!(a.matches("<polyline").count(), 4);
        assert_eq!(a.matches("class=\"legend-entry\"").count(), 4);
        assert!(a.contains("&lt;validation&gt;"));
    }

    #[test]
    fn constant_series_gets_margin() {
        let (lo, hi) = padded_range(2.0, 2.0);
        assert!((lo - 1.9).abs() < 1e-12 && (hi - 2.1).abs() < 1e-12);
        assert_eq!(padded_range(0.0, 0.0), (-0.05, 0.05));
        let (lo, hi) = padded_range(0.0, 10.0);
        assert!((lo + 0.5).abs() < 1e-12 && (hi - 10.5).abs() < 1e-12);
        let spec = PlotSpec { series: vec![series("flat", SeriesRole::Truth, |_| 3.0)], ..PlotSpec::default() };
        let svg = plot_series(&spec).unwrap();
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }

    #[test]
    fn invalid_specs() {
        assert!(plot_series(&PlotSpec::default()).is_err());
        let mut two_truths = four_series();
        two_truths.series[1].role = SeriesRole::Truth;
        assert!(plot_series(&two_truths).is_err());
        let mut bad = four_series();
        bad.series[2].values[3] = f64::NAN;
        assert!(plot_series(&bad).is_err());
    }

    fn report(rows: usize) -> MetricsReport {
        let mut r = MetricsReport::standard();
        for k in 0..rows {
            r.push(format!("cfg{k}"), (0..6).map(|v| Some(0.01 * (k * 6 + v + 1) as f64)).collect()).unwrap();
        }
        r
    }

    #[test]
    fn bar_counts() {
        assert_eq!(plot_rmse_bars(&report(4), "t").unwrap().matches("class=\"bar\"").count(), 24);
        assert_eq!(plot_rmse_bars(&report(1), "t").unwrap().matches("class=\"bar\"").count(), 6);
        assert!(plot_rmse_bars(&MetricsReport::standard(), "t").is_err());
    }

    #[test]
    fn tidy_report_roundtrip() {
        let r = report(2);
        let text = report_to_tidy_csv(&r);
        assert_eq!(text.lines().count(), 13);
        let back = report_from_tidy_csv(&text).unwrap();
        assert_eq!((back.variables, back.rows), (r.variables, r.rows));
        let empty = report_to_tidy_csv(&MetricsReport::standard());
        assert_eq!(empty, format!("{TIDY_HEADER}\n"));
    }

    #[test]
    fn tidy_series_export() {
        let spec = four_series();
        let text = series_to_tidy_csv(&spec.series, "Q");
        let recs = parse_tidy_csv(&text).unwrap();
        assert_eq!(recs.len(), 200);
        assert_eq!(recs[0].timestamp, Some(day(0)));
    }
}
