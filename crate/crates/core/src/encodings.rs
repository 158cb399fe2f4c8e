//! Known-input features: linear space/time ramps, Fourier and Legendre time
//! encodings, the month ordinal and broadcast static attributes.

use serde::{Deserialize, Serialize};

use crate::dataset::{encode_month_ordinal, StaticRow, TimeSeriesPanel};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_EXTRA_PERIODS: [f64; 5] = [8.0, 16.0, 32.0, 64.0, 128.0];
pub const DEFAULT_LEGENDRE_DEGREES: [usize; 3] = [2, 3, 4];
pub const DEFAULT_ANNUAL_PERIOD: f64 = 365.25;

/// Which encoding families feed the known inputs.
///
/// An empty `extra_fourier_periods` or `legendre_degrees` list disables that
/// family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncodingConfig {
    pub use_linear_space: bool,
    pub use_linear_time: bool,
    pub use_annual_fourier: bool,
    pub extra_fourier_periods: Vec<f64>,
    pub legendre_degrees: Vec<usize>,
    pub annual_period_days: f64,
    pub include_static: bool,
    pub include_month: bool,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        Self {
            use_linear_space: true,
            use_linear_time: true,
            use_annual_fourier: true,
            extra_fourier_periods: DEFAULT_EXTRA_PERIODS.to_vec(),
            legendre_degrees: DEFAULT_LEGENDRE_DEGREES.to_vec(),
            annual_period_days: DEFAULT_ANNUAL_PERIOD,
            include_static: true,
            include_month: true,
        }
    }
}

impl EncodingConfig {
    /// Nothing enabled: the model sees only the observed series.
    pub fn none() -> Self {
        Self {
            use_linear_space: false,
            use_linear_time: false,
            use_annual_fourier: false,
            extra_fourier_periods: Vec::new(),
            legendre_degrees: Vec::new(),
            annual_period_days: DEFAULT_ANNUAL_PERIOD,
            include_static: false,
            include_month: false,
        }
    }

    pub fn linear() -> Self {
        Self { use_linear_space: true, use_linear_time: true, ..Self::none() }
    }

    pub fn annual() -> Self {
        Self { use_annual_fourier: true, ..Self::linear() }
    }

    pub fn extra() -> Self {
        Self {
            extra_fourier_periods: DEFAULT_EXTRA_PERIODS.to_vec(),
            legendre_degrees: DEFAULT_LEGENDRE_DEGREES.to_vec(),
            ..Self::annual()
        }
    }

    pub fn with_static(mut self, on: bool) -> Self {
        self.include_static = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.annual_period_days > 1.0) {
            return Err(Error::Config(format!("annual period {} must be > 1", self.annual_period_days)));
        }
        if let Some(p) = self.extra_fourier_periods.iter().find(|p| !(**p > 1.0)) {
            return Err(Error::Config(format!("Fourier period {p} must be > 1")));
        }
        if let Some(d) = self.legendre_degrees.iter().find(|d| **d < 2) {
            return Err(Error::Config(format!("Legendre degree {d} must be >= 2")));
        }
        Ok(())
    }

    /// Number of columns produced given the static attribute count.
    pub fn feature_count(&self, n_static: usize) -> usize {
        self.use_linear_time as usize
            + 2 * self.use_linear_space as usize
            + 2 * self.use_annual_fourier as usize
            + 2 * self.extra_fourier_periods.len()
            + self.legendre_degrees.len()
            + self.include_month as usize
            + if self.include_static { n_static } else { 0 }
    }
}

/// `t / (T - 1)` for `t = 0..T`; a single step maps to 0.
pub fn linear_time(len: usize) -> Result<Vec<f64>> {
    match len {
        0 => Err(Error::InvalidArgument("linear_time needs at least one step".into())),
        1 => Ok(vec![0.0]),
        _ => {
            let denom = (len - 1) as f64;
            Ok((0..len).map(|t| t as f64 / denom).collect())
        }
    }
}

/// Bounding box of the training gauges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialBounds {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl SpatialBounds {
    pub fn from_coords(coords: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut b = SpatialBounds {
            lat_min: f64::INFINITY,
            lat_max: f64::NEG_INFINITY,
            lon_min: f64::INFINITY,
            lon_max: f64::NEG_INFINITY,
        };
        for (lat, lon) in coords {
            b.lat_min = b.lat_min.min(lat);
            b.lat_max = b.lat_max.max(lat);
            b.lon_min = b.lon_min.min(lon);
            b.lon_max = b.lon_max.max(lon);
        }
        b.check()?;
        Ok(b)
    }

    fn check(&self) -> Result<()> {
        if !(self.lat_max > self.lat_min) || !(self.lon_max > self.lon_min) {
            return Err(Error::InvalidArgument(format!("degenerate spatial bounds {self:?}")));
        }
        Ok(())
    }
}

/// Affine map of a gauge position onto the training box's unit square. Points
/// outside the box land outside `[0, 1]`.
pub fn linear_space(lat: f64, lon: f64, bounds: &SpatialBounds) -> Result<(f64, f64)> {
    bounds.check()?;
    Ok((
        (lat - bounds.lat_min) / (bounds.lat_max - bounds.lat_min),
        (lon - bounds.lon_min) / (bounds.lon_max - bounds.lon_min),
    ))
}

/// `[T × 2·|periods|]` matrix of `(sin, cos)(2π d / P)` pairs, `d` counted
/// from the first day of the series.
pub fn fourier_features(len: usize, periods: &[f64]) -> Result<Tensor> {
    if let Some(p) = periods.iter().find(|p| !(**p > 1.0)) {
        return Err(Error::InvalidArgument(format!("Fourier period {p} must be > 1")));
    }
    let width = 2 * periods.len();
    let mut data = Vec::with_capacity(len * width);
    for d in 0..len {
        for &p in periods {
            let (s, c) = (std::f64::consts::TAU * d as f64 / p).sin_cos();
            data.push(s);
            data.push(c);
        }
    }
    Tensor::new(vec![len, width], data)
}

/// `P_n(x)` via Bonnet's recurrence.
pub fn legendre(n: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    if n == 0 {
        return prev;
    }
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0) * x * cur - kf * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// `[T × |degrees|]` matrix of Legendre polynomials of `x = 2t/(T-1) - 1`.
pub fn legendre_features(len: usize, degrees: &[usize]) -> Result<Tensor> {
    if len < 2 {
        return Err(Error::InvalidArgument(format!("Legendre features need T >= 2, got {len}")));
    }
    let denom = (len - 1) as f64;
    let mut data = Vec::with_capacity(len * degrees.len());
    for t in 0..len {
        let x = 2.0 * t as f64 / denom - 1.0;
        data.extend(degrees.iter().map(|&n| legendre(n, x)));
    }
    Tensor::new(vec![len, degrees.len()], data)
}

/// Named `[T × F]` known-input matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodingMatrix {
    pub feature_names: Vec<String>,
    pub values: Tensor,
    pub is_static: Vec<bool>,
}

impl EncodingMatrix {
    pub fn width(&self) -> usize {
        self.feature_names.len()
    }
}

fn fmt_period(p: f64) -> String {
    if p.fract() == 0.0 {
        format!("{}", p as i64)
    } else {
        format!("{p}")
    }
}

/// Ordered feature names for a config: linear time, linear space (lat, lon),
/// annual Fourier, extra Fourier, Legendre, month, statics.
pub fn feature_names(config: &EncodingConfig, static_names: &[String]) -> Vec<(String, bool)> {
    let mut names = Vec::new();
    if config.use_linear_time {
        names.push(("linear_time".to_string(), false));
    }
    if config.use_linear_space {
        names.push(("linear_lat".to_string(), true));
        names.push(("linear_lon".to_string(), true));
    }
    if config.use_annual_fourier {
        names.push(("fourier_annual_sin".to_string(), false));
        names.push(("fourier_annual_cos".to_string(), false));
    }
    for &p in &config.extra_fourier_periods {
        names.push((format!("fourier_p{}_sin", fmt_period(p)), false));
        names.push((format!("fourier_p{}_cos", fmt_period(p)), false));
    }
    for &n in &config.legendre_degrees {
        names.push((format!("legendre_{n}"), false));
    }
    if config.include_month {
        names.push(("month".to_string(), false));
    }
    if config.include_static {
        for s in static_names {
            names.push((format!("static:{s}"), true));
        }
    }
    names
}

/// Builds the known-input matrix of one catchment. `statics` must already be
/// normalized; its coordinates feed linear space.
pub fn assemble_known_inputs(
    config: &EncodingConfig,
    panel: &TimeSeriesPanel,
    statics: Option<(&StaticRow, &[String])>,
    bounds: Option<&SpatialBounds>,
) -> Result<EncodingMatrix> {
    config.validate()?;
    let len = panel.len();
    if len == 0 {
        return Err(Error::InvalidArgument(format!("catchment {} has no data", panel.catchment_id())));
    }
    let needs_row = config.use_linear_space || config.include_static;
    let row = match statics {
        Some((row, _)) => Some(row),
        None if needs_row => {
            return Err(Error::InvalidArgument(format!(
                "catchment {}: static row required for linear space or static features",
                panel.catchment_id()
            )))
        }
        None => None,
    };
    let static_names: &[String] = statics.map(|(_, n)| n).unwrap_or(&[]);

    let mut columns: Vec<Vec<f64>> = Vec::new();
    if config.use_linear_time {
        columns.push(linear_time(len)?);
    }
    if config.use_linear_space {
        let bounds = bounds.ok_or_else(|| Error::InvalidArgument("linear space needs spatial bounds".into()))?;
        let row = row.expect("checked above");
        let (a, b) = linear_space(row.lat, row.lon, bounds)?;
        columns.push(vec![a; len]);
        columns.push(vec![b; len]);
    }
    let mut push_matrix = |m: Tensor| {
        let w = m.last_dim();
        for c in 0..w {
            columns.push((0..len).map(|t| m.at2(t, c)).collect());
        }
    };
    if config.use_annual_fourier {
        push_matrix(fourier_features(len, &[config.annual_period_days])?);
    }
    if !config.extra_fourier_periods.is_empty() {
        push_matrix(fourier_features(len, &config.extra_fourier_periods)?);
    }
    if !config.legendre_degrees.is_empty() {
        push_matrix(legendre_features(len, &config.legendre_degrees)?);
    }
    if config.include_month {
        columns.push(encode_month_ordinal(panel.dates()));
    }
    if config.include_static {
        let row = row.expect("checked above");
        if row.values.len() != static_names.len() {
            return Err(Error::Shape(format!(
                "{} static values but {} names",
                row.values.len(),
                static_names.len()
            )));
        }
        for &v in &row.values {
            columns.push(vec![v; len]);
        }
    }

    let (feature_names, is_static): (Vec<String>, Vec<bool>) = feature_names(config, static_names).into_iter().unzip();
    debug_assert_eq!(feature_names.len(), columns.len());
    let width = columns.len();
    let mut data = Vec::with_capacity(len * width);
    for t in 0..len {
        data.extend(columns.iter().map(|c| c[t]));
    }
    Ok(EncodingMatrix {
        feature_names,
        values: Tensor::new(vec![len, width], data)?,
        is_static,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::N_DYNAMIC;
    use chrono::NaiveDate;

    fn panel(len: usize) -> TimeSeriesPanel {
        let start = NaiveDate::from_ymd_opt(1989, 10, 2).unwrap();
        let dates = (0..len).map(|i| start + chrono::Days::new(i as u64)).collect();
        TimeSeriesPanel::new("p", dates, vec![[0.0; N_DYNAMIC]; len]).unwrap()
    }

    #[test]
    fn linear_time_cases() {
        assert_eq!(linear_time(3).unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(linear_time(1).unwrap(), vec![0.0]);
        assert!(linear_time(0).is_err());
        let long = linear_time(7031).unwrap();
        assert_eq!(long[0], 0.0);
        assert_eq!(long[7030], 1.0);
        assert!((long[1] - 1.0 / 7030.0).abs() < 1e-18);
    }

    #[test]
    fn linear_space_cases() {
        let b = SpatialBounds { lat_min: 30.0, lat_max: 40.0, lon_min: -110.0, lon_max: -90.0 };
        assert_eq!(linear_space(30.0, -110.0, &b).unwrap(), (0.0, 0.0));
        assert_eq!(linear_space(35.0, -100.0, &b).unwrap(), (0.5, 0.5));
        let (lat, _) = linear_space(41.0, -100.0, &b).unwrap();
        assert!((lat - 1.1).abs() < 1e-12);
        let flat = SpatialBounds { lat_max: 30.0, ..b };
        assert!(linear_space(30.0, -100.0, &flat).is_err());
        assert!(SpatialBounds::from_coords([(1.0, 2.0)]).is_err());
    }

    #[test]
    fn fourier_cases() {
        let m = fourier_features(3, &[8.0, 365.25]).unwrap();
        assert_eq!(m.shape(), &[3, 4]);
        assert_eq!((m.at2(0, 0), m.at2(0, 1)), (0.0, 1.0));
        assert!((m.at2(2, 0) - 1.0).abs() < 1e-15);
        assert!(m.at2(2, 1).abs() < 1e-15);
        assert!(fourier_features(3, &[0.0]).is_err());
        assert!(fourier_features(3, &[-4.0]).is_err());

        // integer multiples of the annual period, at whole-day indices (k = 4j)
        let long = fourier_features(20 * 366, &[365.25]).unwrap();
        for j in 1..5 {
            let d = 1461 * j;
            assert!((long.at2(d, 1) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn legendre_closed_forms() {
        assert_eq!(legendre(2, 0.0), -0.5);
        for n in 0..10 {
            assert!((legendre(n, 1.0) - 1.0).abs() < 1e-12);
        }
        assert!((legendre(3, -1.0) + 1.0).abs() < 1e-12);
        let m = legendre_features(5, &[2, 3, 4]).unwrap();
        assert_eq!(m.at2(2, 0), -0.5);
        assert!(legendre_features(1, &[2]).is_err());
    }

    #[test]
    fn assembled_feature_counts() {
        let p = panel(40);
        let names: Vec<String> = (0..30).map(|i| format!("a{i}")).collect();
        let row = StaticRow { lat: 35.0, lon: -100.0, values: vec![0.25; 30] };
        let b = SpatialBounds { lat_min: 30.0, lat_max: 40.0, lon_min: -110.0, lon_max: -90.0 };

        let empty = assemble_known_inputs(&EncodingConfig::none(), &p, None, None).unwrap();
        assert_eq!(empty.width(), 0);
        assert_eq!(empty.values.shape(), &[40, 0]);

        let annual_only = EncodingConfig { use_annual_fourier: true, ..EncodingConfig::none() };
        assert_eq!(assemble_known_inputs(&annual_only, &p, None, None).unwrap().width(), 2);

        let full = EncodingConfig::default();
        let m = assemble_known_inputs(&full, &p, Some((&row, &names)), Some(&b)).unwrap();
        assert_eq!(m.width(), 49);
        assert_eq!(full.feature_count(30), 49);
        let unique: std::collections::HashSet<_> = m.feature_names.iter().collect();
        assert_eq!(unique.len(), 49);
        assert_eq!(m.feature_names[0], "linear_time");
        assert_eq!(m.feature_names[3], "fourier_annual_sin");
        assert_eq!(m.feature_names[5], "fourier_p8_sin");
        assert_eq!(m.feature_names.last().unwrap(), "static:a29");

        for (c, &is_static) in m.is_static.iter().enumerate() {
            let col: Vec<f64> = (0..40).map(|t| m.values.at2(t, c)).collect();
            let constant = col.iter().all(|v| *v == col[0]);
            if is_static {
                assert!(constant, "{} should be constant", m.feature_names[c]);
            } else {
                assert!(!constant, "{} should vary", m.feature_names[c]);
            }
        }
        assert_eq!(m, assemble_known_inputs(&full, &p, Some((&row, &names)), Some(&b)).unwrap());
    }

    #[test]
    fn missing_statics_rejected() {
        let p = panel(10);
        assert!(assemble_known_inputs(&EncodingConfig::linear(), &p, None, None).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(EncodingConfig { legendre_degrees: vec![1], ..EncodingConfig::none() }.validate().is_err());
        assert!(EncodingConfig { extra_fourier_periods: vec![1.0], ..EncodingConfig::none() }.validate().is_err());
        assert!(EncodingConfig::default().validate().is_ok());
    }
}
