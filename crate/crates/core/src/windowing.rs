//! Spatial train/validation splits, sliding windows and batching.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{DYNAMIC_COLUMNS, N_DYNAMIC, STREAMFLOW};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Fixed training count applied when the id set has exactly `total` members.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountOverride {
    pub total: usize,
    pub train: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub ratio: f64,
    /// Set from the run's seed table, not serialized here.
    #[serde(skip)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count_override: Option<CountOverride>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { ratio: 0.8, seed: 0, count_override: None }
    }
}

/// Disjoint partition of catchment ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAssignment {
    pub train_ids: Vec<String>,
    pub val_ids: Vec<String>,
    pub seed: u64,
    pub ratio_permille: u32,
}

impl SplitAssignment {
    pub fn is_train(&self, id: &str) -> bool {
        self.train_ids.iter().any(|t| t == id)
    }

    /// `catchment_id,role` CSV with roles `train` / `val`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("catchment_id,role\n");
        for id in &self.train_ids {
            writeln!(out, "{id},train").unwrap();
        }
        for id in &self.val_ids {
            writeln!(out, "{id},val").unwrap();
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Reads a split file. Seed and ratio are not stored in the file and come
    /// back as zero.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "catchment_id,role")) => {}
            _ => return Err(Error::parse(path.display(), 1, "expected header catchment_id,role")),
        }
        let (mut train_ids, mut val_ids) = (Vec::new(), Vec::new());
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            match line.split_once(',') {
                Some((id, "train")) => train_ids.push(id.to_string()),
                Some((id, "val")) => val_ids.push(id.to_string()),
                _ => return Err(Error::parse(path.display(), i as u64 + 1, format!("bad split row {line:?}"))),
            }
        }
        Ok(Self { train_ids, val_ids, seed: 0, ratio_permille: 0 })
    }
}

/// Training count for `n` ids: `floor(ratio·n + 0.5)`, clamped to
/// `1..=n-1` so neither side is empty.
pub fn train_count(n: usize, ratio: f64) -> usize {
    let k = (ratio * n as f64 + 0.5).floor() as usize;
    k.clamp(1, n - 1)
}

/// Seeded shuffle of the (sorted) ids, first `train_count` to training.
pub fn spatial_split(ids: &[String], config: &SplitConfig) -> Result<SplitAssignment> {
    let n = ids.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("spatial split needs at least 2 catchments, got {n}")));
    }
    if !(config.ratio > 0.0 && config.ratio < 1.0) {
        return Err(Error::InvalidArgument(format!("split ratio {} must lie in (0, 1)", config.ratio)));
    }
    let mut sorted: Vec<String> = ids.to_vec();
    sorted.sort();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Data("duplicated catchment id in split input".into()));
    }
    let k = match config.count_override {
        Some(o) if o.total == n => {
            if o.train == 0 || o.train >= n {
                return Err(Error::InvalidArgument(format!("train count {} invalid for {n} ids", o.train)));
            }
            o.train
        }
        _ => train_count(n, config.ratio),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    sorted.shuffle(&mut rng);
    let val_ids = sorted.split_off(k);
    Ok(SplitAssignment {
        train_ids: sorted,
        val_ids,
        seed: config.seed,
        ratio_permille: (config.ratio * 1000.0).round() as u32,
    })
}

/// Window geometry in days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowSpec {
    pub context_len: usize,
    pub horizon: usize,
    pub stride: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self { context_len: 21, horizon: 1, stride: 1 }
    }
}

impl WindowSpec {
    pub fn validate(&self) -> Result<()> {
        if self.context_len == 0 || self.horizon == 0 || self.stride == 0 {
            return Err(Error::Config(format!("window lengths must be >= 1, got {self:?}")));
        }
        Ok(())
    }

    pub fn total_len(&self) -> usize {
        self.context_len + self.horizon
    }
}

/// Index ranges `start..start + context + horizon` of all windows over a
/// series of length `len`.
pub fn make_windows(len: usize, spec: &WindowSpec) -> Result<Vec<std::ops::Range<usize>>> {
    spec.validate()?;
    let need = spec.total_len();
    if len < need {
        return Err(Error::Data(format!(
            "series of {len} days is too short: windows need at least {need} days"
        )));
    }
    let count = (len - need) / spec.stride + 1;
    Ok((0..count).map(|i| i * spec.stride).map(|s| s..s + need).collect())
}

/// Experiment mode deciding which dynamic variables are observed inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentMode {
    /// Streamflow is a target only, never an input.
    #[default]
    RainfallRunoff,
    /// All six variables are both inputs and targets.
    Multivariate,
}

impl std::str::FromStr for ExperimentMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rainfall_runoff" | "rainfall-runoff" => Ok(Self::RainfallRunoff),
            "multivariate" => Ok(Self::Multivariate),
            other => Err(Error::InvalidArgument(format!(
                "unknown mode {other:?} (expected rainfall_runoff or multivariate)"
            ))),
        }
    }
}

impl std::fmt::Display for ExperimentMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::RainfallRunoff => "rainfall_runoff",
            Self::Multivariate => "multivariate",
        })
    }
}

/// Dynamic-variable indices used as observed inputs and as targets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureRoles {
    pub observed: Vec<usize>,
    pub targets: Vec<usize>,
}

impl FeatureRoles {
    pub fn observed_names(&self) -> Vec<&'static str> {
        self.observed.iter().map(|&i| DYNAMIC_COLUMNS[i]).collect()
    }

    pub fn target_names(&self) -> Vec<&'static str> {
        self.targets.iter().map(|&i| DYNAMIC_COLUMNS[i]).collect()
    }
}

pub fn select_feature_roles(mode: ExperimentMode) -> FeatureRoles {
    let all: Vec<usize> = (0..N_DYNAMIC).collect();
    match mode {
        ExperimentMode::RainfallRunoff => FeatureRoles {
            observed: all.iter().copied().filter(|&i| i != STREAMFLOW).collect(),
            targets: all,
        },
        ExperimentMode::Multivariate => FeatureRoles { observed: all.clone(), targets: all },
    }
}

/// Prepared per-timestep arrays of one catchment.
#[derive(Debug, Clone)]
pub struct CatchmentSeries {
    pub catchment_id: String,
    /// `[T × F_known]`
    pub known: Tensor,
    /// `[T × F_obs]`
    pub observed: Tensor,
    /// `[T × F_target]`
    pub targets: Tensor,
}

impl CatchmentSeries {
    pub fn len(&self) -> usize {
        self.known.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Provenance of one window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WindowRef {
    pub catchment: usize,
    pub start: usize,
}

/// Aligned tensors for one batch. Time axes are contiguous: `targets[b, k]`
/// is the day `context_len + k` after the window start.
#[derive(Debug, Clone)]
pub struct WindowBatch {
    /// `[B × context × F_known]`
    pub known_past: Tensor,
    /// `[B × horizon × F_known]`
    pub known_future: Tensor,
    /// `[B × context × F_obs]`
    pub observed_past: Tensor,
    /// `[B × horizon × F_target]`
    pub targets: Tensor,
    pub catchment_ids: Vec<String>,
    pub starts: Vec<usize>,
}

impl WindowBatch {
    pub fn size(&self) -> usize {
        self.catchment_ids.len()
    }

    pub fn context_len(&self) -> usize {
        self.known_past.shape()[1]
    }

    pub fn horizon(&self) -> usize {
        self.targets.shape()[1]
    }
}

/// Window order for one epoch: identity, or a shuffle keyed by `(seed, epoch)`.
pub fn epoch_order(n: usize, seed: u64, epoch: u64, shuffle: bool) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    if shuffle {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(epoch);
        order.shuffle(&mut rng);
    }
    order
}

/// Splits one epoch's window order into batches; the last batch may be short.
pub fn plan_batches(n: usize, batch_size: usize, seed: u64, epoch: u64, shuffle: bool) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be >= 1".into()));
    }
    Ok(epoch_order(n, seed, epoch, shuffle)
        .chunks(batch_size)
        .map(<[usize]>::to_vec)
        .collect())
}

/// All windows over a set of prepared catchments.
#[derive(Debug, Clone)]
pub struct WindowedDataset {
    series: Vec<CatchmentSeries>,
    windows: Vec<WindowRef>,
    spec: WindowSpec,
}

impl WindowedDataset {
    pub fn new(series: Vec<CatchmentSeries>, spec: WindowSpec) -> Result<Self> {
        spec.validate()?;
        let mut windows = Vec::new();
        let widths = series.first().map(|s| (s.known.last_dim(), s.observed.last_dim(), s.targets.last_dim()));
        for (ci, s) in series.iter().enumerate() {
            if Some((s.known.last_dim(), s.observed.last_dim(), s.targets.last_dim())) != widths {
                return Err(Error::Shape(format!("catchment {} has different feature widths", s.catchment_id)));
            }
            if s.observed.rows() != s.len() || s.targets.rows() != s.len() {
                return Err(Error::Shape(format!("catchment {} has misaligned arrays", s.catchment_id)));
            }
            let ranges = make_windows(s.len(), &spec)
                .map_err(|e| Error::Data(format!("catchment {}: {e}", s.catchment_id)))?;
            windows.extend(ranges.into_iter().map(|r| WindowRef { catchment: ci, start: r.start }));
        }
        Ok(Self { series, windows, spec })
    }

    pub fn spec(&self) -> &WindowSpec {
        &self.spec
    }

    pub fn windows(&self) -> &[WindowRef] {
        &self.windows
    }

    pub fn series(&self) -> &[CatchmentSeries] {
        &self.series
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// `(F_known, F_obs, F_target)`
    pub fn widths(&self) -> (usize, usize, usize) {
        self.series
            .first()
            .map(|s| (s.known.last_dim(), s.observed.last_dim(), s.targets.last_dim()))
            .unwrap_or((0, 0, 0))
    }

    pub fn catchment_ids(&self) -> HashSet<&str> {
        self.series.iter().map(|s| s.catchment_id.as_str()).collect()
    }

    /// Materializes the windows at the given positions of [`Self::windows`].
    pub fn batch(&self, indices: &[usize]) -> WindowBatch {
        let (fk, fo, ft) = self.widths();
        let (c, h) = (self.spec.context_len, self.spec.horizon);
        let b = indices.len();
        let mut known_past = Vec::with_capacity(b * c * fk);
        let mut known_future = Vec::with_capacity(b * h * fk);
        let mut observed_past = Vec::with_capacity(b * c * fo);
        let mut targets = Vec::with_capacity(b * h * ft);
        let mut catchment_ids = Vec::with_capacity(b);
        let mut starts = Vec::with_capacity(b);
        for &i in indices {
            let w = self.windows[i];
            let s = &self.series[w.catchment];
            fn rows(t: &Tensor, from: usize, to: usize) -> &[f64] {
                let width = t.last_dim();
                &t.data()[from * width..to * width]
            }
            let split = w.start + c;
            known_past.extend_from_slice(rows(&s.known, w.start, split));
            known_future.extend_from_slice(rows(&s.known, split, split + h));
            observed_past.extend_from_slice(rows(&s.observed, w.start, split));
            targets.extend_from_slice(rows(&s.targets, split, split + h));
            catchment_ids.push(s.catchment_id.clone());
            starts.push(w.start);
        }
        WindowBatch {
            known_past: Tensor::new(vec![b, c, fk], known_past).expect("sized above"),
            known_future: Tensor::new(vec![b, h, fk], known_future).expect("sized above"),
            observed_past: Tensor::new(vec![b, c, fo], observed_past).expect("sized above"),
            targets: Tensor::new(vec![b, h, ft], targets).expect("sized above"),
            catchment_ids,
            starts,
        }
    }

    /// Batches of one epoch in emission order.
    pub fn batches(
        &self,
        batch_size: usize,
        seed: u64,
        epoch: u64,
        shuffle: bool,
    ) -> Result<impl Iterator<Item = WindowBatch> + '_> {
        let plan = plan_batches(self.len(), batch_size, seed, epoch, shuffle)?;
        Ok(plan.into_iter().map(move |idx| self.batch(&idx)))
    }
}
