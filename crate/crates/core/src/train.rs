//! Adam training under MSE loss, epoch bookkeeping and checkpoint selection.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encodings::EncodingConfig;
use crate::error::{Error, Result};
use crate::nn::{model_backward, model_forward, CellActivation, DenseParams, LstmParams, ModelGrads, ModelParams};
use crate::tensor::Tensor;
use crate::windowing::WindowedDataset;

/// Mean squared error over all elements and its gradient `2(pred - target)/n`.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let n = pred.len();
    if n == 0 {
        return Ok((0.0, pred.clone()));
    }
    let mut sum = 0.0;
    let mut grad = Vec::with_capacity(n);
    for (p, t) in pred.data().iter().zip(target.data()) {
        let d = p - t;
        sum += d * d;
        grad.push(2.0 * d / n as f64);
    }
    Ok((sum / n as f64, Tensor::new(pred.shape().to_vec(), grad)?))
}

/// Adam moments and hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
}

impl AdamState {
    pub fn new(shapes: &[usize], learning_rate: f64) -> Self {
        Self {
            first_moment: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step_count: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            learning_rate,
        }
    }

    pub fn for_params(params: &ModelParams, learning_rate: f64) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|(_, t)| t.len()).collect();
        Self::new(&shapes, learning_rate)
    }

    /// One bias-corrected update over aligned parameter/gradient slices.
    pub fn update(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.first_moment.len() {
            return Err(Error::Shape("Adam state, parameters and gradients differ in count".into()));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first_moment) {
            if p.len() != g.len() || p.len() != m.len() {
                return Err(Error::Shape("Adam parameter and gradient lengths differ".into()));
            }
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.first_moment[k];
            let v = &mut self.second_moment[k];
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

pub fn adam_step(params: &mut ModelParams, grads: &ModelGrads, state: &mut AdamState) -> Result<()> {
    let g: Vec<&[f64]> = grads.tensors().iter().map(|(_, t)| *t).collect();
    let mut p: Vec<&mut [f64]> = params.tensors_mut().into_iter().map(|v| v.as_mut_slice()).collect();
    state.update(&mut p, &g)
}

/// Optimization protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub shuffle: bool,
    /// Set from the run's seed table, not serialized here.
    #[serde(skip)]
    pub shuffle_seed: u64,
    #[serde(skip)]
    pub dropout_seed: u64,
    /// Final checkpoint is replaced by the best one when its validation loss
    /// exceeds this multiple of the minimum.
    pub overfit_factor: f64,
    /// Stop after this many consecutive non-improving epochs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 120,
            learning_rate: 0.001,
            batch_size: 256,
            shuffle: true,
            shuffle_seed: 0,
            dropout_seed: 0,
            overfit_factor: 1.05,
            patience: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("bad learning rate {}", self.learning_rate)));
        }
        if !(self.overfit_factor >= 1.0) {
            return Err(Error::Config(format!("overfit factor {} must be >= 1", self.overfit_factor)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub improved: bool,
}

/// Improved if either loss went down versus the previous epoch; the first
/// epoch counts as improved.
pub fn epoch_improved(prev: Option<&EpochRecord>, train_loss: f64, val_loss: f64) -> bool {
    match prev {
        None => true,
        Some(p) => train_loss < p.train_loss || val_loss < p.val_loss,
    }
}

/// `epoch,train_loss,val_loss,improved` CSV.
pub fn training_log_csv(records: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss,improved\n");
    for r in records {
        writeln!(out, "{},{:?},{:?},{}", r.epoch, r.train_loss, r.val_loss, r.improved).unwrap();
    }
    out
}

/// What a checkpoint needs to rebuild its inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub feature_names: Vec<String>,
    pub encoding: EncodingConfig,
    pub observed: Vec<String>,
    pub targets: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub epoch: usize,
    pub val_loss: f64,
    pub manifest: RunManifest,
}

const CHECKPOINT_MAGIC: &str = "exohydro-checkpoint 1";

impl Checkpoint {
    /// Line-oriented text container. Header `exohydro-checkpoint 1`, then
    /// `key = value` metadata, repeated `feature = <name>` lines,
    /// `encoding.<toml line>` lines, and `tensor <name> <len>` headers each
    /// followed by one line of values. Floats are written in shortest
    /// round-trip form so a reload is bit-exact.
    pub fn to_text(&self) -> Result<String> {
        let p = &self.params;
        let mut out = String::new();
        writeln!(out, "{CHECKPOINT_MAGIC}").unwrap();
        writeln!(out, "epoch = {}", self.epoch).unwrap();
        writeln!(out, "val_loss = {:?}", self.val_loss).unwrap();
        writeln!(out, "n_known = {}", p.n_known).unwrap();
        writeln!(out, "n_observed = {}", p.n_observed).unwrap();
        writeln!(out, "encoder_width = {}", p.encoder.n_out).unwrap();
        writeln!(out, "hidden_size = {}", p.hidden_size()).unwrap();
        writeln!(out, "n_target = {}", p.n_target()).unwrap();
        writeln!(out, "dropout_rate = {:?}", p.dropout_rate).unwrap();
        writeln!(out, "cell_activation = {}", p.cell_activation).unwrap();
        writeln!(out, "observed = {}", self.manifest.observed.join(" ")).unwrap();
        writeln!(out, "targets = {}", self.manifest.targets.join(" ")).unwrap();
        for f in &self.manifest.feature_names {
            writeln!(out, "feature = {f}").unwrap();
        }
        let enc = toml::to_string(&self.manifest.encoding).map_err(|e| Error::Config(e.to_string()))?;
        for line in enc.lines().filter(|l| !l.trim().is_empty()) {
            writeln!(out, "encoding.{line}").unwrap();
        }
        for (name, t) in p.tensors() {
            writeln!(out, "tensor {name} {}", t.len()).unwrap();
            let vals: Vec<String> = t.iter().map(|v| format!("{v:?}")).collect();
            writeln!(out, "{}", vals.join(" ")).unwrap();
        }
        writeln!(out, "end").unwrap();
        Ok(out)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: String| Error::parse("checkpoint", line as u64, msg);
        let mut lines = text.lines().enumerate().peekable();
        match lines.next() {
            Some((_, l)) if l.trim() == CHECKPOINT_MAGIC => {}
            Some((_, l)) => return Err(bad(1, format!("unsupported checkpoint header {l:?}"))),
            None => return Err(bad(1, "empty checkpoint".into())),
        }
        let mut meta = std::collections::HashMap::new();
        let mut features = Vec::new();
        let mut encoding_toml = String::new();
        let mut tensors: Vec<(String, Vec<f64>)> = Vec::new();
        let mut ended = false;
        while let Some((i, line)) = lines.next() {
            if line == "end" {
                ended = true;
                break;
            }
            if let Some(rest) = line.strip_prefix("encoding.") {
                encoding_toml.push_str(rest);
                encoding_toml.push('\n');
            } else if let Some(rest) = line.strip_prefix("tensor ") {
                let (name, len) = rest
                    .rsplit_once(' ')
                    .ok_or_else(|| bad(i + 1, format!("bad tensor header {line:?}")))?;
                let len: usize = len.parse().map_err(|_| bad(i + 1, format!("bad tensor length {len:?}")))?;
                let (j, data) = lines.next().ok_or_else(|| bad(i + 2, "missing tensor data".into()))?;
                let values: Vec<f64> = data
                    .split_whitespace()
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| bad(j + 1, format!("bad value in {name}: {e}")))?;
                if values.len() != len {
                    return Err(bad(j + 1, format!("{name}: expected {len} values, found {}", values.len())));
                }
                tensors.push((name.to_string(), values));
            } else if let Some((k, v)) = line.split_once(" = ") {
                if k == "feature" {
                    features.push(v.to_string());
                } else {
                    meta.insert(k.to_string(), v.to_string());
                }
            } else if !line.trim().is_empty() {
                return Err(bad(i + 1, format!("unexpected line {line:?}")));
            }
        }
        if !ended {
            return Err(bad(0, "truncated checkpoint (no end marker)".into()));
        }
        let get = |k: &str| meta.get(k).cloned().ok_or_else(|| bad(0, format!("missing {k}")));
        let num = |k: &str| -> Result<usize> { get(k)?.parse().map_err(|_| bad(0, format!("bad {k}"))) };
        let real = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|_| bad(0, format!("bad {k}"))) };
        let words = |k: &str| -> Result<Vec<String>> { Ok(get(k)?.split_whitespace().map(String::from).collect()) };

        let (n_known, n_observed) = (num("n_known")?, num("n_observed")?);
        let (width, hidden, n_target) = (num("encoder_width")?, num("hidden_size")?, num("n_target")?);
        let mut params = ModelParams {
            n_known,
            n_observed,
            encoder: DenseParams::zeros(n_known + n_observed, width),
            lstm: LstmParams::zeros(width, hidden),
            decoder: DenseParams::zeros(hidden, n_target),
            dropout_rate: real("dropout_rate")?,
            cell_activation: get("cell_activation")?.parse::<CellActivation>()?,
        };
        let names = params.tensors().map(|(n, _)| n);
        if tensors.len() != names.len() {
            return Err(bad(0, format!("expected {} tensors, found {}", names.len(), tensors.len())));
        }
        for ((slot, name), (found, values)) in params.tensors_mut().into_iter().zip(names).zip(tensors) {
            if found != name || values.len() != slot.len() {
                return Err(bad(0, format!("tensor {found} does not fit slot {name}")));
            }
            *slot = values;
        }
        params.validate()?;
        let encoding: EncodingConfig = toml::from_str(&encoding_toml).map_err(|e| bad(0, e.to_string()))?;
        Ok(Self {
            params,
            epoch: num("epoch")?,
            val_loss: real("val_loss")?,
            manifest: RunManifest {
                feature_names: features,
                encoding,
                observed: words("observed")?,
                targets: words("targets")?,
            },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

/// Predictions and targets over every window of a dataset, in window order.
/// Both are `[N × horizon × F_target]`.
pub fn predict_dataset(params: &ModelParams, data: &WindowedDataset, batch_size: usize) -> Result<(Tensor, Tensor)> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (mut preds, mut targets) = (Vec::new(), Vec::new());
    for batch in data.batches(batch_size.max(1), 0, 0, false)? {
        let (p, _) = model_forward(params, &batch, false, &mut rng)?;
        preds.extend_from_slice(p.data());
        targets.extend_from_slice(batch.targets.data());
    }
    let (_, _, ft) = data.widths();
    let shape = vec![data.len(), data.spec().horizon, ft];
    Ok((Tensor::new(shape.clone(), preds)?, Tensor::new(shape, targets)?))
}

/// Inference-mode MSE pooled over every element of every window.
pub fn evaluate_loss(params: &ModelParams, data: &WindowedDataset, batch_size: usize) -> Result<f64> {
    let (p, t) = predict_dataset(params, data, batch_size)?;
    Ok(mse_loss(&p, &t)?.0)
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub records: Vec<EpochRecord>,
    pub final_checkpoint: Checkpoint,
    pub best_checkpoint: Checkpoint,
}

/// Trains with Adam for up to `config.epochs` epochs. After every epoch the
/// full training and validation losses are measured in inference mode. When
/// `checkpoint_dir` is given, `checkpoint_best.ckpt` is rewritten whenever the
/// validation loss reaches a new minimum and `checkpoint_final.ckpt` is
/// written at the end.
pub fn fit(
    mut params: ModelParams,
    train: &WindowedDataset,
    val: &WindowedDataset,
    config: &TrainConfig,
    manifest: &RunManifest,
    checkpoint_dir: Option<&Path>,
) -> Result<FitOutcome> {
    config.validate()?;
    params.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::InvalidArgument("training and validation sets must be non-empty".into()));
    }
    let mut adam = AdamState::for_params(&params, config.learning_rate);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.dropout_seed);
    let mut records: Vec<EpochRecord> = Vec::with_capacity(config.epochs);
    let mut best: Option<Checkpoint> = None;
    let mut stale = 0usize;

    for epoch in 1..=config.epochs {
        for (bi, batch) in train
            .batches(config.batch_size, config.shuffle_seed, epoch as u64, config.shuffle)?
            .enumerate()
        {
            let fail = |e: Error| Error::Numerical(format!("epoch {epoch}, batch {bi}: {e}"));
            let (pred, cache) = model_forward(&params, &batch, true, &mut dropout_rng).map_err(fail)?;
            let (loss, grad) = mse_loss(&pred, &batch.targets)?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!("loss became {loss} at epoch {epoch}, batch {bi}")));
            }
            let grads = model_backward(&params, &cache, &grad)?;
            adam_step(&mut params, &grads, &mut adam)?;
        }
        let train_loss = evaluate_loss(&params, train, config.batch_size)
            .map_err(|e| Error::Numerical(format!("epoch {epoch}, training evaluation: {e}")))?;
        let val_loss = evaluate_loss(&params, val, config.batch_size)
            .map_err(|e| Error::Numerical(format!("epoch {epoch}, validation evaluation: {e}")))?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::Numerical(format!("non-finite loss after epoch {epoch}")));
        }
        let improved = epoch_improved(records.last(), train_loss, val_loss);
        records.push(EpochRecord { epoch, train_loss, val_loss, improved });
        info!("epoch {epoch}: train {train_loss:.6e} val {val_loss:.6e}{}", if improved { "" } else { " (no improvement)" });

        if best.as_ref().map_or(true, |b| val_loss < b.val_loss) {
            let ckpt = Checkpoint { params: params.clone(), epoch, val_loss, manifest: manifest.clone() };
            if let Some(dir) = checkpoint_dir {
                ckpt.save(&dir.join("checkpoint_best.ckpt"))?;
            }
            best = Some(ckpt);
        }
        stale = if improved { 0 } else { stale + 1 };
        if config.patience.is_some_and(|k| stale >= k) {
            info!("stopping after {stale} epochs without improvement");
            break;
        }
    }

    let last = records.last().expect("at least one epoch");
    let final_checkpoint = Checkpoint { params, epoch: last.epoch, val_loss: last.val_loss, manifest: manifest.clone() };
    if let Some(dir) = checkpoint_dir {
        final_checkpoint.save(&dir.join("checkpoint_final.ckpt"))?;
    }
    Ok(FitOutcome {
        records,
        final_checkpoint,
        best_checkpoint: best.expect("at least one epoch"),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    Final,
    BestEarlier,
}

/// Keeps the final checkpoint unless its validation loss is strictly above
/// `overfit_factor` times the minimum, in which case the best one wins.
pub fn select_checkpoint<'a>(
    records: &[EpochRecord],
    final_ckpt: &'a Checkpoint,
    best_ckpt: &'a Checkpoint,
    overfit_factor: f64,
) -> Result<(&'a Checkpoint, Selection)> {
    let last = records
        .last()
        .ok_or_else(|| Error::InvalidArgument("no epoch records to select from".into()))?;
    let min = records.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min);
    if last.val_loss > overfit_factor * min {
        info!(
            "final validation loss {:.6e} exceeds {overfit_factor} x minimum {min:.6e}; using epoch {}",
            last.val_loss, best_ckpt.epoch
        );
        Ok((best_ckpt, Selection::BestEarlier))
    } else {
        info!("using final checkpoint (epoch {})", final_ckpt.epoch);
        Ok((final_ckpt, Selection::Final))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::random_tiny_problem;

    #[test]
    fn mse_values() {
        let t = Tensor::new(vec![2], vec![3.0, 4.0]).unwrap();
        let (l, g) = mse_loss(&t, &t).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.data().iter().all(|v| *v == 0.0));
        let zero = Tensor::zeros(vec![2]);
        assert_eq!(mse_loss(&zero, &t).unwrap().0, 12.5);
        assert!(mse_loss(&zero, &Tensor::zeros(vec![3])).is_err());
    }

    #[test]
    fn mse_gradient_matches_differences() {
        let p = Tensor::new(vec![2, 2], vec![0.3, -1.2, 2.5, 0.0]).unwrap();
        let t = Tensor::new(vec![2, 2], vec![1.0, 0.5, -0.5, 0.25]).unwrap();
        let (_, g) = mse_loss(&p, &t).unwrap();
        for i in 0..4 {
            let h = 1e-3;
            let mut up = p.clone();
            up.data_mut()[i] += h;
            let mut dn = p.clone();
            dn.data_mut()[i] -= h;
            let fd = (mse_loss(&up, &t).unwrap().0 - mse_loss(&dn, &t).unwrap().0) / (2.0 * h);
            assert!((fd - g.data()[i]).abs() <= 1e-9, "{fd} vs {}", g.data()[i]);
        }
    }

    #[test]
    fn adam_first_step() {
        let mut st = AdamState::new(&[1], 0.001);
        let mut p = [0.0];
        st.update(&mut [&mut p[..]], &[&[1.0][..]]).unwrap();
        assert!((p[0] + 0.001 / (1.0 + 1e-8)).abs() < 1e-15);
        assert_eq!(st.step_count, 1);
    }

    #[test]
    fn adam_zero_gradient_and_zero_rate() {
        let mut st = AdamState::new(&[3], 0.001);
        let mut p = [1.0, -2.0, 3.0];
        for _ in 0..100 {
            st.update(&mut [&mut p[..]], &[&[0.0; 3][..]]).unwrap();
        }
        assert_eq!(p, [1.0, -2.0, 3.0]);

        let mut st = AdamState::new(&[3], 1e-15);
        let before = p;
        st.update(&mut [&mut p[..]], &[&[5.0, -1.0, 1e-3][..]]).unwrap();
        for (a, b) in p.iter().zip(before) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_is_deterministic() {
        let run = || {
            let (mut params, _) = random_tiny_problem(1);
            let mut st = AdamState::for_params(&params, 0.01);
            let grads = ModelGrads {
                encoder: params.encoder.clone(),
                lstm: params.lstm.clone(),
                decoder: params.decoder.clone(),
            };
            for _ in 0..5 {
                adam_step(&mut params, &grads, &mut st).unwrap();
            }
            params
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn improved_flag_definition() {
        let r1 = EpochRecord { epoch: 1, train_loss: 1.0, val_loss: 1.0, improved: true };
        assert!(epoch_improved(None, 5.0, 5.0));
        assert!(epoch_improved(Some(&r1), 0.9, 1.1));
        assert!(epoch_improved(Some(&r1), 1.1, 0.9));
        assert!(!epoch_improved(Some(&r1), 1.0, 1.0));
    }

    fn ckpt(epoch: usize, val_loss: f64) -> Checkpoint {
        let (params, _) = random_tiny_problem(2);
        Checkpoint {
            params,
            epoch,
            val_loss,
            manifest: RunManifest {
                feature_names: vec!["linear_time".into(), "static:area km2".into()],
                encoding: EncodingConfig::annual(),
                observed: vec!["prcp".into()],
                targets: vec!["q".into()],
            },
        }
    }

    fn records(vals: &[f64]) -> Vec<EpochRecord> {
        vals.iter()
            .enumerate()
            .map(|(i, &v)| EpochRecord { epoch: i + 1, train_loss: v, val_loss: v, improved: true })
            .collect()
    }

    #[test]
    fn checkpoint_selection_rule() {
        let decreasing = records(&[3.0, 2.0, 1.0]);
        let (fin, best) = (ckpt(3, 1.0), ckpt(3, 1.0));
        assert_eq!(select_checkpoint(&decreasing, &fin, &best, 1.05).unwrap().1, Selection::Final);

        let mut vals = vec![1.0; 60];
        vals[39] = 0.5;
        let overfit = records(&vals);
        let (fin, best) = (ckpt(60, 1.0), ckpt(40, 0.5));
        let (chosen, how) = select_checkpoint(&overfit, &fin, &best, 1.05).unwrap();
        assert_eq!((chosen.epoch, how), (40, Selection::BestEarlier));

        let boundary = records(&[1.0, 1.05]);
        let (fin, best) = (ckpt(2, 1.05), ckpt(1, 1.0));
        assert_eq!(select_checkpoint(&boundary, &fin, &best, 1.05).unwrap().1, Selection::Final);

        assert!(select_checkpoint(&[], &fin, &best, 1.05).is_err());
    }

    #[test]
    fn checkpoint_text_roundtrip_is_exact() {
        let c = ckpt(7, 0.123456789012345678);
        let back = Checkpoint::from_text(&c.to_text().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn truncated_checkpoint_rejected() {
        let text = ckpt(1, 0.5).to_text().unwrap();
        let cut = &text[..text.len() - 5];
        assert!(Checkpoint::from_text(cut).is_err());
        assert!(Checkpoint::from_text("exohydro-checkpoint 9\n").is_err());
    }
}
