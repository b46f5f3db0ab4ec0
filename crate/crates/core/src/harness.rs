//! Trials and sweeps.
//!
//! A trial trains one model under one objective and records, per epoch, the
//! full-set losses and accuracies and the first-layer gradient norm. The
//! number of epochs until a stop rule first holds is the difficulty measure
//! used throughout: `epochs_to_memorize` for the capped objective, and the
//! dataset quality score as the gap between memorizing under the split
//! objective and learning under the standard one.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{
    self, apply_split, gaussian_noise_dataset, load_cifar10, load_cifar10_test, mix_noise, synthetic_blobs,
    BlobsSpec, LabeledDataset, SizeClass, SplitSource, SplitSpec,
};
use crate::error::{Error, Result};
use crate::models::{Architecture, Model, ModelConfig};
use crate::objectives::{
    accuracy, cross_entropy_value, evaluate_objective, predict, Batch, ObjectiveKind, ObjectiveSpec, EVAL_CHUNK,
};
use crate::optim::{OptimizerKind, OptimizerState};
use crate::tape::Tape;

/// Where a trial's train and test sets come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Blobs(BlobsSpec),
    Noise {
        shape: Vec<usize>,
        class_count: usize,
        sigma: f64,
    },
    /// `base` with a fraction of inputs in both sets replaced by fixed noise.
    Mixed {
        base: Box<DataSource>,
        fraction: f64,
        noise_sigma: f64,
    },
    Cifar {
        dir: PathBuf,
        split: SplitSource,
    },
    Cached {
        train: PathBuf,
        test: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSpec {
    pub source: DataSource,
    pub train_count: usize,
    pub test_count: usize,
}

/// splitmix64 finalizer, used to derive independent sub-seeds.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl DataSource {
    fn generate(&self, train_count: usize, test_count: usize, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
        let (s_train, s_test) = (derive_seed(seed, 1), derive_seed(seed, 2));
        match self {
            DataSource::Blobs(spec) => Ok((
                synthetic_blobs(train_count, spec, s_train)?,
                synthetic_blobs(test_count, spec, s_test)?,
            )),
            DataSource::Noise {
                shape,
                class_count,
                sigma,
            } => Ok((
                gaussian_noise_dataset(shape, train_count, *class_count, *sigma, s_train)?,
                gaussian_noise_dataset(shape, test_count, *class_count, *sigma, s_test)?,
            )),
            DataSource::Mixed {
                base,
                fraction,
                noise_sigma,
            } => {
                let (train, test) = base.generate(train_count, test_count, seed)?;
                Ok((
                    mix_noise(&train, *fraction, *noise_sigma, derive_seed(seed, 3))?,
                    mix_noise(&test, *fraction, *noise_sigma, derive_seed(seed, 4))?,
                ))
            }
            DataSource::Cifar { dir, split } => {
                let train = load_cifar10(dir)?;
                let test = match split {
                    SplitSource::DisjointTrainTest => load_cifar10_test(dir)?,
                    SplitSource::TrainHalved => train.clone(),
                };
                let spec = SplitSpec {
                    train_count,
                    test_count,
                    source: *split,
                };
                apply_split(&train, &test, &spec)
            }
            DataSource::Cached { train, test } => Ok((
                LabeledDataset::load(train)?.prefix(train_count)?,
                LabeledDataset::load(test)?.prefix(test_count)?,
            )),
        }
    }
}

impl DataSpec {
    pub fn new(source: DataSource, train_count: usize, test_count: usize) -> Self {
        Self {
            source,
            train_count,
            test_count,
        }
    }

    pub fn with_size(mut self, size: SizeClass) -> Self {
        (self.train_count, self.test_count) = size.counts();
        self
    }

    /// Materializes `(train, test)`; synthetic sources draw both from `seed`.
    pub fn build(&self, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
        self.source.generate(self.train_count, self.test_count, seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSettings {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            learning_rate: 1e-4,
            batch_size: 256,
        }
    }
}

/// Condition checked on full-set accuracies after every epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StopRule {
    FixedEpochs,
    TrainAccuracy { threshold: f64 },
    OverfitGap { threshold: f64 },
    /// `train_acc >= train_threshold` and `test_acc <= test_ceiling`.
    Memorized { train_threshold: f64, test_ceiling: f64 },
    /// `train_acc >= train_threshold` and `test_acc >= test_floor`.
    Generalized { train_threshold: f64, test_floor: f64 },
}

impl StopRule {
    pub fn holds(&self, train_acc: f64, test_acc: f64) -> bool {
        match *self {
            StopRule::FixedEpochs => false,
            StopRule::TrainAccuracy { threshold } => train_acc >= threshold,
            StopRule::OverfitGap { threshold } => train_acc - test_acc >= threshold,
            StopRule::Memorized {
                train_threshold,
                test_ceiling,
            } => train_acc >= train_threshold && test_acc <= test_ceiling,
            StopRule::Generalized {
                train_threshold,
                test_floor,
            } => train_acc >= train_threshold && test_acc >= test_floor,
        }
    }

    fn validate(&self) -> Result<()> {
        let values: Vec<f64> = match *self {
            StopRule::FixedEpochs => vec![],
            StopRule::TrainAccuracy { threshold } | StopRule::OverfitGap { threshold } => vec![threshold],
            StopRule::Memorized {
                train_threshold,
                test_ceiling,
            } => vec![train_threshold, test_ceiling.min(1.0)],
            StopRule::Generalized {
                train_threshold,
                test_floor,
            } => vec![train_threshold, test_floor],
        };
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Config(format!("stop rule {self:?} has a threshold outside [0, 1]")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub model: ModelConfig,
    pub objective: ObjectiveSpec,
    pub optimizer: OptimizerSettings,
    pub data: DataSpec,
    pub max_epochs: usize,
    pub stop_rule: StopRule,
    /// End the trial at the first epoch satisfying the stop rule.
    #[serde(default = "default_true")]
    pub stop_at_threshold: bool,
    pub seed: u64,
}

fn default_true() -> bool {
    true
}

impl TrialConfig {
    /// Sets the trial seed and the model initialization seed together.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.model.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        if self.optimizer.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.optimizer.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        self.objective.validate()?;
        self.stop_rule.validate()
    }
}

/// Metrics after one epoch, over the full train and test sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    pub overfit_gap: f64,
    /// Mean over the epoch's minibatch steps of the first weight layer's gradient norm.
    pub first_layer_grad_norm: f64,
}

/// Epoch count until a stop rule fired. `DidNotReach` orders after every count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpochsOutcome {
    Reached(usize),
    DidNotReach,
}

impl EpochsOutcome {
    pub fn epochs(self) -> Option<usize> {
        match self {
            EpochsOutcome::Reached(n) => Some(n),
            EpochsOutcome::DidNotReach => None,
        }
    }

    pub fn as_f64(self) -> f64 {
        self.epochs().map_or(f64::INFINITY, |n| n as f64)
    }
}

impl std::fmt::Display for EpochsOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EpochsOutcome::Reached(n) => write!(f, "{n}"),
            EpochsOutcome::DidNotReach => f.write_str("did-not-reach"),
        }
    }
}

/// Lower median.
pub fn median_outcome(outcomes: &[EpochsOutcome]) -> Option<EpochsOutcome> {
    let mut sorted = outcomes.to_vec();
    sorted.sort();
    sorted.get((sorted.len().max(1) - 1) / 2).copied()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub epochs_to_threshold: EpochsOutcome,
    pub peak_grad_norm: f64,
    pub peak_grad_epoch: usize,
    pub final_grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub rows: Vec<EpochRow>,
    pub outcome: TrialOutcome,
}

impl TrialRecord {
    pub fn last(&self) -> Option<&EpochRow> {
        self.rows.last()
    }

    fn from_rows(rows: Vec<EpochRow>, reached: Option<usize>) -> Self {
        let (peak_grad_epoch, peak_grad_norm) = rows
            .iter()
            .fold((0, f64::NEG_INFINITY), |(e, best), r| {
                if r.first_layer_grad_norm > best {
                    (r.epoch, r.first_layer_grad_norm)
                } else {
                    (e, best)
                }
            });
        let final_grad_norm = rows.last().map_or(0.0, |r| r.first_layer_grad_norm);
        Self {
            outcome: TrialOutcome {
                epochs_to_threshold: reached.map_or(EpochsOutcome::DidNotReach, EpochsOutcome::Reached),
                peak_grad_norm: peak_grad_norm.max(0.0),
                peak_grad_epoch,
                final_grad_norm,
            },
            rows,
        }
    }
}

/// Builds the trial's datasets and trains on them.
pub fn run_trial(config: &TrialConfig) -> Result<TrialRecord> {
    config.validate()?;
    let (train, test) = config.data.build(config.seed)?;
    run_trial_on(config, &train, &test)
}

fn full_metrics(model: &Model, ds: &LabeledDataset) -> Result<(f64, f64)> {
    let out = predict(model, &ds.inputs, EVAL_CHUNK)?;
    Ok((cross_entropy_value(&out, &ds.labels)?, accuracy(&out, &ds.labels)))
}

/// Trains on explicit datasets; `config.data` is ignored.
///
/// Each epoch: the objective's case is fixed from the full test-set accuracy
/// at epoch start, then the shuffled training set is traversed in minibatches
/// (paired with shuffled test minibatches when the objective reads the test
/// set), then full-set metrics are recorded.
pub fn run_trial_on(config: &TrialConfig, train: &LabeledDataset, test: &LabeledDataset) -> Result<TrialRecord> {
    train_on(config, train, test).map(|(_, record)| record)
}

/// Like [`run_trial_on`], also returning the model as it stood after the last epoch run.
pub fn train_on(config: &TrialConfig, train: &LabeledDataset, test: &LabeledDataset) -> Result<(Model, TrialRecord)> {
    config.validate()?;
    if train.is_empty() || test.is_empty() {
        return Err(Error::Config("train and test sets must be nonempty".into()));
    }
    let model_cfg = &config.model;
    if model_cfg.architecture == Architecture::Mlp && model_cfg.input_len() != train.sample_shape().iter().product::<usize>() {
        return Err(Error::Config(format!(
            "model input {:?} does not fit samples of shape {:?}",
            model_cfg.input_shape,
            train.sample_shape()
        )));
    }
    if model_cfg.class_count < train.class_count.max(test.class_count) {
        return Err(Error::Config(format!(
            "model has {} classes, data has {}",
            model_cfg.class_count, train.class_count
        )));
    }
    let mut model = Model::build(model_cfg)?;
    let mut opt = OptimizerState::new(config.optimizer.kind, config.optimizer.learning_rate);
    let mut rng = data::rng_stream(derive_seed(config.seed, 5), 3);

    let bs = config.optimizer.batch_size;
    let mut train_order: Vec<usize> = (0..train.len()).collect();
    let mut test_order: Vec<usize> = (0..test.len()).collect();
    let mut rows: Vec<EpochRow> = Vec::new();
    let mut reached = None;
    let (_, mut test_acc_now) = full_metrics(&model, test)?;

    for epoch in 1..=config.max_epochs {
        // Parameters are unchanged since the last full-set measurement.
        let branch = config.objective.branch_for(test_acc_now);
        train_order.shuffle(&mut rng);
        if config.objective.uses_test_set() {
            test_order.shuffle(&mut rng);
        }
        let mut norm_sum = 0.0;
        let mut steps = 0usize;
        for (b, chunk) in train_order.chunks(bs).enumerate() {
            let (x, y) = train.batch(chunk)?;
            let test_idx: Vec<usize> = (0..chunk.len())
                .map(|j| test_order[(b * bs + j) % test_order.len()])
                .collect();
            let (tx, ty) = if config.objective.uses_test_set() {
                test.batch(&test_idx)?
            } else {
                (x.clone(), y.clone())
            };
            let mut tape = Tape::new();
            let params = model.bind(&mut tape);
            let root = evaluate_objective(
                &config.objective,
                &model,
                &mut tape,
                &params,
                Batch::new(&x, &y),
                Batch::new(&tx, &ty),
                &branch,
            )?;
            if !tape.value(root).item()?.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    last_good_epoch: epoch - 1,
                });
            }
            tape.backward(root)?;
            model.accumulate_grads(&tape, &params)?;
            norm_sum += model.first_layer_grad_norm()?;
            steps += 1;
            opt.step(&mut model)?;
        }
        let (train_loss, train_acc) = full_metrics(&model, train)?;
        let (test_loss, test_acc) = full_metrics(&model, test)?;
        if !train_loss.is_finite() || !test_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                last_good_epoch: epoch - 1,
            });
        }
        test_acc_now = test_acc;
        rows.push(EpochRow {
            epoch,
            train_loss,
            test_loss,
            train_acc,
            test_acc,
            overfit_gap: train_acc - test_acc,
            first_layer_grad_norm: norm_sum / steps as f64,
        });
        if reached.is_none() && config.stop_rule.holds(train_acc, test_acc) {
            reached = Some(epoch);
            if config.stop_at_threshold {
                break;
            }
        }
    }
    Ok((model, TrialRecord::from_rows(rows, reached)))
}

/// Thresholds that define "memorized" for [`epochs_to_memorize`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemorizeCriterion {
    pub train_threshold: f64,
    pub slack: f64,
}

impl Default for MemorizeCriterion {
    fn default() -> Self {
        Self {
            train_threshold: 0.9,
            slack: 0.02,
        }
    }
}

/// First epoch with `train_acc >= 0.9` and `test_acc <= k + 0.02` under the capped objective.
pub fn epochs_to_memorize(config: &TrialConfig, k: f64) -> Result<EpochsOutcome> {
    epochs_to_memorize_with(config, k, MemorizeCriterion::default())
}

pub fn epochs_to_memorize_with(config: &TrialConfig, k: f64, criterion: MemorizeCriterion) -> Result<EpochsOutcome> {
    if config.objective.kind != ObjectiveKind::Capped || config.objective.k != k {
        return Err(Error::Contract(format!(
            "epochs_to_memorize needs a capped objective with k = {k}, got {:?}",
            config.objective
        )));
    }
    let mut cfg = config.clone();
    cfg.stop_rule = StopRule::Memorized {
        train_threshold: criterion.train_threshold,
        test_ceiling: k + criterion.slack,
    };
    cfg.stop_at_threshold = true;
    Ok(run_trial(&cfg)?.outcome.epochs_to_threshold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub label: String,
    pub outcomes: Vec<EpochsOutcome>,
    pub median: EpochsOutcome,
}

fn sweep_row(label: String, configs: impl Iterator<Item = TrialConfig>, k: f64) -> Result<SweepRow> {
    let outcomes = configs
        .map(|c| epochs_to_memorize(&c, k).map_err(|e| e.annotate(label.clone())))
        .collect::<Result<Vec<_>>>()?;
    let median = median_outcome(&outcomes).expect("nonempty seeds");
    Ok(SweepRow { label, outcomes, median })
}

fn check_sweep(base: &TrialConfig, seeds: &[u64], grid_len: usize) -> Result<f64> {
    if grid_len == 0 || seeds.is_empty() {
        return Err(Error::Config("sweep needs at least one grid point and one seed".into()));
    }
    if base.objective.kind != ObjectiveKind::Capped {
        return Err(Error::Contract("sweeps measure epochs_to_memorize and need a capped objective".into()));
    }
    Ok(base.objective.k)
}

/// `epochs_to_memorize` at each size class, one trial per seed, same seeds at every size.
pub fn sweep_dataset_size(base: &TrialConfig, sizes: &[SizeClass], seeds: &[u64]) -> Result<Vec<SweepRow>> {
    let k = check_sweep(base, seeds, sizes.len())?;
    sizes
        .iter()
        .map(|&size| {
            let mut cfg = base.clone();
            cfg.data = cfg.data.with_size(size);
            sweep_row(size.label().to_string(), seeds.iter().map(|&s| cfg.clone().with_seed(s)), k)
        })
        .collect()
}

/// Same as [`sweep_dataset_size`] over explicit `(train, test)` counts.
pub fn sweep_counts(base: &TrialConfig, counts: &[(usize, usize)], seeds: &[u64]) -> Result<Vec<SweepRow>> {
    let k = check_sweep(base, seeds, counts.len())?;
    counts
        .iter()
        .map(|&(train, test)| {
            let mut cfg = base.clone();
            cfg.data.train_count = train;
            cfg.data.test_count = test;
            sweep_row(format!("{train}/{test}"), seeds.iter().map(|&s| cfg.clone().with_seed(s)), k)
        })
        .collect()
}

/// `epochs_to_memorize` as the fraction of inputs replaced by noise varies.
pub fn sweep_noise_fraction(
    base: &TrialConfig,
    fractions: &[f64],
    noise_sigma: f64,
    seeds: &[u64],
) -> Result<Vec<SweepRow>> {
    let k = check_sweep(base, seeds, fractions.len())?;
    let root = match &base.data.source {
        DataSource::Mixed { base, .. } => base.as_ref().clone(),
        other => other.clone(),
    };
    fractions
        .iter()
        .map(|&fraction| {
            let mut cfg = base.clone();
            cfg.data.source = DataSource::Mixed {
                base: Box::new(root.clone()),
                fraction,
                noise_sigma,
            };
            sweep_row(format!("{fraction}"), seeds.iter().map(|&s| cfg.clone().with_seed(s)), k)
        })
        .collect()
}

/// Settings shared by the two probe trials of [`dataset_quality_score`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityProbe {
    pub model: ModelConfig,
    pub optimizer: OptimizerSettings,
    pub max_epochs: usize,
    pub train_threshold: f64,
    pub slack: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualityStatus {
    Determinate,
    /// One probe did not reach its threshold; the score is `+inf`.
    DidNotReach,
    /// Neither probe reached its threshold, or the split objective is degenerate.
    Indeterminate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityScore {
    /// Epochs to severe overfitting under the split objective minus epochs to
    /// the training threshold under the standard objective.
    pub score: f64,
    pub split_epochs: EpochsOutcome,
    pub standard_epochs: EpochsOutcome,
    pub status: QualityStatus,
}

/// Larger scores mean the data resists memorization relative to learning.
pub fn dataset_quality_score(
    train: &LabeledDataset,
    test: &LabeledDataset,
    probe: &QualityProbe,
) -> Result<QualityScore> {
    let base = TrialConfig {
        model: probe.model.clone(),
        objective: ObjectiveSpec::standard(),
        optimizer: probe.optimizer,
        data: DataSpec::new(
            DataSource::Cached {
                train: PathBuf::new(),
                test: PathBuf::new(),
            },
            train.len(),
            test.len(),
        ),
        max_epochs: probe.max_epochs,
        stop_rule: StopRule::TrainAccuracy {
            threshold: probe.train_threshold,
        },
        stop_at_threshold: true,
        seed: probe.seed,
    }
    .with_seed(probe.seed);
    let standard_epochs = run_trial_on(&base, train, test)?.outcome.epochs_to_threshold;

    // On identical sets the full-set split objective is zero at every θ.
    let degenerate = train.same_samples(test);
    let split_epochs = if degenerate {
        EpochsOutcome::DidNotReach
    } else {
        let mut split = base.clone();
        split.objective = ObjectiveSpec::split();
        split.stop_rule = StopRule::Memorized {
            train_threshold: probe.train_threshold,
            test_ceiling: test.naive_threshold() + probe.slack,
        };
        run_trial_on(&split, train, test)?.outcome.epochs_to_threshold
    };
    let (score, status) = match (split_epochs.epochs(), standard_epochs.epochs()) {
        _ if degenerate => (f64::INFINITY, QualityStatus::Indeterminate),
        (Some(s), Some(g)) => (s as f64 - g as f64, QualityStatus::Determinate),
        (None, None) => (f64::INFINITY, QualityStatus::Indeterminate),
        _ => (f64::INFINITY, QualityStatus::DidNotReach),
    };
    Ok(QualityScore {
        score,
        split_epochs,
        standard_epochs,
        status,
    })
}

pub const CSV_HEADER: [&str; 7] = [
    "epoch",
    "train_loss",
    "test_loss",
    "train_acc",
    "test_acc",
    "overfit_gap",
    "first_layer_grad_norm",
];

/// Nine significant digits.
pub fn format_real(v: f64) -> String {
    format!("{v:.8e}")
}

/// Header plus one row per epoch.
pub fn emit_csv(record: &TrialRecord, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in &record.rows {
        let fields = [
            r.epoch.to_string(),
            format_real(r.train_loss),
            format_real(r.test_loss),
            format_real(r.train_acc),
            format_real(r.test_acc),
            format_real(r.overfit_gap),
            format_real(r.first_layer_grad_norm),
        ];
        w.write_record(&fields).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    }
}

/// Parses a file written by [`emit_csv`].
pub fn read_csv(path: &Path) -> Result<Vec<EpochRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(String::from).collect();
    if header != CSV_HEADER {
        return Err(Error::Format(format!("unexpected header {header:?}")));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Format(format!("{s:?}: {e}")));
    r.records()
        .map(|rec| {
            let rec = rec.map_err(csv_err)?;
            Ok(EpochRow {
                epoch: rec[0].parse().map_err(|e| Error::Format(format!("epoch: {e}")))?,
                train_loss: num(&rec[1])?,
                test_loss: num(&rec[2])?,
                train_acc: num(&rec[3])?,
                test_acc: num(&rec[4])?,
                overfit_gap: num(&rec[5])?,
                first_layer_grad_norm: num(&rec[6])?,
            })
        })
        .collect()
}

/// Writes the resolved configuration as pretty JSON.
pub fn write_manifest<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}
