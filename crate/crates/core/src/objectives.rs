//! Training objectives over a train/test pair and the accuracy measure.
//!
//! | kind       | value                                                        |
//! |------------|--------------------------------------------------------------|
//! | `standard` | `L_train`                                                    |
//! | `split`    | `L_train − L_test`                                           |
//! | `capped`   | split while test accuracy `> k`, otherwise standard          |
//! | `targeted` | split while accuracy `> u`, `L_train + L_test` while `< l`,  |
//! |            | standard inside `[l, u]`                                     |
//!
//! The conditional cases are decided once per epoch from the full test set
//! (see [`epoch_branch`]) and the resulting [`EpochBranch`] is passed to every
//! minibatch evaluation of that epoch.

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::models::Model;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    Standard,
    Split,
    Capped,
    Targeted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    CrossEntropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub kind: ObjectiveKind,
    /// Accuracy threshold for `capped`.
    #[serde(default)]
    pub k: f64,
    /// Lower accuracy bound for `targeted`.
    #[serde(default)]
    pub l: f64,
    /// Upper accuracy bound for `targeted`.
    #[serde(default)]
    pub u: f64,
    #[serde(default)]
    pub loss: LossKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchCase {
    TrainMinusTest,
    TrainOnly,
    TrainPlusTest,
}

/// Objective case frozen for one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochBranch {
    pub active_case: BranchCase,
    pub measured_test_accuracy: f64,
}

fn unit_interval(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::Config(format!("{name} = {v} outside [0, 1]")));
    }
    Ok(())
}

impl ObjectiveSpec {
    fn of(kind: ObjectiveKind, k: f64, l: f64, u: f64) -> Self {
        Self {
            kind,
            k,
            l,
            u,
            loss: LossKind::CrossEntropy,
        }
    }

    pub fn standard() -> Self {
        Self::of(ObjectiveKind::Standard, 0.0, 0.0, 0.0)
    }

    pub fn split() -> Self {
        Self::of(ObjectiveKind::Split, 0.0, 0.0, 0.0)
    }

    pub fn capped(k: f64) -> Result<Self> {
        let s = Self::of(ObjectiveKind::Capped, k, 0.0, 0.0);
        s.validate()?;
        Ok(s)
    }

    pub fn targeted(l: f64, u: f64) -> Result<Self> {
        let s = Self::of(ObjectiveKind::Targeted, 0.0, l, u);
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        unit_interval("k", self.k)?;
        unit_interval("l", self.l)?;
        unit_interval("u", self.u)?;
        if self.kind == ObjectiveKind::Targeted && self.l > self.u {
            return Err(Error::Config(format!("targeted bounds l = {} > u = {}", self.l, self.u)));
        }
        Ok(())
    }

    /// Whether the objective ever reads the test set.
    pub fn uses_test_set(&self) -> bool {
        self.kind != ObjectiveKind::Standard
    }

    /// Case selected by a test accuracy measured at epoch start. Comparisons are strict.
    pub fn case_for(&self, test_accuracy: f64) -> BranchCase {
        match self.kind {
            ObjectiveKind::Standard => BranchCase::TrainOnly,
            ObjectiveKind::Split => BranchCase::TrainMinusTest,
            ObjectiveKind::Capped if test_accuracy > self.k => BranchCase::TrainMinusTest,
            ObjectiveKind::Capped => BranchCase::TrainOnly,
            ObjectiveKind::Targeted if test_accuracy > self.u => BranchCase::TrainMinusTest,
            ObjectiveKind::Targeted if test_accuracy < self.l => BranchCase::TrainPlusTest,
            // inside [l, u]
            ObjectiveKind::Targeted => BranchCase::TrainOnly,
        }
    }

    pub fn branch_for(&self, test_accuracy: f64) -> EpochBranch {
        EpochBranch {
            active_case: self.case_for(test_accuracy),
            measured_test_accuracy: test_accuracy,
        }
    }
}

/// Mean negative log-likelihood after a log-softmax of `output`.
pub fn cross_entropy(tape: &mut Tape, output: Var, labels: &[usize]) -> Result<Var> {
    let shape = tape.value(output).shape();
    if shape.len() != 2 || shape[1] < 2 {
        return Err(Error::Dimension(format!("cross-entropy over outputs of shape {shape:?}")));
    }
    let logp = tape.log_softmax(output)?;
    tape.nll_mean(logp, labels)
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of rows whose argmax equals the label.
pub fn accuracy(output: &Tensor, labels: &[usize]) -> f64 {
    let classes = output.shape().last().copied().unwrap_or(1);
    let correct = output
        .data()
        .chunks_exact(classes)
        .zip(labels)
        .filter(|(row, &y)| argmax(row) == y)
        .count();
    correct as f64 / labels.len() as f64
}

/// Inputs and labels of one minibatch.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub inputs: &'a Tensor,
    pub labels: &'a [usize],
}

impl<'a> Batch<'a> {
    pub fn new(inputs: &'a Tensor, labels: &'a [usize]) -> Self {
        Self { inputs, labels }
    }
}

fn batch_loss(tape: &mut Tape, model: &Model, params: &[Var], batch: Batch<'_>) -> Result<Var> {
    let x = tape.leaf(batch.inputs.clone());
    let out = model.forward_on(tape, params, x)?;
    cross_entropy(tape, out, batch.labels)
}

/// Records the objective for one minibatch pair on `tape` and returns the scalar root.
///
/// `branch` must be the one computed for this `spec` at the start of the
/// current epoch; a branch that `spec` could not have produced is rejected.
pub fn evaluate_objective(
    spec: &ObjectiveSpec,
    model: &Model,
    tape: &mut Tape,
    params: &[Var],
    train: Batch<'_>,
    test: Batch<'_>,
    branch: &EpochBranch,
) -> Result<Var> {
    let expected = spec.case_for(branch.measured_test_accuracy);
    if expected != branch.active_case {
        return Err(Error::Contract(format!(
            "{:?} objective cannot be in case {:?} at test accuracy {}",
            spec.kind, branch.active_case, branch.measured_test_accuracy
        )));
    }
    let train_loss = batch_loss(tape, model, params, train)?;
    match branch.active_case {
        BranchCase::TrainOnly => Ok(train_loss),
        BranchCase::TrainMinusTest => {
            let test_loss = batch_loss(tape, model, params, test)?;
            tape.sub(train_loss, test_loss)
        }
        BranchCase::TrainPlusTest => {
            let test_loss = batch_loss(tape, model, params, test)?;
            tape.add(train_loss, test_loss)
        }
    }
}

/// Full-set forward pass in chunks of `chunk` rows; returns `N×C` outputs.
pub fn predict(model: &Model, inputs: &Tensor, chunk: usize) -> Result<Tensor> {
    let rows = inputs.shape().first().copied().unwrap_or(0);
    let mut data = Vec::new();
    let mut start = 0;
    while start < rows {
        let end = (start + chunk.max(1)).min(rows);
        let out = model.forward(&inputs.slice_rows(start, end)?)?;
        data.extend_from_slice(out.data());
        start = end;
    }
    Tensor::new(vec![rows, model.config().class_count], data)
}

/// Mean cross-entropy of precomputed outputs (no tape).
pub fn cross_entropy_value(output: &Tensor, labels: &[usize]) -> Result<f64> {
    let mut tape = Tape::new();
    let o = tape.leaf(output.clone());
    let l = cross_entropy(&mut tape, o, labels)?;
    tape.value(l).item()
}

/// Measures test accuracy once over the full test set and freezes the case.
pub fn epoch_branch(spec: &ObjectiveSpec, model: &Model, test_set: &LabeledDataset) -> Result<EpochBranch> {
    let out = predict(model, &test_set.inputs, EVAL_CHUNK)?;
    Ok(spec.branch_for(accuracy(&out, &test_set.labels)))
}

pub(crate) const EVAL_CHUNK: usize = 1024;
