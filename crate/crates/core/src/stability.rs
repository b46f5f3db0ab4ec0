//! Parameter-perturbation stability and the single-layer input-shift
//! construction.
//!
//! A configuration θ is δ-stable at radius r when every sampled unit
//! direction ĉ satisfies `|J(θ) − J(θ + r·ĉ)| < δ`. The radius reported is the
//! longest prefix of the grid on which that holds.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{rng_stream, LabeledDataset};
use crate::error::{Error, Result};
use crate::harness::format_real;
use crate::models::Model;
use crate::objectives::{cross_entropy_value, predict, EVAL_CHUNK};

pub const DEFAULT_DIRECTION_COUNT: usize = 64;
/// Above this condition number a weight matrix is treated as singular.
pub const MAX_CONDITION: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityProbe {
    pub delta: f64,
    #[serde(default = "default_direction_count")]
    pub direction_count: usize,
    pub radius_grid: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
}

fn default_direction_count() -> usize {
    DEFAULT_DIRECTION_COUNT
}

impl StabilityProbe {
    pub fn new(delta: f64, radius_grid: Vec<f64>, seed: u64) -> Self {
        Self { delta, direction_count: DEFAULT_DIRECTION_COUNT, radius_grid, seed }
    }

    pub fn with_direction_count(mut self, count: usize) -> Self {
        self.direction_count = count;
        self
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    /// Geometric grid of `count` radii from `lo` to `hi` inclusive.
    pub fn geometric_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
        if count == 1 {
            return vec![lo];
        }
        let ratio = (hi / lo).ln() / (count - 1) as f64;
        (0..count).map(|i| lo * (ratio * i as f64).exp()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(Error::Config(format!("delta must be positive, got {}", self.delta)));
        }
        if self.direction_count == 0 {
            return Err(Error::Config("direction_count must be at least 1".into()));
        }
        if self.radius_grid.is_empty() {
            return Err(Error::Config("radius grid is empty".into()));
        }
        if self.radius_grid.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
            return Err(Error::Config("radius grid entries must be positive".into()));
        }
        if self.radius_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("radius grid must be strictly increasing".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub stability_radius: f64,
    pub base_loss: f64,
    pub radius_grid: Vec<f64>,
    /// `deltas[i][j]`: absolute loss change at `radius_grid[i]` along direction `j`.
    pub deltas: Vec<Vec<f64>>,
}

impl StabilityReport {
    pub fn max_delta_at(&self, radius_index: usize) -> f64 {
        self.deltas[radius_index].iter().cloned().fold(0.0, f64::max)
    }
}

/// Unit directions in `dim` dimensions. Directions are drawn one after
/// another from a single stream, so a smaller count is a prefix of a larger one.
pub fn unit_directions(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_stream(seed, 7);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-300 {
            out.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    out
}

/// Stability measurement for an arbitrary loss over a flat parameter vector.
pub fn stability_radius_of<F>(mut loss: F, theta: &[f64], probe: &StabilityProbe) -> Result<StabilityReport>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    probe.validate()?;
    if theta.is_empty() {
        return Err(Error::Dimension("empty parameter vector".into()));
    }
    let base = loss(theta)?;
    let directions = unit_directions(theta.len(), probe.direction_count, probe.seed);
    let mut point = vec![0.0; theta.len()];
    let mut deltas = Vec::with_capacity(probe.radius_grid.len());
    for &r in &probe.radius_grid {
        let mut row = Vec::with_capacity(directions.len());
        for dir in &directions {
            for ((p, t), u) in point.iter_mut().zip(theta).zip(dir) {
                *p = t + r * u;
            }
            row.push((loss(&point)? - base).abs());
        }
        deltas.push(row);
    }
    let mut radius = 0.0;
    for (r, row) in probe.radius_grid.iter().zip(&deltas) {
        // strict: a change of exactly δ is not stable
        if row.iter().all(|d| *d < probe.delta) {
            radius = *r;
        } else {
            break;
        }
    }
    Ok(StabilityReport { stability_radius: radius, base_loss: base, radius_grid: probe.radius_grid.clone(), deltas })
}

/// Mean cross-entropy of the model's outputs on `dataset`, perturbed in parameter space.
pub fn stability_radius(model: &Model, dataset: &LabeledDataset, probe: &StabilityProbe) -> Result<StabilityReport> {
    let mut work = model.clone();
    let theta = model.flat_params();
    stability_radius_of(
        |p| {
            work.set_flat_params(p)?;
            let out = predict(&work, &dataset.inputs, EVAL_CHUNK)?;
            cross_entropy_value(&out, &dataset.labels)
        },
        &theta,
        probe,
    )
}

/// Both reports with the same probe, generalizing model first.
pub fn compare_stability(
    generalizing: &Model,
    memorizing: &Model,
    dataset: &LabeledDataset,
    probe: &StabilityProbe,
) -> Result<(StabilityReport, StabilityReport)> {
    Ok((stability_radius(generalizing, dataset, probe)?, stability_radius(memorizing, dataset, probe)?))
}

/// Long-format CSV: one row per (model, radius, direction).
pub fn write_stability_csv(reports: &[(&str, &StabilityReport)], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(e.to_string()))?;
    w.write_record(["model", "radius", "direction", "loss_delta", "stability_radius"])
        .map_err(|e| Error::Format(e.to_string()))?;
    for (label, rep) in reports {
        for (r, row) in rep.radius_grid.iter().zip(&rep.deltas) {
            for (j, d) in row.iter().enumerate() {
                w.write_record([
                    label.to_string(),
                    format_real(*r),
                    j.to_string(),
                    format_real(*d),
                    format_real(rep.stability_radius),
                ])
                .map_err(|e| Error::Format(e.to_string()))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerActivation {
    Identity,
    Tanh,
}

impl LayerActivation {
    fn apply(self, z: f64) -> f64 {
        match self {
            LayerActivation::Identity => z,
            LayerActivation::Tanh => z.tanh(),
        }
    }

    fn invert(self, y: f64) -> Result<f64> {
        match self {
            LayerActivation::Identity => Ok(y),
            LayerActivation::Tanh if y.abs() < 1.0 => Ok(y.atanh()),
            LayerActivation::Tanh => Err(Error::Singular(format!("tanh output {y} has no preimage"))),
        }
    }
}

/// `O(a) = f(W a + b)` with a square `W`, scored by cross-entropy on `O`.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleLayer {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub activation: LayerActivation,
}

/// Additive change to a [`SingleLayer`]'s parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamShift {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl ParamShift {
    pub fn zeros(n: usize) -> Self {
        Self { weight: DMatrix::zeros(n, n), bias: DVector::zeros(n) }
    }
}

impl SingleLayer {
    pub fn new(weight: DMatrix<f64>, bias: DVector<f64>, activation: LayerActivation) -> Result<Self> {
        if !weight.is_square() || weight.nrows() != bias.len() {
            return Err(Error::Dimension(format!(
                "weight {}x{} with bias {}",
                weight.nrows(),
                weight.ncols(),
                bias.len()
            )));
        }
        Ok(Self { weight, bias, activation })
    }

    pub fn output(&self, input: &DVector<f64>) -> DVector<f64> {
        (&self.weight * input + &self.bias).map(|z| self.activation.apply(z))
    }

    /// Cross-entropy of a log-softmax over the outputs.
    pub fn loss(&self, input: &DVector<f64>, label: usize) -> f64 {
        let o = self.output(input);
        let max = o.max();
        let lse = max + o.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        lse - o[label]
    }

    pub fn shifted(&self, shift: &ParamShift) -> Self {
        Self { weight: &self.weight + &shift.weight, bias: &self.bias + &shift.bias, activation: self.activation }
    }

    /// Ratio of extreme singular values; infinite when `W` is singular.
    pub fn condition_number(&self) -> f64 {
        let sv = self.weight.clone().singular_values();
        let max = sv.max();
        let min = sv.min();
        if min == 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }
}

/// Input change `d` with `O(a + d, θ) = O(a, θ + c)`: take the shifted output
/// `Y`, pull it back through the unshifted layer and subtract `a`.
pub fn equivalent_input_shift(layer: &SingleLayer, shift: &ParamShift, input: &DVector<f64>) -> Result<DVector<f64>> {
    let n = layer.weight.nrows();
    if shift.weight.shape() != layer.weight.shape() || shift.bias.len() != n || input.len() != n {
        return Err(Error::Dimension("shift or input does not match the layer".into()));
    }
    let cond = layer.condition_number();
    if !(cond < MAX_CONDITION) {
        return Err(Error::Singular(format!("condition number {cond:e}")));
    }
    let target = layer.shifted(shift).output(input);
    let pre = target.iter().map(|y| layer.activation.invert(*y)).collect::<Result<Vec<_>>>()?;
    let rhs = DVector::from_vec(pre) - &layer.bias;
    let preimage = layer
        .weight
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("weight matrix is not invertible".into()))?;
    Ok(preimage - input)
}
