//! Parameter updates: plain gradient descent and bias-corrected Adam.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Model;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_stability: f64,
    first_moments: Vec<Vec<f64>>,
    second_moments: Vec<Vec<f64>>,
    step_count: u64,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        Self {
            kind,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps_stability: 1e-8,
            first_moments: Vec::new(),
            second_moments: Vec::new(),
            step_count: 0,
        }
    }

    pub fn sgd(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::Sgd, learning_rate)
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::Adam, learning_rate)
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.first_moments
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.second_moments
    }

    /// Applies one update with the configured rule and clears the gradients.
    pub fn step(&mut self, model: &mut Model) -> Result<()> {
        match self.kind {
            OptimizerKind::Sgd => sgd_step(self, model),
            OptimizerKind::Adam => adam_step(self, model),
        }
    }
}

fn ensure_grads(model: &Model) -> Result<()> {
    if let Some(p) = model.params().iter().find(|p| p.tensor.grad().is_none()) {
        return Err(Error::State(format!("no gradient for parameter {}", p.name)));
    }
    Ok(())
}

/// `θ ← θ − ε·∇θ` for every parameter.
pub fn sgd_step(state: &mut OptimizerState, model: &mut Model) -> Result<()> {
    ensure_grads(model)?;
    let lr = state.learning_rate;
    for p in model.params_mut() {
        let g = p.tensor.take_grad().expect("checked above");
        for (w, gi) in p.tensor.data_mut().iter_mut().zip(&g) {
            *w -= lr * gi;
        }
    }
    state.step_count += 1;
    Ok(())
}

/// Adam with bias-corrected first and second moments.
pub fn adam_step(state: &mut OptimizerState, model: &mut Model) -> Result<()> {
    ensure_grads(model)?;
    if state.first_moments.is_empty() {
        state.first_moments = model.params().iter().map(|p| vec![0.0; p.tensor.len()]).collect();
        state.second_moments = state.first_moments.clone();
    }
    if state.first_moments.len() != model.params().len() {
        return Err(Error::State("optimizer moments do not match model parameters".into()));
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    let (lr, eps) = (state.learning_rate, state.eps_stability);
    for ((p, m), v) in model
        .params_mut()
        .iter_mut()
        .zip(&mut state.first_moments)
        .zip(&mut state.second_moments)
    {
        let g = p.tensor.take_grad().expect("checked above");
        if m.len() != g.len() {
            return Err(Error::State(format!("moment shape mismatch for {}", p.name)));
        }
        for (((w, gi), mi), vi) in p.tensor.data_mut().iter_mut().zip(&g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
