//! Shared reference code for the integration tests: central differences and
//! naive loop implementations that do not go through the library kernels.

#![allow(dead_code)]

pub mod suites;

use memlab::tape::{Tape, Var};
use memlab::tensor::Tensor;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-3;
pub const FD_REL_TOL: f64 = 1e-4;
/// Denominator floor for the relative error. Below it the comparison is
/// absolute at 1e-8: an h = 1e-3 stencil carries about 1e-7·|f'''| of
/// truncation error, too much to resolve 1e-4 relative on near-zero gradients.
pub const FD_FLOOR: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Entries uniform in ±[0.1, 1]: far enough from zero that ReLU kinks are
/// never inside a finite-difference stencil.
pub fn away_from_zero(shape: &[usize], seed: u64) -> Tensor {
    let mut r = rng(seed);
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = r.random_range(0.1..1.0);
            if r.random::<bool>() { m } else { -m }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

pub fn uniform(shape: &[usize], lo: f64, hi: f64, seed: u64) -> Tensor {
    let mut r = rng(seed);
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| r.random_range(lo..hi)).collect()).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FD_FLOOR)
}

#[derive(Debug, Clone, Copy)]
pub struct GradReport {
    pub checked: usize,
    /// Coordinates left out because the stencil crossed a non-differentiable point.
    pub skipped: usize,
    pub worst: f64,
}

impl GradReport {
    pub fn passes(&self) -> bool {
        self.checked >= 100 && self.worst < FD_REL_TOL
    }
}

/// Coordinates to probe: every flat index when there are at most `quota`,
/// otherwise a seeded sample of `quota` of them.
fn pick(len: usize, quota: usize, seed: u64) -> Vec<usize> {
    if len <= quota {
        (0..len).collect()
    } else {
        sample(&mut rng(seed), len, quota).into_vec()
    }
}

/// Compares tape gradients of `build` with central differences on sampled
/// coordinates of every input. `build` must return a scalar.
pub fn check_graph<F>(inputs: &[Tensor], quota_per_input: usize, seed: u64, build: F) -> GradReport
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let eval = |vals: &[Tensor]| -> f64 {
        let mut t = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|v| t.leaf(v.clone())).collect();
        let root = build(&mut t, &vars);
        t.value(root).item().unwrap()
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|v| tape.leaf(v.clone())).collect();
    let root = build(&mut tape, &vars);
    tape.backward(root).unwrap();
    let mut report = GradReport { checked: 0, skipped: 0, worst: 0.0 };
    let mut work = inputs.to_vec();
    for (i, v) in vars.iter().enumerate() {
        let analytic = tape.grad(*v).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; inputs[i].len()]);
        for j in pick(inputs[i].len(), quota_per_input, seed ^ (i as u64 + 1)) {
            let x0 = inputs[i].data()[j];
            work[i].data_mut()[j] = x0 + FD_STEP;
            let up = eval(&work);
            work[i].data_mut()[j] = x0 - FD_STEP;
            let down = eval(&work);
            work[i].data_mut()[j] = x0;
            let numeric = (up - down) / (2.0 * FD_STEP);
            report.worst = report.worst.max(rel_err(analytic[j], numeric));
            report.checked += 1;
        }
    }
    report
}

/// Central-difference gradient check of a loss over a flat parameter vector,
/// against an analytic gradient supplied by the caller.
pub fn check_flat<F>(theta: &[f64], analytic: &[f64], quota: usize, seed: u64, loss: F) -> GradReport
where
    F: FnMut(&[f64]) -> f64,
{
    check_flat_smooth(theta, analytic, quota, seed, loss, |_, _| true)
}

/// Like [`check_flat`], but a coordinate is skipped when `same_piece(θ−h, θ+h)`
/// says the two stencil points lie on different pieces of a piecewise function.
pub fn check_flat_smooth<F, S>(
    theta: &[f64],
    analytic: &[f64],
    quota: usize,
    seed: u64,
    mut loss: F,
    mut same_piece: S,
) -> GradReport
where
    F: FnMut(&[f64]) -> f64,
    S: FnMut(&[f64], &[f64]) -> bool,
{
    let mut work = theta.to_vec();
    let mut lower = theta.to_vec();
    let mut report = GradReport { checked: 0, skipped: 0, worst: 0.0 };
    for j in pick(theta.len(), quota, seed) {
        work[j] = theta[j] + FD_STEP;
        let up = loss(&work);
        lower[j] = theta[j] - FD_STEP;
        let down = loss(&lower);
        let smooth = same_piece(&lower, &work);
        work[j] = theta[j];
        lower[j] = theta[j];
        if !smooth {
            report.skipped += 1;
            continue;
        }
        let numeric = (up - down) / (2.0 * FD_STEP);
        report.worst = report.worst.max(rel_err(analytic[j], numeric));
        report.checked += 1;
    }
    report
}

/// `C = A·B` by the textbook triple loop; row-major `m×k` and `k×n`.
pub fn naive_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut s = 0.0;
            for p in 0..k {
                s += a[i * k + p] * b[p * n + j];
            }
            c[i * n + j] = s;
        }
    }
    c
}

/// Cross-correlation over `N×C×H×W` input and `F×C×kh×kw` kernel.
pub fn naive_conv2d(input: &Tensor, kernel: &Tensor, stride: usize, padding: usize) -> Tensor {
    let (n, c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2], input.shape()[3]);
    let (f, kh, kw) = (kernel.shape()[0], kernel.shape()[2], kernel.shape()[3]);
    let oh = (h + 2 * padding - kh) / stride + 1;
    let ow = (w + 2 * padding - kw) / stride + 1;
    let x = |b: usize, ch: usize, i: isize, j: isize| -> f64 {
        if i < 0 || j < 0 || i >= h as isize || j >= w as isize {
            0.0
        } else {
            input.data()[((b * c + ch) * h + i as usize) * w + j as usize]
        }
    };
    let mut out = vec![0.0; n * f * oh * ow];
    for b in 0..n {
        for o in 0..f {
            for i in 0..oh {
                for j in 0..ow {
                    let mut s = 0.0;
                    for ch in 0..c {
                        for u in 0..kh {
                            for v in 0..kw {
                                let yi = (i * stride + u) as isize - padding as isize;
                                let xj = (j * stride + v) as isize - padding as isize;
                                s += x(b, ch, yi, xj) * kernel.data()[((o * c + ch) * kh + u) * kw + v];
                            }
                        }
                    }
                    out[((b * f + o) * oh + i) * ow + j] = s;
                }
            }
        }
    }
    Tensor::new(vec![n, f, oh, ow], out).unwrap()
}

/// `−log softmax(row)[label]`, one row at a time, via log-sum-exp.
pub fn naive_cross_entropy(rows: &[Vec<f64>], labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (row, &y) in rows.iter().zip(labels) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - row[y];
    }
    total / rows.len() as f64
}

pub fn naive_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn rows_of(t: &Tensor) -> Vec<Vec<f64>> {
    let c = *t.shape().last().unwrap();
    t.data().chunks(c).map(|r| r.to_vec()).collect()
}
