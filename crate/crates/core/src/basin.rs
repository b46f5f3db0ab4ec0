//! Basin-of-attraction geometry on a synthetic two-attractor landscape.
//!
//! Each attractor is a per-axis trapezoidal well: flat for `|x_i − c| ≤ s/2`,
//! rising linearly over the next `m_slope`, then a constant plateau. Axes are
//! combined with a max, so every basin is an axis-aligned box of side
//! `s + 2·m_slope`. The two centers sit on the main diagonal.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::rng_stream;
use crate::error::{Error, Result};
use crate::harness::{format_real, TrialRecord};

/// A ratio kept as its natural log; `value` is `exp(ln)` and may underflow to 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogValue {
    pub ln: f64,
    pub value: f64,
}

impl LogValue {
    pub fn from_ln(ln: f64) -> Self {
        Self { ln, value: ln.exp() }
    }

    pub fn log10(&self) -> f64 {
        self.ln / std::f64::consts::LN_10
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasinSpec {
    pub n: usize,
    pub s_a: f64,
    pub s_b: f64,
    pub m_slope: f64,
    pub separation: f64,
    pub slope_magnitude: f64,
}

impl BasinSpec {
    /// Flat widths chosen so the basin sides are `width_a` and `width_b`.
    pub fn from_basin_widths(n: usize, width_a: f64, width_b: f64, m_slope: f64) -> Self {
        let s_a = width_a - 2.0 * m_slope;
        let s_b = width_b - 2.0 * m_slope;
        // one unit of plateau between the boxes along every axis
        let separation = ((width_a + width_b) / 2.0 + 1.0) * (n as f64).sqrt();
        Self { n, s_a, s_b, m_slope, separation, slope_magnitude: 1.0 }
    }

    pub fn width_a(&self) -> f64 {
        self.s_a + 2.0 * self.m_slope
    }

    pub fn width_b(&self) -> f64 {
        self.s_b + 2.0 * self.m_slope
    }

    /// Per-axis offset between the centers; the Euclidean distance is `separation`.
    pub fn axis_offset(&self) -> f64 {
        self.separation / (self.n as f64).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("basin dimension must be positive".into()));
        }
        if !(self.s_a >= 0.0 && self.s_b >= 0.0) {
            return Err(Error::Config("flat widths must be non-negative".into()));
        }
        if !(self.m_slope > 0.0 && self.separation > 0.0 && self.slope_magnitude > 0.0) {
            return Err(Error::Config("slope extent, separation and slope magnitude must be positive".into()));
        }
        Ok(())
    }

    /// The boxes must not overlap for the union to be their disjoint sum.
    fn check_disjoint(&self) -> Result<()> {
        if self.axis_offset() < (self.width_a() + self.width_b()) / 2.0 {
            return Err(Error::Config(format!(
                "separation {} lets the basins overlap (need per-axis offset ≥ {})",
                self.separation,
                (self.width_a() + self.width_b()) / 2.0
            )));
        }
        Ok(())
    }
}

/// `((s_a + 2m) / (s_b + 2m))ⁿ`, the volume ratio of basin a to basin b.
pub fn analytic_basin_ratio(spec: &BasinSpec) -> LogValue {
    LogValue::from_ln(spec.n as f64 * (spec.width_a().ln() - spec.width_b().ln()))
}

/// `(s_b / (s_b + 2m))ⁿ`, the share of basin b that is flat.
pub fn stable_fraction(spec: &BasinSpec) -> LogValue {
    LogValue::from_ln(spec.n as f64 * (spec.s_b.ln() - spec.width_b().ln()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Attractor {
    A,
    B,
}

/// The piecewise-linear landscape described in the module docs.
#[derive(Debug, Clone, PartialEq)]
pub struct Landscape {
    pub spec: BasinSpec,
}

impl Landscape {
    pub fn new(spec: BasinSpec) -> Result<Self> {
        spec.validate()?;
        spec.check_disjoint()?;
        Ok(Self { spec })
    }

    fn center(&self, which: Attractor) -> f64 {
        match which {
            Attractor::A => 0.0,
            Attractor::B => self.spec.axis_offset(),
        }
    }

    fn flat(&self, which: Attractor) -> f64 {
        match which {
            Attractor::A => self.spec.s_a,
            Attractor::B => self.spec.s_b,
        }
    }

    pub fn plateau(&self) -> f64 {
        self.spec.slope_magnitude * self.spec.m_slope
    }

    /// Largest per-axis excess beyond the flat region and the axis attaining it.
    fn excess(&self, x: &[f64], which: Attractor) -> (f64, usize) {
        let c = self.center(which);
        let half = self.flat(which) / 2.0;
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, xi) in x.iter().enumerate() {
            let e = (xi - c).abs() - half;
            if e > best.0 {
                best = (e, i);
            }
        }
        best
    }

    fn well(&self, x: &[f64], which: Attractor) -> f64 {
        let (e, _) = self.excess(x, which);
        self.spec.slope_magnitude * e.clamp(0.0, self.spec.m_slope)
    }

    pub fn loss(&self, x: &[f64]) -> f64 {
        self.well(x, Attractor::A).min(self.well(x, Attractor::B))
    }

    /// Subgradient; zero on the flat bottoms and on the plateau.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        let which = if self.well(x, Attractor::A) <= self.well(x, Attractor::B) { Attractor::A } else { Attractor::B };
        let (e, axis) = self.excess(x, which);
        if e > 0.0 && e < self.spec.m_slope {
            g[axis] = self.spec.slope_magnitude * (x[axis] - self.center(which)).signum();
        }
        g
    }

    /// Attractor whose flat region contains `x`, if any.
    pub fn classify(&self, x: &[f64]) -> Option<Attractor> {
        if self.excess(x, Attractor::A).0 <= 0.0 {
            Some(Attractor::A)
        } else if self.excess(x, Attractor::B).0 <= 0.0 {
            Some(Attractor::B)
        } else {
            None
        }
    }

    /// Gradient descent `x ← x − ε·∇L` until the gradient vanishes.
    pub fn descend(&self, x: &mut [f64], descent: &DescentSettings) -> Option<Attractor> {
        for _ in 0..descent.max_steps {
            let g = self.gradient(x);
            if g.iter().all(|v| *v == 0.0) {
                return self.classify(x);
            }
            for (xi, gi) in x.iter_mut().zip(&g) {
                *xi -= descent.step_size * gi;
            }
        }
        if self.gradient(x).iter().all(|v| *v == 0.0) {
            self.classify(x)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescentSettings {
    pub step_size: f64,
    pub max_steps: usize,
}

impl Default for DescentSettings {
    fn default() -> Self {
        Self { step_size: 0.1, max_steps: 10_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleRegion {
    /// Uniform over the union of both basins.
    BasinUnion,
    /// Uniform over the flat bottom of attractor b.
    FlatB,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BasinEstimate {
    pub samples: usize,
    pub count_a: usize,
    pub count_b: usize,
    pub count_neither: usize,
    pub fraction_a: f64,
    pub fraction_b: f64,
    pub fraction_neither: f64,
}

impl BasinEstimate {
    /// Binomial standard error of `fraction_a`.
    pub fn std_error_a(&self) -> f64 {
        (self.fraction_a * (1.0 - self.fraction_a) / self.samples as f64).sqrt()
    }
}

pub fn monte_carlo_basin(
    spec: &BasinSpec,
    samples: usize,
    descent: &DescentSettings,
    region: SampleRegion,
    seed: u64,
) -> Result<BasinEstimate> {
    let land = Landscape::new(*spec)?;
    if samples == 0 {
        return Err(Error::Config("samples must be positive".into()));
    }
    if !(descent.step_size > 0.0) {
        return Err(Error::Config("step size must be positive".into()));
    }
    if !(descent.step_size * spec.slope_magnitude < spec.s_a.min(spec.s_b)) {
        return Err(Error::Config("step size times slope must be below both flat widths".into()));
    }
    // P(start in a) = V_a / (V_a + V_b) = r / (1 + r), computed from the log ratio
    let ln_r = analytic_basin_ratio(spec).ln;
    let p_a = 1.0 / (1.0 + (-ln_r).exp());
    let mut rng = rng_stream(seed, 9);
    let mut counts = [0usize; 3];
    let mut x = vec![0.0; spec.n];
    for _ in 0..samples {
        let (center, side) = match region {
            SampleRegion::BasinUnion => {
                if rng.random::<f64>() < p_a {
                    (land.center(Attractor::A), spec.width_a())
                } else {
                    (land.center(Attractor::B), spec.width_b())
                }
            }
            SampleRegion::FlatB => (land.center(Attractor::B), spec.s_b),
        };
        for xi in x.iter_mut() {
            *xi = center + side * (rng.random::<f64>() - 0.5);
        }
        match land.descend(&mut x, descent) {
            Some(Attractor::A) => counts[0] += 1,
            Some(Attractor::B) => counts[1] += 1,
            None => counts[2] += 1,
        }
    }
    let f = |c: usize| c as f64 / samples as f64;
    Ok(BasinEstimate {
        samples,
        count_a: counts[0],
        count_b: counts[1],
        count_neither: counts[2],
        fraction_a: f(counts[0]),
        fraction_b: f(counts[1]),
        fraction_neither: f(counts[2]),
    })
}

/// One row per dimension: `n, analytic_log_ratio, mc_fraction_a, mc_fraction_b, stderr`.
pub fn write_basin_csv(rows: &[(BasinSpec, BasinEstimate)], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(e.to_string()))?;
    w.write_record(["n", "analytic_log_ratio", "mc_fraction_a", "mc_fraction_b", "stderr"])
        .map_err(|e| Error::Format(e.to_string()))?;
    for (spec, est) in rows {
        w.write_record([
            spec.n.to_string(),
            format_real(analytic_basin_ratio(spec).ln),
            format_real(est.fraction_a),
            format_real(est.fraction_b),
            format_real(est.std_error_a()),
        ])
        .map_err(|e| Error::Format(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SetShape {
    /// `[0, s_1] × … × [0, s_n]`.
    AxisBox { sides: Vec<f64> },
    /// Closed ball of the given radius about the origin.
    Ball { radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetSpec {
    pub shape: SetShape,
    pub n: usize,
}

/// Volume of the unit ball in `n` dimensions.
pub fn unit_ball_volume(n: usize) -> f64 {
    let (mut even, mut odd) = (1.0, 2.0);
    if n == 0 {
        return even;
    }
    for k in 2..=n {
        if k % 2 == 0 {
            even *= 2.0 * PI / k as f64;
        } else {
            odd *= 2.0 * PI / k as f64;
        }
    }
    if n % 2 == 0 {
        even
    } else {
        odd
    }
}

impl SetSpec {
    pub fn cube(n: usize, side: f64) -> Self {
        Self { shape: SetShape::AxisBox { sides: vec![side; n] }, n }
    }

    pub fn boxed(sides: Vec<f64>) -> Self {
        let n = sides.len();
        Self { shape: SetShape::AxisBox { sides }, n }
    }

    pub fn ball(n: usize, radius: f64) -> Self {
        Self { shape: SetShape::Ball { radius }, n }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("set dimension must be positive".into()));
        }
        match &self.shape {
            SetShape::AxisBox { sides } => {
                if sides.len() != self.n {
                    return Err(Error::Dimension(format!("{} sides for dimension {}", sides.len(), self.n)));
                }
                if sides.iter().any(|s| !(*s > 0.0)) {
                    return Err(Error::Config("box sides must be positive".into()));
                }
            }
            SetShape::Ball { radius } => {
                if !(*radius > 0.0) {
                    return Err(Error::Config("ball radius must be positive".into()));
                }
            }
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        match &self.shape {
            SetShape::AxisBox { sides } => sides.iter().product(),
            SetShape::Ball { radius } => unit_ball_volume(self.n) * radius.powi(self.n as i32),
        }
    }

    /// Per-axis `(lo, hi)` of the smallest enclosing box.
    fn bounds(&self) -> Vec<(f64, f64)> {
        match &self.shape {
            SetShape::AxisBox { sides } => sides.iter().map(|s| (0.0, *s)).collect(),
            SetShape::Ball { radius } => vec![(-radius, *radius); self.n],
        }
    }
}

/// Membership in `A + B` for the shapes above.
fn in_sum(a: &SetSpec, b: &SetSpec, x: &[f64]) -> bool {
    match (&a.shape, &b.shape) {
        (SetShape::AxisBox { sides: s }, SetShape::AxisBox { sides: t }) => {
            x.iter().zip(s.iter().zip(t)).all(|(xi, (si, ti))| *xi >= 0.0 && *xi <= si + ti)
        }
        (SetShape::Ball { radius: r }, SetShape::Ball { radius: q }) => {
            x.iter().map(|v| v * v).sum::<f64>() <= (r + q) * (r + q)
        }
        (SetShape::AxisBox { sides }, SetShape::Ball { radius }) | (SetShape::Ball { radius }, SetShape::AxisBox { sides }) => {
            // distance from x to the box is at most the radius
            let d2: f64 = x
                .iter()
                .zip(sides)
                .map(|(xi, s)| {
                    let d = if *xi < 0.0 {
                        -xi
                    } else if *xi > *s {
                        xi - s
                    } else {
                        0.0
                    };
                    d * d
                })
                .sum();
            d2 <= radius * radius
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VolumeMethod {
    Analytic,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BrunnMinkowski {
    pub lhs: f64,
    pub rhs: f64,
    /// Standard error of `lhs`; zero when analytic.
    pub lhs_std_error: f64,
    pub sum_volume: f64,
    pub method: VolumeMethod,
    pub holds: bool,
}

impl BrunnMinkowski {
    /// `lhs − rhs` in units of the Monte-Carlo standard error (infinite when analytic).
    pub fn margin_in_std_errors(&self) -> f64 {
        if self.lhs_std_error == 0.0 {
            if self.lhs > self.rhs {
                f64::INFINITY
            } else {
                0.0
            }
        } else {
            (self.lhs - self.rhs) / self.lhs_std_error
        }
    }
}

/// Monte-Carlo estimate of `μ(A + B)` over the enclosing box; returns (volume, std error).
pub fn monte_carlo_sum_volume(a: &SetSpec, b: &SetSpec, samples: usize, seed: u64) -> Result<(f64, f64)> {
    check_pair(a, b)?;
    if samples == 0 {
        return Err(Error::Config("samples must be positive".into()));
    }
    let bounds: Vec<(f64, f64)> =
        a.bounds().iter().zip(b.bounds()).map(|((al, ah), (bl, bh))| (al + bl, ah + bh)).collect();
    let box_volume: f64 = bounds.iter().map(|(l, h)| h - l).product();
    let mut rng = rng_stream(seed, 11);
    let mut x = vec![0.0; a.n];
    let mut hits = 0usize;
    for _ in 0..samples {
        for (xi, (l, h)) in x.iter_mut().zip(&bounds) {
            *xi = l + (h - l) * rng.random::<f64>();
        }
        if in_sum(a, b, &x) {
            hits += 1;
        }
    }
    let p = hits as f64 / samples as f64;
    Ok((box_volume * p, box_volume * (p * (1.0 - p) / samples as f64).sqrt()))
}

fn check_pair(a: &SetSpec, b: &SetSpec) -> Result<()> {
    a.validate()?;
    b.validate()?;
    if a.n != b.n {
        return Err(Error::Dimension(format!("sets in dimensions {} and {}", a.n, b.n)));
    }
    Ok(())
}

/// `μ(A + B)^{1/n}` against `μ(A)^{1/n} + μ(B)^{1/n}`. Same-kind pairs are
/// exact; a box with a ball is sampled.
pub fn brunn_minkowski_check(a: &SetSpec, b: &SetSpec, samples: usize, seed: u64) -> Result<BrunnMinkowski> {
    check_pair(a, b)?;
    let n = a.n as f64;
    let rhs = a.volume().powf(1.0 / n) + b.volume().powf(1.0 / n);
    let (sum_volume, se, method) = match (&a.shape, &b.shape) {
        (SetShape::AxisBox { sides: s }, SetShape::AxisBox { sides: t }) => {
            (s.iter().zip(t).map(|(x, y)| x + y).product(), 0.0, VolumeMethod::Analytic)
        }
        (SetShape::Ball { radius: r }, SetShape::Ball { radius: q }) => {
            (SetSpec::ball(a.n, r + q).volume(), 0.0, VolumeMethod::Analytic)
        }
        _ => {
            let (v, se) = monte_carlo_sum_volume(a, b, samples, seed)?;
            (v, se, VolumeMethod::MonteCarlo)
        }
    };
    Ok(finish(sum_volume, se, rhs, n, method))
}

/// Same comparison with `μ(A + B)` always sampled.
pub fn brunn_minkowski_monte_carlo(a: &SetSpec, b: &SetSpec, samples: usize, seed: u64) -> Result<BrunnMinkowski> {
    check_pair(a, b)?;
    let n = a.n as f64;
    let rhs = a.volume().powf(1.0 / n) + b.volume().powf(1.0 / n);
    let (v, se) = monte_carlo_sum_volume(a, b, samples, seed)?;
    Ok(finish(v, se, rhs, n, VolumeMethod::MonteCarlo))
}

fn finish(sum_volume: f64, se: f64, rhs: f64, n: f64, method: VolumeMethod) -> BrunnMinkowski {
    let lhs = sum_volume.powf(1.0 / n);
    // delta method: d(v^{1/n}) = v^{1/n − 1}/n · dv
    let lhs_se = if se == 0.0 { 0.0 } else { sum_volume.powf(1.0 / n - 1.0) / n * se };
    let slack = 3.0 * lhs_se + 1e-12 * rhs;
    BrunnMinkowski { lhs, rhs, lhs_std_error: lhs_se, sum_volume, method, holds: lhs >= rhs - slack }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceSummary {
    pub peak_epoch: usize,
    pub peak_value: f64,
    pub final_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub holds: bool,
    pub tie: bool,
}

impl Verdict {
    fn greater(a: f64, b: f64) -> Self {
        Self { holds: a > b, tie: a == b }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceComparison {
    pub standard: Option<TraceSummary>,
    pub split: Option<TraceSummary>,
    pub common_epochs: usize,
    /// True when the records had different lengths and were cut to the shorter one.
    pub truncated: bool,
    pub peak_standard_above_split: Verdict,
    pub final_standard_below_split: Verdict,
}

fn summarize(trace: &[(usize, f64)]) -> Option<TraceSummary> {
    let last = trace.last()?;
    let mut peak = trace[0];
    for &(e, v) in trace {
        if v > peak.1 {
            peak = (e, v);
        }
    }
    Some(TraceSummary { peak_epoch: peak.0, peak_value: peak.1, final_value: last.1 })
}

/// Peak and final first-layer gradient norms over the epochs both records share.
pub fn grad_norm_trace_compare(standard: &TrialRecord, split: &TrialRecord) -> TraceComparison {
    let common = standard.rows.len().min(split.rows.len());
    let trace = |r: &TrialRecord| -> Vec<(usize, f64)> {
        r.rows[..common].iter().map(|row| (row.epoch, row.first_layer_grad_norm)).collect()
    };
    let s = summarize(&trace(standard));
    let p = summarize(&trace(split));
    let none = Verdict { holds: false, tie: false };
    let (peak, fin) = match (s, p) {
        (Some(s), Some(p)) => (Verdict::greater(s.peak_value, p.peak_value), Verdict::greater(p.final_value, s.final_value)),
        _ => (none, none),
    };
    TraceComparison {
        standard: s,
        split: p,
        common_epochs: common,
        truncated: standard.rows.len() != split.rows.len(),
        peak_standard_above_split: peak,
        final_standard_below_split: fin,
    }
}
