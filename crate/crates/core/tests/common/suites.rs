//! Gradient and identity suites shared by the focused tests and the
//! acceptance target.

#![allow(dead_code)]

use memlab::models::{Activation, Architecture, Model, ModelConfig};
use memlab::objectives::{evaluate_objective, Batch, ObjectiveSpec};
use memlab::tape::{Tape, Var};
use memlab::tensor::Tensor;
use rand::Rng;

use super::{away_from_zero, check_flat_smooth, check_graph, rng, uniform, GradReport};

fn weighted_sum(t: &mut Tape, x: Var, seed: u64) -> Var {
    let w = uniform(t.value(x).shape(), -1.0, 1.0, seed);
    let w = t.leaf(w);
    let m = t.mul(x, w).unwrap();
    t.sum(m)
}

const QUOTA: usize = 150;

/// One report per differentiable op.
pub fn op_gradients() -> Vec<(&'static str, GradReport)> {
    let a = away_from_zero(&[12, 10], 1);
    let b = away_from_zero(&[12, 10], 2);
    let mut out = Vec::new();
    out.push((
        "matmul",
        check_graph(&[away_from_zero(&[10, 12], 3), away_from_zero(&[12, 9], 4)], QUOTA, 1, |t, v| {
            let y = t.matmul(v[0], v[1]).unwrap();
            weighted_sum(t, y, 10)
        }),
    ));
    out.push((
        "add",
        check_graph(&[a.clone(), b.clone()], QUOTA, 2, |t, v| {
            let y = t.add(v[0], v[1]).unwrap();
            weighted_sum(t, y, 11)
        }),
    ));
    out.push((
        "sub",
        check_graph(&[a.clone(), b.clone()], QUOTA, 3, |t, v| {
            let y = t.sub(v[0], v[1]).unwrap();
            weighted_sum(t, y, 12)
        }),
    ));
    out.push((
        "mul",
        check_graph(&[a.clone(), b.clone()], QUOTA, 4, |t, v| {
            let y = t.mul(v[0], v[1]).unwrap();
            weighted_sum(t, y, 13)
        }),
    ));
    out.push((
        "scale",
        check_graph(&[a.clone()], QUOTA, 5, |t, v| {
            let y = t.scale(v[0], -1.7).unwrap();
            weighted_sum(t, y, 14)
        }),
    ));
    out.push((
        "add_row_bias",
        check_graph(&[a.clone(), away_from_zero(&[10], 5)], QUOTA, 6, |t, v| {
            let y = t.add_row_bias(v[0], v[1]).unwrap();
            weighted_sum(t, y, 15)
        }),
    ));
    out.push((
        "add_channel_bias",
        check_graph(&[away_from_zero(&[2, 3, 5, 5], 6), away_from_zero(&[3], 7)], QUOTA, 7, |t, v| {
            let y = t.add_channel_bias(v[0], v[1]).unwrap();
            weighted_sum(t, y, 16)
        }),
    ));
    out.push((
        "relu",
        check_graph(&[a.clone()], QUOTA, 8, |t, v| {
            let y = t.relu(v[0]).unwrap();
            weighted_sum(t, y, 17)
        }),
    ));
    out.push((
        "tanh",
        check_graph(&[a.clone()], QUOTA, 9, |t, v| {
            let y = t.tanh(v[0]).unwrap();
            weighted_sum(t, y, 18)
        }),
    ));
    out.push((
        "softmax",
        check_graph(&[a.clone()], QUOTA, 10, |t, v| {
            let y = t.softmax(v[0]).unwrap();
            weighted_sum(t, y, 19)
        }),
    ));
    out.push((
        "log_softmax",
        check_graph(&[a.clone()], QUOTA, 11, |t, v| {
            let y = t.log_softmax(v[0]).unwrap();
            weighted_sum(t, y, 20)
        }),
    ));
    out.push((
        "conv2d",
        check_graph(&[away_from_zero(&[2, 2, 6, 6], 8), away_from_zero(&[3, 2, 3, 3], 9)], QUOTA, 12, |t, v| {
            let y = t.conv2d(v[0], v[1], 1, 0).unwrap();
            weighted_sum(t, y, 21)
        }),
    ));
    out.push((
        "conv2d_strided_padded",
        check_graph(&[away_from_zero(&[2, 3, 7, 7], 10), away_from_zero(&[4, 3, 3, 3], 11)], QUOTA, 13, |t, v| {
            let y = t.conv2d(v[0], v[1], 2, 1).unwrap();
            weighted_sum(t, y, 22)
        }),
    ));
    out.push((
        "reshape",
        check_graph(&[a.clone()], QUOTA, 14, |t, v| {
            let y = t.reshape(v[0], &[4, 30]).unwrap();
            weighted_sum(t, y, 23)
        }),
    ));
    out.push((
        "flatten",
        check_graph(&[away_from_zero(&[2, 3, 4, 5], 12)], QUOTA, 15, |t, v| {
            let y = t.flatten(v[0]).unwrap();
            weighted_sum(t, y, 24)
        }),
    ));
    out.push((
        "sum",
        check_graph(&[a.clone()], QUOTA, 16, |t, v| {
            let y = t.mul(v[0], v[0]).unwrap();
            t.sum(y)
        }),
    ));
    out.push((
        "mean",
        check_graph(&[a.clone()], QUOTA, 17, |t, v| {
            let y = t.mul(v[0], v[0]).unwrap();
            t.mean(y)
        }),
    ));
    let labels: Vec<usize> = (0..12).map(|i| (i * 7) % 10).collect();
    out.push((
        "nll_mean",
        check_graph(&[a.clone()], QUOTA, 18, move |t, v| {
            let y = t.mul(v[0], v[0]).unwrap();
            t.nll_mean(y, &labels).unwrap()
        }),
    ));
    out
}

pub struct ObjectiveFixture {
    pub model: Model,
    pub train_x: Tensor,
    pub train_y: Vec<usize>,
    pub test_x: Tensor,
    pub test_y: Vec<usize>,
}

impl ObjectiveFixture {
    pub fn new(config: &ModelConfig, batch: usize, seed: u64) -> Self {
        let model = Model::build(config).unwrap();
        let mut shape = vec![batch];
        shape.extend_from_slice(&config.input_shape);
        let mut r = rng(seed);
        let c = config.class_count;
        Self {
            model,
            train_x: uniform(&shape, -1.0, 1.0, seed + 1),
            train_y: (0..batch).map(|_| r.random_range(0..c)).collect(),
            test_x: uniform(&shape, -1.0, 1.0, seed + 2),
            test_y: (0..batch).map(|_| r.random_range(0..c)).collect(),
        }
    }

    /// Objective value at `theta` under the branch chosen for `accuracy`.
    pub fn value(&self, spec: &ObjectiveSpec, accuracy: f64, theta: &[f64]) -> f64 {
        let mut m = self.model.clone();
        m.set_flat_params(theta).unwrap();
        let mut t = Tape::new();
        let p = m.bind(&mut t);
        let root = evaluate_objective(
            spec,
            &m,
            &mut t,
            &p,
            Batch::new(&self.train_x, &self.train_y),
            Batch::new(&self.test_x, &self.test_y),
            &spec.branch_for(accuracy),
        )
        .unwrap();
        t.value(root).item().unwrap()
    }

    /// Signs of every first-layer ReLU input over both batches, for
    /// single-hidden-layer ReLU MLPs; empty for anything else.
    pub fn relu_pattern(&self, theta: &[f64]) -> Vec<bool> {
        let cfg = self.model.config();
        if cfg.architecture != Architecture::Mlp || cfg.activation != Activation::Relu || cfg.hidden.len() != 1 {
            return Vec::new();
        }
        let mut m = self.model.clone();
        m.set_flat_params(theta).unwrap();
        let w = m.param("fc1.weight").unwrap();
        let b = m.param("fc1.bias").unwrap();
        let (d, h) = (w.shape()[0], w.shape()[1]);
        let mut signs = Vec::new();
        for x in [&self.train_x, &self.test_x] {
            for row in x.data().chunks(d) {
                for j in 0..h {
                    let z: f64 = b.data()[j] + (0..d).map(|i| row[i] * w.data()[i * h + j]).sum::<f64>();
                    signs.push(z > 0.0);
                }
            }
        }
        signs
    }

    pub fn gradient(&self, spec: &ObjectiveSpec, accuracy: f64) -> Vec<f64> {
        let mut t = Tape::new();
        let p = self.model.bind(&mut t);
        let root = evaluate_objective(
            spec,
            &self.model,
            &mut t,
            &p,
            Batch::new(&self.train_x, &self.train_y),
            Batch::new(&self.test_x, &self.test_y),
            &spec.branch_for(accuracy),
        )
        .unwrap();
        t.backward(root).unwrap();
        p.iter()
            .zip(self.model.params())
            .flat_map(|(v, param)| t.grad(*v).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; param.tensor.len()]))
            .collect()
    }
}

pub fn gradcheck_models() -> Vec<(&'static str, ModelConfig)> {
    vec![
        ("mlp_relu_head", ModelConfig::mlp(8, &[16], 4).with_seed(3)),
        ("mlp_tanh_nohead", ModelConfig::mlp(8, &[16], 4).with_activation(Activation::Tanh).with_softmax_head(false).with_seed(4)),
        (
            "convnet_tanh_head",
            ModelConfig {
                architecture: Architecture::Convnet5,
                input_shape: vec![2, 6, 6],
                class_count: 3,
                hidden: vec![3, 4],
                activation: Activation::Tanh,
                include_softmax_head: true,
                seed: 5,
            },
        ),
    ]
}

/// Every objective and every branch it can take, as (label, spec, measured accuracy).
pub fn objective_branches() -> Vec<(&'static str, ObjectiveSpec, f64)> {
    vec![
        ("standard", ObjectiveSpec::standard(), 0.5),
        ("split", ObjectiveSpec::split(), 0.5),
        ("capped_below_k", ObjectiveSpec::capped(0.3).unwrap(), 0.2),
        ("capped_above_k", ObjectiveSpec::capped(0.3).unwrap(), 0.5),
        ("targeted_below_l", ObjectiveSpec::targeted(0.3, 0.6).unwrap(), 0.1),
        ("targeted_inside", ObjectiveSpec::targeted(0.3, 0.6).unwrap(), 0.45),
        ("targeted_above_u", ObjectiveSpec::targeted(0.3, 0.6).unwrap(), 0.8),
    ]
}

pub fn objective_gradients() -> Vec<(String, usize, GradReport)> {
    let mut out = Vec::new();
    for (mname, cfg) in gradcheck_models() {
        let fx = ObjectiveFixture::new(&cfg, 6, 40);
        let theta = fx.model.flat_params();
        for (oname, spec, acc) in objective_branches() {
            let analytic = fx.gradient(&spec, acc);
            let rep = check_flat_smooth(
                &theta,
                &analytic,
                200,
                77,
                |th| fx.value(&spec, acc, th),
                |lo, hi| fx.relu_pattern(lo) == fx.relu_pattern(hi),
            );
            out.push((format!("{mname}/{oname}"), theta.len(), rep));
        }
    }
    out
}

/// Value and flat gradient of `spec` on one batch pair under the branch for `accuracy`.
fn value_and_grad(
    model: &Model,
    spec: &ObjectiveSpec,
    accuracy: f64,
    train: (&Tensor, &[usize]),
    test: (&Tensor, &[usize]),
) -> (f64, Vec<f64>) {
    let mut t = Tape::new();
    let p = model.bind(&mut t);
    let root = evaluate_objective(
        spec,
        model,
        &mut t,
        &p,
        Batch::new(train.0, train.1),
        Batch::new(test.0, test.1),
        &spec.branch_for(accuracy),
    )
    .unwrap();
    t.backward(root).unwrap();
    let g = p.iter().flat_map(|v| t.grad(*v).unwrap().to_vec()).collect();
    (t.value(root).item().unwrap(), g)
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

/// (name, holds, detail) for each objective identity.
pub fn objective_identities() -> Vec<(&'static str, bool, String)> {
    let mut out = Vec::new();
    let fx = ObjectiveFixture::new(&ModelConfig::mlp(8, &[16], 4).with_seed(12), 10, 90);
    let train = (&fx.train_x, &fx.train_y[..]);
    let test = (&fx.test_x, &fx.test_y[..]);

    // split on coinciding batches: L − L is exactly zero
    let mut worst = 0.0f64;
    for seed in 0..5 {
        let m = Model::build(&ModelConfig::mlp(8, &[16], 4).with_seed(seed)).unwrap();
        let (v, _) = value_and_grad(&m, &ObjectiveSpec::split(), 0.5, train, train);
        worst = worst.max(v.abs());
    }
    out.push(("split_zero_on_identical_batches", worst == 0.0, format!("max |J'| = {worst:e}")));

    // capped at accuracy ≤ k is bitwise the standard objective, value and gradient
    let k = 0.3;
    let capped = ObjectiveSpec::capped(k).unwrap();
    let (sv, sg) = value_and_grad(&fx.model, &ObjectiveSpec::standard(), 0.0, train, test);
    let mut same = true;
    for acc in [0.0, 0.1, 0.29, k] {
        let (cv, cg) = value_and_grad(&fx.model, &capped, acc, train, test);
        same &= cv.to_bits() == sv.to_bits() && bits(&cg) == bits(&sg);
    }
    out.push(("capped_equals_standard_at_or_below_k", same, format!("accuracies 0, 0.1, 0.29, {k}")));

    // targeted with l = u = 0.5 at accuracy 0.6 is the split objective
    let (tv, tg) = value_and_grad(&fx.model, &ObjectiveSpec::targeted(0.5, 0.5).unwrap(), 0.6, train, test);
    let (pv, pg) = value_and_grad(&fx.model, &ObjectiveSpec::split(), 0.6, train, test);
    out.push((
        "targeted_degenerate_band_equals_split",
        tv.to_bits() == pv.to_bits() && bits(&tg) == bits(&pg),
        format!("{tv} vs {pv}"),
    ));

    // uniform logits give ln C
    let mut worst = 0.0f64;
    for c in [2usize, 3, 10, 100] {
        for shift in [0.0, 3.5, -40.0] {
            let logits = Tensor::full(&[5, c], shift).unwrap();
            let labels: Vec<usize> = (0..5).map(|i| i % c).collect();
            let ce = memlab::objectives::cross_entropy_value(&logits, &labels).unwrap();
            worst = worst.max((ce - (c as f64).ln()).abs());
        }
    }
    out.push(("uniform_logits_cross_entropy_is_ln_c", worst < 1e-12, format!("max error {worst:e}")));
    out
}

/// A short seeded trial on blobs, used for byte-level rerun checks.
pub fn small_trial(seed: u64) -> memlab::harness::TrialConfig {
    use memlab::data::BlobsSpec;
    use memlab::harness::{DataSource, DataSpec, OptimizerSettings, StopRule, TrialConfig};
    TrialConfig {
        model: ModelConfig::mlp(12, &[16], 4),
        objective: ObjectiveSpec::capped(0.26).unwrap(),
        optimizer: OptimizerSettings { kind: memlab::optim::OptimizerKind::Adam, learning_rate: 1e-3, batch_size: 16 },
        data: DataSpec::new(
            DataSource::Blobs(BlobsSpec { class_count: 4, dim: 12, separation: 3.0, sigma: 1.0 }),
            96,
            64,
        ),
        max_epochs: 8,
        stop_rule: StopRule::FixedEpochs,
        stop_at_threshold: false,
        seed,
    }
    .with_seed(seed)
}

/// Runs the same seeded trial twice and compares the emitted CSV bytes.
pub fn csv_rerun_identical(dir: &std::path::Path) -> (bool, String) {
    use memlab::harness::{emit_csv, run_trial};
    let mut all = true;
    let mut detail = String::new();
    for seed in [1u64, 2, 3] {
        let cfg = small_trial(seed);
        let (a, b) = (dir.join(format!("a{seed}.csv")), dir.join(format!("b{seed}.csv")));
        emit_csv(&run_trial(&cfg).unwrap(), &a).unwrap();
        emit_csv(&run_trial(&cfg).unwrap(), &b).unwrap();
        let (ba, bb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        all &= ba == bb && !ba.is_empty();
        detail = format!("{} bytes per file", ba.len());
    }
    (all, detail)
}

/// Writes a synthetic CIFAR-10 batch file and checks labels and scaled pixels after loading.
pub fn cifar_fixture_round_trip(dir: &std::path::Path) -> (bool, String) {
    use memlab::data::{load_cifar10, CIFAR10_RECORD};
    let n = 12;
    let mut bytes = Vec::with_capacity(n * CIFAR10_RECORD);
    let mut labels = Vec::new();
    let mut pixels = Vec::new();
    for i in 0..n {
        let y = (i * 7 + 3) % 10;
        labels.push(y);
        bytes.push(y as u8);
        for j in 0..CIFAR10_RECORD - 1 {
            let p = ((i * 31 + j * 17) % 256) as u8;
            bytes.push(p);
            pixels.push(p);
        }
    }
    let path = dir.join("data_batch_1.bin");
    std::fs::write(&path, &bytes).unwrap();
    let from_file = load_cifar10(&path).unwrap();
    let from_dir = load_cifar10(dir).unwrap();
    let pixels_ok = from_file.inputs.data().iter().zip(&pixels).all(|(v, p)| *v == *p as f64 / 255.0);
    let ok = from_file.labels == labels
        && pixels_ok
        && from_file.inputs.shape() == [n, 3, 32, 32]
        && from_dir.labels == labels
        && from_dir.inputs == from_file.inputs;
    (ok, format!("{n} records, labels {:?}", &from_file.labels[..4]))
}

/// Random invertible single-layer models, alternating tanh and identity; returns
/// (models checked, worst |J(a, θ+c) − J(a+d, θ)|, worst condition number).
pub fn input_shift_check(count: usize, seed: u64) -> (usize, f64, f64) {
    use memlab::stability::{equivalent_input_shift, LayerActivation, ParamShift, SingleLayer};
    use nalgebra::{DMatrix, DVector};
    let mut r = rng(seed);
    let mut done = 0;
    let mut worst = 0.0f64;
    let mut worst_cond = 0.0f64;
    while done < count {
        let n = r.random_range(2..=6);
        let act = if done % 2 == 0 { LayerActivation::Tanh } else { LayerActivation::Identity };
        let w = DMatrix::from_fn(n, n, |_, _| r.random_range(-1.0..1.0)) + DMatrix::identity(n, n) * 0.5;
        let b = DVector::from_fn(n, |_, _| r.random_range(-0.3..0.3));
        let layer = SingleLayer::new(w, b, act).unwrap();
        let cond = layer.condition_number();
        if cond >= 1e4 {
            continue;
        }
        let shift = ParamShift {
            weight: DMatrix::from_fn(n, n, |_, _| r.random_range(-0.1..0.1)),
            bias: DVector::from_fn(n, |_, _| r.random_range(-0.1..0.1)),
        };
        let a = DVector::from_fn(n, |_, _| r.random_range(-1.0..1.0));
        let label = r.random_range(0..n);
        let d = equivalent_input_shift(&layer, &shift, &a).unwrap();
        let lhs = layer.shifted(&shift).loss(&a, label);
        let rhs = layer.loss(&(&a + &d), label);
        worst = worst.max((lhs - rhs).abs());
        worst_cond = worst_cond.max(cond);
        done += 1;
    }
    (done, worst, worst_cond)
}

pub const BASIN_SAMPLES: usize = 100_000;

/// (name, holds, detail) for the analytic ratios and the Monte-Carlo basins.
pub fn basin_checks() -> Vec<(String, bool, String)> {
    use memlab::basin::{analytic_basin_ratio, monte_carlo_basin, stable_fraction, BasinSpec, DescentSettings, SampleRegion};
    let mut out = Vec::new();
    let one = BasinSpec::from_basin_widths(1, 4.0, 6.0, 1.0);
    let r1 = analytic_basin_ratio(&one);
    out.push((
        "analytic_ratio_n1".to_string(),
        (r1.ln - (2.0f64 / 3.0).ln()).abs() < 1e-12,
        format!("ratio {}", r1.value),
    ));
    let big = BasinSpec::from_basin_widths(1000, 4.0, 6.0, 1.0);
    let rk = analytic_basin_ratio(&big);
    let want = 1000.0 * (2.0f64 / 3.0).ln();
    out.push((
        "analytic_log_ratio_n1000".to_string(),
        (rk.ln - want).abs() < 1e-12 * want.abs() && (rk.ln - 1000.0 * r1.ln).abs() < 1e-12 * want.abs(),
        format!("log10 ratio {:.4}", rk.log10()),
    ));
    let sf = stable_fraction(&big);
    out.push((
        "stable_fraction_equals_basin_ratio_n1000".to_string(),
        (sf.ln - rk.ln).abs() < 1e-12 * want.abs(),
        format!("ln {} vs {}", sf.ln, rk.ln),
    ));
    let descent = DescentSettings { step_size: 0.5, max_steps: 1000 };
    for n in [1usize, 2, 5] {
        let spec = BasinSpec::from_basin_widths(n, 4.0, 6.0, 1.0);
        let est = monte_carlo_basin(&spec, BASIN_SAMPLES, &descent, SampleRegion::BasinUnion, 100 + n as u64).unwrap();
        let r = analytic_basin_ratio(&spec).value;
        let p = r / (1.0 + r);
        let se = (p * (1.0 - p) / BASIN_SAMPLES as f64).sqrt();
        let z = (est.fraction_a - p).abs() / se;
        let ok = z < 3.0 && est.count_neither == 0;
        out.push((
            format!("monte_carlo_n{n}"),
            ok,
            format!(
                "a/b {:.4} vs {:.4}, fraction_a {:.5} vs {:.5} ({z:.2} se)",
                est.fraction_a / est.fraction_b,
                r,
                est.fraction_a,
                p
            ),
        ));
        if n == 1 {
            let ratio = est.fraction_a / est.fraction_b;
            out.push(("monte_carlo_n1_ratio_within_0.02".to_string(), (ratio - 2.0 / 3.0).abs() < 0.02, format!("{ratio:.4}")));
        }
    }
    out
}

pub const BM_SAMPLES: usize = 200_000;

/// (name, holds, detail) for the three Brunn–Minkowski fixtures.
pub fn brunn_minkowski_fixtures() -> Vec<(String, bool, String)> {
    use memlab::basin::{brunn_minkowski_check, brunn_minkowski_monte_carlo, SetSpec};
    let mut out = Vec::new();
    for n in [1usize, 2, 3, 6] {
        let eps = 0.25;
        let r = brunn_minkowski_check(&SetSpec::cube(n, 1.0), &SetSpec::cube(n, eps), BM_SAMPLES, 1).unwrap();
        let eq = (r.lhs - (1.0 + eps)).abs() < 1e-12 && (r.lhs - r.rhs).abs() < 1e-12;
        out.push((format!("cubes_equality_n{n}"), r.holds && eq, format!("lhs {} rhs {}", r.lhs, r.rhs)));
    }
    let (a, b) = (SetSpec::ball(3, 1.0), SetSpec::ball(3, 0.3));
    let exact = brunn_minkowski_check(&a, &b, BM_SAMPLES, 2).unwrap();
    let mc = brunn_minkowski_monte_carlo(&a, &b, BM_SAMPLES, 2).unwrap();
    let within = (mc.lhs - mc.rhs).abs() < 3.0 * mc.lhs_std_error;
    // μ(B₁ + B₀.₃)^{1/3} = (4π/3)^{1/3} · 1.3
    let ball_side = (4.0 * std::f64::consts::PI / 3.0).cbrt() * 1.3;
    out.push((
        "balls_equality_n3".to_string(),
        exact.holds && (exact.lhs - ball_side).abs() < 1e-12 && (exact.rhs - ball_side).abs() < 1e-12 && mc.holds && within,
        format!("analytic lhs {:.6}, sampled {:.5} ± {:.5}, rhs {:.6}", exact.lhs, mc.lhs, mc.lhs_std_error, mc.rhs),
    ));
    let (thin, square) = (SetSpec::boxed(vec![4.0, 0.25]), SetSpec::cube(2, 1.0));
    let exact = brunn_minkowski_check(&thin, &square, BM_SAMPLES, 3).unwrap();
    let mc = brunn_minkowski_monte_carlo(&thin, &square, BM_SAMPLES, 3).unwrap();
    out.push((
        "thin_box_strict".to_string(),
        exact.holds && (exact.lhs - 2.5).abs() < 1e-12 && (exact.rhs - 2.0).abs() < 1e-12 && mc.holds && mc.margin_in_std_errors() > 3.0,
        format!("lhs {:.4} (sampled {:.4}, margin {:.0} se) rhs {:.4}", exact.lhs, mc.lhs, mc.margin_in_std_errors(), exact.rhs),
    ));
    out
}
