mod common;

use common::*;
use memlab::models::{Activation, Model, ModelConfig};
use memlab::objectives::cross_entropy_value;
use memlab::optim::OptimizerState;
use memlab::tape::Tape;

#[test]
fn matmul_matches_triple_loop() {
    for (m, k, n, seed) in [(1, 1, 1, 1), (3, 5, 2, 2), (17, 9, 23, 3), (64, 33, 10, 4)] {
        let a = uniform(&[m, k], -2.0, 2.0, seed);
        let b = uniform(&[k, n], -2.0, 2.0, seed + 100);
        let mut t = Tape::new();
        let (va, vb) = (t.leaf(a.clone()), t.leaf(b.clone()));
        let c = t.matmul(va, vb).unwrap();
        let want = naive_matmul(a.data(), b.data(), m, k, n);
        assert_eq!(t.value(c).shape(), &[m, n]);
        for (x, y) in t.value(c).data().iter().zip(&want) {
            assert!((x - y).abs() < 1e-12 * (1.0 + y.abs()));
        }
    }
}

#[test]
fn conv2d_matches_nested_loops() {
    let cases = [
        // (n, c, h, w, f, kh, kw, stride, padding)
        (1, 1, 3, 3, 1, 3, 3, 1, 0),
        (2, 3, 7, 5, 4, 3, 3, 1, 1),
        (2, 3, 8, 8, 5, 3, 3, 2, 1),
        (1, 2, 9, 6, 3, 2, 3, 3, 2),
        (3, 4, 32, 32, 2, 3, 3, 2, 1),
    ];
    for (i, &(n, c, h, w, f, kh, kw, s, p)) in cases.iter().enumerate() {
        let x = uniform(&[n, c, h, w], -1.0, 1.0, i as u64);
        let k = uniform(&[f, c, kh, kw], -1.0, 1.0, 50 + i as u64);
        let mut t = Tape::new();
        let (vx, vk) = (t.leaf(x.clone()), t.leaf(k.clone()));
        let y = t.conv2d(vx, vk, s, p).unwrap();
        let want = naive_conv2d(&x, &k, s, p);
        assert_eq!(t.value(y).shape(), want.shape());
        for (a, b) in t.value(y).data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-12, "case {i}: {a} vs {b}");
        }
    }
}

#[test]
fn conv2d_is_cross_correlation() {
    // a kernel with a single 1 in its top-left corner reads the top-left
    // neighbour; a flipped kernel would read the bottom-right one
    let x = memlab::tensor::Tensor::new(vec![1, 1, 3, 3], (1..=9).map(f64::from).collect()).unwrap();
    let mut kd = vec![0.0; 9];
    kd[0] = 1.0;
    let k = memlab::tensor::Tensor::new(vec![1, 1, 3, 3], kd).unwrap();
    let mut t = Tape::new();
    let (vx, vk) = (t.leaf(x), t.leaf(k));
    let y = t.conv2d(vx, vk, 1, 1).unwrap();
    assert_eq!(t.value(y).data(), &[0.0, 0.0, 0.0, 0.0, 1.0, 2.0, 0.0, 4.0, 5.0]);
}

/// Parameter count of a stride-2, padding-1, 3×3 conv stack followed by a
/// linear classifier, enumerated layer by layer.
fn conv_stack_count(input: [usize; 3], channels: &[usize], classes: usize) -> usize {
    let [mut c, mut h, mut w] = input;
    let mut total = 0;
    for &f in channels {
        total += f * c * 9 + f;
        h = (h - 1) / 2 + 1;
        w = (w - 1) / 2 + 1;
        c = f;
    }
    total + c * h * w * classes + classes
}

#[test]
fn convnet5_reference_parameter_count() {
    let m = Model::build(&ModelConfig::convnet5_reference()).unwrap();
    let oracle = conv_stack_count([3, 32, 32], &[32, 64, 128, 256], 10);
    assert_eq!(oracle, 398_666);
    assert_eq!(m.parameter_count(), oracle);
    assert_eq!(m.flat_params().len(), oracle);
    let small = ModelConfig { input_shape: vec![2, 9, 7], hidden: vec![3, 5], class_count: 4, ..ModelConfig::convnet5_reference() };
    assert_eq!(Model::build(&small).unwrap().parameter_count(), conv_stack_count([2, 9, 7], &[3, 5], 4));
}

#[test]
fn mlp_parameter_count() {
    assert_eq!(Model::build(&ModelConfig::mlp(4, &[3], 2)).unwrap().parameter_count(), 23);
    assert_eq!(Model::build(&ModelConfig::mlp(32, &[128], 10)).unwrap().parameter_count(), 32 * 128 + 128 + 1290);
}

/// `softmax?(W₃ f(W₂ f(W₁ x + b₁) + b₂) + b₃)` evaluated by hand from the named parameters.
fn mlp_by_hand(model: &Model, x: &[f64]) -> Vec<f64> {
    let cfg = model.config();
    let layers = cfg.hidden.len() + 1;
    let mut h = x.to_vec();
    for l in 1..=layers {
        let w = model.param(&format!("fc{l}.weight")).unwrap();
        let b = model.param(&format!("fc{l}.bias")).unwrap();
        let (din, dout) = (w.shape()[0], w.shape()[1]);
        let mut z = b.data().to_vec();
        for (j, zj) in z.iter_mut().enumerate() {
            for i in 0..din {
                *zj += h[i] * w.data()[i * dout + j];
            }
        }
        if l < layers {
            for v in &mut z {
                *v = match cfg.activation {
                    Activation::Relu => v.max(0.0),
                    Activation::Tanh => v.tanh(),
                };
            }
        }
        h = z;
    }
    if cfg.include_softmax_head {
        naive_softmax(&h)
    } else {
        h
    }
}

#[test]
fn mlp_forward_matches_layer_by_layer() {
    for (act, head) in [(Activation::Relu, true), (Activation::Tanh, false), (Activation::Relu, false)] {
        let cfg = ModelConfig::mlp(6, &[7, 5], 4).with_activation(act).with_softmax_head(head).with_seed(9);
        let m = Model::build(&cfg).unwrap();
        let x = uniform(&[11, 6], -2.0, 2.0, 4);
        let out = m.forward(&x).unwrap();
        for (row, xr) in rows_of(&out).iter().zip(x.data().chunks(6)) {
            for (a, b) in row.iter().zip(mlp_by_hand(&m, xr)) {
                assert!((a - b).abs() < 1e-13, "{a} vs {b}");
            }
        }
    }
}

#[test]
fn convnet_forward_matches_reference_pipeline() {
    let cfg = ModelConfig { input_shape: vec![2, 6, 6], hidden: vec![3, 4], class_count: 3, ..ModelConfig::convnet5_reference() }
        .with_activation(Activation::Tanh)
        .with_seed(2);
    let m = Model::build(&cfg).unwrap();
    let x = uniform(&[2, 2, 6, 6], -1.0, 1.0, 8);
    let mut h = x.clone();
    for l in 1..=2 {
        let k = m.param(&format!("conv{l}.weight")).unwrap();
        let b = m.param(&format!("conv{l}.bias")).unwrap();
        let mut y = naive_conv2d(&h, k, 2, 1);
        let (f, hw) = (y.shape()[1], y.shape()[2] * y.shape()[3]);
        for (i, v) in y.data_mut().iter_mut().enumerate() {
            *v = (*v + b.data()[(i / hw) % f]).tanh();
        }
        h = y;
    }
    let flat_len = h.len() / 2;
    let w = m.param("fc.weight").unwrap();
    let b = m.param("fc.bias").unwrap();
    let out = m.forward(&x).unwrap();
    for (s, row) in rows_of(&out).iter().enumerate() {
        let feat = &h.data()[s * flat_len..(s + 1) * flat_len];
        let logits: Vec<f64> = (0..3)
            .map(|j| b.data()[j] + (0..flat_len).map(|i| feat[i] * w.data()[i * 3 + j]).sum::<f64>())
            .collect();
        for (a, e) in row.iter().zip(naive_softmax(&logits)) {
            assert!((a - e).abs() < 1e-13);
        }
    }
}

#[test]
fn adam_matches_scalar_reference_over_100_steps() {
    // every coordinate follows θ ← θ − ε m̂/(√v̂ + eps) on J = Σ (θ − t)²
    let mut model = Model::build(&ModelConfig::mlp(3, &[2], 2).with_seed(1)).unwrap();
    let n = model.parameter_count();
    let target: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
    let mut opt = OptimizerState::adam(0.01);
    let (b1, b2, eps, lr) = (0.9f64, 0.999f64, 1e-8, 0.01);
    let mut theta = model.flat_params();
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];
    for step in 1..=100 {
        let current = model.flat_params();
        let mut off = 0;
        for p in model.params_mut() {
            let len = p.tensor.len();
            let g = (0..len).map(|i| 2.0 * (current[off + i] - target[off + i])).collect();
            p.tensor.set_grad(g).unwrap();
            off += len;
        }
        opt.step(&mut model).unwrap();
        for i in 0..n {
            let g = 2.0 * (theta[i] - target[i]);
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            let mh = m[i] / (1.0 - b1.powi(step));
            let vh = v[i] / (1.0 - b2.powi(step));
            theta[i] -= lr * mh / (vh.sqrt() + eps);
        }
        for (a, b) in model.flat_params().iter().zip(&theta) {
            assert!((a - b).abs() < 1e-12, "step {step}: {a} vs {b}");
        }
    }
}

#[test]
fn sgd_matches_closed_form_on_quadratic() {
    let mut model = Model::build(&ModelConfig::mlp(2, &[], 2).with_seed(3)).unwrap();
    let start = model.flat_params();
    let mut opt = OptimizerState::sgd(0.1);
    for _ in 0..30 {
        for p in model.params_mut() {
            let g = p.tensor.data().iter().map(|w| 2.0 * w).collect();
            p.tensor.set_grad(g).unwrap();
        }
        opt.step(&mut model).unwrap();
    }
    for (a, s) in model.flat_params().iter().zip(&start) {
        assert!((a - s * 0.8f64.powi(30)).abs() < 1e-14);
    }
}

#[test]
fn cross_entropy_matches_per_sample_oracle() {
    for seed in 0..5 {
        let logits = uniform(&[13, 7], -5.0, 5.0, seed);
        let labels: Vec<usize> = (0..13).map(|i| (i * 3 + seed as usize) % 7).collect();
        let got = cross_entropy_value(&logits, &labels).unwrap();
        let want = naive_cross_entropy(&rows_of(&logits), &labels);
        assert!((got - want).abs() < 1e-13);
    }
}

#[test]
fn cross_entropy_survives_huge_logits() {
    let logits = memlab::tensor::Tensor::from_rows(&[vec![1000.0, 0.0, -1000.0]]).unwrap();
    let got = cross_entropy_value(&logits, &[1]).unwrap();
    assert!((got - 1000.0).abs() < 1e-9);
}
