//! Reference model family: a small strided CNN and fully connected MLPs.
//!
//! Every model maps a batch `N×...` to `N×C` class scores. With the softmax
//! head enabled the scores are probabilities; the loss still applies its own
//! log-softmax on top, so the training pipeline transforms twice in
//! succession. Disabling the head gives raw logits.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::{numel, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Convnet5,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

/// Conv layers in `convnet5` use 3×3 kernels, stride 2, padding 1.
pub const CONV_KERNEL: usize = 3;
pub const CONV_STRIDE: usize = 2;
pub const CONV_PADDING: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub architecture: Architecture,
    /// Per-sample input shape; `[C, H, W]` for `convnet5`, anything for `mlp`.
    pub input_shape: Vec<usize>,
    pub class_count: usize,
    /// Hidden widths (mlp) or conv channel counts (convnet5).
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub include_softmax_head: bool,
    pub seed: u64,
}

impl ModelConfig {
    pub fn mlp(input_dim: usize, hidden: &[usize], class_count: usize) -> Self {
        Self {
            architecture: Architecture::Mlp,
            input_shape: vec![input_dim],
            class_count,
            hidden: hidden.to_vec(),
            activation: Activation::Relu,
            include_softmax_head: true,
            seed: 0,
        }
    }

    /// Four stride-2 conv layers (3→32→64→128→256) and a linear classifier.
    pub fn convnet5_reference() -> Self {
        Self {
            architecture: Architecture::Convnet5,
            input_shape: vec![3, 32, 32],
            class_count: 10,
            hidden: vec![32, 64, 128, 256],
            activation: Activation::Relu,
            include_softmax_head: true,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_softmax_head(mut self, on: bool) -> Self {
        self.include_softmax_head = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_count < 2 {
            return Err(Error::Config(format!("class_count {} < 2", self.class_count)));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(Error::Config(format!("input_shape {:?} invalid", self.input_shape)));
        }
        if self.architecture == Architecture::Convnet5 {
            if self.input_shape.len() != 3 {
                return Err(Error::Config(format!(
                    "convnet5 needs a [C, H, W] input shape, got {:?}",
                    self.input_shape
                )));
            }
            if self.hidden.is_empty() {
                return Err(Error::Config("convnet5 needs at least one conv layer".into()));
            }
        }
        Ok(())
    }

    pub fn input_len(&self) -> usize {
        numel(&self.input_shape)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv2d {
        weight: usize,
        bias: usize,
        stride: usize,
        padding: usize,
    },
    Dense {
        weight: usize,
        bias: usize,
    },
    Activation(Activation),
    Flatten,
    SoftmaxHead,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub tensor: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    layers: Vec<Layer>,
    params: Vec<Param>,
}

fn uniform_tensor(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Result<Tensor> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let data = (0..numel(shape)).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(shape.to_vec(), data)
}

impl Model {
    /// Builds and initializes a model. Weights and biases are drawn uniformly
    /// from `±1/sqrt(fan_in)` with a generator seeded from `config.seed`.
    pub fn build(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut layers = Vec::new();
        let mut params = Vec::new();
        let add_param = |params: &mut Vec<Param>, name: String, t: Tensor| {
            params.push(Param { name, tensor: t });
            params.len() - 1
        };

        match config.architecture {
            Architecture::Mlp => {
                layers.push(Layer::Flatten);
                let mut width = config.input_len();
                let widths: Vec<usize> = config.hidden.iter().copied().chain([config.class_count]).collect();
                for (i, &next) in widths.iter().enumerate() {
                    let w = uniform_tensor(&mut rng, &[width, next], width)?;
                    let b = uniform_tensor(&mut rng, &[next], width)?;
                    let weight = add_param(&mut params, format!("fc{}.weight", i + 1), w);
                    let bias = add_param(&mut params, format!("fc{}.bias", i + 1), b);
                    layers.push(Layer::Dense { weight, bias });
                    if i + 1 < widths.len() {
                        layers.push(Layer::Activation(config.activation));
                    }
                    width = next;
                }
            }
            Architecture::Convnet5 => {
                let (mut channels, mut h, mut w) =
                    (config.input_shape[0], config.input_shape[1], config.input_shape[2]);
                for (i, &filters) in config.hidden.iter().enumerate() {
                    if CONV_KERNEL > h + 2 * CONV_PADDING || CONV_KERNEL > w + 2 * CONV_PADDING {
                        return Err(Error::Config(format!(
                            "input {:?} too small for {} conv layers",
                            config.input_shape,
                            config.hidden.len()
                        )));
                    }
                    let fan_in = channels * CONV_KERNEL * CONV_KERNEL;
                    let k = uniform_tensor(&mut rng, &[filters, channels, CONV_KERNEL, CONV_KERNEL], fan_in)?;
                    let b = uniform_tensor(&mut rng, &[filters], fan_in)?;
                    let weight = add_param(&mut params, format!("conv{}.weight", i + 1), k);
                    let bias = add_param(&mut params, format!("conv{}.bias", i + 1), b);
                    layers.push(Layer::Conv2d {
                        weight,
                        bias,
                        stride: CONV_STRIDE,
                        padding: CONV_PADDING,
                    });
                    layers.push(Layer::Activation(config.activation));
                    h = (h + 2 * CONV_PADDING - CONV_KERNEL) / CONV_STRIDE + 1;
                    w = (w + 2 * CONV_PADDING - CONV_KERNEL) / CONV_STRIDE + 1;
                    channels = filters;
                }
                layers.push(Layer::Flatten);
                let fan_in = channels * h * w;
                let wt = uniform_tensor(&mut rng, &[fan_in, config.class_count], fan_in)?;
                let b = uniform_tensor(&mut rng, &[config.class_count], fan_in)?;
                let weight = add_param(&mut params, "fc.weight".into(), wt);
                let bias = add_param(&mut params, "fc.bias".into(), b);
                layers.push(Layer::Dense { weight, bias });
            }
        }
        if config.include_softmax_head {
            layers.push(Layer::SoftmaxHead);
        }
        Ok(Self {
            config: config.clone(),
            layers,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.tensor)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.iter_mut().find(|p| p.name == name).map(|p| &mut p.tensor)
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    /// All parameters concatenated in declaration order.
    pub fn flat_params(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.tensor.data().iter().copied()).collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.parameter_count() {
            return Err(Error::Dimension(format!(
                "{} values for {} parameters",
                flat.len(),
                self.parameter_count()
            )));
        }
        let mut offset = 0;
        for p in &mut self.params {
            let n = p.tensor.len();
            p.tensor.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Records every parameter as a leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.params.iter().map(|p| tape.leaf(p.tensor.clone())).collect()
    }

    fn check_batch(&self, batch: &Tensor) -> Result<()> {
        let shape = batch.shape();
        let ok = match self.config.architecture {
            Architecture::Mlp => shape.len() >= 2 && numel(&shape[1..]) == self.config.input_len(),
            Architecture::Convnet5 => shape.len() == 4 && shape[1..] == self.config.input_shape[..],
        };
        if !ok {
            return Err(Error::Dimension(format!(
                "batch of shape {shape:?} does not match model input {:?}",
                self.config.input_shape
            )));
        }
        Ok(())
    }

    /// Forward pass on `tape` using parameters previously recorded by [`Model::bind`].
    pub fn forward_on(&self, tape: &mut Tape, params: &[Var], input: Var) -> Result<Var> {
        self.check_batch(tape.value(input))?;
        if params.len() != self.params.len() {
            return Err(Error::Contract(format!(
                "{} bound parameters for a model with {}",
                params.len(),
                self.params.len()
            )));
        }
        let mut x = input;
        for layer in &self.layers {
            x = match *layer {
                Layer::Conv2d { weight, bias, stride, padding } => {
                    let y = tape.conv2d(x, params[weight], stride, padding)?;
                    tape.add_channel_bias(y, params[bias])?
                }
                Layer::Dense { weight, bias } => {
                    let y = tape.matmul(x, params[weight])?;
                    tape.add_row_bias(y, params[bias])?
                }
                Layer::Activation(Activation::Relu) => tape.relu(x)?,
                Layer::Activation(Activation::Tanh) => tape.tanh(x)?,
                Layer::Flatten => tape.flatten(x)?,
                Layer::SoftmaxHead => tape.softmax(x)?,
            };
        }
        Ok(x)
    }

    /// Inference-only forward pass returning `N×C` outputs.
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let params = self.bind(&mut tape);
        let input = tape.leaf(batch.clone());
        let out = self.forward_on(&mut tape, &params, input)?;
        Ok(tape.value(out).clone())
    }

    /// Copies gradients recorded on `tape` into the parameter gradient slots,
    /// adding to anything already there.
    pub fn accumulate_grads(&mut self, tape: &Tape, bound: &[Var]) -> Result<()> {
        for (p, v) in self.params.iter_mut().zip(bound) {
            match tape.grad(*v) {
                Some(g) => p.tensor.accumulate_grad(g)?,
                None => p.tensor.accumulate_grad(&vec![0.0; p.tensor.len()])?,
            }
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        self.params.iter_mut().for_each(|p| p.tensor.clear_grad());
    }

    fn first_weight(&self) -> Option<&Tensor> {
        self.layers.iter().find_map(|l| match *l {
            Layer::Conv2d { weight, .. } | Layer::Dense { weight, .. } => Some(&self.params[weight].tensor),
            _ => None,
        })
    }

    /// Frobenius norm of the first weight tensor's gradient.
    pub fn first_layer_grad_norm(&self) -> Result<f64> {
        let w = self
            .first_weight()
            .ok_or_else(|| Error::State("model has no weight layer".into()))?;
        let g = w
            .grad()
            .ok_or_else(|| Error::State("first-layer gradient not populated".into()))?;
        Ok(g.iter().map(|v| v * v).sum::<f64>().sqrt())
    }

    /// Writes a checkpoint: a text header (magic, config as JSON, one line
    /// per parameter with name and shape) terminated by `end`, followed by all
    /// parameter values as little-endian `f64` in header order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        writeln!(out, "{CHECKPOINT_MAGIC}")?;
        writeln!(out, "config {}", serde_json::to_string(&self.config).map_err(|e| Error::Format(e.to_string()))?)?;
        for p in &self.params {
            let dims: Vec<String> = p.tensor.shape().iter().map(usize::to_string).collect();
            writeln!(out, "param {} {}", p.name, dims.join(","))?;
        }
        writeln!(out, "end")?;
        for p in &self.params {
            for v in p.tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut reader = BufReader::new(fs::File::open(path)?);
        let mut line = String::new();
        let mut next_line = |reader: &mut BufReader<fs::File>| -> Result<String> {
            line.clear();
            if reader.read_line(&mut line)? == 0 {
                return Err(Error::Format("checkpoint header truncated".into()));
            }
            Ok(line.trim_end().to_string())
        };
        if next_line(&mut reader)? != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a memlab checkpoint".into()));
        }
        let cfg_line = next_line(&mut reader)?;
        let cfg_json = cfg_line
            .strip_prefix("config ")
            .ok_or_else(|| Error::Format("missing config line".into()))?;
        let config: ModelConfig = serde_json::from_str(cfg_json).map_err(|e| Error::Format(e.to_string()))?;
        let mut model = Model::build(&config)?;
        let mut entries = Vec::new();
        loop {
            let l = next_line(&mut reader)?;
            if l == "end" {
                break;
            }
            let mut parts = l.split(' ');
            let (Some("param"), Some(name), Some(dims)) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::Format(format!("bad parameter line {l:?}")));
            };
            let shape = dims
                .split(',')
                .map(|d| d.parse::<usize>().map_err(|e| Error::Format(e.to_string())))
                .collect::<Result<Vec<_>>>()?;
            entries.push((name.to_string(), shape));
        }
        if entries.len() != model.params.len() {
            return Err(Error::Format("parameter list does not match config".into()));
        }
        for ((name, shape), p) in entries.iter().zip(&mut model.params) {
            if *name != p.name || shape.as_slice() != p.tensor.shape() {
                return Err(Error::Format(format!("parameter {name} {shape:?} does not match config")));
            }
            let mut buf = vec![0u8; p.tensor.len() * 8];
            reader
                .read_exact(&mut buf)
                .map_err(|_| Error::Format("checkpoint body truncated".into()))?;
            for (dst, chunk) in p.tensor.data_mut().iter_mut().zip(buf.chunks_exact(8)) {
                *dst = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
            }
        }
        Ok(model)
    }
}

const CHECKPOINT_MAGIC: &str = "memlab-checkpoint v1";
