//! Datasets: CIFAR-10 binary ingestion, fixed Gaussian-noise images, noise
//! mixing, subset conventions and synthetic Gaussian blobs.

use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{numel, Tensor};

pub const CIFAR10_CLASSES: usize = 10;
pub const CIFAR10_SHAPE: [usize; 3] = [3, 32, 32];
pub const CIFAR10_RECORD: usize = 1 + 3 * 32 * 32;

/// Default standard deviation of noise images (mean 0.5, clipped to [0, 1]).
pub const DEFAULT_NOISE_SIGMA: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    CifarSubset,
    GaussianNoise,
    Mixed,
    SyntheticBlobs,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Provenance::CifarSubset => "cifar_subset",
            Provenance::GaussianNoise => "gaussian_noise",
            Provenance::Mixed => "mixed",
            Provenance::SyntheticBlobs => "synthetic_blobs",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Provenance {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "cifar_subset" => Provenance::CifarSubset,
            "gaussian_noise" => Provenance::GaussianNoise,
            "mixed" => Provenance::Mixed,
            "synthetic_blobs" => Provenance::SyntheticBlobs,
            other => return Err(Error::Format(format!("unknown provenance {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub name: String,
    pub provenance: Provenance,
    /// `N×C×H×W`.
    pub inputs: Tensor,
    pub labels: Vec<usize>,
    pub class_count: usize,
    /// Generator seed, for synthetic data.
    pub seed: Option<u64>,
    /// Noise or cluster standard deviation, for synthetic data.
    pub sigma: Option<f64>,
}

impl LabeledDataset {
    pub fn new(
        name: impl Into<String>,
        provenance: Provenance,
        inputs: Tensor,
        labels: Vec<usize>,
        class_count: usize,
    ) -> Result<Self> {
        if inputs.shape().first() != Some(&labels.len()) {
            return Err(Error::Data(format!(
                "{} labels for inputs of shape {:?}",
                labels.len(),
                inputs.shape()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&y| y >= class_count) {
            return Err(Error::Data(format!("label {bad} outside [0, {class_count})")));
        }
        if !inputs.is_finite() {
            return Err(Error::Data("non-finite input values".into()));
        }
        Ok(Self {
            name: name.into(),
            provenance,
            inputs,
            labels,
            class_count,
            seed: None,
            sigma: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Per-sample shape, e.g. `[3, 32, 32]`.
    pub fn sample_shape(&self) -> &[usize] {
        &self.inputs.shape()[1..]
    }

    /// Naive accuracy of uniform guessing.
    pub fn naive_threshold(&self) -> f64 {
        1.0 / self.class_count as f64
    }

    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut out = self.clone();
        out.inputs = self.inputs.gather_rows(indices)?;
        out.labels = indices.iter().map(|&i| self.labels[i]).collect();
        Ok(out)
    }

    /// First `count` samples in stored order.
    pub fn prefix(&self, count: usize) -> Result<Self> {
        if count == 0 || count > self.len() {
            return Err(Error::Config(format!(
                "cannot take {count} samples from {} ({} available)",
                self.name,
                self.len()
            )));
        }
        let mut out = self.clone();
        out.inputs = self.inputs.slice_rows(0, count)?;
        out.labels.truncate(count);
        Ok(out)
    }

    /// Inputs and labels of the rows in `indices`.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        let x = self.inputs.gather_rows(indices)?;
        Ok((x, indices.iter().map(|&i| self.labels[i]).collect()))
    }

    pub fn same_samples(&self, other: &Self) -> bool {
        self.labels == other.labels && self.inputs == other.inputs
    }

    /// Writes the cache container: a text header (`name`, `provenance`,
    /// `shape`, `classes`, `seed`, `sigma`) closed by `end`, then inputs as
    /// little-endian `f64` and labels as little-endian `u32`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let shape: Vec<String> = self.inputs.shape().iter().map(usize::to_string).collect();
        let mut out = format!(
            "{DATASET_MAGIC}\nname={}\nprovenance={}\nshape={}\nclasses={}\nseed={}\nsigma={}\nend\n",
            self.name.replace('\n', " "),
            self.provenance,
            shape.join(","),
            self.class_count,
            self.seed.map_or("none".to_string(), |s| s.to_string()),
            self.sigma.map_or("none".to_string(), |s| format!("{s:e}")),
        )
        .into_bytes();
        for v in self.inputs.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for &y in &self.labels {
            out.extend_from_slice(&(y as u32).to_le_bytes());
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        let mut fields = std::collections::HashMap::new();
        let mut pos = 0;
        let mut first = true;
        loop {
            let nl = bytes[pos..]
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| Error::Format("dataset header truncated".into()))?;
            let line = std::str::from_utf8(&bytes[pos..pos + nl]).map_err(|e| Error::Format(e.to_string()))?;
            pos += nl + 1;
            if first {
                if line != DATASET_MAGIC {
                    return Err(Error::Format("not a memlab dataset".into()));
                }
                first = false;
                continue;
            }
            if line == "end" {
                break;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad header line {line:?}")))?;
            fields.insert(k.to_string(), v.to_string());
        }
        let get = |k: &str| fields.get(k).ok_or_else(|| Error::Format(format!("missing header field {k}")));
        let parse_err = |e: std::num::ParseIntError| Error::Format(e.to_string());
        let shape = get("shape")?
            .split(',')
            .map(|d| d.parse::<usize>().map_err(parse_err))
            .collect::<Result<Vec<_>>>()?;
        let classes = get("classes")?.parse::<usize>().map_err(parse_err)?;
        let n = *shape.first().ok_or_else(|| Error::Format("empty shape".into()))?;
        let values = numel(&shape);
        let body = &bytes[pos..];
        if body.len() != values * 8 + n * 4 {
            return Err(Error::Format(format!(
                "dataset body has {} bytes, expected {}",
                body.len(),
                values * 8 + n * 4
            )));
        }
        let (xs, ys) = body.split_at(values * 8);
        let data = xs
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let labels = ys
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")) as usize)
            .collect();
        let mut ds = Self::new(
            get("name")?.clone(),
            get("provenance")?.parse()?,
            Tensor::new(shape, data)?,
            labels,
            classes,
        )?;
        ds.seed = match get("seed")?.as_str() {
            "none" => None,
            s => Some(s.parse().map_err(parse_err)?),
        };
        ds.sigma = match get("sigma")?.as_str() {
            "none" => None,
            s => Some(s.parse().map_err(|e: std::num::ParseFloatError| Error::Format(e.to_string()))?),
        };
        Ok(ds)
    }
}

const DATASET_MAGIC: &str = "memlab-dataset v1";

/// Parses concatenated CIFAR-10 records (1 label byte + 3072 channel-major pixel bytes).
pub fn parse_cifar10(bytes: &[u8], name: &str) -> Result<LabeledDataset> {
    if bytes.is_empty() || bytes.len() % CIFAR10_RECORD != 0 {
        return Err(Error::Format(format!(
            "{name}: {} bytes is not a positive multiple of the {CIFAR10_RECORD}-byte record",
            bytes.len()
        )));
    }
    let n = bytes.len() / CIFAR10_RECORD;
    let mut labels = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * (CIFAR10_RECORD - 1));
    for (i, rec) in bytes.chunks_exact(CIFAR10_RECORD).enumerate() {
        let label = rec[0] as usize;
        if label >= CIFAR10_CLASSES {
            return Err(Error::Data(format!("{name}: record {i} has label byte {label}")));
        }
        labels.push(label);
        data.extend(rec[1..].iter().map(|&b| b as f64 / 255.0));
    }
    let mut shape = vec![n];
    shape.extend_from_slice(&CIFAR10_SHAPE);
    LabeledDataset::new(name, Provenance::CifarSubset, Tensor::new(shape, data)?, labels, CIFAR10_CLASSES)
}

/// Loads one CIFAR-10 batch file, or every `data_batch_{1..5}.bin` present in
/// a directory (concatenated in order).
pub fn load_cifar10(path: &Path) -> Result<LabeledDataset> {
    let name = path.display().to_string();
    if path.is_dir() {
        let mut bytes = Vec::new();
        for i in 1..=5 {
            let f = path.join(format!("data_batch_{i}.bin"));
            if f.exists() {
                bytes.extend(fs::read(f)?);
            }
        }
        if bytes.is_empty() {
            return Err(Error::Format(format!("{name}: no data_batch_*.bin files")));
        }
        return parse_cifar10(&bytes, &name);
    }
    parse_cifar10(&fs::read(path)?, &name)
}

/// Loads `test_batch.bin` from a CIFAR-10 directory.
pub fn load_cifar10_test(dir: &Path) -> Result<LabeledDataset> {
    load_cifar10(&dir.join("test_batch.bin"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SizeClass {
    #[serde(rename = "2.5k")]
    K2_5,
    #[serde(rename = "5k")]
    K5,
    #[serde(rename = "10k")]
    K10,
}

impl SizeClass {
    /// `(train, test)` sample counts.
    pub fn counts(self) -> (usize, usize) {
        match self {
            SizeClass::K2_5 => (2560, 2560),
            SizeClass::K5 => (5120, 5120),
            SizeClass::K10 => (10240, 10000),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SizeClass::K2_5 => "2.5k",
            SizeClass::K5 => "5k",
            SizeClass::K10 => "10k",
        }
    }
}

impl std::str::FromStr for SizeClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "2.5k" => Ok(SizeClass::K2_5),
            "5k" => Ok(SizeClass::K5),
            "10k" => Ok(SizeClass::K10),
            other => Err(Error::Config(format!("unknown size class {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSource {
    DisjointTrainTest,
    /// Both roles come from the training data, as two disjoint equal halves.
    TrainHalved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_count: usize,
    pub test_count: usize,
    pub source: SplitSource,
}

/// Splits a dataset into its first and second halves.
pub fn halve(ds: &LabeledDataset) -> Result<(LabeledDataset, LabeledDataset)> {
    let half = ds.len() / 2;
    if half == 0 {
        return Err(Error::Config(format!("{} too small to halve", ds.name)));
    }
    let first: Vec<usize> = (0..half).collect();
    let second: Vec<usize> = (half..2 * half).collect();
    Ok((ds.select(&first)?, ds.select(&second)?))
}

/// Prefix subsets. For [`SplitSource::TrainHalved`] the first
/// `train_count` training samples are halved into train and test, and
/// `ds_test` is ignored.
pub fn apply_split(
    ds_train: &LabeledDataset,
    ds_test: &LabeledDataset,
    spec: &SplitSpec,
) -> Result<(LabeledDataset, LabeledDataset)> {
    match spec.source {
        SplitSource::DisjointTrainTest => Ok((ds_train.prefix(spec.train_count)?, ds_test.prefix(spec.test_count)?)),
        SplitSource::TrainHalved => halve(&ds_train.prefix(spec.train_count)?),
    }
}

pub fn make_subsets(
    ds_train: &LabeledDataset,
    ds_test: &LabeledDataset,
    source: SplitSource,
    size: SizeClass,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let (train_count, test_count) = size.counts();
    apply_split(
        ds_train,
        ds_test,
        &SplitSpec {
            train_count,
            test_count,
            source,
        },
    )
}

pub(crate) fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Unclipped `Normal(0.5, sigma)` draws.
pub(crate) fn raw_noise(count: usize, sigma: f64, seed: u64) -> Result<Vec<f64>> {
    let normal = Normal::new(0.5, sigma).map_err(|e| Error::Config(format!("noise sigma {sigma}: {e}")))?;
    let mut rng = rng_stream(seed, 0);
    Ok((0..count).map(|_| normal.sample(&mut rng)).collect())
}

/// Fixed noise images: `Normal(0.5, sigma)` clipped to [0, 1], labels assigned round-robin.
pub fn gaussian_noise_dataset(
    shape: &[usize],
    n: usize,
    class_count: usize,
    sigma: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if class_count < 2 || n < class_count {
        return Err(Error::Config(format!("{n} noise samples for {class_count} classes")));
    }
    let per = numel(shape);
    let data = raw_noise(n * per, sigma, seed)?
        .into_iter()
        .map(|v| v.clamp(0.0, 1.0))
        .collect();
    let mut full = vec![n];
    full.extend_from_slice(shape);
    let labels = (0..n).map(|i| i % class_count).collect();
    let mut ds = LabeledDataset::new(
        format!("noise-n{n}-s{seed}"),
        Provenance::GaussianNoise,
        Tensor::new(full, data)?,
        labels,
        class_count,
    )?;
    ds.seed = Some(seed);
    ds.sigma = Some(sigma);
    Ok(ds)
}

/// Replaces `round(fraction·N)` seed-chosen inputs with fixed noise images;
/// returns the new dataset and the sorted replaced indices.
pub fn mix_noise_with_indices(
    ds: &LabeledDataset,
    fraction: f64,
    sigma: f64,
    seed: u64,
) -> Result<(LabeledDataset, Vec<usize>)> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Config(format!("noise fraction {fraction} outside [0, 1]")));
    }
    let n = ds.len();
    let count = (fraction * n as f64).round() as usize;
    let mut out = ds.clone();
    if count == 0 {
        return Ok((out, Vec::new()));
    }
    let per = numel(ds.sample_shape());
    let noise: Vec<f64> = raw_noise(n * per, sigma, seed)?
        .into_iter()
        .map(|v| v.clamp(0.0, 1.0))
        .collect();
    let mut chosen = index::sample(&mut rng_stream(seed, 1), n, count).into_vec();
    chosen.sort_unstable();
    let data = out.inputs.data_mut();
    for &i in &chosen {
        data[i * per..(i + 1) * per].copy_from_slice(&noise[i * per..(i + 1) * per]);
    }
    out.provenance = Provenance::Mixed;
    out.name = format!("{}+noise{fraction}", ds.name);
    out.sigma = Some(sigma);
    Ok((out, chosen))
}

pub fn mix_noise(ds: &LabeledDataset, fraction: f64, sigma: f64, seed: u64) -> Result<LabeledDataset> {
    mix_noise_with_indices(ds, fraction, sigma, seed).map(|(d, _)| d)
}

/// Parameters of the Gaussian-blob generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlobsSpec {
    pub class_count: usize,
    pub dim: usize,
    /// Distance between any two class means.
    pub separation: f64,
    /// Per-coordinate standard deviation around each mean.
    pub sigma: f64,
}

impl BlobsSpec {
    /// Mean of class `c`: `separation/√2 · e_c`, so all pairwise distances equal `separation`.
    pub fn class_mean(&self, c: usize) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        m[c] = self.separation / std::f64::consts::SQRT_2;
        m
    }
}

/// Class-conditional Gaussian clusters, shape `N×dim×1×1`, balanced round-robin labels.
///
/// Independent draws from the same distribution come from distinct seeds.
pub fn synthetic_blobs(n: usize, spec: &BlobsSpec, seed: u64) -> Result<LabeledDataset> {
    if spec.separation < 0.0 || !spec.separation.is_finite() {
        return Err(Error::Config(format!("blob separation {} invalid", spec.separation)));
    }
    if spec.class_count < 2 || spec.dim < spec.class_count {
        return Err(Error::Config(format!(
            "blobs need 2 <= class_count <= dim, got {} classes in {} dims",
            spec.class_count, spec.dim
        )));
    }
    if n == 0 {
        return Err(Error::Config("blobs need at least one sample".into()));
    }
    let normal = Normal::new(0.0, spec.sigma).map_err(|e| Error::Config(format!("blob sigma: {e}")))?;
    let mut rng = rng_stream(seed, 2);
    let means: Vec<Vec<f64>> = (0..spec.class_count).map(|c| spec.class_mean(c)).collect();
    let mut data = Vec::with_capacity(n * spec.dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % spec.class_count;
        labels.push(c);
        data.extend(means[c].iter().map(|m| m + normal.sample(&mut rng)));
    }
    let mut ds = LabeledDataset::new(
        format!("blobs-n{n}-s{seed}"),
        Provenance::SyntheticBlobs,
        Tensor::new(vec![n, spec.dim, 1, 1], data)?,
        labels,
        spec.class_count,
    )?;
    ds.seed = Some(seed);
    ds.sigma = Some(spec.sigma);
    Ok(ds)
}
