mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use memlab::basin::{
    analytic_basin_ratio, monte_carlo_basin, write_basin_csv, BasinSpec, DescentSettings, SampleRegion,
};
use memlab::data::{BlobsSpec, SizeClass, SplitSource, CIFAR10_SHAPE, DEFAULT_NOISE_SIGMA};
use memlab::harness::{
    dataset_quality_score, emit_csv, run_trial, sweep_counts, sweep_dataset_size, sweep_noise_fraction, train_on,
    write_manifest, DataSource, DataSpec, OptimizerSettings, QualityProbe, StopRule, SweepRow, TrialConfig,
};
use memlab::models::{Activation, Architecture, ModelConfig};
use memlab::objectives::ObjectiveSpec;
use memlab::optim::OptimizerKind;
use memlab::stability::{compare_stability, stability_radius, write_stability_csv, StabilityProbe};
use serde::{Deserialize, Serialize};
use serde_json::json;

type CliResult<T> = std::result::Result<T, String>;

fn lib<T>(r: memlab::Result<T>) -> CliResult<T> {
    r.map_err(|e| e.to_string())
}

#[derive(Parser, Debug)]
#[command(name = "memlab", version, about = "Induce and measure memorization in small networks")]
struct Cli {
    /// TOML file; every value it sets overrides the matching flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, default_value = "memlab-out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one trial and write its learning curve.
    Train(TrialFlags),
    /// Epochs to memorize over a size or noise-fraction grid.
    Sweep(SweepFlags),
    /// Split-vs-standard epoch gap for a dataset.
    Quality(QualityFlags),
    /// Train a model and probe its parameter-space stability radius.
    Stability(StabilityFlags),
    /// Basin volume ratios of the two-attractor landscape.
    Basin(BasinFlags),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum DataKind {
    Blobs,
    Noise,
    Mixed,
    Cifar,
    Cached,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum CifarSplit {
    DisjointTrainTest,
    TrainHalved,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ObjectiveKindArg {
    Standard,
    Split,
    Capped,
    Targeted,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum StopRuleArg {
    Fixed,
    TrainAccuracy,
    OverfitGap,
    Memorized,
    Generalized,
}

#[derive(Args, Debug, Clone)]
struct TrialFlags {
    #[arg(long, value_enum, default_value_t = DataKind::Blobs)]
    data: DataKind,
    /// Base data that `--data mixed` replaces with noise.
    #[arg(long, value_enum, default_value_t = DataKind::Blobs)]
    mix_base: DataKind,
    #[arg(long, default_value_t = 0.5)]
    mix_fraction: f64,
    /// Per-sample input shape, comma separated. Ignored for CIFAR.
    #[arg(long, value_delimiter = ',', default_value = "32")]
    input_shape: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    class_count: usize,
    #[arg(long, default_value_t = 10.0)]
    separation: f64,
    #[arg(long, default_value_t = 1.0)]
    blob_sigma: f64,
    #[arg(long, default_value_t = DEFAULT_NOISE_SIGMA)]
    noise_sigma: f64,
    #[arg(long)]
    cifar_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = CifarSplit::TrainHalved)]
    cifar_split: CifarSplit,
    #[arg(long)]
    cached_train: Option<PathBuf>,
    #[arg(long)]
    cached_test: Option<PathBuf>,
    #[arg(long, default_value_t = 1280)]
    train_count: usize,
    #[arg(long, default_value_t = 1280)]
    test_count: usize,

    #[arg(long, value_enum, default_value_t = Arch::Mlp)]
    model: Arch,
    /// Hidden widths (mlp) or conv channels (convnet5), comma separated.
    #[arg(long, value_delimiter = ',', default_value = "128")]
    hidden: Vec<usize>,
    #[arg(long, value_enum, default_value_t = Act::Relu)]
    activation: Act,
    #[arg(long)]
    no_softmax_head: bool,

    #[arg(long, value_enum, default_value_t = ObjectiveKindArg::Standard)]
    objective: ObjectiveKindArg,
    /// Capped target accuracy; defaults to 1/classes + 0.01.
    #[arg(long)]
    k: Option<f64>,
    #[arg(long)]
    lower: Option<f64>,
    #[arg(long)]
    upper: Option<f64>,

    #[arg(long, value_enum, default_value_t = Opt::Adam)]
    optimizer: Opt,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,

    #[arg(long, default_value_t = 100)]
    max_epochs: usize,
    #[arg(long, value_enum, default_value_t = StopRuleArg::Fixed)]
    stop_rule: StopRuleArg,
    /// Train accuracy (or gap) threshold of the stop rule.
    #[arg(long, default_value_t = 0.9)]
    stop_threshold: f64,
    /// Test ceiling (memorized, default 1/classes + 0.02) or floor (generalized, default 0.8).
    #[arg(long)]
    stop_test: Option<f64>,
    /// Keep training after the stop rule first holds.
    #[arg(long)]
    run_all_epochs: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Arch {
    Mlp,
    Convnet5,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Act {
    Relu,
    Tanh,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Opt {
    Adam,
    Sgd,
}

impl TrialFlags {
    fn shape(&self) -> Vec<usize> {
        let cifar = self.data == DataKind::Cifar || (self.data == DataKind::Mixed && self.mix_base == DataKind::Cifar);
        if cifar { CIFAR10_SHAPE.to_vec() } else { self.input_shape.clone() }
    }

    fn source(&self, kind: DataKind) -> CliResult<DataSource> {
        Ok(match kind {
            DataKind::Blobs => DataSource::Blobs(BlobsSpec {
                class_count: self.class_count,
                dim: self.input_shape.iter().product(),
                separation: self.separation,
                sigma: self.blob_sigma,
            }),
            DataKind::Noise => DataSource::Noise {
                shape: self.input_shape.clone(),
                class_count: self.class_count,
                sigma: self.noise_sigma,
            },
            DataKind::Mixed => {
                if self.mix_base == DataKind::Mixed {
                    return Err("--mix-base cannot be mixed".into());
                }
                DataSource::Mixed {
                    base: Box::new(self.source(self.mix_base)?),
                    fraction: self.mix_fraction,
                    noise_sigma: self.noise_sigma,
                }
            }
            DataKind::Cifar => DataSource::Cifar {
                dir: self.cifar_dir.clone().ok_or("--data cifar needs --cifar-dir")?,
                split: match self.cifar_split {
                    CifarSplit::DisjointTrainTest => SplitSource::DisjointTrainTest,
                    CifarSplit::TrainHalved => SplitSource::TrainHalved,
                },
            },
            DataKind::Cached => DataSource::Cached {
                train: self.cached_train.clone().ok_or("--data cached needs --cached-train")?,
                test: self.cached_test.clone().ok_or("--data cached needs --cached-test")?,
            },
        })
    }

    fn model(&self) -> ModelConfig {
        ModelConfig {
            architecture: match self.model {
                Arch::Mlp => Architecture::Mlp,
                Arch::Convnet5 => Architecture::Convnet5,
            },
            input_shape: self.shape(),
            class_count: self.class_count,
            hidden: self.hidden.clone(),
            activation: match self.activation {
                Act::Relu => Activation::Relu,
                Act::Tanh => Activation::Tanh,
            },
            include_softmax_head: !self.no_softmax_head,
            seed: 0,
        }
    }

    fn naive(&self) -> f64 {
        1.0 / self.class_count as f64
    }

    fn objective(&self) -> CliResult<ObjectiveSpec> {
        match self.objective {
            ObjectiveKindArg::Standard => Ok(ObjectiveSpec::standard()),
            ObjectiveKindArg::Split => Ok(ObjectiveSpec::split()),
            ObjectiveKindArg::Capped => lib(ObjectiveSpec::capped(self.k.unwrap_or(self.naive() + 0.01))),
            ObjectiveKindArg::Targeted => match (self.lower, self.upper) {
                (Some(l), Some(u)) => lib(ObjectiveSpec::targeted(l, u)),
                _ => Err("--objective targeted needs --lower and --upper".into()),
            },
        }
    }

    fn stop_rule(&self) -> StopRule {
        let t = self.stop_threshold;
        match self.stop_rule {
            StopRuleArg::Fixed => StopRule::FixedEpochs,
            StopRuleArg::TrainAccuracy => StopRule::TrainAccuracy { threshold: t },
            StopRuleArg::OverfitGap => StopRule::OverfitGap { threshold: t },
            StopRuleArg::Memorized => StopRule::Memorized {
                train_threshold: t,
                test_ceiling: self.stop_test.unwrap_or(self.naive() + 0.02),
            },
            StopRuleArg::Generalized => StopRule::Generalized {
                train_threshold: t,
                test_floor: self.stop_test.unwrap_or(0.8),
            },
        }
    }

    fn optimizer(&self) -> OptimizerSettings {
        OptimizerSettings {
            kind: match self.optimizer {
                Opt::Adam => OptimizerKind::Adam,
                Opt::Sgd => OptimizerKind::Sgd,
            },
            learning_rate: self.lr,
            batch_size: self.batch_size,
        }
    }

    fn trial(&self, seed: u64) -> CliResult<TrialConfig> {
        Ok(TrialConfig {
            model: self.model(),
            objective: self.objective()?,
            optimizer: self.optimizer(),
            data: DataSpec::new(self.source(self.data)?, self.train_count, self.test_count),
            max_epochs: self.max_epochs,
            stop_rule: self.stop_rule(),
            stop_at_threshold: !self.run_all_epochs,
            seed,
        }
        .with_seed(seed))
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum GridArg {
    Sizes,
    Counts,
    NoiseFraction,
}

#[derive(Args, Debug)]
struct SweepFlags {
    #[command(flatten)]
    trial: TrialFlags,
    #[arg(long, value_enum, default_value_t = GridArg::Counts)]
    grid: GridArg,
    /// Size classes for `--grid sizes`: 2.5k, 5k, 10k.
    #[arg(long, value_delimiter = ',', default_value = "2.5k,5k,10k")]
    sizes: Vec<String>,
    /// `TRAINxTEST` pairs for `--grid counts`.
    #[arg(long, value_delimiter = ',', default_value = "256x256,512x512")]
    counts: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.5,1")]
    fractions: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum SweepGrid {
    Sizes { sizes: Vec<SizeClass> },
    Counts { counts: Vec<(usize, usize)> },
    NoiseFraction { fractions: Vec<f64>, noise_sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SweepRun {
    trial: TrialConfig,
    grid: SweepGrid,
    seeds: Vec<u64>,
}

#[derive(Args, Debug)]
struct QualityFlags {
    #[command(flatten)]
    trial: TrialFlags,
    #[arg(long, default_value_t = 0.9)]
    train_threshold: f64,
    /// Test accuracy allowed above the naive rate for the split probe.
    #[arg(long, default_value_t = 0.02)]
    slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct QualityRun {
    data: DataSpec,
    probe: QualityProbe,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
enum ProbeSet {
    Train,
    Test,
}

#[derive(Args, Debug)]
struct StabilityFlags {
    #[command(flatten)]
    trial: TrialFlags,
    #[arg(long, default_value_t = 0.01)]
    delta: f64,
    #[arg(long, default_value_t = memlab::stability::DEFAULT_DIRECTION_COUNT)]
    directions: usize,
    #[arg(long, default_value_t = 1e-3)]
    radius_min: f64,
    #[arg(long, default_value_t = 10.0)]
    radius_max: f64,
    #[arg(long, default_value_t = 25)]
    radius_count: usize,
    #[arg(long, value_enum, default_value_t = ProbeSet::Train)]
    probe_set: ProbeSet,
    /// Also train a split-objective model on the same data and probe both.
    #[arg(long)]
    compare_split: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StabilityRun {
    trial: TrialConfig,
    probe: StabilityProbe,
    probe_set: ProbeSet,
    /// Stop rule of the split-objective model, when one is trained.
    split_stop_rule: Option<StopRule>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum RegionArg {
    BasinUnion,
    FlatB,
}

#[derive(Args, Debug)]
struct BasinFlags {
    #[arg(long, value_delimiter = ',', default_value = "1,2,5,10")]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 3.0)]
    width_a: f64,
    #[arg(long, default_value_t = 2.0)]
    width_b: f64,
    #[arg(long, default_value_t = 0.5)]
    m_slope: f64,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 0.5)]
    step_size: f64,
    #[arg(long, default_value_t = 10_000)]
    max_steps: usize,
    #[arg(long, value_enum, default_value_t = RegionArg::BasinUnion)]
    region: RegionArg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BasinRun {
    dims: Vec<usize>,
    width_a: f64,
    width_b: f64,
    m_slope: f64,
    samples: usize,
    descent: DescentSettings,
    region: SampleRegion,
    seed: u64,
}

fn parse_count(s: &str) -> CliResult<(usize, usize)> {
    let (a, b) = s.split_once('x').ok_or_else(|| format!("count {s:?} is not TRAINxTEST"))?;
    let n = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("count {s:?}: {e}"));
    Ok((n(a)?, n(b)?))
}

fn prepare(out_dir: &Path) -> CliResult<()> {
    fs::create_dir_all(out_dir).map_err(|e| format!("{}: {e}", out_dir.display()))
}

fn manifest(out_dir: &Path, command: &str, config: &impl Serialize, result: serde_json::Value) -> CliResult<()> {
    let value = json!({ "command": command, "config": config, "result": result });
    lib(write_manifest(&value, &out_dir.join("manifest.json")))
}

fn train(cli: &Cli, flags: &TrialFlags) -> CliResult<()> {
    let cfg = config::resolve(flags.trial(cli.seed)?, cli.config.as_deref())?;
    let record = lib(run_trial(&cfg))?;
    prepare(&cli.out_dir)?;
    lib(emit_csv(&record, &cli.out_dir.join("trial.csv")))?;
    manifest(&cli.out_dir, "train", &cfg, json!(record.outcome))?;
    if let Some(last) = record.last() {
        println!(
            "epochs run {}, train acc {:.4}, test acc {:.4}, stop rule reached at {}",
            last.epoch, last.train_acc, last.test_acc, record.outcome.epochs_to_threshold
        );
    }
    Ok(())
}

fn write_sweep_csv(rows: &[SweepRow], seeds: &[u64], path: &Path) -> CliResult<()> {
    let mut text = String::from("label,seed,epochs_to_memorize\n");
    for row in rows {
        for (seed, o) in seeds.iter().zip(&row.outcomes) {
            text += &format!("{},{seed},{o}\n", row.label);
        }
        text += &format!("{},median,{}\n", row.label, row.median);
    }
    fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

fn sweep(cli: &Cli, flags: &SweepFlags) -> CliResult<()> {
    let grid = match flags.grid {
        GridArg::Sizes => SweepGrid::Sizes {
            sizes: flags.sizes.iter().map(|s| lib(s.parse())).collect::<CliResult<_>>()?,
        },
        GridArg::Counts => SweepGrid::Counts {
            counts: flags.counts.iter().map(|s| parse_count(s)).collect::<CliResult<_>>()?,
        },
        GridArg::NoiseFraction => SweepGrid::NoiseFraction {
            fractions: flags.fractions.clone(),
            noise_sigma: flags.trial.noise_sigma,
        },
    };
    let mut trial = flags.trial.clone();
    // sweeps measure epochs to memorize, which is defined for the capped objective
    trial.objective = ObjectiveKindArg::Capped;
    let run = SweepRun { trial: trial.trial(cli.seed)?, grid, seeds: flags.seeds.clone() };
    let run = config::resolve(run, cli.config.as_deref())?;
    let rows = lib(match &run.grid {
        SweepGrid::Sizes { sizes } => sweep_dataset_size(&run.trial, sizes, &run.seeds),
        SweepGrid::Counts { counts } => sweep_counts(&run.trial, counts, &run.seeds),
        SweepGrid::NoiseFraction { fractions, noise_sigma } => {
            sweep_noise_fraction(&run.trial, fractions, *noise_sigma, &run.seeds)
        }
    })?;
    prepare(&cli.out_dir)?;
    write_sweep_csv(&rows, &run.seeds, &cli.out_dir.join("sweep.csv"))?;
    manifest(&cli.out_dir, "sweep", &run, json!(rows))?;
    for row in &rows {
        println!("{}: median {}", row.label, row.median);
    }
    Ok(())
}

fn quality(cli: &Cli, flags: &QualityFlags) -> CliResult<()> {
    let t = &flags.trial;
    let run = QualityRun {
        data: DataSpec::new(t.source(t.data)?, t.train_count, t.test_count),
        probe: QualityProbe {
            model: t.model(),
            optimizer: t.optimizer(),
            max_epochs: t.max_epochs,
            train_threshold: flags.train_threshold,
            slack: flags.slack,
            seed: cli.seed,
        },
    };
    let run = config::resolve(run, cli.config.as_deref())?;
    let (train, test) = lib(run.data.build(run.probe.seed))?;
    let score = lib(dataset_quality_score(&train, &test, &run.probe))?;
    prepare(&cli.out_dir)?;
    manifest(&cli.out_dir, "quality", &run, json!(score))?;
    println!(
        "score {} (split {}, standard {}, {:?})",
        score.score, score.split_epochs, score.standard_epochs, score.status
    );
    Ok(())
}

fn stability(cli: &Cli, flags: &StabilityFlags) -> CliResult<()> {
    let trial = flags.trial.trial(cli.seed)?;
    let grid = StabilityProbe::geometric_grid(flags.radius_min, flags.radius_max, flags.radius_count);
    let probe = StabilityProbe::new(flags.delta, grid, cli.seed).with_direction_count(flags.directions);
    let split_stop_rule = flags.compare_split.then(|| StopRule::Memorized {
        train_threshold: flags.trial.stop_threshold,
        test_ceiling: flags.trial.naive() + 0.02,
    });
    let run = StabilityRun { trial, probe, probe_set: flags.probe_set, split_stop_rule };
    let run = config::resolve(run, cli.config.as_deref())?;
    lib(run.probe.validate())?;

    let (train, test) = lib(run.trial.data.build(run.trial.seed))?;
    let (model, _) = lib(train_on(&run.trial, &train, &test))?;
    let probe_data = match run.probe_set {
        ProbeSet::Train => &train,
        ProbeSet::Test => &test,
    };
    let label = format!("{:?}", run.trial.objective.kind).to_lowercase();
    let reports = match run.split_stop_rule {
        None => vec![(label, lib(stability_radius(&model, probe_data, &run.probe))?)],
        Some(rule) => {
            let mut split = run.trial.clone();
            split.objective = ObjectiveSpec::split();
            split.stop_rule = rule;
            let (split_model, _) = lib(train_on(&split, &train, &test))?;
            let (a, b) = lib(compare_stability(&model, &split_model, probe_data, &run.probe))?;
            vec![(label, a), ("split".to_string(), b)]
        }
    };
    prepare(&cli.out_dir)?;
    let refs: Vec<(&str, _)> = reports.iter().map(|(l, r)| (l.as_str(), r)).collect();
    lib(write_stability_csv(&refs, &cli.out_dir.join("stability.csv")))?;
    let summary: Vec<_> = reports
        .iter()
        .map(|(l, r)| json!({ "model": l, "stability_radius": r.stability_radius, "base_loss": r.base_loss }))
        .collect();
    manifest(&cli.out_dir, "stability", &run, json!(summary))?;
    for (l, r) in &reports {
        println!("{l}: stability radius {:e}, base loss {:.6}", r.stability_radius, r.base_loss);
    }
    Ok(())
}

fn basin(cli: &Cli, flags: &BasinFlags) -> CliResult<()> {
    let run = BasinRun {
        dims: flags.dims.clone(),
        width_a: flags.width_a,
        width_b: flags.width_b,
        m_slope: flags.m_slope,
        samples: flags.samples,
        descent: DescentSettings { step_size: flags.step_size, max_steps: flags.max_steps },
        region: match flags.region {
            RegionArg::BasinUnion => SampleRegion::BasinUnion,
            RegionArg::FlatB => SampleRegion::FlatB,
        },
        seed: cli.seed,
    };
    let run = config::resolve(run, cli.config.as_deref())?;
    let mut rows = Vec::new();
    for &n in &run.dims {
        let spec = BasinSpec::from_basin_widths(n, run.width_a, run.width_b, run.m_slope);
        let est = lib(monte_carlo_basin(&spec, run.samples, &run.descent, run.region, run.seed))?;
        println!(
            "n {n}: log ratio {:.6}, mc fraction a {:.5} b {:.5}",
            analytic_basin_ratio(&spec).ln,
            est.fraction_a,
            est.fraction_b
        );
        rows.push((spec, est));
    }
    prepare(&cli.out_dir)?;
    lib(write_basin_csv(&rows, &cli.out_dir.join("basin.csv")))?;
    let estimates: Vec<_> = rows.iter().map(|(_, e)| e).collect();
    manifest(&cli.out_dir, "basin", &run, json!(estimates))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(f) => train(&cli, f),
        Command::Sweep(f) => sweep(&cli, f),
        Command::Quality(f) => quality(&cli, f),
        Command::Stability(f) => stability(&cli, f),
        Command::Basin(f) => basin(&cli, f),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
