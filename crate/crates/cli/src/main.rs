use std::path::{Path, PathBuf};

use afterkernel::harness::{
    emit_plotdata, evaluate_checkpoint, run_experiment, run_experiment_on, save_csv, sweep_width, train_seed,
    DatasetKind, ExperimentConfig, Metric, MetricRecord, FULL_SCHEDULE,
};
use afterkernel::kernel::{
    alignment, effective_rank, extract_with, gram_with, load_gram, save_embeddings, save_gram, EmbeddingKind,
    GramOptions,
};
use afterkernel::nn::{ArchitectureId, Checkpoint, Network};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "afterkernel", version, about = "Tangent-kernel analysis of trained networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset kind: mnist, cifar10 or synth.
    #[arg(long)]
    dataset: Option<String>,
    /// Directory with the raw dataset files.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Architecture id, e.g. fully_connected or vgg_like:channels=8x16.
    #[arg(long)]
    arch: Option<String>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Comma-separated checkpoint epochs, starting with 0.
    #[arg(long, value_delimiter = ',')]
    epochs: Option<Vec<u32>>,
    /// Use the long 0,1,3,10,30,100,200 schedule.
    #[arg(long, conflicts_with = "epochs")]
    full_schedule: bool,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(kind) = &self.dataset {
            cfg.dataset.kind = match kind.as_str() {
                "mnist" => DatasetKind::Mnist,
                "cifar10" => DatasetKind::Cifar10,
                "synth" => DatasetKind::Synth,
                other => bail!("unknown dataset `{other}` (expected mnist, cifar10 or synth)"),
            };
        }
        if let Some(dir) = &self.data_dir {
            cfg.dataset.dir = Some(dir.clone());
        }
        if let Some(arch) = &self.arch {
            cfg.arch = arch.parse::<ArchitectureId>()?;
        }
        if let Some(seeds) = &self.seeds {
            cfg.seeds = seeds.clone();
        }
        if let Some(epochs) = &self.epochs {
            cfg.set_schedule(epochs);
        }
        if self.full_schedule {
            cfg.set_schedule(&FULL_SCHEDULE);
        }
        if let Some(out) = &self.out {
            cfg.out_dir = Some(out.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    FullTangent,
    Conjugate,
}

impl From<KindArg> for EmbeddingKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::FullTangent => EmbeddingKind::FullTangent,
            KindArg::Conjugate => EmbeddingKind::Conjugate,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed and save all checkpoints.
    Train(Common),
    /// Save embeddings (and optionally their Gram matrix) at checkpoints.
    ExtractKernel {
        #[command(flatten)]
        common: Common,
        /// Use this checkpoint instead of training.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "full-tangent")]
        kind: KindArg,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Also save the Gram matrix of the embeddings.
        #[arg(long)]
        gram: bool,
    },
    /// SVM test error on tangent and conjugate features.
    SvmEval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Cosine invariance of tangent embeddings to image transforms.
    Invariance {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Transform families: translation, rotation, zoom, swap.
        #[arg(long, value_delimiter = ',', default_value = "translation,rotation,zoom,swap")]
        transforms: Vec<String>,
    },
    /// Alignment of the tangent and conjugate kernels, or of two saved Gram files.
    Alignment {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Two Gram files to compare directly.
        #[arg(long, num_args = 2)]
        gram: Option<Vec<PathBuf>>,
    },
    /// Effective rank of the tangent-kernel test Gram, or of a saved Gram file.
    EffectiveRank {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        gram: Option<PathBuf>,
    },
    /// Run the configured metrics for every seed and checkpoint.
    Experiment {
        #[command(flatten)]
        common: Common,
        /// Also write plot data for these figures (fig1 .. fig9).
        #[arg(long, value_delimiter = ',')]
        figure: Vec<String>,
    },
    /// Train scaled architectures near each parameter count.
    SweepWidth {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', required = true)]
        targets: Vec<usize>,
    },
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("results"))
}

fn print_records(records: &[MetricRecord]) {
    for r in records.iter().filter(|r| r.seed.is_none()) {
        let flags = if r.flags.is_empty() { String::new() } else { format!("  [{}]", r.flags.join(";")) };
        println!("epoch {:>3}  {:<24} {:.6}{flags}", r.epoch, r.metric.name(), r.value);
    }
}

/// Runs `metrics` either on one saved checkpoint or on a full experiment.
fn measure(mut cfg: ExperimentConfig, checkpoint: Option<&Path>, metrics: Vec<Metric>) -> Result<()> {
    cfg.metrics = metrics;
    cfg.validate()?;
    match checkpoint {
        Some(path) => {
            let cp = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
            let net = cp.network()?;
            let (train, test) = cfg.dataset.load()?;
            for m in evaluate_checkpoint(&cfg, &net, &train, &test)? {
                println!("{:<24} {:.6} {}", m.metric.name(), m.value, m.flags.join(";"));
            }
        }
        None => {
            cfg.out_dir = Some(out_dir(&cfg));
            let records = run_experiment(&cfg)?;
            print_records(&records);
            log::info!("wrote {}", out_dir(&cfg).join("metrics.csv").display());
        }
    }
    Ok(())
}

fn train(cfg: &ExperimentConfig) -> Result<()> {
    let (train, _) = cfg.dataset.load()?;
    let dir = out_dir(cfg).join("checkpoints");
    std::fs::create_dir_all(&dir)?;
    for &seed in &cfg.seeds {
        for cp in train_seed(cfg, &train, seed)? {
            let path = dir.join(format!("seed{seed}-epoch{}.akcp", cp.epoch));
            cp.save(&path)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn extract(cfg: &ExperimentConfig, checkpoint: Option<&Path>, kind: EmbeddingKind, split: SplitArg, with_gram: bool) -> Result<()> {
    let (train, test) = cfg.dataset.load()?;
    let data = match split {
        SplitArg::Train => &train,
        SplitArg::Test => &test,
    };
    let dir = out_dir(cfg).join("kernels");
    std::fs::create_dir_all(&dir)?;
    let mut jobs: Vec<(String, Network)> = Vec::new();
    match checkpoint {
        Some(path) => {
            let cp = Checkpoint::load(path)?;
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("checkpoint").to_string();
            jobs.push((stem, cp.network()?));
        }
        None => {
            for &seed in &cfg.seeds {
                for cp in train_seed(cfg, &train, seed)? {
                    jobs.push((format!("seed{seed}-epoch{}", cp.epoch), cp.network()?));
                }
            }
        }
    }
    let split_name = match split {
        SplitArg::Train => "train",
        SplitArg::Test => "test",
    };
    for (stem, net) in jobs {
        let e = extract_with(&net, data.images(), kind, cfg.kernel.precision)?;
        let base = format!("{stem}-{kind}-{split_name}");
        let path = dir.join(format!("{base}.akem"));
        save_embeddings(&e, &path)?;
        println!("{}", path.display());
        if with_gram {
            let g = gram_with(&e, &e, GramOptions { block_rows: cfg.kernel.block_rows })?;
            let path = dir.join(format!("{base}.akgm"));
            save_gram(&g, &path)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Train(common) => train(&common.config()?),
        Command::ExtractKernel {
            common,
            checkpoint,
            kind,
            split,
            gram,
        } => extract(&common.config()?, checkpoint.as_deref(), kind.into(), split, gram),
        Command::SvmEval { common, checkpoint } => {
            measure(common.config()?, checkpoint.as_deref(), vec![Metric::SvmError, Metric::CkSvmError])
        }
        Command::Invariance {
            common,
            checkpoint,
            transforms,
        } => {
            let metrics = transforms
                .iter()
                .map(|t| {
                    format!("{t}_invariance")
                        .parse::<Metric>()
                        .ok()
                        .filter(|m| m.transform_family().is_some())
                        .with_context(|| format!("unknown transform family `{t}`"))
                })
                .collect::<Result<Vec<_>>>()?;
            measure(common.config()?, checkpoint.as_deref(), metrics)
        }
        Command::Alignment {
            common,
            checkpoint,
            gram,
        } => match gram {
            Some(files) => {
                let (g, h) = (load_gram(&files[0])?, load_gram(&files[1])?);
                println!("{:.16e}", alignment(&g, &h)?);
                Ok(())
            }
            None => measure(common.config()?, checkpoint.as_deref(), vec![Metric::CkAlignment]),
        },
        Command::EffectiveRank {
            common,
            checkpoint,
            gram,
        } => match gram {
            Some(file) => {
                let r = effective_rank(&load_gram(&file)?)?;
                println!("{:.16e}", r.value);
                if !r.converged {
                    log::warn!("power iteration did not converge in {} iterations", r.iterations);
                }
                Ok(())
            }
            None => measure(common.config()?, checkpoint.as_deref(), vec![Metric::EffectiveRank]),
        },
        Command::Experiment { common, figure } => {
            let mut cfg = common.config()?;
            cfg.out_dir = Some(out_dir(&cfg));
            let (train, test) = cfg.dataset.load()?;
            let records = run_experiment_on(&cfg, &train, &test)?;
            let dir = out_dir(&cfg);
            std::fs::create_dir_all(&dir)?;
            save_csv(&records, dir.join("metrics.csv"))?;
            std::fs::write(dir.join("config.toml"), cfg.to_toml())?;
            print_records(&records);
            for fig in &figure {
                for path in emit_plotdata(&records, fig, dir.join("plotdata"))? {
                    log::info!("wrote {}", path.display());
                }
            }
            Ok(())
        }
        Command::SweepWidth { common, targets } => {
            let mut cfg = common.config()?;
            cfg.out_dir = Some(out_dir(&cfg));
            let (rows, _) = sweep_width(&cfg, &targets)?;
            for r in rows {
                println!(
                    "target {:>8}  params {:>8}  epoch {:>3}  nn_error {:.4} +- {:.4}  {}",
                    r.target, r.params, r.epoch, r.nn_error_mean, r.nn_error_std, r.arch
                );
            }
            Ok(())
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
