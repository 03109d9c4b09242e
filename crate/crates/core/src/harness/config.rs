use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{binary_task, load_cifar10, load_idx, synth_dataset, Dataset, Split};
use crate::error::{Error, Result, ResultExt};
use crate::image::Shape;
use crate::kernel::Precision;
use crate::nn::{ArchitectureId, Family, TrainConfig};
use crate::svm::SvmConfig;

/// Checkpoint schedule used for the long runs.
pub const FULL_SCHEDULE: [u32; 7] = [0, 1, 3, 10, 30, 100, 200];
pub const DESK_SCHEDULE: [u32; 4] = [0, 1, 3, 10];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    SvmError,
    NnError,
    SwapInvariance,
    TranslationInvariance,
    RotationInvariance,
    ZoomInvariance,
    CkAlignment,
    CkSvmError,
    EffectiveRank,
}

impl Metric {
    pub const ALL: [Metric; 9] = [
        Metric::SvmError,
        Metric::NnError,
        Metric::SwapInvariance,
        Metric::TranslationInvariance,
        Metric::RotationInvariance,
        Metric::ZoomInvariance,
        Metric::CkAlignment,
        Metric::CkSvmError,
        Metric::EffectiveRank,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::SvmError => "svm_error",
            Metric::NnError => "nn_error",
            Metric::SwapInvariance => "swap_invariance",
            Metric::TranslationInvariance => "translation_invariance",
            Metric::RotationInvariance => "rotation_invariance",
            Metric::ZoomInvariance => "zoom_invariance",
            Metric::CkAlignment => "ck_alignment",
            Metric::CkSvmError => "ck_svm_error",
            Metric::EffectiveRank => "effective_rank",
        }
    }

    /// Transform family measured by an invariance metric.
    pub fn transform_family(self) -> Option<&'static str> {
        match self {
            Metric::SwapInvariance => Some("swap"),
            Metric::TranslationInvariance => Some("translation"),
            Metric::RotationInvariance => Some("rotation"),
            Metric::ZoomInvariance => Some("zoom"),
            _ => None,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown metric `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    #[default]
    Mnist,
    Cifar10,
    Synth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    /// Directory holding the raw files. Defaults to `data/mnist` or
    /// `data/cifar-10-batches-bin`.
    pub dir: Option<PathBuf>,
    /// Original labels mapped to 0 and 1. Defaults to 3 vs 8 for MNIST and
    /// cat vs dog (3 vs 5) for CIFAR-10; unused for synthetic data.
    pub classes: Option<[u32; 2]>,
    /// The first `n_train` / `n_test` examples of the binary task are used.
    pub n_train: usize,
    pub n_test: usize,
    /// Synthetic data only.
    pub shape: Shape,
    pub separation: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            kind: DatasetKind::Mnist,
            dir: None,
            classes: None,
            n_train: 2000,
            n_test: 2000,
            shape: Shape::new(8, 8, 1),
            separation: 2.0,
            seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn dir(&self) -> PathBuf {
        self.dir.clone().unwrap_or_else(|| {
            PathBuf::from(match self.kind {
                DatasetKind::Cifar10 => "data/cifar-10-batches-bin",
                _ => "data/mnist",
            })
        })
    }

    pub fn classes(&self) -> [u32; 2] {
        self.classes.unwrap_or(match self.kind {
            DatasetKind::Cifar10 => [3, 5],
            _ => [3, 8],
        })
    }

    /// Loads the train and test subsets.
    pub fn load(&self) -> Result<(Dataset, Dataset)> {
        if self.n_train == 0 || self.n_test == 0 {
            return Err(Error::Config("n_train and n_test must be positive".into()));
        }
        match self.kind {
            DatasetKind::Synth => {
                let train = synth_dataset(self.n_train, self.shape, self.separation, self.seed, Split::Train)?;
                let test = synth_dataset(self.n_test, self.shape, self.separation, self.seed.wrapping_add(1), Split::Test)?;
                Ok((train, test))
            }
            DatasetKind::Mnist => {
                let dir = self.dir();
                let load = |img: &str, lbl: &str, split| {
                    load_idx(dir.join(img), dir.join(lbl), split).context(format_args!("reading MNIST from {}", dir.display()))
                };
                let train = load("train-images-idx3-ubyte", "train-labels-idx1-ubyte", Split::Train)?;
                let test = load("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte", Split::Test)?;
                self.subsets(train, test)
            }
            DatasetKind::Cifar10 => {
                let dir = self.dir();
                let batches: Vec<PathBuf> = (1..=5).map(|i| dir.join(format!("data_batch_{i}.bin"))).collect();
                let ctx = format!("reading CIFAR-10 from {}", dir.display());
                let train = load_cifar10(&batches, Split::Train).context(&ctx)?;
                let test = load_cifar10(&[dir.join("test_batch.bin")], Split::Test).context(&ctx)?;
                self.subsets(train, test)
            }
        }
    }

    fn subsets(&self, train: Dataset, test: Dataset) -> Result<(Dataset, Dataset)> {
        let [a, b] = self.classes();
        let train = binary_task(&train, a, b)?.take(self.n_train)?;
        let test = binary_task(&test, a, b)?.take(self.n_test)?;
        Ok((train, test))
    }
}

/// How the single scalar that normalizes SVM features is fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RescaleMode {
    /// Fit on the training embeddings, apply the same scalar to test.
    #[default]
    Train,
    /// Fit on train and test rows together.
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelOptions {
    /// Storage for full-tangent embeddings; conjugate ones are always f64.
    pub precision: Precision,
    pub rescale: RescaleMode,
    pub block_rows: usize,
}

impl Default for KernelOptions {
    fn default() -> Self {
        KernelOptions {
            precision: Precision::F32,
            rescale: RescaleMode::Train,
            block_rows: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub arch: ArchitectureId,
    pub seeds: Vec<u64>,
    pub metrics: Vec<Metric>,
    /// Where `metrics.csv` (and other outputs) are written.
    pub out_dir: Option<PathBuf>,
    pub dataset: DatasetSpec,
    /// The epoch count is implied by the last checkpoint epoch.
    pub train: TrainConfig,
    pub kernel: KernelOptions,
    pub svm: SvmConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            arch: ArchitectureId::new(Family::FullyConnected),
            seeds: vec![0, 1, 2],
            metrics: Metric::ALL.to_vec(),
            out_dir: None,
            dataset: DatasetSpec::default(),
            train: TrainConfig::default().with_schedule(&DESK_SCHEDULE),
            kernel: KernelOptions::default(),
            svm: SvmConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.set_schedule(&cfg.train.checkpoint_epochs.clone());
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).context(format_args!("reading {}", path.display()))?;
        Self::from_toml(&text).context(format_args!("parsing {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn set_schedule(&mut self, schedule: &[u32]) {
        self.train = self.train.clone().with_schedule(schedule);
    }

    /// Dataset label used in records; `+aug` marks augmented training.
    pub fn dataset_label(&self, data: &Dataset) -> String {
        if self.train.augmentation.is_some() {
            format!("{}+aug", data.name)
        } else {
            data.name.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        if seeds.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("seeds {:?} are not distinct", self.seeds)));
        }
        if self.metrics.is_empty() {
            return Err(Error::Config("at least one metric is required".into()));
        }
        if let Some(m) = self.metrics.iter().enumerate().find_map(|(i, m)| self.metrics[..i].contains(m).then_some(m)) {
            return Err(Error::Config(format!("metric {m} listed twice")));
        }
        if self.kernel.block_rows == 0 {
            return Err(Error::Config("kernel.block_rows must be positive".into()));
        }
        if self.train.epochs != self.train.checkpoint_epochs.last().copied().unwrap_or(0) {
            return Err(Error::Config("training must stop at the last checkpoint epoch".into()));
        }
        self.train.validate()
    }
}
