use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use super::config::{ExperimentConfig, Metric, RescaleMode};
use crate::data::Dataset;
use crate::error::{Error, Result, ResultExt};
use crate::kernel::{
    alignment, apply_rescale, effective_rank, extract_with, fit_rescale, gram_with, EmbeddingKind, EmbeddingMatrix,
    GramMatrix, GramOptions, Precision,
};
use crate::nn::{train_sgd, Checkpoint, Network};
use crate::perturb::{invariance, Transform};
use crate::svm::{svm_test_error, train_svm_with};

pub const CSV_HEADER: [&str; 7] = ["seed", "arch", "dataset", "epoch", "metric", "value", "flags"];
pub const MEAN_SEED: &str = "mean";

pub const FLAG_SVM_NOT_CONVERGED: &str = "svm_not_converged";
pub const FLAG_ZERO_EMBEDDINGS: &str = "zero_embedding_pairs";
pub const FLAG_POWER_ITERATION_CAP: &str = "power_iteration_cap";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    /// `None` marks a seed-mean row.
    pub seed: Option<u64>,
    pub arch: String,
    pub dataset: String,
    pub epoch: u32,
    pub metric: Metric,
    pub value: f64,
    pub flags: Vec<String>,
}

impl MetricRecord {
    pub fn seed_label(&self) -> String {
        self.seed.map_or_else(|| MEAN_SEED.to_string(), |s| s.to_string())
    }
}

/// One metric value at one checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub metric: Metric,
    pub value: f64,
    pub flags: Vec<String>,
}

fn measurement(metric: Metric, value: f64, flags: Vec<&str>) -> Measurement {
    Measurement {
        metric,
        value,
        flags: flags.into_iter().map(String::from).collect(),
    }
}

/// Loads the configured data, runs every seed and, when `out_dir` is set,
/// writes `metrics.csv` and the resolved `config.toml` there.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<MetricRecord>> {
    cfg.validate()?;
    let (train, test) = cfg.dataset.load()?;
    let records = run_experiment_on(cfg, &train, &test)?;
    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir).context(format_args!("creating {}", dir.display()))?;
        save_csv(&records, dir.join("metrics.csv"))?;
        std::fs::write(dir.join("config.toml"), cfg.to_toml())?;
    }
    Ok(records)
}

/// Per-seed records for every checkpoint and metric, followed by seed-mean
/// rows, sorted by seed, epoch and metric name.
pub fn run_experiment_on(cfg: &ExperimentConfig, train: &Dataset, test: &Dataset) -> Result<Vec<MetricRecord>> {
    cfg.validate()?;
    let arch = cfg.arch.to_string();
    let dataset = cfg.dataset_label(train);
    let mut records = Vec::new();
    for &seed in &cfg.seeds {
        let checkpoints = train_seed(cfg, train, seed)?;
        let mut net = Network::build(cfg.arch, train_shape(train)?, seed)?;
        for cp in &checkpoints {
            cp.load_into(&mut net)?;
            let started = Instant::now();
            let measured = evaluate_checkpoint(cfg, &net, train, test)
                .context(format_args!("seed {seed}, epoch {}", cp.epoch))?;
            log::info!("seed {seed} epoch {} evaluated in {:.1?}", cp.epoch, started.elapsed());
            records.extend(measured.into_iter().map(|m| MetricRecord {
                seed: Some(seed),
                arch: arch.clone(),
                dataset: dataset.clone(),
                epoch: cp.epoch,
                metric: m.metric,
                value: m.value,
                flags: m.flags,
            }));
        }
    }
    let means = seed_means(&records);
    records.extend(means);
    sort_records(&mut records);
    Ok(records)
}

fn train_shape(train: &Dataset) -> Result<crate::image::Shape> {
    train
        .shape()
        .ok_or_else(|| Error::Input(format!("training set {} is empty", train.name)))
}

/// Builds the network for `seed` and trains it, returning every checkpoint.
pub fn train_seed(cfg: &ExperimentConfig, train: &Dataset, seed: u64) -> Result<Vec<Checkpoint>> {
    let mut net = Network::build(cfg.arch, train_shape(train)?, seed)?;
    let init = net.params().to_vec();
    let tcfg = crate::nn::TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    let started = Instant::now();
    let checkpoints = train_sgd(&mut net, train, &tcfg).context(format_args!("training seed {seed}"))?;
    log::info!("seed {seed}: trained {} epochs in {:.1?}", tcfg.epochs, started.elapsed());
    if checkpoints.first().map(|c| c.params.as_slice()) != Some(init.as_slice()) {
        return Err(Error::Precondition(format!(
            "seed {seed}: epoch-0 checkpoint differs from the initialization"
        )));
    }
    Ok(checkpoints)
}

/// Computes every configured metric for `net`.
pub fn evaluate_checkpoint(
    cfg: &ExperimentConfig,
    net: &Network,
    train: &Dataset,
    test: &Dataset,
) -> Result<Vec<Measurement>> {
    let wants = |m: Metric| cfg.metrics.contains(&m);
    let gram_opts = GramOptions {
        block_rows: cfg.kernel.block_rows,
    };
    let mut out = Vec::new();

    let needs_tangent = wants(Metric::SvmError) || wants(Metric::CkAlignment) || wants(Metric::EffectiveRank);
    let mut tangent_test = if needs_tangent {
        Some(extract_with(net, test.images(), EmbeddingKind::FullTangent, cfg.kernel.precision)?)
    } else {
        None
    };
    let needs_conjugate = wants(Metric::CkAlignment) || wants(Metric::CkSvmError);
    let conjugate_test = if needs_conjugate {
        Some(extract_with(net, test.images(), EmbeddingKind::Conjugate, Precision::F64)?)
    } else {
        None
    };

    if let (true, Some(e)) = (wants(Metric::CkAlignment) || wants(Metric::EffectiveRank), &tangent_test) {
        let g = gram_with(e, e, gram_opts)?;
        if wants(Metric::EffectiveRank) {
            let r = effective_rank(&g)?;
            let flags = if r.converged { vec![] } else { vec![FLAG_POWER_ITERATION_CAP] };
            out.push(measurement(Metric::EffectiveRank, r.value, flags));
        }
        if let (true, Some(c)) = (wants(Metric::CkAlignment), &conjugate_test) {
            let h: GramMatrix = gram_with(c, c, gram_opts)?;
            out.push(measurement(Metric::CkAlignment, alignment(&g, &h)?, vec![]));
        }
    }

    if wants(Metric::SvmError) {
        let test_emb = tangent_test.take().expect("extracted above");
        let (value, flags) = svm_error(cfg, net, train, test, EmbeddingKind::FullTangent, test_emb)?;
        out.push(measurement(Metric::SvmError, value, flags));
    }
    if let (true, Some(c)) = (wants(Metric::CkSvmError), conjugate_test) {
        let (value, flags) = svm_error(cfg, net, train, test, EmbeddingKind::Conjugate, c)?;
        out.push(measurement(Metric::CkSvmError, value, flags));
    }

    if wants(Metric::NnError) {
        let wrong = test
            .images()
            .iter()
            .zip(test.labels())
            .map(|(x, &y)| Ok(u32::from(net.predict_class(x)?) != y))
            .collect::<Result<Vec<bool>>>()?
            .into_iter()
            .filter(|&w| w)
            .count();
        out.push(measurement(Metric::NnError, wrong as f64 / test.len() as f64, vec![]));
    }

    for metric in cfg.metrics.iter().copied() {
        if let Some(family) = metric.transform_family() {
            let inv = invariance(net, test.images(), &Transform::family(family)?, EmbeddingKind::FullTangent)?;
            let flags = if inv.warning() { vec![FLAG_ZERO_EMBEDDINGS] } else { vec![] };
            out.push(measurement(metric, inv.value, flags));
        }
    }

    out.sort_by_key(|m| cfg.metrics.iter().position(|&x| x == m.metric));
    Ok(out)
}

fn svm_error(
    cfg: &ExperimentConfig,
    net: &Network,
    train: &Dataset,
    test: &Dataset,
    kind: EmbeddingKind,
    test_emb: EmbeddingMatrix,
) -> Result<(f64, Vec<&'static str>)> {
    let precision = match kind {
        EmbeddingKind::FullTangent => cfg.kernel.precision,
        EmbeddingKind::Conjugate => Precision::F64,
    };
    let train_emb = extract_with(net, train.images(), kind, precision)?;
    let factor = match cfg.kernel.rescale {
        RescaleMode::Train => fit_rescale(&[&train_emb])?,
        RescaleMode::Joint => fit_rescale(&[&train_emb, &test_emb])?,
    };
    let train_emb = apply_rescale(train_emb, factor);
    let model = train_svm_with(&train_emb, &train.signed_labels()?, &cfg.svm)?;
    drop(train_emb);
    let error = svm_test_error(&model, &apply_rescale(test_emb, factor), &test.signed_labels()?)?;
    let flags = if model.diagnostics.converged {
        vec![]
    } else {
        vec![FLAG_SVM_NOT_CONVERGED]
    };
    Ok((error, flags))
}

/// One mean row per (arch, dataset, epoch, metric) over the per-seed rows.
/// Flags are the union of the seeds' flags.
pub fn seed_means(records: &[MetricRecord]) -> Vec<MetricRecord> {
    let mut groups: BTreeMap<(String, String, u32, &str), (Vec<f64>, Vec<String>, Metric)> = BTreeMap::new();
    for r in records.iter().filter(|r| r.seed.is_some()) {
        let entry = groups
            .entry((r.arch.clone(), r.dataset.clone(), r.epoch, r.metric.name()))
            .or_insert_with(|| (Vec::new(), Vec::new(), r.metric));
        entry.0.push(r.value);
        entry.1.extend(r.flags.iter().cloned());
    }
    groups
        .into_iter()
        .map(|((arch, dataset, epoch, _), (values, mut flags, metric))| {
            flags.sort();
            flags.dedup();
            MetricRecord {
                seed: None,
                arch,
                dataset,
                epoch,
                metric,
                value: values.iter().sum::<f64>() / values.len() as f64,
                flags,
            }
        })
        .collect()
}

/// Stable sort by seed (mean rows last), epoch, then metric name.
pub fn sort_records(records: &mut [MetricRecord]) {
    records.sort_by(|a, b| {
        (a.seed.is_none(), a.seed, a.epoch, a.metric.name()).cmp(&(b.seed.is_none(), b.seed, b.epoch, b.metric.name()))
    });
}

/// Values use 17 significant digits so they round-trip exactly.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv<W: Write>(records: &[MetricRecord], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(CSV_HEADER).map_err(csv_error)?;
    for r in records {
        w.write_record([
            r.seed_label(),
            r.arch.clone(),
            r.dataset.clone(),
            r.epoch.to_string(),
            r.metric.name().to_string(),
            format_value(r.value),
            r.flags.join(";"),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<MetricRecord>> {
    let mut reader = csv::ReaderBuilder::new().from_reader(input);
    let header = reader.headers().map_err(csv_error)?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Input(format!("unexpected CSV header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut records = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let row = row.map_err(csv_error)?;
        let bad = |what: &str| Error::Input(format!("CSV row {}: bad {what}", line + 2));
        let seed = match &row[0] {
            MEAN_SEED => None,
            s => Some(s.parse().map_err(|_| bad("seed"))?),
        };
        records.push(MetricRecord {
            seed,
            arch: row[1].to_string(),
            dataset: row[2].to_string(),
            epoch: row[3].parse().map_err(|_| bad("epoch"))?,
            metric: row[4].parse()?,
            value: row[5].parse().map_err(|_| bad("value"))?,
            flags: row[6].split(';').filter(|f| !f.is_empty()).map(String::from).collect(),
        });
    }
    Ok(records)
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Input(format!("CSV: {other:?}")),
    }
}

pub fn save_csv(records: &[MetricRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).context(format_args!("creating {}", path.display()))?;
    write_csv(records, std::io::BufWriter::new(file))
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<MetricRecord>> {
    let path = path.as_ref();
    read_csv(std::fs::File::open(path).context(format_args!("opening {}", path.display()))?)
}
