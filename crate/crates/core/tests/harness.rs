use afterkernel::harness::{
    emit_plotdata, mean_std, run_experiment, solve_width, sweep_width, DatasetKind, ExperimentConfig, Metric,
    MetricRecord, CSV_HEADER,
};
use afterkernel::nn::{ArchitectureId, Family};
use afterkernel::{Error, Shape};

fn synth_config(metrics: &[Metric], schedule: &[u32]) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        seeds: vec![0, 1],
        metrics: metrics.to_vec(),
        ..ExperimentConfig::default()
    };
    cfg.dataset.kind = DatasetKind::Synth;
    cfg.dataset.n_train = 200;
    cfg.dataset.n_test = 200;
    cfg.set_schedule(schedule);
    cfg
}

/// `784w + w + 3(w^2 + w) + w + 1`
fn fc_count(w: usize) -> usize {
    784 * w + w + 3 * (w * w + w) + w + 1
}

#[test]
fn svm_error_on_separable_synth_data_at_init() {
    let records = run_experiment(&synth_config(&[Metric::SvmError], &[0])).unwrap();
    let per_seed: Vec<&MetricRecord> = records.iter().filter(|r| r.seed.is_some()).collect();
    assert_eq!(per_seed.len(), 2);
    let mean = records.iter().find(|r| r.seed.is_none()).unwrap();
    assert!(mean.value < 0.05, "mean svm error {}", mean.value);
    assert_eq!(mean.dataset, "synth-s2");
}

#[test]
fn effective_rank_at_least_one() {
    let records = run_experiment(&synth_config(&[Metric::EffectiveRank], &[0, 1])).unwrap();
    assert_eq!(records.len(), 2 * 2 + 2);
    assert!(records.iter().all(|r| r.value >= 1.0));
}

#[test]
fn identical_configs_give_identical_csv_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for run in ["a", "b"] {
        let mut cfg = synth_config(&[Metric::SvmError, Metric::SwapInvariance, Metric::NnError], &[0, 1]);
        cfg.out_dir = Some(dir.path().join(run));
        run_experiment(&cfg).unwrap();
        bytes.push(std::fs::read(dir.path().join(run).join("metrics.csv")).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
    let text = String::from_utf8(bytes.pop().unwrap()).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
    assert!(!text.contains('\r'));
    assert!(text.lines().last().unwrap().starts_with("mean,"));
}

#[test]
fn written_config_reloads() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = synth_config(&[Metric::NnError], &[0]);
    cfg.out_dir = Some(dir.path().to_path_buf());
    run_experiment(&cfg).unwrap();
    let back = ExperimentConfig::load(dir.path().join("config.toml")).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn fully_connected_widths_minimize_count_distance() {
    let base = ArchitectureId::new(Family::FullyConnected);
    let input = Shape::new(28, 28, 1);
    for target in [60_000, 80_000, 100_000] {
        let best = (1..=4096)
            .min_by_key(|&w| (fc_count(w).abs_diff(target), std::cmp::Reverse(w)))
            .unwrap();
        let arch = solve_width(base, input, target).unwrap();
        assert_eq!(arch.hidden(), best, "target {target}");
        assert_eq!(arch.param_count(input).unwrap(), fc_count(best));
    }
    assert_eq!(solve_width(base, input, 100_000).unwrap().hidden(), 94);
    assert_eq!(fc_count(94), 100_675);
}

#[test]
fn exact_target_keeps_architecture() {
    let input = Shape::new(28, 28, 1);
    for arch in ["vgg_like", "fully_connected", "mega_vgg_like"] {
        let arch: ArchitectureId = arch.parse().unwrap();
        let count = arch.param_count(input).unwrap();
        assert_eq!(solve_width(arch, input, count).unwrap(), arch);
    }
}

#[test]
fn tiny_target_is_a_config_error() {
    let err = solve_width(ArchitectureId::new(Family::FullyConnected), Shape::new(28, 28, 1), 1).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
    assert!(err.to_string().contains("width 1"), "{err}");
}

#[test]
fn sweep_reports_one_row_per_target_and_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = synth_config(&[Metric::NnError], &[0, 1]);
    cfg.out_dir = Some(dir.path().to_path_buf());
    let (rows, records) = sweep_width(&cfg, &[500, 2_000]).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].params < rows[2].params);
    assert!(records.iter().all(|r| r.metric == Metric::NnError));
    let sweep = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 5);
    assert!(dir.path().join("metrics.csv").is_file());
}

#[test]
fn mean_std_single_value_has_zero_deviation() {
    assert_eq!(mean_std(&[0.25]), (0.25, 0.0));
    let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
    assert_eq!(m, 2.0);
    assert!((s - 1.0).abs() < 1e-15);
}

fn record(arch: &str, seed: Option<u64>, epoch: u32, metric: Metric, value: f64) -> MetricRecord {
    MetricRecord {
        seed,
        arch: arch.into(),
        dataset: "mnist".into(),
        epoch,
        metric,
        value,
        flags: Vec::new(),
    }
}

#[test]
fn plotdata_one_series_per_architecture() {
    let dir = tempfile::tempdir().unwrap();
    let mut records = Vec::new();
    for arch in ["vgg_like", "fully_connected"] {
        for seed in 0..2 {
            for epoch in [0, 1] {
                records.push(record(arch, Some(seed), epoch, Metric::SvmError, 0.1 * f64::from(epoch) + seed as f64));
            }
        }
    }
    let files = emit_plotdata(&records, "fig1a", dir.path()).unwrap();
    let series: Vec<_> = files.iter().filter(|p| p.extension().is_some_and(|e| e == "dat")).collect();
    assert_eq!(series.len(), 2);
    assert!(files.iter().any(|p| p.to_string_lossy().ends_with("manifest.txt")));
    let text = std::fs::read_to_string(series[0]).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split_whitespace().map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][1], 0.5);
    assert!((rows[0][2] - 0.5f64.sqrt()).abs() < 1e-15);
}

#[test]
fn plotdata_single_seed_has_zero_std() {
    let dir = tempfile::tempdir().unwrap();
    let records: Vec<MetricRecord> =
        [0, 1, 3].iter().map(|&e| record("fully_connected", Some(0), e, Metric::SvmError, 0.2)).collect();
    let files = emit_plotdata(&records, "fig1a", dir.path()).unwrap();
    let dat = files.iter().find(|p| p.extension().is_some_and(|e| e == "dat")).unwrap();
    let text = std::fs::read_to_string(dat).unwrap();
    for line in text.lines().filter(|l| !l.starts_with('#')) {
        assert_eq!(line.split_whitespace().nth(2).unwrap().parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn plotdata_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert!(emit_plotdata(&[], "fig1a", dir.path()).is_err());
    let records = vec![record("fully_connected", Some(0), 0, Metric::NnError, 0.2)];
    let err = emit_plotdata(&records, "fig1a", dir.path()).unwrap_err();
    assert!(err.to_string().contains("svm_error"), "{err}");
}

#[test]
fn default_parameter_counts_on_mnist_shape() {
    let input = Shape::new(28, 28, 1);
    for (arch, count) in [("vgg_like", 59_659), ("mega_vgg_like", 970_129), ("fully_connected", 100_675), ("sum_net", 49)] {
        let arch: ArchitectureId = arch.parse().unwrap();
        assert_eq!(arch.param_count(input).unwrap(), count, "{arch}");
    }
}
