use std::io::Write;

use super::config::{ExperimentConfig, Metric};
use super::experiment::{format_value, run_experiment_on, save_csv, sort_records, MetricRecord};
use crate::error::{Error, Result, ResultExt};
use crate::image::Shape;
use crate::nn::ArchitectureId;

/// Largest dense width tried when solving for a parameter target.
pub const MAX_WIDTH: usize = 4096;
/// Largest first-block channel count tried for convolutional families.
pub const MAX_CHANNELS: usize = 512;

/// The architecture `base` with width `k`: the hidden width for dense
/// families, channels `(k, 2k)` for convolutional ones.
fn scaled(base: ArchitectureId, k: usize) -> ArchitectureId {
    if base.family.is_conv() {
        base.with_channels(k, 2 * k)
    } else {
        base.with_hidden(k)
    }
}

fn width_cap(base: ArchitectureId) -> usize {
    if base.family.is_conv() {
        MAX_CHANNELS
    } else {
        MAX_WIDTH
    }
}

/// The scaled architecture whose parameter count is closest to `target`
/// (larger width on ties). A target equal to the current count returns
/// `base` unchanged.
pub fn solve_width(base: ArchitectureId, input: Shape, target: usize) -> Result<ArchitectureId> {
    if base.param_count(input)? == target {
        return Ok(base);
    }
    let cap = width_cap(base);
    let count = |k: usize| scaled(base, k).param_count(input);
    let (lo, hi) = (count(1)?, count(cap)?);
    if target < lo || target > hi {
        let samples = [1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024, 2048, 4096]
            .into_iter()
            .filter(|&k| k <= cap)
            .map(|k| count(k).map(|c| format!("{c} (width {k})")))
            .collect::<Result<Vec<_>>>()?;
        return Err(Error::Config(format!(
            "{target} parameters is not reachable by scaling {base} on {input}: counts range from {lo} to {hi}, e.g. {}",
            samples.join(", ")
        )));
    }
    // Counts grow with width, so find the first width reaching the target.
    let (mut a, mut b) = (1, cap);
    while a < b {
        let mid = (a + b) / 2;
        if count(mid)? >= target {
            b = mid;
        } else {
            a = mid + 1;
        }
    }
    let above = count(a)?.abs_diff(target);
    let k = if a > 1 && count(a - 1)?.abs_diff(target) < above { a - 1 } else { a };
    Ok(scaled(base, k))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub target: usize,
    pub arch: ArchitectureId,
    pub params: usize,
    pub epoch: u32,
    pub nn_error_mean: f64,
    pub nn_error_std: f64,
}

/// Runs `cfg` with only `nn_error` at each solved size. Writes
/// `sweep.csv` (size vs error) and `metrics.csv` (all records) to
/// `out_dir` when set.
pub fn sweep_width(cfg: &ExperimentConfig, targets: &[usize]) -> Result<(Vec<SweepRow>, Vec<MetricRecord>)> {
    if targets.is_empty() {
        return Err(Error::Config("no parameter targets given".into()));
    }
    let (train, test) = cfg.dataset.load()?;
    let input = train.shape().ok_or_else(|| Error::Input("empty training set".into()))?;
    let archs = targets
        .iter()
        .map(|&t| solve_width(cfg.arch, input, t))
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    let mut all = Vec::new();
    for (&target, &arch) in targets.iter().zip(&archs) {
        let run = ExperimentConfig {
            arch,
            metrics: vec![Metric::NnError],
            ..cfg.clone()
        };
        let params = arch.param_count(input)?;
        log::info!("target {target}: {arch} with {params} parameters");
        let records = run_experiment_on(&run, &train, &test).context(format_args!("width sweep at {arch}"))?;
        for &epoch in &run.train.checkpoint_epochs {
            let values: Vec<f64> = records
                .iter()
                .filter(|r| r.seed.is_some() && r.epoch == epoch)
                .map(|r| r.value)
                .collect();
            let (mean, std) = mean_std(&values);
            rows.push(SweepRow {
                target,
                arch,
                params,
                epoch,
                nn_error_mean: mean,
                nn_error_std: std,
            });
        }
        all.extend(records);
    }
    sort_records(&mut all);
    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir)?;
        save_csv(&all, dir.join("metrics.csv"))?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("sweep.csv"))?);
        write_sweep_csv(&rows, &mut f)?;
    }
    Ok((rows, all))
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let io = |e: csv::Error| Error::Input(format!("CSV: {e}"));
    w.write_record(["target", "arch", "params", "epoch", "nn_error_mean", "nn_error_std"])
        .map_err(io)?;
    for r in rows {
        w.write_record([
            r.target.to_string(),
            r.arch.to_string(),
            r.params.to_string(),
            r.epoch.to_string(),
            format_value(r.nn_error_mean),
            format_value(r.nn_error_std),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Mean and sample standard deviation; the deviation of one value is 0.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Family, Padding};

    const MNIST: Shape = Shape {
        height: 28,
        width: 28,
        channels: 1,
    };

    #[test]
    fn fully_connected_widths() {
        let fc = ArchitectureId::new(Family::FullyConnected);
        let count = |w: usize| (784 + 1) * w + 3 * (w * w + w) + w + 1;
        for target in [60_000, 80_000, 100_000] {
            let arch = solve_width(fc.with_hidden(10), MNIST, target).unwrap();
            let best = (1..2000).min_by_key(|&w| (count(w).abs_diff(target), usize::MAX - w)).unwrap();
            assert_eq!(arch.hidden(), best);
        }
        assert_eq!(solve_width(fc.with_hidden(10), MNIST, 100_000).unwrap().hidden(), 94);
        assert_eq!(count(94), 100_675);
    }

    #[test]
    fn exact_current_count_keeps_architecture() {
        let vgg = ArchitectureId::new(Family::VggLike).with_padding(Padding::Valid);
        let n = vgg.param_count(MNIST).unwrap();
        assert_eq!(solve_width(vgg, MNIST, n).unwrap(), vgg);
    }

    #[test]
    fn conv_channels_keep_ratio() {
        let vgg = ArchitectureId::new(Family::VggLike);
        let arch = solve_width(vgg, MNIST, 30_000).unwrap();
        let [a, b] = arch.channels();
        assert_eq!(b, 2 * a);
        let below = arch.with_channels(a - 1, 2 * a - 2).param_count(MNIST).unwrap();
        let above = arch.with_channels(a + 1, 2 * a + 2).param_count(MNIST).unwrap();
        let here = arch.param_count(MNIST).unwrap();
        assert!(here.abs_diff(30_000) <= below.abs_diff(30_000));
        assert!(here.abs_diff(30_000) <= above.abs_diff(30_000));
    }

    #[test]
    fn unreachable_targets() {
        let fc = ArchitectureId::new(Family::FullyConnected);
        let err = solve_width(fc, MNIST, 1).unwrap_err();
        assert!(matches!(&err, Error::Config(m) if m.contains("counts range")), "{err}");
        assert!(solve_width(fc, MNIST, usize::MAX).is_err());
    }

    #[test]
    fn sample_deviation() {
        assert_eq!(mean_std(&[0.5]), (0.5, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }
}
