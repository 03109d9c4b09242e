use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::Metric;
use super::experiment::{format_value, MetricRecord};
use super::sweep::mean_std;
use crate::error::{Error, Result};

/// Metrics plotted by each figure. A trailing panel letter (`fig1a`) is
/// ignored.
pub fn figure_metrics(figure: &str) -> Result<&'static [Metric]> {
    use Metric::*;
    let base = figure.trim_end_matches(|c: char| c.is_ascii_lowercase() && c != 'g');
    Ok(match base {
        "fig1" => &[SvmError],
        "fig2" => &[SvmError, NnError],
        "fig3" => &[SwapInvariance],
        "fig4" => &[TranslationInvariance, RotationInvariance, ZoomInvariance],
        "fig5" => &[CkAlignment, SvmError, CkSvmError],
        "fig6" => &[TranslationInvariance, RotationInvariance, ZoomInvariance],
        "fig7" => &[SvmError, NnError],
        "fig8" => &[EffectiveRank],
        "fig9" => &[NnError],
        _ => return Err(Error::Config(format!("unknown figure `{figure}` (expected fig1 .. fig9)"))),
    })
}

fn file_safe(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-+.".contains(c) { c } else { '_' })
        .collect()
}

/// Writes one series file per (arch, dataset, metric) curve with columns
/// `epoch mean std` over seeds, plus `<figure>_manifest.txt`. Returns the
/// paths written, manifest last.
pub fn emit_plotdata(records: &[MetricRecord], figure: &str, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let metrics = figure_metrics(figure)?;
    if records.is_empty() {
        return Err(Error::Input("no records to plot".into()));
    }
    let per_seed: Vec<&MetricRecord> = records.iter().filter(|r| r.seed.is_some()).collect();
    if let Some(missing) = metrics.iter().find(|m| !per_seed.iter().any(|r| r.metric == **m)) {
        return Err(Error::Input(format!("{figure} needs metric {missing}, which is absent from the records")));
    }

    let mut curves: BTreeMap<(&str, &str, usize), BTreeMap<u32, Vec<f64>>> = BTreeMap::new();
    for r in &per_seed {
        if let Some(pos) = metrics.iter().position(|&m| m == r.metric) {
            curves
                .entry((r.arch.as_str(), r.dataset.as_str(), pos))
                .or_default()
                .entry(r.epoch)
                .or_default()
                .push(r.value);
        }
    }

    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut manifest = String::from("# file arch dataset metric\n");
    for ((arch, dataset, pos), epochs) in &curves {
        let metric = metrics[*pos];
        let name = format!("{figure}_{}_{}_{}.dat", file_safe(arch), file_safe(dataset), metric);
        let mut text = format!("# {arch} {dataset} {metric}\n# epoch mean std\n");
        for (epoch, values) in epochs {
            let (mean, std) = mean_std(values);
            writeln!(text, "{epoch} {} {}", format_value(mean), format_value(std)).expect("string write");
        }
        let path = dir.join(&name);
        std::fs::write(&path, text)?;
        writeln!(manifest, "{name} {arch} {dataset} {metric}").expect("string write");
        written.push(path);
    }
    let path = dir.join(format!("{figure}_manifest.txt"));
    std::fs::write(&path, manifest)?;
    written.push(path);
    Ok(written)
}
