//! Multi-seed experiments: training with checkpoints, kernel metrics at
//! each checkpoint, CSV records, width sweeps and plot-data files.

mod config;
mod experiment;
mod plotdata;
mod sweep;

pub use config::{
    DatasetKind, DatasetSpec, ExperimentConfig, KernelOptions, Metric, RescaleMode, DESK_SCHEDULE, FULL_SCHEDULE,
};
pub use experiment::{
    evaluate_checkpoint, format_value, load_csv, read_csv, run_experiment, run_experiment_on, save_csv, seed_means,
    sort_records, train_seed, write_csv, Measurement, MetricRecord, CSV_HEADER, FLAG_POWER_ITERATION_CAP,
    FLAG_SVM_NOT_CONVERGED, FLAG_ZERO_EMBEDDINGS, MEAN_SEED,
};
pub use plotdata::{emit_plotdata, figure_metrics};
pub use sweep::{mean_std, solve_width, sweep_width, write_sweep_csv, SweepRow, MAX_CHANNELS, MAX_WIDTH};
