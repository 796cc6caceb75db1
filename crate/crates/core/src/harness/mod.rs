//! Synthetic data, experiment drivers and reporting.

mod config;
mod experiment;
mod report;
mod stats;
mod synth;

pub use self::config::{t_grid, ExperimentConfig, HideMethod, SEED_ENV};
pub use self::experiment::{
    load_image_data, make_containers, mean_ncc_at, prepare_artifacts, reveal, run_audio_case, run_rq1, run_rq2,
    run_rq3, sanitize_images, se_trend, Artifacts, AudioOutput, AudioRow, ExperimentOutput, ImageData,
};
pub use self::report::{
    emit_report, line_plot_svg, sweep_svg, write_csv, write_svg, write_table, ResultRow, Series, CSV_HEADER,
};
pub use self::stats::{ranks, spearman};
pub use self::synth::{gen_synthetic_audio, gen_synthetic_images, gen_synthetic_images_blurred, DEFAULT_BLUR};
