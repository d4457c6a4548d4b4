//! Sweeps model × budget × bandwidth × seed, records one result per cell in a
//! resumable ledger and renders tables and heatmaps.

mod config;
mod heatmap;
mod report;
mod run;

pub use config::{
    parse_config, parse_config_str, CellKey, ExperimentMatrix, TrainOverrides, DEFAULT_RESOLUTION_2D, DEFAULT_RESOLUTION_3D,
    DEFAULT_SEED,
};
pub use heatmap::{diverging, emit_heatmaps, viridis, HeatmapGrid, HeatmapOutput, Image, CELL_PIXELS};
pub use report::{
    fmt_float, mean_std, read_results_csv, sorted_rows, write_results_csv, write_summary_csv, write_tables, Metric, ResultRow,
    CANONICAL_CSV, CSV_COLUMNS, RESULTS_CSV, SUMMARY_CSV,
};
pub use run::{
    cell_train_config, read_ledger, resolve_workers, run_cell, run_matrix, CellResult, CellStatus, RunOptions, RunReport, LEDGER_FILE,
    MATRIX_FILE, WORKERS_ENV,
};
