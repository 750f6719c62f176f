//! Experiment runner: configuration, multi-seed replication, aggregation,
//! rate fitting and CSV output.

mod aggregate;
pub mod cli;
mod config;
mod csv;
mod experiment;

pub use aggregate::{running_min, AggregateSeries};
pub use config::{
    parse_config_file, resolve_config, AlgoChoice, Experiment, ExperimentConfig, ScheduleSpec, CONFIG_KEYS,
};
pub use csv::{read_csv, render_csv, result_header, write_csv, CsvDocument};
pub use experiment::{
    lqr_system, prepare, rate_report, run_experiment, run_traces, tdc_instance, ExperimentResult, Prepared,
    RateReport,
};
