//! Reading and writing data tables, posterior archives, run configurations
//! and fit summaries.

pub mod archive;
pub mod config;
pub mod summary;
pub mod tables;

pub use archive::{read_archive, read_params, write_archive, write_params};
pub use config::RunConfig;
pub use summary::{write_fit_summary, write_manifest, FitReport, Manifest};
pub use tables::{load_dataset, read_table, write_dataset, DatasetPaths, Table};
