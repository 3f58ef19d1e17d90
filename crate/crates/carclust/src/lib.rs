//! File formats, reporting and the command-line front end for the panel
//! clustering estimator in `carclust-core`.

pub mod cli;
pub mod csv_io;
pub mod driver;
pub mod report;

pub use csv_io::{load_panel, read_panel, write_panel, write_panel_file, DataError};
pub use report::{Report, ReportFormat};
