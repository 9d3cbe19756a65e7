//! File formats, parallel drivers and the command-line front end for
//! `bn_shapley_core`.

pub mod atomic;
pub mod cli;
pub mod data_csv;
pub mod dot;
pub mod draws_file;
pub mod error;
pub mod network_file;
pub mod parallel;
pub mod report_file;
