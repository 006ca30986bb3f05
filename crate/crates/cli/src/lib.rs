//! Command-line front end: problem files, presets, reports.

pub mod commands;
pub mod output;
pub mod problem_file;
pub mod scenarios;
