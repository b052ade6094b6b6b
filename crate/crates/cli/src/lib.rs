//! Command-line front end: the snapshot pipeline, report files, scenario
//! generation and benchmarking.

pub mod bench;
pub mod cli;
pub mod pipeline;
pub mod report;
pub mod scenario;
