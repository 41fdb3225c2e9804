//! The `lodestar` command line: benchmark runs, benchmark suites and the
//! HTTP ask-tell service.

pub mod bench;
pub mod options;
pub mod run;
pub mod service;
