//! Measurement harness: runs transfers over emulated links, captures
//! packet traces and turns them into results and plots.

pub mod capture;
pub mod cli;
pub mod orchestrator;
pub mod refendpoint;
pub mod relay;
pub mod report;
pub mod results;
