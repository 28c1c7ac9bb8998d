//! Configuration, execution and report rendering for the `argmin-unique` binary.

pub mod config;
pub mod io;
pub mod run;
