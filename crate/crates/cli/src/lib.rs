//! Configuration, dispatch and output for the `trispin` command line.

pub mod config;
pub mod output;
pub mod run;
