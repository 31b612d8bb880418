//! Experiment harness, file formats and command-line front end built on
//! `bandlab-core`.

pub mod cli;
pub mod config;
pub mod experiments;
pub mod io;
pub mod manifest;
