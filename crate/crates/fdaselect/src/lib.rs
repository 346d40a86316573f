//! Data files, replicate studies, the Gibbs benchmark and the command-line
//! front end built on [`fdaselect_core`].

#![allow(clippy::needless_range_loop)]

pub mod bench;
pub mod cli;
pub mod error;
pub mod io;
pub mod manifest;
pub mod pool;
pub mod study;

pub use fdaselect_core as core;

pub use bench::{benchmark_vb_vs_gibbs, BenchReport, BenchRow};
pub use error::{AppError, Result};
pub use io::{ingest_csv, read_curves};
pub use study::{
    misspecification_study, run_replicates, FitOptions, MisspecificationSummary, NoiseGuess,
    StudySummary,
};
