//! Run manifest written next to every study output.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{AppError, Result};
use crate::pool::effective_threads;

pub const VERSION: &str = env!("FDASELECT_GIT_DESCRIBE");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub args: Vec<String>,
    pub config: Value,
    pub seeds: Value,
    pub timings: Value,
    pub threads: usize,
}

impl Manifest {
    pub fn new(
        command: &str,
        args: Vec<String>,
        config: Value,
        seeds: Value,
        timings: Value,
    ) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: VERSION.into(),
            command: command.into(),
            args,
            config,
            seeds,
            timings,
            threads: effective_threads(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| AppError::io(path, e))
    }
}
