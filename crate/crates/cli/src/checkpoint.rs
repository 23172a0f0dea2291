//! Checkpoint files: a `LEAPCKPT 1` line followed by JSON holding the
//! trained model, its optimizer-facing config, RNG position and the run
//! config that produced it.

use std::path::Path;

use leap_core::trainer::Checkpoint;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const MAGIC: &str = "LEAPCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointFile {
    pub run: RunConfig,
    pub checkpoint: Checkpoint,
}

pub fn serialize_checkpoint(file: &CheckpointFile) -> String {
    let body = serde_json::to_string(file).expect("checkpoint serializes");
    format!("{MAGIC} {VERSION}\n{body}\n")
}

pub fn parse_checkpoint(text: &str, path: &Path) -> CliResult<CheckpointFile> {
    let parse_err = |line: usize, message: String| CliError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let (header, body) = text.split_once('\n').unwrap_or((text, ""));
    match header.trim().strip_prefix(MAGIC).map(|v| v.trim().parse::<u32>()) {
        Some(Ok(VERSION)) => {}
        Some(Ok(v)) => return Err(parse_err(1, format!("unsupported checkpoint version {v}"))),
        _ => return Err(parse_err(1, format!("not a checkpoint: expected `{MAGIC} {VERSION}`"))),
    }
    serde_json::from_str(body).map_err(|e| parse_err(e.line() + 1, e.to_string()))
}

pub fn write_checkpoint(path: &Path, file: &CheckpointFile) -> CliResult<()> {
    std::fs::write(path, serialize_checkpoint(file)).map_err(|e| CliError::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> CliResult<CheckpointFile> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_checkpoint(&text, path)
}
