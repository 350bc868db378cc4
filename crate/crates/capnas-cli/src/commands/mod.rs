//! Subcommand implementations and the shared error-to-exit-code mapping.

pub mod eval;
pub mod gen;
pub mod score;
pub mod search;
pub mod tune;

use std::fmt::Display;
use std::path::Path;

use capnas_core::alphaopt::{AlphaError, AlphaGrid};
use capnas_core::archspace::SpaceError;
use capnas_core::capacity::{CapacityError, WeightInitPolicy, DEFAULT_INIT_STD};
use capnas_core::rankstats::RankError;
use capnas_core::search::SearchError;
use capnas_cli::benchio::BenchError;

/// Error carrying the process exit code (1 IO, 2 validation, 3 degeneracy).
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Display) -> Self {
        Self {
            code: 2,
            message: message.to_string(),
        }
    }

    pub fn io(message: impl Display) -> Self {
        Self {
            code: 1,
            message: message.to_string(),
        }
    }

    pub fn degenerate(message: impl Display) -> Self {
        Self {
            code: 3,
            message: message.to_string(),
        }
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        Self {
            code: e.exit_code(),
            message: e.to_string(),
        }
    }
}

impl From<SpaceError> for CliError {
    fn from(e: SpaceError) -> Self {
        Self::usage(e)
    }
}

impl From<CapacityError> for CliError {
    fn from(e: CapacityError) -> Self {
        Self::usage(e)
    }
}

impl From<RankError> for CliError {
    fn from(e: RankError) -> Self {
        match e {
            RankError::Degenerate { .. } => Self::degenerate(e),
            _ => Self::usage(e),
        }
    }
}

impl From<AlphaError> for CliError {
    fn from(e: AlphaError) -> Self {
        match e {
            AlphaError::OptimizationFailed
            | AlphaError::DivisionDegeneracy { .. }
            | AlphaError::InsufficientValidGrid { .. } => Self::degenerate(e),
            _ => Self::usage(e),
        }
    }
}

impl From<SearchError> for CliError {
    fn from(e: SearchError) -> Self {
        Self::usage(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::io(e)
    }
}

pub fn write_io(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes)
        .map_err(|e| CliError::io(format!("writing {}: {e}", path.display())))
}

/// Parses `--init`: `gaussian[:STD]` (default std 0.02) or `fanin`.
pub fn parse_init(spec: &str, seed: u64) -> Result<WeightInitPolicy, CliError> {
    if spec == "fanin" {
        return Ok(WeightInitPolicy::fan_in(seed));
    }
    if spec == "gaussian" {
        return Ok(WeightInitPolicy::gaussian(DEFAULT_INIT_STD, seed).expect("default std"));
    }
    if let Some(rest) = spec.strip_prefix("gaussian:") {
        let std: f64 = rest
            .parse()
            .map_err(|_| CliError::usage(format!("invalid init std `{rest}`")))?;
        return Ok(WeightInitPolicy::gaussian(std, seed)?);
    }
    Err(CliError::usage(format!(
        "unknown init policy `{spec}` (expected `gaussian[:STD]` or `fanin`)"
    )))
}

/// Parses `--grid lo:hi:step`.
pub fn parse_grid(spec: &str) -> Result<AlphaGrid, CliError> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(CliError::usage(format!(
            "invalid grid `{spec}` (expected `lo:hi:step`)"
        )));
    }
    let parse = |s: &str| -> Result<f64, CliError> {
        s.parse()
            .map_err(|_| CliError::usage(format!("invalid grid number `{s}`")))
    };
    Ok(AlphaGrid::new(
        parse(parts[0])?,
        parse(parts[1])?,
        parse(parts[2])?,
    )?)
}
