//! Error classification for the binary.
//!
//! Every failure is sorted into one of three classes so scripts can branch
//! on the exit code without parsing messages: bad invocations (missing
//! input files, out-of-range flags), bad data (unparseable or inconsistent
//! file contents), and runtime failures (training divergence, filesystem
//! trouble mid-run).

use std::fmt;
use std::process::ExitCode;

use mpmoe_core::dataset::{DatasetError, SynthError};
use mpmoe_core::gating::GatingError;
use mpmoe_core::matrix_profile::MatrixProfileError;
use mpmoe_core::metrics::MetricsError;
use mpmoe_core::trainer::TrainError;

/// Exit code for invocation mistakes; matches the code clap uses for
/// unknown flags, so the whole usage class looks uniform to callers.
pub const EXIT_USAGE: u8 = 2;
/// Exit code for malformed or inconsistent input data.
pub const EXIT_DATA: u8 = 3;
/// Exit code for failures after inputs were accepted.
pub const EXIT_RUNTIME: u8 = 4;

#[derive(Debug)]
pub enum CliError {
    /// The invocation itself is wrong: nonexistent input path, flag value
    /// outside its documented range, contradictory options.
    Usage(String),
    /// An input file was read but its contents are unusable.
    Data(String),
    /// Inputs were fine; the work itself failed.
    Runtime(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        Self::Usage(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Self::Data(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        Self::Runtime(msg.into())
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            Self::Usage(_) => ExitCode::from(EXIT_USAGE),
            Self::Data(_) => ExitCode::from(EXIT_DATA),
            Self::Runtime(_) => ExitCode::from(EXIT_RUNTIME),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(msg) => write!(f, "usage error: {msg}"),
            Self::Data(msg) => write!(f, "data error: {msg}"),
            Self::Runtime(msg) => write!(f, "runtime error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

/// Panel-content problems are data errors: the file existed and parsed as
/// CSV, but what it described is unusable.
impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        Self::Data(e.to_string())
    }
}

/// Synthetic-spec content problems likewise.
impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        Self::Data(e.to_string())
    }
}

/// Training failures happen after all inputs were validated.
impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        Self::Runtime(e.to_string())
    }
}

impl From<GatingError> for CliError {
    fn from(e: GatingError) -> Self {
        Self::Runtime(e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        Self::Runtime(e.to_string())
    }
}

impl From<MatrixProfileError> for CliError {
    fn from(e: MatrixProfileError) -> Self {
        Self::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Runtime(format!("io: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Data(format!("csv: {e}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classes_map_to_distinct_exit_codes() {
        let codes = [
            CliError::usage("x").exit_code(),
            CliError::data("x").exit_code(),
            CliError::runtime("x").exit_code(),
        ];
        assert_eq!(codes[0], ExitCode::from(2));
        assert_eq!(codes[1], ExitCode::from(3));
        assert_eq!(codes[2], ExitCode::from(4));
    }

    #[test]
    fn core_errors_land_in_the_right_class() {
        let data: CliError = DatasetError::EmptyPanel.into();
        assert!(matches!(data, CliError::Data(_)));
        let runtime: CliError = TrainError::NoSeeds.into();
        assert!(matches!(runtime, CliError::Runtime(_)));
    }

    #[test]
    fn display_prefixes_the_class() {
        assert_eq!(CliError::usage("no such file").to_string(), "usage error: no such file");
        assert!(CliError::data("bad row").to_string().starts_with("data error:"));
    }
}
