//! Synthetic-basin spec files.
//!
//! A basin spec is a TOML document mirroring [`SyntheticSpec`]:
//!
//! ```toml
//! n_hours = 5000
//! start_epoch_hour = 473352
//! stratiform_level = 0.6
//! diurnal_amplitude = 0.35
//! spike_rate = 0.035
//! spike_amp_min = 6.0
//! spike_amp_max = 16.0
//!
//! [[experts]]
//! name = "peaky"
//! lag_hours = 0
//! smoothing_width = 1
//! bias = 1.0
//! noise_std = 0.72
//! ```
//!
//! The literal name `standard` selects the built-in benchmark basin
//! instead of a file.

use std::path::Path;

use mpmoe_core::dataset::SyntheticSpec;

use crate::error::CliError;

/// Spec argument accepted by `gen`: a TOML path, or `standard`.
pub fn resolve_spec(arg: &str) -> Result<SyntheticSpec, CliError> {
    if arg == "standard" {
        return Ok(SyntheticSpec::standard_basin());
    }
    load_spec(Path::new(arg))
}

pub fn load_spec(path: &Path) -> Result<SyntheticSpec, CliError> {
    if !path.is_file() {
        return Err(CliError::usage(format!(
            "spec file not found: {} (or pass the literal 'standard')",
            path.display()
        )));
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("reading {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::data(format!("parsing {}: {e}", path.display())))
}

#[cfg(test)]
pub fn save_spec(spec: &SyntheticSpec, path: &Path) -> Result<(), CliError> {
    let text = toml::to_string_pretty(spec)
        .map_err(|e| CliError::runtime(format!("serializing spec: {e}")))?;
    std::fs::write(path, text)
        .map_err(|e| CliError::runtime(format!("writing {}: {e}", path.display())))?;
    Ok(())
}
