//! Column-name mapping between arbitrary CSV headers and the panel layout.
//!
//! Files written by this tool use self-describing headers (`timestamp`,
//! `expert:NAME`, `feature:NAME`, `observed`) and need no mapping. Foreign
//! files bring their own column names; a small TOML file declares which is
//! which:
//!
//! ```toml
//! timestamp = "valid_time"
//! observed = "gauge_mm"
//! experts = ["ecmwf", "gfs", "icon"]
//! features = ["cape", "pwat"]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Column names for each role in a panel CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaMap {
    pub timestamp: String,
    pub observed: String,
    pub experts: Vec<String>,
    pub features: Vec<String>,
}

impl SchemaMap {
    /// Mapping for files this tool writes itself: role prefixes in the
    /// header carry the expert and feature names.
    pub fn self_describing(expert_names: &[String], feature_names: &[String]) -> Self {
        Self {
            timestamp: "timestamp".into(),
            observed: "observed".into(),
            experts: expert_names.iter().map(|n| format!("expert:{n}")).collect(),
            features: feature_names.iter().map(|n| format!("feature:{n}")).collect(),
        }
    }

    /// Recover a mapping from a self-describing header row.
    pub fn from_header(header: &[String]) -> Result<Self, CliError> {
        let mut experts = Vec::new();
        let mut features = Vec::new();
        let mut saw_timestamp = false;
        let mut saw_observed = false;
        for col in header {
            match col.as_str() {
                "timestamp" => saw_timestamp = true,
                "observed" => saw_observed = true,
                _ if col.starts_with("expert:") => experts.push(col.clone()),
                _ if col.starts_with("feature:") => features.push(col.clone()),
                other => {
                    return Err(CliError::data(format!(
                        "unrecognized column {other:?}; self-describing panels use \
                         'timestamp', 'observed', 'expert:NAME', and 'feature:NAME' \
                         (pass --schema to map foreign column names)"
                    )))
                }
            }
        }
        if !saw_timestamp || !saw_observed {
            return Err(CliError::data(
                "panel header needs both a 'timestamp' and an 'observed' column \
                 (pass --schema to map foreign column names)",
            ));
        }
        if experts.is_empty() {
            return Err(CliError::data("panel header has no 'expert:NAME' columns"));
        }
        Ok(Self {
            timestamp: "timestamp".into(),
            observed: "observed".into(),
            experts,
            features,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        if !path.is_file() {
            return Err(CliError::usage(format!("schema file not found: {}", path.display())));
        }
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::data(format!("reading {}: {e}", path.display())))?;
        let map: Self = toml::from_str(&text)
            .map_err(|e| CliError::data(format!("parsing {}: {e}", path.display())))?;
        map.validate()?;
        Ok(map)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.experts.is_empty() {
            return Err(CliError::data("schema lists no expert columns"));
        }
        let mut all: Vec<&String> = self.experts.iter().chain(&self.features).collect();
        all.push(&self.timestamp);
        all.push(&self.observed);
        let mut seen = std::collections::BTreeSet::new();
        for name in all {
            if !seen.insert(name) {
                return Err(CliError::data(format!("schema assigns column {name:?} twice")));
            }
        }
        Ok(())
    }

    /// The bare expert names, with any self-describing prefix stripped.
    pub fn expert_names(&self) -> Vec<String> {
        self.experts.iter().map(|c| strip_role(c, "expert:")).collect()
    }

    /// The bare feature names, with any self-describing prefix stripped.
    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|c| strip_role(c, "feature:")).collect()
    }
}

fn strip_role(column: &str, prefix: &str) -> String {
    column.strip_prefix(prefix).unwrap_or(column).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn self_describing_round_trips_through_header_recovery() {
        let map = SchemaMap::self_describing(&strings(&["a", "b"]), &strings(&["f"]));
        let header: Vec<String> = std::iter::once("timestamp".to_string())
            .chain(map.experts.iter().cloned())
            .chain(map.features.iter().cloned())
            .chain(std::iter::once("observed".to_string()))
            .collect();
        let recovered = SchemaMap::from_header(&header).unwrap();
        assert_eq!(recovered.expert_names(), strings(&["a", "b"]));
        assert_eq!(recovered.feature_names(), strings(&["f"]));
    }

    #[test]
    fn foreign_column_without_schema_is_rejected_with_hint() {
        let err = SchemaMap::from_header(&strings(&["timestamp", "gauge", "observed"]))
            .unwrap_err()
            .to_string();
        assert!(err.contains("gauge"), "{err}");
        assert!(err.contains("--schema"), "{err}");
    }

    #[test]
    fn duplicate_assignment_is_rejected() {
        let map = SchemaMap {
            timestamp: "t".into(),
            observed: "x".into(),
            experts: strings(&["x"]),
            features: vec![],
        };
        assert!(map.validate().is_err());
    }

    #[test]
    fn missing_expert_columns_is_rejected() {
        let err =
            SchemaMap::from_header(&strings(&["timestamp", "observed"])).unwrap_err().to_string();
        assert!(err.contains("no 'expert:NAME'"), "{err}");
    }
}
