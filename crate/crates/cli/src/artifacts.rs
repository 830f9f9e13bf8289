//! Run-directory artifacts and result tables.
//!
//! Every number is printed through Rust's shortest-round-trip float
//! formatting and every collection in deterministic order, so identical
//! runs produce byte-identical files. Wall-clock quantities never appear
//! in any artifact.

use std::path::{Path, PathBuf};

use mpmoe_core::loss::LossBreakdown;
use mpmoe_core::metrics::MetricsReport;
use mpmoe_core::trainer::{AblationOutcome, SeedRuns, Stat, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::schema::SchemaMap;

/// Environment variable that relocates relative output paths.
pub const OUT_ROOT_ENV: &str = "MPMOE_OUT_ROOT";

/// Resolve a user-given output path: absolute paths stand as they are;
/// relative ones nest under `MPMOE_OUT_ROOT` when it is set.
pub fn resolve_out(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os(OUT_ROOT_ENV) {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    }
}

/// The persisted invocation: everything needed to reproduce a run except
/// the data file itself, which is referenced by path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSnapshot {
    pub command: String,
    pub data: String,
    /// Resolved column mapping, embedded so later schema-file edits cannot
    /// silently change what the snapshot means.
    pub schema: SchemaMap,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    pub config: TrainConfig,
}

impl RunSnapshot {
    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| CliError::runtime(format!("serializing config snapshot: {e}")))?;
        std::fs::write(path, text)
            .map_err(|e| CliError::runtime(format!("writing {}: {e}", path.display())))?;
        Ok(())
    }

    #[cfg(test)]
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::data(format!("reading {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::data(format!("parsing {}: {e}", path.display())))
    }
}

/// Metrics report JSON — the one serialization used by both training and
/// replay, so byte comparison is meaningful.
pub fn report_json(report: &MetricsReport) -> String {
    let mut text = serde_json::to_string_pretty(report).expect("report serializes");
    text.push('\n');
    text
}

pub fn write_report(report: &MetricsReport, path: &Path) -> Result<(), CliError> {
    std::fs::write(path, report_json(report))
        .map_err(|e| CliError::runtime(format!("writing {}: {e}", path.display())))?;
    Ok(())
}

/// Per-epoch loss trajectory as CSV.
pub fn write_loss_log(losses: &[LossBreakdown], path: &Path) -> Result<(), CliError> {
    let mut out = String::from("epoch,total,mse_term,mp_term\n");
    for (epoch, l) in losses.iter().enumerate() {
        out.push_str(&format!("{},{},{},{}\n", epoch + 1, l.total, l.mse_term, l.mp_term));
    }
    std::fs::write(path, out)
        .map_err(|e| CliError::runtime(format!("writing {}: {e}", path.display())))?;
    Ok(())
}

/// Hourly test-split forecasts next to the observations they answer to.
pub fn write_forecasts(
    timestamps: &[i64],
    observed: &[f64],
    forecasts: &[f64],
    path: &Path,
) -> Result<(), CliError> {
    let mut out = String::from("timestamp,observed,forecast\n");
    for ((t, o), f) in timestamps.iter().zip(observed).zip(forecasts) {
        out.push_str(&format!("{t},{o},{f}\n"));
    }
    std::fs::write(path, out)
        .map_err(|e| CliError::runtime(format!("writing {}: {e}", path.display())))?;
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Per-seed rows plus mean/std/median aggregate rows.
pub fn seed_summary(runs: &SeedRuns) -> String {
    let horizons: Vec<u32> = runs.aggregate.mae_acc.keys().copied().collect();
    let mut header = String::from("seed,mae_1h");
    for h in &horizons {
        header.push_str(&format!(",mae_acc_{h}h"));
    }
    header.push_str(",dtw,csi_m,final_total,final_mse_term,final_mp_term\n");

    let mut out = header;
    for run in &runs.runs {
        let last = run.epoch_losses.last().expect("at least one epoch");
        let mut row = format!("{},{}", run.seed, run.report.mae_1h);
        for h in &horizons {
            row.push_str(&format!(",{}", fmt_opt(run.report.mae_acc.get(h).copied())));
        }
        row.push_str(&format!(
            ",{},{},{},{},{}\n",
            run.report.dtw,
            fmt_opt(run.report.csi_m),
            last.total,
            last.mse_term,
            last.mp_term
        ));
        out.push_str(&row);
    }

    let agg = &runs.aggregate;
    let stat_row = |label: &str, pick: &dyn Fn(&Stat) -> f64| {
        let mut row = format!("{label},{}", pick(&agg.mae_1h));
        for h in &horizons {
            row.push_str(&format!(",{}", pick(&agg.mae_acc[h])));
        }
        // No aggregate is defined for the total loss (λ mixes the terms),
        // so that cell stays empty on aggregate rows.
        row.push_str(&format!(
            ",{},{},,{},{}\n",
            pick(&agg.dtw),
            fmt_opt(agg.csi_m.as_ref().map(pick)),
            pick(&agg.final_mse_term),
            pick(&agg.final_mp_term)
        ));
        row
    };
    out.push_str(&stat_row("mean", &|s: &Stat| s.mean));
    out.push_str(&stat_row("std", &|s: &Stat| s.std));
    out.push_str(&stat_row("median", &|s: &Stat| s.median));
    out
}

fn aggregate_columns(prefixes: &[&str]) -> String {
    let mut cols = Vec::new();
    for p in prefixes {
        cols.push(format!("{p}_median"));
        cols.push(format!("{p}_mean"));
        cols.push(format!("{p}_std"));
    }
    cols.join(",")
}

fn aggregate_cells(runs: &SeedRuns) -> String {
    let a = &runs.aggregate;
    let csi = |pick: &dyn Fn(&Stat) -> f64| fmt_opt(a.csi_m.as_ref().map(pick));
    format!(
        "{},{},{},{},{},{},{},{},{}",
        a.dtw.median,
        a.dtw.mean,
        a.dtw.std,
        a.mae_1h.median,
        a.mae_1h.mean,
        a.mae_1h.std,
        csi(&|s| s.median),
        csi(&|s| s.mean),
        csi(&|s| s.std),
    )
}

/// λ-sweep table, one row per λ, sorted ascending.
pub fn sweep_table(rows: &[(f64, SeedRuns)]) -> String {
    let mut sorted: Vec<&(f64, SeedRuns)> = rows.iter().collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = format!("lambda,{}\n", aggregate_columns(&["dtw", "mae_1h", "csi_m"]));
    for (lambda, runs) in sorted {
        out.push_str(&format!("{lambda},{}\n", aggregate_cells(runs)));
    }
    out
}

/// Ablation table: the configured blend against the single-term arms.
pub fn ablation_table(outcome: &AblationOutcome) -> String {
    let mut out = format!("arm,lambda,{}\n", aggregate_columns(&["dtw", "mae_1h", "csi_m"]));
    let mut push = |arm: &str, lambda: f64, runs: &SeedRuns| {
        out.push_str(&format!("{arm},{lambda},{}\n", aggregate_cells(runs)));
    };
    push("full", outcome.full_lambda, &outcome.full);
    push("w/o MP", 0.0, &outcome.without_mp);
    push("w/o MSE", 1.0, &outcome.without_mse);
    out
}
