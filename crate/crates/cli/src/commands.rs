//! The subcommand implementations.
//!
//! Every command validates its flags before touching any file, reads
//! inputs, delegates the real work to the core crate, and writes artifacts
//! through [`crate::artifacts`] so reruns are byte-identical.

use std::ops::Range;
use std::path::Path;

use mpmoe_core::dataset::{
    build_windows, fit_normalizer, generate_synthetic, split, ForecastPanel, NormalizationStats,
    SplitSpec,
};
use mpmoe_core::gating::{combine, GatingModel};
use mpmoe_core::matrix_profile::build_penalty_matrix;
use mpmoe_core::metrics::evaluate;
use mpmoe_core::trainer::{
    ablate, aggregate_runs, fit, prepare, sweep_lambda, SeedRuns, TrainConfig, TrainError,
};

use crate::artifacts::{
    ablation_table, report_json, resolve_out, seed_summary, sweep_table, write_forecasts,
    write_loss_log, write_report, RunSnapshot,
};
use crate::checkpoint::Checkpoint;
use crate::error::CliError;
use crate::panel_io::{read_panel, write_panel};
use crate::schema::SchemaMap;
use crate::spec_io::resolve_spec;

/// Print to stdout without panicking when the consumer has gone away:
/// `mpmoe penalty ... | head` closes the pipe early, and that must end the
/// run quietly (the data already delivered is all the consumer wanted).
/// Every other stdout failure is a real runtime error.
fn emit(text: &str) {
    use std::io::Write;
    let mut stdout = std::io::stdout();
    if let Err(e) = stdout.write_all(text.as_bytes()).and_then(|()| stdout.flush()) {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("runtime error: cannot write to stdout: {e}");
        std::process::exit(crate::error::EXIT_RUNTIME.into());
    }
}

/// Flag-derived configuration problems are usage errors: they must be
/// rejected before any data is read or any directory created.
fn validate_flags(config: &TrainConfig) -> Result<(), CliError> {
    config.validate().map_err(|e| CliError::usage(e.to_string()))?;
    if !(config.train_fraction > 0.0 && config.train_fraction < 1.0) {
        return Err(CliError::usage(format!(
            "--split must be strictly between 0 and 1, got {}",
            config.train_fraction
        )));
    }
    if config.seeds.is_empty() {
        return Err(CliError::usage("--seeds needs at least one value"));
    }
    Ok(())
}

fn load_panel(
    data: &Path,
    schema_path: Option<&Path>,
    quiet: bool,
) -> Result<(ForecastPanel, SchemaMap), CliError> {
    let schema = schema_path.map(SchemaMap::load).transpose()?;
    let (panel, ingest) = read_panel(data, schema.as_ref())?;
    if ingest.dropped_rows > 0 && !quiet {
        eprintln!("note: dropped {} rows with missing values", ingest.dropped_rows);
    }
    let schema = schema.unwrap_or_else(|| {
        SchemaMap::self_describing(panel.expert_names(), panel.feature_names())
    });
    Ok((panel, schema))
}

pub fn cmd_gen(spec_arg: &str, seed: u64, out: &Path, quiet: bool) -> Result<(), CliError> {
    let spec = resolve_spec(spec_arg)?;
    let panel = generate_synthetic(&spec, seed)?;
    let out = resolve_out(out);
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    write_panel(&panel, &out)?;
    if !quiet {
        emit(&format!(
            "wrote {} hours x {} experts to {}\n",
            panel.n_rows(),
            panel.n_experts(),
            out.display()
        ));
    }
    Ok(())
}

/// Forecast series over a row range, through the same gate-input/combine
/// path evaluation uses.
fn forecast_series(
    model: &GatingModel,
    panel: &ForecastPanel,
    rows: Range<usize>,
    stats: &NormalizationStats,
    append_experts: bool,
) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let mut forecasts = Vec::with_capacity(rows.len());
    let mut observed = Vec::with_capacity(rows.len());
    for t in rows {
        let x = mpmoe_core::dataset::gate_input(panel, stats, t, append_experts);
        let gate = model.forward(&x)?;
        forecasts.push(combine(&gate, panel.experts().row(t))?);
        observed.push(panel.observed()[t]);
    }
    Ok((forecasts, observed))
}

pub fn cmd_train(
    data: &Path,
    schema_path: Option<&Path>,
    out: &Path,
    config: TrainConfig,
    quiet: bool,
) -> Result<(), CliError> {
    validate_flags(&config)?;
    let (panel, schema) = load_panel(data, schema_path, quiet)?;

    let setup = prepare(&panel, &config)?;
    let mut models = Vec::with_capacity(config.seeds.len());
    let mut results = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        let (model, result) = fit(&panel, &setup, &config, seed)
            .map_err(|e| TrainError::Seed { seed, inner: Box::new(e) })?;
        models.push(model);
        results.push(result);
    }
    let aggregate = aggregate_runs(&results);

    let out = resolve_out(out);
    std::fs::create_dir_all(&out)?;
    RunSnapshot {
        command: "train".into(),
        data: data.display().to_string(),
        schema,
        lambdas: None,
        config: config.clone(),
    }
    .save(&out.join("config.toml"))?;

    for (model, result) in models.iter().zip(&results) {
        let seed_dir = out.join(format!("seed-{}", result.seed));
        std::fs::create_dir_all(&seed_dir)?;
        Checkpoint::new(result.seed, config.clone(), &panel, setup.stats.clone(), model.clone())
            .save(&seed_dir.join("checkpoint.json"))?;
        write_report(&result.report, &seed_dir.join("report.json"))?;
        write_loss_log(&result.epoch_losses, &seed_dir.join("loss_log.csv"))?;
        let (forecasts, observed) =
            forecast_series(model, &panel, setup.test.clone(), &setup.stats, config.append_experts)?;
        write_forecasts(
            &panel.timestamps()[setup.test.clone()],
            &observed,
            &forecasts,
            &seed_dir.join("forecast.csv"),
        )?;
    }

    let runs = SeedRuns { runs: results, aggregate };
    let summary = seed_summary(&runs);
    std::fs::write(out.join("summary.csv"), &summary)?;
    if !quiet {
        emit(&summary);
        emit(&format!("run directory: {}\n", out.display()));
    }
    Ok(())
}

pub fn cmd_eval(
    checkpoint_path: &Path,
    data: &Path,
    schema_path: Option<&Path>,
    out: Option<&Path>,
    quiet: bool,
) -> Result<(), CliError> {
    let ck = Checkpoint::load(checkpoint_path)?;
    let (panel, _) = load_panel(data, schema_path, quiet)?;
    ck.check_panel(&panel)?;
    let (_, test) =
        split(&panel, &SplitSpec { train_fraction: ck.config.train_fraction })?;
    let report =
        evaluate(&ck.model, &panel, test, &ck.normalization, ck.config.append_experts)?;
    let json = report_json(&report);
    if let Some(out) = out {
        let out = resolve_out(out);
        std::fs::write(&out, &json)?;
        if !quiet {
            emit(&format!("wrote report to {}\n", out.display()));
        }
    }
    emit(&json);
    Ok(())
}

pub fn cmd_sweep(
    data: &Path,
    schema_path: Option<&Path>,
    out: &Path,
    lambdas: &[f64],
    config: TrainConfig,
    quiet: bool,
) -> Result<(), CliError> {
    validate_flags(&config)?;
    if lambdas.is_empty() {
        return Err(CliError::usage("--lambdas needs at least one value"));
    }
    for &l in lambdas {
        if !(0.0..=1.0).contains(&l) {
            return Err(CliError::usage(format!("blend weight {l} outside [0, 1]")));
        }
    }
    let (panel, schema) = load_panel(data, schema_path, quiet)?;
    let rows = sweep_lambda(&panel, &config, lambdas)?;
    let table = sweep_table(&rows);

    let out = resolve_out(out);
    std::fs::create_dir_all(&out)?;
    RunSnapshot {
        command: "sweep".into(),
        data: data.display().to_string(),
        schema,
        lambdas: Some(lambdas.to_vec()),
        config,
    }
    .save(&out.join("config.toml"))?;
    std::fs::write(out.join("sweep.csv"), &table)?;
    emit(&table);
    Ok(())
}

pub fn cmd_ablate(
    data: &Path,
    schema_path: Option<&Path>,
    out: &Path,
    config: TrainConfig,
    quiet: bool,
) -> Result<(), CliError> {
    validate_flags(&config)?;
    let (panel, schema) = load_panel(data, schema_path, quiet)?;
    let outcome = ablate(&panel, &config)?;
    let table = ablation_table(&outcome);

    let out = resolve_out(out);
    std::fs::create_dir_all(&out)?;
    RunSnapshot {
        command: "ablate".into(),
        data: data.display().to_string(),
        schema,
        lambdas: None,
        config,
    }
    .save(&out.join("config.toml"))?;
    std::fs::write(out.join("ablation.csv"), &table)?;
    emit(&table);
    Ok(())
}

pub fn cmd_penalty(
    data: &Path,
    schema_path: Option<&Path>,
    out: Option<&Path>,
    config: TrainConfig,
    quiet: bool,
) -> Result<(), CliError> {
    validate_flags(&config)?;
    let (panel, _) = load_panel(data, schema_path, quiet)?;
    let (train, _) = split(&panel, &SplitSpec { train_fraction: config.train_fraction })?;
    let stats = fit_normalizer(&panel, train.clone())?;
    let samples =
        build_windows(&panel, train, config.m, config.delta, &stats, config.append_experts)?;
    let penalty = build_penalty_matrix(&samples, config.m, config.delta)?;

    let mut table = String::from("sample,panel_row,timestamp");
    for name in panel.expert_names() {
        table.push_str(&format!(",dmin:{name}"));
    }
    for name in panel.expert_names() {
        table.push_str(&format!(",tau:{name}"));
    }
    table.push('\n');
    for i in 0..penalty.n_samples() {
        let row = penalty.sample_rows()[i];
        table.push_str(&format!("{i},{row},{}", panel.timestamps()[row]));
        for k in 0..penalty.n_experts() {
            table.push_str(&format!(",{}", penalty.value(i, k)));
        }
        for k in 0..penalty.n_experts() {
            table.push_str(&format!(",{}", penalty.tau(i, k)));
        }
        table.push('\n');
    }
    if let Some(out) = out {
        let out = resolve_out(out);
        std::fs::write(&out, &table)?;
        if !quiet {
            emit(&format!("wrote {} penalty rows to {}\n", penalty.n_samples(), out.display()));
        }
    } else {
        emit(&table);
    }
    Ok(())
}

