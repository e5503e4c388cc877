//! Pipelines behind each mode. Every mode builds a JSON report.

use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use noisetomo::calibration::{drift_series_for_model, resolve_probe_settings, ClickRecord};
use noisetomo::measurement::{read_measurements, write_measurements_file, Measurements};
use noisetomo::povm::{conditioning_report, design_matrix};
use noisetomo::reconstruction::{bootstrap, reconstruct};
use noisetomo::simulator::{inject_drift, simulate_clicks};
use noisetomo::{ExperimentPlan, PovmModel, ProbeSetting};

use crate::config::{Mode, RunConfig};
use crate::report::{content_hash, write_plot, write_report};
use crate::CliError;

pub fn run(config: &RunConfig, mode: Mode) -> Result<(), CliError> {
    let mut warnings = config.irrelevant_fields(mode);
    for w in &warnings {
        log::warn!("{w}");
    }
    let config_value = serde_json::to_value(config).expect("config serializes");
    let (body, data_bytes) = match mode {
        Mode::Simulate => (simulate(config)?, None),
        Mode::Reconstruct => {
            let (bytes, file) = load_data(config, mode)?;
            (reconstruct_mode(config, &file.records, &mut warnings)?, Some(bytes))
        }
        Mode::Calibrate => {
            let (bytes, file) = load_data(config, mode)?;
            (calibrate(config, &file.records)?, Some(bytes))
        }
        Mode::Diagnose => {
            let (bytes, file) = load_data(config, mode)?;
            (diagnose(config, &file.records)?, Some(bytes))
        }
    };
    let inputs: Vec<(&str, &[u8])> = data_bytes
        .as_deref()
        .map(|b| vec![("data", b)])
        .unwrap_or_default();

    let mut report = json!({
        "tool": { "name": "noisetomo", "version": env!("CARGO_PKG_VERSION") },
        "mode": mode,
        "seed": config.seed,
        "input_hash": content_hash(&config_value, &inputs),
        "config": config_value,
    });
    let map = report.as_object_mut().expect("object");
    if let Value::Object(body) = body {
        map.extend(body);
    }
    let mut all_warnings: Vec<Value> = warnings.into_iter().map(Value::from).collect();
    if let Some(Value::Array(more)) = map.remove("warnings") {
        all_warnings.extend(more);
    }
    map.insert("warnings".into(), Value::Array(all_warnings));
    write_report(&report, config.io.out.as_deref())
}

fn data_path(config: &RunConfig, mode: Mode) -> Result<&Path, CliError> {
    let path = config.io.data.as_deref().ok_or_else(|| {
        CliError::Config(format!(
            "{} mode needs a measurement file (--data)",
            format!("{mode:?}").to_lowercase()
        ))
    })?;
    if !path.is_file() {
        return Err(CliError::Config(format!(
            "measurement file {} does not exist",
            path.display()
        )));
    }
    Ok(path)
}

fn load_data(config: &RunConfig, mode: Mode) -> Result<(Vec<u8>, Measurements), CliError> {
    let path = data_path(config, mode)?;
    let bytes = std::fs::read(path).map_err(|e| {
        CliError::Core(noisetomo::Error::Data(format!("{}: {e}", path.display())))
    })?;
    let file = read_measurements(bytes.as_slice())?;
    Ok((bytes, file))
}

fn simulate(config: &RunConfig) -> Result<Value, CliError> {
    let sim = config
        .simulation
        .as_ref()
        .ok_or_else(|| CliError::Config("simulate mode needs a [simulation] section".into()))?;
    let out: PathBuf = config
        .io
        .data
        .clone()
        .ok_or_else(|| CliError::Config("simulate mode needs a data path to write (--data)".into()))?;
    let model = PovmModel::from(config.model);
    let truth = sim.truth()?;
    let mut plan = ExperimentPlan::new(
        config.scheme()?,
        model,
        truth.clone(),
        sim.settings()?,
        sim.pulses,
        config.seed,
    );
    plan.reference_state = sim.reference()?;
    if let Some(drift) = &sim.drift {
        plan = inject_drift(&plan, drift.profile, drift.magnitude)?;
    }
    let records = simulate_clicks(&plan)?;
    let probabilities = plan.model_probabilities()?;
    write_measurements_file(&out, &records, sim.probe_column.into())?;
    let etas = plan.per_setting_eta();
    let settings: Vec<Value> = plan
        .settings
        .iter()
        .zip(&records)
        .zip(probabilities.iter().zip(&etas))
        .map(|((s, r), (p, eta))| {
            json!({
                "setting_id": s.id,
                "probe_mean": s.mean,
                "eta": eta,
                "model": p,
                "observed": r.no_click_fraction(),
            })
        })
        .collect();
    Ok(json!({
        "simulation": {
            "data_file": out,
            "truth": truth.probs(),
            "truth_mean": truth.mean(),
            "settings": settings,
        }
    }))
}

fn reconstruct_mode(
    config: &RunConfig,
    records: &[ClickRecord],
    warnings: &mut Vec<String>,
) -> Result<Value, CliError> {
    let params = config.scheme()?;
    let model = PovmModel::from(config.model);
    let options = config.reconstruction_options()?;
    let result = reconstruct(records, &params, model, &options)?;
    let stats = if config.bootstrap > 0 {
        Some(bootstrap(records, &params, model, &options, config.bootstrap, config.seed)?)
    } else {
        None
    };
    warnings.extend(result.warnings.iter().cloned());

    let etas: Vec<f64> = (0..records.len())
        .map(|j| {
            result
                .per_setting_eta_used
                .as_ref()
                .map_or(params.eta, |e| e[j])
        })
        .collect();
    let settings: Vec<Value> = records
        .iter()
        .enumerate()
        .map(|(j, r)| {
            json!({
                "setting_id": r.setting_id,
                "probe_mean": result.settings[j].mean,
                "eta": etas[j],
                "pulses": r.pulses,
                "observed": result.observed[j],
                "model": result.model_probabilities[j],
                "standardized_residual": result.standardized_residuals[j],
            })
        })
        .collect();

    if let Some(plot) = &config.io.plot {
        let ids: Vec<u64> = records.iter().map(|r| r.setting_id).collect();
        let means: Vec<f64> = result.settings.iter().map(|s| s.mean).collect();
        write_plot(plot, &ids, &means, &result.observed, &result.model_probabilities)?;
    }

    let truth = match config.simulation.as_ref().map(|s| s.truth()) {
        Some(Ok(truth)) => json!({
            "truth": truth.probs(),
            "estimate": result.estimate.probs(),
            "total_variation": result.estimate.total_variation(truth.probs()),
            "max_abs_error": result.estimate.max_abs_error(truth.probs()),
            "truth_mean": truth.mean(),
            "estimate_mean": result.estimate.mean(),
        }),
        _ => Value::Null,
    };

    Ok(json!({
        "estimate": {
            "probabilities": result.estimate.probs(),
            "mean": result.estimate.mean(),
            "raw_solution": result.raw_solution,
            "pre_normalization_total": result.pre_normalization_total,
            "normalization": result.normalization,
            "weighted": result.weighted,
            "residual_norm": result.residual_norm,
            "kkt_violation": result.kkt_violation,
            "solver_iterations": result.solver_iterations,
        },
        "bootstrap": stats,
        "conditioning": result.conditioning,
        "drift": result.drift,
        "degenerate_settings": result.degenerate_settings,
        "settings": settings,
        "truth_vs_estimate": truth,
    }))
}

/// Drift series (JSON), resolved settings and the per-setting efficiencies used.
type Resolved = (Value, Vec<ProbeSetting>, Option<Vec<f64>>);

fn resolve(config: &RunConfig, records: &[ClickRecord]) -> Result<Resolved, CliError> {
    let params = config.scheme()?;
    let model = PovmModel::from(config.model);
    let drift = match config.drift_correction()? {
        Some(dc) => Some(drift_series_for_model(
            model,
            &params,
            &dc.reference_state,
            records,
            dc.window,
        )?),
        None => None,
    };
    let etas = drift.as_ref().map(|d| d.smoothed.clone());
    let settings = resolve_probe_settings(records, model, &params, etas.as_deref())?;
    Ok((serde_json::to_value(drift).expect("serializes"), settings, etas))
}

fn calibrate(config: &RunConfig, records: &[ClickRecord]) -> Result<Value, CliError> {
    let (drift, settings, etas) = resolve(config, records)?;
    let eta = config.scheme()?.eta;
    let rows: Vec<Value> = settings
        .iter()
        .enumerate()
        .map(|(j, s)| {
            json!({
                "setting_id": s.id,
                "probe_mean": s.mean,
                "eta": etas.as_ref().map_or(eta, |e| e[j]),
            })
        })
        .collect();
    Ok(json!({ "calibration": { "settings": rows, "drift": drift } }))
}

fn diagnose(config: &RunConfig, records: &[ClickRecord]) -> Result<Value, CliError> {
    let (_, settings, etas) = resolve(config, records)?;
    let povm = design_matrix(
        PovmModel::from(config.model),
        &config.scheme()?,
        &settings,
        etas.as_deref(),
    )?;
    let conditioning = conditioning_report(&povm);
    Ok(json!({
        "conditioning": conditioning,
        "probe_cutoffs": povm.probe_cutoffs,
        "probe_tail": povm.probe_tail,
        "warnings": povm.warnings,
    }))
}
