//! Photon-number distribution estimates from click records by weighted
//! non-negative least squares, with parametric bootstrap uncertainties.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{drift_series_for_model, resolve_probe_settings, ClickRecord, DriftSeries};
use crate::error::{Error, Result};
use crate::fock::{PhotonDistribution, SchemeParams};
use crate::nnls::{nnls_solve_with, simplex_solve_with, NnlsOptions};
use crate::povm::{conditioning_report, design_matrix, ConditioningReport, PovmMatrix, PovmModel, ProbeSetting};
use crate::simulator::{draw, substream};

const CLIP: f64 = 1e-9;
/// Largest tolerated fraction of failed bootstrap replicates.
const MAX_FAILURE_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// `w_j = M_j / (p_j (1 - p_j))` from the observed fraction.
    #[default]
    InverseVariance,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Fit restricted to the probability simplex.
    #[default]
    Constrained,
    /// Plain fit, rescaled to unit sum afterwards.
    PostSolve,
}

#[derive(Debug, Clone)]
pub struct DriftCorrection {
    /// State measured in the signal-only runs.
    pub reference_state: PhotonDistribution,
    /// Odd moving-average window over settings.
    pub window: usize,
}

impl DriftCorrection {
    pub fn new(reference_state: PhotonDistribution) -> Self {
        DriftCorrection {
            reference_state,
            window: 5,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ReconstructionOptions {
    pub weighting: Weighting,
    pub normalization: Normalization,
    pub drift_correction: Option<DriftCorrection>,
    pub solver: NnlsOptions,
}

#[derive(Debug, Clone, Serialize)]
pub struct BootstrapStats {
    pub replicates: usize,
    pub failures: usize,
    pub mean: Vec<f64>,
    /// Sample standard deviation (divisor `B - 1`).
    pub std: Vec<f64>,
    /// One row per successful replicate.
    pub samples: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReconstructionResult {
    pub estimate: PhotonDistribution,
    /// Solver output before rescaling to unit sum.
    pub raw_solution: Vec<f64>,
    pub pre_normalization_total: f64,
    /// Weighted residual norm of the data rows at the raw solution.
    pub residual_norm: f64,
    pub weighted: bool,
    pub normalization: Normalization,
    pub kkt_violation: f64,
    pub solver_iterations: usize,
    pub condition_number: f64,
    pub conditioning: ConditioningReport,
    pub settings: Vec<ProbeSetting>,
    pub per_setting_eta_used: Option<Vec<f64>>,
    pub drift: Option<DriftSeries>,
    pub observed: Vec<f64>,
    pub model_probabilities: Vec<f64>,
    /// `(p_obs - p_model) / sqrt(p_model (1 - p_model) / M)`.
    pub standardized_residuals: Vec<f64>,
    /// Settings with all or no clicks; they carry the smallest possible weight.
    pub degenerate_settings: Vec<u64>,
    pub bootstrap: Option<BootstrapStats>,
    pub warnings: Vec<String>,
}

/// Outcome of a single weighted fit.
#[derive(Debug, Clone)]
pub struct Fit {
    pub estimate: PhotonDistribution,
    pub raw: Vec<f64>,
    pub pre_normalization_total: f64,
    pub residual_norm: f64,
    pub kkt_violation: f64,
    pub iterations: usize,
}

/// Fits `observed` no-click fractions against an existing design matrix.
pub fn fit_probabilities(
    design: &DMatrix<f64>,
    observed: &[f64],
    weights: &[f64],
    normalization: Normalization,
    solver: NnlsOptions,
) -> Result<Fit> {
    let (rows, cols) = design.shape();
    let solution = match normalization {
        Normalization::PostSolve => nnls_solve_with(design, observed, weights, solver)?,
        Normalization::Constrained => simplex_solve_with(design, observed, weights, solver)?,
    };
    let total: f64 = solution.x.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Solver(
            "solution is identically zero; the data carry no signal".into(),
        ));
    }
    let estimate = PhotonDistribution::from_unnormalized(solution.x.clone())?;
    let residual_norm = (0..rows)
        .map(|j| {
            let model: f64 = (0..cols).map(|m| design[(j, m)] * solution.x[m]).sum();
            weights[j] * (model - observed[j]).powi(2)
        })
        .sum::<f64>()
        .sqrt();
    Ok(Fit {
        estimate,
        raw: solution.x,
        pre_normalization_total: total,
        residual_norm,
        kkt_violation: solution.kkt_violation,
        iterations: solution.outer_iterations,
    })
}

/// Observed fractions and fit weights for a set of counts.
fn observations(records: &[ClickRecord], weighting: Weighting) -> (Vec<f64>, Vec<f64>, Vec<u64>) {
    let mut degenerate = Vec::new();
    let mut observed = Vec::with_capacity(records.len());
    let mut weights = Vec::with_capacity(records.len());
    for r in records {
        let m = r.pulses as f64;
        let p = r.no_click_fraction();
        observed.push(p);
        let is_degenerate = r.no_clicks == 0 || r.no_clicks == r.pulses;
        if is_degenerate {
            degenerate.push(r.setting_id);
        }
        weights.push(match weighting {
            Weighting::Uniform => 1.0,
            // p(1-p) <= 1/4, so 4M is the smallest inverse-variance weight
            Weighting::InverseVariance if is_degenerate => 4.0 * m,
            Weighting::InverseVariance => {
                let clipped = p.clamp(CLIP, 1.0 - CLIP);
                m / (clipped * (1.0 - clipped))
            }
        });
    }
    (observed, weights, degenerate)
}

/// Design matrix and calibration shared by a fit and its bootstrap replicates.
struct Prepared {
    povm: PovmMatrix,
    drift: Option<DriftSeries>,
    warnings: Vec<String>,
}

fn prepare(
    records: &[ClickRecord],
    params: &SchemeParams,
    model: PovmModel,
    options: &ReconstructionOptions,
) -> Result<Prepared> {
    if records.is_empty() {
        return Err(Error::Data("no settings".into()));
    }
    for r in records {
        r.validate()?;
    }
    let mut warnings = Vec::new();
    let drift = match &options.drift_correction {
        Some(dc) => {
            if records.iter().all(|r| r.signal_only_pulses.is_none()) {
                warnings.push(
                    "drift correction requested but no signal-only counts present; skipped".into(),
                );
                None
            } else {
                Some(drift_series_for_model(
                    model,
                    params,
                    &dc.reference_state,
                    records,
                    dc.window,
                )?)
            }
        }
        None => None,
    };
    if let Some(d) = &drift {
        if !d.clamped.is_empty() {
            warnings.push(format!(
                "{} efficiency estimates exceeded 1 and were clamped",
                d.clamped.len()
            ));
        }
        if !d.low_confidence.is_empty() {
            warnings.push(format!(
                "{} settings have fewer signal-only pulses than recommended",
                d.low_confidence.len()
            ));
        }
    }
    let etas = drift.as_ref().map(|d| d.smoothed.as_slice());
    let settings = resolve_probe_settings(records, model, params, etas)?;
    let povm = design_matrix(model, params, &settings, etas)?;
    warnings.extend(povm.warnings.iter().cloned());
    if povm.rows() < povm.cols() {
        warnings.push(format!(
            "{} settings for {} unknowns; the fit is underdetermined",
            povm.rows(),
            povm.cols()
        ));
    }
    Ok(Prepared {
        povm,
        drift,
        warnings,
    })
}

pub fn reconstruct(
    records: &[ClickRecord],
    params: &SchemeParams,
    model: PovmModel,
    options: &ReconstructionOptions,
) -> Result<ReconstructionResult> {
    let prepared = prepare(records, params, model, options)?;
    let (observed, weights, degenerate) = observations(records, options.weighting);
    let fit = fit_probabilities(
        &prepared.povm.elements,
        &observed,
        &weights,
        options.normalization,
        options.solver,
    )?;
    let model_probabilities = prepared.povm.forward(fit.estimate.probs());
    let standardized_residuals = records
        .iter()
        .zip(&observed)
        .zip(&model_probabilities)
        .map(|((r, obs), p)| {
            let sd = (p * (1.0 - p) / r.pulses as f64).sqrt();
            if sd > 0.0 {
                (obs - p) / sd
            } else {
                0.0
            }
        })
        .collect();
    let conditioning = conditioning_report(&prepared.povm);
    let mut warnings = prepared.warnings;
    if !degenerate.is_empty() {
        warnings.push(format!(
            "{} settings with all or no clicks were down-weighted",
            degenerate.len()
        ));
    }
    warnings.extend(conditioning.warnings.iter().cloned());
    Ok(ReconstructionResult {
        estimate: fit.estimate,
        raw_solution: fit.raw,
        pre_normalization_total: fit.pre_normalization_total,
        residual_norm: fit.residual_norm,
        weighted: options.weighting == Weighting::InverseVariance,
        normalization: options.normalization,
        kkt_violation: fit.kkt_violation,
        solver_iterations: fit.iterations,
        condition_number: conditioning.condition_number,
        conditioning,
        settings: prepared.povm.settings.clone(),
        per_setting_eta_used: prepared.povm.per_setting_eta.clone(),
        drift: prepared.drift,
        observed,
        model_probabilities,
        standardized_residuals,
        degenerate_settings: degenerate,
        bootstrap: None,
        warnings,
    })
}

/// Parametric bootstrap: every replicate redraws `no_clicks ~ Binomial(M, c/M)`
/// per setting and refits against the original design matrix.
pub fn bootstrap(
    records: &[ClickRecord],
    params: &SchemeParams,
    model: PovmModel,
    options: &ReconstructionOptions,
    replicates: usize,
    seed: u64,
) -> Result<BootstrapStats> {
    if replicates < 2 {
        return Err(Error::Config(format!(
            "bootstrap needs at least 2 replicates, got {replicates}"
        )));
    }
    let prepared = prepare(records, params, model, options)?;
    let outcomes: Vec<Result<Vec<f64>>> = (0..replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(seed, b"resample", b as u64);
            let resampled = records
                .iter()
                .map(|r| {
                    let p = r.no_click_fraction();
                    Ok(ClickRecord {
                        no_clicks: draw(&mut rng, r.pulses, p, r.setting_id, "bootstrap")?,
                        ..r.clone()
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let (observed, weights, _) = observations(&resampled, options.weighting);
            let fit = fit_probabilities(
                &prepared.povm.elements,
                &observed,
                &weights,
                options.normalization,
                options.solver,
            )?;
            Ok(fit.estimate.probs().to_vec())
        })
        .collect();

    let mut samples = Vec::with_capacity(replicates);
    let mut failures = 0;
    for outcome in outcomes {
        match outcome {
            Ok(x) => samples.push(x),
            Err(e) => {
                log::debug!("bootstrap replicate failed: {e}");
                failures += 1;
            }
        }
    }
    if failures as f64 > MAX_FAILURE_FRACTION * replicates as f64 || samples.len() < 2 {
        return Err(Error::Solver(format!(
            "bootstrap: {failures} of {replicates} replicates failed"
        )));
    }
    let (mean, std) = column_stats(&samples);
    Ok(BootstrapStats {
        replicates,
        failures,
        mean,
        std,
        samples,
    })
}

fn column_stats(samples: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = samples.len() as f64;
    let cols = samples[0].len();
    let mean: Vec<f64> = (0..cols)
        .map(|m| samples.iter().map(|s| s[m]).sum::<f64>() / n)
        .collect();
    let std = (0..cols)
        .map(|m| {
            let ss: f64 = samples.iter().map(|s| (s[m] - mean[m]).powi(2)).sum();
            (ss / (n - 1.0)).sqrt()
        })
        .collect();
    (mean, std)
}

/// [`reconstruct`] followed by [`bootstrap`], with the statistics attached.
pub fn reconstruct_with_bootstrap(
    records: &[ClickRecord],
    params: &SchemeParams,
    model: PovmModel,
    options: &ReconstructionOptions,
    replicates: usize,
    seed: u64,
) -> Result<ReconstructionResult> {
    let mut result = reconstruct(records, params, model, options)?;
    result.bootstrap = Some(bootstrap(records, params, model, options, replicates, seed)?);
    Ok(result)
}
