//! Probe intensities from blocked-signal counts and per-setting detector
//! efficiencies from signal-only counts of a known reference state.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fock::{PhotonDistribution, SchemeParams};
use crate::povm::{signal_only_prob_with, PovmModel};

/// Settings with fewer signal-only pulses are flagged as low confidence.
pub const LOW_CONFIDENCE_PULSES: u64 = 1_000;

const BISECTION_TOL: f64 = 1e-12;
const BISECTION_MAX_ITER: usize = 200;

/// Counts recorded for one probe setting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClickRecord {
    pub setting_id: u64,
    /// Probe mean, when known directly rather than through blocked counts.
    pub probe_mean: Option<f64>,
    pub pulses: u64,
    pub no_clicks: u64,
    /// No-click count with the signal blocked, over `pulses` pulses.
    pub blocked_no_clicks: Option<u64>,
    pub signal_only_pulses: Option<u64>,
    pub signal_only_no_clicks: Option<u64>,
}

impl ClickRecord {
    pub fn new(setting_id: u64, pulses: u64, no_clicks: u64) -> Self {
        ClickRecord {
            setting_id,
            probe_mean: None,
            pulses,
            no_clicks,
            blocked_no_clicks: None,
            signal_only_pulses: None,
            signal_only_no_clicks: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let id = self.setting_id;
        if self.pulses == 0 {
            return Err(Error::Data(format!("setting {id}: pulses must be positive")));
        }
        if self.no_clicks > self.pulses {
            return Err(Error::Data(format!(
                "setting {id}: no_clicks {} exceeds pulses {}",
                self.no_clicks, self.pulses
            )));
        }
        if let Some(blocked) = self.blocked_no_clicks {
            if blocked > self.pulses {
                return Err(Error::Data(format!(
                    "setting {id}: blocked_no_clicks {blocked} exceeds pulses {}",
                    self.pulses
                )));
            }
        }
        match (self.signal_only_pulses, self.signal_only_no_clicks) {
            (Some(pulses), Some(counts)) => {
                if pulses == 0 {
                    return Err(Error::Data(format!(
                        "setting {id}: signal_only_pulses must be positive"
                    )));
                }
                if counts > pulses {
                    return Err(Error::Data(format!(
                        "setting {id}: signal_only_no_clicks {counts} exceeds signal_only_pulses {pulses}"
                    )));
                }
            }
            (None, None) => {}
            _ => {
                return Err(Error::Data(format!(
                    "setting {id}: signal-only pulses and counts must be given together"
                )))
            }
        }
        if let Some(mean) = self.probe_mean {
            if !(mean >= 0.0 && mean.is_finite()) {
                return Err(Error::Data(format!("setting {id}: invalid probe mean {mean}")));
            }
        }
        Ok(())
    }

    pub fn no_click_fraction(&self) -> f64 {
        self.no_clicks as f64 / self.pulses as f64
    }
}

/// No-click probability with the signal blocked, `1 / (1 + (1-T) eta n)`.
pub fn blocked_probability(params: &SchemeParams, probe_mean: f64) -> f64 {
    1.0 / (1.0 + (1.0 - params.transmissivity) * params.eta * probe_mean)
}

/// Inverts the blocked-signal no-click fraction for the probe mean,
/// `n = (pulses / blocked_no_clicks - 1) / ((1-T) eta)`.
pub fn probe_mean_from_blocked(
    params: &SchemeParams,
    blocked_no_clicks: u64,
    pulses: u64,
) -> Result<f64> {
    let efficiency = PovmModel::ImperfectOverlap.probe_efficiency(params, params.eta);
    probe_mean_with_efficiency(efficiency, blocked_no_clicks, pulses)
}

/// Model-aware variant: the simple model has no beam splitter in front of the probe.
pub fn probe_mean_for_model(
    model: PovmModel,
    params: &SchemeParams,
    eta: f64,
    blocked_no_clicks: u64,
    pulses: u64,
) -> Result<f64> {
    probe_mean_with_efficiency(model.probe_efficiency(params, eta), blocked_no_clicks, pulses)
}

fn probe_mean_with_efficiency(efficiency: f64, blocked_no_clicks: u64, pulses: u64) -> Result<f64> {
    if pulses == 0 || blocked_no_clicks > pulses {
        return Err(Error::Data(format!(
            "blocked no-click count {blocked_no_clicks} invalid for {pulses} pulses"
        )));
    }
    if blocked_no_clicks == 0 {
        return Err(Error::ProbeTooBright { setting_id: None });
    }
    if !(efficiency > 0.0) {
        return Err(Error::Config(
            "probe never reaches the detector: (1-T) eta must be positive".into(),
        ));
    }
    if blocked_no_clicks == pulses {
        return Ok(0.0);
    }
    Ok((pulses as f64 / blocked_no_clicks as f64 - 1.0) / efficiency)
}

/// Solves `sum_k (1 - T eta)^k rho_ref[k] = p_signal_hat` for `eta` by bisection.
///
/// Roots above one are clamped to one with a warning.
pub fn efficiency_from_reference(
    params: &SchemeParams,
    rho_ref: &PhotonDistribution,
    p_signal_hat: f64,
) -> Result<f64> {
    solve_efficiency(params.transmissivity, rho_ref, p_signal_hat).map(|e| e.eta)
}

#[derive(Debug, Clone, Copy)]
struct EfficiencyEstimate {
    eta: f64,
    clamped: bool,
}

fn solve_efficiency(
    transmissivity: f64,
    rho_ref: &PhotonDistribution,
    p_signal_hat: f64,
) -> Result<EfficiencyEstimate> {
    let rho = rho_ref.probs();
    let vacuum = rho[0];
    if vacuum >= 1.0 - 1e-15 {
        return Err(Error::InconsistentData(
            "reference state is vacuum: its no-click probability does not depend on eta".into(),
        ));
    }
    if !(p_signal_hat <= 1.0) || p_signal_hat.is_nan() {
        return Err(Error::InconsistentData(format!(
            "signal-only no-click fraction {p_signal_hat} exceeds 1"
        )));
    }
    // the no-click probability at eta = 1/T is the vacuum weight of the reference
    if p_signal_hat < vacuum {
        return Err(Error::InconsistentData(format!(
            "signal-only no-click fraction {p_signal_hat} below the reference floor {vacuum}"
        )));
    }
    let f = |eta: f64| signal_only_prob_with(transmissivity * eta, rho) - p_signal_hat;
    let (mut lo, mut hi) = (0.0, 1.0 / transmissivity);
    if f(lo) <= 0.0 {
        return Ok(EfficiencyEstimate {
            eta: 0.0,
            clamped: false,
        });
    }
    for _ in 0..BISECTION_MAX_ITER {
        if hi - lo <= BISECTION_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let eta = 0.5 * (lo + hi);
    if eta > 1.0 {
        log::warn!("efficiency estimate {eta} exceeds 1; clamped");
        return Ok(EfficiencyEstimate {
            eta: 1.0,
            clamped: true,
        });
    }
    Ok(EfficiencyEstimate {
        eta,
        clamped: false,
    })
}

/// Probe settings for `records`, taking `probe_mean` when present and otherwise
/// inverting the blocked-signal counts with the efficiency used for that row.
pub fn resolve_probe_settings(
    records: &[ClickRecord],
    model: PovmModel,
    params: &SchemeParams,
    per_setting_eta: Option<&[f64]>,
) -> Result<Vec<crate::povm::ProbeSetting>> {
    records
        .iter()
        .enumerate()
        .map(|(j, r)| {
            let mean = match (r.probe_mean, r.blocked_no_clicks) {
                (Some(mean), _) => mean,
                (None, Some(blocked)) => {
                    let eta = per_setting_eta.map_or(params.eta, |e| e[j]);
                    probe_mean_for_model(model, params, eta, blocked, r.pulses).map_err(|e| {
                        match e {
                            Error::ProbeTooBright { .. } => Error::ProbeTooBright {
                                setting_id: Some(r.setting_id),
                            },
                            other => other.for_setting(r.setting_id),
                        }
                    })?
                }
                (None, None) => {
                    return Err(Error::Data(format!(
                        "setting {}: neither probe_mean nor blocked_no_clicks given",
                        r.setting_id
                    )))
                }
            };
            Ok(crate::povm::ProbeSetting::new(r.setting_id, mean))
        })
        .collect()
}

/// Per-setting efficiencies recovered from signal-only counts.
#[derive(Debug, Clone, Serialize)]
pub struct DriftSeries {
    pub setting_ids: Vec<u64>,
    /// Direct inversion per setting.
    pub raw: Vec<f64>,
    /// Centered moving average of `raw`.
    pub smoothed: Vec<f64>,
    pub window: usize,
    /// Settings whose estimate rests on fewer than [`LOW_CONFIDENCE_PULSES`] pulses.
    pub low_confidence: Vec<u64>,
    /// Settings whose root exceeded one and was clamped.
    pub clamped: Vec<u64>,
}

/// Efficiency series from the signal-only counts of every record.
///
/// `window` must be odd; `1` disables smoothing. Near the ends the window
/// shrinks to the available neighbours.
pub fn drift_series(
    params: &SchemeParams,
    rho_ref: &PhotonDistribution,
    records: &[ClickRecord],
    window: usize,
) -> Result<DriftSeries> {
    drift_series_for_model(PovmModel::ImperfectOverlap, params, rho_ref, records, window)
}

pub fn drift_series_for_model(
    model: PovmModel,
    params: &SchemeParams,
    rho_ref: &PhotonDistribution,
    records: &[ClickRecord],
    window: usize,
) -> Result<DriftSeries> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::Config(format!(
            "smoothing window must be a positive odd number, got {window}"
        )));
    }
    // signal efficiency is T eta for the beam-splitter models, eta for the simple one
    let transmissivity = model.signal_efficiency(params, 1.0);
    let estimates: Vec<EfficiencyEstimate> = records
        .par_iter()
        .map(|r| {
            let (Some(pulses), Some(counts)) = (r.signal_only_pulses, r.signal_only_no_clicks)
            else {
                return Err(Error::Config(format!(
                    "setting {}: drift correction needs signal-only counts",
                    r.setting_id
                )));
            };
            if pulses == 0 || counts > pulses {
                return Err(Error::Data(format!(
                    "setting {}: invalid signal-only counts {counts}/{pulses}",
                    r.setting_id
                )));
            }
            solve_efficiency(transmissivity, rho_ref, counts as f64 / pulses as f64)
                .map_err(|e| e.for_setting(r.setting_id))
        })
        .collect::<Result<_>>()?;

    let raw: Vec<f64> = estimates.iter().map(|e| e.eta).collect();
    let smoothed = moving_average(&raw, window);
    Ok(DriftSeries {
        setting_ids: records.iter().map(|r| r.setting_id).collect(),
        raw,
        smoothed,
        window,
        low_confidence: records
            .iter()
            .filter(|r| r.signal_only_pulses.unwrap_or(0) < LOW_CONFIDENCE_PULSES)
            .map(|r| r.setting_id)
            .collect(),
        clamped: records
            .iter()
            .zip(&estimates)
            .filter(|(_, e)| e.clamped)
            .map(|(r, _)| r.setting_id)
            .collect(),
    })
}

fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(values.len());
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}
