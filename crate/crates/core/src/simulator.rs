//! Synthetic experiments: binomial no-click counts for any POVM model,
//! pseudo-thermal intensity sampling and efficiency drift.
//!
//! Every setting draws from its own ChaCha stream (selected by setting id), so
//! results do not depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::ClickRecord;
use crate::error::{Error, Result};
use crate::fock::{PhotonDistribution, SchemeParams};
use crate::povm::{design_matrix, signal_only_prob_with, PovmModel, ProbeSetting};

/// Independent generator for `(seed, domain, stream)`.
pub(crate) fn substream(seed: u64, domain: &[u8; 8], stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(domain);
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

/// Allowed excursion of a model probability outside `[0, 1]` before the
/// simulation is aborted.
const PROBABILITY_SLACK: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub params: SchemeParams,
    pub model: PovmModel,
    pub true_state: PhotonDistribution,
    /// State measured in the probe-free signal-only runs; defaults to `true_state`.
    pub reference_state: Option<PhotonDistribution>,
    pub settings: Vec<ProbeSetting>,
    pub pulses_per_setting: u64,
    /// Per-setting detector efficiency multipliers.
    pub eta_multipliers: Option<Vec<f64>>,
    pub seed: u64,
}

impl ExperimentPlan {
    pub fn new(
        params: SchemeParams,
        model: PovmModel,
        true_state: PhotonDistribution,
        settings: Vec<ProbeSetting>,
        pulses_per_setting: u64,
        seed: u64,
    ) -> Self {
        ExperimentPlan {
            params,
            model,
            true_state,
            reference_state: None,
            settings,
            pulses_per_setting,
            eta_multipliers: None,
            seed,
        }
    }

    pub fn with_reference_state(mut self, state: PhotonDistribution) -> Self {
        self.reference_state = Some(state);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.pulses_per_setting == 0 {
            return Err(Error::Config("pulses_per_setting must be positive".into()));
        }
        if self.settings.is_empty() {
            return Err(Error::Config("plan has no settings".into()));
        }
        if let Some(mult) = &self.eta_multipliers {
            if mult.len() != self.settings.len() {
                return Err(Error::Config(format!(
                    "{} efficiency multipliers for {} settings",
                    mult.len(),
                    self.settings.len()
                )));
            }
            let upper = 1.0 / (self.params.eta * self.params.transmissivity);
            if let Some(m) = mult.iter().find(|m| !(**m > 0.0 && **m <= upper)) {
                return Err(Error::Config(format!(
                    "efficiency multiplier {m} outside (0, {upper}]"
                )));
            }
        }
        Ok(())
    }

    /// Detector efficiency of every setting after drift.
    pub fn per_setting_eta(&self) -> Vec<f64> {
        match &self.eta_multipliers {
            Some(mult) => mult.iter().map(|m| self.params.eta * m).collect(),
            None => vec![self.params.eta; self.settings.len()],
        }
    }

    /// Exact no-click probabilities of every setting under the plan.
    pub fn model_probabilities(&self) -> Result<Vec<f64>> {
        let params = self
            .params
            .clone()
            .with_signal_cutoff(self.true_state.cutoff());
        let etas = self.eta_multipliers.as_ref().map(|_| self.per_setting_eta());
        let povm = design_matrix(self.model, &params, &self.settings, etas.as_deref())?;
        Ok(povm.forward(self.true_state.probs()))
    }
}

/// Draws no-click, blocked-signal and signal-only counts for every setting.
pub fn simulate_clicks(plan: &ExperimentPlan) -> Result<Vec<ClickRecord>> {
    plan.validate()?;
    let probs = plan.model_probabilities()?;
    let etas = plan.per_setting_eta();
    let reference = plan.reference_state.as_ref().unwrap_or(&plan.true_state);
    let pulses = plan.pulses_per_setting;

    plan.settings
        .par_iter()
        .zip(probs.par_iter())
        .zip(etas.par_iter())
        .map(|((setting, &p), &eta)| {
            let blocked_p =
                1.0 / (1.0 + plan.model.probe_efficiency(&plan.params, eta) * setting.mean);
            let signal_p = signal_only_prob_with(
                plan.model.signal_efficiency(&plan.params, eta),
                reference.probs(),
            );
            let mut rng = substream(plan.seed, b"clicks\0\0", setting.id);
            let no_clicks = draw(&mut rng, pulses, p, setting.id, "no-click")?;
            let blocked = draw(&mut rng, pulses, blocked_p, setting.id, "blocked-signal")?;
            let signal_only = draw(&mut rng, pulses, signal_p, setting.id, "signal-only")?;
            Ok(ClickRecord {
                setting_id: setting.id,
                probe_mean: Some(setting.mean),
                pulses,
                no_clicks,
                blocked_no_clicks: Some(blocked),
                signal_only_pulses: Some(pulses),
                signal_only_no_clicks: Some(signal_only),
            })
        })
        .collect()
}

pub(crate) fn draw(rng: &mut ChaCha8Rng, trials: u64, p: f64, id: u64, what: &str) -> Result<u64> {
    if !(p >= -PROBABILITY_SLACK && p <= 1.0 + PROBABILITY_SLACK) {
        return Err(Error::Consistency(format!(
            "setting {id}: {what} probability {p} outside [0, 1]"
        )));
    }
    let binomial = Binomial::new(trials, p.clamp(0.0, 1.0))
        .map_err(|e| Error::Consistency(format!("setting {id}: {e}")))?;
    Ok(binomial.sample(rng))
}

#[derive(Debug, Clone, Serialize)]
pub struct ThermalSample {
    pub intensities: Vec<f64>,
    pub g2: f64,
}

/// Exponentially distributed speckle intensities with the given mean.
pub fn simulate_thermal_intensities(mean: f64, samples: usize, seed: u64) -> Result<ThermalSample> {
    if !(mean > 0.0 && mean.is_finite()) {
        return Err(Error::Domain(format!("thermal mean must be positive, got {mean}")));
    }
    if samples < 2 {
        return Err(Error::Domain(format!("need at least 2 samples, got {samples}")));
    }
    let exp = Exp::new(1.0 / mean).map_err(|e| Error::Domain(e.to_string()))?;
    let mut rng = substream(seed, b"speckle\0", 0);
    let intensities: Vec<f64> = (0..samples).map(|_| exp.sample(&mut rng)).collect();
    let g2 = second_order_coherence(&intensities);
    Ok(ThermalSample { intensities, g2 })
}

/// `<I^2> / <I>^2`.
pub fn second_order_coherence(intensities: &[f64]) -> f64 {
    let n = intensities.len() as f64;
    let first = intensities.iter().sum::<f64>() / n;
    let second = intensities.iter().map(|i| i * i).sum::<f64>() / n;
    second / (first * first)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriftProfile {
    Linear,
    Sinusoidal,
    Step,
}

impl std::str::FromStr for DriftProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(DriftProfile::Linear),
            "sinusoidal" => Ok(DriftProfile::Sinusoidal),
            "step" => Ok(DriftProfile::Step),
            other => Err(Error::Config(format!("unknown drift profile '{other}'"))),
        }
    }
}

/// Efficiency multipliers `1 - magnitude * s_j` over `len` settings, where the
/// profile shape `s` is rescaled to span `[0, 1]`.
///
/// Linear falls from the first to the last setting, step drops at the midpoint
/// and sinusoidal runs one full period starting at its maximum.
pub fn drift_multipliers(profile: DriftProfile, magnitude: f64, len: usize) -> Result<Vec<f64>> {
    if !(0.0..=0.5).contains(&magnitude) {
        return Err(Error::Config(format!(
            "drift magnitude must lie in [0, 0.5], got {magnitude}"
        )));
    }
    let span = len.saturating_sub(1).max(1) as f64;
    let shape: Vec<f64> = (0..len)
        .map(|j| {
            let x = j as f64 / span;
            match profile {
                DriftProfile::Linear => x,
                DriftProfile::Step => (j >= len / 2) as u8 as f64,
                DriftProfile::Sinusoidal => 0.5 * (1.0 - (std::f64::consts::TAU * x).cos()),
            }
        })
        .collect();
    let lo = shape.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = shape.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    Ok(shape
        .iter()
        .map(|s| {
            let unit = if range > 0.0 { (s - lo) / range } else { 0.0 };
            1.0 - magnitude * unit
        })
        .collect())
}

/// Returns a copy of `plan` whose per-setting efficiencies follow `profile`.
/// Existing multipliers are compounded.
pub fn inject_drift(plan: &ExperimentPlan, profile: DriftProfile, magnitude: f64) -> Result<ExperimentPlan> {
    let multipliers = drift_multipliers(profile, magnitude, plan.settings.len())?;
    let mut drifted = plan.clone();
    if magnitude == 0.0 {
        return Ok(drifted);
    }
    drifted.eta_multipliers = Some(match &plan.eta_multipliers {
        Some(existing) => existing.iter().zip(&multipliers).map(|(a, b)| a * b).collect(),
        None => multipliers,
    });
    Ok(drifted)
}

/// `count` settings with probe means evenly spaced over `[lo, hi]`, ids from 0.
pub fn linear_settings(lo: f64, hi: f64, count: usize) -> Vec<ProbeSetting> {
    let step = if count > 1 { (hi - lo) / (count - 1) as f64 } else { 0.0 };
    (0..count)
        .map(|j| ProbeSetting::new(j as u64, lo + step * j as f64))
        .collect()
}
