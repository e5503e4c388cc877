//! Run configuration: a TOML file, overridden by command-line flags.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use noisetomo::measurement::ProbeColumn;
use noisetomo::reconstruction::DriftCorrection;
use noisetomo::simulator::linear_settings;
use noisetomo::{
    DriftProfile, Normalization, PhotonDistribution, PovmModel, ProbeSetting,
    ReconstructionOptions, SchemeParams, Weighting,
};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Reconstruct,
    Simulate,
    Calibrate,
    Diagnose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelName {
    Simple,
    Perfect,
    Overlap,
}

impl From<ModelName> for PovmModel {
    fn from(m: ModelName) -> Self {
        match m {
            ModelName::Simple => PovmModel::Simple,
            ModelName::Perfect => PovmModel::PerfectOverlap,
            ModelName::Overlap => PovmModel::ImperfectOverlap,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeColumnName {
    ProbeMean,
    BlockedNoClicks,
}

impl From<ProbeColumnName> for ProbeColumn {
    fn from(c: ProbeColumnName) -> Self {
        match c {
            ProbeColumnName::ProbeMean => ProbeColumn::ProbeMean,
            ProbeColumnName::BlockedNoClicks => ProbeColumn::BlockedNoClicks,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Option<Mode>,
    pub scheme: Option<SchemeParams>,
    #[serde(default = "default_model")]
    pub model: ModelName,
    #[serde(default)]
    pub seed: u64,
    /// Bootstrap replicates; 0 disables the bootstrap.
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    #[serde(default)]
    pub reconstruction: ReconstructionConfig,
    pub drift_correction: Option<DriftConfig>,
    #[serde(default)]
    pub io: IoConfig,
    pub simulation: Option<SimulationConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config is valid")
    }
}

fn default_model() -> ModelName {
    ModelName::Overlap
}

fn default_bootstrap() -> usize {
    200
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructionConfig {
    #[serde(default)]
    pub weighting: Weighting,
    #[serde(default)]
    pub normalization: Normalization,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftConfig {
    #[serde(default)]
    pub enabled: bool,
    /// Photon-number distribution of the state used in the signal-only runs.
    pub reference: Vec<f64>,
    #[serde(default = "default_window")]
    pub window: usize,
}

fn default_window() -> usize {
    5
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoConfig {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeRange {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSpec {
    pub profile: DriftProfile,
    pub magnitude: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    /// Explicit photon-number distribution of the signal.
    pub true_state: Option<Vec<f64>>,
    /// Alternatively, a thermal signal of this mean.
    pub thermal_mean: Option<f64>,
    #[serde(default = "default_truth_cutoff")]
    pub truth_cutoff: usize,
    /// State seen in the signal-only runs; defaults to the signal itself.
    pub reference_state: Option<Vec<f64>>,
    pub pulses: u64,
    pub probe_means: Option<Vec<f64>>,
    pub probe_range: Option<ProbeRange>,
    pub drift: Option<DriftSpec>,
    #[serde(default = "default_probe_column")]
    pub probe_column: ProbeColumnName,
}

fn default_truth_cutoff() -> usize {
    12
}

fn default_probe_column() -> ProbeColumnName {
    ProbeColumnName::ProbeMean
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        // paths in the file are relative to the file
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut config.io.data, &mut config.io.out, &mut config.io.plot] {
            if let Some(rel) = p.as_mut() {
                if rel.is_relative() {
                    *rel = base.join(&*rel);
                }
            }
        }
        Ok(config)
    }

    pub fn scheme(&self) -> Result<SchemeParams, CliError> {
        let scheme = self
            .scheme
            .clone()
            .ok_or_else(|| CliError::Config("missing [scheme] section".into()))?;
        scheme.validate()?;
        Ok(scheme)
    }

    pub fn drift_correction(&self) -> Result<Option<DriftCorrection>, CliError> {
        match &self.drift_correction {
            Some(d) if d.enabled => Ok(Some(DriftCorrection {
                reference_state: distribution(&d.reference, "drift_correction.reference")?,
                window: d.window,
            })),
            _ => Ok(None),
        }
    }

    pub fn reconstruction_options(&self) -> Result<ReconstructionOptions, CliError> {
        Ok(ReconstructionOptions {
            weighting: self.reconstruction.weighting,
            normalization: self.reconstruction.normalization,
            drift_correction: self.drift_correction()?,
            ..Default::default()
        })
    }

    /// Warnings for sections the mode does not use.
    pub fn irrelevant_fields(&self, mode: Mode) -> Vec<String> {
        let mut unused = Vec::new();
        match mode {
            Mode::Simulate => {
                if self.bootstrap != default_bootstrap() {
                    unused.push("bootstrap");
                }
                if self.drift_correction.as_ref().is_some_and(|d| d.enabled) {
                    unused.push("drift_correction");
                }
                if self.io.plot.is_some() {
                    unused.push("io.plot");
                }
            }
            Mode::Calibrate | Mode::Diagnose => {
                if self.bootstrap != default_bootstrap() {
                    unused.push("bootstrap");
                }
                if self.simulation.is_some() {
                    unused.push("simulation");
                }
                if self.io.plot.is_some() {
                    unused.push("io.plot");
                }
            }
            Mode::Reconstruct => {}
        }
        unused
            .into_iter()
            .map(|f| format!("'{f}' is ignored in {mode:?} mode").to_lowercase())
            .collect()
    }
}

impl SimulationConfig {
    pub fn truth(&self) -> Result<PhotonDistribution, CliError> {
        match (&self.true_state, self.thermal_mean) {
            (Some(p), None) => distribution(p, "simulation.true_state"),
            (None, Some(mean)) => Ok(PhotonDistribution::thermal(mean, self.truth_cutoff)?),
            _ => Err(CliError::Config(
                "simulation needs exactly one of 'true_state' and 'thermal_mean'".into(),
            )),
        }
    }

    pub fn reference(&self) -> Result<Option<PhotonDistribution>, CliError> {
        self.reference_state
            .as_ref()
            .map(|p| distribution(p, "simulation.reference_state"))
            .transpose()
    }

    pub fn settings(&self) -> Result<Vec<ProbeSetting>, CliError> {
        match (&self.probe_means, &self.probe_range) {
            (Some(means), None) => Ok(means
                .iter()
                .enumerate()
                .map(|(i, n)| ProbeSetting::new(i as u64, *n))
                .collect()),
            (None, Some(r)) => Ok(linear_settings(r.start, r.stop, r.count)),
            _ => Err(CliError::Config(
                "simulation needs exactly one of 'probe_means' and 'probe_range'".into(),
            )),
        }
    }
}

fn distribution(probs: &[f64], field: &str) -> Result<PhotonDistribution, CliError> {
    PhotonDistribution::new(probs.to_vec())
        .map_err(|e| CliError::Config(format!("{field}: {e}")))
}
