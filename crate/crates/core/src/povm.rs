//! No-click POVM matrices for the three measurement models and the design
//! matrix of the linear inverse problem `p_j = sum_m Pi_jm rho_mm`.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{
    probe_cutoff_for, thermal_diagonal, thermal_tail, BsAmplitudes, PhotonDistribution, ProbeCutoff,
    SchemeParams,
};

/// Measurement model used to build the POVM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PovmModel {
    /// Probe and signal share the detector mode directly; no beam splitter.
    Simple,
    /// Beam splitter, probe and signal in the same mode.
    #[serde(rename = "perfect")]
    PerfectOverlap,
    /// Beam splitter with partial mode overlap.
    #[serde(rename = "overlap")]
    ImperfectOverlap,
}

impl PovmModel {
    /// Per-photon detection probability of signal photons.
    pub fn signal_efficiency(self, params: &SchemeParams, eta: f64) -> f64 {
        match self {
            PovmModel::Simple => eta,
            _ => params.transmissivity * eta,
        }
    }

    /// Per-photon detection probability of probe photons when the signal is blocked.
    pub fn probe_efficiency(self, params: &SchemeParams, eta: f64) -> f64 {
        match self {
            PovmModel::Simple => eta,
            _ => (1.0 - params.transmissivity) * eta,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PovmModel::Simple => "simple",
            PovmModel::PerfectOverlap => "perfect",
            PovmModel::ImperfectOverlap => "overlap",
        }
    }
}

impl std::str::FromStr for PovmModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simple" => Ok(PovmModel::Simple),
            "perfect" => Ok(PovmModel::PerfectOverlap),
            "overlap" => Ok(PovmModel::ImperfectOverlap),
            other => Err(Error::Config(format!(
                "unknown POVM model '{other}', expected simple, perfect or overlap"
            ))),
        }
    }
}

/// One thermal-probe configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeSetting {
    pub id: u64,
    /// Mean photon number of the probe.
    pub mean: f64,
}

impl ProbeSetting {
    pub fn new(id: u64, mean: f64) -> Self {
        ProbeSetting { id, mean }
    }
}

/// `J x (N+1)` matrix of no-click probabilities `Pi_jm` for Fock input `|m>`.
#[derive(Debug, Clone)]
pub struct PovmMatrix {
    pub elements: DMatrix<f64>,
    pub settings: Vec<ProbeSetting>,
    pub params: SchemeParams,
    pub model: PovmModel,
    pub per_setting_eta: Option<Vec<f64>>,
    /// Probe cutoff used for each row (zero for closed-form rows).
    pub probe_cutoffs: Vec<usize>,
    /// Thermal tail mass dropped by the probe truncation of each row.
    pub probe_tail: Vec<f64>,
    pub warnings: Vec<String>,
}

impl PovmMatrix {
    pub fn rows(&self) -> usize {
        self.elements.nrows()
    }

    pub fn cols(&self) -> usize {
        self.elements.ncols()
    }

    /// Detector efficiency used for row `j`.
    pub fn eta(&self, j: usize) -> f64 {
        self.per_setting_eta
            .as_ref()
            .map_or(self.params.eta, |etas| etas[j])
    }

    /// Forward model `p_j = sum_m Pi_jm rho_mm`. Components of `rho` above the
    /// signal cutoff are ignored.
    pub fn forward(&self, rho: &[f64]) -> Vec<f64> {
        (0..self.rows())
            .map(|j| {
                self.elements
                    .row(j)
                    .iter()
                    .zip(rho)
                    .map(|(pi, r)| pi * r)
                    .sum()
            })
            .collect()
    }
}

/// Probe-free no-click probability `sum_k (1 - T eta)^k rho_kk`.
pub fn signal_only_prob(params: &SchemeParams, rho: &PhotonDistribution) -> f64 {
    signal_only_prob_with(params.transmissivity * params.eta, rho.probs())
}

pub(crate) fn signal_only_prob_with(signal_efficiency: f64, rho: &[f64]) -> f64 {
    let base = 1.0 - signal_efficiency;
    rho.iter().rev().fold(0.0, |acc, r| acc * base + r)
}

/// Mean photon number of the interfering part of the probe,
/// `mu n / (1 + (1-mu)(1-T) eta n)`.
pub fn effective_probe_mean(params: &SchemeParams, setting: &ProbeSetting) -> f64 {
    effective_mean_with(params, params.eta, setting.mean)
}

fn effective_mean_with(params: &SchemeParams, eta: f64, mean: f64) -> f64 {
    params.overlap * mean * overlap_prefactor(params, eta, mean)
}

/// `1 / (1 + (1-mu)(1-T) eta n)`, the finite form of `n_bar / (mu n)`.
fn overlap_prefactor(params: &SchemeParams, eta: f64, mean: f64) -> f64 {
    1.0 / (1.0 + (1.0 - params.overlap) * (1.0 - params.transmissivity) * eta * mean)
}

fn check_inputs(params: &SchemeParams, settings: &[ProbeSetting], etas: &[f64]) -> Result<()> {
    if settings.is_empty() {
        return Err(Error::Config("at least one probe setting is required".into()));
    }
    if !(params.transmissivity >= 0.0 && params.transmissivity <= 1.0) {
        return Err(Error::Config(format!(
            "transmissivity must lie in [0, 1], got {}",
            params.transmissivity
        )));
    }
    if !(0.0..=1.0).contains(&params.overlap) {
        return Err(Error::Config(format!(
            "overlap must lie in [0, 1], got {}",
            params.overlap
        )));
    }
    if let Some(s) = settings.iter().find(|s| !(s.mean >= 0.0 && s.mean.is_finite())) {
        return Err(Error::Domain(format!(
            "setting {} has invalid probe mean {}",
            s.id, s.mean
        )));
    }
    if let Some(e) = etas.iter().find(|e| !(0.0..=1.0).contains(*e)) {
        return Err(Error::Config(format!("detector efficiency {e} outside [0, 1]")));
    }
    Ok(())
}

/// No-click POVM when the probe overlaps the signal directly at the detector:
/// `Pi_jm = y_j (1 - y_j eta)^m` with `y_j = 1 / (1 + eta n_j)`.
pub fn povm_simple(params: &SchemeParams, settings: &[ProbeSetting]) -> Result<PovmMatrix> {
    let etas = vec![params.eta; settings.len()];
    build_simple(params, settings, &etas, None)
}

fn build_simple(
    params: &SchemeParams,
    settings: &[ProbeSetting],
    etas: &[f64],
    per_setting_eta: Option<Vec<f64>>,
) -> Result<PovmMatrix> {
    check_inputs(params, settings, etas)?;
    let cols = params.signal_cutoff + 1;
    let elements = DMatrix::from_fn(settings.len(), cols, |j, m| {
        let eta = etas[j];
        let y = 1.0 / (1.0 + eta * settings[j].mean);
        y * (1.0 - y * eta).powi(m as i32)
    });
    Ok(PovmMatrix {
        elements,
        settings: settings.to_vec(),
        params: params.clone(),
        model: PovmModel::Simple,
        per_setting_eta,
        probe_cutoffs: vec![0; settings.len()],
        probe_tail: vec![0.0; settings.len()],
        warnings: Vec::new(),
    })
}

/// Beam-splitter POVM for perfect mode overlap,
/// `Pi_jm = sum_{n,k,l} (1-eta)^k sigma_nj |U^{kl}_{mn}|^2`.
///
/// The overlap parameter in `params` is ignored (treated as one).
pub fn povm_bs_perfect(params: &SchemeParams, settings: &[ProbeSetting]) -> Result<PovmMatrix> {
    let etas = vec![params.eta; settings.len()];
    build_bs(params, settings, &etas, None, PovmModel::PerfectOverlap)
}

/// Beam-splitter POVM for partial overlap: the perfect-overlap sum evaluated at
/// the effective probe mean `n_bar_j`, scaled by `n_bar_j / (mu n_j)`.
///
/// The prefactor is evaluated in its finite form `1 / (1 + (1-mu)(1-T) eta n_j)`,
/// which also covers `mu n_j = 0`.
pub fn povm_bs_overlap(params: &SchemeParams, settings: &[ProbeSetting]) -> Result<PovmMatrix> {
    let etas = vec![params.eta; settings.len()];
    build_bs(params, settings, &etas, None, PovmModel::ImperfectOverlap)
}

/// Probabilities `P(k | m, n)` that `k` photons leave through the detector port
/// when `m` signal and `n` probe photons enter the beam splitter.
struct DetectorPortTable {
    /// `probs[m][n][k]`, `k = 0..=m+n`.
    probs: Vec<Vec<Vec<f64>>>,
}

impl DetectorPortTable {
    fn build(transmissivity: f64, max_signal: usize, max_probe: usize) -> Result<Self> {
        let amps = BsAmplitudes::new(transmissivity, max_signal + max_probe)?;
        let probs = (0..=max_signal)
            .map(|m| {
                (0..=max_probe)
                    .into_par_iter()
                    .map(|n| {
                        (0..=m + n)
                            .map(|k| amps.amplitude(k, m + n - k, m, n).powi(2))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Ok(DetectorPortTable { probs })
    }

    /// `W[m][n] = sum_k (1-eta)^k P(k | m, n)` for `n <= max_probe`.
    fn no_click_weights(&self, eta: f64, max_probe: usize) -> Vec<Vec<f64>> {
        let base = 1.0 - eta;
        self.probs
            .iter()
            .map(|per_m| {
                per_m[..=max_probe]
                    .iter()
                    .map(|dist| dist.iter().rev().fold(0.0, |acc, p| acc * base + p))
                    .collect()
            })
            .collect()
    }
}

struct BsRowPlan {
    /// Mean of the thermal diagonal entering the sum.
    sigma_mean: f64,
    prefactor: f64,
    cutoff: usize,
}

fn build_bs(
    params: &SchemeParams,
    settings: &[ProbeSetting],
    etas: &[f64],
    per_setting_eta: Option<Vec<f64>>,
    model: PovmModel,
) -> Result<PovmMatrix> {
    check_inputs(params, settings, etas)?;
    let cols = params.signal_cutoff + 1;
    let t = params.transmissivity;
    let mut warnings = Vec::new();

    let mut plans = Vec::with_capacity(settings.len());
    for (setting, &eta) in settings.iter().zip(etas) {
        let (sigma_mean, prefactor) = match model {
            PovmModel::ImperfectOverlap => (
                effective_mean_with(params, eta, setting.mean),
                overlap_prefactor(params, eta, setting.mean),
            ),
            _ => (setting.mean, 1.0),
        };
        let cutoff = if sigma_mean == 0.0 {
            0
        } else {
            match params.probe_cutoff {
                ProbeCutoff::Fixed(c) => c,
                ProbeCutoff::Auto => {
                    let wanted = probe_cutoff_for(sigma_mean, params.tail_tol)?;
                    if wanted > params.max_probe_cutoff {
                        warnings.push(format!(
                            "setting {}: probe cutoff {} capped at {}",
                            setting.id, wanted, params.max_probe_cutoff
                        ));
                    }
                    wanted.min(params.max_probe_cutoff)
                }
            }
        };
        plans.push(BsRowPlan {
            sigma_mean,
            prefactor,
            cutoff,
        });
    }

    let probe_tail: Vec<f64> = plans
        .iter()
        .map(|p| thermal_tail(p.sigma_mean, p.cutoff))
        .collect();
    for (setting, tail) in settings.iter().zip(&probe_tail) {
        if *tail > params.tail_tol {
            warnings.push(format!(
                "setting {}: probe tail mass {:.3e} exceeds tolerance {:.1e}",
                setting.id, tail, params.tail_tol
            ));
        }
    }

    let max_cutoff = plans
        .iter()
        .filter(|p| p.sigma_mean > 0.0)
        .map(|p| p.cutoff)
        .max();
    let table = match max_cutoff {
        Some(c) => Some(DetectorPortTable::build(t, params.signal_cutoff, c)?),
        None => None,
    };

    // one weight table per distinct efficiency, sized for the rows that use it
    let mut needed: HashMap<u64, (f64, usize)> = HashMap::new();
    for (plan, &eta) in plans.iter().zip(etas) {
        if plan.sigma_mean > 0.0 {
            let entry = needed.entry(eta.to_bits()).or_insert((eta, 0));
            entry.1 = entry.1.max(plan.cutoff);
        }
    }
    let weights: HashMap<u64, Vec<Vec<f64>>> = match &table {
        Some(table) => needed
            .into_par_iter()
            .map(|(key, (eta, cutoff))| (key, table.no_click_weights(eta, cutoff)))
            .collect(),
        None => HashMap::new(),
    };

    let rows: Vec<Vec<f64>> = plans
        .par_iter()
        .zip(etas.par_iter())
        .map(|(plan, &eta)| {
            if plan.sigma_mean == 0.0 {
                let base = 1.0 - t * eta;
                return (0..cols)
                    .map(|m| plan.prefactor * base.powi(m as i32))
                    .collect();
            }
            let sigma = thermal_diagonal(plan.sigma_mean, plan.cutoff)
                .expect("validated probe mean")
                .probs;
            let w = &weights[&eta.to_bits()];
            (0..cols)
                .map(|m| {
                    let sum: f64 = sigma.iter().zip(&w[m]).map(|(s, wmn)| s * wmn).sum();
                    plan.prefactor * sum
                })
                .collect()
        })
        .collect();

    let elements = DMatrix::from_fn(settings.len(), cols, |j, m| rows[j][m]);
    Ok(PovmMatrix {
        elements,
        settings: settings.to_vec(),
        params: params.clone(),
        model,
        per_setting_eta,
        probe_cutoffs: plans.iter().map(|p| p.cutoff).collect(),
        probe_tail,
        warnings,
    })
}

/// Builds the design matrix for `model`, substituting per-setting detector
/// efficiencies when they are supplied.
pub fn design_matrix(
    model: PovmModel,
    params: &SchemeParams,
    settings: &[ProbeSetting],
    per_setting_eta: Option<&[f64]>,
) -> Result<PovmMatrix> {
    if model == PovmModel::PerfectOverlap && params.overlap < 1.0 {
        return Err(Error::Config(format!(
            "perfect-overlap model requested with overlap {}; use the overlap model",
            params.overlap
        )));
    }
    let etas = match per_setting_eta {
        Some(etas) => {
            if etas.len() != settings.len() {
                return Err(Error::Config(format!(
                    "{} per-setting efficiencies for {} settings",
                    etas.len(),
                    settings.len()
                )));
            }
            if let Some(e) = etas.iter().find(|e| !(**e > 0.0 && **e <= 1.0)) {
                return Err(Error::Config(format!(
                    "per-setting efficiency {e} outside (0, 1]"
                )));
            }
            etas.to_vec()
        }
        None => vec![params.eta; settings.len()],
    };
    let per_setting = per_setting_eta.map(|e| e.to_vec());
    match model {
        PovmModel::Simple => build_simple(params, settings, &etas, per_setting),
        _ => build_bs(params, settings, &etas, per_setting, model),
    }
}

/// Singular-value diagnostics of a design matrix.
#[derive(Debug, Clone, Serialize)]
pub struct ConditioningReport {
    pub rows: usize,
    pub cols: usize,
    /// Descending.
    pub singular_values: Vec<f64>,
    pub condition_number: f64,
    pub effective_rank: usize,
    pub underdetermined: bool,
    /// Pairs of setting ids with identical probe configuration.
    pub duplicate_settings: Vec<(u64, u64)>,
    pub warnings: Vec<String>,
}

pub fn conditioning_report(povm: &PovmMatrix) -> ConditioningReport {
    let (rows, cols) = povm.elements.shape();
    let mut singular_values: Vec<f64> = povm
        .elements
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    singular_values.sort_by(|a, b| b.total_cmp(a));
    let largest = singular_values.first().copied().unwrap_or(0.0);
    let smallest = if rows >= cols {
        singular_values.last().copied().unwrap_or(0.0)
    } else {
        0.0
    };
    let condition_number = if smallest > 0.0 {
        largest / smallest
    } else {
        f64::INFINITY
    };
    let rank_tol = largest * rows.max(cols) as f64 * f64::EPSILON;
    let effective_rank = singular_values.iter().filter(|s| **s > rank_tol).count();

    let mut duplicate_settings = Vec::new();
    for a in 0..rows {
        for b in (a + 1)..rows {
            if povm.settings[a].mean == povm.settings[b].mean && povm.eta(a) == povm.eta(b) {
                duplicate_settings.push((povm.settings[a].id, povm.settings[b].id));
            }
        }
    }

    let mut warnings = Vec::new();
    let underdetermined = rows < cols;
    if underdetermined {
        warnings.push(format!(
            "underdetermined: {rows} settings for {cols} unknowns"
        ));
    }
    if effective_rank < cols {
        warnings.push(format!("rank deficient: effective rank {effective_rank} of {cols}"));
    }
    if !duplicate_settings.is_empty() {
        warnings.push(format!(
            "{} pairs of settings share a probe mean",
            duplicate_settings.len()
        ));
    }
    ConditioningReport {
        rows,
        cols,
        singular_values,
        condition_number,
        effective_rank,
        underdetermined,
        duplicate_settings,
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn lab_params(cutoff: usize) -> SchemeParams {
        SchemeParams::new(0.15, 0.9, 0.45, cutoff).unwrap()
    }

    fn settings(means: &[f64]) -> Vec<ProbeSetting> {
        means
            .iter()
            .enumerate()
            .map(|(i, &m)| ProbeSetting::new(i as u64, m))
            .collect()
    }

    #[test]
    fn simple_examples() {
        let p = povm_simple(&lab_params(3), &settings(&[0.0, 1.0, 1e12])).unwrap();
        assert_eq!(p.elements[(0, 0)], 1.0);
        assert_abs_diff_eq!(p.elements[(0, 1)], 0.85, epsilon = 1e-15);
        assert_abs_diff_eq!(p.elements[(1, 0)], 1.0 / 1.15, epsilon = 1e-12);
        assert_abs_diff_eq!(p.elements[(1, 1)], 0.756_143_667_3, epsilon = 1e-9);
        for m in 0..4 {
            assert!(p.elements[(2, m)] < 1e-10);
        }
        assert_eq!(p.model, PovmModel::Simple);
    }

    #[test]
    fn signal_only_examples() {
        let params = lab_params(3);
        assert_eq!(signal_only_prob(&params, &PhotonDistribution::vacuum(3)), 1.0);
        assert_abs_diff_eq!(
            signal_only_prob(&params, &PhotonDistribution::fock(1, 3)),
            0.865,
            epsilon = 1e-15
        );
        let rho = PhotonDistribution::new(vec![0.095, 0.905]).unwrap();
        // brute force over the two Fock components
        let brute = 0.095 * 1.0 + 0.905 * (1.0 - 0.9 * 0.15);
        assert_abs_diff_eq!(signal_only_prob(&params, &rho), brute, epsilon = 1e-15);
        assert_abs_diff_eq!(signal_only_prob(&params, &rho), 0.877825, epsilon = 1e-12);
    }

    #[test]
    fn effective_mean_examples() {
        let mut params = lab_params(3);
        let nbar = effective_probe_mean(&params, &ProbeSetting::new(0, 10.0));
        assert_abs_diff_eq!(nbar, 4.5 / 1.0825, epsilon = 1e-12);
        let sat = effective_probe_mean(&params, &ProbeSetting::new(0, 1e12));
        assert_relative_eq!(sat, 0.45 / 0.00825, max_relative = 1e-9);
        params.overlap = 1.0;
        assert_eq!(effective_probe_mean(&params, &ProbeSetting::new(0, 3.3)), 3.3);
    }

    #[test]
    fn vacuum_probe_row_is_signal_only() {
        let params = lab_params(6);
        for p in [
            povm_bs_perfect(&params, &settings(&[0.0])).unwrap(),
            povm_bs_overlap(&params, &settings(&[0.0])).unwrap(),
        ] {
            for m in 0..=6 {
                assert_abs_diff_eq!(p.elements[(0, m)], 0.865f64.powi(m as i32), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn blind_detector_never_clicks() {
        let params = SchemeParams {
            eta: 0.0,
            ..lab_params(4)
        };
        let p = povm_bs_perfect(&params, &settings(&[0.0, 0.7, 3.0])).unwrap();
        for v in p.elements.iter() {
            assert_abs_diff_eq!(*v, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn perfect_overlap_matches_thermal_mixing_closed_form() {
        // mixing |m> with a thermal probe in one mode gives y (1 - y T eta)^m,
        // y = 1/(1 + (1-T) eta n); an independent analytic route
        let params = lab_params(5);
        let means = [0.3, 2.0, 15.0, 60.0];
        let p = povm_bs_perfect(&params, &settings(&means)).unwrap();
        for (j, &n) in means.iter().enumerate() {
            let y = 1.0 / (1.0 + 0.1 * 0.15 * n);
            for m in 0..=5 {
                let expected = y * (1.0 - y * 0.135).powi(m as i32);
                assert_abs_diff_eq!(p.elements[(j, m)], expected, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn overlap_reduces_to_perfect_at_unit_overlap() {
        let mut params = lab_params(4);
        params.overlap = 1.0;
        let s = settings(&[0.0, 0.4, 1.5, 7.0]);
        let a = povm_bs_perfect(&params, &s).unwrap();
        let b = povm_bs_overlap(&params, &s).unwrap();
        assert!((a.elements - b.elements).amax() <= 1e-12);
    }

    #[test]
    fn zero_overlap_factorizes() {
        let mut params = lab_params(4);
        params.overlap = 0.0;
        let means = [0.0, 0.4, 1.5, 70.0];
        let p = povm_bs_overlap(&params, &settings(&means)).unwrap();
        for (j, n) in means.iter().enumerate() {
            for m in 0..=4 {
                let expected = 0.865f64.powi(m as i32) / (1.0 + 0.1 * 0.15 * n);
                assert_abs_diff_eq!(p.elements[(j, m)], expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn weak_probe_two_mode_picture() {
        let params = lab_params(4);
        let n = 0.2;
        let overlap = povm_bs_overlap(&params, &settings(&[n])).unwrap();
        let mut perfect_params = params.clone();
        perfect_params.overlap = 1.0;
        let perfect = povm_bs_perfect(&perfect_params, &settings(&[0.45 * n])).unwrap();
        let scale = 1.0 / (1.0 + 0.55 * 0.1 * 0.15 * n);
        for m in 0..=4 {
            assert_relative_eq!(
                overlap.elements[(0, m)],
                perfect.elements[(0, m)] * scale,
                max_relative = 1e-3
            );
        }
    }

    #[test]
    fn design_matrix_dispatch_and_shape() {
        let params = lab_params(3);
        let means: Vec<f64> = (0..150).map(|j| j as f64 * 0.5).collect();
        let s = settings(&means);
        let d = design_matrix(PovmModel::ImperfectOverlap, &params, &s, None).unwrap();
        assert_eq!(d.elements.shape(), (150, 4));
        let same = design_matrix(
            PovmModel::ImperfectOverlap,
            &params,
            &s,
            Some(&vec![0.15; 150]),
        )
        .unwrap();
        assert!((d.elements - same.elements).amax() == 0.0);
    }

    #[test]
    fn design_matrix_monotone_in_efficiency() {
        let params = lab_params(3);
        let s = settings(&[5.0; 7]);
        let etas: Vec<f64> = (0..7).map(|i| 0.15 * (0.85 + 0.05 * i as f64)).collect();
        for model in [PovmModel::Simple, PovmModel::ImperfectOverlap] {
            let d = design_matrix(model, &params, &s, Some(&etas)).unwrap();
            for j in 1..7 {
                for m in 0..4 {
                    assert!(d.elements[(j, m)] < d.elements[(j - 1, m)]);
                }
            }
        }
    }

    #[test]
    fn design_matrix_rejects_mismatch() {
        let params = lab_params(3);
        let s = settings(&[0.0, 1.0]);
        assert!(matches!(
            design_matrix(PovmModel::ImperfectOverlap, &params, &s, Some(&[0.1])),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            design_matrix(PovmModel::ImperfectOverlap, &params, &s, Some(&[0.1, 1.2])),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            design_matrix(PovmModel::PerfectOverlap, &params, &s, None),
            Err(Error::Config(_))
        ));
        assert!(design_matrix(PovmModel::Simple, &params, &[], None).is_err());
    }

    #[test]
    fn conditioning_full_rank_for_distinct_nodes() {
        let params = lab_params(3);
        let p = povm_simple(&params, &settings(&[0.0, 0.5, 1.0, 2.0])).unwrap();
        let report = conditioning_report(&p);
        assert_eq!(report.effective_rank, 4);
        assert!(report.duplicate_settings.is_empty());
        assert!(!report.underdetermined);
    }

    #[test]
    fn conditioning_flags_duplicates() {
        let params = lab_params(3);
        let p = povm_simple(&params, &settings(&[0.0, 1.0, 1.0, 2.0])).unwrap();
        let report = conditioning_report(&p);
        assert!(report.effective_rank <= 3);
        assert_eq!(report.duplicate_settings, vec![(1, 2)]);
    }

    #[test]
    fn conditioning_underdetermined_warns() {
        let params = lab_params(3);
        let p = povm_simple(&params, &settings(&[0.0, 1.0])).unwrap();
        let report = conditioning_report(&p);
        assert!(report.underdetermined);
        assert!(report.condition_number.is_infinite());
        assert!(!report.warnings.is_empty());
    }

    #[test]
    fn probe_tail_is_reported() {
        let params = lab_params(2).with_probe_cutoff(ProbeCutoff::Fixed(3));
        let p = povm_bs_perfect(
            &SchemeParams {
                overlap: 1.0,
                ..params
            },
            &settings(&[2.0]),
        )
        .unwrap();
        assert_abs_diff_eq!(p.probe_tail[0], (2.0f64 / 3.0).powi(4), epsilon = 1e-14);
        assert!(!p.warnings.is_empty());
    }
}
