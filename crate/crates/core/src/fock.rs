//! Fock-space primitives: photon-number distributions, thermal diagonals and
//! the two-mode beam-splitter unitary.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the total probability of a [`PhotonDistribution`].
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// How many probe photon numbers are kept when summing over the thermal probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeCutoff {
    /// Per setting, the smallest cutoff whose thermal tail is below `tail_tol`.
    Auto,
    /// The same cutoff for every setting.
    Fixed(usize),
}

/// Calibrated parameters of the measurement scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeParams {
    /// Detector efficiency.
    pub eta: f64,
    /// Beam-splitter transmissivity seen by the signal.
    #[serde(default = "default_transmissivity")]
    pub transmissivity: f64,
    /// Mode overlap between signal and probe.
    #[serde(default = "default_overlap")]
    pub overlap: f64,
    /// Largest signal photon number reconstructed.
    pub signal_cutoff: usize,
    #[serde(default = "default_probe_cutoff")]
    pub probe_cutoff: ProbeCutoff,
    /// Thermal tail mass tolerated when truncating the probe.
    #[serde(default = "default_tail_tol")]
    pub tail_tol: f64,
    /// Hard ceiling for automatically chosen probe cutoffs.
    #[serde(default = "default_max_probe_cutoff")]
    pub max_probe_cutoff: usize,
}

fn default_transmissivity() -> f64 {
    0.9
}
fn default_overlap() -> f64 {
    1.0
}
fn default_probe_cutoff() -> ProbeCutoff {
    ProbeCutoff::Auto
}
fn default_tail_tol() -> f64 {
    1e-9
}
fn default_max_probe_cutoff() -> usize {
    3000
}

impl SchemeParams {
    pub fn new(eta: f64, transmissivity: f64, overlap: f64, signal_cutoff: usize) -> Result<Self> {
        let params = SchemeParams {
            eta,
            transmissivity,
            overlap,
            signal_cutoff,
            probe_cutoff: ProbeCutoff::Auto,
            tail_tol: default_tail_tol(),
            max_probe_cutoff: default_max_probe_cutoff(),
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_tail_tol(mut self, tail_tol: f64) -> Result<Self> {
        self.tail_tol = tail_tol;
        self.validate()?;
        Ok(self)
    }

    pub fn with_probe_cutoff(mut self, probe_cutoff: ProbeCutoff) -> Self {
        self.probe_cutoff = probe_cutoff;
        self
    }

    pub fn with_signal_cutoff(mut self, signal_cutoff: usize) -> Self {
        self.signal_cutoff = signal_cutoff;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::Config(format!("eta must lie in (0, 1], got {}", self.eta)));
        }
        if !(self.transmissivity > 0.0 && self.transmissivity <= 1.0) {
            return Err(Error::Config(format!(
                "transmissivity must lie in (0, 1], got {}",
                self.transmissivity
            )));
        }
        if !(0.0..=1.0).contains(&self.overlap) {
            return Err(Error::Config(format!(
                "overlap must lie in [0, 1], got {}",
                self.overlap
            )));
        }
        if !(self.tail_tol > 0.0 && self.tail_tol <= 1e-3) {
            return Err(Error::Config(format!(
                "tail_tol must lie in (0, 1e-3], got {}",
                self.tail_tol
            )));
        }
        Ok(())
    }
}

/// Diagonal of a signal density matrix in the Fock basis, `probs[m]` for `m = 0..=cutoff`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhotonDistribution {
    probs: Vec<f64>,
}

impl PhotonDistribution {
    /// Accepts a distribution that already sums to one within [`NORMALIZATION_TOL`].
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_entries(&probs)?;
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::Domain(format!(
                "photon distribution sums to {total}, expected 1"
            )));
        }
        Ok(PhotonDistribution { probs })
    }

    /// Rescales non-negative weights to unit sum.
    pub fn from_unnormalized(weights: Vec<f64>) -> Result<Self> {
        check_entries(&weights)?;
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::Domain("photon distribution has zero total weight".into()));
        }
        Ok(PhotonDistribution {
            probs: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    pub fn vacuum(cutoff: usize) -> Self {
        Self::fock(0, cutoff)
    }

    /// The number state `|n><n|` embedded in a space with the given cutoff.
    pub fn fock(n: usize, cutoff: usize) -> Self {
        let mut probs = vec![0.0; cutoff.max(n) + 1];
        probs[n] = 1.0;
        PhotonDistribution { probs }
    }

    /// Thermal distribution of the given mean, truncated at `cutoff` and renormalized.
    pub fn thermal(mean: f64, cutoff: usize) -> Result<Self> {
        Self::from_unnormalized(thermal_diagonal(mean, cutoff)?.probs)
    }

    /// Copy padded with zeros (or truncated and renormalized) to a new cutoff.
    pub fn resized(&self, cutoff: usize) -> Result<Self> {
        let mut probs = self.probs.clone();
        probs.resize(cutoff + 1, 0.0);
        Self::from_unnormalized(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn cutoff(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(m, p)| m as f64 * p).sum()
    }

    /// Total-variation distance; the shorter vector is padded with zeros.
    pub fn total_variation(&self, other: &[f64]) -> f64 {
        let len = self.probs.len().max(other.len());
        let get = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
        0.5 * (0..len).map(|i| (get(&self.probs, i) - get(other, i)).abs()).sum::<f64>()
    }

    /// Largest component-wise deviation; the shorter vector is padded with zeros.
    pub fn max_abs_error(&self, other: &[f64]) -> f64 {
        let len = self.probs.len().max(other.len());
        let get = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
        (0..len)
            .map(|i| (get(&self.probs, i) - get(other, i)).abs())
            .fold(0.0, f64::max)
    }
}

fn check_entries(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::Domain("photon distribution must have at least one entry".into()));
    }
    if let Some((m, p)) = probs.iter().enumerate().find(|(_, p)| !(p.is_finite() && **p >= 0.0)) {
        return Err(Error::Domain(format!(
            "photon distribution entry {m} is {p}, expected a finite non-negative value"
        )));
    }
    Ok(())
}

/// Diagonal of a thermal state, truncated but not renormalized.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalDiagonal {
    pub mean: f64,
    pub probs: Vec<f64>,
}

impl ThermalDiagonal {
    pub fn cutoff(&self) -> usize {
        self.probs.len() - 1
    }

    /// Probability mass above the cutoff, `(mean/(1+mean))^(cutoff+1)`.
    pub fn tail_mass(&self) -> f64 {
        thermal_tail(self.mean, self.cutoff())
    }
}

/// `sigma_n = mean^n / (1+mean)^(n+1)` for `n = 0..=cutoff`.
pub fn thermal_diagonal(mean: f64, cutoff: usize) -> Result<ThermalDiagonal> {
    if !(mean >= 0.0 && mean.is_finite()) {
        return Err(Error::Domain(format!(
            "thermal mean must be finite and non-negative, got {mean}"
        )));
    }
    let ratio = mean / (1.0 + mean);
    let mut probs = Vec::with_capacity(cutoff + 1);
    let mut current = 1.0 / (1.0 + mean);
    for _ in 0..=cutoff {
        probs.push(current);
        current *= ratio;
    }
    Ok(ThermalDiagonal { mean, probs })
}

pub(crate) fn thermal_tail(mean: f64, cutoff: usize) -> f64 {
    if mean == 0.0 {
        return 0.0;
    }
    let ratio = mean / (1.0 + mean);
    ((cutoff as f64 + 1.0) * ratio.ln()).exp()
}

/// Smallest cutoff `N` with `(mean/(1+mean))^(N+1) <= tail_tol`.
pub fn probe_cutoff_for(mean: f64, tail_tol: f64) -> Result<usize> {
    if !(mean >= 0.0 && mean.is_finite()) {
        return Err(Error::Domain(format!(
            "probe mean must be finite and non-negative, got {mean}"
        )));
    }
    if !(tail_tol > 0.0 && tail_tol < 1.0) {
        return Err(Error::Domain(format!("tail tolerance must lie in (0, 1), got {tail_tol}")));
    }
    if mean == 0.0 {
        return Ok(0);
    }
    let ratio = mean / (1.0 + mean);
    let estimate = (tail_tol.ln() / ratio.ln()).ceil() - 1.0;
    let mut cutoff = estimate.max(0.0) as usize;
    // the logarithmic estimate can be off by one in either direction
    while thermal_tail(mean, cutoff) > tail_tol {
        cutoff += 1;
    }
    while cutoff > 0 && thermal_tail(mean, cutoff - 1) <= tail_tol {
        cutoff -= 1;
    }
    Ok(cutoff)
}

/// Table of `ln(k!)`.
#[derive(Debug, Clone)]
pub struct LogFactorials(Vec<f64>);

impl LogFactorials {
    pub fn up_to(n: usize) -> Self {
        let mut table = Vec::with_capacity(n + 1);
        let mut acc = 0.0;
        table.push(0.0);
        for k in 1..=n {
            acc += (k as f64).ln();
            table.push(acc);
        }
        LogFactorials(table)
    }

    pub fn max(&self) -> usize {
        self.0.len() - 1
    }

    #[inline]
    pub fn get(&self, k: usize) -> f64 {
        self.0[k]
    }
}

/// Amplitude evaluator for the beam splitter with real `t = sqrt(T)`, `r = sqrt(1-T)`.
///
/// `amplitude(k, l, m, n)` follows the double sum over `g <= k`, `h <= l` with the
/// Kronecker constraints `m = l + g - h`, `n = k + h - g`. The printed
/// denominator factor `(h-l)!` is read as `(l-h)!`; only that reading yields a
/// unitary block on each fixed-total subspace. Given the constraints the double
/// sum collapses to at most `min(k, m) + 1` terms, each assembled in log
/// magnitude and sign.
#[derive(Debug, Clone)]
pub struct BsAmplitudes {
    transmissivity: f64,
    ln_t: f64,
    ln_r: f64,
    lf: LogFactorials,
}

impl BsAmplitudes {
    pub fn new(transmissivity: f64, max_total: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&transmissivity) {
            return Err(Error::Domain(format!(
                "transmissivity must lie in [0, 1], got {transmissivity}"
            )));
        }
        Ok(BsAmplitudes {
            transmissivity,
            ln_t: (0.5 * transmissivity.ln()),
            ln_r: (0.5 * (1.0 - transmissivity).ln()),
            lf: LogFactorials::up_to(max_total),
        })
    }

    pub fn transmissivity(&self) -> f64 {
        self.transmissivity
    }

    pub fn max_total(&self) -> usize {
        self.lf.max()
    }

    pub fn amplitude(&self, k: usize, l: usize, m: usize, n: usize) -> f64 {
        if k + l != m + n {
            return 0.0;
        }
        assert!(k + l <= self.lf.max(), "photon total exceeds factorial table");
        let lf = &self.lf;
        let prefactor = 0.5 * (lf.get(k) + lf.get(l) + lf.get(m) + lf.get(n));
        let g_lo = m.saturating_sub(l);
        let g_hi = k.min(m);
        let mut sum = 0.0;
        for g in g_lo..=g_hi {
            let h = l + g - m;
            let t_pow = g + h;
            let r_pow = k + l - g - h;
            let mut log_mag = prefactor - lf.get(g) - lf.get(h) - lf.get(k - g) - lf.get(l - h);
            if t_pow > 0 {
                if self.ln_t == f64::NEG_INFINITY {
                    continue;
                }
                log_mag += t_pow as f64 * self.ln_t;
            }
            if r_pow > 0 {
                if self.ln_r == f64::NEG_INFINITY {
                    continue;
                }
                log_mag += r_pow as f64 * self.ln_r;
            }
            let term = log_mag.exp();
            if (k - g) % 2 == 1 {
                sum -= term;
            } else {
                sum += term;
            }
        }
        sum
    }
}

/// Beam-splitter unitary in the Fock basis, stored as one block per total photon number.
///
/// Block `s` is `(s+1) x (s+1)` with entry `(m, k) = <m, s-m| U |k, s-k>`, i.e.
/// columns index the input pair `(k, l)` and rows the output pair `(m, n)`.
/// Elements that violate photon-number conservation are not stored and read as zero.
#[derive(Debug, Clone)]
pub struct BsUnitary {
    transmissivity: f64,
    cutoff: usize,
    blocks: Vec<DMatrix<f64>>,
}

impl BsUnitary {
    pub fn transmissivity(&self) -> f64 {
        self.transmissivity
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// Block for total photon number `total`.
    pub fn block(&self, total: usize) -> &DMatrix<f64> {
        &self.blocks[total]
    }

    /// `U[k][l][m][n]`, zero unless `k + l == m + n <= cutoff`.
    pub fn element(&self, k: usize, l: usize, m: usize, n: usize) -> f64 {
        let total = k + l;
        if total != m + n || total > self.cutoff {
            return 0.0;
        }
        self.blocks[total][(m, k)]
    }

    /// Largest entry of `U^T U - I` over all blocks.
    pub fn unitarity_defect(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| {
                let gram = b.transpose() * b;
                let n = gram.nrows();
                (gram - DMatrix::<f64>::identity(n, n)).amax()
            })
            .fold(0.0, f64::max)
    }
}

/// Beam-splitter unitary from the combinatorial Fock-basis formula.
pub fn bs_unitary(transmissivity: f64, cutoff: usize) -> Result<BsUnitary> {
    let amps = BsAmplitudes::new(transmissivity, cutoff)?;
    let blocks = (0..=cutoff)
        .map(|s| DMatrix::from_fn(s + 1, s + 1, |m, k| amps.amplitude(k, s - k, m, s - m)))
        .collect();
    Ok(BsUnitary {
        transmissivity,
        cutoff,
        blocks,
    })
}

/// Beam-splitter unitary by matrix exponentiation of the generator
/// `theta (a^dag b - a b^dag)`, `theta = arccos(sqrt(T))`, on each fixed-total block.
///
/// Shares no code with [`bs_unitary`]; it serves as an independent check of it.
pub fn bs_unitary_oracle(transmissivity: f64, cutoff: usize) -> Result<BsUnitary> {
    if !(0.0..=1.0).contains(&transmissivity) {
        return Err(Error::Domain(format!(
            "transmissivity must lie in [0, 1], got {transmissivity}"
        )));
    }
    let theta = transmissivity.sqrt().acos();
    let blocks = (0..=cutoff)
        .map(|s| {
            // basis index i <-> |i, s-i>
            let mut generator = DMatrix::<f64>::zeros(s + 1, s + 1);
            for i in 0..=s {
                let j = s - i;
                if j > 0 {
                    // a^dag b |i, j> = sqrt((i+1) j) |i+1, j-1>
                    generator[(i + 1, i)] += (((i + 1) * j) as f64).sqrt();
                }
                if i > 0 {
                    // a b^dag |i, j> = sqrt(i (j+1)) |i-1, j+1>
                    generator[(i - 1, i)] -= ((i * (j + 1)) as f64).sqrt();
                }
            }
            (generator * theta).exp()
        })
        .collect();
    Ok(BsUnitary {
        transmissivity,
        cutoff,
        blocks,
    })
}
