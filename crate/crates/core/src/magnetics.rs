//! Bias-field physics: the linear MSW tuning law, its calibration, photon-magnon
//! anti-crossing, and synthetic bias sweeps.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuits::{CircuitError, CircuitModel, ParallelRlc, SeriesLcr, Topology};
use crate::extraction::{find_extrema, ExtremumKind};
use crate::spectra::{
    z_to_s, BiasPoint, BiasSweep, ComplexSpectrum, FrequencyGrid, SpectrumError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MagneticsError {
    #[error("bias {bias_t} T is at or below the band offset {b_off} T")]
    BelowBand { bias_t: f64, b_off: f64 },
    #[error("need at least 2 calibration points, got {0}")]
    TooFewPoints(usize),
    #[error("calibration biases are all equal")]
    Degenerate,
    #[error("invalid tuning model: {0}")]
    InvalidTuning(String),
    #[error("invalid coupled-mode parameters: {0}")]
    InvalidCoupling(String),
    #[error("model needs at least one MSW branch")]
    NoBranch,
    #[error("operation requires the resonantly coupled (series LCR) topology")]
    NeedsSeriesTopology,
    #[error("no anti-crossing: fewer than two dip ridges at every bias")]
    NoAntiCrossing,
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
}

/// Linear MSW frequency-vs-bias law `f = gamma_eff · (b − b_off)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningModel {
    /// Hz per tesla.
    pub gamma_eff: f64,
    /// Tesla.
    pub b_off: f64,
}

impl Default for TuningModel {
    /// Calibration of the resonantly coupled devices (29.9 GHz/T, 193 mT).
    fn default() -> Self {
        Self {
            gamma_eff: 29.9e9,
            b_off: 0.193,
        }
    }
}

impl TuningModel {
    pub fn new(gamma_eff: f64, b_off: f64) -> Result<Self, MagneticsError> {
        if !(gamma_eff.is_finite() && gamma_eff > 0.0) {
            return Err(MagneticsError::InvalidTuning(format!("gamma_eff = {gamma_eff}")));
        }
        if !(b_off.is_finite() && b_off >= 0.0) {
            return Err(MagneticsError::InvalidTuning(format!("b_off = {b_off}")));
        }
        Ok(Self { gamma_eff, b_off })
    }

    /// Bias needed for an MSW resonance at `f` Hz.
    pub fn bias_for(&self, f: f64) -> f64 {
        self.b_off + f / self.gamma_eff
    }
}

pub fn msw_frequency(t: &TuningModel, b: f64) -> Result<f64, MagneticsError> {
    if !(b > t.b_off) {
        return Err(MagneticsError::BelowBand {
            bias_t: b,
            b_off: t.b_off,
        });
    }
    Ok(t.gamma_eff * (b - t.b_off))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub tuning: TuningModel,
    /// `(f_fit − f) / f` per input point.
    pub relative_residuals: Vec<f64>,
}

impl Calibration {
    pub fn max_abs_residual(&self) -> f64 {
        self.relative_residuals.iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

/// Ordinary least-squares fit of the tuning law to `(tesla, Hz)` pairs.
pub fn calibrate_tuning(pairs: &[(f64, f64)]) -> Result<Calibration, MagneticsError> {
    if pairs.len() < 2 {
        return Err(MagneticsError::TooFewPoints(pairs.len()));
    }
    let n = pairs.len() as f64;
    let mean_b = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_f = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let sbb: f64 = pairs.iter().map(|p| (p.0 - mean_b).powi(2)).sum();
    if sbb == 0.0 {
        return Err(MagneticsError::Degenerate);
    }
    let sbf: f64 = pairs.iter().map(|p| (p.0 - mean_b) * (p.1 - mean_f)).sum();
    let slope = sbf / sbb;
    let intercept = mean_f - slope * mean_b;
    let tuning = TuningModel::new(slope, -intercept / slope)?;
    let relative_residuals = pairs
        .iter()
        .map(|&(b, f)| (slope * b + intercept - f) / f)
        .collect();
    Ok(Calibration {
        tuning,
        relative_residuals,
    })
}

/// Photon (circuit) resonance `f_c` coupled to a magnon mode with rate `g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoupledModes {
    pub f_c: f64,
    pub g: f64,
}

impl CoupledModes {
    pub fn new(f_c: f64, g: f64) -> Result<Self, MagneticsError> {
        if !(f_c > 0.0 && f_c.is_finite()) || !(g >= 0.0 && g.is_finite()) {
            return Err(MagneticsError::InvalidCoupling(format!("f_c = {f_c}, g = {g}")));
        }
        Ok(Self { f_c, g })
    }

    /// Coupled modes of a series-LCR model and its first branch.
    ///
    /// Near resonance the series reactance is `2·L0·(ω − ω_c)` and the branch
    /// reactance `−1 / (2·Cm·(ω − ω_m))`, so the dips satisfy
    /// `(f − f_c)(f − f_m) = g²` with `g = 1 / (4π·sqrt(L0·Cm))`.
    pub fn from_circuit(model: &CircuitModel) -> Result<Self, MagneticsError> {
        let series = model.series().ok_or(MagneticsError::NeedsSeriesTopology)?;
        let branch = model.branches().first().ok_or(MagneticsError::NoBranch)?;
        Self::new(
            series.resonance_hz(),
            1.0 / (4.0 * PI * (series.l_0 * branch.c_m).sqrt()),
        )
    }

    /// Series-LCR model realizing these coupled modes.
    ///
    /// `l_0` and `r_0` set the transducer, `r_m` the branch loss; the branch
    /// starts at `f_c` and is retuned by [`heatmap`] and [`synth_sweep`].
    pub fn to_circuit(&self, l_0: f64, r_0: f64, r_m: f64) -> Result<CircuitModel, MagneticsError> {
        if self.g <= 0.0 {
            return Err(MagneticsError::InvalidCoupling("g must be > 0 to build a branch".into()));
        }
        let series = SeriesLcr::from_resonance(r_0, l_0, self.f_c)?;
        let c_m = 1.0 / (16.0 * PI * PI * self.g * self.g * l_0);
        let l_m = 1.0 / ((2.0 * PI * self.f_c).powi(2) * c_m);
        Ok(CircuitModel::rhyg(series, vec![ParallelRlc::new(r_m, l_m, c_m)?])?)
    }
}

/// Hybridized eigenfrequencies `(f₋, f₊)` for magnon frequency `f_m`.
pub fn anticross_eigenfreqs(c: &CoupledModes, f_m: f64) -> (f64, f64) {
    let mean = 0.5 * (c.f_c + f_m);
    let half = 0.5 * (c.f_c - f_m);
    let split = half.hypot(c.g);
    (mean - split, mean + split)
}

/// Moves the branches so the first resonates at `f`, keeping each branch's
/// frequency ratio to the first.
fn retune(model: &CircuitModel, f: f64) -> Result<CircuitModel, MagneticsError> {
    let first = model.branches().first().ok_or(MagneticsError::NoBranch)?;
    let scale = f / first.resonance_hz();
    let branches = model
        .branches()
        .iter()
        .map(|b| b.retuned(b.resonance_hz() * scale))
        .collect();
    Ok(model.with_branches(branches)?)
}

/// Model at bias `b`: branches tuned by the law, or removed below the band.
pub fn model_at_bias(
    model: &CircuitModel,
    tuning: &TuningModel,
    b: f64,
) -> Result<(CircuitModel, bool), MagneticsError> {
    match msw_frequency(tuning, b) {
        Ok(f) => Ok((retune(model, f)?, false)),
        Err(MagneticsError::BelowBand { .. }) => Ok((model.baseline(), true)),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct NoiseSpec {
    /// `None` means noiseless.
    pub snr_db: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthSweep {
    pub sweep: BiasSweep,
    /// Entries whose bias fell below the MSW band and carry no branch.
    pub branchless: Vec<bool>,
}

/// Generates a reflection sweep from a model and tuning law.
///
/// Noise is circularly symmetric complex Gaussian added to S11 with power
/// `mean(|S|²) / 10^(snr_db/10)`. Entry `k` draws from its own ChaCha stream,
/// so results do not depend on evaluation order.
pub fn synth_sweep(
    model: &CircuitModel,
    tuning: &TuningModel,
    biases: &[f64],
    grid: &FrequencyGrid,
    noise: NoiseSpec,
) -> Result<SynthSweep, MagneticsError> {
    if model.branches().is_empty() {
        return Err(MagneticsError::NoBranch);
    }
    let entries = biases
        .par_iter()
        .enumerate()
        .map(|(k, &b)| {
            let (m, below) = model_at_bias(model, tuning, b)?;
            let mut s = z_to_s(&crate::circuits::z_model(&m, grid))?;
            if let Some(snr_db) = noise.snr_db {
                s = add_noise(&s, snr_db, noise.seed, k as u64)?;
            }
            Ok((BiasPoint { bias_t: b, spectrum: s }, below))
        })
        .collect::<Result<Vec<_>, MagneticsError>>()?;
    let (points, branchless): (Vec<_>, Vec<_>) = entries.into_iter().unzip();
    Ok(SynthSweep {
        sweep: BiasSweep::new(points)?,
        branchless,
    })
}

/// Adds complex Gaussian noise to a spectrum at `snr_db` relative to its mean power.
pub fn add_noise(
    s: &ComplexSpectrum,
    snr_db: f64,
    seed: u64,
    stream: u64,
) -> Result<ComplexSpectrum, MagneticsError> {
    let power = s.values().iter().map(|v| v.norm_sqr()).sum::<f64>() / s.len() as f64;
    let sigma = (power / 10f64.powf(snr_db / 10.0) / 2.0).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let normal = Normal::new(0.0, sigma).map_err(|e| MagneticsError::InvalidCoupling(e.to_string()))?;
    let values = s
        .values()
        .iter()
        .map(|v| v + Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng)))
        .collect();
    Ok(ComplexSpectrum::new(s.grid().clone(), values, s.kind(), s.z_ref())?
        .with_comments(s.comments().to_vec()))
}

/// |Z| on a bias × frequency lattice, bias-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub biases_t: Vec<f64>,
    pub freqs_hz: Vec<f64>,
    /// Row `i` holds |Z| over `freqs_hz` at `biases_t[i]`.
    pub values: Vec<f64>,
}

impl Heatmap {
    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.freqs_hz.len();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.freqs_hz.len())
    }

    /// CSV with a header row of frequencies and a first column of biases.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bias_T");
        for f in &self.freqs_hz {
            out.push(',');
            out.push_str(&f.to_string());
        }
        out.push('\n');
        for (b, row) in self.biases_t.iter().zip(self.rows()) {
            out.push_str(&b.to_string());
            for v in row {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }
}

/// Evaluates |Z| of a resonantly coupled model while the branch follows the
/// tuning law across `biases`.
pub fn heatmap(
    model: &CircuitModel,
    tuning: &TuningModel,
    biases: &[f64],
    grid: &FrequencyGrid,
) -> Result<Heatmap, MagneticsError> {
    if model.topology() != Topology::RhygSeries {
        return Err(MagneticsError::NeedsSeriesTopology);
    }
    let rows = biases
        .par_iter()
        .map(|&b| {
            let m = if model.branches().is_empty() {
                model.clone()
            } else {
                model_at_bias(model, tuning, b)?.0
            };
            Ok(grid.points().iter().map(|&f| m.impedance_at(f).norm()).collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>, MagneticsError>>()?;
    Ok(Heatmap {
        biases_t: biases.to_vec(),
        freqs_hz: grid.points().to_vec(),
        values: rows.concat(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Splitting {
    /// Minimum separation of the two dip ridges (Hz), the 2g estimate.
    pub two_g: f64,
    pub bias_t: f64,
    pub f_lower: f64,
    pub f_upper: f64,
}

/// Minimum over bias of the separation between the two deepest |Z| dips.
pub fn extract_splitting(hm: &Heatmap) -> Result<Splitting, MagneticsError> {
    let grid = FrequencyGrid::new(hm.freqs_hz.clone())?;
    let per_row: Vec<Option<Splitting>> = hm
        .rows()
        .zip(&hm.biases_t)
        .map(|(row, &b)| {
            let values = row.iter().map(|&m| Complex64::new(m, 0.0)).collect();
            let z = ComplexSpectrum::impedance(grid.clone(), values).ok()?;
            let mut dips: Vec<_> = find_extrema(&z, 0.0)
                .into_iter()
                .filter(|e| e.kind == ExtremumKind::Minimum)
                .collect();
            if dips.len() < 2 {
                return None;
            }
            dips.sort_by(|a, b| a.magnitude.total_cmp(&b.magnitude).then(a.index.cmp(&b.index)));
            let (a, c) = (dips[0].freq_hz, dips[1].freq_hz);
            let (lo, hi) = if a < c { (a, c) } else { (c, a) };
            Some(Splitting {
                two_g: hi - lo,
                bias_t: b,
                f_lower: lo,
                f_upper: hi,
            })
        })
        .collect();
    per_row
        .into_iter()
        .flatten()
        .min_by(|a, b| a.two_g.total_cmp(&b.two_g))
        .ok_or(MagneticsError::NoAntiCrossing)
}
