//! Zero-bias baseline fit followed by per-bias MSW branch fits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{default_specs, fit, FitError, FitOptions, FitResult, ParamSpec, Termination};
use std::f64::consts::PI;

use crate::circuits::{CircuitModel, ParallelRlc, SeriesLcr, TLineSection, Topology};
use crate::extraction::{find_extrema, q_3db, ExtremumKind, DEFAULT_PROMINENCE};
use crate::spectra::{s_to_z, BiasSweep, ComplexSpectrum, SpectrumKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoStageOptions {
    pub fit: FitOptions,
    /// MSW branches added in stage 2.
    pub n_branches: usize,
    pub prominence: f64,
    /// Stage-1 bounds: initial value ×/ this factor.
    pub baseline_span: f64,
    /// Stage-2 bounds around the seeded branch values.
    pub branch_span: f64,
    /// Minimum fractional drop of the weighted RMS for a branch to be kept.
    pub min_improvement: f64,
    /// Q used when the half-power bandwidth of a seed peak cannot be measured.
    pub fallback_q: f64,
}

impl Default for TwoStageOptions {
    fn default() -> Self {
        Self {
            fit: FitOptions::default(),
            n_branches: 1,
            prominence: DEFAULT_PROMINENCE,
            baseline_span: 1e3,
            branch_span: 1e2,
            min_improvement: 0.1,
            fallback_q: 100.0,
        }
    }
}

/// Initial branch estimate taken from the de-embedded spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchSeed {
    pub f0: f64,
    pub q: f64,
    pub r_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasFit {
    pub bias_t: f64,
    pub result: FitResult,
    /// No MSW resonance was found; `result` is the branchless baseline.
    pub no_resonance: bool,
    pub seeds: Vec<BranchSeed>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStageResult {
    pub baseline: FitResult,
    pub per_bias: Vec<BiasFit>,
}

fn as_impedance(s: &ComplexSpectrum) -> Result<ComplexSpectrum, FitError> {
    match s.kind() {
        SpectrumKind::Impedance => Ok(s.clone()),
        SpectrumKind::Reflection => Ok(s_to_z(s)?),
    }
}

/// Strips the fitted transducer from `z`, leaving the MSW branch sum.
fn de_embedded(baseline: &CircuitModel, z: &ComplexSpectrum) -> ComplexSpectrum {
    let values = z.iter().map(|(f, v)| baseline.de_embed(f, v)).collect();
    ComplexSpectrum::new(z.grid().clone(), values, SpectrumKind::Impedance, z.z_ref())
        .expect("same grid")
}

fn seed_branches(
    baseline: &CircuitModel,
    z: &ComplexSpectrum,
    opts: &TwoStageOptions,
) -> Vec<BranchSeed> {
    let load = de_embedded(baseline, z);
    let scale = (z.values().iter().map(|v| v.norm_sqr()).sum::<f64>() / z.len() as f64).sqrt();
    let mut peaks: Vec<_> = find_extrema(&load, opts.prominence)
        .into_iter()
        .filter(|e| e.kind == ExtremumKind::Maximum && e.magnitude > 1e-9 * scale)
        .collect();
    peaks.sort_by(|a, b| b.magnitude.total_cmp(&a.magnitude).then(a.index.cmp(&b.index)));
    peaks
        .into_iter()
        .take(opts.n_branches)
        .map(|e| BranchSeed {
            f0: e.freq_hz,
            q: q_3db(&load, e.freq_hz)
                .ok()
                .filter(|q| q.is_finite() && *q > 0.0)
                .unwrap_or(opts.fallback_q),
            r_m: e.magnitude,
        })
        .collect()
}

fn fit_bias(
    baseline: &FitResult,
    bias_t: f64,
    z: &ComplexSpectrum,
    opts: &TwoStageOptions,
) -> Result<BiasFit, FitError> {
    let base_model = &baseline.model;
    let floor = opts.fit.weight_floor;
    let no_resonance = |seeds| -> Result<BiasFit, FitError> {
        Ok(BiasFit {
            bias_t,
            result: FitResult::evaluate(base_model, z, floor, Termination::NoResonance)?,
            no_resonance: true,
            seeds,
        })
    };

    let seeds = seed_branches(base_model, z, opts);
    let branches: Vec<ParallelRlc> = seeds
        .iter()
        .filter_map(|s| ParallelRlc::from_resonance(s.r_m, s.f0, s.q).ok())
        .collect();
    if branches.is_empty() {
        return no_resonance(seeds);
    }
    let model0 = base_model.with_branches(branches)?;
    let n_base = base_model.param_values().len();
    let specs: Vec<ParamSpec> = default_specs(&model0, opts.branch_span)
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            if i < n_base {
                ParamSpec::fixed(&s.name, s.initial)
            } else {
                s
            }
        })
        .collect();
    let result = fit(&model0, &specs, z, &opts.fit)?;

    let before = FitResult::evaluate(base_model, z, floor, Termination::NoResonance)?;
    if result.weighted_rms > (1.0 - opts.min_improvement) * before.weighted_rms {
        return no_resonance(seeds);
    }
    Ok(BiasFit {
        bias_t,
        result,
        no_resonance: false,
        seeds,
    })
}

/// Rough branchless starting model read off zero-bias impedance data.
///
/// Series LCR: resonance and resistance from the |Z| minimum, inductance from
/// the reactance slope there (`dX/dω = 2L` at resonance). Shorted line:
/// 50 Ω line whose delay and loss reproduce the reactance and resistance at
/// the lowest frequency.
pub fn guess_baseline(topology: Topology, z: &ComplexSpectrum) -> Result<CircuitModel, FitError> {
    let z = as_impedance(z)?;
    let f = z.freqs();
    let v = z.values();
    let n = f.len();
    match topology {
        Topology::RhygSeries => {
            let mag = z.magnitudes();
            let i = (0..n).min_by(|&a, &b| mag[a].total_cmp(&mag[b])).unwrap_or(0);
            let (lo, hi) = (i.saturating_sub(1), (i + 1).min(n - 1));
            let slope = if hi > lo {
                (v[hi].im - v[lo].im) / (2.0 * PI * (f[hi] - f[lo]))
            } else {
                0.0
            };
            let l_0 = if slope.is_finite() && slope > 0.0 { slope / 2.0 } else { 1e-9 };
            let r_0 = mag[i].max(1e-3);
            Ok(CircuitModel::rhyg(SeriesLcr::from_resonance(r_0, l_0, f[i])?, vec![])?)
        }
        Topology::HygShortedLine => {
            let z_c = 50.0;
            let w = 2.0 * PI * f[0];
            let x = v[0].im;
            let delay = if x > 0.0 { (x / z_c).atan() / w } else { 1e-12 };
            let probe = TLineSection::new(z_c, 0.0, delay)?;
            let alpha = (v[0].re / z_c / (f[0] / probe.f_ref).sqrt()).max(1e-4);
            Ok(CircuitModel::hyg(TLineSection::new(z_c, alpha, delay)?, vec![])?)
        }
    }
}

/// Fits the branchless transducer to zero-bias data, freezes it, then fits
/// MSW branches independently at every bias point.
///
/// `baseline_init` supplies the topology and starting transducer values; any
/// branches it carries are ignored. Reflection inputs are converted to
/// impedance first.
pub fn two_stage_fit(
    zero_bias: &ComplexSpectrum,
    biased: &BiasSweep,
    baseline_init: &CircuitModel,
    opts: &TwoStageOptions,
) -> Result<TwoStageResult, FitError> {
    let z0 = as_impedance(zero_bias)?;
    if biased.grid().is_some_and(|g| g != z0.grid()) {
        return Err(FitError::GridMismatch);
    }

    let init = baseline_init.baseline();
    let baseline = fit(&init, &default_specs(&init, opts.baseline_span), &z0, &opts.fit)?;
    if !baseline.converged {
        return Err(FitError::BaselineNotConverged {
            termination: baseline.termination,
            weighted_rms: baseline.weighted_rms,
        });
    }

    let per_bias = biased
        .entries()
        .par_iter()
        .map(|e| fit_bias(&baseline, e.bias_t, &as_impedance(&e.spectrum)?, opts))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TwoStageResult { baseline, per_bias })
}
