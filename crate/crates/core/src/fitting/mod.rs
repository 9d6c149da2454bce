//! Circuit-model fitting against measured impedance spectra.
//!
//! Fits run in log-parameter space with a central-difference Jacobian and a
//! deterministic multi-start. Residuals are complex errors weighted by
//! `1 / max(|Z_data|, w_floor)` so dips and peaks carry comparable weight.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuits::{CircuitError, CircuitModel};
use crate::spectra::{ComplexSpectrum, SpectrumError, SpectrumKind};

pub mod lm;
mod two_stage;

pub use lm::{LmOptions, Termination};
pub use two_stage::{guess_baseline, two_stage_fit, BiasFit, BranchSeed, TwoStageOptions, TwoStageResult};

/// Lower clamp on the residual weight denominator (ohms).
pub const DEFAULT_WEIGHT_FLOOR: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("data grid does not match the model grid")]
    GridMismatch,
    #[error("expected an impedance spectrum")]
    NotImpedance,
    #[error("no free parameters to fit")]
    NoFreeParameters,
    #[error("parameter specs do not match the model: {0}")]
    SpecMismatch(String),
    #[error("invalid parameter spec '{name}': {reason}")]
    InvalidSpec { name: String, reason: String },
    #[error("residual is not finite at the initial parameters")]
    NonFiniteStart,
    #[error("baseline fit did not converge ({termination:?}, weighted rms {weighted_rms:e})")]
    BaselineNotConverged {
        termination: Termination,
        weighted_rms: f64,
    },
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
}

/// Bounds and freeze flag for one model parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub initial: f64,
    pub lower: f64,
    pub upper: f64,
    #[serde(default)]
    pub frozen: bool,
}

impl ParamSpec {
    pub fn free(name: &str, initial: f64, lower: f64, upper: f64) -> Self {
        Self {
            name: name.to_string(),
            initial,
            lower,
            upper,
            frozen: false,
        }
    }

    pub fn fixed(name: &str, value: f64) -> Self {
        Self {
            name: name.to_string(),
            initial: value,
            lower: value,
            upper: value,
            frozen: true,
        }
    }

    pub fn validate(&self) -> Result<(), FitError> {
        let bad = |reason: &str| FitError::InvalidSpec {
            name: self.name.clone(),
            reason: reason.to_string(),
        };
        if !(self.lower <= self.initial && self.initial <= self.upper) {
            return Err(bad("requires lower <= initial <= upper"));
        }
        if !self.frozen && !(self.lower > 0.0 && self.upper.is_finite()) {
            return Err(bad("free parameters are fitted in log space and need 0 < lower, finite upper"));
        }
        Ok(())
    }
}

/// Specs centred on the model's current values, spanning `value / span ..
/// value · span`. Zero-valued parameters are frozen.
pub fn default_specs(model: &CircuitModel, span: f64) -> Vec<ParamSpec> {
    model
        .param_names()
        .iter()
        .zip(model.param_values())
        .map(|(name, v)| {
            if v > 0.0 {
                ParamSpec::free(name, v, v / span, v * span)
            } else {
                ParamSpec::fixed(name, v)
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub n_starts: usize,
    pub seed: u64,
    /// Multi-start jitter: starts are drawn within `×/ (1 + jitter)` of the initial values.
    pub jitter: f64,
    pub grad_tol: f64,
    pub step_tol: f64,
    pub max_iter: usize,
    pub fd_step: f64,
    pub weight_floor: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        let lm = LmOptions::default();
        Self {
            n_starts: 8,
            seed: 0,
            jitter: 0.5,
            grad_tol: lm.grad_tol,
            step_tol: lm.step_tol,
            max_iter: lm.max_iter,
            fd_step: lm.fd_step,
            weight_floor: DEFAULT_WEIGHT_FLOOR,
        }
    }
}

impl FitOptions {
    fn lm(&self) -> LmOptions {
        LmOptions {
            grad_tol: self.grad_tol,
            step_tol: self.step_tol,
            max_iter: self.max_iter,
            fd_step: self.fd_step,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedValue {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: CircuitModel,
    pub params: Vec<NamedValue>,
    /// RMS of the stacked unweighted real/imaginary residuals (ohms).
    pub residual_rms: f64,
    /// RMS of the stacked weighted residuals (dimensionless).
    pub weighted_rms: f64,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
    /// Multi-start index that produced this result.
    pub start_index: usize,
    #[serde(skip)]
    pub history: Vec<f64>,
}

impl FitResult {
    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|p| p.name == name).map(|p| p.value)
    }

    /// Result describing `model` as-is, without any optimization.
    pub fn evaluate(
        model: &CircuitModel,
        data: &ComplexSpectrum,
        weight_floor: f64,
        termination: Termination,
    ) -> Result<Self, FitError> {
        let weighted = weighted_residuals(model, data, weight_floor)?;
        Ok(Self {
            model: model.clone(),
            params: named(model),
            residual_rms: raw_rms(model, data),
            weighted_rms: rms(&weighted),
            iterations: 0,
            converged: termination.is_converged(),
            termination,
            start_index: 0,
            history: Vec::new(),
        })
    }
}

fn named(model: &CircuitModel) -> Vec<NamedValue> {
    model
        .param_names()
        .into_iter()
        .zip(model.param_values())
        .map(|(name, value)| NamedValue { name, value })
        .collect()
}

fn rms(r: &[f64]) -> f64 {
    (r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64).sqrt()
}

fn raw_rms(model: &CircuitModel, data: &ComplexSpectrum) -> f64 {
    let sum: f64 = data
        .iter()
        .map(|(f, z)| (model.impedance_at(f) - z).norm_sqr())
        .sum();
    (sum / (2 * data.len()) as f64).sqrt()
}

fn check_data(data: &ComplexSpectrum) -> Result<(), FitError> {
    if data.kind() != SpectrumKind::Impedance {
        return Err(FitError::NotImpedance);
    }
    Ok(())
}

/// Stacked `[Re(ΔZ)·w…, Im(ΔZ)·w…]` with `w = 1 / max(|Z_data|, floor)`.
pub fn weighted_residuals(
    model: &CircuitModel,
    data: &ComplexSpectrum,
    weight_floor: f64,
) -> Result<Vec<f64>, FitError> {
    check_data(data)?;
    let weights = weights(data, weight_floor);
    Ok(stacked(model, data, &weights))
}

/// [`weighted_residuals`] with the default 1 Ω weight floor.
pub fn residuals(model: &CircuitModel, data: &ComplexSpectrum) -> Result<Vec<f64>, FitError> {
    weighted_residuals(model, data, DEFAULT_WEIGHT_FLOOR)
}

fn weights(data: &ComplexSpectrum, floor: f64) -> Vec<f64> {
    data.values().iter().map(|z| 1.0 / z.norm().max(floor)).collect()
}

fn stacked(model: &CircuitModel, data: &ComplexSpectrum, weights: &[f64]) -> Vec<f64> {
    let n = data.len();
    let mut out = vec![0.0; 2 * n];
    for (i, ((f, z), w)) in data.iter().zip(weights).enumerate() {
        let d: Complex64 = (model.impedance_at(f) - z) * *w;
        out[i] = d.re;
        out[n + i] = d.im;
    }
    out
}

/// Fits the unfrozen parameters of `model0` to `data`.
pub fn fit(
    model0: &CircuitModel,
    specs: &[ParamSpec],
    data: &ComplexSpectrum,
    opts: &FitOptions,
) -> Result<FitResult, FitError> {
    check_data(data)?;
    let names = model0.param_names();
    if specs.len() != names.len() || specs.iter().zip(&names).any(|(s, n)| &s.name != n) {
        return Err(FitError::SpecMismatch(format!("expected parameters {names:?}")));
    }
    for s in specs {
        s.validate()?;
    }
    let free: Vec<usize> = specs
        .iter()
        .enumerate()
        .filter(|(_, s)| !s.frozen)
        .map(|(i, _)| i)
        .collect();
    if free.is_empty() {
        return Err(FitError::NoFreeParameters);
    }

    let base: Vec<f64> = specs.iter().map(|s| s.initial).collect();
    let weights = weights(data, opts.weight_floor);
    let build = |x: &[f64]| -> Option<CircuitModel> {
        let mut p = base.clone();
        for (k, &i) in free.iter().enumerate() {
            p[i] = x[k].exp();
        }
        model0.with_param_values(&p).ok()
    };
    let objective = |x: &[f64]| -> Option<Vec<f64>> {
        let r = stacked(&build(x)?, data, &weights);
        r.iter().all(|v| v.is_finite()).then_some(r)
    };

    let x0: Vec<f64> = free.iter().map(|&i| specs[i].initial.ln()).collect();
    let lower: Vec<f64> = free.iter().map(|&i| specs[i].lower.ln()).collect();
    let upper: Vec<f64> = free.iter().map(|&i| specs[i].upper.ln()).collect();
    if objective(&x0).is_none() {
        return Err(FitError::NonFiniteStart);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let spread = (1.0 + opts.jitter).ln();
    let starts: Vec<Vec<f64>> = (0..opts.n_starts.max(1))
        .map(|k| {
            if k == 0 {
                return x0.clone();
            }
            x0.iter()
                .zip(lower.iter().zip(&upper))
                .map(|(&x, (&lo, &hi))| (x + spread * rng.random_range(-1.0..=1.0)).clamp(lo, hi))
                .collect()
        })
        .collect();

    let lm_opts = opts.lm();
    let outcomes: Vec<lm::LmOutcome> = starts
        .par_iter()
        .map(|s| lm::minimize(objective, s, &lower, &upper, &lm_opts))
        .collect();

    let (start_index, best) = outcomes
        .into_iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| a.cost.total_cmp(&b.cost).then(ia.cmp(ib)))
        .expect("at least one start");

    let model = build(&best.x).ok_or(FitError::NonFiniteStart)?;
    let n = 2 * data.len();
    Ok(FitResult {
        params: named(&model),
        residual_rms: raw_rms(&model, data),
        weighted_rms: (best.cost / n as f64).sqrt(),
        iterations: best.iterations,
        converged: best.termination.is_converged(),
        termination: best.termination,
        start_index,
        history: best.history,
        model,
    })
}
