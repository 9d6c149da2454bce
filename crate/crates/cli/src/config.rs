//! Run configuration: a JSON document mirroring the command-line flags plus
//! the model, tuning and grid blocks used by `synth` and `anticross`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use msw_core::circuits::{CircuitModel, Topology};
use msw_core::extraction::DEFAULT_PROMINENCE;
use msw_core::fitting::{FitOptions, TwoStageOptions};
use msw_core::magnetics::{CoupledModes, TuningModel};
use msw_core::spectra::FrequencyGrid;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub start_hz: f64,
    pub stop_hz: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn build(&self) -> Result<FrequencyGrid> {
        Ok(FrequencyGrid::linspace(self.start_hz, self.stop_hz, self.points)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasGridSpec {
    pub start_t: f64,
    pub stop_t: f64,
    pub points: usize,
}

impl BiasGridSpec {
    pub fn build(&self) -> Result<Vec<f64>> {
        if self.points < 2 || !(self.stop_t > self.start_t) {
            bail!("bias_grid needs points >= 2 and stop_t > start_t");
        }
        let step = (self.stop_t - self.start_t) / (self.points - 1) as f64;
        Ok((0..self.points)
            .map(|i| self.start_t + step * i as f64)
            .collect())
    }
}

/// Coupled-mode description used to build a resonantly coupled model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoupledSpec {
    pub f_c_hz: f64,
    pub g_hz: f64,
    pub l_0: f64,
    pub r_0: f64,
    pub r_m: f64,
}

impl CoupledSpec {
    pub fn build(&self) -> Result<CircuitModel> {
        Ok(CoupledModes::new(self.f_c_hz, self.g_hz)?.to_circuit(self.l_0, self.r_0, self.r_m)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub zero_bias: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub topology: Option<Topology>,
    pub seed: u64,
    pub n_starts: usize,
    pub grad_tol: f64,
    pub step_tol: f64,
    pub max_iter: usize,
    pub prominence: f64,
    pub log_mag: bool,
    /// Number of MSW branches fitted per bias.
    pub n_branches: usize,
    pub model: Option<CircuitModel>,
    pub coupled: Option<CoupledSpec>,
    pub tuning: TuningModel,
    pub biases_t: Vec<f64>,
    pub grid: Option<GridSpec>,
    pub bias_grid: Option<BiasGridSpec>,
    /// `None` means noiseless.
    pub snr_db: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let fit = FitOptions::default();
        Self {
            input: None,
            zero_bias: None,
            manifest: None,
            out: None,
            topology: None,
            seed: fit.seed,
            n_starts: fit.n_starts,
            grad_tol: fit.grad_tol,
            step_tol: fit.step_tol,
            max_iter: fit.max_iter,
            prominence: DEFAULT_PROMINENCE,
            log_mag: false,
            n_branches: 1,
            model: None,
            coupled: None,
            tuning: TuningModel::default(),
            biases_t: Vec::new(),
            grid: None,
            bias_grid: None,
            snr_db: None,
        }
    }
}

impl RunConfig {
    /// Loads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.input, &mut cfg.zero_bias, &mut cfg.manifest, &mut cfg.out]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            n_starts: self.n_starts,
            seed: self.seed,
            grad_tol: self.grad_tol,
            step_tol: self.step_tol,
            max_iter: self.max_iter,
            ..FitOptions::default()
        }
    }

    pub fn two_stage_options(&self) -> TwoStageOptions {
        TwoStageOptions {
            fit: self.fit_options(),
            n_branches: self.n_branches,
            prominence: self.prominence,
            ..TwoStageOptions::default()
        }
    }

    pub fn out_dir(&self) -> Result<&Path> {
        self.out.as_deref().context("no output location: pass --out or set \"out\" in the config")
    }

    /// The model block, or one built from the coupled-mode block.
    pub fn circuit_model(&self) -> Result<CircuitModel> {
        match (&self.model, &self.coupled) {
            (Some(m), None) => Ok(m.clone()),
            (None, Some(c)) => c.build(),
            (Some(_), Some(_)) => bail!("config sets both \"model\" and \"coupled\""),
            (None, None) => bail!("config needs a \"model\" or \"coupled\" block"),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}
