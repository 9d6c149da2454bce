//! Equivalent-circuit impedance models for hairclip MSW resonators.
//!
//! Two composite topologies are supported:
//!
//! * [`Topology::HygShortedLine`]: the transducer is a lossy transmission line
//!   terminated by the series chain of MSW branches, which in turn sits in
//!   series with the short. With no branches the input impedance is the bare
//!   shorted-line response `z_c·tanh(γℓ)`.
//! * [`Topology::RhygSeries`]: a series LCR (the self-resonant transducer) in
//!   series with the MSW branches.
//!
//! Every MSW branch is a parallel RLC. All values are SI base units.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::spectra::{ComplexSpectrum, FrequencyGrid, SpectrumKind, DEFAULT_Z_REF};
use crate::units::parse_eng;

/// Practical cap on the number of modelled MSW modes.
pub const MAX_BRANCHES: usize = 8;

/// Reference frequency of the skin-effect attenuation scaling (Hz).
pub const DEFAULT_F_REF: f64 = 10e9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CircuitError {
    #[error("{name} = {value} violates {rule}")]
    InvalidParameter {
        name: String,
        value: f64,
        rule: &'static str,
    },
    #[error("{0:?} topology requires {1}")]
    Topology(Topology, &'static str),
    #[error("at most {MAX_BRANCHES} MSW branches are supported, got {0}")]
    TooManyBranches(usize),
    #[error("expected {expected} parameters, got {found}")]
    ParamCount { expected: usize, found: usize },
}

fn check(name: &str, value: f64, ok: bool, rule: &'static str) -> Result<(), CircuitError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(CircuitError::InvalidParameter {
            name: name.to_string(),
            value,
            rule,
        })
    }
}

fn omega(f: f64) -> f64 {
    2.0 * PI * f
}

fn eng_f64<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Num {
        F(f64),
        S(String),
    }
    match Num::deserialize(d)? {
        Num::F(v) => Ok(v),
        Num::S(s) => parse_eng(&s).map_err(serde::de::Error::custom),
    }
}

fn default_f_ref() -> f64 {
    DEFAULT_F_REF
}

/// Parallel RLC branch modelling one MSW mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParallelRlc {
    #[serde(deserialize_with = "eng_f64")]
    pub r_m: f64,
    #[serde(deserialize_with = "eng_f64")]
    pub l_m: f64,
    #[serde(deserialize_with = "eng_f64")]
    pub c_m: f64,
}

impl ParallelRlc {
    pub fn new(r_m: f64, l_m: f64, c_m: f64) -> Result<Self, CircuitError> {
        let b = Self { r_m, l_m, c_m };
        b.validate()?;
        Ok(b)
    }

    /// Branch with resonance `f0`, peak impedance `r_m` and quality factor `q`.
    pub fn from_resonance(r_m: f64, f0: f64, q: f64) -> Result<Self, CircuitError> {
        let w = omega(f0);
        Self::new(r_m, r_m / (w * q), q / (w * r_m))
    }

    pub fn validate(&self) -> Result<(), CircuitError> {
        check("r_m", self.r_m, self.r_m > 0.0, "r_m > 0")?;
        check("l_m", self.l_m, self.l_m > 0.0, "l_m > 0")?;
        check("c_m", self.c_m, self.c_m > 0.0, "c_m > 0")
    }

    pub fn resonance_hz(&self) -> f64 {
        1.0 / (2.0 * PI * (self.l_m * self.c_m).sqrt())
    }

    pub fn quality_factor(&self) -> f64 {
        self.r_m * (self.c_m / self.l_m).sqrt()
    }

    /// Same branch moved to resonance `f0` by rescaling `l_m` at fixed `c_m`.
    pub fn retuned(&self, f0: f64) -> Self {
        Self {
            l_m: 1.0 / (omega(f0).powi(2) * self.c_m),
            ..*self
        }
    }

    pub fn impedance(&self, f: f64) -> Complex64 {
        z_parallel_rlc(self, f)
    }
}

/// Series LCR transducer of the resonantly coupled device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesLcr {
    #[serde(deserialize_with = "eng_f64")]
    pub r_0: f64,
    #[serde(deserialize_with = "eng_f64")]
    pub l_0: f64,
    #[serde(deserialize_with = "eng_f64")]
    pub c_0: f64,
}

impl SeriesLcr {
    pub fn new(r_0: f64, l_0: f64, c_0: f64) -> Result<Self, CircuitError> {
        let s = Self { r_0, l_0, c_0 };
        s.validate()?;
        Ok(s)
    }

    /// Series LCR with inductance `l_0` resonating at `f0`.
    pub fn from_resonance(r_0: f64, l_0: f64, f0: f64) -> Result<Self, CircuitError> {
        Self::new(r_0, l_0, 1.0 / (omega(f0).powi(2) * l_0))
    }

    pub fn validate(&self) -> Result<(), CircuitError> {
        check("r_0", self.r_0, self.r_0 >= 0.0, "r_0 >= 0")?;
        check("l_0", self.l_0, self.l_0 > 0.0, "l_0 > 0")?;
        check("c_0", self.c_0, self.c_0 > 0.0, "c_0 > 0")
    }

    pub fn resonance_hz(&self) -> f64 {
        1.0 / (2.0 * PI * (self.l_0 * self.c_0).sqrt())
    }

    pub fn impedance(&self, f: f64) -> Complex64 {
        z_series_lcr(self, f)
    }
}

/// Lossy transmission-line section.
///
/// The propagation term is `γℓ = alpha·sqrt(f/f_ref) + j·2πf·beta_delay`, so
/// `alpha` is the total line attenuation in nepers at `f_ref`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TLineSection {
    #[serde(deserialize_with = "eng_f64")]
    pub z_c: f64,
    #[serde(deserialize_with = "eng_f64")]
    pub alpha: f64,
    #[serde(deserialize_with = "eng_f64")]
    pub beta_delay: f64,
    #[serde(default = "default_f_ref", deserialize_with = "eng_f64")]
    pub f_ref: f64,
}

impl TLineSection {
    pub fn new(z_c: f64, alpha: f64, beta_delay: f64) -> Result<Self, CircuitError> {
        let t = Self {
            z_c,
            alpha,
            beta_delay,
            f_ref: DEFAULT_F_REF,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), CircuitError> {
        check("z_c", self.z_c, self.z_c > 0.0, "z_c > 0")?;
        check("alpha", self.alpha, self.alpha >= 0.0, "alpha >= 0")?;
        check("beta_delay", self.beta_delay, self.beta_delay > 0.0, "beta_delay > 0")?;
        check("f_ref", self.f_ref, self.f_ref > 0.0, "f_ref > 0")
    }

    pub fn gamma_length(&self, f: f64) -> Complex64 {
        Complex64::new(self.alpha * (f / self.f_ref).sqrt(), omega(f) * self.beta_delay)
    }

    /// Removes the line from an input impedance, recovering its termination.
    pub fn de_embed(&self, f: f64, z_in: Complex64) -> Complex64 {
        let t = tanh_guarded(self.gamma_length(f));
        self.z_c * (z_in - self.z_c * t) / (self.z_c - z_in * t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    /// Shorted transmission line terminated by the MSW branches.
    #[serde(alias = "hyg")]
    HygShortedLine,
    /// Series LCR plus MSW branches.
    #[serde(alias = "rhyg")]
    RhygSeries,
}

impl std::str::FromStr for Topology {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "hyg" | "hyg_shorted_line" => Ok(Self::HygShortedLine),
            "rhyg" | "rhyg_series" => Ok(Self::RhygSeries),
            other => Err(format!("unknown topology '{other}' (expected hyg or rhyg)")),
        }
    }
}

/// Composite resonator model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRepr", into = "ModelRepr")]
pub struct CircuitModel {
    topology: Topology,
    line: Option<TLineSection>,
    series: Option<SeriesLcr>,
    msw_branches: Vec<ParallelRlc>,
}

#[derive(Serialize, Deserialize)]
struct ModelRepr {
    topology: Topology,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    line: Option<TLineSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    series: Option<SeriesLcr>,
    #[serde(default)]
    msw_branches: Vec<ParallelRlc>,
}

impl TryFrom<ModelRepr> for CircuitModel {
    type Error = CircuitError;
    fn try_from(r: ModelRepr) -> Result<Self, Self::Error> {
        Self::new(r.topology, r.line, r.series, r.msw_branches)
    }
}

impl From<CircuitModel> for ModelRepr {
    fn from(m: CircuitModel) -> Self {
        Self {
            topology: m.topology,
            line: m.line,
            series: m.series,
            msw_branches: m.msw_branches,
        }
    }
}

impl CircuitModel {
    pub fn new(
        topology: Topology,
        line: Option<TLineSection>,
        series: Option<SeriesLcr>,
        msw_branches: Vec<ParallelRlc>,
    ) -> Result<Self, CircuitError> {
        match topology {
            Topology::HygShortedLine if line.is_none() || series.is_some() => {
                return Err(CircuitError::Topology(topology, "a line and no series LCR"));
            }
            Topology::RhygSeries if series.is_none() || line.is_some() => {
                return Err(CircuitError::Topology(topology, "a series LCR and no line"));
            }
            _ => {}
        }
        if msw_branches.len() > MAX_BRANCHES {
            return Err(CircuitError::TooManyBranches(msw_branches.len()));
        }
        if let Some(l) = &line {
            l.validate()?;
        }
        if let Some(s) = &series {
            s.validate()?;
        }
        for b in &msw_branches {
            b.validate()?;
        }
        Ok(Self {
            topology,
            line,
            series,
            msw_branches,
        })
    }

    pub fn hyg(line: TLineSection, branches: Vec<ParallelRlc>) -> Result<Self, CircuitError> {
        Self::new(Topology::HygShortedLine, Some(line), None, branches)
    }

    pub fn rhyg(series: SeriesLcr, branches: Vec<ParallelRlc>) -> Result<Self, CircuitError> {
        Self::new(Topology::RhygSeries, None, Some(series), branches)
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn line(&self) -> Option<&TLineSection> {
        self.line.as_ref()
    }

    pub fn series(&self) -> Option<&SeriesLcr> {
        self.series.as_ref()
    }

    pub fn branches(&self) -> &[ParallelRlc] {
        &self.msw_branches
    }

    /// The transducer alone (all MSW branches removed).
    pub fn baseline(&self) -> Self {
        Self {
            msw_branches: Vec::new(),
            ..self.clone()
        }
    }

    pub fn with_branches(&self, branches: Vec<ParallelRlc>) -> Result<Self, CircuitError> {
        Self::new(self.topology, self.line, self.series, branches)
    }

    pub fn impedance_at(&self, f: f64) -> Complex64 {
        let branch_sum: Complex64 = self.msw_branches.iter().map(|b| z_parallel_rlc(b, f)).sum();
        match self.topology {
            Topology::HygShortedLine => {
                let line = self.line.as_ref().expect("validated at construction");
                z_shorted_tline(line, f, branch_sum)
            }
            Topology::RhygSeries => {
                let series = self.series.as_ref().expect("validated at construction");
                z_series_lcr(series, f) + branch_sum
            }
        }
    }

    /// Removes the transducer from a measured input impedance, leaving the sum
    /// of the MSW branch impedances.
    pub fn de_embed(&self, f: f64, z_in: Complex64) -> Complex64 {
        match self.topology {
            Topology::HygShortedLine => self.line.as_ref().expect("validated").de_embed(f, z_in),
            Topology::RhygSeries => z_in - z_series_lcr(self.series.as_ref().expect("validated"), f),
        }
    }

    /// Names of the fit parameters, in [`Self::param_values`] order.
    pub fn param_names(&self) -> Vec<String> {
        let mut names: Vec<String> = match self.topology {
            Topology::HygShortedLine => ["line.z_c", "line.alpha", "line.beta_delay"]
                .map(String::from)
                .to_vec(),
            Topology::RhygSeries => ["series.r_0", "series.l_0", "series.c_0"]
                .map(String::from)
                .to_vec(),
        };
        for i in 0..self.msw_branches.len() {
            for p in ["r_m", "l_m", "c_m"] {
                names.push(format!("branch{i}.{p}"));
            }
        }
        names
    }

    pub fn param_values(&self) -> Vec<f64> {
        let mut v = match (&self.line, &self.series) {
            (Some(l), _) => vec![l.z_c, l.alpha, l.beta_delay],
            (_, Some(s)) => vec![s.r_0, s.l_0, s.c_0],
            _ => unreachable!("validated at construction"),
        };
        for b in &self.msw_branches {
            v.extend([b.r_m, b.l_m, b.c_m]);
        }
        v
    }

    /// Rebuilds the model from a parameter vector in [`Self::param_values`] order.
    pub fn with_param_values(&self, values: &[f64]) -> Result<Self, CircuitError> {
        let expected = 3 + 3 * self.msw_branches.len();
        if values.len() != expected {
            return Err(CircuitError::ParamCount {
                expected,
                found: values.len(),
            });
        }
        let (line, series) = match self.topology {
            Topology::HygShortedLine => {
                let f_ref = self.line.as_ref().map_or(DEFAULT_F_REF, |l| l.f_ref);
                let line = TLineSection {
                    z_c: values[0],
                    alpha: values[1],
                    beta_delay: values[2],
                    f_ref,
                };
                (Some(line), None)
            }
            Topology::RhygSeries => (None, Some(SeriesLcr::new(values[0], values[1], values[2])?)),
        };
        let branches = values[3..]
            .chunks_exact(3)
            .map(|c| ParallelRlc::new(c[0], c[1], c[2]))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(self.topology, line, series, branches)
    }
}

/// `tanh` that saturates to ±1 for large real arguments instead of overflowing.
pub fn tanh_guarded(x: Complex64) -> Complex64 {
    if x.re > 20.0 {
        Complex64::new(1.0, 0.0)
    } else if x.re < -20.0 {
        Complex64::new(-1.0, 0.0)
    } else {
        // addition form stays finite at the quarter-wave poles, where the
        // double-angle form divides 0 by 0
        let ta = x.re.tanh();
        let tb = x.im.tan();
        Complex64::new(ta, tb) / Complex64::new(1.0, ta * tb)
    }
}

/// `Z = 1 / (1/R + 1/(jωL) + jωC)`.
pub fn z_parallel_rlc(b: &ParallelRlc, f: f64) -> Complex64 {
    let w = omega(f);
    let admittance = Complex64::new(1.0 / b.r_m, w * b.c_m - 1.0 / (w * b.l_m));
    admittance.inv()
}

/// `Z = R + jωL + 1/(jωC)`.
pub fn z_series_lcr(s: &SeriesLcr, f: f64) -> Complex64 {
    let w = omega(f);
    Complex64::new(s.r_0, w * s.l_0 - 1.0 / (w * s.c_0))
}

/// Input impedance of a line section terminated in `load`.
pub fn z_shorted_tline(t: &TLineSection, f: f64, load: Complex64) -> Complex64 {
    let th = tanh_guarded(t.gamma_length(f));
    t.z_c * (load + t.z_c * th) / (t.z_c + load * th)
}

/// Evaluates the model on every grid point.
pub fn z_model(m: &CircuitModel, grid: &FrequencyGrid) -> ComplexSpectrum {
    let values = grid.points().iter().map(|&f| m.impedance_at(f)).collect();
    ComplexSpectrum::new(grid.clone(), values, SpectrumKind::Impedance, DEFAULT_Z_REF)
        .expect("grid and values have equal length")
}
