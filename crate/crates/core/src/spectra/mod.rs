//! One-port frequency-domain data: grids, complex spectra, bias sweeps,
//! and the S11 <-> Z11 conversions.

use std::io::{Read, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod touchstone;

pub use touchstone::{parse_touchstone, write_touchstone, TouchstoneError, TouchstoneFormat};

/// Default reference impedance of the measurement system (ohms).
pub const DEFAULT_Z_REF: f64 = 50.0;

/// Default tolerance above |S| = 1 before a passivity warning is raised.
pub const DEFAULT_PASSIVITY_EPS: f64 = 0.02;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectrumError {
    #[error("frequency grid needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("frequency at index {index} is not positive and finite: {value}")]
    NonPositiveFrequency { index: usize, value: f64 },
    #[error("frequency grid is not strictly increasing at index {index}")]
    NotIncreasing { index: usize },
    #[error("value count {values} does not match grid length {grid}")]
    LengthMismatch { grid: usize, values: usize },
    #[error("reference impedance must be positive, got {0}")]
    BadReference(f64),
    #[error("expected a {expected:?} spectrum, got {found:?}")]
    WrongKind {
        expected: SpectrumKind,
        found: SpectrumKind,
    },
    #[error("singular conversion at {freq_hz} Hz")]
    Singular { freq_hz: f64 },
    #[error("bias sweep: {0}")]
    Sweep(String),
    #[error("csv: {0}")]
    Csv(String),
}

/// Strictly increasing, positive frequency points in Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FrequencyGrid {
    points: Vec<f64>,
}

impl FrequencyGrid {
    pub fn new(points: Vec<f64>) -> Result<Self, SpectrumError> {
        if points.len() < 2 {
            return Err(SpectrumError::TooFewPoints(points.len()));
        }
        for (index, &value) in points.iter().enumerate() {
            if !(value.is_finite() && value > 0.0) {
                return Err(SpectrumError::NonPositiveFrequency { index, value });
            }
        }
        if let Some(i) = points.windows(2).position(|w| w[1] <= w[0]) {
            return Err(SpectrumError::NotIncreasing { index: i + 1 });
        }
        Ok(Self { points })
    }

    /// `n` evenly spaced points from `start` to `stop` inclusive.
    pub fn linspace(start: f64, stop: f64, n: usize) -> Result<Self, SpectrumError> {
        if n < 2 {
            return Err(SpectrumError::TooFewPoints(n));
        }
        let step = (stop - start) / (n - 1) as f64;
        let mut points: Vec<f64> = (0..n).map(|i| start + step * i as f64).collect();
        points[n - 1] = stop;
        Self::new(points)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn start(&self) -> f64 {
        self.points[0]
    }

    pub fn stop(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// Local sample spacing around index `i`.
    pub fn step_at(&self, i: usize) -> f64 {
        let n = self.points.len();
        let lo = i.saturating_sub(1);
        let hi = (i + 1).min(n - 1);
        (self.points[hi] - self.points[lo]) / (hi - lo) as f64
    }

    pub fn contains(&self, f: f64) -> bool {
        f >= self.start() && f <= self.stop()
    }
}

impl TryFrom<Vec<f64>> for FrequencyGrid {
    type Error = SpectrumError;
    fn try_from(points: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(points)
    }
}

impl From<FrequencyGrid> for Vec<f64> {
    fn from(g: FrequencyGrid) -> Self {
        g.points
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumKind {
    /// S11, dimensionless.
    Reflection,
    /// Z11, ohms.
    Impedance,
}

/// Complex one-port data on a frequency grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpectrumRepr", into = "SpectrumRepr")]
pub struct ComplexSpectrum {
    grid: FrequencyGrid,
    values: Vec<Complex64>,
    kind: SpectrumKind,
    z_ref: f64,
    comments: Vec<String>,
}

impl ComplexSpectrum {
    pub fn new(
        grid: FrequencyGrid,
        values: Vec<Complex64>,
        kind: SpectrumKind,
        z_ref: f64,
    ) -> Result<Self, SpectrumError> {
        if values.len() != grid.len() {
            return Err(SpectrumError::LengthMismatch {
                grid: grid.len(),
                values: values.len(),
            });
        }
        if !(z_ref.is_finite() && z_ref > 0.0) {
            return Err(SpectrumError::BadReference(z_ref));
        }
        let spectrum = Self {
            grid,
            values,
            kind,
            z_ref,
            comments: Vec::new(),
        };
        spectrum.warn_if_active(DEFAULT_PASSIVITY_EPS);
        Ok(spectrum)
    }

    pub fn reflection(grid: FrequencyGrid, values: Vec<Complex64>) -> Result<Self, SpectrumError> {
        Self::new(grid, values, SpectrumKind::Reflection, DEFAULT_Z_REF)
    }

    pub fn impedance(grid: FrequencyGrid, values: Vec<Complex64>) -> Result<Self, SpectrumError> {
        Self::new(grid, values, SpectrumKind::Impedance, DEFAULT_Z_REF)
    }

    pub fn with_comments(mut self, comments: Vec<String>) -> Self {
        self.comments = comments;
        self
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn freqs(&self) -> &[f64] {
        self.grid.points()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn kind(&self) -> SpectrumKind {
        self.kind
    }

    pub fn z_ref(&self) -> f64 {
        self.z_ref
    }

    pub fn comments(&self) -> &[String] {
        &self.comments
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, Complex64)> + '_ {
        self.grid.points().iter().copied().zip(self.values.iter().copied())
    }

    /// Indices where a reflection spectrum exceeds |S| = 1 + eps.
    pub fn passivity_violations(&self, eps: f64) -> Vec<usize> {
        if self.kind != SpectrumKind::Reflection {
            return Vec::new();
        }
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.norm() > 1.0 + eps)
            .map(|(i, _)| i)
            .collect()
    }

    fn warn_if_active(&self, eps: f64) {
        let bad = self.passivity_violations(eps);
        if let Some(&first) = bad.first() {
            log::warn!(
                "{} points exceed |S11| = 1 + {eps} (first at {} Hz)",
                bad.len(),
                self.grid.points()[first]
            );
        }
    }

    fn require(&self, expected: SpectrumKind) -> Result<(), SpectrumError> {
        if self.kind != expected {
            return Err(SpectrumError::WrongKind {
                expected,
                found: self.kind,
            });
        }
        Ok(())
    }

    /// Writes `freq_Hz,re,im` rows with a mandatory header.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), SpectrumError> {
        let mut wtr = csv::Writer::from_writer(w);
        let csv_err = |e: csv::Error| SpectrumError::Csv(e.to_string());
        wtr.write_record(["freq_Hz", "re", "im"]).map_err(csv_err)?;
        for (f, v) in self.iter() {
            wtr.write_record([f.to_string(), v.re.to_string(), v.im.to_string()])
                .map_err(csv_err)?;
        }
        wtr.flush().map_err(|e| SpectrumError::Csv(e.to_string()))
    }

    /// Reads the `freq_Hz,re,im` layout produced by [`Self::write_csv`].
    pub fn read_csv<R: Read>(r: R, kind: SpectrumKind, z_ref: f64) -> Result<Self, SpectrumError> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut freqs = Vec::new();
        let mut values = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| SpectrumError::Csv(e.to_string()))?;
            let field = |k: usize| -> Result<f64, SpectrumError> {
                rec.get(k)
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .ok_or_else(|| SpectrumError::Csv(format!("bad field {k} on line {}", i + 2)))
            };
            freqs.push(field(0)?);
            values.push(Complex64::new(field(1)?, field(2)?));
        }
        Self::new(FrequencyGrid::new(freqs)?, values, kind, z_ref)
    }
}

#[derive(Serialize, Deserialize)]
struct SpectrumRepr {
    kind: SpectrumKind,
    z_ref: f64,
    freq_hz: Vec<f64>,
    re: Vec<f64>,
    im: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    comments: Vec<String>,
}

impl TryFrom<SpectrumRepr> for ComplexSpectrum {
    type Error = SpectrumError;
    fn try_from(r: SpectrumRepr) -> Result<Self, Self::Error> {
        if r.re.len() != r.im.len() {
            return Err(SpectrumError::LengthMismatch {
                grid: r.re.len(),
                values: r.im.len(),
            });
        }
        let values = r
            .re
            .iter()
            .zip(&r.im)
            .map(|(&re, &im)| Complex64::new(re, im))
            .collect();
        Ok(Self::new(FrequencyGrid::new(r.freq_hz)?, values, r.kind, r.z_ref)?
            .with_comments(r.comments))
    }
}

impl From<ComplexSpectrum> for SpectrumRepr {
    fn from(s: ComplexSpectrum) -> Self {
        Self {
            kind: s.kind,
            z_ref: s.z_ref,
            re: s.values.iter().map(|v| v.re).collect(),
            im: s.values.iter().map(|v| v.im).collect(),
            freq_hz: s.grid.points,
            comments: s.comments,
        }
    }
}

/// One spectrum taken at a static bias flux density (tesla).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasPoint {
    pub bias_t: f64,
    pub spectrum: ComplexSpectrum,
}

/// Spectra at distinct, ascending biases on a shared grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasSweep {
    entries: Vec<BiasPoint>,
}

impl BiasSweep {
    pub fn new(entries: Vec<BiasPoint>) -> Result<Self, SpectrumError> {
        if let Some(first) = entries.first() {
            for (i, e) in entries.iter().enumerate() {
                if !e.bias_t.is_finite() {
                    return Err(SpectrumError::Sweep(format!("bias {i} is not finite")));
                }
                if e.spectrum.grid() != first.spectrum.grid() {
                    return Err(SpectrumError::Sweep(format!(
                        "entry {i} does not share the sweep frequency grid"
                    )));
                }
            }
            if let Some(i) = entries.windows(2).position(|w| w[1].bias_t <= w[0].bias_t) {
                return Err(SpectrumError::Sweep(format!(
                    "biases must be distinct and ascending (entry {})",
                    i + 1
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[BiasPoint] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn grid(&self) -> Option<&FrequencyGrid> {
        self.entries.first().map(|e| e.spectrum.grid())
    }

    pub fn biases(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.bias_t).collect()
    }

    pub fn map_spectra<F>(&self, mut f: F) -> Result<Self, SpectrumError>
    where
        F: FnMut(&ComplexSpectrum) -> Result<ComplexSpectrum, SpectrumError>,
    {
        let entries = self
            .entries
            .iter()
            .map(|e| {
                Ok(BiasPoint {
                    bias_t: e.bias_t,
                    spectrum: f(&e.spectrum)?,
                })
            })
            .collect::<Result<Vec<_>, SpectrumError>>()?;
        Self::new(entries)
    }
}

/// Converts reflection to impedance: `Z = z_ref (1 + S) / (1 - S)`.
pub fn s_to_z(s: &ComplexSpectrum) -> Result<ComplexSpectrum, SpectrumError> {
    s.require(SpectrumKind::Reflection)?;
    let z_ref = s.z_ref;
    let values = s
        .iter()
        .map(|(f, v)| {
            let den = Complex64::new(1.0, 0.0) - v;
            if den.norm() < 1e-12 {
                return Err(SpectrumError::Singular { freq_hz: f });
            }
            Ok(z_ref * (1.0 + v) / den)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ComplexSpectrum {
        grid: s.grid.clone(),
        values,
        kind: SpectrumKind::Impedance,
        z_ref,
        comments: s.comments.clone(),
    })
}

/// Converts impedance to reflection: `S = (Z - z_ref) / (Z + z_ref)`.
pub fn z_to_s(z: &ComplexSpectrum) -> Result<ComplexSpectrum, SpectrumError> {
    z.require(SpectrumKind::Impedance)?;
    let z_ref = z.z_ref;
    let values = z
        .iter()
        .map(|(f, v)| {
            let den = v + z_ref;
            if den.norm() == 0.0 {
                return Err(SpectrumError::Singular { freq_hz: f });
            }
            Ok((v - z_ref) / den)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ComplexSpectrum {
        grid: z.grid.clone(),
        values,
        kind: SpectrumKind::Reflection,
        z_ref,
        comments: z.comments.clone(),
    })
}

/// Dissipated fraction `1 - |S11|^2` at each frequency.
///
/// Values outside `[0, 1]` are returned unchanged; a warning is logged when the
/// input is not passive.
pub fn tline_loss(s: &ComplexSpectrum) -> Result<Vec<(f64, f64)>, SpectrumError> {
    s.require(SpectrumKind::Reflection)?;
    s.warn_if_active(DEFAULT_PASSIVITY_EPS);
    Ok(s.iter().map(|(f, v)| (f, 1.0 - v.norm_sqr())).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn refl(vals: &[Complex64]) -> ComplexSpectrum {
        let grid = FrequencyGrid::linspace(1e9, 2e9, vals.len()).unwrap();
        ComplexSpectrum::reflection(grid, vals.to_vec()).unwrap()
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert_eq!(
            FrequencyGrid::new(vec![1.0]),
            Err(SpectrumError::TooFewPoints(1))
        );
        assert!(matches!(
            FrequencyGrid::new(vec![1.0, 0.0]),
            Err(SpectrumError::NonPositiveFrequency { index: 1, .. })
        ));
        assert_eq!(
            FrequencyGrid::new(vec![1.0, 2.0, 2.0]),
            Err(SpectrumError::NotIncreasing { index: 2 })
        );
    }

    #[test]
    fn spectrum_invariants() {
        let grid = FrequencyGrid::linspace(1e9, 2e9, 3).unwrap();
        assert!(matches!(
            ComplexSpectrum::reflection(grid.clone(), vec![c(0.0, 0.0)]),
            Err(SpectrumError::LengthMismatch { .. })
        ));
        assert!(matches!(
            ComplexSpectrum::new(grid, vec![c(0.0, 0.0); 3], SpectrumKind::Reflection, 0.0),
            Err(SpectrumError::BadReference(_))
        ));
    }

    #[test]
    fn active_data_is_a_warning_not_an_error() {
        let s = refl(&[c(1.1, 0.0), c(0.5, 0.0)]);
        assert_eq!(s.passivity_violations(DEFAULT_PASSIVITY_EPS), vec![0]);
        let loss = tline_loss(&s).unwrap();
        assert!(loss[0].1 < 0.0);
    }

    #[test]
    fn s_to_z_examples() {
        let z = s_to_z(&refl(&[c(0.0, 0.0), c(-1.0, 0.0), c(0.5, 0.0)])).unwrap();
        assert_eq!(z.kind(), SpectrumKind::Impedance);
        assert!((z.values()[0] - c(50.0, 0.0)).norm() < 1e-12);
        assert!(z.values()[1].norm() < 1e-12);
        assert!((z.values()[2] - c(150.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn s_to_z_singular_names_frequency() {
        let err = s_to_z(&refl(&[c(0.0, 0.0), c(1.0, 0.0)])).unwrap_err();
        assert_eq!(err, SpectrumError::Singular { freq_hz: 2e9 });
    }

    #[test]
    fn z_to_s_examples() {
        let grid = FrequencyGrid::linspace(1e9, 2e9, 3).unwrap();
        let z = ComplexSpectrum::impedance(grid, vec![c(50.0, 0.0), c(0.0, 0.0), c(150.0, 0.0)])
            .unwrap();
        let s = z_to_s(&z).unwrap();
        assert!(s.values()[0].norm() < 1e-15);
        assert!((s.values()[1] - c(-1.0, 0.0)).norm() < 1e-15);
        assert!((s.values()[2] - c(0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn z_to_s_singular() {
        let grid = FrequencyGrid::linspace(1e9, 2e9, 2).unwrap();
        let z = ComplexSpectrum::impedance(grid, vec![c(-50.0, 0.0), c(1.0, 0.0)]).unwrap();
        assert_eq!(z_to_s(&z).unwrap_err(), SpectrumError::Singular { freq_hz: 1e9 });
    }

    #[test]
    fn wrong_kind_rejected() {
        let s = refl(&[c(0.0, 0.0), c(0.1, 0.0)]);
        assert!(matches!(z_to_s(&s), Err(SpectrumError::WrongKind { .. })));
        let z = s_to_z(&s).unwrap();
        assert!(s_to_z(&z).is_err());
        assert!(tline_loss(&z).is_err());
    }

    #[test]
    fn tline_loss_examples() {
        let loss = tline_loss(&refl(&[c(0.0, 0.0), c(-1.0, 0.0), c(0.3, 0.4)])).unwrap();
        assert_eq!(loss[0].1, 1.0);
        assert_eq!(loss[1].1, 0.0);
        assert!((loss[2].1 - 0.75).abs() < 1e-15);
    }

    #[test]
    fn csv_round_trip() {
        let s = refl(&[c(0.1, -0.2), c(0.3, 0.4), c(-0.5, 1e-17)]);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("freq_Hz,re,im\n"));
        let back = ComplexSpectrum::read_csv(&buf[..], SpectrumKind::Reflection, 50.0).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn json_round_trip_validates() {
        let s = refl(&[c(0.1, -0.2), c(0.3, 0.4)]);
        let text = serde_json::to_string(&s).unwrap();
        let back: ComplexSpectrum = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
        let bad = text.replace("\"z_ref\":50.0", "\"z_ref\":-1.0");
        assert!(serde_json::from_str::<ComplexSpectrum>(&bad).is_err());
    }

    #[test]
    fn sweep_validation() {
        let a = refl(&[c(0.0, 0.0), c(0.1, 0.0)]);
        let other = ComplexSpectrum::reflection(
            FrequencyGrid::linspace(1e9, 3e9, 2).unwrap(),
            vec![c(0.0, 0.0); 2],
        )
        .unwrap();
        let p = |b: f64, s: &ComplexSpectrum| BiasPoint {
            bias_t: b,
            spectrum: s.clone(),
        };
        assert!(BiasSweep::new(vec![p(0.3, &a), p(0.4, &a)]).is_ok());
        assert!(BiasSweep::new(vec![p(0.4, &a), p(0.3, &a)]).is_err());
        assert!(BiasSweep::new(vec![p(0.3, &a), p(0.3, &a)]).is_err());
        assert!(BiasSweep::new(vec![p(0.3, &a), p(0.4, &other)]).is_err());
    }
}
