//! Resonance location and figure-of-merit extraction from impedance spectra.
//!
//! The impedance magnitude |Z| is the amplitude measure throughout: peaks of
//! |Z| are parallel (MSW) resonances, dips are series resonances.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectra::{ComplexSpectrum, SpectrumKind};

/// Minimum relative prominence of an accepted extremum.
pub const DEFAULT_PROMINENCE: f64 = 0.05;

/// Fraction of a full tangent turn that counts as a closed Q-circle loop.
pub const LOOP_THRESHOLD: f64 = 0.75;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExtractionError {
    #[error("expected a {expected:?} spectrum, got {found:?}")]
    WrongKind {
        expected: SpectrumKind,
        found: SpectrumKind,
    },
    #[error("need at least {needed} grid points, got {found}")]
    TooFewPoints { needed: usize, found: usize },
    #[error("peak frequency {0} Hz lies outside the measured grid")]
    OutsideGrid(f64),
    #[error("half-power level not reached on the {0} side of the peak within the grid")]
    OneSidedBandwidth(Side),
    #[error("frequency ratio {0} is outside (0, 1)")]
    InvalidRatio(f64),
    #[error("degenerate resonance: {0}")]
    Degenerate(String),
    #[error("invalid metrics: {0}")]
    InvalidMetrics(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Lower,
    Upper,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::Lower => "lower",
            Side::Upper => "upper",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtremumKind {
    Maximum,
    Minimum,
}

/// A local extremum of |Z| after quadratic refinement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub kind: ExtremumKind,
    /// Sample index of the extremum (first sample of a plateau).
    pub index: usize,
    pub freq_hz: f64,
    /// Interpolated |Z| at `freq_hz`.
    pub magnitude: f64,
    /// Sampled complex value at `index`.
    pub z: Complex64,
    /// Prominence relative to the log-magnitude range of the spectrum.
    pub prominence: f64,
}

/// Series (|Z| minimum) and parallel (|Z| maximum) resonance pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonancePair {
    pub f_s: f64,
    pub f_p: f64,
    pub z_at_fs: Complex64,
    pub z_at_fp: Complex64,
}

impl ResonancePair {
    pub fn new(f_s: f64, f_p: f64) -> Result<Self, ExtractionError> {
        let zero = Complex64::new(0.0, 0.0);
        let pair = Self {
            f_s,
            f_p,
            z_at_fs: zero,
            z_at_fp: zero,
        };
        pair.validate()?;
        Ok(pair)
    }

    fn validate(&self) -> Result<(), ExtractionError> {
        if !(self.f_s > 0.0 && self.f_p > 0.0) || self.f_s == self.f_p {
            return Err(ExtractionError::Degenerate(format!(
                "f_s = {}, f_p = {}",
                self.f_s, self.f_p
            )));
        }
        Ok(())
    }
}

/// MSW peak between two series anti-resonances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonantTriple {
    pub f_s1: f64,
    pub f_m: f64,
    pub f_s2: f64,
}

impl ResonantTriple {
    pub fn new(f_s1: f64, f_m: f64, f_s2: f64) -> Result<Self, ExtractionError> {
        if !(f_s1 > 0.0 && f_s1 < f_m && f_m < f_s2) {
            return Err(ExtractionError::Degenerate(format!(
                "need 0 < f_s1 < f_m < f_s2, got {f_s1}, {f_m}, {f_s2}"
            )));
        }
        Ok(Self { f_s1, f_m, f_s2 })
    }

    /// The anti-resonance paired with `f_m` for the coupling ratio: the one
    /// closest in ratio, giving the larger sub-unity ratio.
    pub fn closest_anti_resonance(&self) -> f64 {
        if self.f_s1 / self.f_m >= self.f_m / self.f_s2 {
            self.f_s1
        } else {
            self.f_s2
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Resonance {
    /// Isolated |Z| maximum with no adjacent dip.
    Peak(Extremum),
    /// Isolated |Z| minimum with no adjacent peak.
    Dip(Extremum),
    Pair(ResonancePair),
    Triple(ResonantTriple),
}

impl Resonance {
    /// Frequency of the |Z| maximum, when there is one.
    pub fn peak_hz(&self) -> Option<f64> {
        match self {
            Resonance::Peak(e) => Some(e.freq_hz),
            Resonance::Pair(p) => Some(p.f_p),
            Resonance::Triple(t) => Some(t.f_m),
            Resonance::Dip(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonanceMetrics {
    pub frequency: f64,
    pub q: f64,
    pub kt2: f64,
    pub fom: f64,
}

impl ResonanceMetrics {
    pub fn new(frequency: f64, q: f64, kt2: f64) -> Result<Self, ExtractionError> {
        if !(q > 0.0 && q.is_finite()) {
            return Err(ExtractionError::InvalidMetrics(format!("q = {q}")));
        }
        if !(0.0..1.0).contains(&kt2) {
            return Err(ExtractionError::InvalidMetrics(format!("kt2 = {kt2}")));
        }
        Ok(Self {
            frequency,
            q,
            kt2,
            fom: fom(q, kt2),
        })
    }
}

fn require(z: &ComplexSpectrum, expected: SpectrumKind) -> Result<(), ExtractionError> {
    if z.kind() != expected {
        return Err(ExtractionError::WrongKind {
            expected,
            found: z.kind(),
        });
    }
    Ok(())
}

/// Vertex of the parabola through three points, clamped to `[x0, x2]`.
fn parabola_vertex(x: [f64; 3], y: [f64; 3]) -> (f64, f64) {
    let (x0, x1, x2) = (x[0] - x[1], 0.0, x[2] - x[1]);
    let d0 = (y[0] - y[1]) / (x0 - x1);
    let d2 = (y[2] - y[1]) / (x2 - x1);
    let a = (d2 - d0) / (x2 - x0);
    if a == 0.0 || !a.is_finite() {
        return (x[1], y[1]);
    }
    let b = d0 - a * x0;
    let xv = (-b / (2.0 * a)).clamp(x0, x2);
    (x[1] + xv, y[1] + b * xv + a * xv * xv)
}

/// Topographic prominence of the maximum plateau `v[start..=end]`.
fn prominence(v: &[f64], start: usize, end: usize) -> f64 {
    let peak = v[start];
    let mut left_min = peak;
    for &x in v[..start].iter().rev() {
        if x > peak {
            break;
        }
        left_min = left_min.min(x);
    }
    let mut right_min = peak;
    for &x in &v[end + 1..] {
        if x > peak {
            break;
        }
        right_min = right_min.min(x);
    }
    peak - left_min.max(right_min)
}

/// Local extrema of |Z| whose relative prominence exceeds `threshold`.
///
/// Prominence is measured on ln|Z| and divided by the ln|Z| range of the whole
/// spectrum. Plateaus report their lowest-frequency sample.
pub fn find_extrema(z: &ComplexSpectrum, threshold: f64) -> Vec<Extremum> {
    let f = z.freqs();
    let mag = z.magnitudes();
    let log: Vec<f64> = mag.iter().map(|m| m.max(1e-300).ln()).collect();
    let (lo, hi) = log
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let range = hi - lo;
    if !(range > 0.0) {
        return Vec::new();
    }
    let neg: Vec<f64> = log.iter().map(|x| -x).collect();

    let mut out = Vec::new();
    let n = mag.len();
    let mut i = 1;
    while i + 1 < n {
        // extend over a plateau of equal magnitudes
        let mut j = i;
        while j + 1 < n && mag[j + 1] == mag[i] {
            j += 1;
        }
        if j + 1 >= n {
            break;
        }
        let kind = if mag[i - 1] < mag[i] && mag[j + 1] < mag[i] {
            Some(ExtremumKind::Maximum)
        } else if mag[i - 1] > mag[i] && mag[j + 1] > mag[i] {
            Some(ExtremumKind::Minimum)
        } else {
            None
        };
        if let Some(kind) = kind {
            let series = match kind {
                ExtremumKind::Maximum => &log,
                ExtremumKind::Minimum => &neg,
            };
            let p = prominence(series, i, j) / range;
            if p > threshold {
                let (freq_hz, magnitude) = if i == j {
                    parabola_vertex([f[i - 1], f[i], f[i + 1]], [mag[i - 1], mag[i], mag[i + 1]])
                } else {
                    (f[i], mag[i])
                };
                out.push(Extremum {
                    kind,
                    index: i,
                    freq_hz,
                    magnitude,
                    z: z.values()[i],
                    prominence: p,
                });
            }
        }
        i = j + 1;
    }
    out
}

/// Finds resonances and groups them by adjacency into peaks, dips, pairs
/// and triples, in ascending frequency order.
pub fn find_resonances(
    z: &ComplexSpectrum,
    prominence: f64,
) -> Result<Vec<Resonance>, ExtractionError> {
    require(z, SpectrumKind::Impedance)?;
    if z.len() < 5 {
        return Err(ExtractionError::TooFewPoints {
            needed: 5,
            found: z.len(),
        });
    }
    let ext = find_extrema(z, prominence);
    let is_min = |k: usize| ext.get(k).is_some_and(|e| e.kind == ExtremumKind::Minimum);
    let mut used_min = vec![false; ext.len()];
    let mut out = Vec::new();
    for (k, e) in ext.iter().enumerate() {
        if e.kind != ExtremumKind::Maximum {
            continue;
        }
        let prev = (k > 0 && is_min(k - 1)).then(|| k - 1);
        let next = is_min(k + 1).then_some(k + 1);
        let pair = |m: &Extremum| ResonancePair {
            f_s: m.freq_hz,
            f_p: e.freq_hz,
            z_at_fs: m.z,
            z_at_fp: e.z,
        };
        match (prev, next) {
            (Some(a), Some(b)) => {
                used_min[a] = true;
                used_min[b] = true;
                out.push(Resonance::Triple(ResonantTriple {
                    f_s1: ext[a].freq_hz,
                    f_m: e.freq_hz,
                    f_s2: ext[b].freq_hz,
                }));
            }
            (Some(a), None) | (None, Some(a)) => {
                used_min[a] = true;
                out.push(Resonance::Pair(pair(&ext[a])));
            }
            (None, None) => out.push(Resonance::Peak(*e)),
        }
    }
    for (k, e) in ext.iter().enumerate() {
        if e.kind == ExtremumKind::Minimum && !used_min[k] {
            out.push(Resonance::Dip(*e));
        }
    }
    out.sort_by(|a, b| first_freq(a).total_cmp(&first_freq(b)));
    Ok(out)
}

fn first_freq(r: &Resonance) -> f64 {
    match r {
        Resonance::Peak(e) | Resonance::Dip(e) => e.freq_hz,
        Resonance::Pair(p) => p.f_s.min(p.f_p),
        Resonance::Triple(t) => t.f_s1,
    }
}

/// Quality factor from the half-power (|Z|/√2) bandwidth of the peak nearest
/// `peak_hz`.
pub fn q_3db(z: &ComplexSpectrum, peak_hz: f64) -> Result<f64, ExtractionError> {
    require(z, SpectrumKind::Impedance)?;
    let f = z.freqs();
    if !z.grid().contains(peak_hz) {
        return Err(ExtractionError::OutsideGrid(peak_hz));
    }
    let mag = z.magnitudes();
    let n = mag.len();
    let mut i = f.partition_point(|&x| x < peak_hz).min(n - 1);
    if i > 0 && (peak_hz - f[i - 1]) < (f[i] - peak_hz) {
        i -= 1;
    }
    // climb to the sampled maximum
    loop {
        if i + 1 < n && mag[i + 1] > mag[i] {
            i += 1;
        } else if i > 0 && mag[i - 1] > mag[i] {
            i -= 1;
        } else {
            break;
        }
    }
    let (f_peak, m_peak) = if i > 0 && i + 1 < n {
        parabola_vertex([f[i - 1], f[i], f[i + 1]], [mag[i - 1], mag[i], mag[i + 1]])
    } else {
        (f[i], mag[i])
    };
    let level = m_peak / 2f64.sqrt();
    let cross = |a: usize, b: usize| f[a] + (level - mag[a]) * (f[b] - f[a]) / (mag[b] - mag[a]);

    let mut lo = i;
    while lo > 0 && mag[lo] >= level {
        lo -= 1;
    }
    if mag[lo] >= level {
        return Err(ExtractionError::OneSidedBandwidth(Side::Lower));
    }
    let mut hi = i;
    while hi + 1 < n && mag[hi] >= level {
        hi += 1;
    }
    if mag[hi] >= level {
        return Err(ExtractionError::OneSidedBandwidth(Side::Upper));
    }
    let f_lo = cross(lo, lo + 1);
    let f_hi = cross(hi - 1, hi);
    Ok(f_peak / (f_hi - f_lo))
}

/// `kt² = (π/2)·r·cot((π/2)·r)` for a sub-unity frequency ratio `r`.
pub fn coupling_from_ratio(r: f64) -> Result<f64, ExtractionError> {
    if !(r > 0.0 && r < 1.0) {
        return Err(ExtractionError::InvalidRatio(r));
    }
    let x = FRAC_PI_2 * r;
    Ok(x / x.tan())
}

/// Effective coupling of a series/parallel resonance pair, using the
/// sub-unity orientation of the frequency ratio.
pub fn coupling(pair: &ResonancePair) -> Result<f64, ExtractionError> {
    pair.validate()?;
    let r = pair.f_s.min(pair.f_p) / pair.f_s.max(pair.f_p);
    coupling_from_ratio(r)
}

/// Effective coupling of a resonantly coupled device from the anti-resonance
/// nearest to the MSW peak.
pub fn coupling_resonant(triple: &ResonantTriple) -> Result<f64, ExtractionError> {
    let t = ResonantTriple::new(triple.f_s1, triple.f_m, triple.f_s2)?;
    coupling_from_ratio((t.f_s1 / t.f_m).max(t.f_m / t.f_s2))
}

/// Figure of merit `kt²·Q`.
pub fn fom(q: f64, kt2: f64) -> f64 {
    q * kt2
}

/// Computes Q, kt² and FOM for a pair or triple found in `z`.
///
/// Returns `Ok(None)` for isolated peaks and dips, which carry no coupling.
pub fn metrics(
    z: &ComplexSpectrum,
    resonance: &Resonance,
) -> Result<Option<ResonanceMetrics>, ExtractionError> {
    let (f_peak, kt2) = match resonance {
        Resonance::Pair(p) => (p.f_p, coupling(p)?),
        Resonance::Triple(t) => (t.f_m, coupling_resonant(t)?),
        Resonance::Peak(_) | Resonance::Dip(_) => return Ok(None),
    };
    let q = q_3db(z, f_peak)?;
    ResonanceMetrics::new(f_peak, q, kt2).map(Some)
}

/// Reflection trajectory on the unit disc and its closed-loop count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QCircle {
    pub points: Vec<(f64, f64)>,
    pub loops: usize,
}

/// Builds the Q-circle of a reflection spectrum.
///
/// The tangent direction of the trajectory is tracked along frequency; the
/// turning is accumulated within runs of constant curvature sign, and each
/// run contributes one loop per full turn, counting a partial turn once it
/// reaches [`LOOP_THRESHOLD`].
pub fn q_circle(s: &ComplexSpectrum) -> Result<QCircle, ExtractionError> {
    require(s, SpectrumKind::Reflection)?;
    let points: Vec<(f64, f64)> = s.values().iter().map(|v| (v.re, v.im)).collect();

    let headings: Vec<f64> = s
        .values()
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| d.norm() > 1e-15)
        .map(|d| d.arg())
        .collect();

    let mut loops = 0usize;
    let mut run = 0.0f64;
    let close_run = |run: f64| ((run.abs() / (2.0 * PI)) + 1.0 - LOOP_THRESHOLD).floor() as usize;
    for w in headings.windows(2) {
        let mut turn = w[1] - w[0];
        if turn > PI {
            turn -= 2.0 * PI;
        } else if turn <= -PI {
            turn += 2.0 * PI;
        }
        if turn.abs() < 1e-12 {
            continue;
        }
        if run != 0.0 && run.signum() != turn.signum() {
            loops += close_run(run);
            run = 0.0;
        }
        run += turn;
    }
    loops += close_run(run);
    Ok(QCircle { points, loops })
}
