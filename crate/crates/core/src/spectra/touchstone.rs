//! Touchstone v1 one-port (`.s1p`) reader and writer.
//!
//! Frequencies are normalized to Hz by shifting the decimal exponent of the
//! token text, so `1.5 GHz` and `1500000000 Hz` parse to the same `f64`.

use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ComplexSpectrum, FrequencyGrid, SpectrumError, SpectrumKind, DEFAULT_Z_REF};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TouchstoneError {
    #[error("line {line}: malformed option line: {reason}")]
    MalformedOption { line: usize, reason: String },
    #[error("line {line}: data row before the '#' option line")]
    MissingOptionLine { line: usize },
    #[error("line {line}: second option line")]
    DuplicateOptionLine { line: usize },
    #[error("line {line}: Touchstone v2 keywords are not supported (one-port v1 only)")]
    UnsupportedVersion { line: usize },
    #[error("line {line}: expected 3 columns for a one-port file, found {columns}")]
    WrongPortCount { line: usize, columns: usize },
    #[error("line {line}: cannot parse '{token}' as a number")]
    UnparseableRow { line: usize, token: String },
    #[error("line {line}: frequency is not strictly increasing")]
    NonMonotonic { line: usize },
    #[error("no data rows")]
    NoData,
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
}

impl TouchstoneError {
    /// Line number the error refers to (1-based), if any.
    pub fn line(&self) -> Option<usize> {
        match self {
            Self::MalformedOption { line, .. }
            | Self::MissingOptionLine { line }
            | Self::DuplicateOptionLine { line }
            | Self::UnsupportedVersion { line }
            | Self::WrongPortCount { line, .. }
            | Self::UnparseableRow { line, .. }
            | Self::NonMonotonic { line } => Some(*line),
            Self::NoData | Self::Spectrum(_) => None,
        }
    }
}

/// Data-pair encoding of a Touchstone file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "UPPERCASE")]
pub enum TouchstoneFormat {
    /// Real, imaginary.
    #[default]
    Ri,
    /// Magnitude, angle in degrees.
    Ma,
    /// 20·log10 magnitude, angle in degrees.
    Db,
}

impl TouchstoneFormat {
    fn keyword(self) -> &'static str {
        match self {
            Self::Ri => "RI",
            Self::Ma => "MA",
            Self::Db => "DB",
        }
    }

    fn decode(self, a: f64, b: f64) -> Complex64 {
        match self {
            Self::Ri => Complex64::new(a, b),
            Self::Ma => Complex64::from_polar(a, b.to_radians()),
            Self::Db => Complex64::from_polar(10f64.powf(a / 20.0), b.to_radians()),
        }
    }

    fn encode(self, v: Complex64) -> (f64, f64) {
        match self {
            Self::Ri => (v.re, v.im),
            Self::Ma => (v.norm(), v.arg().to_degrees()),
            Self::Db => (20.0 * v.norm().log10(), v.arg().to_degrees()),
        }
    }
}

impl std::str::FromStr for TouchstoneFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "RI" => Ok(Self::Ri),
            "MA" => Ok(Self::Ma),
            "DB" => Ok(Self::Db),
            other => Err(format!("unknown format '{other}'")),
        }
    }
}

struct OptionLine {
    exp10: i32,
    format: TouchstoneFormat,
    z_ref: f64,
}

fn parse_option_line(body: &str, line: usize) -> Result<OptionLine, TouchstoneError> {
    let bad = |reason: String| TouchstoneError::MalformedOption { line, reason };
    // v1 defaults
    let mut opt = OptionLine {
        exp10: 9,
        format: TouchstoneFormat::Ma,
        z_ref: DEFAULT_Z_REF,
    };
    let mut tokens = body.split_whitespace();
    while let Some(tok) = tokens.next() {
        match tok.to_ascii_uppercase().as_str() {
            "HZ" => opt.exp10 = 0,
            "KHZ" => opt.exp10 = 3,
            "MHZ" => opt.exp10 = 6,
            "GHZ" => opt.exp10 = 9,
            "S" => {}
            p @ ("Y" | "Z" | "G" | "H") => {
                return Err(bad(format!("parameter '{p}' not supported, only S")));
            }
            "RI" => opt.format = TouchstoneFormat::Ri,
            "MA" => opt.format = TouchstoneFormat::Ma,
            "DB" => opt.format = TouchstoneFormat::Db,
            "R" => {
                let value = tokens
                    .next()
                    .ok_or_else(|| bad("'R' without a resistance value".into()))?;
                opt.z_ref = value
                    .parse::<f64>()
                    .ok()
                    .filter(|r| r.is_finite() && *r > 0.0)
                    .ok_or_else(|| bad(format!("invalid reference resistance '{value}'")))?;
            }
            _ => return Err(bad(format!("unknown token '{tok}'"))),
        }
    }
    Ok(opt)
}

fn parse_number(token: &str, line: usize) -> Result<f64, TouchstoneError> {
    token
        .parse::<f64>()
        .map_err(|_| TouchstoneError::UnparseableRow {
            line,
            token: token.to_string(),
        })
}

/// Parses a frequency token and multiplies it by `10^exp10` exactly in decimal.
fn parse_frequency(token: &str, exp10: i32, line: usize) -> Result<f64, TouchstoneError> {
    let plain = parse_number(token, line)?;
    if exp10 == 0 || !plain.is_finite() {
        return Ok(plain);
    }
    let (mantissa, exp) = match token.find(['e', 'E']) {
        Some(pos) => {
            let exp: i32 = token[pos + 1..]
                .parse()
                .map_err(|_| TouchstoneError::UnparseableRow {
                    line,
                    token: token.to_string(),
                })?;
            (&token[..pos], exp)
        }
        None => (token, 0),
    };
    parse_number(&format!("{mantissa}e{}", exp + exp10), line)
}

/// Parses a one-port Touchstone v1 document into a reflection spectrum.
pub fn parse_touchstone(text: &str) -> Result<ComplexSpectrum, TouchstoneError> {
    let mut option: Option<OptionLine> = None;
    let mut comments = Vec::new();
    let mut freqs: Vec<f64> = Vec::new();
    let mut values = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let (body, comment) = match raw.find('!') {
            Some(pos) => (&raw[..pos], Some(raw[pos + 1..].trim())),
            None => (raw, None),
        };
        if let Some(c) = comment {
            comments.push(c.to_string());
        }
        let body = body.trim();
        if body.is_empty() {
            continue;
        }
        if body.starts_with('[') {
            return Err(TouchstoneError::UnsupportedVersion { line });
        }
        if let Some(rest) = body.strip_prefix('#') {
            if option.is_some() {
                return Err(TouchstoneError::DuplicateOptionLine { line });
            }
            option = Some(parse_option_line(rest, line)?);
            continue;
        }
        let opt = option
            .as_ref()
            .ok_or(TouchstoneError::MissingOptionLine { line })?;

        let tokens: Vec<&str> = body.split_whitespace().collect();
        // numeric check first so a garbled row is not misreported as a port mismatch
        let numbers = tokens
            .iter()
            .map(|t| parse_number(t, line))
            .collect::<Result<Vec<_>, _>>()?;
        if numbers.len() != 3 {
            return Err(TouchstoneError::WrongPortCount {
                line,
                columns: numbers.len(),
            });
        }
        let f = parse_frequency(tokens[0], opt.exp10, line)?;
        if let Some(&prev) = freqs.last() {
            if f <= prev {
                return Err(TouchstoneError::NonMonotonic { line });
            }
        }
        freqs.push(f);
        values.push(opt.format.decode(numbers[1], numbers[2]));
    }

    let opt = option.ok_or(TouchstoneError::NoData)?;
    if freqs.is_empty() {
        return Err(TouchstoneError::NoData);
    }
    let grid = FrequencyGrid::new(freqs)?;
    Ok(
        ComplexSpectrum::new(grid, values, SpectrumKind::Reflection, opt.z_ref)?
            .with_comments(comments),
    )
}

/// Serializes a reflection spectrum as Touchstone v1 with frequencies in Hz.
///
/// Numbers are written in shortest round-trip form, so RI output re-parses
/// bit-identically.
pub fn write_touchstone(
    spectrum: &ComplexSpectrum,
    format: TouchstoneFormat,
) -> Result<String, TouchstoneError> {
    if spectrum.kind() != SpectrumKind::Reflection {
        return Err(SpectrumError::WrongKind {
            expected: SpectrumKind::Reflection,
            found: spectrum.kind(),
        }
        .into());
    }
    let mut out = String::new();
    for c in spectrum.comments() {
        let _ = writeln!(out, "! {c}");
    }
    let _ = writeln!(out, "# HZ S {} R {}", format.keyword(), spectrum.z_ref());
    for (f, v) in spectrum.iter() {
        let (a, b) = format.encode(v);
        let _ = writeln!(out, "{f:e} {a:e} {b:e}");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ri_identity() {
        let s = parse_touchstone("# GHz S RI R 50\n1.0 0.0 0.0\n2.0 0.1 0.2\n").unwrap();
        assert_eq!(s.freqs()[0], 1e9);
        assert_eq!(s.values()[0], Complex64::new(0.0, 0.0));
        assert_eq!(s.z_ref(), 50.0);
        assert_eq!(s.kind(), SpectrumKind::Reflection);
    }

    #[test]
    fn ma_angle_in_degrees() {
        let s = parse_touchstone("# MHz S MA R 50\n500 1.0 180\n600 1.0 90\n").unwrap();
        assert_eq!(s.freqs()[0], 5e8);
        assert!((s.values()[0] - Complex64::new(-1.0, 0.0)).norm() < 1e-15);
        assert!((s.values()[1] - Complex64::new(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn db_magnitude() {
        let s = parse_touchstone("# Hz S DB R 50\n1e9 -6.0205999 0\n2e9 0 0\n").unwrap();
        // 10^(-6.0205999/20) evaluated independently: 0.50000000...
        let expected = 10f64.powf(-6.0205999 / 20.0);
        assert!((expected - 0.5).abs() < 1e-8);
        assert!((s.values()[0].re - 0.5).abs() < 1e-8);
        assert_eq!(s.values()[0].im, 0.0);
    }

    #[test]
    fn defaults_and_reference() {
        let s = parse_touchstone("#\n1 0.5 0\n2 0.5 0\n").unwrap();
        assert_eq!(s.freqs()[0], 1e9);
        assert_eq!(s.z_ref(), 50.0);
        let s = parse_touchstone("# hz s ri r 75\n1 0 0\n2 0 0\n").unwrap();
        assert_eq!(s.z_ref(), 75.0);
    }

    #[test]
    fn unit_scaling_is_exact() {
        for (unit, token) in [("KHZ", "1234567.891"), ("MHZ", "1234.567891"), ("GHZ", "1.234567891e0")] {
            let text = format!("# {unit} S RI R 50\n{token} 0 0\n1e20 0 0\n");
            let s = parse_touchstone(&text).unwrap();
            assert_eq!(s.freqs()[0], 1234567891.0, "{unit}");
        }
    }

    #[test]
    fn comments_are_kept() {
        let s = parse_touchstone("! vna export\n# HZ S RI R 50\n1 0 0 ! inline\n2 0 0\n").unwrap();
        assert_eq!(s.comments(), ["vna export", "inline"]);
    }

    #[test]
    fn error_variants_carry_line_numbers() {
        let cases: &[(&str, usize)] = &[
            ("# THZ S RI R 50\n1 0 0\n", 1),
            ("1 0 0\n# HZ S RI R 50\n", 1),
            ("# HZ S RI R 50\n# HZ S RI R 50\n", 2),
            ("[Version] 2.0\n", 1),
            ("# HZ S RI R 50\n1 0 0 0 0 0 0 0 0\n", 2),
            ("# HZ S RI R 50\n1 0 0\n2 x 0\n", 3),
            ("# HZ S RI R 50\n1 0 0\n1 0 0\n", 3),
        ];
        for (text, line) in cases {
            let err = parse_touchstone(text).unwrap_err();
            assert_eq!(err.line(), Some(*line), "{text:?} -> {err}");
            assert!(err.to_string().contains(&format!("line {line}")));
        }
        assert_eq!(parse_touchstone("# HZ S RI R 50\n"), Err(TouchstoneError::NoData));
        assert!(matches!(
            parse_touchstone("# HZ Z RI R 50\n1 0 0\n"),
            Err(TouchstoneError::MalformedOption { line: 1, .. })
        ));
        assert!(matches!(
            parse_touchstone("# HZ S RI R\n1 0 0\n"),
            Err(TouchstoneError::MalformedOption { line: 1, .. })
        ));
    }

    #[test]
    fn write_layout() {
        let s = parse_touchstone("# HZ S RI R 50\n1 0.1 0.2\n2 0.3 0.4\n3 0.5 0.6\n").unwrap();
        let text = write_touchstone(&s, TouchstoneFormat::Ri).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.iter().filter(|l| l.starts_with('#')).count(), 1);
        assert_eq!(lines.iter().filter(|l| !l.starts_with(['#', '!'])).count(), 3);
        assert_eq!(parse_touchstone(&text).unwrap().values(), s.values());
    }

    #[test]
    fn impedance_cannot_be_written() {
        let s = parse_touchstone("# HZ S RI R 50\n1 0.1 0.2\n2 0.3 0.4\n").unwrap();
        let z = super::super::s_to_z(&s).unwrap();
        assert!(write_touchstone(&z, TouchstoneFormat::Ri).is_err());
    }
}
