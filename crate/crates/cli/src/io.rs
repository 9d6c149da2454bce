//! Spectrum files, sweep manifests and all-or-nothing output writing.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use msw_core::spectra::{
    parse_touchstone, write_touchstone, BiasPoint, BiasSweep, ComplexSpectrum, SpectrumKind,
    TouchstoneFormat, DEFAULT_Z_REF,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileKind {
    Touchstone,
    Csv,
    Json,
}

pub fn file_kind(path: &Path) -> Result<FileKind> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("s1p") => Ok(FileKind::Touchstone),
        Some("csv") => Ok(FileKind::Csv),
        Some("json") => Ok(FileKind::Json),
        _ => bail!("{}: unsupported extension (expected .s1p, .csv or .json)", path.display()),
    }
}

/// Reads a spectrum. CSV files carry no kind, so `csv_kind` decides it.
pub fn read_spectrum(path: &Path, csv_kind: SpectrumKind) -> Result<ComplexSpectrum> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let parsed = match file_kind(path)? {
        FileKind::Touchstone => parse_touchstone(&text).map_err(anyhow::Error::from),
        FileKind::Csv => {
            ComplexSpectrum::read_csv(text.as_bytes(), csv_kind, DEFAULT_Z_REF).map_err(Into::into)
        }
        FileKind::Json => serde_json::from_str(&text).map_err(Into::into),
    };
    parsed.with_context(|| format!("parsing {}", path.display()))
}

pub fn encode_spectrum(s: &ComplexSpectrum, kind: FileKind, format: TouchstoneFormat) -> Result<Vec<u8>> {
    Ok(match kind {
        FileKind::Touchstone => write_touchstone(s, format)?.into_bytes(),
        FileKind::Csv => {
            let mut buf = Vec::new();
            s.write_csv(&mut buf)?;
            buf
        }
        FileKind::Json => (serde_json::to_string_pretty(s)? + "\n").into_bytes(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub bias_t: f64,
    pub path: PathBuf,
    /// Noise seed and stream used to generate the file, if synthetic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stream: Option<u64>,
}

/// Bias-to-file listing of a sweep; paths are relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zero_bias: Option<PathBuf>,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading manifest {}", path.display()))?;
        let m: Manifest = serde_json::from_str(&text)
            .with_context(|| format!("parsing manifest {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        Ok((m, base))
    }

    pub fn read_sweep(&self, base: &Path, csv_kind: SpectrumKind) -> Result<BiasSweep> {
        let mut entries = Vec::with_capacity(self.entries.len());
        for e in &self.entries {
            entries.push(BiasPoint {
                bias_t: e.bias_t,
                spectrum: read_spectrum(&base.join(&e.path), csv_kind)?,
            });
        }
        let mut sorted = entries;
        sorted.sort_by(|a, b| a.bias_t.total_cmp(&b.bias_t));
        BiasSweep::new(sorted).context("manifest entries do not form a valid sweep")
    }
}

/// Files collected in memory and written only after every computation succeeded.
#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, rel: impl Into<PathBuf>, bytes: impl Into<Vec<u8>>) {
        self.files.push((rel.into(), bytes.into()));
    }

    pub fn write_into(self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut written = Vec::new();
        for (rel, bytes) in self.files {
            let path = dir.join(rel);
            let tmp = path.with_extension("partial");
            std::fs::write(&tmp, &bytes).with_context(|| format!("writing {}", path.display()))?;
            std::fs::rename(&tmp, &path).with_context(|| format!("writing {}", path.display()))?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Shortest round-trip decimal form, used for every number in CSV output.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}
