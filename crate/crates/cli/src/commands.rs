//! The five subcommands. Each computes every artifact in memory first and
//! writes only once nothing can fail anymore.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::{info, warn};
use msw_core::circuits::{z_model, CircuitModel, Topology};
use msw_core::extraction::{
    find_resonances, metrics, q_3db, q_circle, Resonance,
};
use msw_core::fitting::{guess_baseline, two_stage_fit, TwoStageResult};
use msw_core::magnetics::{add_noise, extract_splitting, heatmap, synth_sweep, NoiseSpec};
use msw_core::plot::{heatmap_svg, line_plot_svg, overlay_svg, q_circle_svg, LinePlot};
use msw_core::spectra::{s_to_z, z_to_s, ComplexSpectrum, SpectrumKind, TouchstoneFormat};
use serde::Serialize;

use crate::config::RunConfig;
use crate::io::{encode_spectrum, file_kind, num, opt_num, read_spectrum, FileKind, Manifest, ManifestEntry, Outputs};

/// Noise stream reserved for the zero-bias trace of a synthetic sweep.
const ZERO_BIAS_STREAM: u64 = u64::MAX;

fn impedance(s: &ComplexSpectrum) -> Result<ComplexSpectrum> {
    Ok(match s.kind() {
        SpectrumKind::Impedance => s.clone(),
        SpectrumKind::Reflection => s_to_z(s)?,
    })
}

fn reflection(s: &ComplexSpectrum) -> Result<ComplexSpectrum> {
    Ok(match s.kind() {
        SpectrumKind::Reflection => s.clone(),
        SpectrumKind::Impedance => z_to_s(s)?,
    })
}

fn csv_kind(from_z: bool) -> SpectrumKind {
    if from_z {
        SpectrumKind::Impedance
    } else {
        SpectrumKind::Reflection
    }
}

fn magnitude_label(log_mag: bool) -> String {
    if log_mag { "|Z| (dB ohm)" } else { "|Z| (ohm)" }.to_string()
}

pub struct ConvertArgs {
    pub to_z: bool,
    pub from_z: bool,
    pub format: TouchstoneFormat,
}

pub fn convert(cfg: &RunConfig, args: &ConvertArgs) -> Result<PathBuf> {
    let input = cfg.input.as_deref().context("convert needs --input")?;
    let out = cfg.out.as_deref().context("convert needs --out <file>")?;
    let out_kind = file_kind(out)?;
    let mut s = read_spectrum(input, csv_kind(args.from_z))?;
    if args.to_z {
        s = impedance(&s)?;
    }
    if out_kind == FileKind::Touchstone {
        s = reflection(&s)?;
    }
    let bytes = encode_spectrum(&s, out_kind, args.format)?;
    let dir = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut outputs = Outputs::default();
    outputs.add(out.file_name().context("--out must name a file")?, bytes);
    outputs.write_into(dir)?;
    Ok(out.to_path_buf())
}

/// One metrics-table row per detected resonance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub bias_mt: Option<f64>,
    pub f_s_hz: Option<f64>,
    pub f_p_hz: f64,
    pub q: Option<f64>,
    pub kt2: Option<f64>,
    pub fom: Option<f64>,
}

impl MetricsRow {
    const HEADER: &'static str = "bias_mT,f_s_Hz,f_p_Hz,Q,kt2,FOM";

    fn csv(&self) -> String {
        [
            opt_num(self.bias_mt),
            opt_num(self.f_s_hz),
            num(self.f_p_hz),
            opt_num(self.q),
            opt_num(self.kt2),
            opt_num(self.fom),
        ]
        .join(",")
    }
}

fn metric_rows(z: &ComplexSpectrum, res: &[Resonance], bias_mt: Option<f64>) -> Vec<MetricsRow> {
    res.iter()
        .filter_map(|r| {
            let (f_s, f_p) = match r {
                Resonance::Peak(e) => (None, e.freq_hz),
                Resonance::Pair(p) => (Some(p.f_s), p.f_p),
                Resonance::Triple(t) => (Some(t.closest_anti_resonance()), t.f_m),
                Resonance::Dip(_) => return None,
            };
            let m = metrics(z, r).ok().flatten();
            let q = m.map(|m| m.q).or_else(|| q_3db(z, f_p).ok());
            Some(MetricsRow {
                bias_mt,
                f_s_hz: f_s,
                f_p_hz: f_p,
                q,
                kt2: m.map(|m| m.kt2),
                fom: m.map(|m| m.fom),
            })
        })
        .collect()
}

fn markers(res: &[Resonance]) -> Vec<f64> {
    let mut out = Vec::new();
    for r in res {
        match r {
            Resonance::Peak(e) | Resonance::Dip(e) => out.push(e.freq_hz),
            Resonance::Pair(p) => out.extend([p.f_s, p.f_p]),
            Resonance::Triple(t) => out.extend([t.f_s1, t.f_m, t.f_s2]),
        }
    }
    out
}

/// Labelled spectra from `--input` or `--manifest`.
fn load_inputs(cfg: &RunConfig, from_z: bool) -> Result<Vec<(String, Option<f64>, ComplexSpectrum)>> {
    match (&cfg.input, &cfg.manifest) {
        (Some(input), None) => Ok(vec![("input".into(), None, read_spectrum(input, csv_kind(from_z))?)]),
        (None, Some(manifest)) => {
            let (m, base) = Manifest::load(manifest)?;
            let sweep = m.read_sweep(&base, csv_kind(from_z))?;
            Ok(sweep
                .entries()
                .iter()
                .enumerate()
                .map(|(i, e)| (format!("bias_{i:03}"), Some(e.bias_t), e.spectrum.clone()))
                .collect())
        }
        (Some(_), Some(_)) => bail!("pass either --input or --manifest, not both"),
        (None, None) => bail!("extract needs --input or --manifest"),
    }
}

pub fn extract(cfg: &RunConfig, from_z: bool) -> Result<PathBuf> {
    let out_dir = cfg.out_dir()?.to_path_buf();
    let inputs = load_inputs(cfg, from_z)?;
    let mut outputs = Outputs::default();
    let mut rows = Vec::new();
    for (label, bias, s) in &inputs {
        let z = impedance(s)?;
        let res = find_resonances(&z, cfg.prominence)?;
        rows.extend(metric_rows(&z, &res, bias.map(|b| b * 1e3)));
        let title = match bias {
            Some(b) => format!("|Z| at {} mT", num(b * 1e3)),
            None => "|Z|".to_string(),
        };
        let plot = LinePlot {
            title,
            y_label: magnitude_label(cfg.log_mag),
            log_y: cfg.log_mag,
            markers: markers(&res),
        };
        outputs.add(format!("zmag_{label}.svg"), line_plot_svg(&z, &plot));
        let qc = q_circle(&reflection(s)?)?;
        outputs.add(format!("qcircle_{label}.svg"), q_circle_svg(&qc, "Q-circle (S11)"));
    }
    if rows.is_empty() {
        warn!("no resonances found; the metrics table is empty");
    }
    let mut csv = String::from(MetricsRow::HEADER);
    csv.push('\n');
    for r in &rows {
        csv.push_str(&r.csv());
        csv.push('\n');
    }
    outputs.add("metrics.csv", csv);
    outputs.add("metrics.json", serde_json::to_string_pretty(&rows)? + "\n");
    outputs.add("config.json", cfg.to_json()?);
    outputs.write_into(&out_dir)?;
    info!("extracted {} rows into {}", rows.len(), out_dir.display());
    Ok(out_dir)
}

fn resolve_topology(cfg: &RunConfig) -> Result<Topology> {
    match (cfg.topology, &cfg.model) {
        (Some(t), Some(m)) if t != m.topology() => {
            bail!("--topology {t:?} conflicts with the config model topology {:?}", m.topology())
        }
        (Some(t), _) => Ok(t),
        (None, Some(m)) => Ok(m.topology()),
        (None, None) => bail!("fit needs --topology (hyg or rhyg) or a config model"),
    }
}

fn branch_rows(result: &TwoStageResult) -> String {
    let mut csv = String::from(
        "bias_mT,branch,f0_Hz,Q,r_m,l_m,c_m,no_resonance,residual_rms,weighted_rms,termination\n",
    );
    for bf in &result.per_bias {
        let r = &bf.result;
        let term = serde_json::to_value(r.termination)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        let tail = format!(
            "{},{},{},{}",
            bf.no_resonance,
            num(r.residual_rms),
            num(r.weighted_rms),
            term
        );
        if r.model.branches().is_empty() {
            csv.push_str(&format!("{},,,,,,,{tail}\n", num(bf.bias_t * 1e3)));
        }
        for (i, b) in r.model.branches().iter().enumerate() {
            csv.push_str(&format!(
                "{},{i},{},{},{},{},{},{tail}\n",
                num(bf.bias_t * 1e3),
                num(b.resonance_hz()),
                num(b.quality_factor()),
                num(b.r_m),
                num(b.l_m),
                num(b.c_m),
            ));
        }
    }
    csv
}

pub fn fit(cfg: &RunConfig, from_z: bool) -> Result<PathBuf> {
    let out_dir = cfg.out_dir()?.to_path_buf();
    let manifest_path = cfg.manifest.as_deref().context("fit needs --manifest")?;
    let (manifest, base) = Manifest::load(manifest_path)?;
    let zero_path = match (&cfg.zero_bias, &manifest.zero_bias) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => base.join(p),
        (None, None) => bail!("fit needs --zero-bias or a zero_bias entry in the manifest"),
    };
    let topology = resolve_topology(cfg)?;
    let zero = impedance(&read_spectrum(&zero_path, csv_kind(from_z))?)?;
    let sweep = manifest.read_sweep(&base, csv_kind(from_z))?;
    let init: CircuitModel = match &cfg.model {
        Some(m) => m.baseline(),
        None => guess_baseline(topology, &zero)?,
    };
    let result = two_stage_fit(&zero, &sweep, &init, &cfg.two_stage_options())
        .context("two-stage fit failed")?;

    let mut outputs = Outputs::default();
    let plot = |title: String| LinePlot {
        title,
        y_label: magnitude_label(cfg.log_mag),
        log_y: cfg.log_mag,
        markers: Vec::new(),
    };
    let fitted0 = z_model(&result.baseline.model, zero.grid());
    outputs.add(
        "overlay_zero_bias.svg",
        overlay_svg(&[&zero, &fitted0], &plot("zero bias: measured vs fitted |Z|".into())),
    );
    for (i, (bf, e)) in result.per_bias.iter().zip(sweep.entries()).enumerate() {
        let measured = impedance(&e.spectrum)?;
        let fitted = z_model(&bf.result.model, measured.grid());
        let title = format!("{} mT: measured vs fitted |Z|", num(bf.bias_t * 1e3));
        outputs.add(format!("overlay_bias_{i:03}.svg"), overlay_svg(&[&measured, &fitted], &plot(title)));
        if bf.no_resonance {
            warn!("no MSW resonance detected at {} T", bf.bias_t);
        }
    }
    outputs.add("fit.json", serde_json::to_string_pretty(&result)? + "\n");
    outputs.add("branches.csv", branch_rows(&result));
    outputs.add("config.json", cfg.to_json()?);
    outputs.write_into(&out_dir)?;
    Ok(out_dir)
}

pub fn synth(cfg: &RunConfig) -> Result<PathBuf> {
    let out_dir = cfg.out_dir()?.to_path_buf();
    let model = cfg.circuit_model()?;
    if model.branches().is_empty() {
        bail!("synth needs a model with at least one MSW branch");
    }
    if cfg.biases_t.is_empty() {
        bail!("synth needs a non-empty \"biases_t\" list");
    }
    let grid = cfg.grid.context("synth needs a \"grid\" block")?.build()?;
    let noise = NoiseSpec {
        snr_db: cfg.snr_db,
        seed: cfg.seed,
    };
    let sweep = synth_sweep(&model, &cfg.tuning, &cfg.biases_t, &grid, noise)?;
    let mut zero = z_to_s(&z_model(&model.baseline(), &grid))?;
    if let Some(snr) = cfg.snr_db {
        zero = add_noise(&zero, snr, cfg.seed, ZERO_BIAS_STREAM)?;
    }

    let mut outputs = Outputs::default();
    let mut entries = Vec::new();
    for (i, (e, &branchless)) in sweep.sweep.entries().iter().zip(&sweep.branchless).enumerate() {
        let name = format!("bias_{i:03}.s1p");
        if branchless {
            warn!("bias {} T is below the MSW band; entry has no branch", e.bias_t);
        }
        outputs.add(&name, encode_spectrum(&e.spectrum, FileKind::Touchstone, TouchstoneFormat::Ri)?);
        entries.push(ManifestEntry {
            bias_t: e.bias_t,
            path: name.into(),
            seed: cfg.snr_db.map(|_| cfg.seed),
            stream: cfg.snr_db.map(|_| i as u64),
        });
    }
    outputs.add("zero_bias.s1p", encode_spectrum(&zero, FileKind::Touchstone, TouchstoneFormat::Ri)?);
    let manifest = Manifest {
        zero_bias: Some("zero_bias.s1p".into()),
        entries,
    };
    outputs.add("manifest.json", serde_json::to_string_pretty(&manifest)? + "\n");
    outputs.add("config.json", cfg.to_json()?);
    outputs.write_into(&out_dir)?;
    Ok(out_dir)
}

#[derive(Debug, Serialize)]
struct SplittingReport {
    anticrossing: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    two_g_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bias_t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    f_lower_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    f_upper_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    message: Option<String>,
}

pub fn anticross(cfg: &RunConfig) -> Result<PathBuf> {
    let out_dir = cfg.out_dir()?.to_path_buf();
    let model = cfg.circuit_model()?;
    if model.topology() != Topology::RhygSeries {
        bail!("anticross needs a resonantly coupled (rhyg) model");
    }
    let grid = cfg.grid.context("anticross needs a \"grid\" block")?.build()?;
    let biases = match (&cfg.bias_grid, cfg.biases_t.is_empty()) {
        (Some(b), true) => b.build()?,
        (None, false) => cfg.biases_t.clone(),
        (Some(_), false) => bail!("set either \"bias_grid\" or \"biases_t\", not both"),
        (None, true) => bail!("anticross needs a \"bias_grid\" block or \"biases_t\""),
    };
    let hm = heatmap(&model, &cfg.tuning, &biases, &grid)?;
    let report = match extract_splitting(&hm) {
        Ok(s) => SplittingReport {
            anticrossing: true,
            two_g_hz: Some(s.two_g),
            bias_t: Some(s.bias_t),
            f_lower_hz: Some(s.f_lower),
            f_upper_hz: Some(s.f_upper),
            message: None,
        },
        Err(msw_core::magnetics::MagneticsError::NoAntiCrossing) => {
            let message = "no anti-crossing: fewer than two |Z| dip ridges at every bias".to_string();
            warn!("{message}");
            SplittingReport {
                anticrossing: false,
                two_g_hz: None,
                bias_t: None,
                f_lower_hz: None,
                f_upper_hz: None,
                message: Some(message),
            }
        }
        Err(e) => return Err(e.into()),
    };
    let mut outputs = Outputs::default();
    outputs.add("heatmap.csv", hm.to_csv());
    outputs.add("heatmap.json", serde_json::to_string(&hm)? + "\n");
    outputs.add("heatmap.svg", heatmap_svg(&hm, "|Z| vs bias and frequency"));
    outputs.add("splitting.json", serde_json::to_string_pretty(&report)? + "\n");
    outputs.add("config.json", cfg.to_json()?);
    outputs.write_into(&out_dir)?;
    Ok(out_dir)
}
