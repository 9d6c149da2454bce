#![allow(dead_code)]

use std::path::PathBuf;

use msw_core::circuits::{CircuitModel, ParallelRlc, SeriesLcr};
use msw_core::magnetics::{model_at_bias, synth_sweep, NoiseSpec, SynthSweep, TuningModel};
use msw_core::spectra::{ComplexSpectrum, FrequencyGrid};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

/// Resonantly coupled device: transducer self-resonant at 10.5 GHz, one MSW
/// branch defined at 10 GHz with Q 200 and 800 Ω peak.
pub fn rhyg_truth() -> CircuitModel {
    let series = SeriesLcr::from_resonance(2.0, 0.8e-9, 10.5e9).unwrap();
    let branch = ParallelRlc::from_resonance(800.0, 10e9, 200.0).unwrap();
    CircuitModel::rhyg(series, vec![branch]).unwrap()
}

pub fn sweep_grid() -> FrequencyGrid {
    FrequencyGrid::linspace(8e9, 13.5e9, 1101).unwrap()
}

/// Five biases placing the MSW branch at 9.0 to 12.6 GHz.
pub fn sweep_biases(t: &TuningModel) -> Vec<f64> {
    [9.0e9, 9.8e9, 11.2e9, 12.0e9, 12.6e9]
        .iter()
        .map(|&f| t.bias_for(f))
        .collect()
}

pub struct Scenario {
    pub truth: CircuitModel,
    pub tuning: TuningModel,
    pub biases: Vec<f64>,
    pub zero_bias: ComplexSpectrum,
    pub sweep: SynthSweep,
}

/// Zero-bias trace (below the MSW band, so branchless) plus a five-point sweep.
pub fn scenario(noise: NoiseSpec) -> Scenario {
    let truth = rhyg_truth();
    let tuning = TuningModel::default();
    let biases = sweep_biases(&tuning);
    let grid = sweep_grid();
    let zero = synth_sweep(
        &truth,
        &tuning,
        &[0.0],
        &grid,
        NoiseSpec {
            snr_db: noise.snr_db,
            seed: noise.seed ^ 0x5eed,
        },
    )
    .unwrap();
    assert!(zero.branchless[0]);
    let sweep = synth_sweep(&truth, &tuning, &biases, &grid, noise).unwrap();
    Scenario {
        truth,
        tuning,
        biases,
        zero_bias: zero.sweep.entries()[0].spectrum.clone(),
        sweep,
    }
}

/// Generating model at bias `b`.
pub fn truth_at(s: &Scenario, b: f64) -> CircuitModel {
    model_at_bias(&s.truth, &s.tuning, b).unwrap().0
}

/// Transducer start values deliberately off the truth.
pub fn baseline_guess(truth: &CircuitModel) -> CircuitModel {
    let s = truth.series().unwrap();
    let off = SeriesLcr::new(s.r_0 * 1.6, s.l_0 * 0.7, s.c_0 * 1.3).unwrap();
    CircuitModel::rhyg(off, vec![]).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
