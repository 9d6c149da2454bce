mod common;

use common::*;
use msw_core::extraction::{find_resonances, Resonance, DEFAULT_PROMINENCE};
use msw_core::fitting::{two_stage_fit, FitError, TwoStageOptions};
use msw_core::magnetics::{calibrate_tuning, synth_sweep, NoiseSpec};
use msw_core::spectra::{s_to_z, BiasSweep};

#[test]
fn noiseless_sweep_recovers_every_parameter() {
    let sc = scenario(NoiseSpec::default());
    let out = two_stage_fit(
        &sc.zero_bias,
        &sc.sweep.sweep,
        &baseline_guess(&sc.truth),
        &TwoStageOptions::default(),
    )
    .unwrap();

    for (got, want) in out
        .baseline
        .model
        .param_values()
        .iter()
        .zip(sc.truth.baseline().param_values())
    {
        assert!(rel_err(*got, want) < 1e-3, "{got} vs {want}");
    }
    assert_eq!(out.per_bias.len(), 5);
    for bf in &out.per_bias {
        assert!(!bf.no_resonance);
        let want = truth_at(&sc, bf.bias_t).param_values();
        for (got, w) in bf.result.model.param_values().iter().zip(&want) {
            assert!(rel_err(*got, *w) < 1e-3, "bias {}: {got} vs {w}", bf.bias_t);
        }
        // identifiability: residual RMS far below the data RMS
        let z = s_to_z(&sc.sweep.sweep.entries().iter().find(|e| e.bias_t == bf.bias_t).unwrap().spectrum).unwrap();
        let rms = (z.values().iter().map(|v| v.norm_sqr()).sum::<f64>() / z.len() as f64).sqrt();
        assert!(bf.result.residual_rms < 1e-8 * rms, "{} vs {rms}", bf.result.residual_rms);
    }
}

#[test]
fn frozen_baseline_is_shared_by_all_stage_two_fits() {
    let sc = scenario(NoiseSpec::default());
    let out = two_stage_fit(
        &sc.zero_bias,
        &sc.sweep.sweep,
        &baseline_guess(&sc.truth),
        &TwoStageOptions::default(),
    )
    .unwrap();
    let base = out.baseline.model.series().copied().unwrap();
    for bf in &out.per_bias {
        assert_eq!(bf.result.model.series().copied().unwrap(), base);
    }
}

#[test]
fn fitted_branch_tracks_tuning_law_and_recalibrates() {
    let sc = scenario(NoiseSpec::default());
    let out = two_stage_fit(
        &sc.zero_bias,
        &sc.sweep.sweep,
        &baseline_guess(&sc.truth),
        &TwoStageOptions::default(),
    )
    .unwrap();
    let mut pairs = Vec::new();
    for bf in &out.per_bias {
        let f0 = bf.result.model.branches()[0].resonance_hz();
        let law = msw_core::magnetics::msw_frequency(&sc.tuning, bf.bias_t).unwrap();
        assert!(rel_err(f0, law) < 2e-3, "{f0} vs {law}");
        pairs.push((bf.bias_t, f0));
    }
    let cal = calibrate_tuning(&pairs).unwrap();
    assert!(rel_err(cal.tuning.gamma_eff, sc.tuning.gamma_eff) < 0.01);
}

#[test]
fn below_band_bias_is_flagged_no_resonance() {
    let sc = scenario(NoiseSpec::default());
    let grid = sweep_grid();
    let below = synth_sweep(&sc.truth, &sc.tuning, &[0.05, 0.1], &grid, NoiseSpec::default()).unwrap();
    assert_eq!(below.branchless, vec![true, true]);
    let out = two_stage_fit(
        &sc.zero_bias,
        &below.sweep,
        &baseline_guess(&sc.truth),
        &TwoStageOptions::default(),
    )
    .unwrap();
    for bf in &out.per_bias {
        assert!(bf.no_resonance);
        assert!(bf.result.model.branches().is_empty());
    }
}

#[test]
fn noiseless_extraction_finds_branch_at_every_bias() {
    let sc = scenario(NoiseSpec::default());
    for (e, &b) in sc.sweep.sweep.entries().iter().zip(&sc.biases) {
        let z = s_to_z(&e.spectrum).unwrap();
        let res = find_resonances(&z, DEFAULT_PROMINENCE).unwrap();
        let f0 = msw_core::magnetics::msw_frequency(&sc.tuning, b).unwrap();
        let step = z.grid().step_at(0);
        // the branch peak is the parallel resonance of the series model plus branch
        let truth_peak = truth_at(&sc, b).branches()[0].resonance_hz();
        assert!((truth_peak - f0).abs() < 1.0);
        let found = res.iter().any(|r| match r {
            Resonance::Triple(t) => (t.f_m - f0).abs() < step / 2.0,
            _ => r.peak_hz().is_some_and(|p| (p - f0).abs() < step / 2.0),
        });
        assert!(found, "bias {b}: {res:?}");
    }
}

#[test]
fn same_seed_reproduces_fit_exactly() {
    let noise = NoiseSpec {
        snr_db: Some(40.0),
        seed: 3,
    };
    let run = || {
        let sc = scenario(noise);
        two_stage_fit(
            &sc.zero_bias,
            &sc.sweep.sweep,
            &baseline_guess(&sc.truth),
            &TwoStageOptions::default(),
        )
        .unwrap()
    };
    let a = serde_json::to_string(&run()).unwrap();
    let b = serde_json::to_string(&run()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn grid_mismatch_is_rejected() {
    let sc = scenario(NoiseSpec::default());
    let other = msw_core::spectra::FrequencyGrid::linspace(8e9, 13e9, 50).unwrap();
    let sweep = synth_sweep(&sc.truth, &sc.tuning, &sc.biases, &other, NoiseSpec::default()).unwrap();
    let err = two_stage_fit(&sc.zero_bias, &sweep.sweep, &sc.truth, &TwoStageOptions::default());
    assert!(matches!(err, Err(FitError::GridMismatch)));
    let empty = BiasSweep::new(vec![]).unwrap();
    assert!(two_stage_fit(&sc.zero_bias, &empty, &sc.truth, &TwoStageOptions::default())
        .unwrap()
        .per_bias
        .is_empty());
}

#[test]
fn guessed_baseline_fits_like_a_hand_start() {
    use msw_core::circuits::Topology;
    use msw_core::fitting::guess_baseline;
    let sc = scenario(NoiseSpec::default());
    let init = guess_baseline(Topology::RhygSeries, &sc.zero_bias).unwrap();
    let f_c = init.series().unwrap().resonance_hz();
    assert!(rel_err(f_c, 10.5e9) < 0.01, "{f_c}");
    let out = two_stage_fit(&sc.zero_bias, &sc.sweep.sweep, &init, &TwoStageOptions::default()).unwrap();
    for (got, want) in out.baseline.model.param_values().iter().zip(sc.truth.baseline().param_values()) {
        assert!(rel_err(*got, want) < 1e-6);
    }
}

#[test]
fn guessed_line_baseline_recovers_hyg_transducer() {
    use msw_core::circuits::{z_model, CircuitModel, TLineSection, Topology};
    use msw_core::fitting::{fit, default_specs, guess_baseline, FitOptions};
    let truth = CircuitModel::hyg(TLineSection::new(35.0, 0.03, 8e-12).unwrap(), vec![]).unwrap();
    let z = z_model(&truth, &sweep_grid());
    let init = guess_baseline(Topology::HygShortedLine, &z).unwrap();
    let res = fit(&init, &default_specs(&init, 1e3), &z, &FitOptions::default()).unwrap();
    assert!(res.converged);
    for (got, want) in res.model.param_values().iter().zip(truth.param_values()) {
        assert!(rel_err(*got, want) < 1e-4, "{got} vs {want}");
    }
}
