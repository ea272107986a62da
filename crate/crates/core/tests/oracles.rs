//! Decoder and filter checks against independent oracles.

use kinebci_core::decoder::{build_design, evaluate, fit, DecoderModel, DesignMatrix, FitOptions};
use kinebci_core::linalg::ColMatrix;
use kinebci_core::recording::{Annotation, Axis, Kinematics, Recording};
use kinebci_core::signal::{AcquisitionConfig, CausalFilterState, EegFrame, LagWindow};
use kinebci_core::synth::{random_model, reverse_label, white_noise_recording, SyntheticSubject};
use kinebci_core::Error;
use nalgebra::{DMatrix, DVector};

/// Least squares through the normal equations, solved by LU in nalgebra.
fn normal_equations(x: &ColMatrix, y: &[f64]) -> Vec<f64> {
    let a = DMatrix::from_fn(x.rows(), x.cols(), |r, c| x.get(r, c));
    let b = DVector::from_column_slice(y);
    let xtx = a.transpose() * &a;
    let xty = a.transpose() * b;
    xtx.lu()
        .solve(&xty)
        .expect("normal equations are nonsingular")
        .iter()
        .copied()
        .collect()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let den = b.iter().fold(0.0f64, |m, y| m.max(y.abs()));
    num / den.max(f64::MIN_POSITIVE)
}

/// The decoder sum evaluated term by term from a recording, zero history before t = 0.
fn naive_predict(model: &DecoderModel, axis: Axis, rec: &Recording, t: usize) -> f64 {
    let mut u = model.axis(axis).unwrap().intercept;
    for n in 0..model.n_channels() {
        for k in 0..=model.n_lags() {
            if k <= t {
                u += model.weight(axis, n, k).unwrap() * rec.channels(t - k)[n];
            }
        }
    }
    u
}

#[test]
fn exact_recovery_on_reverse_labelled_noise() {
    let acq = AcquisitionConfig::default();
    let eeg = white_noise_recording(acq, 60 * 128, 5.0, 11).unwrap();
    let truth = random_model(14, 5, &[Axis::X, Axis::Y], 0.05, 12);
    let rec = reverse_label(&eeg, &truth).unwrap();
    let design = build_design(&rec, 5).unwrap();
    let model = fit(&design, &FitOptions::default()).unwrap();

    for axis in Axis::BOTH {
        let got = model.design_coefficients(axis).unwrap();
        let want = truth.design_coefficients(axis).unwrap();
        let oracle = normal_equations(design.matrix(), design.target(axis));
        assert!(rel_err(&got, &want) < 1e-8, "{axis}: vs truth {}", rel_err(&got, &want));
        assert!(
            rel_err(&got, &oracle) < 1e-8,
            "{axis}: vs oracle {}",
            rel_err(&got, &oracle)
        );
        let decoded = model.predict_recording(&rec, axis).unwrap();
        let max_err = decoded
            .iter()
            .zip(&rec.velocity(axis)[5..])
            .fold(0.0f64, |m, (d, o)| m.max((d - o).abs()));
        assert!(max_err < 1e-8, "{axis}: {max_err}");
    }
}

#[test]
fn noiseless_targets_recover_known_coefficients() {
    let eeg = white_noise_recording(AcquisitionConfig::with_channels(4), 500, 1.0, 3).unwrap();
    let mut design = build_design(&eeg, 3).unwrap();
    let beta: Vec<f64> = (0..design.width())
        .map(|j| ((j * 7 + 3) % 11) as f64 / 5.0 - 1.0)
        .collect();
    let y = design.matrix().mul_vec(&beta);
    *design.target_mut(Axis::X) = y.clone();
    let m = fit(
        &design,
        &FitOptions {
            axes: Some(vec![Axis::X]),
            ..FitOptions::default()
        },
    )
    .unwrap();
    let got = m.design_coefficients(Axis::X).unwrap();
    let oracle = normal_equations(design.matrix(), &y);
    assert!(rel_err(&got, &beta) < 1e-8);
    assert!(rel_err(&got, &oracle) < 1e-8);
}

#[test]
fn constant_target_with_standardized_columns() {
    let eeg = white_noise_recording(AcquisitionConfig::with_channels(6), 800, 2.0, 5).unwrap();
    let mut design = build_design(&eeg, 2).unwrap();
    let rows = design.rows();
    *design.target_mut(Axis::X) = vec![3.0; rows];
    let opts = FitOptions {
        standardize: true,
        axes: Some(vec![Axis::X]),
        ..FitOptions::default()
    };
    let m = fit(&design, &opts).unwrap();
    let ax = m.axis(Axis::X).unwrap();
    assert!((ax.intercept - 3.0).abs() < 1e-10);
    assert!(ax.weights.iter().all(|w| w.abs() < 1e-10));
    let oracle = normal_equations(design.matrix(), design.target(Axis::X));
    assert!((oracle[0] - 3.0).abs() < 1e-9);
}

#[test]
fn standardize_does_not_change_ols_predictions() {
    let eeg = white_noise_recording(AcquisitionConfig::with_channels(3), 400, 4.0, 8).unwrap();
    let truth = random_model(3, 2, &[Axis::X], 1.0, 2);
    let mut rec = reverse_label(&eeg, &truth).unwrap();
    for (i, v) in rec.velocity_mut(Axis::X).iter_mut().enumerate() {
        *v += ((i * 31 % 17) as f64 - 8.0) * 0.01;
    }
    let d = build_design(&rec, 2).unwrap();
    let plain = fit(&d, &FitOptions::default()).unwrap();
    let std = fit(
        &d,
        &FitOptions {
            standardize: true,
            ..FitOptions::default()
        },
    )
    .unwrap();
    let a = plain.predict_recording(&rec, Axis::X).unwrap();
    let b = std.predict_recording(&rec, Axis::X).unwrap();
    assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-9));
}

#[test]
fn predict_matches_naive_double_loop() {
    let eeg = white_noise_recording(AcquisitionConfig::default(), 200, 3.0, 21).unwrap();
    let model = random_model(14, 5, &[Axis::X, Axis::Y], 0.7, 22);
    let mut window = LagWindow::new(14, 5);
    for t in 0..eeg.len() {
        window.push(eeg.frame(t)).unwrap();
        if !window.is_warm() {
            continue;
        }
        let v = model.predict(&window).unwrap();
        for (axis, got) in [(Axis::X, v.u), (Axis::Y, v.v)] {
            let want = naive_predict(&model, axis, &eeg, t);
            assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "t={t}");
        }
    }
    let batch = model.predict_recording(&eeg, Axis::Y).unwrap();
    for (i, b) in batch.iter().enumerate() {
        let want = naive_predict(&model, Axis::Y, &eeg, i + 5);
        assert!((b - want).abs() <= 1e-12 * want.abs().max(1.0));
    }
}

#[test]
fn self_fit_on_noiseless_recording_is_perfect() {
    let eeg = white_noise_recording(AcquisitionConfig::default(), 3000, 5.0, 31).unwrap();
    let truth = random_model(14, 5, &[Axis::X], 0.1, 32);
    let rec = reverse_label(&eeg, &truth).unwrap();
    let m = fit(&build_design(&rec, 5).unwrap(), &FitOptions::default()).unwrap();
    let ev = evaluate(&m, &rec).unwrap();
    let ax = ev.axis(Axis::X).unwrap();
    assert!((ax.r.unwrap() - 1.0).abs() < 1e-9);
    assert!(ax.rmse < 1e-8);
}

#[test]
fn invertible_noiseless_encoding_is_decoded_perfectly() {
    // Two channels, lag-0 only encoding with an invertible 2x2 mixing of (u, v).
    let acq = AcquisitionConfig::with_channels(2);
    let lags = 1;
    let mut wx = vec![0.0; 4];
    let mut wy = vec![0.0; 4];
    wx[0] = 3.0; // channel 0, lag 0
    wy[0] = 1.0;
    wx[2] = -2.0; // channel 1, lag 0
    wy[2] = 4.0;
    let subject = SyntheticSubject::new(acq, lags, wx, wy, 0.0, 1).unwrap();
    let noise = white_noise_recording(acq, 2000, 1.0, 77).unwrap();
    let labels: Vec<Kinematics> = (0..noise.len())
        .map(|t| Kinematics {
            u: noise.channels(t)[0],
            v: noise.channels(t)[1],
            ..Kinematics::default()
        })
        .collect();
    let rec = subject
        .encode_eeg(&labels, &vec![Annotation::TRAINING; labels.len()], 0)
        .unwrap();
    let m = fit(&build_design(&rec, 1).unwrap(), &FitOptions::default()).unwrap();
    let ev = evaluate(&m, &rec).unwrap();
    for axis in Axis::BOTH {
        let r = ev.axis(axis).unwrap().r.unwrap();
        assert!((r - 1.0).abs() < 1e-9, "{axis}: {r}");
    }
}

fn duplicate_channel(rec: &Recording, from: usize, to: usize) -> Recording {
    let mut out = rec.clone();
    for t in 0..out.len() {
        let ch = out.channels_mut(t);
        ch[to] = ch[from];
    }
    out
}

#[test]
fn duplicated_channel_is_rank_deficient() {
    let eeg = white_noise_recording(AcquisitionConfig::default(), 1000, 1.0, 41).unwrap();
    let eeg = duplicate_channel(&eeg, 1, 2);
    let truth = random_model(14, 5, &[Axis::X], 0.2, 42);
    let rec = reverse_label(&eeg, &truth).unwrap();
    let d = build_design(&rec, 5).unwrap();
    match fit(&d, &FitOptions::default()) {
        Err(Error::RankDeficient { deficient, width }) => {
            assert_eq!(deficient, 6);
            assert_eq!(width, 85);
        }
        other => panic!("expected rank deficiency, got {other:?}"),
    }
    assert!(fit(&d, &FitOptions::ridge(1e-3)).is_ok());
}

#[test]
fn residuals_are_orthogonal_to_columns() {
    let subject = SyntheticSubject::random(AcquisitionConfig::default(), 5, 4.0, 51).unwrap();
    let cfg = kinebci_core::SessionConfig {
        n_training_trials: 1,
        ..kinebci_core::SessionConfig::default()
    };
    let rec = kinebci_core::run_training_phase(&cfg, &subject, 52).unwrap();
    let d: DesignMatrix = build_design(&rec, 5).unwrap();
    let m = fit(&d, &FitOptions::default()).unwrap();
    let beta = m.design_coefficients(Axis::X).unwrap();
    let y = d.target(Axis::X);
    let resid: Vec<f64> = d.matrix().mul_vec(&beta).iter().zip(y).map(|(p, o)| o - p).collect();
    let g = d.matrix().tr_mul_vec(&resid);
    let xty = d.matrix().tr_mul_vec(y);
    let lhs = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let rhs = xty.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    assert!(lhs <= 1e-6 * rhs, "{lhs} vs {rhs}");
}

/// |H(e^{jw})| of the cascade from the documented difference equations.
fn cascade_gain(st: &CausalFilterState, freq: f64) -> f64 {
    let fs = st.config().fs;
    let w = 2.0 * std::f64::consts::PI * freq / fs;
    let z1 = (w.cos(), -w.sin()); // e^{-jw}
    let z2 = ((2.0 * w).cos(), -(2.0 * w).sin());
    let mag = |num: (f64, f64), den: (f64, f64)| (num.0.hypot(num.1)) / (den.0.hypot(den.1));
    let hp = st.highpass_coeffs();
    let h1 = mag((hp.b0 + hp.b1 * z1.0, hp.b1 * z1.1), (1.0 + hp.a1 * z1.0, hp.a1 * z1.1));
    let lp = st.lowpass_coeffs();
    let h2 = mag(
        (lp.b0 + lp.b1 * z1.0 + lp.b2 * z2.0, lp.b1 * z1.1 + lp.b2 * z2.1),
        (1.0 + lp.a1 * z1.0 + lp.a2 * z2.0, lp.a1 * z1.1 + lp.a2 * z2.1),
    );
    h1 * h2
}

#[test]
fn measured_sine_response_matches_transfer_function() {
    let acq = AcquisitionConfig::with_channels(1);
    for freq in [1.0, 10.0, 30.0, 45.0] {
        let mut st = CausalFilterState::new(acq).unwrap();
        let n = 10 * 128;
        let mut out = Vec::with_capacity(n);
        for t in 0..n {
            let x = (2.0 * std::f64::consts::PI * freq * t as f64 / acq.fs).sin();
            out.push(st.filter_step(&EegFrame::new(t as u64, vec![x])).unwrap().channels[0]);
        }
        let tail = &out[n - 128..];
        let measured = (2.0 * tail.iter().map(|y| y * y).sum::<f64>() / tail.len() as f64).sqrt();
        let analytic = cascade_gain(&st, freq);
        assert!(
            (measured - analytic).abs() < 2e-3,
            "{freq} Hz: {measured} vs {analytic}"
        );
        if freq == 30.0 {
            let db = 20.0 * measured.log10();
            assert!((db + 3.0).abs() <= 0.5, "{db}");
        }
    }
}
