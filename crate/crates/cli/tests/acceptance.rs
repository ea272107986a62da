//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use kinebci_cli::{build_subject, SubjectArgs};
use kinebci_core::decoder::{build_design, evaluate, fit, FitOptions};
use kinebci_core::gesture::{map_position, replay, replay_positions, GestureKind, ReplayConfig};
use kinebci_core::io::sha256_hex;
use kinebci_core::linalg::ColMatrix;
use kinebci_core::protocol::{
    calibrate, compute_stats, run_test_phase, run_training_phase, Outcome, SessionConfig, Trial,
};
use kinebci_core::recording::{Axis, TargetSide};
use kinebci_core::signal::{AcquisitionConfig, CausalFilterState, EegFrame};
use kinebci_core::synth::{random_model, reverse_label, white_noise_recording, IntentPolicy};
use nalgebra::{DMatrix, DVector};

type Verdict = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Verdict + 'a>);

macro_rules! check {
    ($cond:expr, $($msg:tt)*) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)*));
        }
    };
}

fn normal_equations(x: &ColMatrix, y: &[f64]) -> Vec<f64> {
    let a = DMatrix::from_fn(x.rows(), x.cols(), |r, c| x.get(r, c));
    let xtx = a.transpose() * &a;
    let xty = a.transpose() * DVector::from_column_slice(y);
    xtx.lu().solve(&xty).expect("nonsingular").iter().copied().collect()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    num / b.iter().fold(0.0f64, |m, y| m.max(y.abs()))
}

fn within(t0: Instant, limit: Duration) -> Result<f64, String> {
    let s = t0.elapsed().as_secs_f64();
    if t0.elapsed() < limit {
        Ok(s)
    } else {
        Err(format!("took {s:.2} s, limit {} s", limit.as_secs()))
    }
}

fn subject(seed: u64, snr: f64) -> kinebci_core::SyntheticSubject {
    let args = SubjectArgs {
        sigma: 0.0,
        snr: Some(snr),
        channels: 14,
        subject_lags: 5,
        acquisition_filter: false,
    };
    build_subject(&args, seed, Axis::X).unwrap()
}

fn exact_recovery() -> Verdict {
    let t0 = Instant::now();
    let eeg = white_noise_recording(AcquisitionConfig::default(), 60 * 128, 10.0, 1).unwrap();
    let truth = random_model(14, 5, &[Axis::X], 0.01, 2);
    let rec = reverse_label(&eeg, &truth).unwrap();
    let design = build_design(&rec, 5).unwrap();
    let model = fit(&design, &FitOptions::default()).map_err(|e| e.to_string())?;
    let got = model.design_coefficients(Axis::X).unwrap();
    let oracle = normal_equations(design.matrix(), design.target(Axis::X));
    let rel = rel_err(&got, &oracle);
    let decoded = model.predict_recording(&rec, Axis::X).unwrap();
    let max_err = decoded
        .iter()
        .zip(&rec.velocity(Axis::X)[5..])
        .fold(0.0f64, |m, (d, o)| m.max((d - o).abs()));
    check!(max_err < 1e-8, "max prediction error {max_err:e}");
    check!(rel < 1e-8, "coefficient relative error vs normal equations {rel:e}");
    let s = within(t0, Duration::from_secs(5))?;
    Ok(format!("max |err| {max_err:.1e}, coef rel err {rel:.1e}, {s:.2} s"))
}

fn design_shape() -> Verdict {
    let t = 1000;
    let rec = white_noise_recording(AcquisitionConfig::default(), t, 1.0, 3).unwrap();
    let d = build_design(&rec, 5).unwrap();
    check!(d.width() == 85, "width {}", d.width());
    check!(d.rows() == t - 5, "rows {} for T={t}", d.rows());
    Ok(format!("width {}, rows {} = T-5", d.width(), d.rows()))
}

fn held_out_correlation() -> Verdict {
    let t0 = Instant::now();
    let cfg = SessionConfig::default();
    let mut rs: Vec<f64> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..20u64)
            .map(|seed| {
                let cfg = &cfg;
                scope.spawn(move || {
                    let s = subject(seed, 10.0);
                    let train = run_training_phase(cfg, &s, seed).unwrap();
                    let model = calibrate(&train, 5, &FitOptions::default()).unwrap();
                    let held = run_training_phase(cfg, &s, seed + 10_000).unwrap();
                    evaluate(&model, &held)
                        .unwrap()
                        .axis(Axis::X)
                        .unwrap()
                        .r
                        .unwrap_or(f64::NAN)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    rs.sort_by(f64::total_cmp);
    // Nearest-rank 5th percentile.
    let p5 = rs[((0.05 * rs.len() as f64).ceil() as usize).max(1) - 1];
    check!(p5 > 0.9, "5th percentile r = {p5}");
    let s = within(t0, Duration::from_secs(60))?;
    Ok(format!(
        "20 seeds, r p5 {p5:.4}, min {:.4}, max {:.4}, {s:.2} s",
        rs[0],
        rs[rs.len() - 1]
    ))
}

fn fake_run(hits: usize, trials: usize) -> Vec<Trial> {
    (0..trials)
        .map(|i| Trial {
            target: TargetSide::Up,
            trace: vec![0.0],
            outcome: if i < hits { Outcome::Hit } else { Outcome::Timeout },
            time_to_hit_s: (i < hits).then_some(1.0),
            start_index: 0,
            fs: 128.0,
        })
        .collect()
}

fn table_arithmetic() -> Verdict {
    let vertical: Vec<_> = [6, 5, 5, 5, 4].iter().map(|&h| fake_run(h, 6)).collect();
    let v = compute_stats(&vertical).unwrap();
    check!((v.mean * 100.0 - 83.3).abs() <= 0.05, "mean {}", v.mean);
    check!((v.std * 100.0 - 11.8).abs() <= 0.2, "std {}", v.std);
    let horizontal: Vec<_> = (0..4).map(|_| fake_run(6, 6)).collect();
    let h = compute_stats(&horizontal).unwrap();
    check!(h.mean == 1.0 && h.std == 0.0, "horizontal {} +/- {}", h.mean, h.std);
    Ok(format!(
        "[6,5,5,5,4] -> {:.1}% (+/- {:.1}%), [6,6,6,6] -> {:.1}% (+/- {:.1}%)",
        v.mean * 100.0,
        v.std * 100.0,
        h.mean * 100.0,
        h.std * 100.0
    ))
}

/// Closed-loop runs shared by the feasibility and gesture criteria.
struct Sessions {
    runs: Vec<kinebci_core::protocol::TestPhase>,
    elapsed: Duration,
}

fn near_noiseless_sessions() -> Sessions {
    let t0 = Instant::now();
    let s = subject(42, 1e6);
    let cfg = SessionConfig::default();
    let train = run_training_phase(&cfg, &s, 42).unwrap();
    let model = calibrate(&train, 5, &FitOptions::default()).unwrap();
    let runs = (0..4)
        .map(|r| run_test_phase(&model, &s, &IntentPolicy::default(), &cfg, 100 + r).unwrap())
        .collect();
    Sessions {
        runs,
        elapsed: t0.elapsed(),
    }
}

fn closed_loop(sessions: &Sessions) -> Verdict {
    let runs: Vec<_> = sessions.runs.iter().map(|p| p.trials.clone()).collect();
    let stats = compute_stats(&runs).unwrap();
    check!(stats.n_trials == 24, "{} trials", stats.n_trials);
    for t in runs.iter().flatten() {
        check!(
            matches!(t.target, TargetSide::Left | TargetSide::Right),
            "non-horizontal target"
        );
        check!(
            t.is_hit() && t.time_to_hit_s.unwrap() <= 15.0,
            "missed {:?} trial",
            t.target
        );
    }
    let secs = sessions.elapsed.as_secs_f64();
    check!(secs < 30.0, "took {secs:.2} s");
    let slowest = runs
        .iter()
        .flatten()
        .filter_map(|t| t.time_to_hit_s)
        .fold(0.0, f64::max);
    Ok(format!(
        "{}/{} hits, slowest {slowest:.2} s, {secs:.2} s",
        stats.n_hits, stats.n_trials
    ))
}

fn gesture_fidelity(sessions: &Sessions) -> Verdict {
    let cfg = ReplayConfig::default();
    let mut n_cmds = 0;
    for phase in &sessions.runs {
        for t in &phase.trials {
            let cmds = replay_positions(&t.trace, t.fs, &cfg).unwrap();
            let mut prev = None;
            for c in &cmds {
                if !c.keepalive {
                    let want = map_position(t.trace[c.sample_index], cfg.dead_zone, prev);
                    check!(
                        c.command.kind == want,
                        "command {:?} for x={}",
                        c.command.kind,
                        t.trace[c.sample_index]
                    );
                }
                prev = Some(c.command.kind);
            }
            let want = match t.target {
                TargetSide::Right => GestureKind::RightHand,
                _ => GestureKind::LeftHand,
            };
            let last = cmds.last().unwrap().command.kind;
            check!(last == want, "{:?} trial ended on {:?}", t.target, last);
            n_cmds += cmds.len();
        }
        // The same must hold when replaying the whole recorded run.
        let whole = replay(&phase.recording, &cfg).unwrap();
        let xs = phase.recording.position(Axis::X);
        let mut prev = None;
        for c in &whole {
            if !c.keepalive {
                check!(
                    c.command.kind == map_position(xs[c.sample_index], cfg.dead_zone, prev),
                    "whole-run replay mismatch"
                );
            }
            prev = Some(c.command.kind);
        }
    }
    Ok(format!("24 trial traces, {n_cmds} commands, final kinds match targets"))
}

fn filter_contract() -> Verdict {
    let t0 = Instant::now();
    let acq = AcquisitionConfig::with_channels(1);
    let filtered = |signal: &dyn Fn(f64) -> f64| -> Vec<f64> {
        let mut st = CausalFilterState::new(acq).unwrap();
        let n = 30 * 128;
        let out: Vec<f64> = (0..n)
            .map(|t| {
                st.filter_step(&EegFrame::new(t as u64, vec![signal(t as f64 / acq.fs)]))
                    .unwrap()
                    .channels[0]
            })
            .collect();
        out
    };
    let dc = filtered(&|_| 1.0);
    let dc_gain = dc[dc.len() - 128..].iter().fold(0.0f64, |m, y| m.max(y.abs()));
    let sine = filtered(&|t| (2.0 * std::f64::consts::PI * 30.0 * t).sin());
    let tail = &sine[sine.len() - 128..];
    let amp = (2.0 * tail.iter().map(|y| y * y).sum::<f64>() / tail.len() as f64).sqrt();
    let db = 20.0 * amp.log10();
    check!(dc_gain < 0.01, "DC gain {dc_gain}");
    check!((db + 3.0).abs() <= 0.5, "30 Hz gain {db:.3} dB");
    let s = within(t0, Duration::from_secs(5))?;
    Ok(format!("DC gain {:.2e}, 30 Hz {db:.3} dB, {s:.2} s", dc_gain))
}

fn kinebci(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_kinebci"))
        .args(args)
        .current_dir(dir)
        .env_remove("KINEBCI_SEED")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "kinebci {}: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

fn pipeline_hashes() -> Result<Vec<(String, String)>, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    kinebci(
        d,
        &[
            "synth",
            "--seed",
            "7",
            "--snr",
            "10",
            "--trials",
            "2",
            "--out",
            "train.csv",
        ],
    )?;
    kinebci(
        d,
        &[
            "synth",
            "--seed",
            "7",
            "--mode",
            "reverse",
            "--trials",
            "1",
            "--out",
            "rev.csv",
            "--truth-out",
            "truth.txt",
        ],
    )?;
    kinebci(d, &["fit", "--recording", "train.csv", "--out", "model.txt"])?;
    kinebci(
        d,
        &[
            "eval",
            "--model",
            "model.txt",
            "--recording",
            "train.csv",
            "--plot-out",
            "plot.csv",
        ],
    )?;
    kinebci(
        d,
        &[
            "simulate",
            "--model",
            "model.txt",
            "--seed",
            "7",
            "--snr",
            "10",
            "--runs",
            "3",
            "--report-out",
            "report.txt",
            "--trace-out",
            "trials.csv",
            "--recording-dir",
            "runs",
        ],
    )?;
    kinebci(d, &["replay", "--recording", "runs/run0.csv", "--out", "wire.txt"])?;
    let files = [
        "train.csv",
        "rev.csv",
        "truth.txt",
        "model.txt",
        "plot.csv",
        "report.txt",
        "trials.csv",
        "runs/run0.csv",
        "runs/run1.csv",
        "runs/run2.csv",
        "wire.txt",
    ];
    files
        .iter()
        .map(|f| {
            let bytes = std::fs::read(d.join(f)).map_err(|e| format!("{f}: {e}"))?;
            Ok((f.to_string(), sha256_hex(&bytes)))
        })
        .collect()
}

fn determinism() -> Verdict {
    let a = pipeline_hashes()?;
    let b = pipeline_hashes()?;
    for ((f, ha), (_, hb)) in a.iter().zip(&b) {
        check!(ha == hb, "{f}: {ha} != {hb}");
    }
    Ok(format!("{} output files byte-identical across reruns", a.len()))
}

fn main() {
    let sessions = near_noiseless_sessions();
    let criteria: Vec<Criterion> = vec![
        ("exact recovery", Box::new(exact_recovery)),
        ("design matrix shape", Box::new(design_shape)),
        ("held-out decoding at 10:1 SNR", Box::new(held_out_correlation)),
        ("success-rate arithmetic", Box::new(table_arithmetic)),
        ("closed-loop feasibility", Box::new(|| closed_loop(&sessions))),
        ("gesture fidelity", Box::new(|| gesture_fidelity(&sessions))),
        ("filter contract", Box::new(filter_contract)),
        ("determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let result = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({why})", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
