//! Training, calibration and closed-loop test phases, plus run statistics.

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::decoder::{build_design, fit, DecoderModel, FitOptions};
use crate::error::{Error, Result};
use crate::recording::{Annotation, Axis, Kinematics, Recording, TargetSide};
use crate::signal::LagWindow;
use crate::synth::{derive_seed, gen_pursuit_trajectory, rng_from_seed, IntentPolicy, SyntheticSubject};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub n_training_trials: usize,
    pub trial_duration_s: f64,
    pub test_timeout_s: f64,
    pub trials_per_run: usize,
    pub axis: Axis,
    /// Half-width of the target region around its center, screen units.
    pub target_halfwidth: f64,
    /// Distance of the target centers from the origin.
    pub target_center: f64,
    /// Idle decoding before the first test trial.
    pub prerun_s: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            n_training_trials: 5,
            trial_duration_s: 60.0,
            test_timeout_s: 15.0,
            trials_per_run: 6,
            axis: Axis::X,
            target_halfwidth: 0.1,
            target_center: 1.0,
            prerun_s: 2.0,
        }
    }
}

impl SessionConfig {
    pub fn for_axis(axis: Axis) -> Self {
        Self {
            axis,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = self.n_training_trials > 0
            && self.trial_duration_s > 0.0
            && self.test_timeout_s > 0.0
            && self.trials_per_run > 0
            && self.target_halfwidth > 0.0
            && self.target_center > 0.0
            && self.prerun_s >= 0.0;
        if !positive {
            return Err(Error::validation("session parameters must be positive"));
        }
        if self.target_halfwidth >= 1.0 || self.target_center > 1.0 {
            return Err(Error::validation("targets must lie on screen with half-width < 1"));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form of this config.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

pub fn run_training_phase(cfg: &SessionConfig, subject: &SyntheticSubject, seed: u64) -> Result<Recording> {
    cfg.validate()?;
    let fs = subject.acquisition().fs;
    let mut labels: Vec<Kinematics> = Vec::new();
    for trial in 0..cfg.n_training_trials {
        let tr = gen_pursuit_trajectory(cfg.trial_duration_s, fs, cfg.axis, derive_seed(seed, 1 + trial as u64))?;
        labels.extend(tr.kinematics());
    }
    let annotations = vec![Annotation::TRAINING; labels.len()];
    subject.encode_eeg(&labels, &annotations, derive_seed(seed, 0))
}

/// Fits a decoder to a training recording and stamps its provenance.
pub fn calibrate(rec: &Recording, n_lags: usize, opts: &FitOptions) -> Result<DecoderModel> {
    let design = build_design(rec, n_lags)?;
    let mut model = fit(&design, opts)?;
    let p = &mut model.provenance;
    p.insert("n_samples".into(), rec.len().to_string());
    p.insert("recording_hash".into(), recording_hash(rec));
    p.insert("ridge".into(), format!("{:e}", opts.ridge));
    p.insert("standardize".into(), opts.standardize.to_string());
    Ok(model)
}

/// Hex SHA-256 over channel data, labels and annotations.
pub fn recording_hash(rec: &Recording) -> String {
    let mut h = Sha256::new();
    h.update(rec.config().fs.to_le_bytes());
    h.update((rec.n_channels() as u64).to_le_bytes());
    for c in rec.raw_channels() {
        h.update(c.to_le_bytes());
    }
    for t in 0..rec.len() {
        let k = rec.kinematics(t);
        for v in [k.u, k.v, k.x, k.y] {
            h.update(v.to_le_bytes());
        }
        let a = rec.annotation(t);
        h.update(a.phase.name());
        h.update(a.target.map_or("none", |s| s.code()));
    }
    hex::encode(h.finalize())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Outcome {
    Hit,
    Timeout,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trial {
    pub target: TargetSide,
    /// Cursor position on the active axis after each sample.
    pub trace: Vec<f64>,
    pub outcome: Outcome,
    pub time_to_hit_s: Option<f64>,
    /// Recording index of the trial's first sample.
    pub start_index: usize,
    pub fs: f64,
}

impl Trial {
    pub fn is_hit(&self) -> bool {
        self.outcome == Outcome::Hit
    }

    pub fn elapsed_s(&self) -> f64 {
        self.trace.len() as f64 / self.fs
    }

    pub fn end_index(&self) -> usize {
        self.start_index + self.trace.len()
    }
}

#[derive(Clone, Debug)]
pub struct TestPhase {
    pub trials: Vec<Trial>,
    pub recording: Recording,
}

/// Closed-loop test phase: the subject intends toward each target, the
/// decoder turns the resulting EEG into cursor velocity.
pub fn run_test_phase(
    model: &DecoderModel,
    subject: &SyntheticSubject,
    policy: &IntentPolicy,
    cfg: &SessionConfig,
    seed: u64,
) -> Result<TestPhase> {
    cfg.validate()?;
    policy.validate()?;
    if !model.has_axis(cfg.axis) {
        return Err(Error::config(format!("model does not decode the {} axis", cfg.axis)));
    }
    if model.n_channels() != subject.n_channels() {
        return Err(Error::config(format!(
            "model has {} channels, subject has {}",
            model.n_channels(),
            subject.n_channels()
        )));
    }
    let acq = *subject.acquisition();
    let dt = acq.dt();
    let axis = cfg.axis;
    let prerun = (cfg.prerun_s * acq.fs).round() as usize;
    let timeout = (cfg.test_timeout_s * acq.fs).round() as usize;

    let mut targets_rng = rng_from_seed(derive_seed(seed, 1));
    let mut stream = subject.stream(derive_seed(seed, 2));
    let mut window = LagWindow::new(model.n_channels(), model.n_lags());
    let mut rec = Recording::with_capacity(acq, prerun + cfg.trials_per_run * timeout);

    let split = |intent: f64| match axis {
        Axis::X => (intent, 0.0),
        Axis::Y => (0.0, intent),
    };
    let kin = |vel: f64, pos: f64| match axis {
        Axis::X => Kinematics {
            u: vel,
            x: pos,
            ..Kinematics::default()
        },
        Axis::Y => Kinematics {
            v: vel,
            y: pos,
            ..Kinematics::default()
        },
    };

    let mut step = |intent: f64, cursor: &mut f64, annotation: Annotation, rec: &mut Recording| -> Result<()> {
        let (iu, iv) = split(intent);
        let frame = stream.next_frame(iu, iv);
        window.push(frame.clone())?;
        let vel = if window.is_warm() {
            model.predict(&window)?.get(axis)
        } else {
            0.0
        };
        *cursor = (*cursor + vel * dt).clamp(-1.0, 1.0);
        // Labels are the decoded cursor kinematics.
        rec.push(&frame.channels, kin(vel, *cursor), annotation)
    };

    let mut cursor = 0.0;
    for _ in 0..prerun {
        step(0.0, &mut cursor, Annotation::PRERUN, &mut rec)?;
    }

    let mut trials = Vec::with_capacity(cfg.trials_per_run);
    for _ in 0..cfg.trials_per_run {
        let side = TargetSide::for_axis(axis, targets_rng.random_bool(0.5));
        let target = side.sign() * cfg.target_center;
        cursor = 0.0;
        let start_index = rec.len();
        let mut trace = Vec::with_capacity(timeout);
        let mut outcome = Outcome::Timeout;
        let mut time_to_hit_s = None;
        for i in 0..timeout {
            let intent = policy.intend(cursor, target);
            step(intent, &mut cursor, Annotation::test(side), &mut rec)?;
            trace.push(cursor);
            if (cursor - target).abs() <= cfg.target_halfwidth {
                outcome = Outcome::Hit;
                time_to_hit_s = Some((i + 1) as f64 * dt);
                break;
            }
        }
        trials.push(Trial {
            target: side,
            trace,
            outcome,
            time_to_hit_s,
            start_index,
            fs: acq.fs,
        });
    }
    Ok(TestPhase { trials, recording: rec })
}

/// Table-style success statistics across runs.
#[derive(Clone, Debug, PartialEq)]
pub struct RunStats {
    /// Success fraction of each run, in input order.
    pub per_run: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (n - 1) of the per-run rates; zero for one run.
    pub std: f64,
    /// False when only one run was given and the spread is undefined.
    pub std_defined: bool,
    pub n_trials: usize,
    pub n_hits: usize,
}

impl RunStats {
    pub fn n_runs(&self) -> usize {
        self.per_run.len()
    }

    /// Statistics from `(hits, trials)` per run.
    pub fn from_counts(counts: &[(usize, usize)]) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::validation("no runs to summarize"));
        }
        if counts.iter().any(|&(h, n)| n == 0 || h > n) {
            return Err(Error::validation(
                "each run needs 0 <= hits <= trials and at least one trial",
            ));
        }
        let per_run: Vec<f64> = counts.iter().map(|&(h, n)| h as f64 / n as f64).collect();
        // Sum in sorted order so the result does not depend on run order.
        let mut sorted = per_run.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let mean = sorted.iter().sum::<f64>() / n;
        let (std, std_defined) = if sorted.len() > 1 {
            let ss = sorted.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>();
            ((ss / (n - 1.0)).sqrt(), true)
        } else {
            (0.0, false)
        };
        Ok(Self {
            per_run,
            mean,
            std,
            std_defined,
            n_trials: counts.iter().map(|c| c.1).sum(),
            n_hits: counts.iter().map(|c| c.0).sum(),
        })
    }
}

pub fn compute_stats(runs: &[Vec<Trial>]) -> Result<RunStats> {
    let counts: Vec<(usize, usize)> = runs
        .iter()
        .map(|run| (run.iter().filter(|t| t.is_hit()).count(), run.len()))
        .collect();
    RunStats::from_counts(&counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::AcquisitionConfig;

    fn subject(sigma: f64) -> SyntheticSubject {
        SyntheticSubject::random(AcquisitionConfig::default(), 5, sigma, 21).unwrap()
    }

    #[test]
    fn training_lengths() {
        let s = subject(1.0);
        let cfg = SessionConfig {
            n_training_trials: 1,
            trial_duration_s: 1.0,
            ..SessionConfig::default()
        };
        assert_eq!(run_training_phase(&cfg, &s, 0).unwrap().len(), 128);
        let cfg = SessionConfig {
            n_training_trials: 2,
            trial_duration_s: 3.0,
            ..SessionConfig::default()
        };
        let rec = run_training_phase(&cfg, &s, 0).unwrap();
        assert_eq!(rec.len(), 768);
        assert_eq!(rec, run_training_phase(&cfg, &s, 0).unwrap());
    }

    #[test]
    fn one_axis_session_gives_one_axis_model() {
        let s = subject(1.0);
        let cfg = SessionConfig {
            n_training_trials: 1,
            trial_duration_s: 10.0,
            axis: Axis::Y,
            ..SessionConfig::default()
        };
        let rec = run_training_phase(&cfg, &s, 4).unwrap();
        let m = calibrate(&rec, 5, &FitOptions::default()).unwrap();
        assert_eq!(m.axes().collect::<Vec<_>>(), vec![Axis::Y]);
        assert_eq!(m.provenance["recording_hash"], recording_hash(&rec));
    }

    #[test]
    fn zero_model_times_out() {
        let s = subject(0.5);
        let m = DecoderModel::zeros(14, 5, &[Axis::X]);
        let cfg = SessionConfig::default();
        let phase = run_test_phase(&m, &s, &IntentPolicy::default(), &cfg, 3).unwrap();
        assert_eq!(phase.trials.len(), 6);
        for t in &phase.trials {
            assert_eq!(t.outcome, Outcome::Timeout);
            assert_eq!(t.elapsed_s(), cfg.test_timeout_s);
            assert!(t.trace.iter().all(|&p| p == 0.0));
        }
        let stats = compute_stats(&[phase.trials]).unwrap();
        assert_eq!(stats.mean, 0.0);
    }

    #[test]
    fn axis_mismatch_is_config_error() {
        let m = DecoderModel::zeros(14, 5, &[Axis::Y]);
        let err = run_test_phase(
            &m,
            &subject(0.1),
            &IntentPolicy::default(),
            &SessionConfig::default(),
            0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn table_vertical_row() {
        let s = RunStats::from_counts(&[(6, 6), (5, 6), (5, 6), (5, 6), (4, 6)]).unwrap();
        assert!((s.mean - 25.0 / 30.0).abs() < 1e-15);
        // sample std of {1, 5/6, 5/6, 5/6, 4/6} = sqrt((1/36 + 1/36) / 4) = sqrt(1/72)
        assert!((s.std - (1.0f64 / 72.0).sqrt()).abs() < 1e-15);
        assert_eq!(s.n_trials, 30);
    }

    #[test]
    fn table_horizontal_row() {
        let s = RunStats::from_counts(&[(6, 6); 4]).unwrap();
        assert_eq!(s.mean, 1.0);
        assert_eq!(s.std, 0.0);
        assert!(s.std_defined);
        assert_eq!(s.n_trials, 24);
    }

    #[test]
    fn single_run_flags_spread() {
        let s = RunStats::from_counts(&[(3, 6)]).unwrap();
        assert_eq!(s.std, 0.0);
        assert!(!s.std_defined);
    }

    #[test]
    fn empty_stats_rejected() {
        assert!(compute_stats(&[]).is_err());
        assert!(compute_stats(&[vec![]]).is_err());
    }

    #[test]
    fn config_validation() {
        let bad = SessionConfig {
            target_halfwidth: 1.0,
            ..SessionConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SessionConfig {
            trials_per_run: 0,
            ..SessionConfig::default()
        };
        assert!(bad.validate().is_err());
        assert_ne!(
            SessionConfig::default().config_hash(),
            SessionConfig::for_axis(Axis::Y).config_hash()
        );
    }
}
