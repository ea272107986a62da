//! `kinebci` subcommands: synth, fit, eval, simulate, replay.
//!
//! Exit codes: 0 success, 2 usage, 3 data or validation, 4 numerical
//! (rank-deficient design).

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::thread;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kinebci_core::decoder::{build_design, evaluate, fit, FitOptions};
use kinebci_core::gesture::{self, ReplayConfig};
use kinebci_core::io;
use kinebci_core::protocol::{self, compute_stats, run_test_phase, run_training_phase, SessionConfig};
use kinebci_core::recording::Axis;
use kinebci_core::signal::AcquisitionConfig;
use kinebci_core::synth::{self, derive_seed, IntentPolicy, SyntheticSubject};
use kinebci_core::{DecoderModel, Error, Recording};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;

pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::RankDeficient { .. } => EXIT_NUMERICAL,
        _ => EXIT_DATA,
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "kinebci",
    version,
    about = "Decode imagined cursor kinematics from (synthetic) EEG"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a training-phase recording from a synthetic subject.
    Synth(SynthArgs),
    /// Calibrate a decoder on a recording.
    Fit(FitArgs),
    /// Compare decoded and recorded velocity.
    Eval(EvalArgs),
    /// Run closed-loop test phases and write a success-rate report.
    Simulate(SimulateArgs),
    /// Turn recorded cursor positions into a gesture command stream.
    Replay(ReplayArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Direction {
    Horizontal,
    Vertical,
}

impl From<Direction> for Axis {
    fn from(d: Direction) -> Self {
        match d {
            Direction::Horizontal => Axis::X,
            Direction::Vertical => Axis::Y,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SynthMode {
    /// Pursuit velocity encoded into EEG by the subject.
    Forward,
    /// White-noise EEG relabelled by a random decoder (exactly recoverable).
    Reverse,
}

fn non_negative(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("expected a finite value >= 0, got {s}"))
    }
}

fn positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("expected a finite value > 0, got {s}"))
    }
}

/// Synthetic subject parameters shared by `synth` and `simulate`.
#[derive(Debug, Clone, Args)]
pub struct SubjectArgs {
    /// Noise standard deviation per channel, microvolts.
    #[arg(long, default_value = "2.0", value_parser = non_negative)]
    pub sigma: f64,
    /// Set sigma from a signal-to-noise power ratio instead.
    #[arg(long, value_parser = positive, conflicts_with = "sigma")]
    pub snr: Option<f64>,
    #[arg(long, default_value_t = 14)]
    pub channels: usize,
    /// Encoding lags of the subject.
    #[arg(long = "subject-lags", default_value_t = 5)]
    pub subject_lags: usize,
    /// Pass synthesized channels through the acquisition filter chain.
    #[arg(long)]
    pub acquisition_filter: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, env = "KINEBCI_SEED")]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "horizontal")]
    pub axis: Direction,
    #[arg(long, default_value_t = 5)]
    pub trials: usize,
    /// Seconds per training trial.
    #[arg(long, default_value = "60", value_parser = positive)]
    pub trial_duration: f64,
    #[arg(long, value_enum, default_value = "forward")]
    pub mode: SynthMode,
    #[command(flatten)]
    pub subject: SubjectArgs,
    /// Decoder lags of the truth model in reverse mode.
    #[arg(long, default_value_t = 5)]
    pub lags: usize,
    /// Where to write the reverse-mode truth model.
    #[arg(long)]
    pub truth_out: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub recording: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "0", value_parser = non_negative)]
    pub ridge: f64,
    #[arg(long)]
    pub standardize: bool,
    #[arg(long, default_value_t = 5)]
    pub lags: usize,
    /// Also fit these ridge weights and log their weight norms.
    #[arg(long, value_delimiter = ',', value_parser = non_negative)]
    pub sweep: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub recording: PathBuf,
    /// CSV of observed and decoded velocity per sample.
    #[arg(long)]
    pub plot_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Base seed; run r uses seed + r.
    #[arg(long, env = "KINEBCI_SEED")]
    pub seed: u64,
    /// Seed the subject was synthesized with (defaults to --seed).
    #[arg(long)]
    pub subject_seed: Option<u64>,
    #[command(flatten)]
    pub subject: SubjectArgs,
    #[arg(long, value_enum, default_value = "horizontal")]
    pub axis: Direction,
    #[arg(long, default_value_t = 4)]
    pub runs: usize,
    #[arg(long, default_value_t = 6)]
    pub trials_per_run: usize,
    #[arg(long, default_value = "15", value_parser = positive)]
    pub timeout: f64,
    #[arg(long, default_value = "0.1", value_parser = positive)]
    pub halfwidth: f64,
    #[arg(long, default_value = "2", value_parser = non_negative)]
    pub prerun: f64,
    #[arg(long, default_value = "2", value_parser = positive)]
    pub gain: f64,
    #[arg(long, default_value = "0.5", value_parser = positive)]
    pub cap: f64,
    #[arg(long)]
    pub report_out: Option<PathBuf>,
    /// Per-trial outcome CSV.
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
    /// Directory for one recording CSV per run (run<r>.csv).
    #[arg(long)]
    pub recording_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub recording: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Commands per second.
    #[arg(long, default_value = "8", value_parser = positive)]
    pub rate: f64,
    #[arg(long, default_value = "0", value_parser = non_negative)]
    pub dead_zone: f64,
    #[arg(long, value_enum, default_value = "horizontal")]
    pub axis: Direction,
}

pub fn run(cli: Cli) -> Result<(), Error> {
    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::Synth(a) => cmd_synth(&a, &mut out),
        Command::Fit(a) => cmd_fit(&a, &mut out),
        Command::Eval(a) => cmd_eval(&a, &mut out),
        Command::Simulate(a) => cmd_simulate(&a, &mut out),
        Command::Replay(a) => cmd_replay(&a, &mut out),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<String, Error> {
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(bytes)?;
    f.flush()?;
    Ok(io::sha256_hex(bytes))
}

fn load_recording(path: &Path) -> Result<Recording, Error> {
    io::read_recording(BufReader::new(File::open(path)?))
}

fn load_model(path: &Path) -> Result<DecoderModel, Error> {
    io::read_model(BufReader::new(File::open(path)?))
}

/// The subject is a pure function of its seed and parameters, so `synth`
/// and `simulate` reconstruct the same one independently.
pub fn build_subject(args: &SubjectArgs, seed: u64, axis: Axis) -> Result<SyntheticSubject, Error> {
    let acq = AcquisitionConfig::with_channels(args.channels);
    let mut subject = SyntheticSubject::random(acq, args.subject_lags, args.sigma, seed)?;
    if let Some(snr) = args.snr {
        subject = subject.with_snr_on_pursuit(snr, axis)?;
    }
    subject.filter_acquisition = args.acquisition_filter;
    Ok(subject)
}

pub fn cmd_synth(a: &SynthArgs, out: &mut dyn Write) -> Result<(), Error> {
    let axis = Axis::from(a.axis);
    let cfg = SessionConfig {
        n_training_trials: a.trials,
        trial_duration_s: a.trial_duration,
        axis,
        ..SessionConfig::default()
    };
    let rec = match a.mode {
        SynthMode::Forward => {
            let subject = build_subject(&a.subject, a.seed, axis)?;
            run_training_phase(&cfg, &subject, a.seed)?
        }
        SynthMode::Reverse => {
            cfg.validate()?;
            let acq = AcquisitionConfig::with_channels(a.subject.channels);
            let len = (a.trials as f64 * a.trial_duration * acq.fs).round() as usize;
            let eeg = synth::white_noise_recording(acq, len, 10.0, derive_seed(a.seed, 0xe0))?;
            let mut truth = synth::random_model(a.subject.channels, a.lags, &[axis], 0.01, derive_seed(a.seed, 0x7a));
            truth.provenance.insert("seed".into(), a.seed.to_string());
            truth.provenance.insert("role".into(), "truth".into());
            if let Some(p) = &a.truth_out {
                write_file(p, &io::model_to_bytes(&truth))?;
            }
            synth::reverse_label(&eeg, &truth)?
        }
    };
    let hash = write_file(&a.out, &io::recording_to_bytes(&rec))?;
    writeln!(out, "rows {}", rec.len())?;
    writeln!(out, "sha256 {hash}  {}", a.out.display())?;
    Ok(())
}

pub fn cmd_fit(a: &FitArgs, out: &mut dyn Write) -> Result<(), Error> {
    let rec = load_recording(&a.recording)?;
    let opts = FitOptions {
        ridge: a.ridge,
        standardize: a.standardize,
        axes: None,
    };
    if !a.sweep.is_empty() {
        let design = build_design(&rec, a.lags)?;
        for &ridge in &a.sweep {
            let m = fit(&design, &FitOptions { ridge, ..opts.clone() })?;
            writeln!(out, "sweep ridge={ridge:e} weight_norm={:.12e}", m.weight_norm())?;
        }
    }
    let mut model = protocol::calibrate(&rec, a.lags, &opts)?;
    let bytes = fs::read(&a.recording)?;
    model.provenance.insert("source_sha256".into(), io::sha256_hex(&bytes));
    let hash = write_file(&a.out, &io::model_to_bytes(&model))?;
    let axes: Vec<&str> = model.axes().map(Axis::name).collect();
    writeln!(out, "axes {}", axes.join(" "))?;
    writeln!(out, "coefficients_per_axis {}", model.n_coefficients())?;
    writeln!(out, "weight_norm {:.12e}", model.weight_norm())?;
    writeln!(out, "sha256 {hash}  {}", a.out.display())?;
    Ok(())
}

pub fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> Result<(), Error> {
    let model = load_model(&a.model)?;
    let rec = load_recording(&a.recording)?;
    let report = evaluate(&model, &rec)?;
    writeln!(out, "samples {}", report.n_samples)?;
    for ax in &report.axes {
        let r = ax.r.map_or("undefined".to_string(), |r| format!("{r:.9}"));
        writeln!(out, "axis {} r={r} rmse={:.9e}", ax.axis, ax.rmse)?;
    }
    if let Some(p) = &a.plot_out {
        let hash = write_file(p, io::format_plot_data(&report).as_bytes())?;
        writeln!(out, "sha256 {hash}  {}", p.display())?;
    }
    Ok(())
}

pub fn cmd_simulate(a: &SimulateArgs, out: &mut dyn Write) -> Result<(), Error> {
    let model = load_model(&a.model)?;
    let axis = Axis::from(a.axis);
    let subject = build_subject(&a.subject, a.subject_seed.unwrap_or(a.seed), axis)?;
    let policy = IntentPolicy::new(a.gain, a.cap)?;
    let cfg = SessionConfig {
        axis,
        trials_per_run: a.trials_per_run,
        test_timeout_s: a.timeout,
        target_halfwidth: a.halfwidth,
        prerun_s: a.prerun,
        ..SessionConfig::default()
    };
    cfg.validate()?;
    if a.runs == 0 {
        return Err(Error::Validation("at least one run is required".into()));
    }

    let seeds: Vec<u64> = (0..a.runs as u64).map(|r| a.seed.wrapping_add(r)).collect();
    // Runs are independent; results are gathered back in seed order.
    let phases = thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                let (model, subject, policy, cfg) = (&model, &subject, &policy, &cfg);
                scope.spawn(move || run_test_phase(model, subject, policy, cfg, seed))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect::<Result<Vec<_>, Error>>()
    })?;

    let runs: Vec<_> = phases.iter().map(|p| p.trials.clone()).collect();
    let stats = compute_stats(&runs)?;
    let report = io::format_report(axis, &stats, a.trials_per_run);
    out.write_all(report.as_bytes())?;
    if let Some(p) = &a.report_out {
        let hash = write_file(p, report.as_bytes())?;
        writeln!(out, "sha256 {hash}  {}", p.display())?;
    }
    if let Some(p) = &a.trace_out {
        let rows: Vec<(u64, Vec<_>)> = seeds.iter().copied().zip(runs).collect();
        let hash = write_file(p, io::format_trials(&rows).as_bytes())?;
        writeln!(out, "sha256 {hash}  {}", p.display())?;
    }
    if let Some(dir) = &a.recording_dir {
        fs::create_dir_all(dir)?;
        for (r, phase) in phases.iter().enumerate() {
            let p = dir.join(format!("run{r}.csv"));
            let hash = write_file(&p, &io::recording_to_bytes(&phase.recording))?;
            writeln!(out, "sha256 {hash}  {}", p.display())?;
        }
    }
    Ok(())
}

pub fn cmd_replay(a: &ReplayArgs, out: &mut dyn Write) -> Result<(), Error> {
    let rec = load_recording(&a.recording)?;
    let cfg = ReplayConfig {
        command_rate_hz: a.rate,
        dead_zone: a.dead_zone,
        axis: a.axis.into(),
    };
    let replayed = gesture::replay(&rec, &cfg)?;
    let cmds: Vec<_> = replayed.iter().map(|c| c.command).collect();
    let changes = replayed.iter().filter(|c| !c.keepalive).count();
    let hash = write_file(&a.out, &gesture::encode_stream(&cmds))?;
    writeln!(out, "commands {} changes {changes}", cmds.len())?;
    writeln!(out, "sha256 {hash}  {}", a.out.display())?;
    Ok(())
}
