//! Python bindings: `import kinebci`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;

use kinebci_core::decoder::{build_design, evaluate as core_evaluate, FitOptions};
use kinebci_core::gesture::{self, GestureCommand, GestureKind, ReplayConfig};
use kinebci_core::io;
use kinebci_core::protocol::{self, RunStats, SessionConfig, Trial};
use kinebci_core::recording::Axis;
use kinebci_core::signal::AcquisitionConfig;
use kinebci_core::synth::{IntentPolicy, SyntheticSubject};
use kinebci_core::{DecoderModel, Error, Recording};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyIOError, PyIndexError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

create_exception!(
    kinebci,
    RankDeficientError,
    PyException,
    "Design matrix columns are linearly dependent."
);

fn to_py(err: Error) -> PyErr {
    match err {
        Error::RankDeficient { .. } => RankDeficientError::new_err(err.to_string()),
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse_axis(name: &str) -> PyResult<Axis> {
    name.parse::<Axis>().map_err(to_py)
}

fn open(path: &str) -> PyResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| PyIOError::new_err(format!("{path}: {e}")))
}

fn save(path: &str, bytes: &[u8]) -> PyResult<String> {
    std::fs::write(path, bytes).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
    Ok(io::sha256_hex(bytes))
}

/// Multichannel EEG samples with cursor kinematics and phase annotations.
#[pyclass(name = "Recording", module = "kinebci", skip_from_py_object)]
#[derive(Clone)]
pub struct PyRecording {
    inner: Recording,
}

#[pymethods]
impl PyRecording {
    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        let inner = io::read_recording(open(path)?).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Writes the CSV file and returns its sha256.
    fn write(&self, path: &str) -> PyResult<String> {
        save(path, &io::recording_to_bytes(&self.inner))
    }

    fn sha256(&self) -> String {
        io::sha256_hex(&io::recording_to_bytes(&self.inner))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn n_channels(&self) -> usize {
        self.inner.n_channels()
    }

    #[getter]
    fn fs(&self) -> f64 {
        self.inner.config().fs
    }

    #[getter]
    fn duration_s(&self) -> f64 {
        self.inner.duration_s()
    }

    fn channels(&self, t: usize) -> PyResult<Vec<f64>> {
        if t >= self.inner.len() {
            return Err(PyIndexError::new_err(format!("sample {t} out of range")));
        }
        Ok(self.inner.channels(t).to_vec())
    }

    fn velocity(&self, axis: &str) -> PyResult<Vec<f64>> {
        Ok(self.inner.velocity(parse_axis(axis)?).to_vec())
    }

    fn position(&self, axis: &str) -> PyResult<Vec<f64>> {
        Ok(self.inner.position(parse_axis(axis)?).to_vec())
    }

    fn __repr__(&self) -> String {
        format!(
            "Recording(samples={}, n_channels={}, fs={})",
            self.inner.len(),
            self.n_channels(),
            self.fs()
        )
    }
}

/// Per-axis time-lagged linear decoder.
#[pyclass(name = "DecoderModel", module = "kinebci", skip_from_py_object)]
#[derive(Clone)]
pub struct PyDecoderModel {
    inner: DecoderModel,
}

#[pymethods]
impl PyDecoderModel {
    #[new]
    #[pyo3(signature = (n_channels = 14, n_lags = 5, axes = vec!["x".to_string()]))]
    fn new(n_channels: usize, n_lags: usize, axes: Vec<String>) -> PyResult<Self> {
        let axes = axes.iter().map(|a| parse_axis(a)).collect::<PyResult<Vec<_>>>()?;
        Ok(Self {
            inner: DecoderModel::zeros(n_channels, n_lags, &axes),
        })
    }

    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        let inner = io::read_model(open(path)?).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn write(&self, path: &str) -> PyResult<String> {
        save(path, &io::model_to_bytes(&self.inner))
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &io::model_to_bytes(&self.inner))
    }

    #[getter]
    fn n_channels(&self) -> usize {
        self.inner.n_channels()
    }

    #[getter]
    fn n_lags(&self) -> usize {
        self.inner.n_lags()
    }

    #[getter]
    fn axes(&self) -> Vec<String> {
        self.inner.axes().map(|a| a.name().to_string()).collect()
    }

    #[getter]
    fn provenance(&self) -> BTreeMap<String, String> {
        self.inner.provenance.clone()
    }

    fn intercept(&self, axis: &str) -> PyResult<f64> {
        let a = parse_axis(axis)?;
        self.inner
            .axis(a)
            .map(|m| m.intercept)
            .ok_or_else(|| PyValueError::new_err(format!("model has no {a} axis")))
    }

    fn set_intercept(&mut self, axis: &str, value: f64) -> PyResult<()> {
        let a = parse_axis(axis)?;
        let m = self
            .inner
            .axis_mut(a)
            .ok_or_else(|| PyValueError::new_err(format!("model has no {a} axis")))?;
        m.intercept = value;
        Ok(())
    }

    fn weight(&self, axis: &str, channel: usize, lag: usize) -> PyResult<f64> {
        self.inner
            .weight(parse_axis(axis)?, channel, lag)
            .ok_or_else(|| PyIndexError::new_err("no such axis, channel or lag"))
    }

    fn set_weight(&mut self, axis: &str, channel: usize, lag: usize, value: f64) -> PyResult<()> {
        self.inner
            .set_weight(parse_axis(axis)?, channel, lag, value)
            .map_err(to_py)
    }

    /// Intercept followed by weights in design-column order.
    fn design_coefficients(&self, axis: &str) -> PyResult<Vec<f64>> {
        let a = parse_axis(axis)?;
        self.inner
            .design_coefficients(a)
            .ok_or_else(|| PyValueError::new_err(format!("model has no {a} axis")))
    }

    fn weight_norm(&self) -> f64 {
        self.inner.weight_norm()
    }

    /// Decoded velocity for every sample with a full lag history.
    fn predict(&self, recording: PyRef<'_, PyRecording>, axis: &str) -> PyResult<Vec<f64>> {
        self.inner
            .predict_recording(&recording.inner, parse_axis(axis)?)
            .map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "DecoderModel(n_channels={}, n_lags={}, axes={:?})",
            self.n_channels(),
            self.n_lags(),
            self.axes()
        )
    }
}

/// Synthetic subject whose EEG is a lagged linear encoding of intended velocity plus noise.
#[pyclass(name = "SyntheticSubject", module = "kinebci", skip_from_py_object)]
#[derive(Clone)]
pub struct PySubject {
    inner: SyntheticSubject,
}

#[pymethods]
impl PySubject {
    #[new]
    #[pyo3(signature = (seed, sigma = 2.0, snr = None, n_channels = 14, n_lags = 5, axis = "x", acquisition_filter = false))]
    fn new(
        seed: u64,
        sigma: f64,
        snr: Option<f64>,
        n_channels: usize,
        n_lags: usize,
        axis: &str,
        acquisition_filter: bool,
    ) -> PyResult<Self> {
        let acq = AcquisitionConfig::with_channels(n_channels);
        let mut inner = SyntheticSubject::random(acq, n_lags, sigma, seed).map_err(to_py)?;
        if let Some(snr) = snr {
            inner = inner.with_snr_on_pursuit(snr, parse_axis(axis)?).map_err(to_py)?;
        }
        inner.filter_acquisition = acquisition_filter;
        Ok(Self { inner })
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma()
    }

    #[getter]
    fn n_channels(&self) -> usize {
        self.inner.n_channels()
    }

    fn weights(&self, axis: &str) -> PyResult<Vec<f64>> {
        Ok(self.inner.weights(parse_axis(axis)?).to_vec())
    }
}

fn session(axis: &str, n_trials: usize, trial_duration_s: f64, trials_per_run: usize) -> PyResult<SessionConfig> {
    let cfg = SessionConfig {
        n_training_trials: n_trials,
        trial_duration_s,
        trials_per_run,
        ..SessionConfig::for_axis(parse_axis(axis)?)
    };
    cfg.validate().map_err(to_py)?;
    Ok(cfg)
}

/// Training-phase recording: pursuit trials encoded by `subject`.
#[pyfunction]
#[pyo3(signature = (subject, seed, axis = "x", n_trials = 5, trial_duration_s = 60.0))]
fn training_phase(
    subject: PyRef<'_, PySubject>,
    seed: u64,
    axis: &str,
    n_trials: usize,
    trial_duration_s: f64,
) -> PyResult<PyRecording> {
    let cfg = session(axis, n_trials, trial_duration_s, 6)?;
    let inner = protocol::run_training_phase(&cfg, &subject.inner, seed).map_err(to_py)?;
    Ok(PyRecording { inner })
}

#[pyfunction]
#[pyo3(signature = (recording, n_lags = 5, ridge = 0.0, standardize = false))]
fn fit(recording: PyRef<'_, PyRecording>, n_lags: usize, ridge: f64, standardize: bool) -> PyResult<PyDecoderModel> {
    let opts = FitOptions {
        ridge,
        standardize,
        axes: None,
    };
    let inner = protocol::calibrate(&recording.inner, n_lags, &opts).map_err(to_py)?;
    Ok(PyDecoderModel { inner })
}

/// (rows, width) of the lagged design matrix.
#[pyfunction]
#[pyo3(signature = (recording, n_lags = 5))]
fn design_shape(recording: PyRef<'_, PyRecording>, n_lags: usize) -> PyResult<(usize, usize)> {
    let d = build_design(&recording.inner, n_lags).map_err(to_py)?;
    Ok((d.rows(), d.width()))
}

/// Per-axis {"r", "rmse", "observed", "decoded"}; r is None when undefined.
#[pyfunction]
fn evaluate<'py>(
    py: Python<'py>,
    model: PyRef<'_, PyDecoderModel>,
    recording: PyRef<'_, PyRecording>,
) -> PyResult<Bound<'py, PyDict>> {
    let report = core_evaluate(&model.inner, &recording.inner).map_err(to_py)?;
    let out = PyDict::new(py);
    for ax in report.axes {
        let d = PyDict::new(py);
        d.set_item("r", ax.r)?;
        d.set_item("rmse", ax.rmse)?;
        d.set_item("observed", ax.observed)?;
        d.set_item("decoded", ax.decoded)?;
        out.set_item(ax.axis.name(), d)?;
    }
    Ok(out)
}

fn trial_dict<'py>(py: Python<'py>, t: &Trial) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("target", t.target.code())?;
    d.set_item("hit", t.is_hit())?;
    d.set_item("time_to_hit_s", t.time_to_hit_s)?;
    d.set_item("start_index", t.start_index)?;
    d.set_item("trace", t.trace.clone())?;
    Ok(d)
}

fn trial_from_dict(d: &Bound<'_, PyDict>) -> PyResult<Trial> {
    let hit: bool = d
        .get_item("hit")?
        .ok_or_else(|| PyValueError::new_err("trial needs a 'hit' key"))?
        .extract()?;
    Ok(Trial {
        target: kinebci_core::TargetSide::Right,
        trace: Vec::new(),
        outcome: if hit {
            protocol::Outcome::Hit
        } else {
            protocol::Outcome::Timeout
        },
        time_to_hit_s: None,
        start_index: 0,
        fs: kinebci_core::signal::DEFAULT_FS,
    })
}

/// Closed-loop test run. Returns (trials, recording).
#[pyfunction]
#[pyo3(signature = (model, subject, seed, axis = "x", trials_per_run = 6, gain = 2.0, cap = 0.5))]
#[allow(clippy::too_many_arguments)]
fn test_phase<'py>(
    py: Python<'py>,
    model: PyRef<'_, PyDecoderModel>,
    subject: PyRef<'_, PySubject>,
    seed: u64,
    axis: &str,
    trials_per_run: usize,
    gain: f64,
    cap: f64,
) -> PyResult<(Vec<Bound<'py, PyDict>>, PyRecording)> {
    let cfg = session(axis, 5, 60.0, trials_per_run)?;
    let policy = IntentPolicy::new(gain, cap).map_err(to_py)?;
    let phase = protocol::run_test_phase(&model.inner, &subject.inner, &policy, &cfg, seed).map_err(to_py)?;
    let trials = phase
        .trials
        .iter()
        .map(|t| trial_dict(py, t))
        .collect::<PyResult<_>>()?;
    Ok((trials, PyRecording { inner: phase.recording }))
}

fn stats_dict<'py>(py: Python<'py>, s: &RunStats) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("per_run", s.per_run.clone())?;
    d.set_item("mean", s.mean)?;
    d.set_item("std", s.std)?;
    d.set_item("std_defined", s.std_defined)?;
    d.set_item("n_trials", s.n_trials)?;
    d.set_item("n_hits", s.n_hits)?;
    Ok(d)
}

/// Success statistics over runs of trial dicts (only the "hit" key is read).
#[pyfunction]
fn compute_stats<'py>(py: Python<'py>, runs: Vec<Vec<Bound<'py, PyDict>>>) -> PyResult<Bound<'py, PyDict>> {
    let runs = runs
        .iter()
        .map(|run| run.iter().map(trial_from_dict).collect::<PyResult<Vec<_>>>())
        .collect::<PyResult<Vec<_>>>()?;
    let stats = protocol::compute_stats(&runs).map_err(to_py)?;
    stats_dict(py, &stats)
}

/// Success statistics from (hits, trials) pairs.
#[pyfunction]
fn stats_from_counts<'py>(py: Python<'py>, counts: Vec<(usize, usize)>) -> PyResult<Bound<'py, PyDict>> {
    stats_dict(py, &RunStats::from_counts(&counts).map_err(to_py)?)
}

/// Gesture code ("R", "L" or "N") for a cursor position.
#[pyfunction]
#[pyo3(signature = (x, dead_zone = 0.0, prev = None))]
fn map_position(x: f64, dead_zone: f64, prev: Option<&str>) -> PyResult<String> {
    let prev = match prev {
        Some(code) => Some(
            GestureKind::from_code(code).ok_or_else(|| PyValueError::new_err(format!("bad gesture code {code:?}")))?,
        ),
        None => None,
    };
    Ok(gesture::map_position(x, dead_zone, prev).code().to_string())
}

/// Replays recorded positions into (code, timestamp_ms, sample_index, keepalive) tuples.
#[pyfunction]
#[pyo3(signature = (recording, rate_hz = 8.0, dead_zone = 0.0, axis = "x"))]
fn replay(
    recording: PyRef<'_, PyRecording>,
    rate_hz: f64,
    dead_zone: f64,
    axis: &str,
) -> PyResult<Vec<(String, u64, usize, bool)>> {
    let cfg = ReplayConfig {
        command_rate_hz: rate_hz,
        dead_zone,
        axis: parse_axis(axis)?,
    };
    let cmds = gesture::replay(&recording.inner, &cfg).map_err(to_py)?;
    Ok(cmds
        .iter()
        .map(|c| {
            (
                c.command.kind.code().to_string(),
                c.command.timestamp_ms,
                c.sample_index,
                c.keepalive,
            )
        })
        .collect())
}

/// Wire bytes for (code, timestamp_ms) commands, framed by HELLO and BYE.
#[pyfunction]
fn encode_stream<'py>(py: Python<'py>, commands: Vec<(String, u64)>) -> PyResult<Bound<'py, PyBytes>> {
    let cmds = commands
        .iter()
        .map(|(code, ts)| {
            let kind = GestureKind::from_code(code)
                .ok_or_else(|| PyValueError::new_err(format!("bad gesture code {code:?}")))?;
            Ok(GestureCommand {
                kind,
                timestamp_ms: *ts,
            })
        })
        .collect::<PyResult<Vec<_>>>()?;
    Ok(PyBytes::new(py, &gesture::encode_stream(&cmds)))
}

#[pyfunction]
fn decode_stream(data: &[u8]) -> PyResult<Vec<(String, u64)>> {
    let cmds = gesture::decode_stream(data).map_err(to_py)?;
    Ok(cmds
        .iter()
        .map(|c| (c.kind.code().to_string(), c.timestamp_ms))
        .collect())
}

#[pymodule]
fn kinebci(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRecording>()?;
    m.add_class::<PyDecoderModel>()?;
    m.add_class::<PySubject>()?;
    m.add("RankDeficientError", m.py().get_type::<RankDeficientError>())?;
    m.add_function(wrap_pyfunction!(training_phase, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(design_shape, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(test_phase, m)?)?;
    m.add_function(wrap_pyfunction!(compute_stats, m)?)?;
    m.add_function(wrap_pyfunction!(stats_from_counts, m)?)?;
    m.add_function(wrap_pyfunction!(map_position, m)?)?;
    m.add_function(wrap_pyfunction!(replay, m)?)?;
    m.add_function(wrap_pyfunction!(encode_stream, m)?)?;
    m.add_function(wrap_pyfunction!(decode_stream, m)?)?;
    Ok(())
}
