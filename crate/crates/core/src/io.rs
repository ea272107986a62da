//! File formats: recording CSV, model text, run report and plot/trace CSVs.
//!
//! Recording CSV:
//!
//! ```text
//! # kinebci-recording v1 fs=<fs> n=<N>
//! t,ch0,..,ch{N-1},u,v,x,y,phase,target
//! ```
//!
//! Model file, one `key value...` item per line, numbers in scientific
//! notation with 17 significant digits:
//!
//! ```text
//! # kinebci-model
//! version 1
//! n_channels <N>
//! n_lags <K>
//! axes <x|y>...
//! provenance <key> <value>      (zero or more)
//! intercept <axis> <a0>
//! weights <axis> <b[0][0]> <b[0][1]> .. <b[N-1][K]>
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use sha2::{Digest, Sha256};

use crate::decoder::{AxisModel, DecoderModel, EvalReport};
use crate::error::{Error, Result};
use crate::protocol::{Outcome, RunStats, Trial};
use crate::recording::{Annotation, Axis, Kinematics, Phase, Recording};
use crate::signal::AcquisitionConfig;

pub const RECORDING_MAGIC: &str = "# kinebci-recording v1";
pub const MODEL_MAGIC: &str = "# kinebci-model";
pub const MODEL_VERSION: u32 = 1;
pub const REPORT_MAGIC: &str = "# kinebci-report v1";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::parse(line, e.to_string())
}

pub fn write_recording<W: Write>(sink: W, rec: &Recording) -> Result<()> {
    let mut sink = sink;
    let n = rec.n_channels();
    writeln!(sink, "{RECORDING_MAGIC} fs={} n={n}", rec.config().fs)?;
    let mut w = csv::Writer::from_writer(sink);
    let mut header: Vec<String> = vec!["t".into()];
    header.extend((0..n).map(|i| format!("ch{i}")));
    header.extend(["u", "v", "x", "y", "phase", "target"].map(String::from));
    w.write_record(&header).map_err(csv_err)?;
    let mut row: Vec<String> = Vec::with_capacity(n + 7);
    for t in 0..rec.len() {
        row.clear();
        row.push(t.to_string());
        row.extend(rec.channels(t).iter().map(|c| c.to_string()));
        let k = rec.kinematics(t);
        row.extend([k.u, k.v, k.x, k.y].iter().map(|c| c.to_string()));
        let a = rec.annotation(t);
        row.push(a.phase.name().into());
        row.push(a.target.map_or("none", |s| s.code()).into());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn recording_to_bytes(rec: &Recording) -> Vec<u8> {
    let mut buf = Vec::new();
    write_recording(&mut buf, rec).expect("writing to a Vec cannot fail");
    buf
}

fn parse_header_field(line: &str, key: &str) -> Result<String> {
    line.split_whitespace()
        .find_map(|tok| tok.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
        .map(str::to_owned)
        .ok_or_else(|| Error::parse(1, format!("recording header lacks {key}=")))
}

pub fn read_recording<R: BufRead>(mut source: R) -> Result<Recording> {
    let mut first = String::new();
    source.read_line(&mut first)?;
    let first = first.trim_end();
    if first.is_empty() {
        return Err(Error::validation("recording file is empty"));
    }
    if !first.starts_with(RECORDING_MAGIC) {
        return Err(Error::parse(1, "missing '# kinebci-recording v1' header"));
    }
    let fs: f64 = parse_header_field(first, "fs")?
        .parse()
        .map_err(|_| Error::parse(1, "bad fs"))?;
    let n: usize = parse_header_field(first, "n")?
        .parse()
        .map_err(|_| Error::parse(1, "bad channel count"))?;
    let cfg = AcquisitionConfig {
        fs,
        n_channels: n,
        ..AcquisitionConfig::default()
    };
    if fs.is_nan() || fs <= 0.0 || n == 0 {
        return Err(Error::parse(1, "fs and n must be positive"));
    }

    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let headers = r.headers().map_err(csv_err)?.clone();
    let mut expected = vec!["t".to_string()];
    expected.extend((0..n).map(|i| format!("ch{i}")));
    expected.extend(["u", "v", "x", "y", "phase", "target"].map(String::from));
    if headers.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::parse(
            2,
            format!("expected {} columns: {}", n + 7, expected.join(",")),
        ));
    }

    let mut rec = Recording::new(cfg);
    let mut ch = vec![0.0; n];
    for (i, row) in r.records().enumerate() {
        let row = row.map_err(csv_err)?;
        let line = i + 3;
        let num = |j: usize| -> Result<f64> {
            row[j]
                .parse::<f64>()
                .map_err(|_| Error::parse(line, format!("bad number {:?} in column {j}", &row[j])))
        };
        let t: usize = row[0].parse().map_err(|_| Error::parse(line, "bad sample index"))?;
        if t != i {
            return Err(Error::parse(line, format!("sample index {t} should be {i}")));
        }
        for (c, slot) in ch.iter_mut().enumerate() {
            *slot = num(1 + c)?;
        }
        let kin = Kinematics {
            u: num(n + 1)?,
            v: num(n + 2)?,
            x: num(n + 3)?,
            y: num(n + 4)?,
        };
        let phase: Phase = row[n + 5]
            .parse()
            .map_err(|e: Error| Error::parse(line, e.to_string()))?;
        let target = match &row[n + 6] {
            "none" => None,
            s => Some(s.parse().map_err(|e: Error| Error::parse(line, e.to_string()))?),
        };
        rec.push(&ch, kin, Annotation { phase, target })?;
    }
    Ok(rec)
}

fn sci(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_model<W: Write>(mut sink: W, model: &DecoderModel) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "{MODEL_MAGIC}");
    let _ = writeln!(s, "version {MODEL_VERSION}");
    let _ = writeln!(s, "n_channels {}", model.n_channels());
    let _ = writeln!(s, "n_lags {}", model.n_lags());
    let axes: Vec<&str> = model.axes().map(Axis::name).collect();
    let _ = writeln!(s, "axes {}", axes.join(" "));
    for (k, v) in &model.provenance {
        if k.contains(char::is_whitespace) || v.contains('\n') {
            return Err(Error::validation(format!("provenance entry {k:?} cannot be written")));
        }
        let _ = writeln!(s, "provenance {k} {v}");
    }
    for a in model.axis_models() {
        let _ = writeln!(s, "intercept {} {}", a.axis, sci(a.intercept));
        let w: Vec<String> = a.weights.iter().map(|&w| sci(w)).collect();
        let _ = writeln!(s, "weights {} {}", a.axis, w.join(" "));
    }
    sink.write_all(s.as_bytes())?;
    sink.flush()?;
    Ok(())
}

pub fn model_to_bytes(model: &DecoderModel) -> Vec<u8> {
    let mut buf = Vec::new();
    write_model(&mut buf, model).expect("writing to a Vec cannot fail");
    buf
}

pub fn read_model<R: BufRead>(source: R) -> Result<DecoderModel> {
    let mut version = None;
    let mut n_channels = None;
    let mut n_lags = None;
    let mut axes: Vec<Axis> = Vec::new();
    let mut provenance = BTreeMap::new();
    let mut intercepts: BTreeMap<Axis, f64> = BTreeMap::new();
    let mut weights: BTreeMap<Axis, Vec<f64>> = BTreeMap::new();
    let mut saw_magic = false;

    for (i, line) in source.lines().enumerate() {
        let line = line?;
        let no = i + 1;
        if no == 1 {
            if line.trim_end() != MODEL_MAGIC {
                return Err(Error::parse(1, "missing '# kinebci-model' header"));
            }
            saw_magic = true;
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (key, rest) = line.split_once(' ').unwrap_or((line.as_str(), ""));
        let num = |s: &str| -> Result<f64> { s.parse().map_err(|_| Error::parse(no, format!("bad number {s:?}"))) };
        let int = |s: &str| -> Result<usize> { s.parse().map_err(|_| Error::parse(no, format!("bad integer {s:?}"))) };
        let axis_of = |s: &str| -> Result<Axis> { s.parse().map_err(|e: Error| Error::parse(no, e.to_string())) };
        match key {
            "version" => version = Some(int(rest)?),
            "n_channels" => n_channels = Some(int(rest)?),
            "n_lags" => n_lags = Some(int(rest)?),
            "axes" => {
                axes = rest.split_whitespace().map(axis_of).collect::<Result<_>>()?;
            }
            "provenance" => {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                provenance.insert(k.to_string(), v.to_string());
            }
            "intercept" => {
                let (a, v) = rest
                    .split_once(' ')
                    .ok_or_else(|| Error::parse(no, "intercept needs axis and value"))?;
                intercepts.insert(axis_of(a)?, num(v.trim())?);
            }
            "weights" => {
                let mut it = rest.split_whitespace();
                let a = axis_of(it.next().unwrap_or(""))?;
                weights.insert(a, it.map(num).collect::<Result<_>>()?);
            }
            other => return Err(Error::parse(no, format!("unknown key {other:?}"))),
        }
    }
    if !saw_magic {
        return Err(Error::validation("model file is empty"));
    }
    match version {
        Some(v) if v == MODEL_VERSION as usize => {}
        Some(v) => return Err(Error::validation(format!("unsupported model version {v}"))),
        None => return Err(Error::validation("model file lacks version")),
    }
    let n_channels = n_channels.ok_or_else(|| Error::validation("model file lacks n_channels"))?;
    let n_lags = n_lags.ok_or_else(|| Error::validation("model file lacks n_lags"))?;
    let mut parts = Vec::new();
    for axis in axes {
        let intercept = intercepts
            .remove(&axis)
            .ok_or_else(|| Error::validation(format!("missing intercept for {axis}")))?;
        let w = weights
            .remove(&axis)
            .ok_or_else(|| Error::validation(format!("missing weights for {axis}")))?;
        parts.push(AxisModel {
            axis,
            intercept,
            weights: w,
        });
    }
    if !intercepts.is_empty() || !weights.is_empty() {
        return Err(Error::validation("coefficients given for an axis not listed in 'axes'"));
    }
    let mut model = DecoderModel::from_parts(n_channels, n_lags, parts)?;
    model.provenance = provenance;
    Ok(model)
}

pub fn format_percent(fraction: f64) -> String {
    format!("{:.1}%", 100.0 * fraction)
}

/// Table-style run report.
pub fn format_report(axis: Axis, stats: &RunStats, trials_per_run: usize) -> String {
    let spread = if stats.std_defined {
        format_percent(stats.std)
    } else {
        "n/a".to_string()
    };
    let per_run: Vec<String> = stats.per_run.iter().map(|&r| format_percent(r)).collect();
    let mut s = String::new();
    let _ = writeln!(s, "{REPORT_MAGIC}");
    let _ = writeln!(s, "direction: {}", axis.direction());
    let _ = writeln!(s, "runs: {}", stats.n_runs());
    let _ = writeln!(s, "trials_per_run: {trials_per_run}");
    let _ = writeln!(s, "number_of_trials: {}", stats.n_trials);
    let _ = writeln!(s, "hits: {}", stats.n_hits);
    let _ = writeln!(s, "success_rate: {} (+/- {spread})", format_percent(stats.mean));
    let _ = writeln!(s, "per_run: {}", per_run.join(" "));
    s
}

/// One row per trial: `run,seed,trial,target,outcome,time_to_hit_s,samples,final_position`.
pub fn format_trials(runs: &[(u64, Vec<Trial>)]) -> String {
    let mut s = String::from("run,seed,trial,target,outcome,time_to_hit_s,samples,final_position\n");
    for (r, (seed, trials)) in runs.iter().enumerate() {
        for (i, t) in trials.iter().enumerate() {
            let outcome = match t.outcome {
                Outcome::Hit => "hit",
                Outcome::Timeout => "timeout",
            };
            let tth = t.time_to_hit_s.map_or(String::new(), |v| v.to_string());
            let fin = t.trace.last().copied().unwrap_or(0.0);
            let _ = writeln!(
                s,
                "{r},{seed},{i},{},{outcome},{tth},{},{fin}",
                t.target.code(),
                t.trace.len()
            );
        }
    }
    s
}

/// Observed vs decoded velocity per evaluated sample.
pub fn format_plot_data(report: &EvalReport) -> String {
    let mut s = String::from("t");
    for a in &report.axes {
        let _ = write!(s, ",{0}_observed,{0}_decoded", a.axis.name());
    }
    s.push('\n');
    for i in 0..report.n_samples {
        let _ = write!(s, "{}", report.first_t + i);
        for a in &report.axes {
            let _ = write!(s, ",{},{}", a.observed[i], a.decoded[i]);
        }
        s.push('\n');
    }
    s
}
