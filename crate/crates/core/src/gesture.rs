//! Cursor position to robot hand gesture mapping, offline replay and the
//! line-based wire protocol.
//!
//! Wire grammar, one ASCII line per item:
//!
//! ```text
//! stream  = "HELLO kinebci/1\n" *command "BYE\n"
//! command = "CMD " kind " " timestamp_ms "\n"
//! kind    = "R" / "L" / "N"
//! ```

use std::fmt;
use std::io::Write;

use crate::error::{Error, Result};
use crate::recording::{Axis, Recording};

pub const HELLO: &str = "HELLO kinebci/1\n";
pub const BYE: &str = "BYE\n";

/// Keepalive period, milliseconds of replay time.
pub const KEEPALIVE_MS: u64 = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GestureKind {
    RightHand,
    LeftHand,
    Neutral,
}

impl GestureKind {
    pub fn code(self) -> char {
        match self {
            GestureKind::RightHand => 'R',
            GestureKind::LeftHand => 'L',
            GestureKind::Neutral => 'N',
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        match code {
            "R" => Some(GestureKind::RightHand),
            "L" => Some(GestureKind::LeftHand),
            "N" => Some(GestureKind::Neutral),
            _ => None,
        }
    }
}

impl fmt::Display for GestureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GestureKind::RightHand => "RIGHT_HAND",
            GestureKind::LeftHand => "LEFT_HAND",
            GestureKind::Neutral => "NEUTRAL",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GestureCommand {
    pub kind: GestureKind,
    pub timestamp_ms: u64,
}

/// Positive positions raise the right hand, negative ones the left. Inside
/// the dead zone the previous gesture is held.
pub fn map_position(x: f64, dead_zone: f64, prev: Option<GestureKind>) -> GestureKind {
    if x > dead_zone {
        GestureKind::RightHand
    } else if x < -dead_zone {
        GestureKind::LeftHand
    } else {
        prev.unwrap_or(GestureKind::Neutral)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReplayConfig {
    pub command_rate_hz: f64,
    pub dead_zone: f64,
    /// Which position column drives the gestures.
    pub axis: Axis,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            command_rate_hz: 8.0,
            dead_zone: 0.0,
            axis: Axis::X,
        }
    }
}

impl ReplayConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.command_rate_hz > 0.0 && self.command_rate_hz.is_finite()) {
            return Err(Error::validation("command rate must be positive"));
        }
        if self.dead_zone.is_nan() || self.dead_zone < 0.0 {
            return Err(Error::validation("dead zone must be >= 0"));
        }
        Ok(())
    }
}

/// A replayed command with the sample it was derived from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReplayedCommand {
    pub command: GestureCommand,
    pub sample_index: usize,
    pub position: f64,
    /// Repeat of the current kind, sent because no change occurred for 1 s.
    pub keepalive: bool,
}

pub fn replay(rec: &Recording, cfg: &ReplayConfig) -> Result<Vec<ReplayedCommand>> {
    if rec.is_empty() {
        return Err(Error::validation("cannot replay an empty recording"));
    }
    replay_positions(rec.position(cfg.axis), rec.config().fs, cfg)
}

/// Samples `positions` at the command rate (latest sample at or before each
/// tick) and emits on every kind change plus a keepalive after 1 s of silence.
pub fn replay_positions(positions: &[f64], fs: f64, cfg: &ReplayConfig) -> Result<Vec<ReplayedCommand>> {
    cfg.validate()?;
    if positions.is_empty() {
        return Err(Error::validation("cannot replay an empty trace"));
    }
    let mut out: Vec<ReplayedCommand> = Vec::new();
    let mut current: Option<GestureKind> = None;
    let mut last_emit_ms = 0u64;
    for tick in 0u64.. {
        let tick_s = tick as f64 / cfg.command_rate_hz;
        // Small slack so exact tick times land on their own sample.
        let idx = (tick_s * fs + 1e-9).floor() as usize;
        if idx >= positions.len() {
            break;
        }
        let ts = (tick_s * 1000.0).round() as u64;
        let x = positions[idx];
        let kind = map_position(x, cfg.dead_zone, current);
        let changed = current != Some(kind);
        let keepalive = !changed && ts >= last_emit_ms + KEEPALIVE_MS;
        if changed || keepalive {
            out.push(ReplayedCommand {
                command: GestureCommand { kind, timestamp_ms: ts },
                sample_index: idx,
                position: x,
                keepalive,
            });
            last_emit_ms = ts;
            current = Some(kind);
        }
    }
    Ok(out)
}

pub fn encode(cmd: &GestureCommand) -> String {
    format!("CMD {} {}\n", cmd.kind.code(), cmd.timestamp_ms)
}

/// Whole framed stream as bytes.
pub fn encode_stream(cmds: &[GestureCommand]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HELLO.len() + BYE.len() + cmds.len() * 16);
    write_stream(&mut buf, cmds).expect("writing to a Vec cannot fail");
    buf
}

pub fn write_stream<W: Write>(mut sink: W, cmds: &[GestureCommand]) -> std::io::Result<()> {
    sink.write_all(HELLO.as_bytes())?;
    for c in cmds {
        sink.write_all(encode(c).as_bytes())?;
    }
    sink.write_all(BYE.as_bytes())?;
    sink.flush()
}

/// Parses a framed stream. Every line must end in `\n`.
pub fn decode_stream(bytes: &[u8]) -> Result<Vec<GestureCommand>> {
    let text = std::str::from_utf8(bytes).map_err(|_| Error::parse(0, "stream is not ASCII"))?;
    let mut lines = text.split_inclusive('\n').enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, l)) if l == HELLO => {}
        _ => return Err(Error::parse(1, "missing HELLO kinebci/1")),
    }
    let mut cmds: Vec<GestureCommand> = Vec::new();
    let mut closed = false;
    for (no, line) in lines {
        if closed {
            return Err(Error::parse(no, "data after BYE"));
        }
        if line == BYE {
            closed = true;
            continue;
        }
        let body = line
            .strip_suffix('\n')
            .ok_or_else(|| Error::parse(no, "unterminated line"))?;
        let mut parts = body.split(' ');
        let (tag, kind, ts) = (parts.next(), parts.next(), parts.next());
        if tag != Some("CMD") || parts.next().is_some() {
            return Err(Error::parse(no, format!("expected CMD line, got {body:?}")));
        }
        let kind = kind
            .and_then(GestureKind::from_code)
            .ok_or_else(|| Error::parse(no, "unknown gesture kind"))?;
        let ts = ts.unwrap_or("");
        if ts.is_empty() || !ts.bytes().all(|b| b.is_ascii_digit()) || (ts.len() > 1 && ts.starts_with('0')) {
            return Err(Error::parse(no, format!("bad timestamp {ts:?}")));
        }
        let timestamp_ms = ts.parse().map_err(|_| Error::parse(no, "timestamp out of range"))?;
        if cmds.last().is_some_and(|c| c.timestamp_ms > timestamp_ms) {
            return Err(Error::parse(no, "timestamps must be nondecreasing"));
        }
        cmds.push(GestureCommand { kind, timestamp_ms });
    }
    if !closed {
        return Err(Error::parse(0, "missing BYE"));
    }
    Ok(cmds)
}
