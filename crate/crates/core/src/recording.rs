//! Aligned EEG, kinematics and phase annotations.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{AcquisitionConfig, EegFrame};

/// Screen axis. `X` is horizontal (u, x), `Y` is vertical (v, y).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub const BOTH: [Axis; 2] = [Axis::X, Axis::Y];

    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
        }
    }

    pub fn direction(self) -> &'static str {
        match self {
            Axis::X => "horizontal",
            Axis::Y => "vertical",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" | "horizontal" => Ok(Axis::X),
            "y" | "vertical" => Ok(Axis::Y),
            other => Err(Error::validation(format!("unknown axis {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Training,
    Prerun,
    Test,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Training => "training",
            Phase::Prerun => "prerun",
            Phase::Test => "test",
        }
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "training" => Ok(Phase::Training),
            "prerun" => Ok(Phase::Prerun),
            "test" => Ok(Phase::Test),
            other => Err(Error::validation(format!("unknown phase {other:?}"))),
        }
    }
}

/// Target shown during a test trial: right, left, up or down edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TargetSide {
    Right,
    Left,
    Up,
    Down,
}

impl TargetSide {
    pub fn code(self) -> &'static str {
        match self {
            TargetSide::Right => "RT",
            TargetSide::Left => "LT",
            TargetSide::Up => "UT",
            TargetSide::Down => "DT",
        }
    }

    pub fn axis(self) -> Axis {
        match self {
            TargetSide::Right | TargetSide::Left => Axis::X,
            TargetSide::Up | TargetSide::Down => Axis::Y,
        }
    }

    /// +1 for right/up, -1 for left/down.
    pub fn sign(self) -> f64 {
        match self {
            TargetSide::Right | TargetSide::Up => 1.0,
            TargetSide::Left | TargetSide::Down => -1.0,
        }
    }

    pub fn for_axis(axis: Axis, positive: bool) -> Self {
        match (axis, positive) {
            (Axis::X, true) => TargetSide::Right,
            (Axis::X, false) => TargetSide::Left,
            (Axis::Y, true) => TargetSide::Up,
            (Axis::Y, false) => TargetSide::Down,
        }
    }
}

impl FromStr for TargetSide {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "RT" => Ok(TargetSide::Right),
            "LT" => Ok(TargetSide::Left),
            "UT" => Ok(TargetSide::Up),
            "DT" => Ok(TargetSide::Down),
            other => Err(Error::validation(format!("unknown target {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Annotation {
    pub phase: Phase,
    pub target: Option<TargetSide>,
}

impl Annotation {
    pub const TRAINING: Annotation = Annotation {
        phase: Phase::Training,
        target: None,
    };
    pub const PRERUN: Annotation = Annotation {
        phase: Phase::Prerun,
        target: None,
    };

    pub fn test(target: TargetSide) -> Self {
        Self {
            phase: Phase::Test,
            target: Some(target),
        }
    }
}

/// Kinematic labels for one sample.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Kinematics {
    pub u: f64,
    pub v: f64,
    pub x: f64,
    pub y: f64,
}

/// Time series of frames with velocity/position labels and annotations.
///
/// Channels are stored row-major: sample `t` occupies
/// `channels[t * n .. (t + 1) * n]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Recording {
    config: AcquisitionConfig,
    channels: Vec<f64>,
    u: Vec<f64>,
    v: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
    annotations: Vec<Annotation>,
}

impl Recording {
    pub fn new(config: AcquisitionConfig) -> Self {
        Self {
            config,
            channels: Vec::new(),
            u: Vec::new(),
            v: Vec::new(),
            x: Vec::new(),
            y: Vec::new(),
            annotations: Vec::new(),
        }
    }

    pub fn with_capacity(config: AcquisitionConfig, samples: usize) -> Self {
        Self {
            config,
            channels: Vec::with_capacity(samples * config.n_channels),
            u: Vec::with_capacity(samples),
            v: Vec::with_capacity(samples),
            x: Vec::with_capacity(samples),
            y: Vec::with_capacity(samples),
            annotations: Vec::with_capacity(samples),
        }
    }

    pub fn push(&mut self, channels: &[f64], kin: Kinematics, annotation: Annotation) -> Result<()> {
        if channels.len() != self.config.n_channels {
            return Err(Error::config(format!(
                "sample has {} channels, recording has {}",
                channels.len(),
                self.config.n_channels
            )));
        }
        self.channels.extend_from_slice(channels);
        self.u.push(kin.u);
        self.v.push(kin.v);
        self.x.push(kin.x);
        self.y.push(kin.y);
        self.annotations.push(annotation);
        Ok(())
    }

    /// Appends every sample of `other`; both must share a configuration.
    pub fn append(&mut self, other: &Recording) -> Result<()> {
        if other.config != self.config {
            return Err(Error::config("cannot concatenate recordings with different configs"));
        }
        self.channels.extend_from_slice(&other.channels);
        self.u.extend_from_slice(&other.u);
        self.v.extend_from_slice(&other.v);
        self.x.extend_from_slice(&other.x);
        self.y.extend_from_slice(&other.y);
        self.annotations.extend_from_slice(&other.annotations);
        Ok(())
    }

    pub fn config(&self) -> &AcquisitionConfig {
        &self.config
    }

    pub fn n_channels(&self) -> usize {
        self.config.n_channels
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.config.fs
    }

    pub fn channels(&self, t: usize) -> &[f64] {
        let n = self.config.n_channels;
        &self.channels[t * n..(t + 1) * n]
    }

    pub fn channels_mut(&mut self, t: usize) -> &mut [f64] {
        let n = self.config.n_channels;
        &mut self.channels[t * n..(t + 1) * n]
    }

    pub fn frame(&self, t: usize) -> EegFrame {
        EegFrame::new(t as u64, self.channels(t).to_vec())
    }

    pub fn frames(&self) -> impl Iterator<Item = EegFrame> + '_ {
        (0..self.len()).map(|t| self.frame(t))
    }

    pub fn raw_channels(&self) -> &[f64] {
        &self.channels
    }

    pub fn kinematics(&self, t: usize) -> Kinematics {
        Kinematics {
            u: self.u[t],
            v: self.v[t],
            x: self.x[t],
            y: self.y[t],
        }
    }

    pub fn annotation(&self, t: usize) -> Annotation {
        self.annotations[t]
    }

    pub fn annotations(&self) -> &[Annotation] {
        &self.annotations
    }

    pub fn velocity(&self, axis: Axis) -> &[f64] {
        match axis {
            Axis::X => &self.u,
            Axis::Y => &self.v,
        }
    }

    pub fn velocity_mut(&mut self, axis: Axis) -> &mut [f64] {
        match axis {
            Axis::X => &mut self.u,
            Axis::Y => &mut self.v,
        }
    }

    pub fn position(&self, axis: Axis) -> &[f64] {
        match axis {
            Axis::X => &self.x,
            Axis::Y => &self.y,
        }
    }

    /// Axes whose velocity labels are not identically zero.
    pub fn active_axes(&self) -> Vec<Axis> {
        Axis::BOTH
            .into_iter()
            .filter(|&a| self.velocity(a).iter().any(|&v| v != 0.0))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn push_checks_channel_count() {
        let mut rec = Recording::new(AcquisitionConfig::with_channels(3));
        rec.push(&[1.0, 2.0, 3.0], Kinematics::default(), Annotation::TRAINING)
            .unwrap();
        assert!(rec.push(&[1.0], Kinematics::default(), Annotation::TRAINING).is_err());
        assert_eq!(rec.len(), 1);
        assert_eq!(rec.frame(0).channels, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn vocabulary_round_trips() {
        for side in [TargetSide::Right, TargetSide::Left, TargetSide::Up, TargetSide::Down] {
            assert_eq!(side.code().parse::<TargetSide>().unwrap(), side);
        }
        for phase in [Phase::Training, Phase::Prerun, Phase::Test] {
            assert_eq!(phase.name().parse::<Phase>().unwrap(), phase);
        }
        assert_eq!("horizontal".parse::<Axis>().unwrap(), Axis::X);
        assert_eq!("y".parse::<Axis>().unwrap(), Axis::Y);
        assert!("z".parse::<Axis>().is_err());
    }
}
