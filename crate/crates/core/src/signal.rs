//! Frames, the acquisition filter chain and the decoder's lag window.
//!
//! The filter chain is a single-pole high-pass followed by a 2nd-order
//! Butterworth low-pass, both obtained by the bilinear transform with
//! frequency prewarping so that each stage sits exactly at -3 dB at its
//! cutoff:
//!
//! ```text
//! w = tan(pi * fc / fs)
//!
//! high-pass:  b0 = 1 / (1 + w)           b1 = -b0
//!             a1 = (w - 1) / (w + 1)
//!             y[n] = b0 x[n] + b1 x[n-1] - a1 y[n-1]
//!
//! low-pass:   g  = 1 / (1 + sqrt2 w + w^2)
//!             b0 = w^2 g   b1 = 2 b0   b2 = b0
//!             a1 = 2 (w^2 - 1) g
//!             a2 = (1 - sqrt2 w + w^2) g
//!             y[n] = b0 x[n] + b1 x[n-1] + b2 x[n-2] - a1 y[n-1] - a2 y[n-2]
//! ```

use std::collections::VecDeque;
use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_FS: f64 = 128.0;
pub const DEFAULT_HP_CUTOFF: f64 = 0.16;
pub const DEFAULT_LP_CUTOFF: f64 = 30.0;
pub const DEFAULT_CHANNELS: usize = 14;
pub const DEFAULT_LAGS: usize = 5;

/// One sample of every channel, in microvolts.
#[derive(Clone, Debug, PartialEq)]
pub struct EegFrame {
    pub t: u64,
    pub channels: Vec<f64>,
}

impl EegFrame {
    pub fn new(t: u64, channels: Vec<f64>) -> Self {
        Self { t, channels }
    }

    pub fn zeros(t: u64, n_channels: usize) -> Self {
        Self {
            t,
            channels: vec![0.0; n_channels],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionConfig {
    pub fs: f64,
    pub hp_cutoff: f64,
    pub lp_cutoff: f64,
    pub n_channels: usize,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            fs: DEFAULT_FS,
            hp_cutoff: DEFAULT_HP_CUTOFF,
            lp_cutoff: DEFAULT_LP_CUTOFF,
            n_channels: DEFAULT_CHANNELS,
        }
    }
}

impl AcquisitionConfig {
    pub fn with_channels(n_channels: usize) -> Self {
        Self {
            n_channels,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fs.is_finite() && self.fs > 0.0) {
            return Err(Error::config(format!(
                "sampling rate must be positive, got {}",
                self.fs
            )));
        }
        if !(self.hp_cutoff > 0.0 && self.hp_cutoff < self.lp_cutoff && self.lp_cutoff < self.fs / 2.0) {
            return Err(Error::config(format!(
                "cutoffs must satisfy 0 < hp ({}) < lp ({}) < fs/2 ({})",
                self.hp_cutoff,
                self.lp_cutoff,
                self.fs / 2.0
            )));
        }
        if self.n_channels == 0 {
            return Err(Error::config("at least one channel is required"));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.fs
    }
}

/// Single-pole high-pass coefficients.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OnePoleCoeffs {
    pub b0: f64,
    pub b1: f64,
    pub a1: f64,
}

impl OnePoleCoeffs {
    pub fn highpass(fs: f64, cutoff: f64) -> Self {
        let w = (PI * cutoff / fs).tan();
        let b0 = 1.0 / (1.0 + w);
        Self {
            b0,
            b1: -b0,
            a1: (w - 1.0) / (w + 1.0),
        }
    }
}

/// Normalized biquad coefficients (a0 = 1).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BiquadCoeffs {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl BiquadCoeffs {
    pub fn butterworth_lowpass(fs: f64, cutoff: f64) -> Self {
        let w = (PI * cutoff / fs).tan();
        let w2 = w * w;
        let g = 1.0 / (1.0 + SQRT_2 * w + w2);
        let b0 = w2 * g;
        Self {
            b0,
            b1: 2.0 * b0,
            b2: b0,
            a1: 2.0 * (w2 - 1.0) * g,
            a2: (1.0 - SQRT_2 * w + w2) * g,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct OnePoleState {
    x1: f64,
    y1: f64,
}

impl OnePoleState {
    #[inline]
    fn process(&mut self, c: &OnePoleCoeffs, x: f64) -> f64 {
        let y = c.b0 * x + c.b1 * self.x1 - c.a1 * self.y1;
        self.x1 = x;
        self.y1 = y;
        y
    }
}

// Direct form I; the per-channel counts are small so there is nothing to gain
// from the transposed form here.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct BiquadState {
    x1: f64,
    x2: f64,
    y1: f64,
    y2: f64,
}

impl BiquadState {
    #[inline]
    fn process(&mut self, c: &BiquadCoeffs, x: f64) -> f64 {
        let y = c.b0 * x + c.b1 * self.x1 + c.b2 * self.x2 - c.a1 * self.y1 - c.a2 * self.y2;
        self.x2 = self.x1;
        self.x1 = x;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

/// Per-channel state of the acquisition filter chain.
#[derive(Clone, Debug)]
pub struct CausalFilterState {
    cfg: AcquisitionConfig,
    hp: OnePoleCoeffs,
    lp: BiquadCoeffs,
    hp_state: Vec<OnePoleState>,
    lp_state: Vec<BiquadState>,
}

impl CausalFilterState {
    pub fn new(cfg: AcquisitionConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            hp: OnePoleCoeffs::highpass(cfg.fs, cfg.hp_cutoff),
            lp: BiquadCoeffs::butterworth_lowpass(cfg.fs, cfg.lp_cutoff),
            hp_state: vec![OnePoleState::default(); cfg.n_channels],
            lp_state: vec![BiquadState::default(); cfg.n_channels],
        })
    }

    pub fn config(&self) -> &AcquisitionConfig {
        &self.cfg
    }

    pub fn highpass_coeffs(&self) -> OnePoleCoeffs {
        self.hp
    }

    pub fn lowpass_coeffs(&self) -> BiquadCoeffs {
        self.lp
    }

    pub fn reset(&mut self) {
        self.hp_state.fill(OnePoleState::default());
        self.lp_state.fill(BiquadState::default());
    }

    pub fn is_zeroed(&self) -> bool {
        self.hp_state.iter().all(|s| *s == OnePoleState::default())
            && self.lp_state.iter().all(|s| *s == BiquadState::default())
    }

    /// Filters one frame through the high-pass then the low-pass stage.
    pub fn filter_step(&mut self, frame: &EegFrame) -> Result<EegFrame> {
        if frame.channels.len() != self.cfg.n_channels {
            return Err(Error::config(format!(
                "frame has {} channels, filter configured for {}",
                frame.channels.len(),
                self.cfg.n_channels
            )));
        }
        let channels = frame
            .channels
            .iter()
            .zip(self.hp_state.iter_mut().zip(self.lp_state.iter_mut()))
            .map(|(&x, (hp, lp))| {
                let h = hp.process(&self.hp, x);
                lp.process(&self.lp, h)
            })
            .collect();
        Ok(EegFrame { t: frame.t, channels })
    }

    /// Filters a single-channel series from the current state of channel 0.
    pub fn filter_series(&mut self, input: &[f64]) -> Vec<f64> {
        let (hp, lp) = (&mut self.hp_state[0], &mut self.lp_state[0]);
        input
            .iter()
            .map(|&x| lp.process(&self.lp, hp.process(&self.hp, x)))
            .collect()
    }
}

/// Free-function form of [`CausalFilterState::filter_step`] that also
/// checks the frame against an explicit configuration.
pub fn filter_step(state: &mut CausalFilterState, frame: &EegFrame, cfg: &AcquisitionConfig) -> Result<EegFrame> {
    if state.cfg != *cfg {
        return Err(Error::config(
            "filter state was built for a different acquisition config",
        ));
    }
    state.filter_step(frame)
}

/// Sliding window over the newest `n_lags + 1` frames.
#[derive(Clone, Debug)]
pub struct LagWindow {
    n_lags: usize,
    n_channels: usize,
    frames: VecDeque<EegFrame>,
}

impl LagWindow {
    pub fn new(n_channels: usize, n_lags: usize) -> Self {
        Self {
            n_lags,
            n_channels,
            frames: VecDeque::with_capacity(n_lags + 1),
        }
    }

    pub fn n_lags(&self) -> usize {
        self.n_lags
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn is_warm(&self) -> bool {
        self.frames.len() == self.n_lags + 1
    }

    pub fn clear(&mut self) {
        self.frames.clear();
    }

    /// Time index of the newest frame, if any.
    pub fn newest_t(&self) -> Option<u64> {
        self.frames.front().map(|f| f.t)
    }

    pub fn push(&mut self, frame: EegFrame) -> Result<()> {
        if frame.channels.len() != self.n_channels {
            return Err(Error::config(format!(
                "frame has {} channels, window expects {}",
                frame.channels.len(),
                self.n_channels
            )));
        }
        if let Some(t) = self.newest_t() {
            if frame.t != t + 1 {
                return Err(Error::Sequencing {
                    expected: t + 1,
                    got: frame.t,
                });
            }
        }
        if self.frames.len() == self.n_lags + 1 {
            self.frames.pop_back();
        }
        self.frames.push_front(frame);
        Ok(())
    }

    /// Frame at lag `k` (0 = newest).
    pub fn lag(&self, k: usize) -> Option<&EegFrame> {
        self.frames.get(k)
    }

    /// Frames newest-to-oldest.
    pub fn iter(&self) -> impl Iterator<Item = &EegFrame> {
        self.frames.iter()
    }
}
