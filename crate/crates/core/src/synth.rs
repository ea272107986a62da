//! Synthetic subject used as ground truth for the whole pipeline.
//!
//! The forward direction turns intended velocity into EEG through a lagged
//! linear encoding plus i.i.d. Gaussian noise. The reverse direction takes
//! existing EEG and relabels it with a known decoder, which yields a dataset
//! with an exactly representable optimum.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::decoder::DecoderModel;
use crate::error::{Error, Result};
use crate::recording::{Annotation, Axis, Kinematics, Recording};
use crate::signal::{AcquisitionConfig, BiquadCoeffs, CausalFilterState, EegFrame};

/// Standard deviation of randomly drawn encoding weights, µV per unit/s.
pub const DEFAULT_WEIGHT_SCALE: f64 = 10.0;

/// SplitMix64 finalizer; maps (base, stream) to a well-mixed child seed.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base
        ^ stream
            .wrapping_mul(0x9e37_79b9_7f4a_7c15)
            .wrapping_add(0x6a09_e667_f3bc_c909);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PursuitConfig {
    /// Low-pass cutoff of the smoothed velocity noise.
    pub cutoff_hz: f64,
    /// RMS speed of the generated velocity, units/s.
    pub rms_speed: f64,
    /// Filter settling time discarded before the trial starts.
    pub burn_in_s: f64,
}

impl Default for PursuitConfig {
    fn default() -> Self {
        Self {
            cutoff_hz: 0.5,
            rms_speed: 0.3,
            burn_in_s: 4.0,
        }
    }
}

/// One-dimensional pursuit trajectory on a single axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub axis: Axis,
    pub velocity: Vec<f64>,
    pub position: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.velocity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.velocity.is_empty()
    }

    pub fn kinematics(&self) -> Vec<Kinematics> {
        self.velocity
            .iter()
            .zip(&self.position)
            .map(|(&vel, &pos)| match self.axis {
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
            })
            .collect()
    }
}

pub fn gen_pursuit_trajectory(duration_s: f64, fs: f64, axis: Axis, seed: u64) -> Result<Trajectory> {
    gen_pursuit_trajectory_with(&PursuitConfig::default(), duration_s, fs, axis, seed)
}

/// Smoothed random velocity; position is integrated from the origin and
/// reflected at the screen bounds, flipping the velocity sign on each bounce.
pub fn gen_pursuit_trajectory_with(
    cfg: &PursuitConfig,
    duration_s: f64,
    fs: f64,
    axis: Axis,
    seed: u64,
) -> Result<Trajectory> {
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(Error::validation(format!(
            "duration must be positive, got {duration_s}"
        )));
    }
    if !(fs > 0.0 && cfg.cutoff_hz > 0.0 && cfg.cutoff_hz < fs / 2.0 && cfg.rms_speed >= 0.0) {
        return Err(Error::validation("invalid pursuit parameters"));
    }
    let n = (duration_s * fs).round() as usize;
    let burn = (cfg.burn_in_s * fs).round() as usize;
    let coeffs = BiquadCoeffs::butterworth_lowpass(fs, cfg.cutoff_hz);
    let mut rng = rng_from_seed(seed);

    let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
    let mut raw = Vec::with_capacity(n);
    for i in 0..burn + n {
        let x: f64 = rng.sample(StandardNormal);
        let y = coeffs.b0 * x + coeffs.b1 * x1 + coeffs.b2 * x2 - coeffs.a1 * y1 - coeffs.a2 * y2;
        x2 = x1;
        x1 = x;
        y2 = y1;
        y1 = y;
        if i >= burn {
            raw.push(y);
        }
    }
    let rms = (raw.iter().map(|v| v * v).sum::<f64>() / n.max(1) as f64).sqrt();
    let gain = if rms > 0.0 { cfg.rms_speed / rms } else { 0.0 };

    let dt = 1.0 / fs;
    let mut pos = 0.0f64;
    let mut mirror = 1.0;
    let mut velocity = Vec::with_capacity(n);
    let mut position = Vec::with_capacity(n);
    for r in raw {
        let vel = mirror * gain * r;
        let prev = pos;
        let mut next = pos + vel * dt;
        let mut bounced = false;
        while next.abs() > 1.0 {
            next = next.signum() * 2.0 - next;
            mirror = -mirror;
            bounced = true;
        }
        pos = next;
        // A bounce step is labelled with the displacement it actually produced.
        velocity.push(if bounced { (pos - prev) * fs } else { vel });
        position.push(pos);
    }
    Ok(Trajectory {
        axis,
        velocity,
        position,
    })
}

/// Ground-truth subject: lagged linear encoding of intended velocity plus noise.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSubject {
    acquisition: AcquisitionConfig,
    n_lags: usize,
    /// `g[n][k]` for the horizontal axis at `n * (K + 1) + k`.
    weights_x: Vec<f64>,
    weights_y: Vec<f64>,
    sigma: f64,
    seed: u64,
    /// Pass generated channels through the acquisition filter chain.
    pub filter_acquisition: bool,
}

impl SyntheticSubject {
    pub fn new(
        acquisition: AcquisitionConfig,
        n_lags: usize,
        weights_x: Vec<f64>,
        weights_y: Vec<f64>,
        sigma: f64,
        seed: u64,
    ) -> Result<Self> {
        acquisition.validate()?;
        let len = acquisition.n_channels * (n_lags + 1);
        if weights_x.len() != len || weights_y.len() != len {
            return Err(Error::config(format!(
                "encoding weights must have {len} entries, got {} and {}",
                weights_x.len(),
                weights_y.len()
            )));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::validation(format!("noise sigma must be >= 0, got {sigma}")));
        }
        if weights_x.iter().chain(&weights_y).any(|w| !w.is_finite()) {
            return Err(Error::validation("encoding weights must be finite"));
        }
        Ok(Self {
            acquisition,
            n_lags,
            weights_x,
            weights_y,
            sigma,
            seed,
            filter_acquisition: false,
        })
    }

    /// Subject with Gaussian encoding weights drawn from `seed`.
    pub fn random(acquisition: AcquisitionConfig, n_lags: usize, sigma: f64, seed: u64) -> Result<Self> {
        let len = acquisition.n_channels * (n_lags + 1);
        let mut rng = rng_from_seed(derive_seed(seed, 0x5eed));
        let mut draw = |_| DEFAULT_WEIGHT_SCALE * rng.sample::<f64, _>(StandardNormal);
        let wx: Vec<f64> = (0..len).map(&mut draw).collect();
        let wy: Vec<f64> = (0..len).map(&mut draw).collect();
        Self::new(acquisition, n_lags, wx, wy, sigma, seed)
    }

    pub fn acquisition(&self) -> &AcquisitionConfig {
        &self.acquisition
    }

    pub fn n_channels(&self) -> usize {
        self.acquisition.n_channels
    }

    pub fn n_lags(&self) -> usize {
        self.n_lags
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn weights(&self, axis: Axis) -> &[f64] {
        match axis {
            Axis::X => &self.weights_x,
            Axis::Y => &self.weights_y,
        }
    }

    pub fn with_sigma(mut self, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::validation(format!("noise sigma must be >= 0, got {sigma}")));
        }
        self.sigma = sigma;
        Ok(self)
    }

    /// Mean per-channel power of the noiseless encoding of `labels`.
    pub fn signal_power(&self, labels: &[Kinematics]) -> f64 {
        let mut stream = self.stream_with_sigma(0, 0.0);
        let mut acc = 0.0;
        for k in labels {
            acc += stream.next_channels(k.u, k.v).iter().map(|c| c * c).sum::<f64>();
        }
        acc / (labels.len().max(1) * self.n_channels()) as f64
    }

    /// Sets sigma so that signal power / noise power equals `snr` on `labels`.
    pub fn with_snr(self, snr: f64, labels: &[Kinematics]) -> Result<Self> {
        if snr.is_nan() || snr <= 0.0 {
            return Err(Error::validation(format!("snr must be positive, got {snr}")));
        }
        let sigma = (self.signal_power(labels) / snr).sqrt();
        self.with_sigma(sigma)
    }

    /// `with_snr` measured on a 60 s pursuit along `axis` drawn from the subject's own seed.
    pub fn with_snr_on_pursuit(self, snr: f64, axis: Axis) -> Result<Self> {
        let probe = gen_pursuit_trajectory(60.0, self.acquisition.fs, axis, derive_seed(self.seed, 0x5a))?;
        self.with_snr(snr, &probe.kinematics())
    }

    /// Streaming encoder with its own noise sequence.
    pub fn stream(&self, noise_seed: u64) -> SubjectStream<'_> {
        self.stream_with_sigma(noise_seed, self.sigma)
    }

    fn stream_with_sigma(&self, noise_seed: u64, sigma: f64) -> SubjectStream<'_> {
        let filter = if self.filter_acquisition {
            Some(CausalFilterState::new(self.acquisition).expect("validated at construction"))
        } else {
            None
        };
        SubjectStream {
            subject: self,
            sigma,
            history: vec![(0.0, 0.0); self.n_lags + 1],
            head: 0,
            rng: rng_from_seed(noise_seed),
            filter,
            t: 0,
        }
    }

    /// Encodes a whole labelled series; labels are carried into the recording.
    pub fn encode_eeg(&self, labels: &[Kinematics], annotations: &[Annotation], noise_seed: u64) -> Result<Recording> {
        if labels.len() < self.n_lags + 1 {
            return Err(Error::InsufficientData {
                needed: self.n_lags + 1,
                got: labels.len(),
            });
        }
        if annotations.len() != labels.len() {
            return Err(Error::config("annotations and labels differ in length"));
        }
        let mut stream = self.stream(noise_seed);
        let mut rec = Recording::with_capacity(self.acquisition, labels.len());
        for (k, a) in labels.iter().zip(annotations) {
            let ch = stream.next_channels(k.u, k.v);
            rec.push(&ch, *k, *a)?;
        }
        Ok(rec)
    }
}

/// Stateful encoder: call once per sample with the intended velocity.
#[derive(Clone, Debug)]
pub struct SubjectStream<'a> {
    subject: &'a SyntheticSubject,
    sigma: f64,
    history: Vec<(f64, f64)>,
    head: usize,
    rng: ChaCha8Rng,
    filter: Option<CausalFilterState>,
    t: u64,
}

impl SubjectStream<'_> {
    pub fn next_channels(&mut self, u: f64, v: f64) -> Vec<f64> {
        let depth = self.subject.n_lags + 1;
        self.head = (self.head + depth - 1) % depth;
        self.history[self.head] = (u, v);
        let mut out = Vec::with_capacity(self.subject.n_channels());
        for n in 0..self.subject.n_channels() {
            let mut acc = 0.0;
            for k in 0..depth {
                let (hu, hv) = self.history[(self.head + k) % depth];
                let i = n * depth + k;
                acc += self.subject.weights_x[i] * hu + self.subject.weights_y[i] * hv;
            }
            let z: f64 = self.rng.sample(StandardNormal);
            out.push(acc + self.sigma * z);
        }
        if let Some(f) = self.filter.as_mut() {
            out = f
                .filter_step(&EegFrame::new(self.t, out))
                .expect("channel count matches")
                .channels;
        }
        self.t += 1;
        out
    }

    pub fn next_frame(&mut self, u: f64, v: f64) -> EegFrame {
        let t = self.t;
        EegFrame::new(t, self.next_channels(u, v))
    }
}

/// White Gaussian EEG with zero kinematic labels.
pub fn white_noise_recording(acquisition: AcquisitionConfig, len: usize, std: f64, seed: u64) -> Result<Recording> {
    acquisition.validate()?;
    let mut rng = rng_from_seed(seed);
    let mut rec = Recording::with_capacity(acquisition, len);
    let mut ch = vec![0.0; acquisition.n_channels];
    for _ in 0..len {
        for c in ch.iter_mut() {
            *c = std * rng.sample::<f64, _>(StandardNormal);
        }
        rec.push(&ch, Kinematics::default(), Annotation::TRAINING)?;
    }
    Ok(rec)
}

/// Replaces the velocity labels with `truth`'s predictions on the EEG.
///
/// Samples before `K` use zero-padded history. Axes the model does not
/// decode are zeroed.
pub fn reverse_label(rec: &Recording, truth: &DecoderModel) -> Result<Recording> {
    let k_max = truth.n_lags();
    if rec.len() < k_max + 1 {
        return Err(Error::InsufficientData {
            needed: k_max + 1,
            got: rec.len(),
        });
    }
    if rec.n_channels() != truth.n_channels() {
        return Err(Error::config(format!(
            "recording has {} channels, model has {}",
            rec.n_channels(),
            truth.n_channels()
        )));
    }
    let mut out = rec.clone();
    for axis in Axis::BOTH {
        let labels = out.velocity_mut(axis);
        match truth.axis(axis) {
            None => labels.fill(0.0),
            Some(m) => {
                for (t, slot) in labels.iter_mut().enumerate() {
                    let mut acc = m.intercept;
                    for k in 0..=k_max.min(t) {
                        for (n, e) in rec.channels(t - k).iter().enumerate() {
                            acc += m.weights[n * (k_max + 1) + k] * e;
                        }
                    }
                    *slot = acc;
                }
            }
        }
    }
    Ok(out)
}

/// Random decoder with N(0, scale^2) coefficients on the given axes.
pub fn random_model(n_channels: usize, n_lags: usize, axes: &[Axis], scale: f64, seed: u64) -> DecoderModel {
    let mut rng = rng_from_seed(seed);
    let mut model = DecoderModel::zeros(n_channels, n_lags, axes);
    let ax: Vec<Axis> = model.axes().collect();
    for axis in ax {
        let m = model.axis_mut(axis).expect("axis exists");
        m.intercept = scale * rng.sample::<f64, _>(StandardNormal);
        for w in m.weights.iter_mut() {
            *w = scale * rng.sample::<f64, _>(StandardNormal);
        }
    }
    model
}

/// Proportional intent toward the target, saturated at `cap`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntentPolicy {
    pub gain: f64,
    pub cap: f64,
}

impl Default for IntentPolicy {
    fn default() -> Self {
        Self { gain: 2.0, cap: 0.5 }
    }
}

impl IntentPolicy {
    pub fn new(gain: f64, cap: f64) -> Result<Self> {
        let p = Self { gain, cap };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gain > 0.0 && self.cap > 0.0) {
            return Err(Error::validation("intent gain and cap must be positive"));
        }
        Ok(())
    }

    /// Intended velocity along the active axis.
    pub fn intend(&self, cursor: f64, target: f64) -> f64 {
        (self.gain * (target - cursor)).clamp(-self.cap, self.cap)
    }
}
