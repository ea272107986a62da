//! Lag-embedded linear velocity decoder.
//!
//! For each decoded axis the model computes
//!
//! ```text
//! u[t] = a0 + sum_{n < N} sum_{k <= K} b[n][k] * e_n[t - k]
//! ```
//!
//! Design matrix rows are laid out lag-major,
//! `[1, e_0[t], .., e_{N-1}[t], e_0[t-1], .., e_{N-1}[t-K]]`, while model
//! weights are stored channel-major (`b[n][k]` at `n * (K + 1) + k`), which is
//! also the order used by the model file.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, ColMatrix};
use crate::recording::{Axis, Recording};
use crate::signal::LagWindow;

#[derive(Clone, Debug, PartialEq)]
pub struct AxisModel {
    pub axis: Axis,
    pub intercept: f64,
    /// `b[n][k]` at index `n * (n_lags + 1) + k`.
    pub weights: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderModel {
    n_channels: usize,
    n_lags: usize,
    axes: Vec<AxisModel>,
    /// Free-form key/value metadata carried into the model file.
    pub provenance: BTreeMap<String, String>,
}

/// Decoded velocity sample. Axes absent from the model decode to zero.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Velocity {
    pub u: f64,
    pub v: f64,
}

impl Velocity {
    pub fn get(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.u,
            Axis::Y => self.v,
        }
    }
}

impl DecoderModel {
    /// A model whose intercepts and weights are all zero.
    pub fn zeros(n_channels: usize, n_lags: usize, axes: &[Axis]) -> Self {
        let mut axes = axes.to_vec();
        axes.sort();
        axes.dedup();
        Self {
            n_channels,
            n_lags,
            axes: axes
                .into_iter()
                .map(|axis| AxisModel {
                    axis,
                    intercept: 0.0,
                    weights: vec![0.0; n_channels * (n_lags + 1)],
                })
                .collect(),
            provenance: BTreeMap::new(),
        }
    }

    pub fn from_parts(n_channels: usize, n_lags: usize, mut axes: Vec<AxisModel>) -> Result<Self> {
        if n_channels == 0 {
            return Err(Error::config("model needs at least one channel"));
        }
        axes.sort_by_key(|a| a.axis);
        if axes.windows(2).any(|w| w[0].axis == w[1].axis) {
            return Err(Error::config("duplicate axis in model"));
        }
        for a in &axes {
            if a.weights.len() != n_channels * (n_lags + 1) {
                return Err(Error::config(format!(
                    "axis {} has {} weights, expected {}",
                    a.axis,
                    a.weights.len(),
                    n_channels * (n_lags + 1)
                )));
            }
            if !a.intercept.is_finite() || a.weights.iter().any(|w| !w.is_finite()) {
                return Err(Error::validation(format!(
                    "axis {} has non-finite coefficients",
                    a.axis
                )));
            }
        }
        Ok(Self {
            n_channels,
            n_lags,
            axes,
            provenance: BTreeMap::new(),
        })
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_lags(&self) -> usize {
        self.n_lags
    }

    /// Coefficients per axis, intercept included.
    pub fn n_coefficients(&self) -> usize {
        1 + self.n_channels * (self.n_lags + 1)
    }

    pub fn axes(&self) -> impl Iterator<Item = Axis> + '_ {
        self.axes.iter().map(|a| a.axis)
    }

    pub fn axis_models(&self) -> &[AxisModel] {
        &self.axes
    }

    pub fn axis(&self, axis: Axis) -> Option<&AxisModel> {
        self.axes.iter().find(|a| a.axis == axis)
    }

    pub fn axis_mut(&mut self, axis: Axis) -> Option<&mut AxisModel> {
        self.axes.iter_mut().find(|a| a.axis == axis)
    }

    pub fn has_axis(&self, axis: Axis) -> bool {
        self.axis(axis).is_some()
    }

    #[inline]
    fn weight_index(&self, channel: usize, lag: usize) -> usize {
        channel * (self.n_lags + 1) + lag
    }

    pub fn weight(&self, axis: Axis, channel: usize, lag: usize) -> Option<f64> {
        let i = self.weight_index(channel, lag);
        self.axis(axis).map(|a| a.weights[i])
    }

    pub fn set_weight(&mut self, axis: Axis, channel: usize, lag: usize, value: f64) -> Result<()> {
        if channel >= self.n_channels || lag > self.n_lags {
            return Err(Error::config(format!("weight ({channel}, {lag}) out of range")));
        }
        let i = self.weight_index(channel, lag);
        let a = self
            .axis_mut(axis)
            .ok_or_else(|| Error::config(format!("model has no {axis} axis")))?;
        a.weights[i] = value;
        Ok(())
    }

    /// Coefficients in design-matrix column order: intercept, then lag-major weights.
    pub fn design_coefficients(&self, axis: Axis) -> Option<Vec<f64>> {
        let a = self.axis(axis)?;
        let mut out = Vec::with_capacity(self.n_coefficients());
        out.push(a.intercept);
        for k in 0..=self.n_lags {
            for n in 0..self.n_channels {
                out.push(a.weights[self.weight_index(n, k)]);
            }
        }
        Some(out)
    }

    /// Euclidean norm of the non-intercept weights across all axes.
    pub fn weight_norm(&self) -> f64 {
        self.axes
            .iter()
            .flat_map(|a| a.weights.iter())
            .map(|w| w * w)
            .sum::<f64>()
            .sqrt()
    }

    /// Decodes the velocity at the window's newest sample.
    pub fn predict(&self, window: &LagWindow) -> Result<Velocity> {
        if window.n_channels() != self.n_channels || window.n_lags() != self.n_lags {
            return Err(Error::config(format!(
                "window is {}x{}, model is {}x{}",
                window.n_channels(),
                window.n_lags() + 1,
                self.n_channels,
                self.n_lags + 1
            )));
        }
        if !window.is_warm() {
            return Err(Error::NotWarm {
                have: window.len(),
                need: self.n_lags + 1,
            });
        }
        let mut out = Velocity::default();
        for a in &self.axes {
            let mut acc = a.intercept;
            for (k, frame) in window.iter().enumerate() {
                for (n, e) in frame.channels.iter().enumerate() {
                    acc += a.weights[self.weight_index(n, k)] * e;
                }
            }
            match a.axis {
                Axis::X => out.u = acc,
                Axis::Y => out.v = acc,
            }
        }
        Ok(out)
    }

    /// Decoded series for `axis` at every warm sample `t = K .. T-1`.
    pub fn predict_recording(&self, rec: &Recording, axis: Axis) -> Result<Vec<f64>> {
        self.check_recording(rec)?;
        let a = self
            .axis(axis)
            .ok_or_else(|| Error::config(format!("model has no {axis} axis")))?;
        let k_max = self.n_lags;
        Ok((k_max..rec.len())
            .map(|t| {
                let mut acc = a.intercept;
                for k in 0..=k_max {
                    for (n, e) in rec.channels(t - k).iter().enumerate() {
                        acc += a.weights[self.weight_index(n, k)] * e;
                    }
                }
                acc
            })
            .collect())
    }

    fn check_recording(&self, rec: &Recording) -> Result<()> {
        if rec.n_channels() != self.n_channels {
            return Err(Error::config(format!(
                "recording has {} channels, model has {}",
                rec.n_channels(),
                self.n_channels
            )));
        }
        if rec.len() < self.n_lags + 1 {
            return Err(Error::InsufficientData {
                needed: self.n_lags + 1,
                got: rec.len(),
            });
        }
        Ok(())
    }
}

/// Lag-embedded regressors with the matching velocity targets.
#[derive(Clone, Debug)]
pub struct DesignMatrix {
    n_channels: usize,
    n_lags: usize,
    matrix: ColMatrix,
    targets: Vec<(Axis, Vec<f64>)>,
}

impl DesignMatrix {
    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_lags(&self) -> usize {
        self.n_lags
    }

    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn width(&self) -> usize {
        self.matrix.cols()
    }

    /// Recording index of the first row (always `K`).
    pub fn first_t(&self) -> usize {
        self.n_lags
    }

    pub fn matrix(&self) -> &ColMatrix {
        &self.matrix
    }

    pub fn row(&self, r: usize) -> Vec<f64> {
        (0..self.width()).map(|c| self.matrix.get(r, c)).collect()
    }

    /// Column holding `e_channel[t - lag]`.
    pub fn column_index(&self, channel: usize, lag: usize) -> usize {
        1 + lag * self.n_channels + channel
    }

    pub fn target(&self, axis: Axis) -> &[f64] {
        &self
            .targets
            .iter()
            .find(|(a, _)| *a == axis)
            .expect("both axes are always present")
            .1
    }

    pub fn target_mut(&mut self, axis: Axis) -> &mut Vec<f64> {
        &mut self
            .targets
            .iter_mut()
            .find(|(a, _)| *a == axis)
            .expect("both axes are always present")
            .1
    }
}

pub fn build_design(rec: &Recording, n_lags: usize) -> Result<DesignMatrix> {
    let n = rec.n_channels();
    if rec.len() < n_lags + 1 {
        return Err(Error::InsufficientData {
            needed: n_lags + 1,
            got: rec.len(),
        });
    }
    let rows = rec.len() - n_lags;
    let width = 1 + n * (n_lags + 1);
    let mut matrix = ColMatrix::zeros(rows, width);
    matrix.col_mut(0).fill(1.0);
    for k in 0..=n_lags {
        for ch in 0..n {
            let col = matrix.col_mut(1 + k * n + ch);
            for (r, slot) in col.iter_mut().enumerate() {
                let t = r + n_lags;
                *slot = rec.channels(t - k)[ch];
            }
        }
    }
    let targets = Axis::BOTH
        .into_iter()
        .map(|a| (a, rec.velocity(a)[n_lags..].to_vec()))
        .collect();
    Ok(DesignMatrix {
        n_channels: n,
        n_lags,
        matrix,
        targets,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Penalty on the squared non-intercept weights.
    pub ridge: f64,
    /// Z-score the non-intercept columns before solving.
    pub standardize: bool,
    /// Axes to fit. `None` fits every axis with a nonzero target, or both
    /// when all targets are zero.
    pub axes: Option<Vec<Axis>>,
}

impl FitOptions {
    pub fn ridge(ridge: f64) -> Self {
        Self {
            ridge,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ridge.is_finite() && self.ridge >= 0.0) {
            return Err(Error::validation(format!(
                "ridge must be finite and >= 0, got {}",
                self.ridge
            )));
        }
        Ok(())
    }
}

pub fn fit(design: &DesignMatrix, opts: &FitOptions) -> Result<DecoderModel> {
    opts.validate()?;
    let axes: Vec<Axis> = match &opts.axes {
        Some(a) if !a.is_empty() => a.clone(),
        Some(_) => return Err(Error::config("no axes requested")),
        None => {
            let active: Vec<Axis> = Axis::BOTH
                .into_iter()
                .filter(|&a| design.target(a).iter().any(|&v| v != 0.0))
                .collect();
            if active.is_empty() {
                Axis::BOTH.to_vec()
            } else {
                active
            }
        }
    };

    let x = design.matrix();
    let (m, p) = (x.rows(), x.cols());

    // Column transform: z_j = (x_j - shift_j) / scale_j.
    let mut shift = vec![0.0; p];
    let mut scale = vec![1.0; p];
    if opts.standardize {
        for j in 1..p {
            let col = x.col(j);
            let mean = col.iter().sum::<f64>() / m as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
            shift[j] = mean;
            if var > 0.0 {
                scale[j] = var.sqrt();
            }
        }
    }

    let extra = if opts.ridge > 0.0 { p - 1 } else { 0 };
    let mut a = ColMatrix::zeros(m + extra, p);
    for j in 0..p {
        let (s, c) = (shift[j], scale[j]);
        let src = x.col(j);
        let dst = a.col_mut(j);
        for (d, v) in dst[..m].iter_mut().zip(src) {
            *d = (v - s) / c;
        }
        if extra > 0 && j > 0 {
            dst[m + j - 1] = opts.ridge.sqrt();
        }
    }
    let rhs: Vec<Vec<f64>> = axes
        .iter()
        .map(|&axis| {
            let mut b = design.target(axis).to_vec();
            b.resize(m + extra, 0.0);
            b
        })
        .collect();

    let solutions = linalg::solve_least_squares(&a, &rhs)?;

    let nl = design.n_lags();
    let nc = design.n_channels();
    let axis_models = axes
        .iter()
        .zip(solutions)
        .map(|(&axis, beta)| {
            let raw: Vec<f64> = (0..p)
                .map(|j| if j == 0 { beta[0] } else { beta[j] / scale[j] })
                .collect();
            let intercept = raw[0] - (1..p).map(|j| raw[j] * shift[j]).sum::<f64>();
            let mut weights = vec![0.0; nc * (nl + 1)];
            for k in 0..=nl {
                for n in 0..nc {
                    weights[n * (nl + 1) + k] = raw[design.column_index(n, k)];
                }
            }
            AxisModel {
                axis,
                intercept,
                weights,
            }
        })
        .collect();
    DecoderModel::from_parts(nc, nl, axis_models)
}

/// Agreement between decoded and observed velocity on one axis.
#[derive(Clone, Debug, PartialEq)]
pub struct AxisEval {
    pub axis: Axis,
    /// Pearson correlation; `None` when either series has zero variance.
    pub r: Option<f64>,
    pub rmse: f64,
    pub observed: Vec<f64>,
    pub decoded: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub axes: Vec<AxisEval>,
    pub n_samples: usize,
    /// Recording index of the first evaluated sample.
    pub first_t: usize,
}

impl EvalReport {
    pub fn axis(&self, axis: Axis) -> Option<&AxisEval> {
        self.axes.iter().find(|a| a.axis == axis)
    }
}

pub fn evaluate(model: &DecoderModel, rec: &Recording) -> Result<EvalReport> {
    let mut axes = Vec::new();
    for axis in model.axes() {
        let decoded = model.predict_recording(rec, axis)?;
        let observed = rec.velocity(axis)[model.n_lags()..].to_vec();
        axes.push(AxisEval {
            axis,
            r: pearson(&observed, &decoded),
            rmse: rmse(&observed, &decoded),
            observed,
            decoded,
        });
    }
    Ok(EvalReport {
        n_samples: rec.len().saturating_sub(model.n_lags()),
        first_t: model.n_lags(),
        axes,
    })
}

pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len().min(b.len());
    if n < 2 {
        return None;
    }
    let ma = a[..n].iter().sum::<f64>() / n as f64;
    let mb = b[..n].iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a[..n].iter().zip(&b[..n]) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

pub fn rmse(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    if n == 0 {
        return 0.0;
    }
    (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n as f64).sqrt()
}
