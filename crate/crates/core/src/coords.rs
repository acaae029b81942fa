//! Network inputs for view-time coordinates.
//!
//! View coordinates run from −0.5 (left camera) to +0.5 (right camera) and
//! are only scaled before entering the view decoder. Time is normalized to
//! `[0, 1]` over the video and positionally encoded. The time decoder reads
//! its "previous frame" Jacobian at a shifted coordinate so that the two
//! branches never share an input.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::{Error, Result};

pub const LEFT_U: f32 = -0.5;
pub const RIGHT_U: f32 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewTimeCoord {
    pub u: f32,
    pub t: f32,
}

impl ViewTimeCoord {
    pub fn new(u: f32, t: f32) -> Result<Self> {
        if !(LEFT_U..=RIGHT_U).contains(&u) {
            return Err(Error::OutOfRange(format!("view coordinate u = {u} outside [-0.5, 0.5]")));
        }
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::OutOfRange(format!("time coordinate t = {t} outside [0, 1]")));
        }
        Ok(Self { u, t })
    }
}

/// Normalized time of frame `i` in an `n`-frame video.
pub fn frame_time(i: usize, n: usize) -> f32 {
    (i as f64 / (n - 1) as f64) as f32
}

/// Normalized spacing between consecutive frames.
pub fn frame_spacing(n: usize) -> f32 {
    (1.0 / (n - 1) as f64) as f32
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncodingConfig {
    pub view_scale: f32,
    pub view_pe_freqs: usize,
    pub time_pe_freqs: usize,
    /// Shift of the previous-frame branch, in frame units.
    pub alpha: f32,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        Self { view_scale: 30.0, view_pe_freqs: 5, time_pe_freqs: 10, alpha: 0.9 }
    }
}

impl EncodingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.view_scale > 0.0) {
            return Err(Error::Config(format!("view_scale must be positive, got {}", self.view_scale)));
        }
        if self.view_pe_freqs < 1 || self.time_pe_freqs < 1 {
            return Err(Error::Config("positional encodings need at least one frequency".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }

    pub fn view_input_len(&self) -> usize {
        1 + 2 * self.view_pe_freqs
    }

    pub fn time_input_len(&self) -> usize {
        2 * self.time_pe_freqs
    }
}

/// `[sin(2^0 π x), cos(2^0 π x), …, sin(2^(n−1) π x), cos(2^(n−1) π x)]`.
pub fn positional_encode(x: f32, n_freq: usize) -> Result<Vec<f32>> {
    if n_freq < 1 {
        return Err(Error::Config("positional encoding needs n_freq >= 1".into()));
    }
    let mut out = Vec::with_capacity(2 * n_freq);
    for k in 0..n_freq {
        let arg = (1u64 << k) as f64 * PI * x as f64;
        out.push(arg.sin() as f32);
        out.push(arg.cos() as f32);
    }
    Ok(out)
}

pub fn view_network_input(u: f32, cfg: &EncodingConfig) -> f32 {
    u / cfg.view_scale
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    /// Jacobian towards the next frame.
    Next,
    /// Jacobian towards the previous frame.
    Prev,
}

/// Decoder coordinate for a time Jacobian branch. `delta` is the
/// normalized frame spacing; `alpha` is measured in frames.
pub fn non_uniform_tau(t: f32, branch: Branch, delta: f32, cfg: &EncodingConfig) -> f32 {
    match branch {
        Branch::Next => t,
        Branch::Prev => t - cfg.alpha * delta,
    }
}

/// Decoder coordinate used for both branches when rendering at position
/// `c` inside the interval starting at `t0`. Training pins the interval
/// between `t0` (next branch of frame i) and `t0 + (1 - alpha) * delta`
/// (previous branch of frame i + 1); both carry the motion of that interval,
/// and the segment between them is where the network moves the flow field
/// from one frame's layout to the next.
pub fn non_uniform_render_tau(t0: f32, c: f32, delta: f32, cfg: &EncodingConfig) -> f32 {
    t0 + c * (1.0 - cfg.alpha) * delta
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoordInput {
    /// View decoder input from a view-time coordinate.
    View(ViewTimeCoord),
    /// Time decoder input from an (already shifted) time coordinate.
    Time(f32),
}

/// Flat input vector for a decoder: `[u / scale] ++ PE(t, view_pe_freqs)`
/// for the view decoder and `PE(τ, time_pe_freqs)` for a time decoder.
pub fn assemble_coord(input: CoordInput, cfg: &EncodingConfig) -> Result<Vec<f32>> {
    match input {
        CoordInput::View(c) => {
            let mut v = Vec::with_capacity(cfg.view_input_len());
            v.push(view_network_input(c.u, cfg));
            v.extend(positional_encode(c.t, cfg.view_pe_freqs)?);
            Ok(v)
        }
        CoordInput::Time(tau) => positional_encode(tau, cfg.time_pe_freqs),
    }
}
