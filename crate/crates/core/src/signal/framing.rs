use std::f64::consts::PI;

use super::{ms_to_samples, Waveform};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WindowKind {
    Hann,
    Gaussian,
    Rectangular,
}

/// Symmetric analysis window of length `n`.
pub fn window(kind: WindowKind, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![1.0; n];
    }
    let m = (n - 1) as f64;
    match kind {
        WindowKind::Rectangular => vec![1.0; n],
        WindowKind::Hann => (0..n)
            .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / m).cos())
            .collect(),
        WindowKind::Gaussian => {
            // sigma = 0.4 of the half length
            let half = m / 2.0;
            (0..n)
                .map(|i| {
                    let r = (i as f64 - half) / (0.4 * half);
                    (-0.5 * r * r).exp()
                })
                .collect()
        }
    }
}

/// floor((n - frame_len) / step) + 1 when a frame fits, else 0.
pub fn frame_count(n_samples: usize, frame_len: usize, step: usize) -> usize {
    if frame_len == 0 || step == 0 || frame_len > n_samples {
        0
    } else {
        (n_samples - frame_len) / step + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameSeries {
    frames: Vec<Vec<f64>>,
    frame_len: usize,
    step: usize,
    pub frame_len_ms: f64,
    pub step_ms: f64,
    pub window_kind: WindowKind,
    pub sample_rate: u32,
}

impl FrameSeries {
    pub fn frames(&self) -> &[Vec<f64>] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.frames.iter().map(Vec::as_slice)
    }
}

/// Slices `w` into overlapping frames and applies the window to each.
pub fn frame_signal(
    w: &Waveform,
    frame_len_ms: f64,
    step_ms: f64,
    window_kind: WindowKind,
) -> Result<FrameSeries> {
    if !(step_ms > 0.0 && frame_len_ms >= step_ms) {
        return Err(Error::InvalidArgument(format!(
            "need frame_len_ms >= step_ms > 0, got {frame_len_ms}/{step_ms}"
        )));
    }
    let frame_len = ms_to_samples(frame_len_ms, w.sample_rate()).max(1);
    let step = ms_to_samples(step_ms, w.sample_rate()).max(1);
    Ok(frame_samples(
        w.samples(),
        frame_len,
        step,
        window_kind,
        w.sample_rate(),
        frame_len_ms,
        step_ms,
    ))
}

pub(crate) fn frame_samples(
    x: &[f64],
    frame_len: usize,
    step: usize,
    window_kind: WindowKind,
    sample_rate: u32,
    frame_len_ms: f64,
    step_ms: f64,
) -> FrameSeries {
    let win = window(window_kind, frame_len);
    let n = frame_count(x.len(), frame_len, step);
    let frames = (0..n)
        .map(|t| {
            x[t * step..t * step + frame_len]
                .iter()
                .zip(&win)
                .map(|(s, w)| s * w)
                .collect()
        })
        .collect();
    FrameSeries {
        frames,
        frame_len,
        step,
        frame_len_ms,
        step_ms,
        window_kind,
        sample_rate,
    }
}
