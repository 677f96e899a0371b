use crate::signal::{frame_count, ms_to_samples, window, Waveform, WindowKind, FRAME_MS, STEP_MS};

pub const F0_MIN_HZ: f64 = 60.0;
pub const F0_MAX_HZ: f64 = 400.0;
pub const VOICING_THRESHOLD: f64 = 0.45;
/// Frames quieter than the loudest frame by more than this are silent.
const SILENCE_RANGE_DB: f64 = 40.0;
/// Absolute floor on mean-square frame energy.
const ABSOLUTE_SILENCE: f64 = 1e-12;
/// Candidate lags within this fraction of the best correlation are
/// preferred when shorter, which suppresses sub-harmonic picks.
const OCTAVE_PREFERENCE: f64 = 0.9;

/// Per-frame fundamental frequency in Hz; 0 marks an unvoiced frame.
#[derive(Debug, Clone, PartialEq)]
pub struct F0Track {
    values: Vec<f64>,
    pub frame_ms: f64,
    pub step_ms: f64,
}

impl F0Track {
    /// Track on the default 25/10 ms grid.
    pub fn from_values(values: Vec<f64>) -> Self {
        Self {
            values,
            frame_ms: FRAME_MS,
            step_ms: STEP_MS,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_voiced(&self, t: usize) -> bool {
        self.values[t] > 0.0
    }

    pub fn voiced_fraction(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().filter(|&&v| v > 0.0).count() as f64 / self.values.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchConfig {
    pub frame_ms: f64,
    pub step_ms: f64,
    pub window: WindowKind,
    pub f_min: f64,
    pub f_max: f64,
    pub threshold: f64,
}

impl Default for PitchConfig {
    fn default() -> Self {
        Self {
            frame_ms: FRAME_MS,
            step_ms: STEP_MS,
            window: WindowKind::Rectangular,
            f_min: F0_MIN_HZ,
            f_max: F0_MAX_HZ,
            threshold: VOICING_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PitchAnalysis {
    pub f0: F0Track,
    /// Height of the selected autocorrelation peak, in [0, 1]; 0 for silent
    /// frames.
    pub voicing: Vec<f64>,
}

pub fn estimate_f0(w: &Waveform) -> F0Track {
    analyze_pitch(w.samples(), w.sample_rate(), &PitchConfig::default()).f0
}

/// Normalized-autocorrelation pitch tracker.
///
/// For each frame the lag range `[rate/f_max, rate/f_min]` is searched for
/// local correlation maxima; the shortest lag within 90% of the best peak
/// wins. A frame is voiced when that peak reaches `threshold` and the frame
/// is not silent relative to the loudest frame. The F0 contour is then
/// median-filtered over 3 frames.
pub fn analyze_pitch(x: &[f64], sample_rate: u32, cfg: &PitchConfig) -> PitchAnalysis {
    let frame_len = ms_to_samples(cfg.frame_ms, sample_rate);
    let step = ms_to_samples(cfg.step_ms, sample_rate).max(1);
    let n = frame_count(x.len(), frame_len, step);
    let f0_grid = |values| F0Track {
        values,
        frame_ms: cfg.frame_ms,
        step_ms: cfg.step_ms,
    };
    if n == 0 {
        return PitchAnalysis {
            f0: f0_grid(Vec::new()),
            voicing: Vec::new(),
        };
    }
    let energy = frame_log_energy_db(x, frame_len, step);
    let loudest = energy.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min_lag = (sample_rate as f64 / cfg.f_max).ceil() as usize;
    let max_lag = ((sample_rate as f64 / cfg.f_min).floor() as usize).min(frame_len.saturating_sub(2));
    let win = window(cfg.window, frame_len);
    let win_ac = if cfg.window == WindowKind::Rectangular {
        None
    } else {
        Some(autocorr_normalized(&win, max_lag + 1))
    };

    let mut raw = vec![0.0; n];
    let mut voicing = vec![0.0; n];
    for t in 0..n {
        let frame = &x[t * step..t * step + frame_len];
        let ms = frame.iter().map(|v| v * v).sum::<f64>() / frame_len as f64;
        if ms <= ABSOLUTE_SILENCE || energy[t] < loudest - SILENCE_RANGE_DB || min_lag >= max_lag {
            continue;
        }
        let r = match &win_ac {
            None => ncc(frame, max_lag + 1),
            Some(wac) => {
                let windowed: Vec<f64> = frame.iter().zip(&win).map(|(a, b)| a * b).collect();
                let mut r = autocorr_normalized(&windowed, max_lag + 1);
                for (v, w) in r.iter_mut().zip(wac) {
                    *v = if *w > 1e-3 { (*v / w).min(1.0) } else { 0.0 };
                }
                r
            }
        };
        if let Some((lag, peak)) = pick_peak(&r, min_lag, max_lag) {
            voicing[t] = peak.clamp(0.0, 1.0);
            if peak >= cfg.threshold {
                let f = sample_rate as f64 / lag;
                raw[t] = f.clamp(cfg.f_min, cfg.f_max);
            }
        }
    }
    PitchAnalysis {
        f0: f0_grid(median3(&raw)),
        voicing,
    }
}

/// Normalized cross-correlation between the frame and its lagged copy over
/// the overlapping part; exactly 1 at the period of a periodic signal.
fn ncc(frame: &[f64], n_lags: usize) -> Vec<f64> {
    let n = frame.len();
    let mut out = vec![0.0; n_lags];
    for (lag, slot) in out.iter_mut().enumerate().take(n) {
        let a = &frame[..n - lag];
        let b = &frame[lag..];
        let mut xy = 0.0;
        let mut xx = 0.0;
        let mut yy = 0.0;
        for (u, v) in a.iter().zip(b) {
            xy += u * v;
            xx += u * u;
            yy += v * v;
        }
        let den = (xx * yy).sqrt();
        *slot = if den > 0.0 { xy / den } else { 0.0 };
    }
    out
}

fn autocorr_normalized(x: &[f64], n_lags: usize) -> Vec<f64> {
    let r0: f64 = x.iter().map(|v| v * v).sum();
    (0..n_lags)
        .map(|lag| {
            if lag >= x.len() || r0 <= 0.0 {
                return 0.0;
            }
            x[..x.len() - lag].iter().zip(&x[lag..]).map(|(a, b)| a * b).sum::<f64>() / r0
        })
        .collect()
}

/// Returns the refined lag (parabolic interpolation) and peak height.
fn pick_peak(r: &[f64], min_lag: usize, max_lag: usize) -> Option<(f64, f64)> {
    let candidates: Vec<usize> = (min_lag.max(1)..=max_lag.min(r.len() - 2))
        .filter(|&l| r[l] >= r[l - 1] && r[l] >= r[l + 1] && r[l] > 0.0)
        .collect();
    let best = candidates.iter().map(|&l| r[l]).fold(f64::NEG_INFINITY, f64::max);
    let lag = *candidates.iter().find(|&&l| r[l] >= OCTAVE_PREFERENCE * best)?;
    let (a, b, c) = (r[lag - 1], r[lag], r[lag + 1]);
    let den = a - 2.0 * b + c;
    let shift = if den.abs() > 1e-12 {
        (0.5 * (a - c) / den).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    Some((lag as f64 + shift, r[lag]))
}

fn median3(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|t| {
            let a = x[t.saturating_sub(1)];
            let b = x[t];
            let c = x[(t + 1).min(n - 1)];
            a.max(b).min(a.min(b).max(c))
        })
        .collect()
}

/// Per-frame log energy in dB of the mean square, on a rectangular grid.
pub fn frame_log_energy_db(x: &[f64], frame_len: usize, step: usize) -> Vec<f64> {
    let n = frame_count(x.len(), frame_len, step);
    (0..n)
        .map(|t| {
            let frame = &x[t * step..t * step + frame_len];
            let ms = frame.iter().map(|v| v * v).sum::<f64>() / frame_len as f64;
            10.0 * (ms + 1e-20).log10()
        })
        .collect()
}
