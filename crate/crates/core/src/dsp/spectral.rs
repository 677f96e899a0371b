use std::cell::RefCell;
use std::f64::consts::PI;

use rustfft::{num_complex::Complex, FftPlanner};

use super::track::FeatureTrack;
use crate::signal::FrameSeries;

pub const BARK_BANDS: usize = 22;
/// Floor applied before every logarithm of a spectral energy.
pub const LOG_FLOOR: f64 = 1e-10;
const MIN_FFT: usize = 512;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// |X(k)|^2 for k = 0..=n_fft/2 of the zero-padded frame.
pub fn power_spectrum(frame: &[f64], n_fft: usize) -> Vec<f64> {
    let mut buf: Vec<Complex<f64>> = frame
        .iter()
        .take(n_fft)
        .map(|&v| Complex::new(v, 0.0))
        .collect();
    buf.resize(n_fft, Complex::new(0.0, 0.0));
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n_fft));
    fft.process(&mut buf);
    buf[..=n_fft / 2].iter().map(|c| c.norm_sqr()).collect()
}

fn fft_size(frame_len: usize) -> usize {
    frame_len.next_power_of_two().max(MIN_FFT)
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters equally spaced on the mel scale, each normalised to
/// unit weight sum so a flat spectrum yields equal band energies.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    weights: Vec<Vec<(usize, f64)>>,
}

impl MelFilterbank {
    pub fn new(n_mels: usize, n_fft: usize, sample_rate: u32, f_lo: f64, f_hi: f64) -> Self {
        let n_bins = n_fft / 2 + 1;
        let bin_hz = sample_rate as f64 / n_fft as f64;
        let (m_lo, m_hi) = (hz_to_mel(f_lo), hz_to_mel(f_hi));
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(m_lo + (m_hi - m_lo) * i as f64 / (n_mels + 1) as f64))
            .collect();
        let weights = (0..n_mels)
            .map(|m| {
                let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
                let mut w: Vec<(usize, f64)> = (0..n_bins)
                    .filter_map(|k| {
                        let f = k as f64 * bin_hz;
                        let v = if f > lo && f <= mid {
                            (f - lo) / (mid - lo)
                        } else if f > mid && f < hi {
                            (hi - f) / (hi - mid)
                        } else {
                            0.0
                        };
                        (v > 0.0).then_some((k, v))
                    })
                    .collect();
                if w.is_empty() {
                    // narrower than one bin: take the nearest bin
                    let k = ((mid / bin_hz).round() as usize).min(n_bins - 1);
                    w.push((k, 1.0));
                }
                let sum: f64 = w.iter().map(|p| p.1).sum();
                w.iter_mut().for_each(|p| p.1 /= sum);
                w
            })
            .collect();
        Self { weights }
    }

    pub fn n_mels(&self) -> usize {
        self.weights.len()
    }

    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|w| w.iter().map(|&(k, v)| power[k] * v).sum())
            .collect()
    }

    pub fn log_energies(&self, power: &[f64]) -> Vec<f64> {
        self.apply(power)
            .into_iter()
            .map(|e| e.max(LOG_FLOOR).ln())
            .collect()
    }
}

/// Orthonormal DCT-II basis, `n_coeffs` rows of length `n`.
pub fn dct_matrix(n_coeffs: usize, n: usize) -> Vec<Vec<f64>> {
    (0..n_coeffs)
        .map(|k| {
            let scale = if k == 0 {
                (1.0 / n as f64).sqrt()
            } else {
                (2.0 / n as f64).sqrt()
            };
            (0..n)
                .map(|i| scale * (PI * k as f64 * (i as f64 + 0.5) / n as f64).cos())
                .collect()
        })
        .collect()
}

/// MFCCs of one (already windowed) frame.
pub fn mfcc_frame(
    frame: &[f64],
    bank: &MelFilterbank,
    dct: &[Vec<f64>],
    n_fft: usize,
) -> Vec<f64> {
    let log_e = bank.log_energies(&power_spectrum(frame, n_fft));
    dct.iter()
        .map(|row| row.iter().zip(&log_e).map(|(a, b)| a * b).sum())
        .collect()
}

/// Power spectrum, mel filterbank over 0..rate/2, log, orthonormal DCT-II;
/// the first `n_coeffs` coefficients per frame.
pub fn mfcc(frames: &FrameSeries, n_mels: usize, n_coeffs: usize) -> FeatureTrack {
    assert!(n_coeffs <= n_mels, "n_coeffs must not exceed n_mels");
    let n_fft = fft_size(frames.frame_len());
    let bank = MelFilterbank::new(n_mels, n_fft, frames.sample_rate, 0.0, frames.sample_rate as f64 / 2.0);
    let dct = dct_matrix(n_coeffs, n_mels);
    let rows = frames.iter().map(|f| mfcc_frame(f, &bank, &dct, n_fft)).collect();
    FeatureTrack::new((0..n_coeffs).map(|k| format!("mfcc{k}")).collect(), rows)
}

/// Log mel-band energies per frame.
pub fn log_mel_bands(frames: &FrameSeries, n_mels: usize, f_lo: f64, f_hi: f64) -> FeatureTrack {
    let n_fft = fft_size(frames.frame_len());
    let bank = MelFilterbank::new(n_mels, n_fft, frames.sample_rate, f_lo, f_hi);
    let rows = frames
        .iter()
        .map(|f| bank.log_energies(&power_spectrum(f, n_fft)))
        .collect();
    FeatureTrack::new((0..n_mels).map(|k| format!("logmel{k}")).collect(), rows)
}

/// Zwicker critical-band rate in Bark.
pub fn bark(f: f64) -> f64 {
    13.0 * (0.00076 * f).atan() + 3.5 * (f / 7500.0).powi(2).atan()
}

/// Log energies in 22 critical bands, equally wide on the Bark axis between
/// 0 Hz and the Nyquist frequency. Each band energy is the mean power of
/// the periodogram bins it contains, so a flat spectrum gives equal bands.
/// Chunks shorter than 64 samples are zero-padded.
pub fn bark_band_energies(chunk: &[f64], sample_rate: u32) -> Vec<f64> {
    let mut x: Vec<f64> = chunk.to_vec();
    if x.len() < 64 {
        x.resize(64, 0.0);
    }
    let n_fft = x.len().next_power_of_two();
    let power = power_spectrum(&x, n_fft);
    let nyquist = sample_rate as f64 / 2.0;
    let top = bark(nyquist);
    let mut bands = vec![0.0; BARK_BANDS];
    let mut counts = vec![0usize; BARK_BANDS];
    for (k, p) in power.iter().enumerate() {
        let f = k as f64 * sample_rate as f64 / n_fft as f64;
        let b = (((bark(f) / top) * BARK_BANDS as f64).floor() as usize).min(BARK_BANDS - 1);
        bands[b] += p;
        counts[b] += 1;
    }
    bands
        .into_iter()
        .zip(counts)
        .map(|(e, c)| (e / c.max(1) as f64).max(LOG_FLOOR).ln())
        .collect()
}
