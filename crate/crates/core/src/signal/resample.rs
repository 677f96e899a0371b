use std::f64::consts::PI;

use super::Waveform;
use crate::error::{Error, Result};

pub const TARGET_RATE: u32 = 8000;

/// -6 dB point of the anti-aliasing filter, as a fraction of the target
/// Nyquist frequency.
const CUTOFF_FRACTION: f64 = 0.9875;
/// Full transition width in Hz at the target rate, centred on the cutoff.
const TRANSITION_HZ: f64 = 100.0;
/// Stopband attenuation in dB used to size the Kaiser window.
const ATTENUATION_DB: f64 = 60.0;
/// Beyond this many distinct fractional phases the kernels are computed on
/// the fly instead of cached.
const MAX_CACHED_PHASES: usize = 4096;

pub fn resample_to_8k(w: &Waveform) -> Result<Waveform> {
    resample(w, TARGET_RATE)
}

/// Band-limits and decimates `w` to `target_rate` with a Kaiser-windowed
/// sinc interpolator evaluated at the exact rational output instants.
pub fn resample(w: &Waveform, target_rate: u32) -> Result<Waveform> {
    let src_rate = w.sample_rate();
    if src_rate < target_rate {
        return Err(Error::UpsamplingNotSupported(src_rate));
    }
    if src_rate == target_rate {
        return Ok(w.clone());
    }
    let n_out = ((w.len() as f64) * target_rate as f64 / src_rate as f64).round() as usize;
    let filter = SincFilter::new(src_rate, target_rate);
    let x = w.samples();
    let g = gcd(src_rate as u64, target_rate as u64);
    let n_phases = (target_rate as u64 / g) as usize;
    let src = src_rate as u64;
    let tgt = target_rate as u64;

    let mut cache: Vec<Option<Vec<f64>>> = if n_phases <= MAX_CACHED_PHASES {
        vec![None; n_phases]
    } else {
        Vec::new()
    };
    let mut out = Vec::with_capacity(n_out.max(1));
    for m in 0..n_out as u64 {
        let num = m * src;
        let base = (num / tgt) as i64;
        let rem = num % tgt;
        let frac = rem as f64 / tgt as f64;
        let y = if cache.is_empty() {
            filter.apply(x, base, &filter.kernel(frac))
        } else {
            let phase = (rem / g) as usize;
            let kernel = cache[phase].get_or_insert_with(|| filter.kernel(frac));
            filter.apply(x, base, kernel)
        };
        out.push(y);
    }
    if out.is_empty() {
        // a handful of input samples can round to zero outputs
        out.push(filter.apply(x, 0, &filter.kernel(0.0)));
    }
    Waveform::new(out, target_rate, w.source_id())
}

struct SincFilter {
    /// cutoff as a fraction of the source sampling rate
    fc: f64,
    half_width: f64,
    reach: i64,
    beta: f64,
}

impl SincFilter {
    fn new(src_rate: u32, target_rate: u32) -> Self {
        let cutoff_hz = CUTOFF_FRACTION * target_rate as f64 / 2.0;
        let fc = cutoff_hz / src_rate as f64;
        let dw = 2.0 * PI * TRANSITION_HZ / src_rate as f64;
        let taps = (ATTENUATION_DB - 8.0) / (2.285 * dw);
        let half_width = (taps / 2.0).ceil();
        let beta = 0.1102 * (ATTENUATION_DB - 8.7);
        Self {
            fc,
            half_width,
            reach: half_width as i64 + 1,
            beta,
        }
    }

    /// Taps for offsets -reach..=reach around the integer part of the output
    /// instant, normalised to unit DC gain.
    fn kernel(&self, frac: f64) -> Vec<f64> {
        let i0_beta = bessel_i0(self.beta);
        let mut taps: Vec<f64> = (-self.reach..=self.reach)
            .map(|j| {
                let u = frac - j as f64;
                if u.abs() > self.half_width {
                    return 0.0;
                }
                let r = u / self.half_width;
                let win = bessel_i0(self.beta * (1.0 - r * r).max(0.0).sqrt()) / i0_beta;
                2.0 * self.fc * sinc(2.0 * self.fc * u) * win
            })
            .collect();
        let sum: f64 = taps.iter().sum();
        if sum != 0.0 {
            taps.iter_mut().for_each(|t| *t /= sum);
        }
        taps
    }

    fn apply(&self, x: &[f64], base: i64, kernel: &[f64]) -> f64 {
        let lo = base - self.reach;
        let start = lo.max(0);
        let end = (base + self.reach + 1).min(x.len() as i64);
        let mut acc = 0.0;
        for k in start..end {
            acc += x[k as usize] * kernel[(k - lo) as usize];
        }
        acc
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = PI * x;
        px.sin() / px
    }
}

/// Modified Bessel function of the first kind, order zero (power series).
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}
