//! Cycle-level perturbation measures (jitter, shimmer, PPQ5, APQ11).
//!
//! Every measure is reported in percent, relative to the mean period or
//! mean peak amplitude of the sequence it is computed on.

use crate::dsp::F0Track;

/// One glottal cycle located by peak picking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cycle {
    /// peak position in (fractional) samples
    pub position: f64,
    pub amplitude: f64,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// |x_i - x_{i-1}| relative to the mean, per consecutive pair.
pub fn local_track(x: &[f64]) -> Vec<f64> {
    if x.len() < 2 {
        return Vec::new();
    }
    let m = mean(x);
    if m <= 0.0 {
        return Vec::new();
    }
    x.windows(2).map(|w| 100.0 * (w[1] - w[0]).abs() / m).collect()
}

/// |x_i - mean of the `width`-point neighbourhood| relative to the mean of
/// the whole sequence, for every centre with a full neighbourhood.
pub fn quotient_track(x: &[f64], width: usize) -> Vec<f64> {
    if x.len() < width || width == 0 {
        return Vec::new();
    }
    let m = mean(x);
    if m <= 0.0 {
        return Vec::new();
    }
    let half = width / 2;
    (half..x.len() - half)
        .map(|i| {
            let local = mean(&x[i - half..=i + half]);
            100.0 * (x[i] - local).abs() / m
        })
        .collect()
}

fn mean_of(track: Vec<f64>) -> Option<f64> {
    (!track.is_empty()).then(|| mean(&track))
}

/// Mean absolute difference of consecutive periods over the mean period.
pub fn jitter_local(periods: &[f64]) -> Option<f64> {
    mean_of(local_track(periods))
}

/// Five-point period perturbation quotient; needs at least 5 periods.
pub fn jitter_ppq5(periods: &[f64]) -> Option<f64> {
    mean_of(quotient_track(periods, 5))
}

pub fn shimmer_local(amplitudes: &[f64]) -> Option<f64> {
    mean_of(local_track(amplitudes))
}

/// Eleven-point amplitude perturbation quotient; needs at least 11 peaks.
pub fn shimmer_apq11(amplitudes: &[f64]) -> Option<f64> {
    mean_of(quotient_track(amplitudes, 11))
}

/// Locates successive positive waveform peaks one local period apart.
///
/// Starts at the largest sample in the first period and then searches
/// `[0.75 T, 1.25 T]` after each peak, where `T` comes from the F0 track at
/// that point. Peak positions and heights are refined by a parabola through
/// the log amplitudes (plain parabola when a neighbour is not positive).
pub fn pick_cycles(
    x: &[f64],
    start: usize,
    end: usize,
    f0: &F0Track,
    step: usize,
    sample_rate: u32,
) -> Vec<Cycle> {
    let period_at = |pos: usize| -> Option<f64> {
        let t = (pos / step).min(f0.len().saturating_sub(1));
        // nearest voiced frame, searching outwards
        (0..f0.len()).find_map(|d| {
            [t.checked_sub(d), Some(t + d)]
                .into_iter()
                .flatten()
                .filter(|&i| i < f0.len())
                .find(|&i| f0.values()[i] > 0.0)
                .map(|i| sample_rate as f64 / f0.values()[i])
        })
    };
    let end = end.min(x.len());
    let Some(first_period) = period_at(start) else {
        return Vec::new();
    };
    let first_end = (start + first_period.round() as usize).min(end);
    if first_end <= start + 2 {
        return Vec::new();
    }
    let mut cycles = Vec::new();
    let mut peak = argmax(x, start, first_end);
    loop {
        if x[peak] <= 0.0 {
            break;
        }
        if peak > 0 && peak + 1 < x.len() {
            cycles.push(refine(x, peak));
        }
        let Some(period) = period_at(peak) else { break };
        let lo = peak + (0.75 * period).round() as usize;
        let hi = peak + (1.25 * period).round() as usize + 1;
        if hi > end {
            break;
        }
        peak = argmax(x, lo, hi);
    }
    cycles
}

fn argmax(x: &[f64], lo: usize, hi: usize) -> usize {
    (lo..hi).fold(lo, |best, i| if x[i] > x[best] { i } else { best })
}

fn refine(x: &[f64], i: usize) -> Cycle {
    let (a, b, c) = (x[i - 1], x[i], x[i + 1]);
    let (la, lb, lc, log) = if a > 0.0 && c > 0.0 {
        (a.ln(), b.ln(), c.ln(), true)
    } else {
        (a, b, c, false)
    };
    let den = la - 2.0 * lb + lc;
    if den >= 0.0 {
        return Cycle {
            position: i as f64,
            amplitude: b,
        };
    }
    let shift = (0.5 * (la - lc) / den).clamp(-0.5, 0.5);
    let top = lb - 0.25 * (la - lc) * shift;
    Cycle {
        position: i as f64 + shift,
        amplitude: if log { top.exp() } else { top },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_periods_have_no_jitter() {
        let p = [0.005; 12];
        assert_eq!(jitter_local(&p), Some(0.0));
        assert_eq!(jitter_ppq5(&p), Some(0.0));
    }

    #[test]
    fn four_periods_have_no_ppq5() {
        assert_eq!(jitter_ppq5(&[0.005, 0.0051, 0.005, 0.0049]), None);
        assert_eq!(shimmer_apq11(&[1.0; 10]), None);
        assert_eq!(jitter_local(&[0.005]), None);
    }

    #[test]
    fn alternating_periods() {
        let p: Vec<f64> = (0..40).map(|i| if i % 2 == 0 { 5.00e-3 } else { 5.05e-3 }).collect();
        let j = jitter_local(&p).unwrap();
        assert!((j - 100.0 * 0.05 / 5.025).abs() < 1e-9);
    }

    /// Independent direct summation of the eleven-point quotient.
    fn apq11_direct(a: &[f64]) -> f64 {
        let n = a.len();
        let overall = a.iter().sum::<f64>() / n as f64;
        let mut total = 0.0;
        let mut count = 0.0;
        for i in 5..n - 5 {
            let mut s = 0.0;
            for k in 0..11 {
                s += a[i - 5 + k];
            }
            total += (a[i] - s / 11.0).abs();
            count += 1.0;
        }
        100.0 * (total / count) / overall
    }

    #[test]
    fn apq11_matches_direct_summation() {
        let a = [1.0, 1.0, 1.0, 1.0, 2.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        let got = shimmer_apq11(&a).unwrap();
        assert!((got - apq11_direct(&a)).abs() < 1e-12);
        assert!((got - 100.0 / 12.0).abs() < 1e-12);

        let b: Vec<f64> = (0..30).map(|i| 1.0 + 0.1 * ((i * 7 % 11) as f64)).collect();
        assert!((shimmer_apq11(&b).unwrap() - apq11_direct(&b)).abs() < 1e-12);
    }

    #[test]
    fn gaussian_peaks_are_refined_exactly() {
        let centre = 20.37;
        let x: Vec<f64> = (0..40)
            .map(|i| 0.8 * (-((i as f64 - centre).powi(2)) / 8.0).exp())
            .collect();
        let c = refine(&x, 20);
        assert!((c.position - centre).abs() < 1e-9);
        assert!((c.amplitude - 0.8).abs() < 1e-9);
    }
}
