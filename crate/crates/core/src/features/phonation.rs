use super::perturbation::{local_track, pick_cycles, quotient_track};
use super::{FeatureVector, Scheme};
use crate::dsp::{column_functionals, delta_column, estimate_f0, FunctionalSet};
use crate::signal::{voiced_segments, SegmentKind, Waveform, FRAME_MS, STEP_MS};

pub const PHONATION_DIM: usize = 28;

const DESCRIPTORS: [&str; 7] = [
    "dF0", "ddF0", "jitter", "shimmer", "apq11", "ppq5", "log_energy",
];

/// Phonation descriptors pooled over all voiced frames and cycles:
/// F0 first/second derivatives, jitter, shimmer, APQ11, PPQ5 and frame
/// log-energy, each summarised by mean, std, skewness and kurtosis.
pub fn phonation_features(w: &Waveform) -> FeatureVector {
    let fs = FunctionalSet::moments();
    let names = DESCRIPTORS
        .iter()
        .flat_map(|d| fs.iter().map(move |f| format!("pho.{d}.{}", f.name())))
        .collect();
    let columns = phonation_columns(w);
    let mut warnings = Vec::new();
    if columns[6].is_empty() {
        warnings.push("no voiced frames; phonation block zero-filled".into());
    }
    let values = columns.iter().flat_map(|c| column_functionals(c, &fs)).collect();
    FeatureVector::new(Scheme::Phonation, names, values, w.source_id(), warnings)
}

/// Per-descriptor pooled values (ragged; absent values omitted).
pub(crate) fn phonation_columns(w: &Waveform) -> Vec<Vec<f64>> {
    let f0 = estimate_f0(w);
    let (spans, _) = voiced_segments(w, &f0);
    let step = w.ms_to_samples(STEP_MS);
    let frame_len = w.ms_to_samples(FRAME_MS);
    let x = w.samples();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); DESCRIPTORS.len()];

    for span in spans.iter().filter(|s| s.kind == SegmentKind::Voiced) {
        let frames: Vec<usize> = (span.start_sample / step..f0.len())
            .take_while(|&t| t * step < span.end_sample)
            .filter(|&t| f0.is_voiced(t))
            .collect();
        if frames.is_empty() {
            continue;
        }
        let contour: Vec<f64> = frames.iter().map(|&t| f0.values()[t]).collect();
        let d1 = delta_column(&contour, 2);
        let d2 = delta_column(&d1, 2);
        cols[0].extend(d1);
        cols[1].extend(d2);
        for &t in &frames {
            let frame = &x[t * step..(t * step + frame_len).min(x.len())];
            let ms = frame.iter().map(|v| v * v).sum::<f64>() / frame.len() as f64;
            cols[6].push((ms + 1e-10).ln());
        }

        let cycles = pick_cycles(x, span.start_sample, span.end_sample, &f0, step, w.sample_rate());
        let periods: Vec<f64> = cycles
            .windows(2)
            .map(|c| (c[1].position - c[0].position) / w.sample_rate() as f64)
            .collect();
        let amplitudes: Vec<f64> = cycles.iter().map(|c| c.amplitude).collect();
        cols[2].extend(local_track(&periods));
        cols[3].extend(local_track(&amplitudes));
        cols[4].extend(quotient_track(&amplitudes, 11));
        cols[5].extend(quotient_track(&periods, 5));
    }
    cols
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Gaussian glottal-like pulses at the given fractional sample positions.
    fn pulses(positions: &[f64], amplitudes: &[f64], n: usize) -> Vec<f64> {
        let mut x = vec![0.0; n];
        for (&p, &a) in positions.iter().zip(amplitudes) {
            let lo = (p - 12.0).max(0.0) as usize;
            let hi = ((p + 12.0) as usize).min(n - 1);
            for (i, v) in x.iter_mut().enumerate().take(hi + 1).skip(lo) {
                *v += a * (-((i as f64 - p).powi(2)) / 8.0).exp();
            }
        }
        x
    }

    fn train(periods_ms: &[f64], secs: f64) -> Waveform {
        let n = (secs * 8000.0) as usize;
        let mut pos = Vec::new();
        let mut t = 20.0;
        let mut k = 0;
        while t < n as f64 - 20.0 {
            pos.push(t);
            t += periods_ms[k % periods_ms.len()] * 8.0;
            k += 1;
        }
        let amps = vec![0.8; pos.len()];
        Waveform::new(pulses(&pos, &amps, n), 8000, "train").unwrap()
    }

    #[test]
    fn periodic_train_has_no_perturbation() {
        let cols = phonation_columns(&train(&[5.0], 1.0));
        let jitter = cols[2].iter().sum::<f64>() / cols[2].len() as f64;
        let shimmer = cols[3].iter().sum::<f64>() / cols[3].len() as f64;
        assert!(jitter < 1e-3, "jitter {jitter}");
        assert!(shimmer < 1e-3, "shimmer {shimmer}");
    }

    #[test]
    fn alternating_train_jitter() {
        let cols = phonation_columns(&train(&[5.00, 5.05], 1.0));
        let jitter = cols[2].iter().sum::<f64>() / cols[2].len() as f64;
        let expected = 100.0 * 0.05 / 5.025;
        assert!((jitter - expected).abs() <= 0.05 * expected, "jitter {jitter}");
    }

    #[test]
    fn dimension_and_silence() {
        let v = phonation_features(&train(&[6.0], 0.5));
        assert_eq!(v.dim(), PHONATION_DIM);
        let silent = phonation_features(&Waveform::new(vec![0.0; 4000], 8000, "z").unwrap());
        assert_eq!(silent.dim(), PHONATION_DIM);
        assert!(silent.values.iter().all(|&v| v == 0.0));
        assert_eq!(silent.warnings.len(), 1);
    }
}
