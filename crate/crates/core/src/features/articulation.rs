use super::{FeatureVector, Scheme};
use crate::dsp::{
    bark_band_energies, column_functionals, delta_column, estimate_f0, formants_f1_f2, mfcc,
    FunctionalSet, BARK_BANDS,
};
use crate::signal::{
    frame_signal, voiced_segments, Direction, SegmentKind, Waveform, WindowKind, FRAME_MS, STEP_MS,
};

pub const ARTICULATION_DIM: usize = 488;

const MFCC_MELS: usize = 24;
const MFCC_COEFFS: usize = 12;
/// Bark energies, MFCC, delta and delta-delta MFCC of one transition side.
const TRANSITION_DESCRIPTORS: usize = BARK_BANDS + 3 * MFCC_COEFFS;
const FORMANT_DESCRIPTORS: usize = 6;

/// Onset and offset transition spectra plus F1/F2 trajectories, each
/// descriptor summarised by mean, std, skewness and kurtosis.
pub fn articulation_features(w: &Waveform) -> FeatureVector {
    let fs = FunctionalSet::moments();
    let mut names = Vec::with_capacity(ARTICULATION_DIM);
    for descriptor in descriptor_names() {
        for f in fs.iter() {
            names.push(format!("art.{descriptor}.{}", f.name()));
        }
    }
    let (columns, warnings) = articulation_columns(w);
    let values = columns.iter().flat_map(|c| column_functionals(c, &fs)).collect();
    FeatureVector::new(Scheme::Articulation, names, values, w.source_id(), warnings)
}

fn descriptor_names() -> Vec<String> {
    let mut names = Vec::new();
    for side in ["onset", "offset"] {
        names.extend((0..BARK_BANDS).map(|k| format!("{side}.bark{k}")));
        for prefix in ["mfcc", "dmfcc", "ddmfcc"] {
            names.extend((1..=MFCC_COEFFS).map(|k| format!("{side}.{prefix}{k}")));
        }
    }
    for f in ["F1", "F2"] {
        names.extend([f.to_string(), format!("d{f}"), format!("dd{f}")]);
    }
    names
}

/// Ragged descriptor columns in output order, and degeneracy warnings.
pub(crate) fn articulation_columns(w: &Waveform) -> (Vec<Vec<f64>>, Vec<String>) {
    let f0 = estimate_f0(w);
    let (spans, transitions) = voiced_segments(w, &f0);
    let mut warnings = Vec::new();
    let mut onset = vec![Vec::new(); TRANSITION_DESCRIPTORS];
    let mut offset = vec![Vec::new(); TRANSITION_DESCRIPTORS];

    for tr in &transitions {
        let block = match tr.direction {
            Direction::Onset => &mut onset,
            Direction::Offset => &mut offset,
        };
        for (k, e) in bark_band_energies(&tr.chunk, w.sample_rate()).into_iter().enumerate() {
            block[k].push(e);
        }
        let Ok(chunk) = w.with_samples(tr.chunk.clone()) else {
            continue;
        };
        let Ok(frames) = frame_signal(&chunk, FRAME_MS, STEP_MS, WindowKind::Hann) else {
            continue;
        };
        let cc = mfcc(&frames, MFCC_MELS, MFCC_COEFFS + 1);
        for k in 0..MFCC_COEFFS {
            let c = cc.column(k + 1);
            let d1 = delta_column(&c, 2);
            let d2 = delta_column(&d1, 2);
            block[BARK_BANDS + k].extend(c);
            block[BARK_BANDS + MFCC_COEFFS + k].extend(d1);
            block[BARK_BANDS + 2 * MFCC_COEFFS + k].extend(d2);
        }
    }
    if transitions.is_empty() {
        warnings.push("no voicing transitions; transition blocks zero-filled".into());
    } else {
        if onset[0].is_empty() {
            warnings.push("no onset transitions; onset block zero-filled".into());
        }
        if offset[0].is_empty() {
            warnings.push("no offset transitions; offset block zero-filled".into());
        }
    }

    let mut formants = vec![Vec::new(); FORMANT_DESCRIPTORS];
    let step = w.ms_to_samples(STEP_MS);
    let frame_len = w.ms_to_samples(FRAME_MS);
    let x = w.samples();
    for span in spans.iter().filter(|s| s.kind == SegmentKind::Voiced) {
        let mut f1 = Vec::new();
        let mut f2 = Vec::new();
        for t in (span.start_sample / step..f0.len()).take_while(|&t| t * step < span.end_sample) {
            if !f0.is_voiced(t) || t * step + frame_len > x.len() {
                continue;
            }
            let (a, b) = formants_f1_f2(&x[t * step..t * step + frame_len], w.sample_rate());
            f1.extend(a);
            f2.extend(b);
        }
        for (base, contour) in [(0, f1), (3, f2)] {
            if contour.is_empty() {
                continue;
            }
            let d1 = delta_column(&contour, 2);
            let d2 = delta_column(&d1, 2);
            formants[base].extend(contour);
            formants[base + 1].extend(d1);
            formants[base + 2].extend(d2);
        }
    }
    if formants[0].is_empty() && formants[3].is_empty() {
        warnings.push("no voiced frames with formants; formant block zero-filled".into());
    }

    let mut columns = onset;
    columns.extend(offset);
    columns.extend(formants);
    (columns, warnings)
}
