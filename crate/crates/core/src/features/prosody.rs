use super::{FeatureVector, Scheme};
use crate::dsp::{column_functionals, estimate_f0, F0Track, FunctionalSet};
use crate::signal::{
    detect_speech, voiced_segments, SegmentKind, SegmentSpan, Waveform, FRAME_MS, STEP_MS,
};

pub const PROSODY_DIM: usize = 78;

/// Frame-level contours restricted to voiced frames.
#[derive(Debug, Clone, PartialEq)]
pub struct ProsodyTracks {
    /// F0 in Hz.
    pub f0: Vec<f64>,
    /// Natural log of the frame mean square.
    pub log_energy: Vec<f64>,
}

/// One voiced segment's frame contours and frame times in seconds.
struct VoicedRun {
    times: Vec<f64>,
    f0: Vec<f64>,
    energy: Vec<f64>,
}

pub fn prosody_tracks(w: &Waveform) -> ProsodyTracks {
    let f0 = estimate_f0(w);
    let voiced: Vec<SegmentSpan> = voiced_segments(w, &f0)
        .0
        .into_iter()
        .filter(|s| s.kind == SegmentKind::Voiced)
        .collect();
    let runs = voiced_runs(w, &f0, &voiced);
    ProsodyTracks {
        f0: runs.iter().flat_map(|r| r.f0.iter().copied()).collect(),
        log_energy: runs.iter().flat_map(|r| r.energy.iter().copied()).collect(),
    }
}

/// Duration, F0 and energy statistics; the layout is listed in
/// `docs/prosody.md`.
pub fn prosody_features(w: &Waveform) -> FeatureVector {
    let fs = FunctionalSet::moments_extremes();
    let sr = w.sample_rate();
    let total = w.duration_s();

    let f0 = estimate_f0(w);
    let (spans, _) = voiced_segments(w, &f0);
    let speech = detect_speech(w);
    let voiced: Vec<SegmentSpan> = spans.iter().filter(|s| s.kind == SegmentKind::Voiced).copied().collect();
    let unvoiced: Vec<SegmentSpan> = spans
        .iter()
        .filter(|s| s.kind == SegmentKind::Unvoiced && speech_overlap(s, &speech) * 2 > s.len())
        .copied()
        .collect();
    let pauses = interior_pauses(&speech);
    let runs = voiced_runs(w, &f0, &voiced);

    let durations = |spans: &[SegmentSpan]| -> Vec<f64> { spans.iter().map(|s| s.duration_s(sr)).collect() };
    let voiced_d = durations(&voiced);
    let unvoiced_d = durations(&unvoiced);
    let pause_d = durations(&pauses);

    let mut names = Vec::with_capacity(PROSODY_DIM);
    let mut values = Vec::with_capacity(PROSODY_DIM);
    let mut push_track = |name: &str, column: &[f64]| {
        values.extend(column_functionals(column, &fs));
        names.extend(fs.iter().map(|f| format!("pro.{name}.{}", f.name())));
    };

    let f0_all: Vec<f64> = runs.iter().flat_map(|r| r.f0.iter().copied()).collect();
    let energy_all: Vec<f64> = runs.iter().flat_map(|r| r.energy.iter().copied()).collect();
    push_track("f0", &f0_all);
    push_track("log_energy", &energy_all);
    push_track("voiced_duration", &voiced_d);
    push_track("unvoiced_duration", &unvoiced_d);
    push_track("pause_duration", &pause_d);

    let fits_f0: Vec<(f64, f64)> = runs.iter().map(|r| line_fit(&r.times, &r.f0)).collect();
    let fits_energy: Vec<(f64, f64)> = runs.iter().map(|r| line_fit(&r.times, &r.energy)).collect();
    let slopes = |fits: &[(f64, f64)]| fits.iter().map(|f| f.0).collect::<Vec<_>>();
    let errors = |fits: &[(f64, f64)]| fits.iter().map(|f| f.1).collect::<Vec<_>>();
    push_track("f0_slope", &slopes(&fits_f0));
    push_track("energy_slope", &slopes(&fits_energy));
    push_track("f0_range", &runs.iter().map(|r| range(&r.f0)).collect::<Vec<_>>());
    push_track("energy_range", &runs.iter().map(|r| range(&r.energy)).collect::<Vec<_>>());
    push_track("f0_fit_mse", &errors(&fits_f0));
    push_track("energy_fit_mse", &errors(&fits_energy));

    let sum = |d: &[f64]| d.iter().sum::<f64>();
    let times_all: Vec<f64> = runs.iter().flat_map(|r| r.times.iter().copied()).collect();
    let scalars = [
        ("voiced_rate", voiced.len() as f64 / total),
        ("pause_rate", pauses.len() as f64 / total),
        ("voiced_ratio", sum(&voiced_d) / total),
        ("unvoiced_ratio", sum(&unvoiced_d) / total),
        ("pause_ratio", sum(&pause_d) / total),
        ("n_voiced", voiced.len() as f64),
        ("n_unvoiced", unvoiced.len() as f64),
        ("n_pauses", pauses.len() as f64),
        ("total_duration", total),
        ("voiced_duration_total", sum(&voiced_d)),
        ("f0_global_slope", line_fit(&times_all, &f0_all).0),
        ("energy_global_slope", line_fit(&times_all, &energy_all).0),
    ];
    names.extend(scalars.iter().map(|(n, _)| format!("pro.{n}")));
    values.extend(scalars.iter().map(|s| s.1));

    let mut warnings = Vec::new();
    if voiced.is_empty() {
        warnings.push("no voiced speech; prosody vector zero-filled".into());
        values.iter_mut().for_each(|v| *v = 0.0);
    }
    FeatureVector::new(Scheme::Prosody, names, values, w.source_id(), warnings)
}

fn voiced_runs(w: &Waveform, f0: &F0Track, voiced: &[SegmentSpan]) -> Vec<VoicedRun> {
    let step = w.ms_to_samples(STEP_MS);
    let frame_len = w.ms_to_samples(FRAME_MS);
    let x = w.samples();
    let sr = w.sample_rate() as f64;
    voiced
        .iter()
        .map(|span| {
            let mut run = VoicedRun {
                times: Vec::new(),
                f0: Vec::new(),
                energy: Vec::new(),
            };
            for t in (span.start_sample / step..f0.len()).take_while(|&t| t * step < span.end_sample) {
                if !f0.is_voiced(t) {
                    continue;
                }
                let frame = &x[t * step..t * step + frame_len];
                let ms = frame.iter().map(|v| v * v).sum::<f64>() / frame_len as f64;
                run.times.push((t * step) as f64 / sr);
                run.f0.push(f0.values()[t]);
                run.energy.push((ms + 1e-10).ln());
            }
            run
        })
        .filter(|r| !r.f0.is_empty())
        .collect()
}

fn speech_overlap(s: &SegmentSpan, speech: &[SegmentSpan]) -> usize {
    speech
        .iter()
        .filter(|p| p.kind == SegmentKind::Speech)
        .map(|p| p.end_sample.min(s.end_sample).saturating_sub(p.start_sample.max(s.start_sample)))
        .sum()
}

/// Silence spans with speech on both sides.
fn interior_pauses(speech: &[SegmentSpan]) -> Vec<SegmentSpan> {
    let n = speech.len();
    speech
        .iter()
        .enumerate()
        .filter(|&(i, s)| s.kind == SegmentKind::Silence && i > 0 && i + 1 < n)
        .map(|(_, s)| *s)
        .collect()
}

fn range(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = x.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}

/// Least-squares slope of `y` over `t` and the mean squared residual.
/// Fewer than two points give a zero slope.
fn line_fit(t: &[f64], y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    if y.len() < 2 {
        return (0.0, 0.0);
    }
    let mt = t.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let stt: f64 = t.iter().map(|v| (v - mt).powi(2)).sum();
    let sty: f64 = t.iter().zip(y).map(|(a, b)| (a - mt) * (b - my)).sum();
    let slope = if stt > 0.0 { sty / stt } else { 0.0 };
    let mse = t
        .iter()
        .zip(y)
        .map(|(a, b)| (b - my - slope * (a - mt)).powi(2))
        .sum::<f64>()
        / n;
    (slope, mse)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tone(f: f64, secs: f64, amp: f64) -> Vec<f64> {
        (0..(secs * 8000.0) as usize)
            .map(|i| {
                let t = i as f64 / 8000.0;
                amp * ((2.0 * PI * f * t).sin() + 0.5 * (4.0 * PI * f * t).sin())
            })
            .collect()
    }

    #[test]
    fn fixed_dimension_and_names() {
        let w = Waveform::new(tone(150.0, 0.5, 0.5), 8000, "t").unwrap();
        let v = prosody_features(&w);
        assert_eq!(v.dim(), PROSODY_DIM);
        assert_eq!(v.names.len(), PROSODY_DIM);
        let mut unique = v.names.clone();
        unique.sort();
        unique.dedup();
        assert_eq!(unique.len(), PROSODY_DIM);
    }

    #[test]
    fn constant_f0_has_zero_spread() {
        let w = Waveform::new(tone(150.0, 1.0, 0.5), 8000, "t").unwrap();
        let v = prosody_features(&w);
        let idx = v.names.iter().position(|n| n == "pro.f0.std").unwrap();
        assert!(v.values[idx] < 0.5, "std {}", v.values[idx]);
    }

    #[test]
    fn two_segments_with_pause() {
        let mut x = vec![0.0; 2400];
        x.extend(tone(150.0, 0.4, 0.5));
        x.extend(vec![0.0; 3200]);
        x.extend(tone(150.0, 0.4, 0.5));
        x.extend(vec![0.0; 2400]);
        let v = prosody_features(&Waveform::new(x, 8000, "p").unwrap());
        let get = |name: &str| v.values[v.names.iter().position(|n| n == name).unwrap()];
        assert_eq!(get("pro.n_voiced"), 2.0);
        assert!((get("pro.voiced_duration.mean") - 0.4).abs() <= 0.01 + 1e-9);
        assert!(get("pro.voiced_duration.std") <= 1e-9);
        assert!(get("pro.n_pauses") >= 1.0);
    }

    #[test]
    fn silence_gives_zero_vector_with_warning() {
        let v = prosody_features(&Waveform::new(vec![0.0; 4000], 8000, "z").unwrap());
        assert!(v.values.iter().all(|&x| x == 0.0));
        assert_eq!(v.warnings.len(), 1);
    }

    #[test]
    fn scaling_shifts_log_energy_only() {
        let x = tone(150.0, 0.6, 0.8);
        let a = prosody_tracks(&Waveform::new(x.clone(), 8000, "a").unwrap());
        for scale in [0.1, 0.5] {
            let y: Vec<f64> = x.iter().map(|v| v * scale).collect();
            let b = prosody_tracks(&Waveform::new(y, 8000, "b").unwrap());
            assert_eq!(a.f0.len(), b.f0.len());
            for (p, q) in a.f0.iter().zip(&b.f0) {
                assert!((p - q).abs() < 1e-9);
            }
            let shift = 2.0 * f64::ln(scale);
            for (p, q) in a.log_energy.iter().zip(&b.log_energy) {
                assert!((q - p - shift).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn line_fit_recovers_slope() {
        let t = [0.0, 0.01, 0.02, 0.03];
        let y: Vec<f64> = t.iter().map(|v| 100.0 + 50.0 * v).collect();
        let (s, e) = line_fit(&t, &y);
        assert!((s - 50.0).abs() < 1e-9 && e < 1e-18);
    }
}
