use super::{FeatureVector, Scheme};
use crate::dsp::{
    analyze_pitch, apply_functionals, delta, log_mel_bands, lpc, lsp_frequencies, mfcc,
    FeatureTrack, FunctionalSet, PitchConfig,
};
use crate::signal::{frame_signal, ms_to_samples, Waveform, WindowKind, FRAME_MS, STEP_MS};

pub const I2010PC_LLDS: usize = 38;
pub const I2010PC_DIM: usize = 2 * I2010PC_LLDS * 21;

const PITCH_FRAME_MS: f64 = 60.0;
const MFCC_MELS: usize = 26;
const MFCC_COEFFS: usize = 15;
const LOG_MEL_BANDS: usize = 8;
const LOG_MEL_LOW_HZ: f64 = 20.0;
const LSP_ORDER: usize = 8;
const SMOOTHING_FRAMES: usize = 3;

/// 38 low-level descriptors and their deltas, each summarised by the 21
/// functionals of the Interspeech 2010 paralinguistic set.
pub fn i2010pc_features(w: &Waveform) -> FeatureVector {
    let fs = FunctionalSet::interspeech2010();
    let lld = i2010pc_lld_track(w);
    let tracks = FeatureTrack::hstack(&[
        lld.clone(),
        delta(&lld, 2).map_names(|n| format!("d_{n}")),
    ]);
    let values = apply_functionals(&tracks, &fs);
    let names = tracks
        .names()
        .iter()
        .flat_map(|n| fs.iter().map(move |f| format!("i2010pc.{n}.{}", f.name())))
        .collect();
    FeatureVector::new(Scheme::I2010pc, names, values, w.source_id(), Vec::new())
}

/// Smoothed LLD track on the 25 ms / 10 ms grid.
pub fn i2010pc_lld_track(w: &Waveform) -> FeatureTrack {
    let frames = frame_signal(w, FRAME_MS, STEP_MS, WindowKind::Hann)
        .expect("frame and step constants are valid");
    let n = frames.len();
    let sr = w.sample_rate();

    let loudness: Vec<f64> = frames
        .iter()
        .map(|f| (f.iter().map(|v| v * v).sum::<f64>() / f.len() as f64 + 1e-10).ln())
        .collect();
    let cc = mfcc(&frames, MFCC_MELS, MFCC_COEFFS);
    let mel = log_mel_bands(&frames, LOG_MEL_BANDS, LOG_MEL_LOW_HZ, sr as f64 / 2.0);
    let lsp: Vec<Vec<f64>> = frames
        .iter()
        .map(|f| {
            let mut l = lsp_frequencies(&lpc(f, LSP_ORDER));
            l.resize(LSP_ORDER, 0.0);
            l
        })
        .collect();

    let pitch = pitch_family(w, n);
    let frame_len = frames.frame_len();
    let step = frames.step();
    let peaks: Vec<f64> = (0..n)
        .map(|t| {
            w.samples()[t * step..t * step + frame_len]
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()))
        })
        .collect();
    let voiced: Vec<bool> = pitch.f0.iter().map(|&f| f > 0.0).collect();
    let periods: Vec<f64> = pitch.f0.iter().map(|&f| if f > 0.0 { 1.0 / f } else { 0.0 }).collect();

    let mut names = vec!["pcm_loudness".to_string()];
    let mut columns = vec![loudness];
    names.extend(cc.names().iter().cloned());
    columns.extend(cc.columns());
    names.extend(mel.names().iter().cloned());
    columns.extend(mel.columns());
    for k in 0..LSP_ORDER {
        names.push(format!("lsp{k}"));
        columns.push(lsp.iter().map(|r| r[k]).collect());
    }
    names.extend(
        ["f0", "f0_env", "voicing_prob", "jitter_local", "jitter_ddp", "shimmer_local"]
            .map(String::from),
    );
    columns.push(pitch.f0.clone());
    columns.push(envelope(&pitch.f0));
    columns.push(pitch.voicing);
    columns.push(local_perturbation(&periods, &voiced));
    columns.push(ddp_perturbation(&periods, &voiced));
    columns.push(local_perturbation(&peaks, &voiced));

    let columns: Vec<Vec<f64>> = columns.iter().map(|c| moving_average(c, SMOOTHING_FRAMES)).collect();
    FeatureTrack::from_columns(names, &columns)
}

struct PitchFamily {
    f0: Vec<f64>,
    voicing: Vec<f64>,
}

/// F0 and voicing from 60 ms Gaussian windows centred on the 25 ms frames.
fn pitch_family(w: &Waveform, n_frames: usize) -> PitchFamily {
    let sr = w.sample_rate();
    let pad = (ms_to_samples(PITCH_FRAME_MS, sr) - ms_to_samples(FRAME_MS, sr)) / 2;
    let mut x = vec![0.0; pad];
    x.extend_from_slice(w.samples());
    x.resize(x.len() + pad, 0.0);
    let cfg = PitchConfig {
        frame_ms: PITCH_FRAME_MS,
        window: WindowKind::Gaussian,
        ..PitchConfig::default()
    };
    let analysis = analyze_pitch(&x, sr, &cfg);
    let mut f0 = analysis.f0.values().to_vec();
    let mut voicing = analysis.voicing;
    f0.resize(n_frames, 0.0);
    voicing.resize(n_frames, 0.0);
    PitchFamily { f0, voicing }
}

/// Linear interpolation of a contour across zero (unvoiced) gaps; values
/// before the first and after the last voiced frame are held.
fn envelope(f0: &[f64]) -> Vec<f64> {
    let voiced: Vec<usize> = (0..f0.len()).filter(|&t| f0[t] > 0.0).collect();
    let (Some(&first), Some(&last)) = (voiced.first(), voiced.last()) else {
        return vec![0.0; f0.len()];
    };
    let mut out = f0.to_vec();
    out[..first].fill(f0[first]);
    out[last + 1..].fill(f0[last]);
    for pair in voiced.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        for t in a + 1..b {
            let frac = (t - a) as f64 / (b - a) as f64;
            out[t] = f0[a] + frac * (f0[b] - f0[a]);
        }
    }
    out
}

/// Mean absolute difference to the voiced neighbouring frames, relative to
/// the local mean; 0 on unvoiced frames or without voiced neighbours.
fn local_perturbation(x: &[f64], voiced: &[bool]) -> Vec<f64> {
    (0..x.len())
        .map(|t| {
            if !voiced[t] {
                return 0.0;
            }
            let neighbours: Vec<usize> = [t.wrapping_sub(1), t + 1]
                .into_iter()
                .filter(|&u| u < x.len() && voiced[u])
                .collect();
            if neighbours.is_empty() {
                return 0.0;
            }
            let mean = (x[t] + neighbours.iter().map(|&u| x[u]).sum::<f64>())
                / (neighbours.len() + 1) as f64;
            if mean <= 0.0 {
                return 0.0;
            }
            let diff = neighbours.iter().map(|&u| (x[t] - x[u]).abs()).sum::<f64>()
                / neighbours.len() as f64;
            diff / mean
        })
        .collect()
}

/// Difference of differences of consecutive periods relative to their mean;
/// needs the frame and both neighbours voiced.
fn ddp_perturbation(x: &[f64], voiced: &[bool]) -> Vec<f64> {
    (0..x.len())
        .map(|t| {
            if t == 0 || t + 1 >= x.len() || !(voiced[t - 1] && voiced[t] && voiced[t + 1]) {
                return 0.0;
            }
            let mean = (x[t - 1] + x[t] + x[t + 1]) / 3.0;
            (x[t + 1] - 2.0 * x[t] + x[t - 1]).abs() / mean
        })
        .collect()
}

/// Centred moving average, truncated at the edges.
fn moving_average(x: &[f64], width: usize) -> Vec<f64> {
    let half = width / 2;
    (0..x.len())
        .map(|t| {
            let lo = t.saturating_sub(half);
            let hi = (t + half + 1).min(x.len());
            x[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}
