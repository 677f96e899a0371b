//! GMM-UBM, total variability i-vectors and the x-vector TDNN.

mod tv;
mod ubm;
mod xvector;

pub use tv::{
    baum_welch_stats, extract_ivector, train_total_variability, BwStats, TotalVariabilityModel,
    TvTraining, UTTERANCES_PER_RANK,
};
pub use ubm::{train_ubm, GmmUbm, UbmTraining, FRAMES_PER_COMPONENT, VARIANCE_FLOOR};
pub use xvector::{
    frame_activations, segment_embedding, sliding_mean_normalize, stats_pooling, xvector_features,
    xvector_forward, xvector_input, Affine,
    XVectorWeights, MIN_FRAMES, XVECTOR_DIM, XVECTOR_INPUT_DIM,
};

use std::path::Path;

use crate::container::{find_section, load, save};
use crate::dsp::{delta, mfcc, FeatureTrack};
use crate::error::Result;
use crate::features::{FeatureVector, Scheme};
use crate::signal::{detect_speech, frame_signal, SegmentKind, Waveform, WindowKind, FRAME_MS, STEP_MS};

pub const IVECTOR_MFCC: usize = 20;
const IVECTOR_MELS: usize = 24;

/// 20 MFCCs with deltas and delta-deltas on VAD speech frames, mean
/// normalised per utterance. Falls back to all frames when the VAD finds no
/// speech.
pub fn ivector_frontend(w: &Waveform) -> Vec<Vec<f64>> {
    let frames = frame_signal(w, FRAME_MS, STEP_MS, WindowKind::Hann)
        .expect("frame and step constants are valid");
    let cc = mfcc(&frames, IVECTOR_MELS, IVECTOR_MFCC);
    let d1 = delta(&cc, 2);
    let d2 = delta(&d1, 2);
    let track = FeatureTrack::hstack(&[cc, d1, d2]);
    let speech = detect_speech(w);
    let step = frames.step();
    let half = frames.frame_len() / 2;
    let is_speech = |t: usize| {
        let centre = t * step + half;
        speech
            .iter()
            .any(|s| s.kind == SegmentKind::Speech && s.start_sample <= centre && centre < s.end_sample)
    };
    let mut rows: Vec<Vec<f64>> = (0..track.n_frames())
        .filter(|&t| is_speech(t))
        .map(|t| track.rows()[t].clone())
        .collect();
    if rows.is_empty() {
        rows = track.rows().to_vec();
    }
    if let Some(first) = rows.first() {
        let n = rows.len() as f64;
        let mut mean = vec![0.0; first.len()];
        for r in &rows {
            mean.iter_mut().zip(r).for_each(|(m, v)| *m += v / n);
        }
        for r in &mut rows {
            r.iter_mut().zip(&mean).for_each(|(v, m)| *v -= m);
        }
    }
    rows
}

/// UBM and total variability matrix bundled with the i-vector front end.
#[derive(Debug, Clone, PartialEq)]
pub struct IvectorExtractor {
    pub ubm: GmmUbm,
    pub tv: TotalVariabilityModel,
}

impl IvectorExtractor {
    pub fn rank(&self) -> usize {
        self.tv.rank()
    }

    pub fn ivector(&self, w: &Waveform) -> Result<Vec<f64>> {
        let stats = baum_welch_stats(&self.ubm, &ivector_frontend(w))?;
        extract_ivector(&self.tv, &stats)
    }

    pub fn features(&self, w: &Waveform) -> Result<FeatureVector> {
        let values = self.ivector(w)?;
        let names = (0..values.len()).map(|k| format!("ivector{k}")).collect();
        Ok(FeatureVector::new(Scheme::Ivector, names, values, w.source_id(), Vec::new()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save(path, &[self.ubm.to_section(), self.tv.to_section()])
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let sections = load(path)?;
        let ubm = GmmUbm::from_section(find_section(&sections, "gmm_ubm")?)?;
        let tv = TotalVariabilityModel::from_section(find_section(&sections, "total_variability")?, &ubm)?;
        Ok(Self { ubm, tv })
    }

    /// Trains both models from a set of recordings.
    pub fn train(
        recordings: &[Waveform],
        n_components: usize,
        rank: usize,
        n_iters: usize,
        seed: u64,
    ) -> Result<Self> {
        let per_utt: Vec<Vec<Vec<f64>>> = recordings.iter().map(ivector_frontend).collect();
        let pooled: Vec<Vec<f64>> = per_utt.iter().flatten().cloned().collect();
        let ubm = train_ubm(&pooled, n_components, n_iters, seed)?.ubm;
        let stats = per_utt
            .iter()
            .filter(|f| !f.is_empty())
            .map(|f| baum_welch_stats(&ubm, f))
            .collect::<Result<Vec<_>>>()?;
        let tv = train_total_variability(&ubm, &stats, rank, n_iters, seed.wrapping_add(1))?.model;
        Ok(Self { ubm, tv })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise_burst(seed: u64, colour: f64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut prev = 0.0;
        let x: Vec<f64> = (0..8000)
            .map(|_| {
                prev = colour * prev + rng.random_range(-0.3..0.3);
                prev
            })
            .collect();
        Waveform::new(x, 8000, format!("n{seed}")).unwrap()
    }

    #[test]
    fn frontend_shape_and_mean() {
        let rows = ivector_frontend(&noise_burst(1, 0.5));
        assert_eq!(rows[0].len(), 3 * IVECTOR_MFCC);
        let mean0 = rows.iter().map(|r| r[0]).sum::<f64>() / rows.len() as f64;
        assert!(mean0.abs() < 1e-9);
    }

    #[test]
    fn train_save_load_extract() {
        let recs: Vec<Waveform> = (0..12).map(|i| noise_burst(i, (i % 3) as f64 * 0.4)).collect();
        let ex = IvectorExtractor::train(&recs, 4, 1, 5, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("iv.bin");
        ex.save(&path).unwrap();
        let back = IvectorExtractor::load(&path).unwrap();
        assert_eq!(back, ex);
        let v = back.features(&recs[0]).unwrap();
        assert_eq!(v.dim(), 1);
        assert!(v.values[0].is_finite());
    }
}
