//! Audio ingestion, resampling, framing and speech/voicing segmentation.

mod framing;
mod resample;
mod segment;
mod wav;

pub use framing::{frame_count, frame_signal, window, FrameSeries, WindowKind};
pub use resample::{resample, resample_to_8k, TARGET_RATE};
pub use segment::{
    detect_speech, frame_decisions_to_spans, voiced_segments, Direction, SegmentKind, SegmentSpan,
    Transition, MIN_VOICED_RUN, TRANSITION_MS,
};
pub use wav::{load_wav, write_wav_16bit};

use crate::error::{Error, Result};

/// Analysis frame length used throughout the pipeline, in milliseconds.
pub const FRAME_MS: f64 = 25.0;
/// Analysis hop, in milliseconds.
pub const STEP_MS: f64 = 10.0;

/// A mono recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
    source_id: String,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32, source_id: impl Into<String>) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidWaveform("sample rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(Error::InvalidWaveform("no samples".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidWaveform(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
            source_id: source_id.into(),
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    /// Same recording with its samples replaced; rate and id are kept.
    pub fn with_samples(&self, samples: Vec<f64>) -> Result<Self> {
        Self::new(samples, self.sample_rate, self.source_id.clone())
    }

    /// Number of samples in `ms` milliseconds at this rate, rounded.
    pub fn ms_to_samples(&self, ms: f64) -> usize {
        ms_to_samples(ms, self.sample_rate)
    }
}

pub fn ms_to_samples(ms: f64, sample_rate: u32) -> usize {
    (ms * sample_rate as f64 / 1000.0).round() as usize
}
