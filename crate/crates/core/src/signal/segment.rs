use super::{ms_to_samples, Waveform, FRAME_MS, STEP_MS};
use crate::dsp::{estimate_f0, frame_log_energy_db, F0Track};

/// Runs of fewer voiced/unvoiced frames than this are absorbed by their
/// neighbours.
pub const MIN_VOICED_RUN: usize = 3;
/// Length of the analysis chunk around each voicing transition.
pub const TRANSITION_MS: f64 = 80.0;
/// Margin above the noise floor (10th percentile of frame log-energy).
const VAD_MARGIN_DB: f64 = 10.0;
const VAD_FLOOR_PERCENTILE: f64 = 10.0;
const VAD_SMOOTHING: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SegmentKind {
    Speech,
    Silence,
    Voiced,
    Unvoiced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentSpan {
    pub start_sample: usize,
    pub end_sample: usize,
    pub kind: SegmentKind,
}

impl SegmentSpan {
    pub fn len(&self) -> usize {
        self.end_sample - self.start_sample
    }

    pub fn is_empty(&self) -> bool {
        self.end_sample <= self.start_sample
    }

    pub fn duration_s(&self, sample_rate: u32) -> f64 {
        self.len() as f64 / sample_rate as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// unvoiced to voiced
    Onset,
    /// voiced to unvoiced
    Offset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub center_sample: usize,
    pub direction: Direction,
    pub chunk: Vec<f64>,
}

/// Energy + periodicity voice activity detection on the 25/10 ms grid.
///
/// A frame is speech when its log-energy exceeds the 10th-percentile noise
/// floor by 10 dB or when the F0 tracker marks it voiced. Decisions are
/// smoothed by a 5-frame majority vote and merged into spans that cover the
/// whole signal.
pub fn detect_speech(w: &Waveform) -> Vec<SegmentSpan> {
    let frame_len = w.ms_to_samples(FRAME_MS);
    let step = w.ms_to_samples(STEP_MS);
    let energy = frame_log_energy_db(w.samples(), frame_len, step);
    if energy.is_empty() {
        return vec![SegmentSpan {
            start_sample: 0,
            end_sample: w.len(),
            kind: SegmentKind::Silence,
        }];
    }
    let f0 = estimate_f0(w);
    let floor = crate::dsp::percentile(&energy, VAD_FLOOR_PERCENTILE);
    let raw: Vec<bool> = energy
        .iter()
        .zip(f0.values())
        .map(|(&e, &f)| e > floor + VAD_MARGIN_DB || f > 0.0)
        .collect();
    let smoothed = majority_smooth(&raw, VAD_SMOOTHING);
    frame_decisions_to_spans(
        &smoothed,
        step,
        w.len(),
        SegmentKind::Speech,
        SegmentKind::Silence,
    )
}

fn majority_smooth(raw: &[bool], width: usize) -> Vec<bool> {
    let half = width / 2;
    (0..raw.len())
        .map(|t| {
            let lo = t.saturating_sub(half);
            let hi = (t + half + 1).min(raw.len());
            let yes = raw[lo..hi].iter().filter(|&&b| b).count();
            let no = hi - lo - yes;
            match yes.cmp(&no) {
                std::cmp::Ordering::Greater => true,
                std::cmp::Ordering::Less => false,
                std::cmp::Ordering::Equal => raw[t],
            }
        })
        .collect()
}

/// Maps per-frame decisions to sample spans. Frame `t` owns samples
/// `[t*step, (t+1)*step)`; the last frame extends to the end of the signal,
/// so the spans partition `[0, n_samples)`.
pub fn frame_decisions_to_spans(
    decisions: &[bool],
    step: usize,
    n_samples: usize,
    when_true: SegmentKind,
    when_false: SegmentKind,
) -> Vec<SegmentSpan> {
    if decisions.is_empty() {
        return vec![SegmentSpan {
            start_sample: 0,
            end_sample: n_samples,
            kind: when_false,
        }];
    }
    let mut spans = Vec::new();
    let mut run_start = 0usize;
    for t in 1..=decisions.len() {
        if t == decisions.len() || decisions[t] != decisions[run_start] {
            let start = run_start * step;
            let end = if t == decisions.len() { n_samples } else { t * step };
            spans.push(SegmentSpan {
                start_sample: start,
                end_sample: end,
                kind: if decisions[run_start] { when_true } else { when_false },
            });
            run_start = t;
        }
    }
    spans
}

/// Splits the frame grid into voiced and unvoiced spans from an F0 track
/// and extracts an 80 ms chunk centred on every boundary.
pub fn voiced_segments(w: &Waveform, f0: &F0Track) -> (Vec<SegmentSpan>, Vec<Transition>) {
    let step = w.ms_to_samples(STEP_MS);
    let mut voiced: Vec<bool> = f0.values().iter().map(|&f| f > 0.0).collect();
    absorb_short_runs(&mut voiced, MIN_VOICED_RUN);
    let spans = frame_decisions_to_spans(
        &voiced,
        step,
        w.len(),
        SegmentKind::Voiced,
        SegmentKind::Unvoiced,
    );
    let chunk_len = ms_to_samples(TRANSITION_MS, w.sample_rate());
    let transitions = spans
        .windows(2)
        .map(|pair| {
            let center = pair[1].start_sample;
            let direction = if pair[1].kind == SegmentKind::Voiced {
                Direction::Onset
            } else {
                Direction::Offset
            };
            Transition {
                center_sample: center,
                direction,
                chunk: centered_chunk(w.samples(), center, chunk_len),
            }
        })
        .collect();
    (spans, transitions)
}

fn centered_chunk(x: &[f64], center: usize, len: usize) -> Vec<f64> {
    let start = center as i64 - (len / 2) as i64;
    (0..len as i64)
        .map(|i| {
            let k = start + i;
            if k >= 0 && (k as usize) < x.len() {
                x[k as usize]
            } else {
                0.0
            }
        })
        .collect()
}

/// Flips the shortest run below `min_len` into its neighbours' kind until
/// every run is long enough or only one run remains.
fn absorb_short_runs(decisions: &mut [bool], min_len: usize) {
    loop {
        let runs = run_lengths(decisions);
        if runs.len() <= 1 {
            return;
        }
        let shortest = runs
            .iter()
            .filter(|r| r.1 < min_len)
            .min_by_key(|r| r.1);
        match shortest {
            Some(&(start, len)) => {
                for d in &mut decisions[start..start + len] {
                    *d = !*d;
                }
            }
            None => return,
        }
    }
}

fn run_lengths(decisions: &[bool]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = 0;
    for t in 1..=decisions.len() {
        if t == decisions.len() || decisions[t] != decisions[start] {
            runs.push((start, t - start));
            start = t;
        }
    }
    runs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::F0Track;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn tone(secs: f64, freq: f64, amp: f64) -> Vec<f64> {
        (0..(secs * 8000.0) as usize)
            .map(|i| amp * (2.0 * PI * freq * i as f64 / 8000.0).sin())
            .collect()
    }

    fn wave(x: Vec<f64>) -> Waveform {
        Waveform::new(x, 8000, "t").unwrap()
    }

    fn covers(spans: &[SegmentSpan], n: usize) {
        assert_eq!(spans[0].start_sample, 0);
        assert_eq!(spans.last().unwrap().end_sample, n);
        for p in spans.windows(2) {
            assert_eq!(p[0].end_sample, p[1].start_sample);
            assert_ne!(p[0].kind, p[1].kind);
        }
    }

    #[test]
    fn silence_is_one_span() {
        let spans = detect_speech(&wave(vec![0.0; 8000]));
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].kind, SegmentKind::Silence);
        assert_eq!(spans[0].len(), 8000);
    }

    #[test]
    fn full_tone_is_speech() {
        let w = wave(tone(1.0, 200.0, 1.0));
        let spans = detect_speech(&w);
        covers(&spans, w.len());
        let speech: usize = spans
            .iter()
            .filter(|s| s.kind == SegmentKind::Speech)
            .map(SegmentSpan::len)
            .sum();
        assert!(speech as f64 >= 0.95 * w.len() as f64);
    }

    fn tone_gap_tone() -> Vec<f64> {
        let mut x = tone(0.5, 200.0, 0.5);
        x.extend(vec![0.0; 8000]);
        x.extend(tone(0.5, 200.0, 0.5));
        x
    }

    #[test]
    fn gap_between_tones_is_silence() {
        let w = wave(tone_gap_tone());
        let spans = detect_speech(&w);
        covers(&spans, w.len());
        let kinds: Vec<_> = spans.iter().map(|s| s.kind).collect();
        assert_eq!(
            kinds,
            vec![SegmentKind::Speech, SegmentKind::Silence, SegmentKind::Speech]
        );
        let gap = spans[1];
        assert!(gap.start_sample >= 3600 && gap.end_sample <= 12400);
        assert!(gap.len() >= 7000);
    }

    #[test]
    fn idempotent_on_speech_only_output() {
        let w = wave(tone_gap_tone());
        let speech: Vec<f64> = detect_speech(&w)
            .iter()
            .filter(|s| s.kind == SegmentKind::Speech)
            .flat_map(|s| w.samples()[s.start_sample..s.end_sample].to_vec())
            .collect();
        let again = wave(speech.clone());
        let removed: usize = detect_speech(&again)
            .iter()
            .filter(|s| s.kind == SegmentKind::Silence)
            .map(SegmentSpan::len)
            .sum();
        assert!(removed <= 2 * 80, "removed {removed} samples");
    }

    #[test]
    fn fully_voiced_has_no_transitions() {
        let w = wave(tone(1.0, 200.0, 0.5));
        let f0 = estimate_f0(&w);
        let (spans, transitions) = voiced_segments(&w, &f0);
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].kind, SegmentKind::Voiced);
        assert!(transitions.is_empty());
    }

    #[test]
    fn silence_is_one_unvoiced_span() {
        let w = wave(vec![0.0; 8000]);
        let (spans, transitions) = voiced_segments(&w, &estimate_f0(&w));
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].kind, SegmentKind::Unvoiced);
        assert!(transitions.is_empty());
    }

    #[test]
    fn voiced_noise_voiced() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut x = tone(0.3, 150.0, 0.5);
        x.extend((0..2400).map(|_| rng.random_range(-0.3..0.3)));
        x.extend(tone(0.3, 150.0, 0.5));
        let w = wave(x);
        let (spans, transitions) = voiced_segments(&w, &estimate_f0(&w));
        assert_eq!(spans.len(), 3);
        assert_eq!(transitions.len(), spans.len() - 1);
        assert_eq!(transitions[0].direction, Direction::Offset);
        assert_eq!(transitions[1].direction, Direction::Onset);
        for t in &transitions {
            assert_eq!(t.chunk.len(), 640);
        }
    }

    #[test]
    fn edge_chunks_are_zero_padded() {
        let x: Vec<f64> = (1..=100).map(|v| v as f64).collect();
        let c = centered_chunk(&x, 10, 40);
        assert_eq!(c.len(), 40);
        assert!(c[..10].iter().all(|&v| v == 0.0));
        assert_eq!(c[10], 1.0);
    }

    #[test]
    fn short_runs_are_absorbed() {
        let mut d = vec![true, true, true, true, false, true, true, true, false, false];
        absorb_short_runs(&mut d, 3);
        assert!(d.iter().all(|&b| b));
    }

    proptest::proptest! {
        #[test]
        fn voicing_spans_partition_grid(bits in proptest::collection::vec(proptest::bool::ANY, 1..200)) {
            let n_frames = bits.len();
            let n = (n_frames - 1) * 80 + 200;
            let w = wave(vec![0.0; n]);
            let f0 = F0Track::from_values(bits.iter().map(|&b| if b { 120.0 } else { 0.0 }).collect());
            let (spans, transitions) = voiced_segments(&w, &f0);
            covers(&spans, n);
            proptest::prop_assert_eq!(transitions.len(), spans.len() - 1);
            for s in &spans {
                let frames = if s.end_sample == n { (n - s.start_sample - 200) / 80 + 1 } else { s.len() / 80 };
                proptest::prop_assert!(frames >= MIN_VOICED_RUN || spans.len() == 1);
            }
        }
    }
}
