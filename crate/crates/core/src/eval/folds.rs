use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    M,
    F,
    Unknown,
}

impl FromStr for Gender {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "m" | "male" => Ok(Gender::M),
            "f" | "female" => Ok(Gender::F),
            "" | "u" | "unknown" | "na" => Ok(Gender::Unknown),
            other => Err(Error::InvalidArgument(format!("unknown gender {other:?}"))),
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gender::M => "m",
            Gender::F => "f",
            Gender::Unknown => "unknown",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub source_id: String,
    pub speaker_id: String,
    pub label: String,
    pub gender: Gender,
    pub duration_s: Option<f64>,
}

impl Sample {
    pub fn new(source_id: &str, speaker_id: &str, label: &str) -> Self {
        Self {
            source_id: source_id.to_string(),
            speaker_id: speaker_id.to_string(),
            label: label.to_string(),
            gender: Gender::Unknown,
            duration_s: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldMode {
    SpeakerIndependent,
    SpeakerDependent,
}

impl FromStr for FoldMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "speaker_independent" | "si" => Ok(FoldMode::SpeakerIndependent),
            "speaker_dependent" | "sd" => Ok(FoldMode::SpeakerDependent),
            other => Err(Error::InvalidArgument(format!("unknown fold mode {other:?}"))),
        }
    }
}

impl fmt::Display for FoldMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FoldMode::SpeakerIndependent => "speaker_independent",
            FoldMode::SpeakerDependent => "speaker_dependent",
        })
    }
}

/// Outer fold of every sample and, per outer fold, the inner fold of every
/// outer-train sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldPlan {
    pub mode: FoldMode,
    pub k_outer: usize,
    pub seed: u64,
    pub outer: Vec<usize>,
    /// `inner[f][i]` is `None` for samples in outer test fold `f`.
    pub inner: Vec<Vec<Option<usize>>>,
    /// Inner fold count actually used per outer fold.
    pub k_inner: Vec<usize>,
    pub warnings: Vec<String>,
}

impl FoldPlan {
    pub fn outer_test(&self, f: usize) -> Vec<usize> {
        (0..self.outer.len()).filter(|&i| self.outer[i] == f).collect()
    }

    pub fn outer_train(&self, f: usize) -> Vec<usize> {
        (0..self.outer.len()).filter(|&i| self.outer[i] != f).collect()
    }

    /// (inner train, inner validation) for inner fold `g` of outer fold `f`.
    pub fn inner_split(&self, f: usize, g: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut val = Vec::new();
        for (i, slot) in self.inner[f].iter().enumerate() {
            match slot {
                Some(h) if *h == g => val.push(i),
                Some(_) => train.push(i),
                None => {}
            }
        }
        (train, val)
    }
}

pub fn make_folds(samples: &[Sample], mode: FoldMode, k_outer: usize, k_inner: usize, seed: u64) -> Result<FoldPlan> {
    if k_outer < 2 || k_inner < 2 {
        return Err(Error::Folds {
            folds: k_outer.min(k_inner),
            reason: "fold counts must be at least 2".into(),
        });
    }
    let all: Vec<usize> = (0..samples.len()).collect();
    let outer_local = assign(samples, &all, mode, k_outer, seed)?;
    let mut outer = vec![0; samples.len()];
    for (&i, &f) in all.iter().zip(&outer_local) {
        outer[i] = f;
    }
    let mut inner = Vec::with_capacity(k_outer);
    let mut k_used = Vec::with_capacity(k_outer);
    let mut warnings = Vec::new();
    for f in 0..k_outer {
        let train: Vec<usize> = all.iter().copied().filter(|&i| outer[i] != f).collect();
        let mut k = k_inner;
        if mode == FoldMode::SpeakerIndependent {
            let speakers = count_speakers(samples, &train);
            if speakers < k {
                if speakers < 2 {
                    return Err(Error::Folds {
                        folds: k_inner,
                        reason: format!("outer fold {f} leaves {speakers} training speaker(s)"),
                    });
                }
                warnings.push(format!(
                    "outer fold {f}: {speakers} training speakers, inner folds reduced from {k_inner} to {speakers}"
                ));
                k = speakers;
            }
        }
        let local = assign(samples, &train, mode, k, inner_seed(seed, f))?;
        let mut slots = vec![None; samples.len()];
        for (&i, &g) in train.iter().zip(&local) {
            slots[i] = Some(g);
        }
        inner.push(slots);
        k_used.push(k);
    }
    Ok(FoldPlan {
        mode,
        k_outer,
        seed,
        outer,
        inner,
        k_inner: k_used,
        warnings,
    })
}

fn inner_seed(seed: u64, fold: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(fold as u64 + 1)
}

fn count_speakers(samples: &[Sample], idx: &[usize]) -> usize {
    let mut s: Vec<&str> = idx.iter().map(|&i| samples[i].speaker_id.as_str()).collect();
    s.sort_unstable();
    s.dedup();
    s.len()
}

/// Fold index for each entry of `idx`.
fn assign(samples: &[Sample], idx: &[usize], mode: FoldMode, k: usize, seed: u64) -> Result<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut classes: Vec<&str> = idx.iter().map(|&i| samples[i].label.as_str()).collect();
    classes.sort_unstable();
    classes.dedup();
    let class_of = |i: usize| classes.binary_search(&samples[i].label.as_str()).unwrap();

    match mode {
        FoldMode::SpeakerIndependent => {
            let mut by_speaker: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
            for (pos, &i) in idx.iter().enumerate() {
                by_speaker.entry(samples[i].speaker_id.as_str()).or_default().push(pos);
            }
            if by_speaker.len() < k {
                return Err(Error::Folds {
                    folds: k,
                    reason: format!("{} speaker(s) for {k} speaker-independent folds", by_speaker.len()),
                });
            }
            let mut speakers: Vec<(&str, Vec<usize>)> = by_speaker.into_iter().collect();
            speakers.shuffle(&mut rng);
            // largest first; the stable sort keeps the shuffled order among equals
            speakers.sort_by_key(|s| std::cmp::Reverse(s.1.len()));
            let n_classes = classes.len();
            let mut totals = vec![0.0; n_classes];
            for &i in idx {
                totals[class_of(i)] += 1.0;
            }
            let target: Vec<f64> = totals.iter().map(|t| t / k as f64).collect();
            let mut counts = vec![vec![0.0; n_classes]; k];
            let mut n_speakers = vec![0usize; k];
            let mut out = vec![0; idx.len()];
            for (_, members) in &speakers {
                let mut profile = vec![0.0; n_classes];
                for &pos in members {
                    profile[class_of(idx[pos])] += 1.0;
                }
                let cost = |f: usize| -> f64 {
                    (0..n_classes)
                        .map(|c| profile[c] * (2.0 * (counts[f][c] - target[c]) + profile[c]))
                        .sum()
                };
                let best = (0..k)
                    .min_by(|&a, &b| {
                        cost(a)
                            .total_cmp(&cost(b))
                            .then(n_speakers[a].cmp(&n_speakers[b]))
                            .then(a.cmp(&b))
                    })
                    .unwrap();
                for c in 0..n_classes {
                    counts[best][c] += profile[c];
                }
                n_speakers[best] += 1;
                for &pos in members {
                    out[pos] = best;
                }
            }
            Ok(out)
        }
        FoldMode::SpeakerDependent => {
            let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes.len()];
            for (pos, &i) in idx.iter().enumerate() {
                by_class[class_of(i)].push(pos);
            }
            if let Some((c, members)) = by_class.iter().enumerate().find(|(_, m)| m.len() < k) {
                return Err(Error::Folds {
                    folds: k,
                    reason: format!("class {} has {} sample(s) for {k} folds", classes[c], members.len()),
                });
            }
            let mut out = vec![0; idx.len()];
            let mut next = 0;
            for members in &mut by_class {
                members.shuffle(&mut rng);
                for &pos in members.iter() {
                    out[pos] = next % k;
                    next += 1;
                }
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn corpus(speakers: usize, per: usize, classes: usize) -> Vec<Sample> {
        (0..speakers)
            .flat_map(|s| {
                (0..per).map(move |i| Sample::new(&format!("s{s}_{i}"), &format!("spk{s}"), &format!("c{}", (s + i) % classes)))
            })
            .collect()
    }

    #[test]
    fn ten_speakers_two_per_fold() {
        let samples = corpus(10, 6, 2);
        let plan = make_folds(&samples, FoldMode::SpeakerIndependent, 5, 5, 3).unwrap();
        for f in 0..5 {
            assert_eq!(count_speakers(&samples, &plan.outer_test(f)), 2);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let samples = corpus(12, 5, 3);
        let a = make_folds(&samples, FoldMode::SpeakerIndependent, 5, 5, 9).unwrap();
        let b = make_folds(&samples, FoldMode::SpeakerIndependent, 5, 5, 9).unwrap();
        assert_eq!(a, b);
        let c = make_folds(&samples, FoldMode::SpeakerDependent, 5, 5, 9).unwrap();
        assert_eq!(c, make_folds(&samples, FoldMode::SpeakerDependent, 5, 5, 9).unwrap());
    }

    #[test]
    fn single_speaker_is_rejected() {
        let samples = corpus(1, 25, 2);
        assert!(matches!(
            make_folds(&samples, FoldMode::SpeakerIndependent, 5, 5, 0),
            Err(Error::Folds { .. })
        ));
    }

    #[test]
    fn speaker_dependent_is_stratified() {
        let samples = corpus(3, 20, 3);
        let plan = make_folds(&samples, FoldMode::SpeakerDependent, 5, 5, 1).unwrap();
        for f in 0..5 {
            let test = plan.outer_test(f);
            assert_eq!(test.len(), 12);
            for c in 0..3 {
                let n = test.iter().filter(|&&i| samples[i].label == format!("c{c}")).count();
                assert_eq!(n, 4);
            }
        }
    }

    #[test]
    fn inner_folds_shrink_with_few_speakers() {
        let samples = corpus(5, 4, 2);
        let plan = make_folds(&samples, FoldMode::SpeakerIndependent, 5, 5, 0).unwrap();
        assert_eq!(plan.k_inner, vec![4; 5]);
        assert_eq!(plan.warnings.len(), 5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn speakers_never_split(
            speaker_of in proptest::collection::vec(0usize..12, 30..80),
            seed in any::<u64>(),
        ) {
            let samples: Vec<Sample> = speaker_of
                .iter()
                .enumerate()
                .map(|(i, s)| Sample::new(&format!("x{i}"), &format!("spk{s}"), if i % 3 == 0 { "a" } else { "b" }))
                .collect();
            let n_spk = count_speakers(&samples, &(0..samples.len()).collect::<Vec<_>>());
            prop_assume!(n_spk >= 6);
            let plan = make_folds(&samples, FoldMode::SpeakerIndependent, 5, 5, seed).unwrap();
            for i in 0..samples.len() {
                for j in 0..samples.len() {
                    if samples[i].speaker_id == samples[j].speaker_id {
                        prop_assert_eq!(plan.outer[i], plan.outer[j]);
                        for f in 0..5 {
                            prop_assert_eq!(plan.inner[f][i], plan.inner[f][j]);
                        }
                    }
                }
            }
            let mut seen: Vec<usize> = plan.outer.clone();
            seen.sort_unstable();
            seen.dedup();
            prop_assert_eq!(seen.len(), 5);
        }
    }
}
