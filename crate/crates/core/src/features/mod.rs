//! Per-utterance feature vectors.

mod articulation;
mod i2010pc;
pub mod perturbation;
mod phonation;
mod prosody;

use std::fmt;
use std::str::FromStr;

pub use articulation::{articulation_features, ARTICULATION_DIM};
pub use i2010pc::{i2010pc_features, i2010pc_lld_track, I2010PC_DIM, I2010PC_LLDS};
pub use phonation::{phonation_features, PHONATION_DIM};
pub use prosody::{prosody_features, prosody_tracks, ProsodyTracks, PROSODY_DIM};

use crate::embeddings::{IvectorExtractor, XVectorWeights, XVECTOR_DIM};
use crate::error::{Error, Result};
use crate::signal::{resample_to_8k, Waveform, TARGET_RATE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    Phonation,
    Articulation,
    Prosody,
    I2010pc,
    Ivector,
    Xvector,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [
        Scheme::Phonation,
        Scheme::Articulation,
        Scheme::Prosody,
        Scheme::I2010pc,
        Scheme::Ivector,
        Scheme::Xvector,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            Scheme::Phonation => "pho",
            Scheme::Articulation => "art",
            Scheme::Prosody => "pro",
            Scheme::I2010pc => "i2010pc",
            Scheme::Ivector => "ivector",
            Scheme::Xvector => "xvector",
        }
    }

    /// Output dimension, when it does not depend on a trained model.
    pub fn fixed_dim(self) -> Option<usize> {
        match self {
            Scheme::Phonation => Some(PHONATION_DIM),
            Scheme::Articulation => Some(ARTICULATION_DIM),
            Scheme::Prosody => Some(PROSODY_DIM),
            Scheme::I2010pc => Some(I2010PC_DIM),
            Scheme::Xvector => Some(XVECTOR_DIM),
            Scheme::Ivector => None,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pho" | "phonation" => Ok(Scheme::Phonation),
            "art" | "articulation" => Ok(Scheme::Articulation),
            "pro" | "prosody" => Ok(Scheme::Prosody),
            "i2010pc" | "is10" => Ok(Scheme::I2010pc),
            "ivector" | "ivec" | "i-vector" => Ok(Scheme::Ivector),
            "xvector" | "xvec" | "x-vector" => Ok(Scheme::Xvector),
            other => Err(Error::InvalidArgument(format!("unknown scheme {other:?}"))),
        }
    }
}

/// Ordered list of schemes whose vectors are concatenated. A single-member
/// spec describes a plain (unfused) representation.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FusionSpec(Vec<Scheme>);

impl FusionSpec {
    pub fn new(schemes: Vec<Scheme>) -> Result<Self> {
        if schemes.is_empty() {
            return Err(Error::InvalidArgument("empty fusion spec".into()));
        }
        for (i, s) in schemes.iter().enumerate() {
            if schemes[..i].contains(s) {
                return Err(Error::InvalidArgument(format!("duplicate scheme {s} in fusion")));
            }
        }
        Ok(Self(schemes))
    }

    pub fn single(scheme: Scheme) -> Self {
        Self(vec![scheme])
    }

    pub fn schemes(&self) -> &[Scheme] {
        &self.0
    }

    pub fn is_fusion(&self) -> bool {
        self.0.len() > 1
    }
}

impl fmt::Display for FusionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<&str> = self.0.iter().map(|s| s.short_name()).collect();
        f.write_str(&parts.join("+"))
    }
}

impl FromStr for FusionSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let schemes = s.split('+').map(str::parse).collect::<Result<Vec<_>>>()?;
        Self::new(schemes)
    }
}

/// Fixed-length representation of one recording.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub scheme: FusionSpec,
    pub values: Vec<f64>,
    pub names: Vec<String>,
    pub source_id: String,
    /// Degenerate-input notices; the affected blocks are zero-filled.
    pub warnings: Vec<String>,
}

impl FeatureVector {
    pub(crate) fn new(
        scheme: Scheme,
        names: Vec<String>,
        values: Vec<f64>,
        source_id: &str,
        mut warnings: Vec<String>,
    ) -> Self {
        debug_assert_eq!(names.len(), values.len());
        let mut values = values;
        let bad = values.iter().filter(|v| !v.is_finite()).count();
        if bad > 0 {
            warnings.push(format!("{bad} non-finite value(s) replaced by 0"));
            values.iter_mut().filter(|v| !v.is_finite()).for_each(|v| *v = 0.0);
        }
        Self {
            scheme: FusionSpec::single(scheme),
            values,
            names,
            source_id: source_id.to_string(),
            warnings,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Concatenates per-scheme vectors of one recording in `spec` order.
pub fn fuse(vectors: &[FeatureVector], spec: &FusionSpec) -> Result<FeatureVector> {
    let Some(first) = vectors.first() else {
        return Err(Error::InvalidArgument("nothing to fuse".into()));
    };
    if vectors.len() != spec.schemes().len() {
        return Err(Error::SchemeMismatch {
            expected: spec.to_string(),
            found: format!("{} vectors", vectors.len()),
        });
    }
    let mut out = FeatureVector {
        scheme: spec.clone(),
        values: Vec::new(),
        names: Vec::new(),
        source_id: first.source_id.clone(),
        warnings: Vec::new(),
    };
    for (v, &scheme) in vectors.iter().zip(spec.schemes()) {
        if v.scheme != FusionSpec::single(scheme) {
            return Err(Error::SchemeMismatch {
                expected: scheme.to_string(),
                found: v.scheme.to_string(),
            });
        }
        if v.source_id != first.source_id {
            return Err(Error::SourceMismatch(first.source_id.clone(), v.source_id.clone()));
        }
        out.values.extend_from_slice(&v.values);
        out.names.extend(v.names.iter().cloned());
        out.warnings.extend(v.warnings.iter().map(|w| format!("{scheme}: {w}")));
    }
    if !spec.is_fusion() {
        out.warnings = first.warnings.clone();
    }
    Ok(out)
}

/// Extracts any scheme from a waveform, resampling to 8 kHz first.
/// Embedding schemes need their trained models attached.
#[derive(Debug, Clone, Default)]
pub struct Extractor {
    pub ivector: Option<IvectorExtractor>,
    pub xvector: Option<XVectorWeights>,
}

impl Extractor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn dim(&self, scheme: Scheme) -> Option<usize> {
        match scheme {
            Scheme::Ivector => self.ivector.as_ref().map(IvectorExtractor::rank),
            other => other.fixed_dim(),
        }
    }

    pub fn extract(&self, w: &Waveform, spec: &FusionSpec) -> Result<FeatureVector> {
        let w = if w.sample_rate() == TARGET_RATE {
            w.clone()
        } else {
            resample_to_8k(w)?
        };
        let parts = spec
            .schemes()
            .iter()
            .map(|&s| self.extract_one(&w, s))
            .collect::<Result<Vec<_>>>()?;
        fuse(&parts, spec)
    }

    fn extract_one(&self, w: &Waveform, scheme: Scheme) -> Result<FeatureVector> {
        Ok(match scheme {
            Scheme::Phonation => phonation_features(w),
            Scheme::Articulation => articulation_features(w),
            Scheme::Prosody => prosody_features(w),
            Scheme::I2010pc => i2010pc_features(w),
            Scheme::Ivector => {
                let ex = self.ivector.as_ref().ok_or_else(|| {
                    Error::InvalidArgument("ivector scheme needs UBM and T-matrix models".into())
                })?;
                ex.features(w)?
            }
            Scheme::Xvector => {
                let weights = self.xvector.as_ref().ok_or_else(|| {
                    Error::InvalidArgument("xvector scheme needs a weights file".into())
                })?;
                crate::embeddings::xvector_features(weights, w)?
            }
        })
    }
}
