//! Content-addressed feature cache. One file per (audio bytes, scheme,
//! extractor version, embedding model bytes); writes go through a temp file
//! and a rename so readers never see partial entries.

use std::io::Write;
use std::path::{Path, PathBuf};

use paraling::container::{read_sections, write_sections, Section, Tensor};
use paraling::features::{FeatureVector, FusionSpec, Scheme};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// Bump whenever any extractor changes its output.
pub const EXTRACTOR_VERSION: &str = concat!("paraling-", env!("CARGO_PKG_VERSION"), "/features-1");

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn cache_key(audio_digest: &str, scheme: Scheme, model_digest: Option<&str>) -> String {
    let mut h = Sha256::new();
    for part in [audio_digest, scheme.short_name(), EXTRACTOR_VERSION, model_digest.unwrap_or("")] {
        h.update(part.as_bytes());
        h.update([0u8]);
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone)]
pub struct FeatureCache {
    dir: PathBuf,
}

impl FeatureCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(dir.display().to_string(), e))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn entry(&self, key: &str) -> PathBuf {
        self.dir.join(&key[..2]).join(format!("{key}.plc"))
    }

    /// Cached vector for `key`, relabelled with `source_id`. Unreadable
    /// entries count as misses.
    pub fn get(&self, key: &str, scheme: Scheme, source_id: &str) -> Option<FeatureVector> {
        let bytes = std::fs::read(self.entry(key)).ok()?;
        let sections = read_sections(bytes.as_slice()).ok()?;
        let s = sections.first()?;
        s.expect_kind("features").ok()?;
        if s.meta("scheme").ok()? != scheme.short_name() || s.meta("version").ok()? != EXTRACTOR_VERSION {
            return None;
        }
        let split = |v: &str| -> Vec<String> {
            if v.is_empty() {
                Vec::new()
            } else {
                v.split('\n').map(str::to_string).collect()
            }
        };
        let names = split(s.meta("names").ok()?);
        let warnings = split(s.meta("warnings").ok()?);
        let values = s.tensor("values").ok()?.data.clone();
        if names.len() != values.len() {
            return None;
        }
        Some(FeatureVector {
            scheme: FusionSpec::single(scheme),
            values,
            names,
            source_id: source_id.to_string(),
            warnings,
        })
    }

    pub fn put(&self, key: &str, scheme: Scheme, v: &FeatureVector) -> Result<()> {
        let path = self.entry(key);
        let parent = path.parent().expect("cache entries live in a subdirectory");
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent.display().to_string(), e))?;
        let section = Section::new("features")
            .with_meta("scheme", scheme.short_name())
            .with_meta("version", EXTRACTOR_VERSION)
            .with_meta("names", v.names.join("\n"))
            .with_meta("warnings", v.warnings.join("\n"))
            .with_tensor("values", Tensor::vector(v.values.clone()));
        let mut tmp = tempfile::NamedTempFile::new_in(parent).map_err(|e| CliError::io("cache temp file", e))?;
        let mut buf = Vec::new();
        write_sections(&mut buf, &[section])?;
        tmp.write_all(&buf).map_err(|e| CliError::io("cache write", e))?;
        tmp.persist(&path)
            .map_err(|e| CliError::io(path.display().to_string(), e.error))?;
        Ok(())
    }
}
