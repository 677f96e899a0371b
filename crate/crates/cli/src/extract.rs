use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use paraling::embeddings::{IvectorExtractor, XVectorWeights};
use paraling::features::{fuse, Extractor, FeatureVector, FusionSpec, Scheme};
use paraling::signal::{load_wav, resample_to_8k, Waveform, TARGET_RATE};
use rayon::prelude::*;

use crate::cache::{cache_key, sha256_hex, FeatureCache};
use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::manifest::Manifest;

/// Feature extractor plus the digests of any embedding models it carries.
pub struct Pipeline {
    extractor: Extractor,
    ivector_digest: Option<String>,
    xvector_digest: Option<String>,
    cache: Option<FeatureCache>,
    workers: usize,
}

fn read_model(path: &Path) -> Result<(Vec<u8>, String)> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path.display().to_string(), e))?;
    let digest = sha256_hex(&bytes);
    Ok((bytes, digest))
}

impl Pipeline {
    pub fn from_config(config: &ExperimentConfig) -> Result<Self> {
        let mut extractor = Extractor::new();
        let mut ivector_digest = None;
        let mut xvector_digest = None;
        let needs = |s: Scheme| config.scheme.schemes().contains(&s);
        if needs(Scheme::Ivector) {
            let path = config
                .ivector_model
                .as_ref()
                .ok_or_else(|| CliError::Usage("scheme uses ivector but ivector_model is not set".into()))?;
            let (_, digest) = read_model(path)?;
            extractor.ivector = Some(IvectorExtractor::load(path)?);
            ivector_digest = Some(digest);
        }
        if needs(Scheme::Xvector) {
            let path = config
                .xvector_model
                .as_ref()
                .ok_or_else(|| CliError::Usage("scheme uses xvector but xvector_model is not set".into()))?;
            let (_, digest) = read_model(path)?;
            extractor.xvector = Some(XVectorWeights::load(path)?);
            xvector_digest = Some(digest);
        }
        let cache = config.cache_dir.as_ref().map(FeatureCache::open).transpose()?;
        Ok(Self {
            extractor,
            ivector_digest,
            xvector_digest,
            cache,
            workers: config.workers,
        })
    }

    fn model_digest(&self, s: Scheme) -> Option<&str> {
        match s {
            Scheme::Ivector => self.ivector_digest.as_deref(),
            Scheme::Xvector => self.xvector_digest.as_deref(),
            _ => None,
        }
    }

    fn extract_path(&self, path: &Path, source_id: &str, spec: &FusionSpec, stats: &Counters) -> Result<FeatureVector> {
        let bytes = std::fs::read(path).map_err(|_| paraling::Error::MissingFile(path.to_path_buf()))?;
        let digest = sha256_hex(&bytes);
        let mut audio: Option<Waveform> = None;
        let mut parts = Vec::with_capacity(spec.schemes().len());
        for &scheme in spec.schemes() {
            let key = cache_key(&digest, scheme, self.model_digest(scheme));
            if let Some(v) = self.cache.as_ref().and_then(|c| c.get(&key, scheme, source_id)) {
                stats.hits.fetch_add(1, Ordering::Relaxed);
                parts.push(v);
                continue;
            }
            if audio.is_none() {
                let w = load_wav(path)?;
                let w = Waveform::new(w.samples().to_vec(), w.sample_rate(), source_id)?;
                audio = Some(if w.sample_rate() == TARGET_RATE { w } else { resample_to_8k(&w)? });
            }
            let v = self.extractor.extract(audio.as_ref().unwrap(), &FusionSpec::single(scheme))?;
            stats.misses.fetch_add(1, Ordering::Relaxed);
            if let Some(cache) = &self.cache {
                if let Err(e) = cache.put(&key, scheme, &v) {
                    log::warn!("cache write failed for {source_id}: {e}");
                }
            }
            parts.push(v);
        }
        Ok(fuse(&parts, spec)?)
    }

    /// Extracts every manifest row, in parallel over files. Failures are
    /// logged and reported per row.
    pub fn run(&self, manifest: &Manifest, spec: &FusionSpec) -> Result<Extraction> {
        let stats = Counters::default();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| CliError::Usage(format!("worker pool: {e}")))?;
        let results: Vec<std::result::Result<FeatureVector, String>> = pool.install(|| {
            manifest
                .rows
                .par_iter()
                .map(|row| {
                    self.extract_path(&row.audio_path, &row.source_id, spec, &stats)
                        .map_err(|e| e.to_string())
                })
                .collect()
        });
        let mut vectors = Vec::with_capacity(results.len());
        let mut failures = Vec::new();
        for (i, r) in results.into_iter().enumerate() {
            match r {
                Ok(v) => {
                    for w in &v.warnings {
                        log::debug!("{}: {w}", v.source_id);
                    }
                    vectors.push(Some(v));
                }
                Err(e) => {
                    log::warn!("{}: {e}", manifest.rows[i].source_id);
                    failures.push((i, e));
                    vectors.push(None);
                }
            }
        }
        let out = Extraction {
            vectors,
            failures,
            cache_hits: stats.hits.into_inner(),
            cache_misses: stats.misses.into_inner(),
        };
        log::info!(
            "extracted {}/{} recordings ({} cache hits, {} computed)",
            out.n_ok(),
            manifest.len(),
            out.cache_hits,
            out.cache_misses
        );
        if out.n_ok() == 0 {
            return Err(CliError::NothingExtracted(manifest.path.display().to_string()));
        }
        Ok(out)
    }
}

#[derive(Default)]
struct Counters {
    hits: AtomicUsize,
    misses: AtomicUsize,
}

#[derive(Debug)]
pub struct Extraction {
    /// One slot per manifest row; `None` where extraction failed.
    pub vectors: Vec<Option<FeatureVector>>,
    pub failures: Vec<(usize, String)>,
    pub cache_hits: usize,
    pub cache_misses: usize,
}

impl Extraction {
    pub fn n_ok(&self) -> usize {
        self.vectors.iter().flatten().count()
    }

    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }
}
