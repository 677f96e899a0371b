//! Experiment configuration (TOML). Unknown keys are rejected and relative
//! paths resolve against the config file's directory.

use std::path::{Path, PathBuf};

use paraling::classifier::SmoConfig;
use paraling::eval::{FoldMode, Grid, NestedOptions};
use paraling::features::FusionSpec;
use serde::Deserialize;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scheme: String,
    #[serde(default = "default_mode")]
    mode: String,
    #[serde(default = "five")]
    k_outer: usize,
    #[serde(default = "five")]
    k_inner: usize,
    #[serde(default)]
    seed: u64,
    /// Inclusive base-10 exponent range for C.
    #[serde(default = "default_c")]
    c_exponents: [i32; 2],
    #[serde(default = "default_gamma")]
    gamma_exponents: [i32; 2],
    cache_dir: Option<PathBuf>,
    ivector_model: Option<PathBuf>,
    xvector_model: Option<PathBuf>,
    positive_class: Option<String>,
    #[serde(default)]
    class_weighting: bool,
    #[serde(default = "default_tol")]
    smo_tol: f64,
    /// Extraction worker threads; 0 uses every core.
    #[serde(default)]
    workers: usize,
}

fn default_mode() -> String {
    "speaker_independent".into()
}

fn five() -> usize {
    5
}

fn default_c() -> [i32; 2] {
    [-3, 4]
}

fn default_gamma() -> [i32; 2] {
    [-6, 3]
}

fn default_tol() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scheme: FusionSpec,
    pub mode: FoldMode,
    pub k_outer: usize,
    pub k_inner: usize,
    pub seed: u64,
    pub grid: Grid,
    pub cache_dir: Option<PathBuf>,
    pub ivector_model: Option<PathBuf>,
    pub xvector_model: Option<PathBuf>,
    pub positive_class: Option<String>,
    pub class_weighting: bool,
    pub smo_tol: f64,
    pub workers: usize,
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display().to_string(), e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |message: String| CliError::Config {
            path: path.to_path_buf(),
            message,
        };
        let raw: RawConfig = toml::from_str(text).map_err(|e| err(e.to_string()))?;
        let scheme: FusionSpec = raw.scheme.parse().map_err(|e: paraling::Error| err(e.to_string()))?;
        let mode: FoldMode = raw.mode.parse().map_err(|e: paraling::Error| err(e.to_string()))?;
        if raw.k_outer < 2 || raw.k_inner < 2 {
            return Err(err("k_outer and k_inner must be at least 2".into()));
        }
        let [c0, c1] = raw.c_exponents;
        let [g0, g1] = raw.gamma_exponents;
        let grid = Grid::powers_of_ten(c0, c1, g0, g1).map_err(|e| err(e.to_string()))?;
        if !(raw.smo_tol > 0.0 && raw.smo_tol.is_finite()) {
            return Err(err(format!("smo_tol must be positive, got {}", raw.smo_tol)));
        }
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: Option<PathBuf>| p.map(|p| if p.is_absolute() { p } else { base.join(p) });
        Ok(Self {
            scheme,
            mode,
            k_outer: raw.k_outer,
            k_inner: raw.k_inner,
            seed: raw.seed,
            grid,
            cache_dir: resolve(raw.cache_dir),
            ivector_model: resolve(raw.ivector_model),
            xvector_model: resolve(raw.xvector_model),
            positive_class: raw.positive_class,
            class_weighting: raw.class_weighting,
            smo_tol: raw.smo_tol,
            workers: raw.workers,
        })
    }

    /// Defaults for everything but the scheme.
    pub fn for_scheme(scheme: FusionSpec) -> Self {
        Self {
            scheme,
            mode: FoldMode::SpeakerIndependent,
            k_outer: 5,
            k_inner: 5,
            seed: 0,
            grid: Grid::default(),
            cache_dir: None,
            ivector_model: None,
            xvector_model: None,
            positive_class: None,
            class_weighting: false,
            smo_tol: default_tol(),
            workers: 0,
        }
    }

    pub fn smo(&self) -> SmoConfig {
        SmoConfig {
            tol: self.smo_tol,
            ..SmoConfig::default()
        }
    }

    pub fn nested_options(&self) -> NestedOptions {
        NestedOptions {
            smo: self.smo(),
            class_weighting: self.class_weighting,
            positive_class: self.positive_class.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::parse(text, Path::new("/exp/config.toml"))
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let c = parse("scheme = \"art+pro+pho\"\n").unwrap();
        assert_eq!(c.scheme.to_string(), "art+pro+pho");
        assert_eq!((c.k_outer, c.k_inner, c.seed), (5, 5, 0));
        assert_eq!(c.grid.len(), 80);
        assert_eq!(c.mode, FoldMode::SpeakerIndependent);
    }

    #[test]
    fn paths_resolve_against_config_dir() {
        let c = parse("scheme = \"ivector\"\ncache_dir = \"cache\"\nivector_model = \"/m/iv.bin\"\n").unwrap();
        assert_eq!(c.cache_dir, Some(PathBuf::from("/exp/cache")));
        assert_eq!(c.ivector_model, Some(PathBuf::from("/m/iv.bin")));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(parse("scheme = \"pho\"\nfolds = 3\n").unwrap_err().to_string().contains("folds"));
        assert!(parse("scheme = \"mfcc\"\n").is_err());
        assert!(parse("scheme = \"pho\"\nmode = \"random\"\n").is_err());
        assert!(parse("scheme = \"pho\"\nk_outer = 1\n").is_err());
        assert!(parse("scheme = \"pho\"\nc_exponents = [2, 1]\n").is_err());
        assert!(parse("mode = \"speaker_dependent\"\n").is_err());
    }
}
