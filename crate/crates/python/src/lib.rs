//! Python bindings. Vectors and matrices cross the boundary as lists of
//! floats; models are plain Python objects that can be saved to disk.

use std::path::PathBuf;

use paraling::classifier::{train_multiclass, MulticlassSvm, SvmParams};
use paraling::eval::{self, make_folds, FoldMode, Gender, Grid, NestedOptions, Sample};
use paraling::features::{Extractor, FusionSpec};
use paraling::signal::{load_wav as load_wav_file, Waveform};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn err(e: paraling::Error) -> PyErr {
    match e {
        paraling::Error::Io(e) => PyIOError::new_err(e.to_string()),
        paraling::Error::MissingFile(p) => PyIOError::new_err(format!("missing file {}", p.display())),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Features of one recording.
#[pyclass(name = "FeatureVector", frozen, get_all)]
struct PyFeatureVector {
    scheme: String,
    values: Vec<f64>,
    names: Vec<String>,
    source_id: String,
    warnings: Vec<String>,
}

#[pymethods]
impl PyFeatureVector {
    fn __len__(&self) -> usize {
        self.values.len()
    }

    fn __repr__(&self) -> String {
        format!("FeatureVector(scheme={:?}, dim={}, source_id={:?})", self.scheme, self.values.len(), self.source_id)
    }
}

/// Returns `(samples, sample_rate)` with samples scaled to [-1, 1].
#[pyfunction]
fn load_wav(path: PathBuf) -> PyResult<(Vec<f64>, u32)> {
    let w = load_wav_file(&path).map_err(err)?;
    let sr = w.sample_rate();
    Ok((w.into_samples(), sr))
}

/// Feature vector for a mono signal. `scheme` is a fusion label such as
/// `"art+pro+pho"`; embedding schemes need model files.
#[pyfunction]
#[pyo3(signature = (samples, sample_rate, scheme, source_id = "", ivector_model = None, xvector_model = None))]
fn extract(
    py: Python<'_>,
    samples: Vec<f64>,
    sample_rate: u32,
    scheme: &str,
    source_id: &str,
    ivector_model: Option<PathBuf>,
    xvector_model: Option<PathBuf>,
) -> PyResult<PyFeatureVector> {
    let spec: FusionSpec = scheme.parse().map_err(err)?;
    let mut ex = Extractor::new();
    if let Some(p) = ivector_model {
        ex.ivector = Some(paraling::embeddings::IvectorExtractor::load(p).map_err(err)?);
    }
    if let Some(p) = xvector_model {
        ex.xvector = Some(paraling::embeddings::XVectorWeights::load(p).map_err(err)?);
    }
    let w = Waveform::new(samples, sample_rate, source_id).map_err(err)?;
    let v = py.detach(|| ex.extract(&w, &spec)).map_err(err)?;
    Ok(PyFeatureVector {
        scheme: v.scheme.to_string(),
        values: v.values,
        names: v.names,
        source_id: v.source_id,
        warnings: v.warnings,
    })
}

/// Multiclass RBF SVM (one-vs-one) with built-in standardisation.
#[pyclass(name = "Svm")]
struct PySvm {
    inner: MulticlassSvm,
}

#[pymethods]
impl PySvm {
    #[staticmethod]
    fn train(py: Python<'_>, x: Vec<Vec<f64>>, labels: Vec<String>, c: f64, gamma: f64) -> PyResult<Self> {
        let inner = py
            .detach(|| train_multiclass(&x, &labels, &SvmParams::new(c, gamma)))
            .map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: MulticlassSvm::load(path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    #[getter]
    fn classes(&self) -> Vec<String> {
        self.inner.classes().to_vec()
    }

    fn predict(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<String>> {
        self.inner.predict(&x).map_err(err)
    }

    /// Per-class summed margins, one row per input.
    fn decision_scores(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(self.inner.decision_scores(&x).map_err(err)?.into_iter().map(|s| s.margins).collect())
    }
}

/// Nested cross-validation. Returns the report as TOML text.
#[pyfunction]
#[pyo3(signature = (
    x, labels, speakers, genders = None, mode = "speaker_independent", k_outer = 5, k_inner = 5, seed = 0,
    c_exponents = (-3, 4), gamma_exponents = (-6, 3), positive_class = None
))]
#[allow(clippy::too_many_arguments)]
fn nested_cv(
    py: Python<'_>,
    x: Vec<Vec<f64>>,
    labels: Vec<String>,
    speakers: Vec<String>,
    genders: Option<Vec<String>>,
    mode: &str,
    k_outer: usize,
    k_inner: usize,
    seed: u64,
    c_exponents: (i32, i32),
    gamma_exponents: (i32, i32),
    positive_class: Option<String>,
) -> PyResult<String> {
    if labels.len() != x.len() || speakers.len() != x.len() {
        return Err(PyValueError::new_err("x, labels and speakers must have the same length"));
    }
    let mut samples: Vec<Sample> = (0..x.len())
        .map(|i| Sample::new(&format!("row{i}"), &speakers[i], &labels[i]))
        .collect();
    if let Some(g) = genders {
        if g.len() != x.len() {
            return Err(PyValueError::new_err("genders must match x in length"));
        }
        for (s, g) in samples.iter_mut().zip(g) {
            s.gender = g.parse::<Gender>().map_err(err)?;
        }
    }
    let mode: FoldMode = mode.parse().map_err(err)?;
    let grid = Grid::powers_of_ten(c_exponents.0, c_exponents.1, gamma_exponents.0, gamma_exponents.1).map_err(err)?;
    let options = NestedOptions {
        positive_class,
        ..NestedOptions::default()
    };
    let report = py
        .detach(|| {
            let plan = make_folds(&samples, mode, k_outer, k_inner, seed)?;
            eval::nested_cv(&samples, &x, &plan, &grid, &options)
        })
        .map_err(err)?;
    report.to_text().map_err(err)
}

/// `(uar, acc, sen, spe)` for a square confusion matrix (rows = truth).
#[pyfunction]
#[pyo3(signature = (confusion, positive = None))]
fn metrics(confusion: Vec<Vec<u64>>, positive: Option<usize>) -> PyResult<(f64, f64, Option<f64>, Option<f64>)> {
    let m = eval::metrics(&eval::Confusion::from_counts(confusion), positive).map_err(err)?;
    Ok((m.uar, m.acc, m.sen, m.spe))
}

/// Area under the ROC curve; ties count one half.
#[pyfunction]
fn roc_auc(scores: Vec<f64>, positive: Vec<bool>) -> PyResult<f64> {
    Ok(eval::roc_curve(&scores, &positive).map_err(err)?.auc)
}

#[pymodule(name = "paraling")]
fn paraling_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFeatureVector>()?;
    m.add_class::<PySvm>()?;
    m.add_function(wrap_pyfunction!(load_wav, m)?)?;
    m.add_function(wrap_pyfunction!(extract, m)?)?;
    m.add_function(wrap_pyfunction!(nested_cv, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add_function(wrap_pyfunction!(roc_auc, m)?)?;
    m.add("ARTICULATION_DIM", paraling::features::ARTICULATION_DIM)?;
    m.add("PHONATION_DIM", paraling::features::PHONATION_DIM)?;
    m.add("PROSODY_DIM", paraling::features::PROSODY_DIM)?;
    m.add("I2010PC_DIM", paraling::features::I2010PC_DIM)?;
    Ok(())
}
