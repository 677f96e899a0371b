use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use paraling::classifier::{train_multiclass, MulticlassSvm, SvmParams};
use paraling::container::{find_section, load, save, Section};
use paraling::embeddings::{IvectorExtractor, XVectorWeights};
use paraling::eval::{chi_square_independence, make_folds, nested_cv, welch_t_test, EvalReport, Gender, TestResult};
use paraling::features::{FeatureVector, FusionSpec};
use paraling::signal::{load_wav, resample_to_8k, TARGET_RATE};
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::extract::{Extraction, Pipeline};
use crate::manifest::Manifest;

/// Success, or success with some recordings skipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Complete,
    Partial,
}

impl Status {
    fn of(extraction: &Extraction) -> Self {
        if extraction.is_partial() {
            Status::Partial
        } else {
            Status::Complete
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent.display().to_string(), e))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::io(path.display().to_string(), e))
}

/// Full-precision value formatting shared by all feature tables.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn feature_csv(vectors: &[&FeatureVector]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if let Some(first) = vectors.first() {
        let mut header = vec!["source_id".to_string()];
        header.extend(first.names.iter().cloned());
        w.write_record(&header)?;
    }
    for v in vectors {
        let mut record = vec![v.source_id.clone()];
        record.extend(v.values.iter().map(|&x| format_value(x)));
        w.write_record(&record)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::io("csv buffer", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub struct ExtractOutput {
    pub status: Status,
    pub extraction: Extraction,
}

pub fn cmd_extract(manifest: &Manifest, config: &ExperimentConfig, out: &Path) -> Result<ExtractOutput> {
    let extraction = Pipeline::from_config(config)?.run(manifest, &config.scheme)?;
    let ok: Vec<&FeatureVector> = extraction.vectors.iter().flatten().collect();
    write_file(out, &feature_csv(&ok)?)?;
    Ok(ExtractOutput {
        status: Status::of(&extraction),
        extraction,
    })
}

/// Rows that extracted successfully, as (manifest index, vector).
fn successful(extraction: &Extraction) -> Vec<(usize, &FeatureVector)> {
    extraction
        .vectors
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.as_ref().map(|v| (i, v)))
        .collect()
}

pub struct EvaluateOutput {
    pub status: Status,
    pub report: EvalReport,
    pub report_text: String,
}

pub fn cmd_evaluate(manifest: &Manifest, config: &ExperimentConfig, out_dir: &Path) -> Result<EvaluateOutput> {
    let extraction = Pipeline::from_config(config)?.run(manifest, &config.scheme)?;
    let ok = successful(&extraction);
    let samples: Vec<_> = ok.iter().map(|&(i, _)| manifest.rows[i].sample()).collect();
    let features: Vec<Vec<f64>> = ok.iter().map(|(_, v)| v.values.clone()).collect();
    let plan = make_folds(&samples, config.mode, config.k_outer, config.k_inner, config.seed)?;
    for w in &plan.warnings {
        log::warn!("{w}");
    }
    let report = nested_cv(&samples, &features, &plan, &config.grid, &config.nested_options())?;
    if !report.leakage_free() {
        return Err(CliError::Usage("internal error: outer-test samples reached model selection".into()));
    }

    let mut text = String::new();
    let _ = writeln!(text, "scheme = \"{}\"", config.scheme);
    let _ = writeln!(text, "failed_recordings = {}", extraction.failures.len());
    text.push_str(&report.to_text()?);
    write_file(&out_dir.join("report.toml"), &text)?;
    write_file(&out_dir.join("metrics.csv"), &report.metrics_csv())?;
    if let Some(roc) = report.roc_csv() {
        write_file(&out_dir.join("roc.csv"), &roc)?;
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["source_id", "label", "fold", "predicted", "score"])?;
    for p in &report.predictions {
        w.write_record([
            samples[p.index].source_id.as_str(),
            samples[p.index].label.as_str(),
            &p.fold.to_string(),
            &p.predicted,
            &format_value(p.score),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::io("csv buffer", e.into_error()))?;
    write_file(&out_dir.join("predictions.csv"), &String::from_utf8(bytes).expect("utf-8"))?;

    println!(
        "{}: UAR {:.4} (sd {:.4}), ACC {:.4}{}",
        config.scheme,
        report.aggregate.uar,
        report.aggregate.uar_std,
        report.aggregate.acc,
        report.auc.map(|a| format!(", AUC {a:.4}")).unwrap_or_default()
    );
    for f in &report.folds {
        println!("  fold {}: C={:e} gamma={:e} UAR {:.4}", f.fold, f.c, f.gamma, f.uar);
    }
    Ok(EvaluateOutput {
        status: Status::of(&extraction),
        report,
        report_text: text,
    })
}

const MODEL_INFO: &str = "model_info";

/// A classifier bundled with the feature scheme it was trained on.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub scheme: FusionSpec,
    pub svm: MulticlassSvm,
}

impl TrainedModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        let info = Section::new(MODEL_INFO)
            .with_meta("scheme", &self.scheme)
            .with_meta("version", crate::cache::EXTRACTOR_VERSION);
        Ok(save(path, &[info, self.svm.to_section()])?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let sections = load(path)?;
        let info = find_section(&sections, MODEL_INFO)?;
        let scheme: FusionSpec = info.meta("scheme")?.parse()?;
        let svm = MulticlassSvm::from_section(find_section(&sections, "svm")?)?;
        Ok(Self { scheme, svm })
    }
}

pub fn cmd_train(manifest: &Manifest, config: &ExperimentConfig, c: f64, gamma: f64, model: &Path) -> Result<Status> {
    let extraction = Pipeline::from_config(config)?.run(manifest, &config.scheme)?;
    let ok = successful(&extraction);
    let x: Vec<Vec<f64>> = ok.iter().map(|(_, v)| v.values.clone()).collect();
    let labels: Vec<String> = ok.iter().map(|&(i, _)| manifest.rows[i].label.clone()).collect();
    let params = SvmParams {
        c,
        gamma,
        smo: config.smo(),
        class_weighting: config.class_weighting,
    };
    let svm = train_multiclass(&x, &labels, &params)?;
    if !svm.converged() {
        log::warn!("SMO hit its iteration budget for at least one class pair");
    }
    TrainedModel {
        scheme: config.scheme.clone(),
        svm,
    }
    .save(model)?;
    log::info!("trained on {} recordings, model written to {}", x.len(), model.display());
    Ok(Status::of(&extraction))
}

#[derive(Debug)]
pub struct PredictOutput {
    pub status: Status,
    pub csv: String,
}

/// `config` may pin a scheme; it must match the model's.
pub fn cmd_predict(model: &Path, manifest: &Manifest, config: Option<&ExperimentConfig>, out: &Path) -> Result<PredictOutput> {
    let trained = TrainedModel::load(model)?;
    let config = match config {
        Some(c) if c.scheme != trained.scheme => {
            return Err(paraling::Error::SchemeMismatch {
                expected: trained.scheme.to_string(),
                found: c.scheme.to_string(),
            }
            .into())
        }
        Some(c) => c.clone(),
        None => ExperimentConfig::for_scheme(trained.scheme.clone()),
    };
    let extraction = Pipeline::from_config(&config)?.run(manifest, &trained.scheme)?;
    let ok = successful(&extraction);
    let x: Vec<Vec<f64>> = ok.iter().map(|(_, v)| v.values.clone()).collect();
    let scores = trained.svm.decision_scores(&x)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["source_id".to_string(), "predicted".to_string()];
    header.extend(trained.svm.classes().iter().map(|c| format!("score_{c}")));
    w.write_record(&header)?;
    for ((_, v), s) in ok.iter().zip(&scores) {
        let mut record = vec![v.source_id.clone(), trained.svm.classes()[trained.svm.winner(s)].clone()];
        record.extend(s.margins.iter().map(|&m| format_value(m)));
        w.write_record(&record)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::io("csv buffer", e.into_error()))?;
    let csv = String::from_utf8(bytes).expect("utf-8");
    write_file(out, &csv)?;
    for (i, e) in &extraction.failures {
        eprintln!("skipped {}: {e}", manifest.rows[*i].source_id);
    }
    Ok(PredictOutput {
        status: Status::of(&extraction),
        csv,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassStats {
    pub label: String,
    pub count: usize,
    pub duration_mean: f64,
    pub duration_std: f64,
    pub male: usize,
    pub female: usize,
    pub unknown_gender: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    pub classes: Vec<ClassStats>,
    pub duration_test: Option<TestResult>,
    pub gender_test: Option<TestResult>,
    pub notices: Vec<String>,
}

impl CorpusStats {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<16} {:>6} {:>18} {:>6} {:>6} {:>8}", "class", "n", "duration_s", "male", "female", "unknown");
        for c in &self.classes {
            let _ = writeln!(
                out,
                "{:<16} {:>6} {:>18} {:>6} {:>6} {:>8}",
                c.label,
                c.count,
                format!("{:.1} ± {:.1}", c.duration_mean, c.duration_std),
                c.male,
                c.female,
                c.unknown_gender
            );
        }
        if let Some(t) = &self.duration_test {
            let _ = writeln!(out, "duration Welch t-test: t = {:.4}, df = {:.2}, p = {:.4e}", t.statistic, t.df, t.p);
        }
        if let Some(t) = &self.gender_test {
            let _ = writeln!(out, "gender x class chi-square: chi2 = {:.4}, df = 1, p = {:.4e}", t.statistic, t.p);
        }
        for n in &self.notices {
            let _ = writeln!(out, "note: {n}");
        }
        out
    }
}

fn mean_std(x: &[f64]) -> (f64, f64) {
    if x.is_empty() {
        return (0.0, 0.0);
    }
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let var = if x.len() > 1 {
        x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, var.sqrt())
}

pub fn cmd_stats(manifest: &Manifest) -> Result<CorpusStats> {
    let durations: Vec<Option<f64>> = manifest
        .rows
        .par_iter()
        .map(|r| r.duration_s.or_else(|| load_wav(&r.audio_path).ok().map(|w| w.duration_s())))
        .collect();
    let mut notices = Vec::new();
    let missing = durations.iter().filter(|d| d.is_none()).count();
    if missing > 0 {
        notices.push(format!("{missing} recording(s) without duration (unreadable audio) left out of duration statistics"));
    }
    let mut by_class: BTreeMap<&str, (Vec<f64>, [usize; 3])> = BTreeMap::new();
    for (r, d) in manifest.rows.iter().zip(&durations) {
        let entry = by_class.entry(r.label.as_str()).or_default();
        if let Some(d) = d {
            entry.0.push(*d);
        }
        let slot = match r.gender {
            Gender::M => 0,
            Gender::F => 1,
            Gender::Unknown => 2,
        };
        entry.1[slot] += 1;
    }
    let classes: Vec<ClassStats> = by_class
        .iter()
        .map(|(label, (d, g))| {
            let (m, s) = mean_std(d);
            ClassStats {
                label: label.to_string(),
                count: g.iter().sum(),
                duration_mean: m,
                duration_std: s,
                male: g[0],
                female: g[1],
                unknown_gender: g[2],
            }
        })
        .collect();
    let (mut duration_test, mut gender_test) = (None, None);
    if classes.len() == 2 {
        let groups: Vec<&Vec<f64>> = by_class.values().map(|(d, _)| d).collect();
        match welch_t_test(groups[0], groups[1]) {
            Ok(t) => duration_test = Some(t),
            Err(e) => notices.push(format!("duration t-test skipped: {e}")),
        }
        let table = [
            [classes[0].male as f64, classes[0].female as f64],
            [classes[1].male as f64, classes[1].female as f64],
        ];
        match chi_square_independence(table) {
            Ok(t) => gender_test = Some(t),
            Err(e) => notices.push(format!("gender chi-square skipped: {e}")),
        }
    } else if classes.len() == 1 {
        notices.push("single class: tests skipped".into());
    } else {
        notices.push(format!("{} classes: two-class tests skipped", classes.len()));
    }
    Ok(CorpusStats {
        classes,
        duration_test,
        gender_test,
        notices,
    })
}

pub struct IvectorTraining {
    pub components: usize,
    pub rank: usize,
    pub iterations: usize,
    pub seed: u64,
}

pub fn cmd_train_ivector(manifest: &Manifest, opts: &IvectorTraining, out: &Path) -> Result<Status> {
    let loaded: Vec<std::result::Result<_, String>> = manifest
        .rows
        .par_iter()
        .map(|r| {
            let w = load_wav(&r.audio_path).map_err(|e| e.to_string())?;
            if w.sample_rate() == TARGET_RATE {
                Ok(w)
            } else {
                resample_to_8k(&w).map_err(|e| e.to_string())
            }
        })
        .collect();
    let mut recordings = Vec::new();
    let mut failed = 0;
    for (r, w) in manifest.rows.iter().zip(loaded) {
        match w {
            Ok(w) => recordings.push(w),
            Err(e) => {
                failed += 1;
                log::warn!("{}: {e}", r.source_id);
            }
        }
    }
    if recordings.is_empty() {
        return Err(CliError::NothingExtracted(manifest.path.display().to_string()));
    }
    let model = IvectorExtractor::train(&recordings, opts.components, opts.rank, opts.iterations, opts.seed)?;
    model.save(out)?;
    log::info!("i-vector extractor ({} components, rank {}) written to {}", opts.components, opts.rank, out.display());
    Ok(if failed > 0 { Status::Partial } else { Status::Complete })
}

/// Writes randomly initialised x-vector weights. Useful for exercising the
/// pipeline; real use needs weights trained elsewhere.
pub fn cmd_init_xvector(n_speakers: usize, seed: u64, out: &PathBuf) -> Result<()> {
    XVectorWeights::random(n_speakers, seed).save(out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_keep_seventeen_significant_digits() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 123456.789] {
            let s = format_value(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
    }

    #[test]
    fn mean_std_uses_sample_variance() {
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 2f64.sqrt()));
        assert_eq!(mean_std(&[]), (0.0, 0.0));
    }
}
