use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::folds::{FoldMode, FoldPlan, Sample};
use super::metrics::{metrics, roc_curve, Confusion, Metrics, Roc};
use crate::classifier::{MulticlassSvm, SmoConfig, SvmParams, TrainingSet};
use crate::error::{Error, Result};

/// Hyperparameter grid, both axes ascending.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    pub c: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl Grid {
    /// Powers of ten `10^c_lo..=10^c_hi` by `10^g_lo..=10^g_hi`.
    pub fn powers_of_ten(c_lo: i32, c_hi: i32, g_lo: i32, g_hi: i32) -> Result<Self> {
        if c_lo > c_hi || g_lo > g_hi {
            return Err(Error::InvalidArgument(format!(
                "empty grid: C 1e{c_lo}..1e{c_hi}, gamma 1e{g_lo}..1e{g_hi}"
            )));
        }
        Ok(Self {
            c: (c_lo..=c_hi).map(|e| 10f64.powi(e)).collect(),
            gamma: (g_lo..=g_hi).map(|e| 10f64.powi(e)).collect(),
        })
    }

    pub fn new(mut c: Vec<f64>, mut gamma: Vec<f64>) -> Result<Self> {
        if c.is_empty() || gamma.is_empty() || c.iter().chain(&gamma).any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument("grid values must be positive and finite".into()));
        }
        c.sort_by(f64::total_cmp);
        c.dedup();
        gamma.sort_by(f64::total_cmp);
        gamma.dedup();
        Ok(Self { c, gamma })
    }

    pub fn len(&self) -> usize {
        self.c.len() * self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cells in C-major order, so the first maximum is the smallest C and
    /// then the smallest gamma.
    pub fn cells(&self) -> Vec<(f64, f64)> {
        self.c
            .iter()
            .flat_map(|&c| self.gamma.iter().map(move |&g| (c, g)))
            .collect()
    }
}

impl Default for Grid {
    fn default() -> Self {
        Self::powers_of_ten(-3, 4, -6, 3).unwrap()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NestedOptions {
    pub smo: SmoConfig,
    pub class_weighting: bool,
    /// Positive class for SEN/SPE and ROC; falls back to "dissatisfied"
    /// when present, else the second class in sorted order.
    pub positive_class: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldReport {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub c: f64,
    pub gamma: f64,
    /// Mean inner UAR of the chosen cell.
    pub inner_uar: f64,
    pub inner_folds_used: usize,
    pub uar: f64,
    pub acc: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sen: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spe: Option<f64>,
    pub converged: bool,
    pub confusion: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub uar: f64,
    pub uar_std: f64,
    pub acc: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sen: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spe: Option<f64>,
    /// Confusion summed over outer folds.
    pub confusion: Vec<Vec<u64>>,
}

/// Test-fold prediction for one sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub index: usize,
    pub fold: usize,
    pub predicted: String,
    /// Summed signed margin of the positive class (binary tasks) or of
    /// the predicted class.
    pub score: f64,
}

/// Sample indices touched while choosing and fitting each outer fold's
/// model, next to that fold's test indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FoldAudit {
    pub decision_ids: BTreeSet<usize>,
    pub test_ids: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub mode: FoldMode,
    pub k_outer: usize,
    pub k_inner: Vec<usize>,
    pub seed: u64,
    pub n_samples: usize,
    pub n_features: usize,
    pub classes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub positive_class: Option<String>,
    pub grid_c: Vec<f64>,
    pub grid_gamma: Vec<f64>,
    pub aggregate: Aggregate,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
    pub warnings: Vec<String>,
    pub folds: Vec<FoldReport>,
    #[serde(skip)]
    pub roc: Option<Roc>,
    #[serde(skip)]
    pub predictions: Vec<Prediction>,
    #[serde(skip)]
    pub audit: Vec<FoldAudit>,
    /// Wall time; kept out of the serialized text so reruns compare equal.
    #[serde(skip)]
    pub elapsed_s: f64,
}

impl EvalReport {
    /// True when no outer-test sample took part in any inner decision or
    /// in fitting the model evaluated on it.
    pub fn leakage_free(&self) -> bool {
        self.audit
            .iter()
            .all(|a| a.decision_ids.is_disjoint(&a.test_ids))
    }

    pub fn to_text(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidArgument(format!("report serialization: {e}")))
    }

    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("fold,n_train,n_test,C,gamma,inner_uar,uar,acc,sen,spe\n");
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for f in &self.folds {
            let _ = writeln!(
                out,
                "{},{},{},{:e},{:e},{:.6},{:.6},{:.6},{},{}",
                f.fold, f.n_train, f.n_test, f.c, f.gamma, f.inner_uar, f.uar, f.acc, opt(f.sen), opt(f.spe)
            );
        }
        let a = &self.aggregate;
        let _ = writeln!(
            out,
            "mean,,,,,,{:.6},{:.6},{},{}",
            a.uar,
            a.acc,
            opt(a.sen),
            opt(a.spe)
        );
        out
    }

    pub fn roc_csv(&self) -> Option<String> {
        let roc = self.roc.as_ref()?;
        let mut out = String::from("threshold,fpr,tpr\n");
        for p in &roc.points {
            let _ = writeln!(out, "{:e},{:.6},{:.6}", p.threshold, p.fpr, p.tpr);
        }
        Some(out)
    }
}

fn resolve_positive(classes: &[String], requested: Option<&str>) -> Result<Option<usize>> {
    if classes.len() != 2 {
        return Ok(None);
    }
    match requested {
        Some(p) => classes
            .iter()
            .position(|c| c == p)
            .map(Some)
            .ok_or_else(|| Error::InvalidArgument(format!("positive class {p:?} not among {classes:?}"))),
        None => Ok(Some(classes.iter().position(|c| c == "dissatisfied").unwrap_or(1))),
    }
}

fn gather(features: &[Vec<f64>], idx: &[usize]) -> Vec<Vec<f64>> {
    idx.iter().map(|&i| features[i].clone()).collect()
}

fn labels_of(samples: &[Sample], idx: &[usize]) -> Vec<String> {
    idx.iter().map(|&i| samples[i].label.clone()).collect()
}

fn class_set(samples: &[Sample], idx: &[usize]) -> BTreeSet<String> {
    idx.iter().map(|&i| samples[i].label.clone()).collect()
}

struct InnerFold {
    set: TrainingSet,
    dists: Vec<Vec<f64>>,
    truth: Vec<usize>,
}

struct CellScore {
    uar: f64,
    used: usize,
}

fn uar_of(model: &MulticlassSvm, dists: &[Vec<f64>], truth: &[usize]) -> f64 {
    let mut conf = Confusion::new(model.classes().to_vec());
    for (s, &t) in model.decision_scores_from_sq_dist(dists).iter().zip(truth) {
        conf.add(t, model.winner(s));
    }
    metrics(&conf, None).map(|m| m.uar).unwrap_or(0.0)
}

struct FoldOutcome {
    report: FoldReport,
    predictions: Vec<Prediction>,
    audit: FoldAudit,
    warnings: Vec<String>,
}

fn run_fold(
    f: usize,
    samples: &[Sample],
    features: &[Vec<f64>],
    plan: &FoldPlan,
    grid: &Grid,
    options: &NestedOptions,
    classes: &[String],
    positive: Option<usize>,
) -> Result<FoldOutcome> {
    let train = plan.outer_train(f);
    let test = plan.outer_test(f);
    let train_classes = class_set(samples, &train);
    let mut audit = FoldAudit {
        decision_ids: BTreeSet::new(),
        test_ids: test.iter().copied().collect(),
    };
    let mut warnings = Vec::new();

    let inner: Vec<Option<InnerFold>> = (0..plan.k_inner[f])
        .into_par_iter()
        .map(|g| {
            let (itrain, ival) = plan.inner_split(f, g);
            if class_set(samples, &itrain) != train_classes || class_set(samples, &ival) != train_classes {
                return Ok(None);
            }
            let set = match TrainingSet::new(&gather(features, &itrain), &labels_of(samples, &itrain)) {
                Ok(s) => s,
                Err(Error::TooFewClassSamples { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            let dists = set.sq_distances_to(&gather(features, &ival))?;
            let truth = ival
                .iter()
                .map(|&i| set.classes().binary_search(&samples[i].label).unwrap())
                .collect();
            Ok(Some(InnerFold { set, dists, truth }))
        })
        .collect::<Result<_>>()?;
    for g in 0..plan.k_inner[f] {
        if inner[g].is_some() {
            let (itrain, ival) = plan.inner_split(f, g);
            audit.decision_ids.extend(itrain);
            audit.decision_ids.extend(ival);
        } else {
            warnings.push(format!("outer fold {f}: inner fold {g} lacks a class and was skipped"));
        }
    }

    let cells = grid.cells();
    let scores: Vec<CellScore> = cells
        .par_iter()
        .map(|&(c, gamma)| {
            let params = SvmParams {
                c,
                gamma,
                smo: options.smo,
                class_weighting: options.class_weighting,
            };
            let mut sum = 0.0;
            let mut used = 0;
            for fold in inner.iter().flatten() {
                let model = fold.set.fit(&params)?;
                sum += uar_of(&model, &fold.dists, &fold.truth);
                used += 1;
            }
            let uar = if used == 0 { 0.0 } else { sum / used as f64 };
            Ok(CellScore { uar, used })
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if s.uar > scores[best].uar {
            best = i;
        }
    }
    let (c, gamma) = cells[best];

    let set = TrainingSet::new(&gather(features, &train), &labels_of(samples, &train))?;
    audit.decision_ids.extend(train.iter().copied());
    let model = set.fit(&SvmParams {
        c,
        gamma,
        smo: options.smo,
        class_weighting: options.class_weighting,
    })?;

    let mut conf = Confusion::new(classes.to_vec());
    let mut predictions = Vec::with_capacity(test.len());
    let model_to_global: Vec<usize> = model
        .classes()
        .iter()
        .map(|c| classes.binary_search(c).unwrap())
        .collect();
    let pos_in_model = positive.and_then(|p| model.classes().iter().position(|c| *c == classes[p]));
    for (s, &i) in model.decision_scores(&gather(features, &test))?.iter().zip(&test) {
        let w = model.winner(s);
        let truth = classes.binary_search(&samples[i].label).unwrap();
        conf.add(truth, model_to_global[w]);
        predictions.push(Prediction {
            index: i,
            fold: f,
            predicted: model.classes()[w].clone(),
            score: s.margins[pos_in_model.unwrap_or(w)],
        });
    }
    let m: Metrics = metrics(&conf, positive)?;
    Ok(FoldOutcome {
        report: FoldReport {
            fold: f,
            n_train: train.len(),
            n_test: test.len(),
            c,
            gamma,
            inner_uar: scores[best].uar,
            inner_folds_used: scores[best].used,
            uar: m.uar,
            acc: m.acc,
            sen: m.sen,
            spe: m.spe,
            converged: model.converged(),
            confusion: conf.counts,
        },
        predictions,
        audit,
        warnings,
    })
}

/// Nested cross-validation: per outer fold, an inner grid search picks
/// (C, gamma) by mean inner UAR, the winner is refitted on the whole outer
/// training set and scored once on the outer test fold.
pub fn nested_cv(
    samples: &[Sample],
    features: &[Vec<f64>],
    plan: &FoldPlan,
    grid: &Grid,
    options: &NestedOptions,
) -> Result<EvalReport> {
    let start = Instant::now();
    if samples.len() != features.len() || plan.outer.len() != samples.len() {
        return Err(Error::DimensionMismatch {
            expected: samples.len(),
            found: if features.len() != samples.len() { features.len() } else { plan.outer.len() },
        });
    }
    let dim = features.first().map_or(0, Vec::len);
    if let Some(bad) = features.iter().find(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: bad.len(),
        });
    }
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty hyperparameter grid".into()));
    }
    let classes: Vec<String> = class_set(samples, &(0..samples.len()).collect::<Vec<_>>())
        .into_iter()
        .collect();
    let positive = resolve_positive(&classes, options.positive_class.as_deref())?;

    let outcomes: Vec<FoldOutcome> = (0..plan.k_outer)
        .into_par_iter()
        .map(|f| run_fold(f, samples, features, plan, grid, options, &classes, positive))
        .collect::<Result<_>>()?;

    let k = classes.len();
    let mut total = vec![vec![0u64; k]; k];
    let mut warnings = plan.warnings.clone();
    let mut folds = Vec::new();
    let mut predictions = Vec::new();
    let mut audit = Vec::new();
    for o in outcomes {
        for (row, add) in total.iter_mut().zip(&o.report.confusion) {
            for (t, a) in row.iter_mut().zip(add) {
                *t += a;
            }
        }
        warnings.extend(o.warnings);
        folds.push(o.report);
        predictions.extend(o.predictions);
        audit.push(o.audit);
    }
    let n = folds.len() as f64;
    let mean = |get: &dyn Fn(&FoldReport) -> f64| folds.iter().map(get).sum::<f64>() / n;
    let mean_opt = |get: &dyn Fn(&FoldReport) -> Option<f64>| {
        let vals: Vec<f64> = folds.iter().filter_map(get).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };
    let uar = mean(&|f| f.uar);
    let uar_std = (folds.iter().map(|f| (f.uar - uar).powi(2)).sum::<f64>() / n).sqrt();
    let aggregate = Aggregate {
        uar,
        uar_std,
        acc: mean(&|f| f.acc),
        sen: mean_opt(&|f| f.sen),
        spe: mean_opt(&|f| f.spe),
        confusion: total,
    };

    predictions.sort_by_key(|p| p.index);
    let roc = match positive {
        Some(p) => {
            let scores: Vec<f64> = predictions.iter().map(|x| x.score).collect();
            let truth: Vec<bool> = predictions
                .iter()
                .map(|x| samples[x.index].label == classes[p])
                .collect();
            roc_curve(&scores, &truth).ok()
        }
        None => None,
    };
    for f in &folds {
        if !f.converged {
            warnings.push(format!("outer fold {}: SMO hit its iteration budget", f.fold));
        }
    }
    let report = EvalReport {
        mode: plan.mode,
        k_outer: plan.k_outer,
        k_inner: plan.k_inner.clone(),
        seed: plan.seed,
        n_samples: samples.len(),
        n_features: dim,
        positive_class: positive.map(|p| classes[p].clone()),
        classes,
        grid_c: grid.c.clone(),
        grid_gamma: grid.gamma.clone(),
        aggregate,
        auc: roc.as_ref().map(|r| r.auc),
        warnings,
        folds,
        roc,
        predictions,
        audit,
        elapsed_s: start.elapsed().as_secs_f64(),
    };
    log::info!(
        "nested CV: UAR {:.4} over {} folds in {:.1}s",
        report.aggregate.uar,
        report.k_outer,
        report.elapsed_s
    );
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::folds::make_folds;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    /// Three well separated Gaussian blobs, 10 speakers per class with 4
    /// utterances each.
    pub(crate) fn blobs(seed: u64) -> (Vec<Sample>, Vec<Vec<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.5).unwrap();
        let centers = [[0.0, 0.0, 0.0], [5.0, 0.0, 0.0], [0.0, 5.0, 0.0]];
        let mut samples = Vec::new();
        let mut x = Vec::new();
        for (k, center) in centers.iter().enumerate() {
            for s in 0..10 {
                for u in 0..4 {
                    samples.push(Sample::new(&format!("c{k}s{s}u{u}"), &format!("spk{k}_{s}"), &format!("class{k}")));
                    x.push(center.iter().map(|c| c + noise.sample(&mut rng)).collect());
                }
            }
        }
        (samples, x)
    }

    fn small_grid() -> Grid {
        Grid::powers_of_ten(-1, 2, -2, 1).unwrap()
    }

    #[test]
    fn default_grid_has_eighty_cells() {
        let g = Grid::default();
        assert_eq!((g.c.len(), g.gamma.len(), g.len()), (8, 10, 80));
        assert_eq!(g.cells()[0], (1e-3, 1e-6));
        assert_eq!(g.cells()[1], (1e-3, 1e-5));
    }

    #[test]
    fn separable_blobs() {
        let (samples, x) = blobs(3);
        let plan = make_folds(&samples, FoldMode::SpeakerIndependent, 5, 5, 11).unwrap();
        let report = nested_cv(&samples, &x, &plan, &small_grid(), &NestedOptions::default()).unwrap();
        assert!(report.aggregate.uar >= 0.95, "{}", report.aggregate.uar);
        assert_eq!(report.folds.len(), 5);
        assert!(report.leakage_free());
        for f in &report.folds {
            let rows: u64 = f.confusion.iter().flatten().sum();
            assert_eq!(rows as usize, f.n_test);
            assert!(report.grid_c.contains(&f.c) && report.grid_gamma.contains(&f.gamma));
        }
        let mean = report.folds.iter().map(|f| f.uar).sum::<f64>() / 5.0;
        assert!((report.aggregate.uar - mean).abs() < 1e-12);
        assert_eq!(report.aggregate.sen, None);
        assert!(report.roc.is_none());
    }

    #[test]
    fn permuted_labels_are_at_chance() {
        let (samples, x) = blobs(4);
        let mut total = 0.0;
        for rep in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + rep);
            let mut labels: Vec<String> = samples.iter().map(|s| s.label.clone()).collect();
            labels.shuffle(&mut rng);
            let permuted: Vec<Sample> = samples
                .iter()
                .zip(labels)
                .map(|(s, l)| Sample { label: l, ..s.clone() })
                .collect();
            let plan = make_folds(&permuted, FoldMode::SpeakerDependent, 5, 5, rep).unwrap();
            let r = nested_cv(&permuted, &x, &plan, &small_grid(), &NestedOptions::default()).unwrap();
            total += r.aggregate.uar;
        }
        let mean = total / 5.0;
        assert!((mean - 1.0 / 3.0).abs() <= 0.1, "{mean}");
    }

    #[test]
    fn reports_are_reproducible() {
        let (samples, x) = blobs(5);
        let plan = make_folds(&samples, FoldMode::SpeakerIndependent, 5, 5, 2).unwrap();
        let a = nested_cv(&samples, &x, &plan, &small_grid(), &NestedOptions::default()).unwrap();
        let b = nested_cv(&samples, &x, &plan, &small_grid(), &NestedOptions::default()).unwrap();
        assert_eq!(a.to_text().unwrap(), b.to_text().unwrap());
        assert_eq!(a.metrics_csv(), b.metrics_csv());
    }

    #[test]
    fn binary_task_has_roc_and_positive_class() {
        let (samples, x) = blobs(6);
        let keep: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].label != "class2").collect();
        let relabel = |l: &str| if l == "class0" { "satisfied" } else { "dissatisfied" };
        let s: Vec<Sample> = keep
            .iter()
            .map(|&i| Sample { label: relabel(&samples[i].label).into(), ..samples[i].clone() })
            .collect();
        let x: Vec<Vec<f64>> = keep.iter().map(|&i| x[i].clone()).collect();
        let plan = make_folds(&s, FoldMode::SpeakerIndependent, 5, 5, 9).unwrap();
        let r = nested_cv(&s, &x, &plan, &small_grid(), &NestedOptions::default()).unwrap();
        assert_eq!(r.positive_class.as_deref(), Some("dissatisfied"));
        assert!(r.aggregate.sen.is_some() && r.aggregate.spe.is_some());
        assert!(r.auc.unwrap() > 0.95);
        let csv = r.roc_csv().unwrap();
        let fpr: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
        assert!(fpr.windows(2).all(|w| w[1] >= w[0]));
        assert!(r.to_text().unwrap().contains("positive_class = \"dissatisfied\""));
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let (samples, x) = blobs(1);
        let plan = make_folds(&samples, FoldMode::SpeakerIndependent, 5, 5, 2).unwrap();
        assert!(nested_cv(&samples, &x[1..], &plan, &small_grid(), &NestedOptions::default()).is_err());
        let opts = NestedOptions {
            positive_class: Some("nope".into()),
            ..NestedOptions::default()
        };
        // positive class only matters for binary tasks
        assert!(nested_cv(&samples, &x, &plan, &small_grid(), &opts).is_ok());
    }
}
