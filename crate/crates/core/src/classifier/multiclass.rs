use std::path::Path;

use rayon::prelude::*;

use super::smo::{pass_budget, solve_dual, sq_dist, BinarySvm, SmoConfig};
use super::standardize::Standardizer;
use crate::container::{find_section, load, save, Section, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    pub gamma: f64,
    pub smo: SmoConfig,
    /// Scale C per class inversely to its frequency within each pair.
    pub class_weighting: bool,
}

impl SvmParams {
    pub fn new(c: f64, gamma: f64) -> Self {
        Self {
            c,
            gamma,
            smo: SmoConfig::default(),
            class_weighting: false,
        }
    }
}

/// Standardized training rows, their classes and pairwise squared
/// distances, reusable across hyperparameter settings.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    standardizer: Standardizer,
    rows: Vec<Vec<f64>>,
    classes: Vec<String>,
    targets: Vec<usize>,
    sq_dist: Vec<f64>,
}

impl TrainingSet {
    /// Fits the standardizer on `x`; needs two classes with two samples
    /// each.
    pub fn new(x: &[Vec<f64>], labels: &[String]) -> Result<Self> {
        if x.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                found: labels.len(),
            });
        }
        let mut classes: Vec<String> = labels.to_vec();
        classes.sort();
        classes.dedup();
        if classes.len() < 2 {
            return Err(Error::SingleClass(classes.first().cloned().unwrap_or_default()));
        }
        for class in &classes {
            let count = labels.iter().filter(|l| *l == class).count();
            if count < 2 {
                return Err(Error::TooFewClassSamples {
                    class: class.clone(),
                    count,
                });
            }
        }
        let standardizer = Standardizer::fit(x)?;
        let rows = standardizer.transform_all(x)?;
        let targets = labels
            .iter()
            .map(|l| classes.binary_search(l).unwrap())
            .collect();
        let n = rows.len();
        let upper: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| (i..n).map(|j| sq_dist(&rows[i], &rows[j])).collect())
            .collect();
        let mut d = vec![0.0; n * n];
        for (i, row) in upper.iter().enumerate() {
            for (off, &v) in row.iter().enumerate() {
                d[i * n + i + off] = v;
                d[(i + off) * n + i] = v;
            }
        }
        Ok(Self {
            standardizer,
            rows,
            classes,
            targets,
            sq_dist: d,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    /// Squared distances from each (raw) row of `x` to every training row
    /// in standardized space.
    pub fn sq_distances_to(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let z = self.standardizer.transform_all(x)?;
        Ok(z.par_iter()
            .map(|r| self.rows.iter().map(|s| sq_dist(r, s)).collect())
            .collect())
    }

    /// One machine per unordered class pair; class `a < b` is the positive
    /// side of machine `(a, b)`.
    pub fn fit(&self, params: &SvmParams) -> Result<MulticlassSvm> {
        if !(params.c > 0.0 && params.gamma > 0.0) {
            return Err(Error::InvalidArgument("C and gamma must be positive".into()));
        }
        let k = self.classes.len();
        let pairs: Vec<(usize, usize)> = (0..k).flat_map(|a| (a + 1..k).map(move |b| (a, b))).collect();
        let machines = pairs.par_iter().map(|&(a, b)| self.fit_pair(a, b, params)).collect();
        Ok(MulticlassSvm {
            classes: self.classes.clone(),
            standardizer: self.standardizer.clone(),
            pairs,
            machines,
        })
    }

    fn fit_pair(&self, a: usize, b: usize, params: &SvmParams) -> BinarySvm {
        let index: Vec<usize> = (0..self.len())
            .filter(|&i| self.targets[i] == a || self.targets[i] == b)
            .collect();
        let m = index.len();
        let y: Vec<f64> = index
            .iter()
            .map(|&i| if self.targets[i] == a { 1.0 } else { -1.0 })
            .collect();
        let n_pos = y.iter().filter(|&&v| v > 0.0).count() as f64;
        let n_neg = m as f64 - n_pos;
        let c: Vec<f64> = y
            .iter()
            .map(|&v| {
                if params.class_weighting {
                    let own = if v > 0.0 { n_pos } else { n_neg };
                    params.c * m as f64 / (2.0 * own)
                } else {
                    params.c
                }
            })
            .collect();
        let n = self.len();
        let mut kernel = vec![0.0; m * m];
        for (p, &i) in index.iter().enumerate() {
            for (q, &j) in index.iter().enumerate() {
                kernel[p * m + q] = (-params.gamma * self.sq_dist[i * n + j]).exp();
            }
        }
        let sol = solve_dual(&kernel, &y, &c, params.smo.tol, pass_budget(&params.smo, m));
        if !sol.converged {
            log::warn!(
                "SMO for {} vs {} (C={}, gamma={}) stopped with violation {:.3e}",
                self.classes[a],
                self.classes[b],
                params.c,
                params.gamma,
                sol.violation
            );
        }
        BinarySvm::from_solution(|i| self.rows[i].clone(), &index, &y, &sol, params.c, params.gamma)
    }
}

/// Per-class pairwise votes and summed signed margins.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionScores {
    pub votes: Vec<usize>,
    pub margins: Vec<f64>,
}

/// One-vs-one Gaussian-kernel SVM with its training standardizer.
#[derive(Debug, Clone, PartialEq)]
pub struct MulticlassSvm {
    classes: Vec<String>,
    standardizer: Standardizer,
    pairs: Vec<(usize, usize)>,
    machines: Vec<BinarySvm>,
}

impl MulticlassSvm {
    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn n_machines(&self) -> usize {
        self.machines.len()
    }

    pub fn machines(&self) -> impl Iterator<Item = (&str, &str, &BinarySvm)> {
        self.pairs
            .iter()
            .zip(&self.machines)
            .map(|(&(a, b), m)| (self.classes[a].as_str(), self.classes[b].as_str(), m))
    }

    pub fn converged(&self) -> bool {
        self.machines.iter().all(|m| m.converged)
    }

    pub fn dim(&self) -> usize {
        self.standardizer.dim()
    }

    fn scores_from(&self, decision: impl Fn(&BinarySvm) -> f64) -> DecisionScores {
        let k = self.classes.len();
        let mut votes = vec![0; k];
        let mut margins = vec![0.0; k];
        for (&(a, b), m) in self.pairs.iter().zip(&self.machines) {
            let f = decision(m);
            if f >= 0.0 {
                votes[a] += 1;
            } else {
                votes[b] += 1;
            }
            margins[a] += f;
            margins[b] -= f;
        }
        DecisionScores { votes, margins }
    }

    pub fn decision_scores(&self, x: &[Vec<f64>]) -> Result<Vec<DecisionScores>> {
        let z = self.standardizer.transform_all(x)?;
        Ok(z.iter().map(|r| self.scores_from(|m| m.decision(r))).collect())
    }

    /// Scores from squared distances to the training rows this model was
    /// fitted on (see [`TrainingSet::sq_distances_to`]).
    pub fn decision_scores_from_sq_dist(&self, dists: &[Vec<f64>]) -> Vec<DecisionScores> {
        dists
            .iter()
            .map(|d| self.scores_from(|m| m.decision_from_sq_dist(d)))
            .collect()
    }

    /// Majority vote; ties go to the larger summed margin, then to the
    /// lexicographically first class.
    pub fn winner(&self, s: &DecisionScores) -> usize {
        let mut best = 0;
        for c in 1..self.classes.len() {
            let better = s.votes[c] > s.votes[best]
                || (s.votes[c] == s.votes[best] && s.margins[c] > s.margins[best]);
            if better {
                best = c;
            }
        }
        best
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<String>> {
        Ok(self
            .decision_scores(x)?
            .iter()
            .map(|s| self.classes[self.winner(s)].clone())
            .collect())
    }

    pub fn to_section(&self) -> Section {
        let mut s = Section::new("svm")
            .with_meta("classes", self.classes.join("\u{1f}"))
            .with_meta("machines", self.machines.len());
        for (name, t) in self.standardizer.to_tensors() {
            s = s.with_tensor(name, t);
        }
        for (k, (&(a, b), m)) in self.pairs.iter().zip(&self.machines).enumerate() {
            s = s
                .with_meta(&format!("m{k}.pair"), format!("{a},{b}"))
                .with_meta(&format!("m{k}.converged"), m.converged)
                .with_tensor(
                    &format!("m{k}.params"),
                    Tensor::vector(vec![m.bias, m.c, m.gamma]),
                )
                .with_tensor(&format!("m{k}.coef"), Tensor::vector(m.dual_coef.clone()))
                .with_tensor(
                    &format!("m{k}.index"),
                    Tensor::vector(m.support_index.iter().map(|&i| i as f64).collect()),
                )
                .with_tensor(
                    &format!("m{k}.sv"),
                    Tensor::new(vec![m.support_vectors.len(), self.dim()], m.support_vectors.concat())
                        .expect("support vectors share the model dimension"),
                );
        }
        s
    }

    pub fn from_section(s: &Section) -> Result<Self> {
        s.expect_kind("svm")?;
        let classes: Vec<String> = s.meta("classes")?.split('\u{1f}').map(String::from).collect();
        let standardizer = Standardizer::from_section(s)?;
        let count: usize = s
            .meta("machines")?
            .parse()
            .map_err(|_| Error::Container("bad machine count".into()))?;
        let mut pairs = Vec::with_capacity(count);
        let mut machines = Vec::with_capacity(count);
        for k in 0..count {
            let pair = s.meta(&format!("m{k}.pair"))?;
            let (a, b) = pair
                .split_once(',')
                .and_then(|(a, b)| Some((a.parse().ok()?, b.parse().ok()?)))
                .filter(|&(a, b): &(usize, usize)| a < b && b < classes.len())
                .ok_or_else(|| Error::Container(format!("bad pair {pair}")))?;
            let params = &s.tensor(&format!("m{k}.params"))?.data;
            let coef = s.tensor(&format!("m{k}.coef"))?.data.clone();
            let index = &s.tensor(&format!("m{k}.index"))?.data;
            let sv = s.tensor(&format!("m{k}.sv"))?;
            let support_vectors = if coef.is_empty() { Vec::new() } else { sv.rows()? };
            if params.len() != 3 || support_vectors.len() != coef.len() || index.len() != coef.len() {
                return Err(Error::Container(format!("inconsistent machine {k}")));
            }
            if support_vectors.iter().any(|r| r.len() != standardizer.dim()) {
                return Err(Error::Container(format!("machine {k} has wrong dimension")));
            }
            pairs.push((a, b));
            machines.push(BinarySvm {
                support_vectors,
                dual_coef: coef,
                support_index: index.iter().map(|&v| v as usize).collect(),
                bias: params[0],
                c: params[1],
                gamma: params[2],
                converged: s.meta(&format!("m{k}.converged"))? == "true",
            });
        }
        Ok(Self {
            classes,
            standardizer,
            pairs,
            machines,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save(path, &[self.to_section()])
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_section(find_section(&load(path)?, "svm")?)
    }
}

/// Standardizes `x`, then trains one-vs-one machines.
pub fn train_multiclass(x: &[Vec<f64>], labels: &[String], params: &SvmParams) -> Result<MulticlassSvm> {
    TrainingSet::new(x, labels)?.fit(params)
}
