use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::container::{Section, Tensor};
use crate::error::{Error, Result};

pub const VARIANCE_FLOOR: f64 = 1e-4;
/// Minimum frames per component required for training.
pub const FRAMES_PER_COMPONENT: usize = 50;
const RELATIVE_TOLERANCE: f64 = 1e-5;
const KMEANS_ITERS: usize = 10;
const CHUNK: usize = 1024;
const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Diagonal-covariance Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmUbm {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
}

/// Trained model and the average per-frame log-likelihood before each EM
/// update, followed by the value for the returned model.
#[derive(Debug, Clone)]
pub struct UbmTraining {
    pub ubm: GmmUbm,
    pub log_likelihood: Vec<f64>,
}

impl GmmUbm {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) -> Result<Self> {
        let c = weights.len();
        let d = means.first().map_or(0, Vec::len);
        if c == 0 || d == 0 {
            return Err(Error::InvalidArgument("GMM needs at least one component and dimension".into()));
        }
        if means.len() != c || variances.len() != c {
            return Err(Error::ShapeMismatch {
                name: "gmm components".into(),
                expected: format!("{c}"),
                found: format!("{}/{}", means.len(), variances.len()),
            });
        }
        if means.iter().chain(&variances).any(|r| r.len() != d) {
            return Err(Error::InvalidArgument("ragged GMM parameters".into()));
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|&w| !(w >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("GMM weights must sum to 1, got {total}")));
        }
        if variances.iter().flatten().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument("GMM variances must be positive".into()));
        }
        Ok(Self {
            weights,
            means,
            variances,
        })
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn variances(&self) -> &[Vec<f64>] {
        &self.variances
    }

    /// Per-component log of weight times density.
    fn joint_log(&self, x: &[f64], consts: &[f64]) -> Vec<f64> {
        (0..self.n_components())
            .map(|c| {
                let q: f64 = x
                    .iter()
                    .zip(&self.means[c])
                    .zip(&self.variances[c])
                    .map(|((v, m), s)| (v - m) * (v - m) / s)
                    .sum();
                consts[c] - 0.5 * q
            })
            .collect()
    }

    fn log_consts(&self) -> Vec<f64> {
        (0..self.n_components())
            .map(|c| {
                let log_det: f64 = self.variances[c].iter().map(|s| s.ln()).sum();
                self.weights[c].max(f64::MIN_POSITIVE).ln() - 0.5 * (self.dim() as f64 * LN_2PI + log_det)
            })
            .collect()
    }

    /// Component posteriors of one frame and its log-likelihood.
    pub fn posteriors(&self, x: &[f64]) -> (Vec<f64>, f64) {
        posteriors_with(self, x, &self.log_consts())
    }

    /// Average per-frame log-likelihood.
    pub fn mean_log_likelihood(&self, frames: &[Vec<f64>]) -> f64 {
        let consts = self.log_consts();
        let total: f64 = frames.iter().map(|x| posteriors_with(self, x, &consts).1).sum();
        total / frames.len().max(1) as f64
    }

    pub fn to_section(&self) -> Section {
        Section::new("gmm_ubm")
            .with_meta("components", self.n_components())
            .with_meta("dim", self.dim())
            .with_tensor("weights", Tensor::vector(self.weights.clone()))
            .with_tensor("means", Tensor::matrix(&self.means))
            .with_tensor("variances", Tensor::matrix(&self.variances))
    }

    pub fn from_section(s: &Section) -> Result<Self> {
        s.expect_kind("gmm_ubm")?;
        Self::new(
            s.tensor("weights")?.data.clone(),
            s.tensor("means")?.rows()?,
            s.tensor("variances")?.rows()?,
        )
    }
}

fn posteriors_with(ubm: &GmmUbm, x: &[f64], consts: &[f64]) -> (Vec<f64>, f64) {
    let mut lp = ubm.joint_log(x, consts);
    let max = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = lp.iter().map(|v| (v - max).exp()).sum();
    let log_lik = max + sum.ln();
    lp.iter_mut().for_each(|v| *v = (*v - log_lik).exp());
    (lp, log_lik)
}

/// Zeroth, first and second order sufficient statistics.
struct Accumulator {
    n: Vec<f64>,
    s1: Vec<Vec<f64>>,
    s2: Vec<Vec<f64>>,
    log_lik: f64,
}

impl Accumulator {
    fn zeros(c: usize, d: usize) -> Self {
        Self {
            n: vec![0.0; c],
            s1: vec![vec![0.0; d]; c],
            s2: vec![vec![0.0; d]; c],
            log_lik: 0.0,
        }
    }

    fn add(&mut self, other: &Self) {
        self.log_lik += other.log_lik;
        for c in 0..self.n.len() {
            self.n[c] += other.n[c];
            for j in 0..self.s1[c].len() {
                self.s1[c][j] += other.s1[c][j];
                self.s2[c][j] += other.s2[c][j];
            }
        }
    }
}

fn e_step(ubm: &GmmUbm, frames: &[Vec<f64>]) -> Accumulator {
    let consts = ubm.log_consts();
    let (c, d) = (ubm.n_components(), ubm.dim());
    // fixed chunking keeps the reduction order, and so the result, stable
    let parts: Vec<Accumulator> = frames
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = Accumulator::zeros(c, d);
            for x in chunk {
                let (post, ll) = posteriors_with(ubm, x, &consts);
                acc.log_lik += ll;
                for k in 0..c {
                    let g = post[k];
                    if g == 0.0 {
                        continue;
                    }
                    acc.n[k] += g;
                    for j in 0..d {
                        acc.s1[k][j] += g * x[j];
                        acc.s2[k][j] += g * x[j] * x[j];
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = Accumulator::zeros(c, d);
    for p in &parts {
        total.add(p);
    }
    total
}

/// Fits a diagonal GMM by EM from a k-means++ start.
///
/// Stops after `n_iters` updates or when the relative log-likelihood gain
/// drops below 1e-5. A component that loses all responsibility is
/// re-seeded next to the component with the largest total variance.
pub fn train_ubm(frames: &[Vec<f64>], n_components: usize, n_iters: usize, seed: u64) -> Result<UbmTraining> {
    if n_components == 0 {
        return Err(Error::InvalidArgument("n_components must be positive".into()));
    }
    let needed = FRAMES_PER_COMPONENT * n_components;
    if frames.len() < needed {
        return Err(Error::TooFewFrames {
            needed,
            got: frames.len(),
        });
    }
    let d = frames[0].len();
    if d == 0 || frames.iter().any(|f| f.len() != d || f.iter().any(|v| !v.is_finite())) {
        return Err(Error::InvalidArgument("frames must be non-empty, equal length and finite".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ubm = kmeans_init(frames, n_components, &mut rng);
    let n = frames.len() as f64;
    let mut history = Vec::new();

    for _ in 0..n_iters {
        let acc = e_step(&ubm, frames);
        let ll = acc.log_lik / n;
        if let Some(&prev) = history.last() {
            let prev: f64 = prev;
            if (ll - prev) <= RELATIVE_TOLERANCE * prev.abs().max(1e-12) {
                history.push(ll);
                return Ok(UbmTraining {
                    ubm,
                    log_likelihood: history,
                });
            }
        }
        history.push(ll);
        ubm = m_step(&ubm, &acc, n);
    }
    history.push(ubm.mean_log_likelihood(frames));
    Ok(UbmTraining {
        ubm,
        log_likelihood: history,
    })
}

fn m_step(prev: &GmmUbm, acc: &Accumulator, n: f64) -> GmmUbm {
    let (c, d) = (prev.n_components(), prev.dim());
    let mut means = prev.means.clone();
    let mut variances = prev.variances.clone();
    let mut weights = vec![0.0; c];
    let mut empty = Vec::new();
    for k in 0..c {
        let nk = acc.n[k];
        if nk < 1e-10 {
            empty.push(k);
            continue;
        }
        weights[k] = nk / n;
        for j in 0..d {
            let m = acc.s1[k][j] / nk;
            means[k][j] = m;
            variances[k][j] = (acc.s2[k][j] / nk - m * m).max(VARIANCE_FLOOR);
        }
    }
    for k in empty {
        let donor = (0..c)
            .filter(|&i| weights[i] > 0.0)
            .max_by(|&a, &b| {
                let va: f64 = variances[a].iter().sum();
                let vb: f64 = variances[b].iter().sum();
                va.total_cmp(&vb)
            })
            .expect("at least one component keeps responsibility");
        // split the donor: shift the means apart along its standard deviation
        let half = weights[donor] / 2.0;
        weights[donor] = half;
        weights[k] = half;
        variances[k] = variances[donor].clone();
        for j in 0..d {
            let s = variances[donor][j].sqrt();
            means[k][j] = means[donor][j] + 0.5 * s;
            means[donor][j] -= 0.5 * s;
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    GmmUbm {
        weights,
        means,
        variances,
    }
}

/// k-means++ seeding refined by a few Lloyd iterations; each cluster gives
/// the initial mean, variance and weight of one component.
fn kmeans_init(frames: &[Vec<f64>], k: usize, rng: &mut impl Rng) -> GmmUbm {
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut centers = vec![frames[rng.random_range(0..frames.len())].clone()];
    let mut d2: Vec<f64> = frames.iter().map(|x| dist(x, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = frames.len() - 1;
            for (i, &v) in d2.iter().enumerate() {
                target -= v;
                if target <= 0.0 && v > 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..frames.len())
        };
        centers.push(frames[idx].clone());
        let c = centers.last().unwrap();
        for (v, x) in d2.iter_mut().zip(frames) {
            *v = v.min(dist(x, c));
        }
    }

    let d = frames[0].len();
    let mut assign = vec![0usize; frames.len()];
    for _ in 0..KMEANS_ITERS {
        for (a, x) in assign.iter_mut().zip(frames) {
            *a = (0..k)
                .min_by(|&i, &j| dist(x, &centers[i]).total_cmp(&dist(x, &centers[j])))
                .unwrap();
        }
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (&a, x) in assign.iter().zip(frames) {
            counts[a] += 1;
            sums[a].iter_mut().zip(x).for_each(|(s, v)| *s += v);
        }
        for i in 0..k {
            if counts[i] > 0 {
                centers[i] = sums[i].iter().map(|s| s / counts[i] as f64).collect();
            }
        }
    }

    let global_var: Vec<f64> = (0..d)
        .map(|j| {
            let m = frames.iter().map(|x| x[j]).sum::<f64>() / frames.len() as f64;
            frames.iter().map(|x| (x[j] - m).powi(2)).sum::<f64>() / frames.len() as f64
        })
        .collect();
    let mut counts = vec![0usize; k];
    let mut sq = vec![vec![0.0; d]; k];
    for (&a, x) in assign.iter().zip(frames) {
        counts[a] += 1;
        for j in 0..d {
            sq[a][j] += (x[j] - centers[a][j]).powi(2);
        }
    }
    let variances = (0..k)
        .map(|i| {
            (0..d)
                .map(|j| {
                    if counts[i] > 1 {
                        (sq[i][j] / counts[i] as f64).max(VARIANCE_FLOOR)
                    } else {
                        global_var[j].max(VARIANCE_FLOOR)
                    }
                })
                .collect()
        })
        .collect();
    let n = frames.len() as f64;
    let mut weights: Vec<f64> = counts.iter().map(|&c| (c as f64).max(1.0) / n).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    GmmUbm {
        weights,
        means: centers,
        variances,
    }
}
