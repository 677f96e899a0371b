use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-3;
/// Pass budget per training sample; a pass is `n` pair updates.
pub const PASSES_PER_SAMPLE: usize = 10;
const TAU: f64 = 1e-12;

pub fn rbf_kernel(x: &[f64], y: &[f64], gamma: f64) -> f64 {
    (-gamma * sq_dist(x, y)).exp()
}

pub fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoConfig {
    /// Stopping threshold on the maximal KKT violation.
    pub tol: f64,
    /// Pass budget; `None` means 10 passes per training sample.
    pub max_passes: Option<usize>,
}

impl Default for SmoConfig {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_passes: None,
        }
    }
}

/// Dual variables of a solved problem with decision `f(x) = sum a_i y_i
/// k(x_i, x) - rho`.
#[derive(Debug, Clone)]
pub(crate) struct DualSolution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub converged: bool,
    /// Final maximal violation `m - M`.
    pub violation: f64,
}

/// SMO on a dense kernel matrix (row-major, `n x n`) with working pairs
/// chosen by maximal KKT violation. `c[i]` is the box bound of sample `i`.
pub(crate) fn solve_dual(k: &[f64], y: &[f64], c: &[f64], tol: f64, max_passes: usize) -> DualSolution {
    let n = y.len();
    let q = |i: usize, j: usize| y[i] * y[j] * k[i * n + j];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let max_iter = max_passes.saturating_mul(n).max(1);
    let mut converged = false;
    let mut violation = f64::INFINITY;

    for _ in 0..max_iter {
        let mut i = usize::MAX;
        let mut m = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut big_m = f64::INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            let up = (y[t] > 0.0 && alpha[t] < c[t]) || (y[t] < 0.0 && alpha[t] > 0.0);
            let low = (y[t] < 0.0 && alpha[t] < c[t]) || (y[t] > 0.0 && alpha[t] > 0.0);
            if up && v > m {
                m = v;
                i = t;
            }
            if low && v < big_m {
                big_m = v;
                j = t;
            }
        }
        violation = m - big_m;
        if i == usize::MAX || j == usize::MAX || violation <= tol {
            converged = true;
            break;
        }

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (ci, cj) = (c[i], c[j]);
        if y[i] != y[j] {
            let quad = (q(i, i) + q(j, j) + 2.0 * q(i, j)).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > ci - cj {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = ci - diff;
                }
            } else if alpha[j] > cj {
                alpha[j] = cj;
                alpha[i] = cj + diff;
            }
        } else {
            let quad = (q(i, i) + q(j, j) - 2.0 * q(i, j)).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > ci {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = sum - ci;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > cj {
                if alpha[j] > cj {
                    alpha[j] = cj;
                    alpha[i] = sum - cj;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += q(i, t) * di + q(j, t) * dj;
        }
    }

    // rho: mean of y_i G_i over free vectors, else the middle of the
    // feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        let at_upper = alpha[t] >= c[t];
        let at_lower = alpha[t] <= 0.0;
        if at_upper {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if at_lower {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else {
        (ub + lb) / 2.0
    };
    DualSolution {
        alpha,
        rho,
        converged,
        violation,
    }
}

/// Two-class soft-margin SVM with a Gaussian kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySvm {
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i * y_i` per support vector.
    pub dual_coef: Vec<f64>,
    /// Training-set index of each support vector.
    pub support_index: Vec<usize>,
    pub bias: f64,
    pub c: f64,
    pub gamma: f64,
    pub converged: bool,
}

impl BinarySvm {
    pub(crate) fn from_solution(
        rows: impl Fn(usize) -> Vec<f64>,
        index: &[usize],
        y: &[f64],
        sol: &DualSolution,
        c: f64,
        gamma: f64,
    ) -> Self {
        let mut svm = BinarySvm {
            support_vectors: Vec::new(),
            dual_coef: Vec::new(),
            support_index: Vec::new(),
            bias: -sol.rho,
            c,
            gamma,
            converged: sol.converged,
        };
        for (t, &a) in sol.alpha.iter().enumerate() {
            if a > 0.0 {
                svm.support_vectors.push(rows(index[t]));
                svm.dual_coef.push(a * y[t]);
                svm.support_index.push(index[t]);
            }
        }
        svm
    }

    pub fn dim(&self) -> usize {
        self.support_vectors.first().map_or(0, Vec::len)
    }

    /// `f(x) = sum_i alpha_i y_i k(x_i, x) + b`.
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.dual_coef)
            .map(|(s, a)| a * rbf_kernel(s, x, self.gamma))
            .sum::<f64>()
            + self.bias
    }

    /// Decision value from squared distances to every training sample.
    pub(crate) fn decision_from_sq_dist(&self, dists: &[f64]) -> f64 {
        self.support_index
            .iter()
            .zip(&self.dual_coef)
            .map(|(&i, a)| a * (-self.gamma * dists[i]).exp())
            .sum::<f64>()
            + self.bias
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        if self.decision(x) >= 0.0 {
            1.0
        } else {
            -1.0
        }
    }
}

pub(crate) fn check_labels(y: &[f64]) -> Result<()> {
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::InvalidArgument("binary labels must be -1 or +1".into()));
    }
    let pos = y.iter().filter(|&&v| v > 0.0).count();
    if pos == 0 || pos == y.len() {
        let only = if pos == 0 { "-1" } else { "+1" };
        return Err(Error::SingleClass(only.into()));
    }
    Ok(())
}

pub(crate) fn pass_budget(cfg: &SmoConfig, n: usize) -> usize {
    cfg.max_passes.unwrap_or(PASSES_PER_SAMPLE * n)
}

/// Trains on raw rows (no scaling) with labels in {-1, +1}.
pub fn train_binary_smo(x: &[Vec<f64>], y: &[f64], c: f64, gamma: f64, cfg: &SmoConfig) -> Result<BinarySvm> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    check_labels(y)?;
    if !(c > 0.0 && gamma > 0.0) {
        return Err(Error::InvalidArgument("C and gamma must be positive".into()));
    }
    let n = x.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = rbf_kernel(&x[i], &x[j], gamma);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    let sol = solve_dual(&k, y, &vec![c; n], cfg.tol, pass_budget(cfg, n));
    if !sol.converged {
        log::warn!("SMO stopped at the pass budget with violation {:.3e}", sol.violation);
    }
    let index: Vec<usize> = (0..n).collect();
    Ok(BinarySvm::from_solution(|i| x[i].clone(), &index, y, &sol, c, gamma))
}
