use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::ubm::GmmUbm;
use crate::container::{Section, Tensor};
use crate::error::{Error, Result};

/// Ridge added to a posterior precision that fails to factorise.
const RIDGE: f64 = 1e-6;
/// Utterances required per unit of rank.
pub const UTTERANCES_PER_RANK: usize = 10;

/// Zeroth and centred first-order Baum-Welch statistics of one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct BwStats {
    /// Occupancy per component.
    pub n: Vec<f64>,
    /// `F_c = sum_t gamma_t(c) (x_t - m_c)`, one row per component.
    pub f: Vec<Vec<f64>>,
}

impl BwStats {
    fn supervector(&self) -> DVector<f64> {
        DVector::from_iterator(self.f.len() * self.f[0].len(), self.f.iter().flatten().copied())
    }
}

pub fn baum_welch_stats(ubm: &GmmUbm, frames: &[Vec<f64>]) -> Result<BwStats> {
    if frames.is_empty() {
        return Err(Error::TooFewFrames { needed: 1, got: 0 });
    }
    let (c, d) = (ubm.n_components(), ubm.dim());
    if let Some(bad) = frames.iter().find(|f| f.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: bad.len(),
        });
    }
    let mut n = vec![0.0; c];
    let mut f = vec![vec![0.0; d]; c];
    for x in frames {
        let (post, _) = ubm.posteriors(x);
        for k in 0..c {
            n[k] += post[k];
            for j in 0..d {
                f[k][j] += post[k] * (x[j] - ubm.means()[k][j]);
            }
        }
    }
    Ok(BwStats { n, f })
}

/// Low-rank total variability subspace `M = m + T w` over a UBM.
#[derive(Debug, Clone, PartialEq)]
pub struct TotalVariabilityModel {
    /// Supervector dimension by rank.
    t: DMatrix<f64>,
    /// UBM variances stacked in supervector order.
    sigma: DVector<f64>,
    n_components: usize,
    dim: usize,
}

/// Trained model with the auxiliary objective before each update and for
/// the returned model.
#[derive(Debug, Clone)]
pub struct TvTraining {
    pub model: TotalVariabilityModel,
    pub objective: Vec<f64>,
}

impl TotalVariabilityModel {
    pub fn new(ubm: &GmmUbm, t: DMatrix<f64>) -> Result<Self> {
        let sv = ubm.n_components() * ubm.dim();
        if t.nrows() != sv {
            return Err(Error::ShapeMismatch {
                name: "T".into(),
                expected: format!("{sv} rows"),
                found: format!("{} rows", t.nrows()),
            });
        }
        if t.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("T must be finite".into()));
        }
        Ok(Self {
            t,
            sigma: DVector::from_iterator(sv, ubm.variances().iter().flatten().copied()),
            n_components: ubm.n_components(),
            dim: ubm.dim(),
        })
    }

    pub fn rank(&self) -> usize {
        self.t.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.t
    }

    fn check(&self, stats: &BwStats) -> Result<()> {
        if stats.n.len() != self.n_components || stats.f.iter().any(|r| r.len() != self.dim) {
            return Err(Error::DimensionMismatch {
                expected: self.n_components * self.dim,
                found: stats.f.iter().map(Vec::len).sum(),
            });
        }
        Ok(())
    }

    /// `T_c^T Sigma_c^-1 T_c` for every component.
    fn component_grams(&self) -> Vec<DMatrix<f64>> {
        (0..self.n_components)
            .map(|c| {
                let rows = self.t.rows(c * self.dim, self.dim);
                let mut scaled = rows.clone_owned();
                for j in 0..self.dim {
                    let inv = 1.0 / self.sigma[c * self.dim + j];
                    scaled.row_mut(j).iter_mut().for_each(|v| *v *= inv);
                }
                rows.transpose() * scaled
            })
            .collect()
    }

    fn precision(&self, stats: &BwStats, grams: &[DMatrix<f64>]) -> DMatrix<f64> {
        let r = self.rank();
        let mut l = DMatrix::identity(r, r);
        for (c, g) in grams.iter().enumerate() {
            l += g * stats.n[c];
        }
        l
    }

    fn projected(&self, stats: &BwStats) -> DVector<f64> {
        let f = stats.supervector().component_div(&self.sigma);
        self.t.tr_mul(&f)
    }

    /// Posterior mean and covariance of `w`, and the utterance's
    /// contribution to the auxiliary objective.
    fn posterior(&self, stats: &BwStats, grams: &[DMatrix<f64>]) -> (DVector<f64>, DMatrix<f64>, f64) {
        let l = self.precision(stats, grams);
        let b = self.projected(stats);
        let chol = factor(l);
        let mean = chol.solve(&b);
        let cov = chol.inverse();
        let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let objective = -0.5 * log_det + 0.5 * b.dot(&mean);
        (mean, cov, objective)
    }

    pub fn to_section(&self) -> Section {
        let rows: Vec<Vec<f64>> = (0..self.t.nrows())
            .map(|i| self.t.row(i).iter().copied().collect())
            .collect();
        Section::new("total_variability")
            .with_meta("rank", self.rank())
            .with_meta("components", self.n_components)
            .with_meta("dim", self.dim)
            .with_tensor("t", Tensor::new(vec![self.t.nrows(), self.rank()], rows.concat()).unwrap())
    }

    pub fn from_section(s: &Section, ubm: &GmmUbm) -> Result<Self> {
        s.expect_kind("total_variability")?;
        let t = s.tensor("t")?;
        let [r, c] = t.shape[..] else {
            return Err(Error::Container("T must be a matrix".into()));
        };
        Self::new(ubm, DMatrix::from_row_slice(r, c, &t.data))
    }
}

fn factor(mut l: DMatrix<f64>) -> nalgebra::Cholesky<f64, nalgebra::Dyn> {
    loop {
        match l.clone().cholesky() {
            Some(c) => return c,
            None => {
                let n = l.nrows();
                l += DMatrix::identity(n, n) * RIDGE;
            }
        }
    }
}

/// Posterior mean `w = (I + T' S^-1 N T)^-1 T' S^-1 F`.
pub fn extract_ivector(tv: &TotalVariabilityModel, stats: &BwStats) -> Result<Vec<f64>> {
    tv.check(stats)?;
    if tv.rank() == 0 {
        return Ok(Vec::new());
    }
    let grams = tv.component_grams();
    let l = tv.precision(stats, &grams);
    let b = tv.projected(stats);
    Ok(factor(l).solve(&b).iter().copied().collect())
}

/// EM for the total variability matrix from per-utterance statistics.
/// The objective is the marginal log-likelihood of the first-order
/// statistics up to a constant, so it never decreases.
pub fn train_total_variability(
    ubm: &GmmUbm,
    stats: &[BwStats],
    rank: usize,
    n_iters: usize,
    seed: u64,
) -> Result<TvTraining> {
    let (c, d) = (ubm.n_components(), ubm.dim());
    let needed = UTTERANCES_PER_RANK * rank;
    if stats.len() < needed.max(1) {
        return Err(Error::InvalidArgument(format!(
            "rank {rank} needs at least {} utterances, got {}",
            needed.max(1),
            stats.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sv = c * d;
    let scale: Vec<f64> = ubm.variances().iter().flatten().map(|v| v.sqrt()).collect();
    let t0 = DMatrix::from_fn(sv, rank, |i, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        0.1 * scale[i] * z
    });
    let mut model = TotalVariabilityModel::new(ubm, t0)?;
    for s in stats {
        model.check(s)?;
    }
    let mut objective = Vec::new();
    if rank == 0 {
        objective.push(0.0);
        return Ok(TvTraining { model, objective });
    }

    for _ in 0..n_iters {
        let grams = model.component_grams();
        let posts: Vec<(DVector<f64>, DMatrix<f64>, f64)> =
            stats.par_iter().map(|s| model.posterior(s, &grams)).collect();
        objective.push(posts.iter().map(|p| p.2).sum());

        let mut a = vec![DMatrix::zeros(rank, rank); c];
        let mut cacc = DMatrix::zeros(sv, rank);
        for (s, (mean, cov, _)) in stats.iter().zip(&posts) {
            let eww = cov + mean * mean.transpose();
            for k in 0..c {
                a[k] += &eww * s.n[k];
            }
            cacc += s.supervector() * mean.transpose();
        }
        let mut t = DMatrix::zeros(sv, rank);
        for k in 0..c {
            let chol = factor(a[k].clone());
            // T_c = C_c A_c^-1, solved as A_c T_c^T = C_c^T
            let rows = cacc.rows(k * d, d).transpose();
            let solved = chol.solve(&rows).transpose();
            t.rows_mut(k * d, d).copy_from(&solved);
        }
        model.t = t;
    }
    let grams = model.component_grams();
    objective.push(stats.par_iter().map(|s| model.posterior(s, &grams).2).sum());
    Ok(TvTraining { model, objective })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn ubm(c: usize, d: usize, seed: u64) -> GmmUbm {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GmmUbm::new(
            vec![1.0 / c as f64; c],
            (0..c).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect(),
            (0..c).map(|_| (0..d).map(|_| rng.random_range(0.5..2.0)).collect()).collect(),
        )
        .unwrap()
    }

    fn random_stats(c: usize, d: usize, rng: &mut impl Rng) -> BwStats {
        BwStats {
            n: (0..c).map(|_| rng.random_range(0.0..20.0)).collect(),
            f: (0..c).map(|_| (0..d).map(|_| rng.random_range(-5.0..5.0)).collect()).collect(),
        }
    }

    /// Dense oracle assembled from full block matrices.
    fn dense_ivector(u: &GmmUbm, t: &DMatrix<f64>, s: &BwStats) -> DVector<f64> {
        let (c, d) = (u.n_components(), u.dim());
        let sv = c * d;
        let sigma_inv = DMatrix::from_diagonal(&DVector::from_iterator(
            sv,
            u.variances().iter().flatten().map(|v| 1.0 / v),
        ));
        let n = DMatrix::from_diagonal(&DVector::from_iterator(
            sv,
            (0..sv).map(|i| s.n[i / d]),
        ));
        let f = DVector::from_iterator(sv, s.f.iter().flatten().copied());
        let r = t.ncols();
        let l = DMatrix::identity(r, r) + t.transpose() * &sigma_inv * n * t;
        l.lu().solve(&(t.transpose() * sigma_inv * f)).unwrap()
    }

    #[test]
    fn stats_occupancy_sums_to_frames() {
        let u = ubm(3, 2, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let frames: Vec<Vec<f64>> = (0..57).map(|_| vec![rng.random_range(-3.0..3.0), rng.random()]).collect();
        let s = baum_welch_stats(&u, &frames).unwrap();
        assert!((s.n.iter().sum::<f64>() - 57.0).abs() < 1e-9);
        assert!(baum_welch_stats(&u, &[]).is_err());
    }

    #[test]
    fn single_component_first_order_closed_form() {
        let u = GmmUbm::new(vec![1.0], vec![vec![0.5, -1.0]], vec![vec![1.0, 2.0]]).unwrap();
        let frames = vec![vec![1.0, 1.0], vec![2.0, 0.0], vec![0.0, -4.0]];
        let s = baum_welch_stats(&u, &frames).unwrap();
        assert!((s.n[0] - 3.0).abs() < 1e-12);
        assert!((s.f[0][0] - 3.0 * (1.0 - 0.5)).abs() < 1e-12);
        assert!((s.f[0][1] - 3.0 * (-1.0 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn long_utterance_from_ubm_has_small_centred_stats() {
        let u = ubm(2, 2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let frames: Vec<Vec<f64>> = (0..10_000)
            .map(|_| {
                let c = rng.random_range(0..2);
                (0..2)
                    .map(|j| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        u.means()[c][j] + u.variances()[c][j].sqrt() * z
                    })
                    .collect()
            })
            .collect();
        let s = baum_welch_stats(&u, &frames).unwrap();
        for c in 0..2 {
            for j in 0..2 {
                assert!((s.f[c][j] / s.n[c]).abs() < 0.1, "{:?}", s);
            }
        }
    }

    #[test]
    fn zero_first_order_gives_zero_ivector() {
        let u = ubm(2, 3, 5);
        let t = DMatrix::from_fn(6, 2, |i, j| (i + j) as f64 * 0.1);
        let tv = TotalVariabilityModel::new(&u, t).unwrap();
        let s = BwStats {
            n: vec![4.0, 2.0],
            f: vec![vec![0.0; 3]; 2],
        };
        assert!(extract_ivector(&tv, &s).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_case_matches_hand_evaluation() {
        let u = GmmUbm::new(vec![1.0], vec![vec![0.0]], vec![vec![2.0]]).unwrap();
        let tv = TotalVariabilityModel::new(&u, DMatrix::from_element(1, 1, 3.0)).unwrap();
        let s = BwStats {
            n: vec![5.0],
            f: vec![vec![1.5]],
        };
        // (1 + 3*3*5/2)^-1 * 3*1.5/2
        let expected = (3.0 * 1.5 / 2.0) / (1.0 + 9.0 * 5.0 / 2.0);
        assert!((extract_ivector(&tv, &s).unwrap()[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn agrees_with_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for trial in 0..20 {
            let c = rng.random_range(1..=4);
            let d = rng.random_range(1..=3);
            let r = rng.random_range(1..=4);
            let u = ubm(c, d, trial);
            let t = DMatrix::from_fn(c * d, r, |_, _| rng.random_range(-1.0..1.0));
            let tv = TotalVariabilityModel::new(&u, t.clone()).unwrap();
            let mut s = random_stats(c, d, &mut rng);
            for _ in 0..2 {
                let w = extract_ivector(&tv, &s).unwrap();
                let oracle = dense_ivector(&u, &t, &s);
                for (a, b) in w.iter().zip(oracle.iter()) {
                    assert!((a - b).abs() < 1e-9, "{a} vs {b}");
                }
                // doubling N and F jointly
                s.n.iter_mut().for_each(|v| *v *= 2.0);
                s.f.iter_mut().flatten().for_each(|v| *v *= 2.0);
            }
        }
    }

    #[test]
    fn rank_zero_is_empty() {
        let u = ubm(2, 2, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let stats: Vec<BwStats> = (0..3).map(|_| random_stats(2, 2, &mut rng)).collect();
        let t = train_total_variability(&u, &stats, 0, 3, 0).unwrap();
        assert_eq!(t.model.rank(), 0);
        assert!(extract_ivector(&t.model, &stats[0]).unwrap().is_empty());
    }

    /// Largest principal angle in degrees between two column spaces.
    fn max_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        let qa = a.clone().qr().q();
        let qb = b.clone().qr().q();
        let s = (qa.transpose() * qb).singular_values();
        let min_cos = s.iter().copied().fold(f64::INFINITY, f64::min).min(1.0);
        min_cos.acos().to_degrees()
    }

    #[test]
    fn recovers_generating_subspace() {
        let (c, d, r) = (4, 3, 2);
        let u = ubm(c, d, 21);
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let t0 = DMatrix::from_fn(c * d, r, |_, _| rng.random_range(-1.5..1.5));
        let stats: Vec<BwStats> = (0..400)
            .map(|_| {
                let w = DVector::from_fn(r, |_, _| StandardNormal.sample(&mut rng));
                let shift = &t0 * w;
                let n: Vec<f64> = (0..c).map(|_| rng.random_range(20.0..60.0)).collect();
                let f = (0..c)
                    .map(|k| {
                        (0..d)
                            .map(|j| {
                                let z: f64 = StandardNormal.sample(&mut rng);
                                n[k] * shift[k * d + j] + (n[k] * u.variances()[k][j]).sqrt() * z
                            })
                            .collect()
                    })
                    .collect();
                BwStats { n, f }
            })
            .collect();
        let t = train_total_variability(&u, &stats, r, 40, 3).unwrap();
        for pair in t.objective.windows(2) {
            assert!(pair[1] >= pair[0] - 1e-6 * pair[0].abs(), "{:?}", t.objective);
        }
        let angle = max_principal_angle(t.model.matrix(), &t0);
        assert!(angle < 10.0, "angle {angle}");
    }

    #[test]
    fn section_round_trip() {
        let u = ubm(2, 2, 1);
        let tv = TotalVariabilityModel::new(&u, DMatrix::from_fn(4, 3, |i, j| (i * 3 + j) as f64 / 7.0)).unwrap();
        assert_eq!(TotalVariabilityModel::from_section(&tv.to_section(), &u).unwrap(), tv);
    }
}
