use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub df: f64,
    pub p: f64,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0))
}

/// Welch's unequal-variance t-test with Welch-Satterthwaite degrees of
/// freedom; two-sided p-value.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::DegenerateStatistic("each group needs at least two values".into()));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    if !(va > 0.0 && vb > 0.0) {
        return Err(Error::DegenerateStatistic("zero variance in a group".into()));
    }
    let (sa, sb) = (va / a.len() as f64, vb / b.len() as f64);
    let t = (ma - mb) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa * sa / (a.len() as f64 - 1.0) + sb * sb / (b.len() as f64 - 1.0));
    Ok(TestResult {
        statistic: t,
        df,
        p: student_t_two_sided(t, df)?,
    })
}

pub fn student_t_two_sided(t: f64, df: f64) -> Result<f64> {
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::DegenerateStatistic(e.to_string()))?;
    Ok((2.0 * dist.sf(t.abs())).min(1.0))
}

/// Pearson chi-square test of independence on a 2x2 table (no continuity
/// correction), one degree of freedom.
pub fn chi_square_independence(table: [[f64; 2]; 2]) -> Result<TestResult> {
    let rows = [table[0][0] + table[0][1], table[1][0] + table[1][1]];
    let cols = [table[0][0] + table[1][0], table[0][1] + table[1][1]];
    let total = rows[0] + rows[1];
    if table.iter().flatten().any(|&v| v < 0.0) || rows.contains(&0.0) || cols.contains(&0.0) {
        return Err(Error::DegenerateStatistic("zero marginal in contingency table".into()));
    }
    let mut chi2 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let expected = rows[i] * cols[j] / total;
            chi2 += (table[i][j] - expected).powi(2) / expected;
        }
    }
    let dist = ChiSquared::new(1.0).map_err(|e| Error::DegenerateStatistic(e.to_string()))?;
    Ok(TestResult {
        statistic: chi2,
        df: 1.0,
        p: dist.sf(chi2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn identical_groups() {
        let a = [1.0, 2.0, 3.0, 4.5];
        let r = welch_t_test(&a, &a).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!((r.p - 1.0).abs() < 1e-12);
        assert!(welch_t_test(&[1.0, 1.0], &a).is_err());
    }

    #[test]
    fn shifted_normals() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a: Vec<f64> = Normal::new(0.0, 1.0).unwrap().sample_iter(&mut rng).take(1000).collect();
        let b: Vec<f64> = Normal::new(1.0, 1.0).unwrap().sample_iter(&mut rng).take(1000).collect();
        assert!(welch_t_test(&a, &b).unwrap().p < 1e-10);
    }

    /// Simpson integration of the t density as an independent oracle.
    #[test]
    fn t_tail_matches_numerical_integration() {
        let df: f64 = 10.0;
        let c = statrs::function::gamma::gamma((df + 1.0) / 2.0)
            / ((df * std::f64::consts::PI).sqrt() * statrs::function::gamma::gamma(df / 2.0));
        let pdf = |x: f64| c * (1.0 + x * x / df).powf(-(df + 1.0) / 2.0);
        let (a, b, n) = (0.0, 2.0, 20_000);
        let h = (b - a) / n as f64;
        let mut s = pdf(a) + pdf(b);
        for i in 1..n {
            s += pdf(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        let central = s * h / 3.0;
        let oracle = 1.0 - 2.0 * central;
        let p = student_t_two_sided(2.0, df).unwrap();
        assert!((p - oracle).abs() < 1e-8, "{p} vs {oracle}");
        assert!((p - 0.0734).abs() < 1e-3);
    }

    #[test]
    fn chi_square_cases() {
        let gender = chi_square_independence([[711.0, 548.0], [532.0, 573.0]]).unwrap();
        // hand Pearson computation from the marginals
        let (r0, r1, c0, c1, n) = (1259.0, 1105.0, 1243.0, 1121.0, 2364.0);
        let oracle = [(711.0, r0 * c0 / n), (548.0, r0 * c1 / n), (532.0, r1 * c0 / n), (573.0, r1 * c1 / n)]
            .iter()
            .map(|(o, e): &(f64, f64)| (o - e).powi(2) / e)
            .sum::<f64>();
        assert!((gender.statistic - oracle).abs() < 1e-9);
        assert!(gender.p < 1e-3);
        let flat = chi_square_independence([[50.0, 50.0], [50.0, 50.0]]).unwrap();
        assert_eq!(flat.statistic, 0.0);
        assert!((flat.p - 1.0).abs() < 1e-12);
        assert!(chi_square_independence([[100.0, 0.0], [0.0, 100.0]]).unwrap().p < 1e-10);
        assert!(chi_square_independence([[0.0, 0.0], [3.0, 4.0]]).is_err());
    }
}
