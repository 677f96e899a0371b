use crate::container::{Section, Tensor};
use crate::error::{Error, Result};

pub const STD_FLOOR: f64 = 1e-8;

/// Per-dimension z-scoring fitted on training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl Standardizer {
    /// Sample mean and (n-1)-normalised standard deviation, floored at
    /// 1e-8.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::InvalidArgument("cannot fit a standardizer on no rows".into()));
        };
        let d = first.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: bad.len(),
            });
        }
        let n = rows.len() as f64;
        let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let std = (0..d)
            .map(|j| {
                if rows.len() < 2 {
                    return 1.0;
                }
                let ss: f64 = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum();
                (ss / (n - 1.0)).sqrt().max(STD_FLOOR)
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect())
    }

    pub fn transform_all(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.iter().map(|r| self.transform(r)).collect()
    }

    pub(crate) fn to_tensors(&self) -> [(&'static str, Tensor); 2] {
        [
            ("standardizer.mean", Tensor::vector(self.mean.clone())),
            ("standardizer.std", Tensor::vector(self.std.clone())),
        ]
    }

    pub(crate) fn from_section(s: &Section) -> Result<Self> {
        let mean = s.tensor("standardizer.mean")?.data.clone();
        let std = s.tensor("standardizer.std")?.data.clone();
        if mean.len() != std.len() || std.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Container("invalid standardizer".into()));
        }
        Ok(Self { mean, std })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rows(n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| vec![rng.random_range(100.0..300.0), rng.random_range(-1.0..1.0) * 1e-3, 5.0])
            .collect()
    }

    #[test]
    fn training_data_is_standardized() {
        let x = rows(50, 1);
        let s = Standardizer::fit(&x).unwrap();
        let z = s.transform_all(&x).unwrap();
        for j in 0..2 {
            let m = z.iter().map(|r| r[j]).sum::<f64>() / 50.0;
            let sd = (z.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / 49.0).sqrt();
            assert!(m.abs() < 1e-9 && (sd - 1.0).abs() < 1e-6);
        }
        // constant dimension: floored std, finite output
        assert_eq!(s.std()[2], STD_FLOOR);
        assert!(z.iter().all(|r| r[2] == 0.0));
    }

    #[test]
    fn test_rows_do_not_affect_fit() {
        let train = rows(30, 2);
        let fitted = Standardizer::fit(&train).unwrap();
        let mut test = rows(10, 3);
        for r in &mut test {
            r.iter_mut().for_each(|v| *v = 1e12);
        }
        assert_eq!(Standardizer::fit(&train).unwrap(), fitted);
        assert!(fitted.transform(&[1.0]).is_err());
    }
}
