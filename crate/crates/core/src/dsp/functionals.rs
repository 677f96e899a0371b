use super::track::FeatureTrack;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Functional {
    Mean,
    Std,
    Skewness,
    Kurtosis,
    Max,
    Min,
    PositionMax,
    PositionMin,
    LinRegSlope,
    LinRegOffset,
    LinRegErrQuadratic,
    LinRegErrAbsolute,
    Quartile1,
    Quartile2,
    Quartile3,
    Iqr12,
    Iqr23,
    Iqr13,
    Percentile1,
    Percentile99,
    PercentileRange99_1,
    UplevelTime75,
    UplevelTime90,
}

impl Functional {
    pub fn name(self) -> &'static str {
        use Functional::*;
        match self {
            Mean => "mean",
            Std => "std",
            Skewness => "skewness",
            Kurtosis => "kurtosis",
            Max => "max",
            Min => "min",
            PositionMax => "position_max",
            PositionMin => "position_min",
            LinRegSlope => "lin_reg_slope",
            LinRegOffset => "lin_reg_offset",
            LinRegErrQuadratic => "lin_reg_err_quadratic",
            LinRegErrAbsolute => "lin_reg_err_absolute",
            Quartile1 => "quartile1",
            Quartile2 => "quartile2",
            Quartile3 => "quartile3",
            Iqr12 => "iqr12",
            Iqr23 => "iqr23",
            Iqr13 => "iqr13",
            Percentile1 => "percentile1",
            Percentile99 => "percentile99",
            PercentileRange99_1 => "percentile_range_99_1",
            UplevelTime75 => "uplevel_time75",
            UplevelTime90 => "uplevel_time90",
        }
    }
}

/// Ordered list of functionals; order fixes the output layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionalSet(pub Vec<Functional>);

impl FunctionalSet {
    pub fn moments() -> Self {
        use Functional::*;
        Self(vec![Mean, Std, Skewness, Kurtosis])
    }

    /// Moments plus extremes.
    pub fn moments_extremes() -> Self {
        use Functional::*;
        Self(vec![Mean, Std, Skewness, Kurtosis, Max, Min])
    }

    /// The 21 functionals of the Interspeech 2010 paralinguistic set.
    pub fn interspeech2010() -> Self {
        use Functional::*;
        Self(vec![
            PositionMax,
            PositionMin,
            Mean,
            Std,
            Skewness,
            Kurtosis,
            LinRegSlope,
            LinRegOffset,
            LinRegErrQuadratic,
            LinRegErrAbsolute,
            Quartile1,
            Quartile2,
            Quartile3,
            Iqr12,
            Iqr23,
            Iqr13,
            Percentile1,
            Percentile99,
            PercentileRange99_1,
            UplevelTime75,
            UplevelTime90,
        ])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Functional> {
        self.0.iter()
    }
}

/// Percentile with linear interpolation between order statistics at rank
/// `p/100 * (n-1)`. Returns 0 for an empty input.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    sorted_percentile(&v, p)
}

fn sorted_percentile(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => 0.0,
        1 => sorted[0],
        n => {
            let pos = (p / 100.0).clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            let frac = pos - lo as f64;
            sorted[lo] + frac * (sorted[hi] - sorted[lo])
        }
    }
}

/// Statistics of one descriptor column computed once and shared across
/// functionals.
struct ColumnStats<'a> {
    x: &'a [f64],
    sorted: Vec<f64>,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
    slope: f64,
    offset: f64,
}

impl<'a> ColumnStats<'a> {
    fn new(x: &'a [f64]) -> Self {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for &v in x {
            let d = v - mean;
            let d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
        }
        let mut sorted = x.to_vec();
        sorted.sort_by(f64::total_cmp);
        // least squares over frame index 0..n-1
        let t_mean = (n - 1.0) / 2.0;
        let mut stt = 0.0;
        let mut sty = 0.0;
        for (i, &v) in x.iter().enumerate() {
            let dt = i as f64 - t_mean;
            stt += dt * dt;
            sty += dt * (v - mean);
        }
        let slope = if stt > 0.0 { sty / stt } else { 0.0 };
        Self {
            x,
            sorted,
            mean,
            m2: m2 / n,
            m3: m3 / n,
            m4: m4 / n,
            slope,
            offset: mean - slope * t_mean,
        }
    }

    fn degenerate_variance(&self) -> bool {
        self.m2 <= 1e-24 * self.mean.abs().max(1.0).powi(2)
    }

    /// Fraction of frames at or above `level` of the range; 0 for a
    /// constant column.
    fn uplevel(&self, level: f64) -> f64 {
        let min = self.sorted[0];
        let max = *self.sorted.last().unwrap();
        if max <= min {
            return 0.0;
        }
        let threshold = min + level * (max - min);
        self.x.iter().filter(|&&v| v >= threshold).count() as f64 / self.x.len() as f64
    }

    fn value(&self, f: Functional) -> f64 {
        use Functional::*;
        let n = self.x.len();
        let q = |p| sorted_percentile(&self.sorted, p);
        match f {
            Mean => self.mean,
            Std => {
                if n < 2 {
                    0.0
                } else {
                    (self.m2 * n as f64 / (n - 1) as f64).sqrt()
                }
            }
            Skewness => {
                if self.degenerate_variance() {
                    0.0
                } else {
                    self.m3 / self.m2.powf(1.5)
                }
            }
            Kurtosis => {
                if self.degenerate_variance() {
                    0.0
                } else {
                    self.m4 / (self.m2 * self.m2) - 3.0
                }
            }
            Max => *self.sorted.last().unwrap(),
            Min => self.sorted[0],
            PositionMax => {
                let (i, _) = self
                    .x
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
                i as f64 / n as f64
            }
            PositionMin => {
                let (i, _) = self
                    .x
                    .iter()
                    .enumerate()
                    .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
                i as f64 / n as f64
            }
            LinRegSlope => self.slope,
            LinRegOffset => self.offset,
            LinRegErrQuadratic => {
                self.residuals().map(|r| r * r).sum::<f64>() / n as f64
            }
            LinRegErrAbsolute => self.residuals().map(f64::abs).sum::<f64>() / n as f64,
            Quartile1 => q(25.0),
            Quartile2 => q(50.0),
            Quartile3 => q(75.0),
            Iqr12 => q(50.0) - q(25.0),
            Iqr23 => q(75.0) - q(50.0),
            Iqr13 => q(75.0) - q(25.0),
            Percentile1 => q(1.0),
            Percentile99 => q(99.0),
            PercentileRange99_1 => q(99.0) - q(1.0),
            UplevelTime75 => self.uplevel(0.75),
            UplevelTime90 => self.uplevel(0.90),
        }
    }

    fn residuals(&self) -> impl Iterator<Item = f64> + '_ {
        self.x
            .iter()
            .enumerate()
            .map(|(i, &v)| v - (self.offset + self.slope * i as f64))
    }
}

/// Functionals of a single descriptor column. An empty column yields zeros.
pub fn column_functionals(column: &[f64], fs: &FunctionalSet) -> Vec<f64> {
    if column.is_empty() {
        return vec![0.0; fs.len()];
    }
    let stats = ColumnStats::new(column);
    fs.iter().map(|&f| stats.value(f)).collect()
}

/// Descriptor-major, functional-minor summary of a track.
pub fn apply_functionals(track: &FeatureTrack, fs: &FunctionalSet) -> Vec<f64> {
    apply_functionals_to_columns(&track.columns(), fs)
}

/// Same as [`apply_functionals`] for columns of unequal length (absent
/// values already removed).
pub fn apply_functionals_to_columns(columns: &[Vec<f64>], fs: &FunctionalSet) -> Vec<f64> {
    columns.iter().flat_map(|c| column_functionals(c, fs)).collect()
}
