/// Per-frame descriptor matrix (frames x descriptors).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureTrack {
    names: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl FeatureTrack {
    pub fn new(names: Vec<String>, rows: Vec<Vec<f64>>) -> Self {
        debug_assert!(rows.iter().all(|r| r.len() == names.len()));
        Self { names, rows }
    }

    pub fn from_columns(names: Vec<String>, columns: &[Vec<f64>]) -> Self {
        let n = columns.first().map_or(0, Vec::len);
        let rows = (0..n)
            .map(|t| columns.iter().map(|c| c[t]).collect())
            .collect();
        Self::new(names, rows)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn n_frames(&self) -> usize {
        self.rows.len()
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.dim()).map(|j| self.column(j)).collect()
    }

    /// Side-by-side concatenation of tracks with equal frame counts.
    pub fn hstack(tracks: &[FeatureTrack]) -> Self {
        let n = tracks.first().map_or(0, FeatureTrack::n_frames);
        assert!(tracks.iter().all(|t| t.n_frames() == n), "frame counts differ");
        let names = tracks.iter().flat_map(|t| t.names.iter().cloned()).collect();
        let rows = (0..n)
            .map(|i| tracks.iter().flat_map(|t| t.rows[i].iter().copied()).collect())
            .collect();
        Self { names, rows }
    }

    pub fn map_names(mut self, f: impl Fn(&str) -> String) -> Self {
        self.names = self.names.iter().map(|n| f(n)).collect();
        self
    }
}

/// Regression deltas over +-`width` frames with replicated edges.
pub fn delta(track: &FeatureTrack, width: usize) -> FeatureTrack {
    let cols: Vec<Vec<f64>> = track.columns().iter().map(|c| delta_column(c, width)).collect();
    let names = track.names().iter().map(|n| format!("d_{n}")).collect();
    FeatureTrack::from_columns(names, &cols)
}

pub fn delta_column(x: &[f64], width: usize) -> Vec<f64> {
    let n = x.len();
    if n == 0 || width == 0 {
        return vec![0.0; n];
    }
    let norm = 2.0 * (1..=width).map(|k| (k * k) as f64).sum::<f64>();
    let at = |i: i64| x[i.clamp(0, n as i64 - 1) as usize];
    (0..n as i64)
        .map(|t| {
            (1..=width as i64)
                .map(|k| k as f64 * (at(t + k) - at(t - k)))
                .sum::<f64>()
                / norm
        })
        .collect()
}
