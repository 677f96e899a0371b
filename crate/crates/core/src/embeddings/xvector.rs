use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::container::{find_section, Section, Tensor};
use crate::dsp::mfcc;
use crate::error::{Error, Result};
use crate::features::{FeatureVector, Scheme};
use crate::signal::{frame_signal, Waveform, WindowKind, FRAME_MS, STEP_MS};

pub const XVECTOR_DIM: usize = 512;
/// Input MFCCs per frame.
pub const XVECTOR_INPUT_DIM: usize = 24;
/// Frames consumed by the TDNN context of one output frame.
pub const MIN_FRAMES: usize = 15;
/// Sliding mean-normalisation window in frames (3 s at 10 ms).
const CMN_WINDOW: usize = 300;

/// Layer name, input and output width. The softmax width is the number of
/// training speakers and is taken from the file.
const SHAPES: [(&str, usize, usize); 7] = [
    ("frame1", 120, 512),
    ("frame2", 1536, 512),
    ("frame3", 1536, 512),
    ("frame4", 512, 512),
    ("frame5", 512, 1500),
    ("segment6", 3000, 512),
    ("segment7", 512, 512),
];
/// Frame offsets spliced by the first three layers.
const CONTEXTS: [&[usize]; 3] = [&[0, 1, 2, 3, 4], &[0, 2, 4], &[0, 3, 6]];

#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    /// input by output
    pub weight: DMatrix<f64>,
    pub bias: Vec<f64>,
}

impl Affine {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            weight: DMatrix::zeros(n_in, n_out),
            bias: vec![0.0; n_out],
        }
    }

    /// Rows of `x` are frames.
    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = x * &self.weight;
        for mut row in y.row_iter_mut() {
            row.iter_mut().zip(&self.bias).for_each(|(v, b)| *v += b);
        }
        y
    }
}

/// TDNN weights: frame1..frame5, segment6, segment7, softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct XVectorWeights {
    layers: Vec<Affine>,
    softmax: Affine,
}

impl XVectorWeights {
    pub fn zeros(n_speakers: usize) -> Self {
        Self {
            layers: SHAPES.iter().map(|&(_, i, o)| Affine::zeros(i, o)).collect(),
            softmax: Affine::zeros(512, n_speakers),
        }
    }

    /// He-initialised weights with zero biases.
    pub fn random(n_speakers: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = |n_in: usize, n_out: usize| {
            let dist = Normal::new(0.0, (2.0 / n_in as f64).sqrt()).unwrap();
            Affine {
                weight: DMatrix::from_fn(n_in, n_out, |_, _| dist.sample(&mut rng)),
                bias: vec![0.0; n_out],
            }
        };
        let layers = SHAPES.iter().map(|&(_, i, o)| init(i, o)).collect();
        let softmax = init(512, n_speakers);
        Self { layers, softmax }
    }

    pub fn n_speakers(&self) -> usize {
        self.softmax.weight.ncols()
    }

    pub fn layer(&self, name: &str) -> Option<&Affine> {
        if name == "softmax" {
            return Some(&self.softmax);
        }
        SHAPES.iter().position(|s| s.0 == name).map(|i| &self.layers[i])
    }

    pub fn layer_mut(&mut self, name: &str) -> Option<&mut Affine> {
        if name == "softmax" {
            return Some(&mut self.softmax);
        }
        SHAPES.iter().position(|s| s.0 == name).map(|i| &mut self.layers[i])
    }

    pub fn to_section(&self) -> Section {
        let mut s = Section::new("xvector").with_meta("speakers", self.n_speakers());
        let names = SHAPES.iter().map(|s| s.0).chain(["softmax"]);
        for (name, layer) in names.zip(self.layers.iter().chain([&self.softmax])) {
            let (r, c) = layer.weight.shape();
            let data: Vec<f64> = (0..r).flat_map(|i| layer.weight.row(i).iter().copied().collect::<Vec<_>>()).collect();
            s = s
                .with_tensor(&format!("{name}.weight"), Tensor::new(vec![r, c], data).unwrap())
                .with_tensor(&format!("{name}.bias"), Tensor::vector(layer.bias.clone()));
        }
        s
    }

    /// Reads and shape-checks every layer.
    pub fn from_section(s: &Section) -> Result<Self> {
        s.expect_kind("xvector")?;
        let read = |name: &str, n_in: usize, n_out: Option<usize>| -> Result<Affine> {
            let w = s.tensor(&format!("{name}.weight"))?;
            let b = s.tensor(&format!("{name}.bias"))?;
            let ok_out = |c: usize| n_out.is_none_or(|o| o == c) && c > 0;
            match w.shape[..] {
                [r, c] if r == n_in && ok_out(c) && b.shape == [c] => Ok(Affine {
                    weight: DMatrix::from_row_slice(r, c, &w.data),
                    bias: b.data.clone(),
                }),
                _ => Err(Error::ShapeMismatch {
                    name: name.to_string(),
                    expected: format!("{n_in}x{}", n_out.map_or("N".to_string(), |o| o.to_string())),
                    found: format!("{:?} / bias {:?}", w.shape, b.shape),
                }),
            }
        };
        let layers = SHAPES
            .iter()
            .map(|&(name, i, o)| read(name, i, Some(o)))
            .collect::<Result<Vec<_>>>()?;
        let softmax = read("softmax", 512, None)?;
        Ok(Self { layers, softmax })
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        crate::container::save(path, &[self.to_section()])
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_section(find_section(&crate::container::load(path)?, "xvector")?)
    }
}

/// Frames `t + offsets` concatenated, for every `t` whose context fits.
fn splice(x: &DMatrix<f64>, offsets: &[usize]) -> DMatrix<f64> {
    let span = offsets.last().unwrap();
    let n = x.nrows() - span;
    let d = x.ncols();
    DMatrix::from_fn(n, d * offsets.len(), |t, j| x[(t + offsets[j / d], j % d)])
}

fn relu(mut x: DMatrix<f64>) -> DMatrix<f64> {
    x.iter_mut().for_each(|v| *v = v.max(0.0));
    x
}

/// frame5 activations, one row per output frame.
fn frame_level(weights: &XVectorWeights, input: &DMatrix<f64>) -> DMatrix<f64> {
    let mut h = input.clone();
    for (layer, ctx) in weights.layers[..3].iter().zip(CONTEXTS) {
        h = relu(layer.apply(&splice(&h, ctx)));
    }
    for layer in &weights.layers[3..5] {
        h = relu(layer.apply(&h));
    }
    h
}

/// Per-dimension mean and population standard deviation of frame
/// activations (rows are frames). Values are sorted and shifted by their
/// minimum first, so the result does not depend on frame order and a
/// constant column has a standard deviation of exactly zero.
pub fn stats_pooling(activations: &[Vec<f64>]) -> Vec<f64> {
    let n = activations.len() as f64;
    let dim = activations.first().map_or(0, Vec::len);
    let mut means = Vec::with_capacity(dim);
    let mut stds = Vec::with_capacity(dim);
    for j in 0..dim {
        let mut v: Vec<f64> = activations.iter().map(|r| r[j]).collect();
        v.sort_by(f64::total_cmp);
        let min = v[0];
        let shifted: Vec<f64> = v.iter().map(|x| x - min).collect();
        let m = shifted.iter().sum::<f64>() / n;
        let var = shifted.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
        means.push(min + m);
        stds.push(var.sqrt());
    }
    means.extend(stds);
    means
}

/// Segment layer applied to pooled statistics.
pub fn segment_embedding(weights: &XVectorWeights, pooled: &[f64]) -> Result<Vec<f64>> {
    let expected = weights.layers[5].weight.nrows();
    if pooled.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: pooled.len(),
        });
    }
    let row = DMatrix::from_row_slice(1, pooled.len(), pooled);
    Ok(weights.layers[5].apply(&row).iter().copied().collect())
}

/// Activations of the last frame-level layer, one row per output frame.
pub fn frame_activations(weights: &XVectorWeights, frames: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if frames.len() < MIN_FRAMES {
        return Err(Error::TooFewFrames {
            needed: MIN_FRAMES,
            got: frames.len(),
        });
    }
    if let Some(bad) = frames.iter().find(|f| f.len() != XVECTOR_INPUT_DIM) {
        return Err(Error::DimensionMismatch {
            expected: XVECTOR_INPUT_DIM,
            found: bad.len(),
        });
    }
    let input = DMatrix::from_fn(frames.len(), XVECTOR_INPUT_DIM, |t, j| frames[t][j]);
    let h = frame_level(weights, &input);
    Ok(h.row_iter().map(|r| r.iter().copied().collect()).collect())
}

/// Embedding from an already normalised MFCC track (rows are frames).
pub fn xvector_forward(weights: &XVectorWeights, frames: &[Vec<f64>]) -> Result<Vec<f64>> {
    segment_embedding(weights, &stats_pooling(&frame_activations(weights, frames)?))
}

/// 24 MFCCs (24 mel bands) on the 25/10 ms Hann grid.
pub fn xvector_input(w: &Waveform) -> Vec<Vec<f64>> {
    let frames = frame_signal(w, FRAME_MS, STEP_MS, WindowKind::Hann)
        .expect("frame and step constants are valid");
    let track = mfcc(&frames, XVECTOR_INPUT_DIM, XVECTOR_INPUT_DIM);
    sliding_mean_normalize(track.rows(), CMN_WINDOW)
}

/// Subtracts a centred moving mean over `min(window, n)` frames; near the
/// edges the window is shifted to stay inside the utterance.
pub fn sliding_mean_normalize(rows: &[Vec<f64>], window: usize) -> Vec<Vec<f64>> {
    let n = rows.len();
    if n == 0 {
        return Vec::new();
    }
    let win = window.min(n);
    let d = rows[0].len();
    (0..n)
        .map(|t| {
            let start = t.saturating_sub(win / 2).min(n - win);
            let mut mean = vec![0.0; d];
            for r in &rows[start..start + win] {
                mean.iter_mut().zip(r).for_each(|(m, v)| *m += v);
            }
            rows[t].iter().zip(&mean).map(|(v, m)| v - m / win as f64).collect()
        })
        .collect()
}

pub fn xvector_features(weights: &XVectorWeights, w: &Waveform) -> Result<FeatureVector> {
    let emb = xvector_forward(weights, &xvector_input(w))?;
    let names = (0..emb.len()).map(|k| format!("xvector{k}")).collect();
    Ok(FeatureVector::new(Scheme::Xvector, names, emb, w.source_id(), Vec::new()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_frames(n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..XVECTOR_INPUT_DIM).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn output_is_512_dims() {
        let w = XVectorWeights::random(3, 1);
        assert_eq!(xvector_forward(&w, &random_frames(15, 2)).unwrap().len(), XVECTOR_DIM);
        assert_eq!(xvector_forward(&w, &random_frames(40, 3)).unwrap().len(), XVECTOR_DIM);
        assert!(matches!(
            xvector_forward(&w, &random_frames(14, 3)),
            Err(Error::TooFewFrames { .. })
        ));
    }

    #[test]
    fn zero_weights_give_zero_embedding() {
        let e = xvector_forward(&XVectorWeights::zeros(2), &random_frames(20, 1)).unwrap();
        assert!(e.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_input_has_zero_std_and_traced_embedding() {
        let w = XVectorWeights::random(2, 4);
        let frame: Vec<f64> = (0..XVECTOR_INPUT_DIM).map(|j| (j as f64 * 0.37).sin()).collect();
        let h = frame_activations(&w, &vec![frame.clone(); 30]).unwrap();
        let pooled = stats_pooling(&h);
        assert!(pooled[1500..].iter().all(|&s| s == 0.0));
        // hand trace: one distinct frame5 row, mean equals that row
        let row = h[0].clone();
        let mut expected_in = row.clone();
        expected_in.extend(vec![0.0; 1500]);
        let l6 = w.layer("segment6").unwrap();
        let expected: Vec<f64> = (0..512)
            .map(|o| l6.bias[o] + (0..3000).map(|i| expected_in[i] * l6.weight[(i, o)]).sum::<f64>())
            .collect();
        let got = xvector_forward(&w, &vec![frame; 30]).unwrap();
        for (a, b) in got.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-9 * b.abs().max(1.0));
        }
    }

    #[test]
    fn pooling_is_order_invariant() {
        let w = XVectorWeights::random(2, 5);
        let input: Vec<Vec<f64>> = (0..50)
            .map(|t| (0..XVECTOR_INPUT_DIM).map(|j| ((t * 7 + j * 3) as f64).sin()).collect())
            .collect();
        let h = frame_activations(&w, &input).unwrap();
        let mut order: Vec<usize> = (0..h.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for i in (1..order.len()).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let permuted: Vec<Vec<f64>> = order.iter().map(|&t| h[t].clone()).collect();
        assert_eq!(
            segment_embedding(&w, &stats_pooling(&h)).unwrap(),
            segment_embedding(&w, &stats_pooling(&permuted)).unwrap()
        );
    }

    #[test]
    fn splice_contexts() {
        let x = DMatrix::from_fn(10, 1, |t, _| t as f64);
        let s = splice(&x, &[0, 3, 6]);
        assert_eq!(s.nrows(), 4);
        assert_eq!(s.row(1).iter().copied().collect::<Vec<_>>(), vec![1.0, 4.0, 7.0]);
    }

    #[test]
    fn weights_round_trip_and_shape_check() {
        let w = XVectorWeights::random(3, 8);
        let back = XVectorWeights::from_section(&w.to_section()).unwrap();
        assert_eq!(back, w);
        let mut bad = w.to_section();
        bad.tensors.retain(|(n, _)| n != "frame2.weight");
        bad = bad.with_tensor("frame2.weight", Tensor::new(vec![1535, 512], vec![0.0; 1535 * 512]).unwrap());
        assert!(matches!(XVectorWeights::from_section(&bad), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn sliding_mean_uses_centred_window() {
        let rows: Vec<Vec<f64>> = (0..5).map(|t| vec![t as f64]).collect();
        let out = sliding_mean_normalize(&rows, 3);
        assert_eq!(out[2][0], 0.0);
        assert_eq!(out[0][0], -1.0);
        assert_eq!(out[4][0], 1.0);
        let whole = sliding_mean_normalize(&rows, 300);
        assert_eq!(whole[0][0], -2.0);
    }
}
