use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::signal::{window, WindowKind};

pub const PRE_EMPHASIS: f64 = 0.97;
const FORMANT_MAX_BANDWIDTH: f64 = 400.0;
const FORMANT_MIN_HZ: f64 = 90.0;
const FORMANT_MAX_HZ: f64 = 3800.0;
/// White-noise correction (-40 dB) applied to r[0] before root finding so
/// near-singular frames such as pure tones do not produce spurious sharp
/// roots.
const NOISE_FLOOR_CORRECTION: f64 = 1e-4;

pub fn pre_emphasis(x: &[f64], coef: f64) -> Vec<f64> {
    let mut y = Vec::with_capacity(x.len());
    let mut prev = 0.0;
    for &v in x {
        y.push(v - coef * prev);
        prev = v;
    }
    y
}

/// Linear prediction polynomial `[1, a1, .., a_order]` of the frame.
pub fn lpc(frame: &[f64], order: usize) -> Vec<f64> {
    lpc_with_error(frame, order).0
}

/// Levinson-Durbin on the autocorrelation sequence. Also returns the final
/// prediction error power (equal to `r[0]` for a zero-energy frame, whose
/// predictor falls back to a flat spectrum).
pub fn lpc_with_error(frame: &[f64], order: usize) -> (Vec<f64>, f64) {
    levinson(&autocorrelation(frame, order))
}

fn autocorrelation(frame: &[f64], order: usize) -> Vec<f64> {
    (0..=order)
        .map(|lag| {
            if lag >= frame.len() {
                0.0
            } else {
                frame[..frame.len() - lag]
                    .iter()
                    .zip(&frame[lag..])
                    .map(|(a, b)| a * b)
                    .sum()
            }
        })
        .collect()
}

fn levinson(r: &[f64]) -> (Vec<f64>, f64) {
    let order = r.len() - 1;
    let mut a = vec![0.0; order + 1];
    a[0] = 1.0;
    if r[0] <= f64::MIN_POSITIVE {
        return (a, r[0].max(0.0));
    }
    let mut err = r[0];
    for i in 1..=order {
        let acc: f64 = (1..i).map(|j| a[j] * r[i - j]).sum::<f64>() + r[i];
        let k = -acc / err;
        let prev = a.clone();
        for j in 1..i {
            a[j] = prev[j] + k * prev[i - j];
        }
        a[i] = k;
        err *= 1.0 - k * k;
        if err <= r[0] * 1e-12 {
            // numerically singular; stop with the predictor found so far
            err = err.max(r[0] * 1e-12);
            break;
        }
    }
    (a, err)
}

/// Roots of a polynomial given highest power first via companion-matrix
/// eigenvalues.
fn poly_roots(coefs: &[f64]) -> Vec<(f64, f64)> {
    let lead = coefs[0];
    let deg = coefs.len() - 1;
    if deg == 0 {
        return Vec::new();
    }
    let mut m = DMatrix::<f64>::zeros(deg, deg);
    for j in 0..deg {
        m[(0, j)] = -coefs[j + 1] / lead;
    }
    for i in 1..deg {
        m[(i, i - 1)] = 1.0;
    }
    m.complex_eigenvalues().iter().map(|c| (c.re, c.im)).collect()
}

/// First two formant frequencies of a voiced frame from the roots of an
/// order `rate/1000` predictor. `None` marks a formant that could not be
/// resolved.
pub fn formants_f1_f2(frame: &[f64], sample_rate: u32) -> (Option<f64>, Option<f64>) {
    let order = (sample_rate / 1000) as usize;
    if frame.len() <= order || frame.iter().all(|&v| v == 0.0) {
        return (None, None);
    }
    let win = window(WindowKind::Hann, frame.len());
    let x: Vec<f64> = pre_emphasis(frame, PRE_EMPHASIS)
        .iter()
        .zip(&win)
        .map(|(a, b)| a * b)
        .collect();
    let mut r = autocorrelation(&x, order);
    r[0] *= 1.0 + NOISE_FLOOR_CORRECTION;
    let (a, _) = levinson(&r);
    if a[1..].iter().all(|&c| c == 0.0) {
        return (None, None);
    }
    let rate = sample_rate as f64;
    let mut freqs: Vec<f64> = poly_roots(&a)
        .into_iter()
        .filter(|&(_, im)| im > 0.0)
        .filter_map(|(re, im)| {
            let radius = (re * re + im * im).sqrt();
            let freq = im.atan2(re) * rate / (2.0 * PI);
            let bandwidth = -radius.ln() * rate / PI;
            (bandwidth < FORMANT_MAX_BANDWIDTH && freq > FORMANT_MIN_HZ && freq < FORMANT_MAX_HZ)
                .then_some(freq)
        })
        .collect();
    freqs.sort_by(f64::total_cmp);
    (freqs.first().copied(), freqs.get(1).copied())
}

/// Line spectral frequencies (radians, ascending in (0, pi)) of a predictor
/// polynomial of even order.
pub fn lsp_frequencies(a: &[f64]) -> Vec<f64> {
    let p = a.len() - 1;
    // P(z) = A(z) + z^-(p+1) A(1/z), Q(z) = A(z) - z^-(p+1) A(1/z),
    // written as coefficient lists of z^-k, k = 0..=p+1.
    let mut sum = vec![0.0; p + 2];
    let mut diff = vec![0.0; p + 2];
    for k in 0..=p + 1 {
        let fwd = if k <= p { a[k] } else { 0.0 };
        let rev = if k >= 1 { a[p + 1 - k] } else { 0.0 };
        sum[k] = fwd + rev;
        diff[k] = fwd - rev;
    }
    let mut angles: Vec<f64> = [sum, diff]
        .iter()
        .flat_map(|poly| poly_roots(poly))
        .filter(|&(_, im)| im > 1e-9)
        .map(|(re, im)| im.atan2(re))
        .collect();
    angles.sort_by(f64::total_cmp);
    angles.resize(p, PI);
    angles
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::percentile;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        (0..n).map(|_| normal.sample(&mut rng)).collect()
    }

    /// White noise filtered by conjugate pole pairs at the given
    /// (frequency, bandwidth) pairs.
    pub(crate) fn resonators(e: &[f64], poles: &[(f64, f64)], rate: f64) -> Vec<f64> {
        let mut x = e.to_vec();
        for &(f, bw) in poles {
            let r = (-PI * bw / rate).exp();
            let a1 = -2.0 * r * (2.0 * PI * f / rate).cos();
            let a2 = r * r;
            let mut y = vec![0.0; x.len()];
            for n in 0..x.len() {
                let y1 = if n >= 1 { y[n - 1] } else { 0.0 };
                let y2 = if n >= 2 { y[n - 2] } else { 0.0 };
                y[n] = x[n] - a1 * y1 - a2 * y2;
            }
            x = y;
        }
        x
    }

    #[test]
    fn recovers_ar2() {
        let e = noise(20000, 1);
        let mut x = vec![0.0; e.len()];
        for n in 0..e.len() {
            let x1 = if n >= 1 { x[n - 1] } else { 0.0 };
            let x2 = if n >= 2 { x[n - 2] } else { 0.0 };
            x[n] = 1.6 * x1 - 0.64 * x2 + e[n];
        }
        let a = lpc(&x, 2);
        assert_eq!(a[0], 1.0);
        assert!((a[1] + 1.6).abs() < 0.1 && (a[2] - 0.64).abs() < 0.1, "{a:?}");
    }

    #[test]
    fn white_noise_gain_near_one() {
        let x = noise(8000, 2);
        let (_, err) = lpc_with_error(&x, 10);
        let r0: f64 = x.iter().map(|v| v * v).sum();
        let gain = r0 / err;
        assert!((gain - 1.0).abs() < 0.2, "gain {gain}");
    }

    #[test]
    fn zero_frame_fallback() {
        let (a, err) = lpc_with_error(&[0.0; 200], 8);
        assert_eq!(a, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(err, 0.0);
    }

    #[test]
    fn two_resonators() {
        let x = resonators(&noise(16000, 3), &[(500.0, 80.0), (1500.0, 80.0)], 8000.0);
        let mut f1s = Vec::new();
        let mut f2s = Vec::new();
        for t in (0..x.len() - 200).step_by(80) {
            if let (Some(f1), Some(f2)) = formants_f1_f2(&x[t..t + 200], 8000) {
                f1s.push(f1);
                f2s.push(f2);
            }
        }
        assert!(f1s.len() > 150);
        let (f1, f2) = (percentile(&f1s, 50.0), percentile(&f2s, 50.0));
        assert!((450.0..=550.0).contains(&f1), "F1 {f1}");
        assert!((1400.0..=1600.0).contains(&f2), "F2 {f2}");
    }

    #[test]
    fn pure_sine_has_no_second_formant() {
        let x: Vec<f64> = (0..200)
            .map(|i| (2.0 * PI * 200.0 * i as f64 / 8000.0).sin())
            .collect();
        let (_, f2) = formants_f1_f2(&x, 8000);
        assert!(f2.is_none(), "{f2:?}");
    }

    #[test]
    fn zero_frame_has_no_formants() {
        assert_eq!(formants_f1_f2(&[0.0; 200], 8000), (None, None));
    }

    #[test]
    fn lsp_are_sorted_and_interlaced() {
        let x = resonators(&noise(400, 4), &[(700.0, 100.0), (1800.0, 150.0)], 8000.0);
        let a = lpc(&x, 8);
        let lsp = lsp_frequencies(&a);
        assert_eq!(lsp.len(), 8);
        for w in lsp.windows(2) {
            assert!(w[0] < w[1]);
        }
        assert!(lsp.iter().all(|&w| w > 0.0 && w < PI));
    }

    #[test]
    fn lsp_of_flat_predictor() {
        let lsp = lsp_frequencies(&lpc(&[0.0; 50], 8));
        assert_eq!(lsp.len(), 8);
        // 1 +/- z^-9 roots are evenly spaced on the unit circle
        for (k, w) in lsp.iter().enumerate() {
            assert!((w - (k as f64 + 1.0) * PI / 9.0).abs() < 1e-9);
        }
    }
}
