//! Reconstruction quality metrics.

use crate::error::{Error, Result};
use crate::grid::ImageGrid;

/// Peak signal-to-noise ratio in dB: `10 log10(range^2 / MSE)`.
/// Identical images have zero MSE and return `f64::INFINITY`.
pub fn psnr(a: &ImageGrid, b: &ImageGrid, data_range: f64) -> Result<f64> {
    if a.side() != b.side() {
        return Err(Error::shape(format!("psnr: {} vs {}", a.side(), b.side())));
    }
    if !(data_range > 0.0) {
        return Err(Error::invalid("data_range must be positive"));
    }
    let n = (a.side() * a.side()) as f64;
    let mse: f64 = a
        .flat()
        .iter()
        .zip(b.flat())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (data_range * data_range / mse).log10())
}

/// Structural similarity configuration: Gaussian window and the usual
/// stability constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimConfig {
    pub window_size: usize,
    pub window_sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub data_range: f64,
}

impl SsimConfig {
    pub fn with_range(data_range: f64) -> Self {
        Self { window_size: 7, window_sigma: 1.5, k1: 0.01, k2: 0.03, data_range }
    }
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self::with_range(1.0)
    }
}

fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let mut w: Vec<f64> = (0..size * size)
        .map(|k| {
            let dy = (k / size) as f64 - c;
            let dx = (k % size) as f64 - c;
            (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = w.iter().sum();
    for v in &mut w {
        *v /= s;
    }
    w
}

/// Mean of the local SSIM map under Gaussian windowing. Only windows fully
/// inside the image contribute.
pub fn ssim(a: &ImageGrid, b: &ImageGrid, cfg: &SsimConfig) -> Result<f64> {
    if a.side() != b.side() {
        return Err(Error::shape(format!("ssim: {} vs {}", a.side(), b.side())));
    }
    let side = a.side();
    let win = cfg.window_size;
    if side < win {
        return Err(Error::invalid(format!("image side {side} below window {win}")));
    }
    if !(cfg.data_range > 0.0) {
        return Err(Error::invalid("data_range must be positive"));
    }
    let w = gaussian_window(win, cfg.window_sigma);
    let c1 = (cfg.k1 * cfg.data_range).powi(2);
    let c2 = (cfg.k2 * cfg.data_range).powi(2);
    let av = a.values();
    let bv = b.values();

    let mut acc = 0.0;
    let mut count = 0usize;
    for top in 0..=(side - win) {
        for left in 0..=(side - win) {
            let mut ma = 0.0;
            let mut mb = 0.0;
            let mut maa = 0.0;
            let mut mbb = 0.0;
            let mut mab = 0.0;
            for dy in 0..win {
                for dx in 0..win {
                    let wk = w[dy * win + dx];
                    let x = av[[top + dy, left + dx]];
                    let y = bv[[top + dy, left + dx]];
                    ma += wk * x;
                    mb += wk * y;
                    maa += wk * x * x;
                    mbb += wk * y * y;
                    mab += wk * x * y;
                }
            }
            let va = maa - ma * ma;
            let vb = mbb - mb * mb;
            let cov = mab - ma * mb;
            let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
            let den = (ma * ma + mb * mb + c1) * (va + vb + c2);
            acc += num / den;
            count += 1;
        }
    }
    Ok(acc / count as f64)
}

/// Mean and standard error (`sd / sqrt(n)`, zero for a single value).
pub fn aggregate(values: &[f64]) -> (f64, f64) {
    assert!(!values.is_empty(), "aggregate of empty slice");
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt() / n.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn grid_of(side: usize, f: impl Fn(usize, usize) -> f64) -> ImageGrid {
        let mut v = Array2::zeros((side, side));
        for i in 0..side {
            for j in 0..side {
                v[[i, j]] = f(i, j);
            }
        }
        ImageGrid::new(v, 2.0 / side as f64).unwrap()
    }

    #[test]
    fn psnr_identical_is_infinite() {
        let a = grid_of(16, |i, j| (i * j) as f64 / 256.0);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn psnr_uniform_tenth_difference_is_20db() {
        let a = grid_of(16, |_, _| 0.5);
        let b = grid_of(16, |_, _| 0.6);
        let p = psnr(&a, &b, 1.0).unwrap();
        assert!((p - 20.0).abs() < 1e-12, "{p}");
    }

    #[test]
    fn psnr_scale_invariant_with_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = grid_of(16, |_, _| rng.gen());
        let b = grid_of(16, |_, _| rng.gen());
        let p1 = psnr(&a, &b, 1.0).unwrap();
        let a2 = grid_of(16, |i, j| 2.0 * a.values()[[i, j]]);
        let b2 = grid_of(16, |i, j| 2.0 * b.values()[[i, j]]);
        let p2 = psnr(&a2, &b2, 2.0).unwrap();
        assert!((p1 - p2).abs() < 1e-9);
    }

    #[test]
    fn psnr_decreases_with_mse() {
        let a = grid_of(16, |_, _| 0.5);
        let b = grid_of(16, |_, _| 0.55);
        let c = grid_of(16, |_, _| 0.7);
        assert!(psnr(&a, &b, 1.0).unwrap() > psnr(&a, &c, 1.0).unwrap());
    }

    #[test]
    fn ssim_identical_is_one() {
        let a = grid_of(32, |i, j| ((i + 2 * j) % 7) as f64 / 7.0);
        let s = ssim(&a, &a, &SsimConfig::default()).unwrap();
        assert_eq!(s, 1.0);
    }

    #[test]
    fn ssim_constant_pair_is_one() {
        let a = grid_of(16, |_, _| 0.3);
        let b = grid_of(16, |_, _| 0.3);
        assert_eq!(ssim(&a, &b, &SsimConfig::default()).unwrap(), 1.0);
    }

    #[test]
    fn ssim_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = grid_of(24, |_, _| rng.gen());
        let b = grid_of(24, |_, _| rng.gen());
        let cfg = SsimConfig::default();
        let ab = ssim(&a, &b, &cfg).unwrap();
        let ba = ssim(&b, &a, &cfg).unwrap();
        assert!((ab - ba).abs() < 1e-12);
    }

    #[test]
    fn ssim_of_independent_noise_is_low() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut acc = 0.0;
        for _ in 0..20 {
            let a = grid_of(32, |_, _| rng.gen());
            let b = grid_of(32, |_, _| rng.gen());
            acc += ssim(&a, &b, &SsimConfig::default()).unwrap();
        }
        assert!(acc / 20.0 < 0.5);
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate(&[3.5]), (3.5, 0.0));
        assert_eq!(aggregate(&[1.0, 1.0, 1.0]), (1.0, 0.0));
        let (m, se) = aggregate(&[0.0, 2.0]);
        assert!((m - 1.0).abs() < 1e-15 && (se - 1.0).abs() < 1e-15);
    }

    #[test]
    fn window_normalized() {
        let w = gaussian_window(7, 1.5);
        let s: f64 = w.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
}
