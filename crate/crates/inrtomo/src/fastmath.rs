//! Vectorization-friendly simultaneous sine/cosine.
//!
//! Coordinate networks spend most of their time evaluating `sin` and `cos`
//! over large activation matrices; libm's scalar routines dominate the
//! profile there. This is a Cody-Waite reduction to `[-pi/4, pi/4]` with
//! minimax polynomials, written branch-free (magic-number rounding, quadrant
//! handled by polynomial sign/swap factors) so the compiler can vectorize
//! the elementwise loops. Accurate to a few ulp for arguments below `1e9`;
//! larger arguments fall back to libm.

const PIO2_1: f64 = 1.570_796_326_734_125_614_17e0;
const PIO2_2: f64 = 6.077_100_506_506_192_249_32e-11;
const PIO2_3: f64 = 2.022_266_248_795_950_631_54e-21;
const TWO_OVER_PI: f64 = 0.636_619_772_367_581_343_08;
const HUGE_ARG: f64 = 1.0e9;
/// Adding then subtracting this rounds to the nearest integer (half to
/// even) for magnitudes below 2^51, without leaving the FP domain.
const ROUND_MAGIC: f64 = 6_755_399_441_055_744.0;

#[inline(always)]
fn sin_poly(r: f64, r2: f64) -> f64 {
    let s = 1.589_623_015_765_465_68e-10;
    let s = s * r2 - 2.505_074_776_285_780_73e-8;
    let s = s * r2 + 2.755_731_362_138_572_45e-6;
    let s = s * r2 - 1.984_126_982_958_953_86e-4;
    let s = s * r2 + 8.333_333_333_322_118_59e-3;
    let s = s * r2 - 1.666_666_666_666_663_07e-1;
    r + r * r2 * s
}

#[inline(always)]
fn cos_poly(r2: f64) -> f64 {
    let c = -1.135_853_652_138_768_17e-11;
    let c = c * r2 + 2.087_570_084_197_473_17e-9;
    let c = c * r2 - 2.755_731_417_929_673_88e-7;
    let c = c * r2 + 2.480_158_728_885_171_80e-5;
    let c = c * r2 - 1.388_888_888_887_305_64e-3;
    let c = c * r2 + 4.166_666_666_666_659_29e-2;
    1.0 - 0.5 * r2 + r2 * r2 * c
}

/// Branch-free core for |x| < HUGE_ARG. The quadrant residue
/// `m = k - 4 round(k/4)` takes values in {0, 1, +-2, -1}; `swap`, and the
/// two sign factors are degree-4 polynomials interpolating the required
/// {0, 1, -1} selections at those points.
#[inline(always)]
fn sin_cos_core(x: f64) -> (f64, f64) {
    let k = (x * TWO_OVER_PI + ROUND_MAGIC) - ROUND_MAGIC;
    let r = ((x - k * PIO2_1) - k * PIO2_2) - k * PIO2_3;
    let r2 = r * r;
    let s = sin_poly(r, r2);
    let c = cos_poly(r2);

    let m = k - 4.0 * ((k * 0.25 + ROUND_MAGIC) - ROUND_MAGIC);
    let m2 = m * m;
    let swap = m2 * (4.0 - m2) * (1.0 / 3.0);
    let sign_s = 1.0 + m * (4.0 / 3.0) + m2 * (-7.0 / 6.0)
        + m2 * m * (-1.0 / 3.0)
        + m2 * m2 * (1.0 / 6.0);
    let sign_c = 1.0 + m * (-4.0 / 3.0) + m2 * (-7.0 / 6.0)
        + m2 * m * (1.0 / 3.0)
        + m2 * m2 * (1.0 / 6.0);

    (sign_s * (s + swap * (c - s)), sign_c * (c + swap * (s - c)))
}

/// `(sin x, cos x)`.
#[inline]
pub fn sin_cos(x: f64) -> (f64, f64) {
    if !(x.abs() < HUGE_ARG) {
        return x.sin_cos();
    }
    sin_cos_core(x)
}

/// Writes `sin(z)` and `cos(z)` elementwise. Slices must share one length.
pub fn sin_cos_slice(z: &[f64], sin_out: &mut [f64], cos_out: &mut [f64]) {
    assert_eq!(z.len(), sin_out.len());
    assert_eq!(z.len(), cos_out.len());
    let in_range = z.iter().fold(0.0f64, |m, v| m.max(v.abs())) < HUGE_ARG;
    if in_range {
        for i in 0..z.len() {
            let (s, c) = sin_cos_core(z[i]);
            sin_out[i] = s;
            cos_out[i] = c;
        }
    } else {
        for i in 0..z.len() {
            let (s, c) = sin_cos(z[i]);
            sin_out[i] = s;
            cos_out[i] = c;
        }
    }
}

/// Fused sine layer: given pre-activations `z` laid out row-major with
/// `width` columns, writes `sin(omega (z + bias))` and
/// `omega cos(omega (z + bias))` per element. The second output is exactly
/// the factor the backward pass multiplies by.
pub fn sine_layer_slice(
    z: &[f64],
    bias: &[f64],
    omega: f64,
    sin_out: &mut [f64],
    dcos_out: &mut [f64],
) {
    let width = bias.len();
    assert!(width > 0 && z.len() % width == 0);
    assert_eq!(z.len(), sin_out.len());
    assert_eq!(z.len(), dcos_out.len());
    let mut max_abs = 0.0f64;
    for ((zrow, srow), crow) in z
        .chunks_exact(width)
        .zip(sin_out.chunks_exact_mut(width))
        .zip(dcos_out.chunks_exact_mut(width))
    {
        for j in 0..width {
            let t = omega * (zrow[j] + bias[j]);
            max_abs = max_abs.max(t.abs());
            let (s, c) = sin_cos_core(t);
            srow[j] = s;
            crow[j] = omega * c;
        }
    }
    if !(max_abs < HUGE_ARG) {
        // rare: redo with the checked scalar path
        for ((zrow, srow), crow) in z
            .chunks_exact(width)
            .zip(sin_out.chunks_exact_mut(width))
            .zip(dcos_out.chunks_exact_mut(width))
        {
            for j in 0..width {
                let t = omega * (zrow[j] + bias[j]);
                let (s, c) = sin_cos(t);
                srow[j] = s;
                crow[j] = omega * c;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_libm_over_training_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200_000 {
            let x: f64 = (rng.gen::<f64>() - 0.5) * 2.0e4;
            let (s, c) = sin_cos(x);
            assert!((s - x.sin()).abs() < 1e-13, "sin({x})");
            assert!((c - x.cos()).abs() < 1e-13, "cos({x})");
        }
    }

    #[test]
    fn exact_points() {
        let (s, c) = sin_cos(0.0);
        assert_eq!(s, 0.0);
        assert_eq!(c, 1.0);
        for &x in &[
            std::f64::consts::PI,
            std::f64::consts::FRAC_PI_2,
            -std::f64::consts::FRAC_PI_4,
            1.5,
            -2.5,
            4.2,
            -5.9,
            1e8,
            -3.5e7,
        ] {
            let (s, c) = sin_cos(x);
            assert!((s - x.sin()).abs() < 1e-12, "sin({x}): {s} vs {}", x.sin());
            assert!((c - x.cos()).abs() < 1e-12, "cos({x}): {c} vs {}", x.cos());
        }
    }

    #[test]
    fn all_quadrant_residues_handled() {
        // k mod 4 in {0,1,2,3} and negative arguments
        for k in -12..=12 {
            let x = k as f64 * std::f64::consts::FRAC_PI_2 + 0.3;
            let (s, c) = sin_cos(x);
            assert!((s - x.sin()).abs() < 1e-13, "sin at k={k}");
            assert!((c - x.cos()).abs() < 1e-13, "cos at k={k}");
        }
    }

    #[test]
    fn huge_arguments_fall_back() {
        for &x in &[1e12, -4e15, f64::NAN] {
            let (s, c) = sin_cos(x);
            if x.is_nan() {
                assert!(s.is_nan() && c.is_nan());
            } else {
                assert_eq!(s, x.sin());
                assert_eq!(c, x.cos());
            }
        }
    }

    #[test]
    fn slice_variant_agrees() {
        let z: Vec<f64> = (0..1000).map(|i| i as f64 * 0.37 - 185.0).collect();
        let mut s = vec![0.0; z.len()];
        let mut c = vec![0.0; z.len()];
        sin_cos_slice(&z, &mut s, &mut c);
        for (i, x) in z.iter().enumerate() {
            let (es, ec) = sin_cos(*x);
            assert_eq!(s[i], es);
            assert_eq!(c[i], ec);
        }
    }

    #[test]
    fn sine_layer_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let width = 7;
        let rows = 13;
        let z: Vec<f64> = (0..width * rows).map(|_| rng.gen::<f64>() * 60.0 - 30.0).collect();
        let bias: Vec<f64> = (0..width).map(|_| rng.gen::<f64>() - 0.5).collect();
        let omega = 30.0;
        let mut s = vec![0.0; z.len()];
        let mut dc = vec![0.0; z.len()];
        sine_layer_slice(&z, &bias, omega, &mut s, &mut dc);
        for r in 0..rows {
            for j in 0..width {
                let t = omega * (z[r * width + j] + bias[j]);
                assert!((s[r * width + j] - t.sin()).abs() < 1e-12);
                assert!((dc[r * width + j] - omega * t.cos()).abs() < omega * 1e-12);
            }
        }
    }
}
