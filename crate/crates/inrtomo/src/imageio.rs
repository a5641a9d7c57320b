//! Grayscale image ingestion and emission (PGM and PNG, 8- or 16-bit).
//! Pixel values map linearly onto `[0, 1]`.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma};
use log::warn;

use crate::error::{Error, Result};
use crate::grid::ImageGrid;

/// Loads an 8- or 16-bit grayscale PGM or PNG. Non-square inputs are
/// center-cropped to the short side with a warning.
pub fn load_grayscale(path: impl AsRef<Path>) -> Result<ImageGrid> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    if ext != "pgm" && ext != "png" {
        return Err(Error::UnsupportedFormat(format!(
            "expected .pgm or .png, got {}",
            path.display()
        )));
    }
    let img = image::open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let side = w.min(h);
    if w != h {
        warn!(
            "{}: non-square {}x{}, center-cropping to {side}x{side}",
            path.display(),
            w,
            h
        );
    }
    let x0 = (w - side) / 2;
    let y0 = (h - side) / 2;

    let mut flat = vec![0.0f64; side * side];
    match img {
        DynamicImage::ImageLuma16(buf) => {
            for r in 0..side {
                for c in 0..side {
                    let p = buf.get_pixel((x0 + c) as u32, (y0 + r) as u32).0[0];
                    flat[r * side + c] = p as f64 / 65535.0;
                }
            }
        }
        other => {
            let buf = other.into_luma8();
            for r in 0..side {
                for c in 0..side {
                    let p = buf.get_pixel((x0 + c) as u32, (y0 + r) as u32).0[0];
                    flat[r * side + c] = p as f64 / 255.0;
                }
            }
        }
    }
    ImageGrid::from_flat(side, 2.0 / side as f64, &flat)
}

/// Bit depth for [`save_grayscale`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

/// Saves a grid as grayscale PGM or PNG (by extension). Values are clamped
/// to `[0, 1]` and quantized at the requested depth.
pub fn save_grayscale(image: &ImageGrid, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    let side = image.side() as u32;
    match depth {
        BitDepth::Eight => {
            let buf: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_fn(side, side, |x, y| {
                let v = image.values()[[y as usize, x as usize]].clamp(0.0, 1.0);
                Luma([(v * 255.0).round() as u8])
            });
            buf.save(path)?;
        }
        BitDepth::Sixteen => {
            let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_fn(side, side, |x, y| {
                let v = image.values()[[y as usize, x as usize]].clamp(0.0, 1.0);
                Luma([(v * 65535.0).round() as u16])
            });
            buf.save(path)?;
        }
    }
    Ok(())
}

/// Saves with min-max windowing to 8 bits: the value range of `image` is
/// stretched to full scale. Handy for previewing reconstructions that
/// overshoot `[0, 1]`.
pub fn save_preview(image: &ImageGrid, path: impl AsRef<Path>) -> Result<()> {
    let lo = image.min();
    let hi = image.max();
    let span = if hi > lo { hi - lo } else { 1.0 };
    let side = image.side() as u32;
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_fn(side, side, |x, y| {
        let v = (image.values()[[y as usize, x as usize]] - lo) / span;
        Luma([(v.clamp(0.0, 1.0) * 255.0).round() as u8])
    });
    buf.save(path.as_ref())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn black_pgm_loads_as_zeros() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("black.pgm");
        let img = ImageGrid::zeros(64);
        save_grayscale(&img, &path, BitDepth::Eight).unwrap();
        let back = load_grayscale(&path).unwrap();
        assert_eq!(back.side(), 64);
        assert!(back.flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sixteen_bit_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.png");
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut v = Array2::zeros((32, 32));
        for x in v.iter_mut() {
            *x = rng.gen::<f64>();
        }
        let img = ImageGrid::new(v, 2.0 / 32.0).unwrap();
        save_grayscale(&img, &path, BitDepth::Sixteen).unwrap();
        let back = load_grayscale(&path).unwrap();
        let max_err = img
            .flat()
            .iter()
            .zip(back.flat())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_err <= 0.5 / 65535.0 + 1e-12, "max err {max_err}");
    }

    #[test]
    fn eight_bit_midgray_maps_linearly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.pgm");
        let buf: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_pixel(16, 16, Luma([128u8]));
        buf.save(&path).unwrap();
        let img = load_grayscale(&path).unwrap();
        for v in img.flat() {
            assert!((v - 128.0 / 255.0).abs() < 1e-6);
        }
    }

    #[test]
    fn non_square_center_crops() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("wide.png");
        let buf: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_fn(20, 10, |x, _| {
            Luma([if (5..15).contains(&x) { 200u8 } else { 0u8 }])
        });
        buf.save(&path).unwrap();
        let img = load_grayscale(&path).unwrap();
        assert_eq!(img.side(), 10);
        // the kept columns are the bright center band
        assert!(img.flat().iter().all(|&v| (v - 200.0 / 255.0).abs() < 1e-6));
    }

    #[test]
    fn unsupported_extension_rejected() {
        assert!(load_grayscale("/tmp/nope.tiff").is_err());
    }
}
