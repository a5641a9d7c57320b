//! Fourier feature positional encoding for 2D coordinates.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fastmath;

/// A fixed random frequency matrix `B` (`num_frequencies x 2`). A coordinate
/// `c` maps to the row `[cos(2 pi B c), sin(2 pi B c)]` of width
/// `2 * num_frequencies`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierEmbedding {
    frequencies: Array2<f64>,
    scale: f64,
}

impl FourierEmbedding {
    /// Draws `B` with entries `N(0, scale^2)`, fixed thereafter.
    pub fn new(num_frequencies: usize, scale: f64, seed: u64) -> Result<Self> {
        if num_frequencies == 0 {
            return Err(Error::invalid("need at least one frequency"));
        }
        if !(scale > 0.0) {
            return Err(Error::invalid("frequency scale must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0x00ff_eedb);
        let mut b = Array2::zeros((num_frequencies, 2));
        for v in b.iter_mut() {
            *v = normal(&mut rng) * scale;
        }
        Ok(Self { frequencies: b, scale })
    }

    pub fn from_matrix(frequencies: Array2<f64>, scale: f64) -> Result<Self> {
        if frequencies.ncols() != 2 || frequencies.nrows() == 0 {
            return Err(Error::shape("frequency matrix must be F x 2"));
        }
        Ok(Self { frequencies, scale })
    }

    pub fn num_frequencies(&self) -> usize {
        self.frequencies.nrows()
    }

    /// Output feature width `d = 2 * num_frequencies`.
    pub fn output_dim(&self) -> usize {
        2 * self.num_frequencies()
    }

    pub fn frequencies(&self) -> &Array2<f64> {
        &self.frequencies
    }

    /// Embeds a batch of 2D points; row `i` is
    /// `[cos(2 pi B c_i) | sin(2 pi B c_i)]`.
    pub fn embed(&self, coords: &[[f64; 2]]) -> Result<Array2<f64>> {
        if coords.iter().any(|c| !c[0].is_finite() || !c[1].is_finite()) {
            return Err(Error::NonFinite("coordinates".into()));
        }
        let f = self.num_frequencies();
        let tau = std::f64::consts::TAU;
        let mut out = Array2::zeros((coords.len(), 2 * f));
        for (i, c) in coords.iter().enumerate() {
            let mut row = out.row_mut(i);
            for k in 0..f {
                let phase = tau * (self.frequencies[[k, 0]] * c[0] + self.frequencies[[k, 1]] * c[1]);
                let (s, cv) = fastmath::sin_cos(phase);
                row[k] = cv;
                row[f + k] = s;
            }
        }
        Ok(out)
    }

    /// Binary serialization: magic `FFEB`, u32 frequency count, u32 input
    /// dim, f64 scale, then the `B` entries as little-endian f64 so a reload
    /// reproduces the embedding bit-exactly.
    pub fn write_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(b"FFEB")?;
        f.write_all(&(self.num_frequencies() as u32).to_le_bytes())?;
        f.write_all(&2u32.to_le_bytes())?;
        f.write_all(&self.scale.to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.frequencies.len() * 8);
        for v in self.frequencies.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        f.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary(path: impl AsRef<Path>) -> Result<Self> {
        let mut f = std::fs::File::open(path)?;
        let mut head = [0u8; 12];
        f.read_exact(&mut head)?;
        if &head[0..4] != b"FFEB" {
            return Err(Error::UnsupportedFormat("missing FFEB magic".into()));
        }
        let nf = u32::from_le_bytes(head[4..8].try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
        if dim != 2 {
            return Err(Error::UnsupportedFormat(format!("input dim {dim} unsupported")));
        }
        let mut scale_raw = [0u8; 8];
        f.read_exact(&mut scale_raw)?;
        let scale = f64::from_le_bytes(scale_raw);
        let mut raw = vec![0u8; nf * 2 * 8];
        f.read_exact(&mut raw)?;
        let vals: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_matrix(Array2::from_shape_vec((nf, 2), vals).unwrap(), scale)
    }
}

fn normal(rng: &mut impl Rng) -> f64 {
    loop {
        let u1: f64 = rng.gen();
        let u2: f64 = rng.gen();
        if u1 > f64::MIN_POSITIVE {
            return (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_embeds_to_ones_and_zeros() {
        let emb = FourierEmbedding::new(8, 4.0, 3).unwrap();
        let out = emb.embed(&[[0.0, 0.0]]).unwrap();
        for k in 0..8 {
            assert_eq!(out[[0, k]], 1.0, "cos block");
            assert_eq!(out[[0, 8 + k]], 0.0, "sin block");
        }
    }

    #[test]
    fn rows_lie_on_unit_circles() {
        let emb = FourierEmbedding::new(16, 4.0, 7).unwrap();
        let coords =
            [[0.3, -0.7], [0.0, 0.99], [-1.0, 1.0], [0.123, 0.456]];
        let out = emb.embed(&coords).unwrap();
        for i in 0..coords.len() {
            for k in 0..16 {
                let c = out[[i, k]];
                let s = out[[i, 16 + k]];
                assert!((c * c + s * s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn output_width_is_twice_frequencies() {
        let emb = FourierEmbedding::new(32, 4.0, 0).unwrap();
        assert_eq!(emb.output_dim(), 64);
        let out = emb.embed(&[[0.1, 0.2]]).unwrap();
        assert_eq!(out.dim(), (1, 64));
    }

    #[test]
    fn rejects_non_finite_coords() {
        let emb = FourierEmbedding::new(4, 1.0, 0).unwrap();
        assert!(emb.embed(&[[f64::NAN, 0.0]]).is_err());
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let emb = FourierEmbedding::new(12, 2.5, 42).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.ffe");
        emb.write_binary(&path).unwrap();
        let back = FourierEmbedding::read_binary(&path).unwrap();
        assert_eq!(emb, back);
    }
}
