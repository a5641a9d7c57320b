use ndarray::Array2;

use crate::error::{Error, Result};

/// Square 2D scalar field of attenuation values with physical pixel spacing.
///
/// Values are stored row-major in an `side x side` array. Pixel centers map
/// to the square `[-1, 1]^2` in normalized coordinates: pixel `(row, col)`
/// sits at `x = -1 + (col + 0.5) * 2/side`, `y = -1 + (row + 0.5) * 2/side`.
/// `spacing` is the physical size of one pixel, so the grid covers a physical
/// square of width `side * spacing`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    side: usize,
    spacing: f64,
    values: Array2<f64>,
}

impl ImageGrid {
    /// Builds a grid from a values array. Rejects non-square shapes,
    /// non-positive spacing and non-finite entries.
    pub fn new(values: Array2<f64>, spacing: f64) -> Result<Self> {
        let (rows, cols) = values.dim();
        if rows != cols {
            return Err(Error::shape(format!("grid must be square, got {rows}x{cols}")));
        }
        if rows == 0 {
            return Err(Error::invalid("grid side must be positive"));
        }
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::invalid(format!("spacing must be positive, got {spacing}")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image values".into()));
        }
        Ok(Self { side: rows, spacing, values })
    }

    /// All-zero grid. Spacing defaults so the grid spans `[-1, 1]` physically.
    pub fn zeros(side: usize) -> Self {
        Self {
            side,
            spacing: 2.0 / side as f64,
            values: Array2::zeros((side, side)),
        }
    }

    /// Grid from a flat row-major slice.
    pub fn from_flat(side: usize, spacing: f64, flat: &[f64]) -> Result<Self> {
        if flat.len() != side * side {
            return Err(Error::shape(format!(
                "expected {} values for side {side}, got {}",
                side * side,
                flat.len()
            )));
        }
        let values = Array2::from_shape_vec((side, side), flat.to_vec())
            .expect("length checked above");
        Self::new(values, spacing)
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array2<f64> {
        &mut self.values
    }

    /// Flat row-major view of the values.
    pub fn flat(&self) -> &[f64] {
        self.values.as_slice().expect("grid storage is contiguous")
    }

    /// Pixel-center coordinates in normalized `[-1, 1]^2` units, row-major.
    /// These are the sample points fed to coordinate networks.
    pub fn pixel_centers(side: usize) -> Vec<[f64; 2]> {
        let step = 2.0 / side as f64;
        let mut coords = Vec::with_capacity(side * side);
        for row in 0..side {
            let y = -1.0 + (row as f64 + 0.5) * step;
            for col in 0..side {
                let x = -1.0 + (col as f64 + 0.5) * step;
                coords.push([x, y]);
            }
        }
        coords
    }

    /// Normalized pixel width (`2 / side`).
    pub fn pixel_width_norm(&self) -> f64 {
        2.0 / self.side as f64
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}
