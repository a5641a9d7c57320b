use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Parallel-beam acquisition geometry: projection angles plus a flat
/// detector centered on the rotation axis.
///
/// All lengths are in the normalized units of the image square `[-1, 1]^2`.
/// Detector bin `u` sits at offset `(u - (count - 1)/2) * spacing` along the
/// detector axis `(cos a, sin a)`; rays run perpendicular to it.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionGeometry {
    angles: Vec<f64>,
    detector_count: usize,
    detector_spacing: f64,
    arc_degrees: f64,
}

impl ProjectionGeometry {
    pub fn new(
        angles: Vec<f64>,
        detector_count: usize,
        detector_spacing: f64,
        arc_degrees: f64,
    ) -> Result<Self> {
        if angles.is_empty() {
            return Err(Error::invalid("angle list must not be empty"));
        }
        if detector_count == 0 {
            return Err(Error::invalid("detector_count must be >= 1"));
        }
        if !(detector_spacing > 0.0) {
            return Err(Error::invalid("detector_spacing must be positive"));
        }
        let arc = arc_degrees.to_radians();
        for w in angles.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::invalid("angles must be strictly increasing"));
            }
        }
        if angles.iter().any(|a| !a.is_finite() || *a < 0.0 || *a >= arc + 1e-12) {
            return Err(Error::invalid(format!(
                "angles must lie in [0, {arc_degrees} deg)"
            )));
        }
        Ok(Self { angles, detector_count, detector_spacing, arc_degrees })
    }

    /// Equispaced angles over the arc with a detector wide enough to cover
    /// the diagonal of the unit image square.
    pub fn parallel(num_angles: usize, arc_degrees: f64, side: usize) -> Result<Self> {
        let detector_count = default_detector_count(side);
        let detector_spacing = default_detector_spacing(detector_count);
        Self::with_detectors(num_angles, arc_degrees, detector_count, detector_spacing)
    }

    pub fn with_detectors(
        num_angles: usize,
        arc_degrees: f64,
        detector_count: usize,
        detector_spacing: f64,
    ) -> Result<Self> {
        if num_angles == 0 {
            return Err(Error::invalid("need at least one angle"));
        }
        let arc = arc_degrees.to_radians();
        let angles = (0..num_angles)
            .map(|i| i as f64 * arc / num_angles as f64)
            .collect();
        Self::new(angles, detector_count, detector_spacing, arc_degrees)
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn num_angles(&self) -> usize {
        self.angles.len()
    }

    pub fn detector_count(&self) -> usize {
        self.detector_count
    }

    pub fn detector_spacing(&self) -> f64 {
        self.detector_spacing
    }

    pub fn arc_degrees(&self) -> f64 {
        self.arc_degrees
    }

    /// Offset of detector bin `u` from the rotation axis.
    pub fn detector_offset(&self, u: usize) -> f64 {
        (u as f64 - (self.detector_count as f64 - 1.0) / 2.0) * self.detector_spacing
    }

    /// Total number of measurement bins.
    pub fn num_bins(&self) -> usize {
        self.angles.len() * self.detector_count
    }
}

/// Detector count that covers the diagonal of `[-1, 1]^2` at roughly
/// pixel-sized bins.
pub fn default_detector_count(side: usize) -> usize {
    ((side as f64) * std::f64::consts::SQRT_2).ceil() as usize + 1
}

/// Spacing so that `count` bins exactly span the unit-square diagonal.
pub fn default_detector_spacing(detector_count: usize) -> f64 {
    2.0 * std::f64::consts::SQRT_2 / detector_count as f64
}

/// Stack of line-integral measurements, one row per angle.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    geometry: ProjectionGeometry,
    /// `num_angles x detector_count`
    values: Array2<f64>,
}

impl Sinogram {
    pub fn new(geometry: ProjectionGeometry, values: Array2<f64>) -> Result<Self> {
        let (rows, cols) = values.dim();
        if rows != geometry.num_angles() || cols != geometry.detector_count() {
            return Err(Error::GeometryMismatch(format!(
                "sinogram {}x{} does not match geometry {}x{}",
                rows,
                cols,
                geometry.num_angles(),
                geometry.detector_count()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sinogram values".into()));
        }
        Ok(Self { geometry, values })
    }

    pub fn zeros(geometry: ProjectionGeometry) -> Self {
        let values = Array2::zeros((geometry.num_angles(), geometry.detector_count()));
        Self { geometry, values }
    }

    pub fn geometry(&self) -> &ProjectionGeometry {
        &self.geometry
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array2<f64> {
        &mut self.values
    }

    pub fn flat(&self) -> &[f64] {
        self.values.as_slice().expect("sinogram storage is contiguous")
    }

    /// Writes the binary sinogram format: a 16-byte header (magic `SINO`,
    /// u32 angle count, u32 detector count, 4 reserved bytes), then the
    /// values as little-endian f32, angle-major.
    pub fn write_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(b"SINO")?;
        f.write_all(&(self.geometry.num_angles() as u32).to_le_bytes())?;
        f.write_all(&(self.geometry.detector_count() as u32).to_le_bytes())?;
        f.write_all(&[0u8; 4])?;
        let mut buf = Vec::with_capacity(self.values.len() * 4);
        for v in self.flat() {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        f.write_all(&buf)?;
        Ok(())
    }

    /// Reads the binary format back. The file stores only the grid shape,
    /// so the caller supplies the geometry and the shape is checked.
    pub fn read_binary(path: impl AsRef<Path>, geometry: ProjectionGeometry) -> Result<Self> {
        let mut f = std::fs::File::open(path)?;
        let mut header = [0u8; 16];
        f.read_exact(&mut header)?;
        if &header[0..4] != b"SINO" {
            return Err(Error::UnsupportedFormat("missing SINO magic".into()));
        }
        let angles = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
        let detectors = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        if angles != geometry.num_angles() || detectors != geometry.detector_count() {
            return Err(Error::GeometryMismatch(format!(
                "file is {angles}x{detectors}, geometry expects {}x{}",
                geometry.num_angles(),
                geometry.detector_count()
            )));
        }
        let mut raw = Vec::new();
        f.read_to_end(&mut raw)?;
        if raw.len() != angles * detectors * 4 {
            return Err(Error::UnsupportedFormat(format!(
                "payload length {} does not match {angles}x{detectors} f32 values",
                raw.len()
            )));
        }
        let vals: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        let values = Array2::from_shape_vec((angles, detectors), vals).unwrap();
        Sinogram::new(geometry, values)
    }

    /// CSV dump for inspection: one row per angle, detectors as columns.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        for row in self.values.rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            writeln!(f, "{}", line.join(","))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_angles() {
        assert!(ProjectionGeometry::new(vec![], 8, 0.1, 180.0).is_err());
    }

    #[test]
    fn rejects_non_increasing_angles() {
        assert!(ProjectionGeometry::new(vec![0.0, 0.5, 0.5], 8, 0.1, 180.0).is_err());
        assert!(ProjectionGeometry::new(vec![0.5, 0.1], 8, 0.1, 180.0).is_err());
    }

    #[test]
    fn rejects_angles_outside_arc() {
        assert!(ProjectionGeometry::new(vec![0.0, 3.2], 8, 0.1, 180.0).is_err());
    }

    #[test]
    fn equispaced_angles_cover_arc() {
        let g = ProjectionGeometry::parallel(4, 180.0, 16).unwrap();
        let pi = std::f64::consts::PI;
        let expect = [0.0, pi / 4.0, pi / 2.0, 3.0 * pi / 4.0];
        for (a, e) in g.angles().iter().zip(expect) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn detector_centered_on_axis() {
        let g = ProjectionGeometry::parallel(2, 180.0, 16).unwrap();
        let n = g.detector_count();
        let lo = g.detector_offset(0);
        let hi = g.detector_offset(n - 1);
        assert!((lo + hi).abs() < 1e-12);
        // covers the unit-square diagonal
        assert!(hi - lo + g.detector_spacing() >= 2.0 * std::f64::consts::SQRT_2 - 1e-9);
    }

    #[test]
    fn sinogram_shape_checked() {
        let g = ProjectionGeometry::parallel(3, 180.0, 8).unwrap();
        let bad = Array2::zeros((2, g.detector_count()));
        assert!(Sinogram::new(g.clone(), bad).is_err());
        let good = Array2::zeros((3, g.detector_count()));
        assert!(Sinogram::new(g, good).is_ok());
    }

    #[test]
    fn binary_round_trip() {
        let g = ProjectionGeometry::parallel(3, 180.0, 8).unwrap();
        let mut s = Sinogram::zeros(g.clone());
        for (i, v) in s.values_mut().iter_mut().enumerate() {
            *v = i as f64 * 0.25;
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.sino");
        s.write_binary(&path).unwrap();
        let back = Sinogram::read_binary(&path, g).unwrap();
        for (a, b) in s.flat().iter().zip(back.flat()) {
            assert!((a - b).abs() <= (*a as f32).abs() as f64 * 1e-7 + 1e-7);
        }
    }
}
