//! Parallel-beam line-integral operator.
//!
//! Ray-driven sampling: each detector bin spawns a ray perpendicular to the
//! detector axis, sampled at equidistant steps of half a pixel; the image is
//! read by bilinear interpolation at each sample and the contributions are
//! weighted by the physical step length. The adjoint is the exact transpose
//! of the sampled operation, so `<Ax, y> == <x, A'y>` holds to machine
//! precision.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{ProjectionGeometry, Sinogram};
use crate::grid::ImageGrid;

/// Shape and physical spacing of a reconstruction grid, used where no image
/// values exist yet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub side: usize,
    pub spacing: f64,
}

impl GridSpec {
    pub fn new(side: usize, spacing: f64) -> Self {
        Self { side, spacing }
    }

    /// Spec matching an existing image.
    pub fn of(image: &ImageGrid) -> Self {
        Self { side: image.side(), spacing: image.spacing() }
    }

    /// Spacing such that the grid spans `[-1, 1]` physically.
    pub fn unit(side: usize) -> Self {
        Self { side, spacing: 2.0 / side as f64 }
    }

    pub fn num_pixels(&self) -> usize {
        self.side * self.side
    }
}

/// Half-diagonal of the normalized image square; rays sampled over
/// `[-SQRT2, SQRT2]` always cover it.
const HALF_DIAGONAL: f64 = std::f64::consts::SQRT_2;

/// Enumerates `(pixel_index, weight)` contributions of one ray.
///
/// `weight` already includes the physical step length, so the dot product of
/// the enumerated row with the flattened image is the ray's line integral.
/// Sample points falling outside the grid contribute nothing.
fn for_each_ray_sample(
    grid: GridSpec,
    angle: f64,
    detector_offset: f64,
    mut visit: impl FnMut(usize, f64),
) {
    let side = grid.side;
    let step_norm = 2.0 / side as f64;
    let h = step_norm / 2.0;
    // physical length of one sampling step
    let h_phys = h * (side as f64 * grid.spacing / 2.0);

    let (sin_a, cos_a) = angle.sin_cos();
    // detector axis and ray direction
    let (ex, ey) = (cos_a, sin_a);
    let (dx, dy) = (-sin_a, cos_a);

    let n_steps = (2.0 * HALF_DIAGONAL / h).ceil() as usize;
    let mid = (n_steps as f64 - 1.0) / 2.0;
    for k in 0..n_steps {
        let s = (k as f64 - mid) * h;
        let x = detector_offset * ex + s * dx;
        let y = detector_offset * ey + s * dy;
        // fractional pixel indices (pixel centers at -1 + (i + 0.5) * step)
        let fx = (x + 1.0) / step_norm - 0.5;
        let fy = (y + 1.0) / step_norm - 0.5;
        let j0 = fx.floor();
        let i0 = fy.floor();
        let ax = fx - j0;
        let ay = fy - i0;
        let j0 = j0 as isize;
        let i0 = i0 as isize;
        let corners = [
            (i0, j0, (1.0 - ax) * (1.0 - ay)),
            (i0, j0 + 1, ax * (1.0 - ay)),
            (i0 + 1, j0, (1.0 - ax) * ay),
            (i0 + 1, j0 + 1, ax * ay),
        ];
        for (i, j, w) in corners {
            if i >= 0 && j >= 0 && (i as usize) < side && (j as usize) < side && w != 0.0 {
                visit(i as usize * side + j as usize, w * h_phys);
            }
        }
    }
}

/// Precomputed sparse form of the forward operator for one
/// (geometry, grid) pair. Rows are rays in angle-major order.
#[derive(Debug, Clone)]
pub struct Projector {
    geometry: ProjectionGeometry,
    grid: GridSpec,
    /// CSR row offsets, length `num_rays + 1`
    offsets: Vec<usize>,
    indices: Vec<u32>,
    weights: Vec<f64>,
}

impl Projector {
    pub fn new(geometry: ProjectionGeometry, grid: GridSpec) -> Self {
        let rays: Vec<(f64, f64)> = geometry
            .angles()
            .iter()
            .flat_map(|&a| {
                (0..geometry.detector_count()).map(move |u| (a, u))
            })
            .map(|(a, u)| (a, geometry.detector_offset(u)))
            .collect();

        let rows: Vec<Vec<(u32, f64)>> = rays
            .par_iter()
            .map(|&(angle, offset)| {
                let mut entries: Vec<(u32, f64)> = Vec::with_capacity(256);
                for_each_ray_sample(grid, angle, offset, |idx, w| {
                    entries.push((idx as u32, w));
                });
                entries.sort_by_key(|e| e.0);
                // merge duplicate pixel hits
                let mut merged: Vec<(u32, f64)> = Vec::with_capacity(entries.len());
                for (idx, w) in entries {
                    match merged.last_mut() {
                        Some(last) if last.0 == idx => last.1 += w,
                        _ => merged.push((idx, w)),
                    }
                }
                merged
            })
            .collect();

        let mut offsets = Vec::with_capacity(rows.len() + 1);
        offsets.push(0usize);
        let nnz: usize = rows.iter().map(|r| r.len()).sum();
        let mut indices = Vec::with_capacity(nnz);
        let mut weights = Vec::with_capacity(nnz);
        for row in rows {
            for (idx, w) in row {
                indices.push(idx);
                weights.push(w);
            }
            offsets.push(indices.len());
        }
        Self { geometry, grid, offsets, indices, weights }
    }

    pub fn geometry(&self) -> &ProjectionGeometry {
        &self.geometry
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    fn num_rays(&self) -> usize {
        self.geometry.num_bins()
    }

    /// `A x` for a flat image vector.
    pub fn forward_flat(&self, image: &[f64], out: &mut [f64]) {
        assert_eq!(image.len(), self.grid.num_pixels(), "image length");
        assert_eq!(out.len(), self.num_rays(), "sinogram length");
        for ray in 0..self.num_rays() {
            let lo = self.offsets[ray];
            let hi = self.offsets[ray + 1];
            let mut acc = 0.0;
            for k in lo..hi {
                acc += self.weights[k] * image[self.indices[k] as usize];
            }
            out[ray] = acc;
        }
    }

    /// `A' y` for a flat sinogram vector.
    pub fn adjoint_flat(&self, sino: &[f64], out: &mut [f64]) {
        assert_eq!(sino.len(), self.num_rays(), "sinogram length");
        assert_eq!(out.len(), self.grid.num_pixels(), "image length");
        out.fill(0.0);
        for ray in 0..self.num_rays() {
            let v = sino[ray];
            if v == 0.0 {
                continue;
            }
            let lo = self.offsets[ray];
            let hi = self.offsets[ray + 1];
            for k in lo..hi {
                out[self.indices[k] as usize] += self.weights[k] * v;
            }
        }
    }

    pub fn forward(&self, image: &ImageGrid) -> Result<Sinogram> {
        if image.side() != self.grid.side {
            return Err(Error::GeometryMismatch(format!(
                "image side {} does not match projector grid {}",
                image.side(),
                self.grid.side
            )));
        }
        let mut out = vec![0.0; self.num_rays()];
        self.forward_flat(image.flat(), &mut out);
        let values =
            Array2::from_shape_vec((self.geometry.num_angles(), self.geometry.detector_count()), out)
                .unwrap();
        Sinogram::new(self.geometry.clone(), values)
    }

    pub fn adjoint(&self, sino: &Sinogram) -> Result<ImageGrid> {
        if sino.geometry() != &self.geometry {
            return Err(Error::GeometryMismatch(
                "sinogram geometry does not match projector".into(),
            ));
        }
        let mut out = vec![0.0; self.grid.num_pixels()];
        self.adjoint_flat(sino.flat(), &mut out);
        ImageGrid::from_flat(self.grid.side, self.grid.spacing, &out)
    }

    /// Row sums of `A` (forward projection of an all-ones image).
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.num_rays())
            .map(|ray| self.weights[self.offsets[ray]..self.offsets[ray + 1]].iter().sum())
            .collect()
    }

    /// Column sums of `A` (back projection of an all-ones sinogram).
    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.num_pixels()];
        for k in 0..self.indices.len() {
            out[self.indices[k] as usize] += self.weights[k];
        }
        out
    }
}

/// Line integrals of `image` under `geom`. Convenience wrapper that builds
/// the operator on the fly; hold a [`Projector`] in loops.
pub fn forward_project(image: &ImageGrid, geom: &ProjectionGeometry) -> Result<Sinogram> {
    Projector::new(geom.clone(), GridSpec::of(image)).forward(image)
}

/// Exact transpose of [`forward_project`] applied to `sino`.
pub fn back_project(
    sino: &Sinogram,
    geom: &ProjectionGeometry,
    grid: GridSpec,
) -> Result<ImageGrid> {
    Projector::new(geom.clone(), grid).adjoint(sino)
}

/// Maximum grid side for which the dense operator may be materialized.
pub const DENSE_OPERATOR_MAX_SIDE: usize = 64;

/// Materializes the operator as a dense `num_bins x num_pixels` matrix.
/// Intended as a test oracle for small instances only.
pub fn build_dense_operator(geom: &ProjectionGeometry, grid: GridSpec) -> Result<Array2<f64>> {
    if grid.side > DENSE_OPERATOR_MAX_SIDE {
        return Err(Error::invalid(format!(
            "dense operator capped at side {DENSE_OPERATOR_MAX_SIDE}, got {}",
            grid.side
        )));
    }
    let n = geom.num_bins();
    let m = grid.num_pixels();
    let mut a = Array2::zeros((n, m));
    let mut ray = 0;
    for &angle in geom.angles() {
        for u in 0..geom.detector_count() {
            let offset = geom.detector_offset(u);
            let mut row = a.row_mut(ray);
            for_each_ray_sample(grid, angle, offset, |idx, w| {
                row[idx] += w;
            });
            ray += 1;
        }
    }
    Ok(a)
}
