//! Procedural phantom families: a fixed ellipse layout perturbed per member,
//! standing in for repeat scans of similar subjects.

use rayon::prelude::*;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::ImageGrid;

/// One additive ellipse in normalized `[-1, 1]^2` coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub center: [f64; 2],
    /// Semi-axes along the (rotated) local x and y directions.
    pub axes: [f64; 2],
    /// Rotation in radians.
    pub angle: f64,
    /// Additive intensity in `[0, 1]`.
    pub intensity: f64,
}

/// Family description: a base layout, a relative jitter applied per member,
/// and a seed that makes generation reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomFamilySpec {
    pub side: usize,
    pub base_ellipses: Vec<Ellipse>,
    pub jitter: f64,
    pub count: usize,
    pub seed: u64,
}

impl PhantomFamilySpec {
    /// Default six-ellipse layout with the given jitter.
    pub fn standard(side: usize, count: usize, jitter: f64, seed: u64) -> Self {
        Self { side, base_ellipses: default_ellipse_layout(), jitter, count, seed }
    }

    fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::invalid("family count must be >= 1"));
        }
        if self.side == 0 {
            return Err(Error::invalid("side must be positive"));
        }
        if !(self.jitter >= 0.0) {
            return Err(Error::invalid("jitter must be >= 0"));
        }
        for (i, e) in self.base_ellipses.iter().enumerate() {
            if !(0.0..=1.0).contains(&e.intensity) {
                return Err(Error::invalid(format!(
                    "ellipse {i} intensity {} outside [0, 1]",
                    e.intensity
                )));
            }
            if e.axes[0] <= 0.0 || e.axes[1] <= 0.0 {
                return Err(Error::invalid(format!("ellipse {i} axes must be positive")));
            }
        }
        Ok(())
    }
}

/// Six overlapping ellipses, centrally positioned, additive intensities
/// summing below one in most of the interior.
pub fn default_ellipse_layout() -> Vec<Ellipse> {
    vec![
        Ellipse { center: [0.0, 0.0], axes: [0.75, 0.85], angle: 0.0, intensity: 0.35 },
        Ellipse { center: [-0.25, 0.25], axes: [0.18, 0.28], angle: 0.4, intensity: 0.35 },
        Ellipse { center: [0.28, 0.22], axes: [0.15, 0.22], angle: -0.35, intensity: 0.30 },
        Ellipse { center: [0.0, -0.35], axes: [0.30, 0.14], angle: 0.0, intensity: 0.25 },
        Ellipse { center: [0.05, 0.05], axes: [0.08, 0.08], angle: 0.0, intensity: 0.30 },
        Ellipse { center: [-0.15, -0.12], axes: [0.06, 0.09], angle: 0.7, intensity: 0.30 },
    ]
}

/// Renders additive ellipses with a softened rim (the transition spans the
/// outer 15% of the quadratic form), clamping the sum to `[0, 1]`.
pub fn render_ellipses(side: usize, ellipses: &[Ellipse]) -> ImageGrid {
    const RIM: f64 = 0.15;
    let mut img = ImageGrid::zeros(side);
    let step = 2.0 / side as f64;
    for row in 0..side {
        let y = -1.0 + (row as f64 + 0.5) * step;
        for col in 0..side {
            let x = -1.0 + (col as f64 + 0.5) * step;
            let mut v = 0.0;
            for e in ellipses {
                let (sa, ca) = e.angle.sin_cos();
                let rx = x - e.center[0];
                let ry = y - e.center[1];
                let u = (ca * rx + sa * ry) / e.axes[0];
                let w = (-sa * rx + ca * ry) / e.axes[1];
                let q = u * u + w * w;
                let t = ((1.0 - q) / RIM).clamp(0.0, 1.0);
                v += e.intensity * t * t * (3.0 - 2.0 * t);
            }
            img.values_mut()[[row, col]] = v.clamp(0.0, 1.0);
        }
    }
    img
}

/// Centered disk with a two-pixel smoothed rim; handy as a radially
/// symmetric test object.
pub fn disk_phantom(side: usize, radius: f64, value: f64) -> ImageGrid {
    let mut img = ImageGrid::zeros(side);
    let step = 2.0 / side as f64;
    let rim = 2.0 * step;
    for row in 0..side {
        let y = -1.0 + (row as f64 + 0.5) * step;
        for col in 0..side {
            let x = -1.0 + (col as f64 + 0.5) * step;
            let r = (x * x + y * y).sqrt();
            let t = ((radius - r) / rim).clamp(0.0, 1.0);
            img.values_mut()[[row, col]] = value * t * t * (3.0 - 2.0 * t);
        }
    }
    img
}

/// Generates the family. Member `i` draws its perturbations from an
/// independent stream of the spec seed, so generation order (and
/// parallelism) cannot change the output.
pub fn make_phantom_family(spec: &PhantomFamilySpec) -> Result<Vec<ImageGrid>> {
    spec.validate()?;
    let members: Vec<ImageGrid> = (0..spec.count)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(i as u64);
            let ellipses = perturb_layout(&spec.base_ellipses, spec.jitter, &mut rng);
            render_ellipses(spec.side, &ellipses)
        })
        .collect();
    Ok(members)
}

fn perturb_layout(base: &[Ellipse], jitter: f64, rng: &mut impl Rng) -> Vec<Ellipse> {
    base.iter()
        .map(|e| {
            let eps: Vec<f64> = (0..6).map(|_| standard_normal(rng)).collect();
            let mut a = (e.axes[0] * (1.0 + jitter * eps[2])).max(0.01);
            let mut b = (e.axes[1] * (1.0 + jitter * eps[3])).max(0.01);
            a = a.min(0.98);
            b = b.min(0.98);
            let mut cx = e.center[0] + jitter * eps[0] * e.axes[0];
            let mut cy = e.center[1] + jitter * eps[1] * e.axes[1];
            // keep the ellipse inside the grid after jitter
            let reach = a.max(b);
            let bound = (0.98 - reach).max(0.0);
            cx = cx.clamp(-bound, bound);
            cy = cy.clamp(-bound, bound);
            Ellipse {
                center: [cx, cy],
                axes: [a, b],
                angle: e.angle + jitter * eps[4],
                intensity: (e.intensity * (1.0 + jitter * eps[5])).clamp(0.0, 1.0),
            }
        })
        .collect()
}

/// Box-Muller draw; avoids pulling a distributions dependency into this
/// hot-but-tiny path and keeps the stream layout explicit.
fn standard_normal(rng: &mut impl Rng) -> f64 {
    loop {
        let u1: f64 = rng.gen();
        let u2: f64 = rng.gen();
        if u1 > f64::MIN_POSITIVE {
            return (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        }
    }
}
