//! Per-object INR fitting: minimize the squared sinogram residual by Adam,
//! differentiating through the projector via its exact adjoint.

use std::sync::Arc;

use ndarray::Array2;

use crate::adam::{adam_step, AdamState};
use crate::embedding::FourierEmbedding;
use crate::error::{Error, Result};
use crate::geometry::Sinogram;
use crate::grid::ImageGrid;
use crate::metrics::{psnr, ssim, SsimConfig};
use crate::projector::{GridSpec, Projector};
use crate::siren::{SirenParams, SirenSpec, Tape, WeightVector};

/// Network family shared by every INR method: a Fourier embedding feeding a
/// SIREN MLP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetSpec {
    pub depth: usize,
    pub width: usize,
    pub num_frequencies: usize,
    pub frequency_scale: f64,
    pub omega0: f64,
}

impl NetSpec {
    /// Desk-scale default, sized so full joint experiments stay in the
    /// minutes range on one CPU core.
    pub fn desk_default() -> Self {
        Self { depth: 4, width: 32, num_frequencies: 16, frequency_scale: 4.0, omega0: 30.0 }
    }

    pub fn siren_spec(&self) -> SirenSpec {
        SirenSpec::new(2 * self.num_frequencies, self.width, self.depth)
            .with_omega0(self.omega0)
    }

    pub fn embedding(&self, seed: u64) -> Result<FourierEmbedding> {
        FourierEmbedding::new(self.num_frequencies, self.frequency_scale, seed)
    }

    pub fn param_count(&self) -> usize {
        self.siren_spec().param_count()
    }
}

/// Training budget and bookkeeping for one reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    pub lr: f64,
    pub seed: u64,
    pub log_every: usize,
    pub net: NetSpec,
}

impl TrainConfig {
    pub fn new(iterations: usize, seed: u64) -> Self {
        Self { iterations, lr: 1e-4, seed, log_every: 25, net: NetSpec::desk_default() }
    }

    fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::invalid("iterations must be >= 1"));
        }
        if !(self.lr > 0.0) {
            return Err(Error::invalid("lr must be positive"));
        }
        Ok(())
    }
}

/// One row of a metric trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub iteration: usize,
    pub loss: f64,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
}

/// Outcome of a reconstruction: the rendered image, the final flat weights,
/// and the metric trace.
#[derive(Debug, Clone)]
pub struct ReconResult {
    pub image: ImageGrid,
    pub weights: WeightVector,
    pub trace: Vec<TracePoint>,
}

impl ReconResult {
    pub fn final_loss(&self) -> f64 {
        self.trace.last().map(|t| t.loss).unwrap_or(f64::NAN)
    }
}

/// Renders a weight vector at all pixel centers of the grid.
pub fn inr_render(
    weights: &WeightVector,
    spec: SirenSpec,
    embedding: &FourierEmbedding,
    grid: GridSpec,
) -> Result<ImageGrid> {
    let params = SirenParams::from_flat(spec, weights)?;
    let coords = ImageGrid::pixel_centers(grid.side);
    let features = embedding.embed(&coords)?;
    let (out, _) = params.forward(&features)?;
    ImageGrid::from_flat(grid.side, grid.spacing, out.as_slice().unwrap())
}

/// Data loss `||A f_w(C) - y||^2` and its weight gradient, computed by
/// back projecting the residual and running the network backward pass.
pub fn data_loss_and_grad(
    weights: &WeightVector,
    spec: SirenSpec,
    features: &Array2<f64>,
    projector: &Projector,
    target: &[f64],
) -> Result<(f64, WeightVector)> {
    let params = SirenParams::from_flat(spec, weights)?;
    let (out, mut tape) = params.forward(features)?;
    let rendered = out.as_slice().unwrap();
    let mut ax = vec![0.0; target.len()];
    projector.forward_flat(rendered, &mut ax);
    let mut loss = 0.0;
    for (a, y) in ax.iter_mut().zip(target) {
        *a -= y;
        loss += *a * *a;
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite("data loss".into()));
    }
    let mut grad_img = vec![0.0; features.nrows()];
    projector.adjoint_flat(&ax, &mut grad_img);
    for g in grad_img.iter_mut() {
        *g *= 2.0;
    }
    let g = Array2::from_shape_vec((features.nrows(), 1), grad_img).unwrap();
    let grads = params.backward(features, &mut tape, &g)?;
    Ok((loss, grads))
}

/// Incremental trainer for one object. Joint methods drive the same stepper
/// so their degenerate cases reduce to a single-object run exactly.
pub struct InrTrainer {
    spec: SirenSpec,
    grid: GridSpec,
    flat: Vec<f64>,
    params: SirenParams,
    adam: AdamState,
    lr: f64,
    features: Arc<Array2<f64>>,
    projector: Arc<Projector>,
    target: Vec<f64>,
    // reusable buffers
    tape: Tape,
    out: Array2<f64>,
    out_grads: Array2<f64>,
    grad: WeightVector,
    ax: Vec<f64>,
}

impl InrTrainer {
    pub fn new(
        initial: WeightVector,
        spec: SirenSpec,
        features: Arc<Array2<f64>>,
        projector: Arc<Projector>,
        sino: &Sinogram,
        lr: f64,
    ) -> Result<Self> {
        if sino.geometry() != projector.geometry() {
            return Err(Error::GeometryMismatch(
                "sinogram geometry does not match projector".into(),
            ));
        }
        let params = SirenParams::from_flat(spec, &initial)?;
        let grid = projector.grid();
        let target = sino.flat().to_vec();
        let n = features.nrows();
        if n != grid.num_pixels() {
            return Err(Error::shape(format!(
                "feature rows {n} do not match grid pixels {}",
                grid.num_pixels()
            )));
        }
        Ok(Self {
            spec,
            grid,
            flat: initial.into_vec(),
            params,
            adam: AdamState::new(spec.param_count()),
            lr,
            features,
            projector,
            target: target.clone(),
            tape: Tape::new(spec, n),
            out: Array2::zeros((n, 1)),
            out_grads: Array2::zeros((n, 1)),
            grad: WeightVector::zeros(spec.param_count()),
            ax: vec![0.0; target.len()],
        })
    }

    pub fn spec(&self) -> SirenSpec {
        self.spec
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn weights(&self) -> WeightVector {
        WeightVector::new(self.flat.clone())
    }

    /// Replaces the weights, keeping optimizer state.
    pub fn set_weights(&mut self, w: &WeightVector) -> Result<()> {
        if w.len() != self.flat.len() {
            return Err(Error::shape("weight length mismatch"));
        }
        self.flat.copy_from_slice(w.as_slice());
        Ok(())
    }

    /// Replaces the weights and resets optimizer state.
    pub fn restart_from(&mut self, w: &WeightVector) -> Result<()> {
        self.set_weights(w)?;
        self.adam = AdamState::new(self.spec.param_count());
        Ok(())
    }

    /// Residual and squared-error loss at the currently assigned params;
    /// fills the output-gradient buffer with `2 A'(A f - y)`.
    fn loss_and_output_grads(&mut self) -> Result<f64> {
        self.params
            .forward_into(&self.features, &mut self.tape, &mut self.out)?;
        self.projector
            .forward_flat(self.out.as_slice().unwrap(), &mut self.ax);
        let mut loss = 0.0;
        for (a, y) in self.ax.iter_mut().zip(&self.target) {
            *a -= *y;
            loss += *a * *a;
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite("data loss".into()));
        }
        let gimg = self.out_grads.as_slice_mut().unwrap();
        self.projector.adjoint_flat(&self.ax, gimg);
        for g in gimg.iter_mut() {
            *g *= 2.0;
        }
        Ok(loss)
    }

    /// Current data loss without stepping.
    pub fn loss(&mut self) -> Result<f64> {
        self.params.assign_flat(&self.flat);
        self.params
            .forward_into(&self.features, &mut self.tape, &mut self.out)?;
        self.projector
            .forward_flat(self.out.as_slice().unwrap(), &mut self.ax);
        let mut loss = 0.0;
        for (a, y) in self.ax.iter().zip(&self.target) {
            let r = a - y;
            loss += r * r;
        }
        Ok(loss)
    }

    /// One Adam step on the data loss; returns the loss before the step.
    pub fn step(&mut self) -> Result<f64> {
        self.params.assign_flat(&self.flat);
        let loss = self.loss_and_output_grads()?;
        self.params.backward_into(
            &self.features,
            &mut self.tape,
            &self.out_grads,
            self.grad.as_mut_slice(),
            None,
        )?;
        adam_step(&mut self.adam, &mut self.flat, self.grad.as_slice(), self.lr)?;
        Ok(loss)
    }

    /// SGD step with the given rate on a caller-supplied weight vector;
    /// used by meta-learning inner loops. Returns the loss at `w`.
    pub fn sgd_step_on(&mut self, w: &mut WeightVector, lr: f64) -> Result<f64> {
        self.params.assign_flat(w.as_slice());
        let loss = self.loss_and_output_grads()?;
        self.params.backward_into(
            &self.features,
            &mut self.tape,
            &self.out_grads,
            self.grad.as_mut_slice(),
            None,
        )?;
        w.axpy(-lr, &self.grad);
        Ok(loss)
    }

    /// Data loss and weight gradient at `w`, leaving the trainer weights
    /// and optimizer untouched.
    pub fn loss_and_grad_at(&mut self, w: &WeightVector) -> Result<(f64, WeightVector)> {
        self.params.assign_flat(w.as_slice());
        let loss = self.loss_and_output_grads()?;
        self.params.backward_into(
            &self.features,
            &mut self.tape,
            &self.out_grads,
            self.grad.as_mut_slice(),
            None,
        )?;
        Ok((loss, self.grad.clone()))
    }

    pub fn render(&mut self) -> Result<ImageGrid> {
        self.params.assign_flat(&self.flat);
        self.params
            .forward_into(&self.features, &mut self.tape, &mut self.out)?;
        ImageGrid::from_flat(self.grid.side, self.grid.spacing, self.out.as_slice().unwrap())
    }
}

/// Shared per-run context: embedded pixel coordinates and the projector.
pub struct SceneContext {
    pub embedding: FourierEmbedding,
    pub features: Arc<Array2<f64>>,
    pub projector: Arc<Projector>,
}

impl SceneContext {
    pub fn new(net: &NetSpec, grid: GridSpec, sino: &Sinogram, seed: u64) -> Result<Self> {
        let embedding = net.embedding(seed)?;
        let coords = ImageGrid::pixel_centers(grid.side);
        let features = Arc::new(embedding.embed(&coords)?);
        let projector = Arc::new(Projector::new(sino.geometry().clone(), grid));
        Ok(Self { embedding, features, projector })
    }
}

/// Records a trace point, rendering metrics against the ground truth when
/// one is supplied.
pub fn trace_point(
    iteration: usize,
    loss: f64,
    trainer: &mut InrTrainer,
    ground_truth: Option<&ImageGrid>,
) -> Result<TracePoint> {
    let (p, s) = match ground_truth {
        Some(gt) => {
            let img = trainer.render()?;
            let range = gt.max().max(1e-12);
            (
                Some(psnr(gt, &img, range)?),
                Some(ssim(gt, &img, &SsimConfig::with_range(range))?),
            )
        }
        None => (None, None),
    };
    Ok(TracePoint { iteration, loss, psnr: p, ssim: s })
}

/// Trains one INR against one sinogram from scratch.
pub fn train_single_inr(
    sino: &Sinogram,
    grid: GridSpec,
    config: &TrainConfig,
    ground_truth: Option<&ImageGrid>,
) -> Result<ReconResult> {
    config.validate()?;
    let ctx = SceneContext::new(&config.net, grid, sino, config.seed)?;
    let spec = config.net.siren_spec();
    let init = SirenParams::init(spec, config.seed)?.flatten();
    let mut trainer = InrTrainer::new(
        init,
        spec,
        ctx.features.clone(),
        ctx.projector.clone(),
        sino,
        config.lr,
    )?;
    let mut trace = Vec::new();
    for it in 0..config.iterations {
        let loss = trainer.step().map_err(|e| match e {
            Error::NonFinite(_) => Error::Diverged { iteration: it, loss: f64::NAN },
            other => other,
        })?;
        if it % config.log_every == 0 || it + 1 == config.iterations {
            trace.push(trace_point(it, loss, &mut trainer, ground_truth)?);
        }
    }
    let image = trainer.render()?;
    Ok(ReconResult { image, weights: trainer.weights(), trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ProjectionGeometry;
    use crate::phantom::disk_phantom;
    use crate::projector::forward_project;

    #[test]
    fn zero_weights_render_zero() {
        let net = NetSpec { depth: 3, width: 8, num_frequencies: 4, frequency_scale: 2.0, omega0: 30.0 };
        let spec = net.siren_spec();
        let emb = net.embedding(5).unwrap();
        let w = WeightVector::zeros(spec.param_count());
        let img = inr_render(&w, spec, &emb, GridSpec::unit(16)).unwrap();
        assert!(img.flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rendering_is_deterministic() {
        let net = NetSpec { depth: 3, width: 8, num_frequencies: 4, frequency_scale: 2.0, omega0: 30.0 };
        let spec = net.siren_spec();
        let emb = net.embedding(5).unwrap();
        let w = SirenParams::init(spec, 9).unwrap().flatten();
        let a = inr_render(&w, spec, &emb, GridSpec::unit(16)).unwrap();
        let b = inr_render(&w, spec, &emb, GridSpec::unit(16)).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn zero_measurement_zero_weights_zero_loss_and_grad() {
        let net = NetSpec { depth: 3, width: 8, num_frequencies: 4, frequency_scale: 2.0, omega0: 30.0 };
        let spec = net.siren_spec();
        let geom = ProjectionGeometry::parallel(6, 180.0, 16).unwrap();
        let sino = Sinogram::zeros(geom.clone());
        let ctx = SceneContext::new(&net, GridSpec::unit(16), &sino, 0).unwrap();
        let w = WeightVector::zeros(spec.param_count());
        let (loss, grad) =
            data_loss_and_grad(&w, spec, &ctx.features, &ctx.projector, sino.flat()).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.as_slice().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn pipeline_gradient_matches_finite_differences() {
        let net = NetSpec { depth: 3, width: 8, num_frequencies: 4, frequency_scale: 2.0, omega0: 30.0 };
        let spec = net.siren_spec();
        let side = 16;
        let img = disk_phantom(side, 0.6, 1.0);
        let geom = ProjectionGeometry::parallel(6, 180.0, side).unwrap();
        let sino = forward_project(&img, &geom).unwrap();
        let ctx = SceneContext::new(&net, GridSpec::unit(side), &sino, 3).unwrap();
        let w = SirenParams::init(spec, 17).unwrap().flatten();
        let (_, grad) =
            data_loss_and_grad(&w, spec, &ctx.features, &ctx.projector, sino.flat()).unwrap();
        let h = 1e-5;
        let f = |wv: &WeightVector| {
            data_loss_and_grad(wv, spec, &ctx.features, &ctx.projector, sino.flat())
                .unwrap()
                .0
        };
        for k in (0..w.len()).step_by(31) {
            let mut plus = w.clone();
            plus.as_mut_slice()[k] += h;
            let mut minus = w.clone();
            minus.as_mut_slice()[k] -= h;
            let fd = (f(&plus) - f(&minus)) / (2.0 * h);
            let an = grad.as_slice()[k];
            let denom = fd.abs().max(an.abs()).max(1e-6);
            assert!(
                ((fd - an) / denom).abs() < 1e-5,
                "param {k}: fd {fd} vs analytic {an}"
            );
        }
    }

    #[test]
    fn same_seed_gives_identical_traces() {
        let side = 16;
        let img = disk_phantom(side, 0.6, 1.0);
        let geom = ProjectionGeometry::parallel(8, 180.0, side).unwrap();
        let sino = forward_project(&img, &geom).unwrap();
        let mut cfg = TrainConfig::new(30, 7);
        cfg.net = NetSpec { depth: 3, width: 8, num_frequencies: 4, frequency_scale: 2.0, omega0: 30.0 };
        cfg.log_every = 5;
        let a = train_single_inr(&sino, GridSpec::unit(side), &cfg, Some(&img)).unwrap();
        let b = train_single_inr(&sino, GridSpec::unit(side), &cfg, Some(&img)).unwrap();
        assert_eq!(a.trace.len(), b.trace.len());
        for (x, y) in a.trace.iter().zip(&b.trace) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn training_reduces_loss() {
        let side = 16;
        let img = disk_phantom(side, 0.6, 1.0);
        let geom = ProjectionGeometry::parallel(10, 180.0, side).unwrap();
        let sino = forward_project(&img, &geom).unwrap();
        let mut cfg = TrainConfig::new(300, 5);
        cfg.net = NetSpec { depth: 3, width: 12, num_frequencies: 6, frequency_scale: 3.0, omega0: 30.0 };
        cfg.lr = 3e-4;
        cfg.log_every = 10;
        let r = train_single_inr(&sino, GridSpec::unit(side), &cfg, None).unwrap();
        let early = r.trace.iter().find(|t| t.iteration == 10).unwrap().loss;
        let last = r.final_loss();
        assert!(last < early, "loss should fall: {early} -> {last}");
    }
}
