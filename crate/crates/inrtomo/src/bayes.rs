//! Joint reconstruction through a shared latent Gaussian prior over network
//! weights.
//!
//! Each object `j` keeps a diagonal Gaussian posterior `q(w_j) = N(mu_j,
//! rho_j)` with `rho_j = softplus(pi_j)`. Training alternates E-steps (every
//! node runs `T` Adam iterations on a single-sample data term plus a
//! KL pull toward the prior, nodes in parallel, prior fixed) with a
//! closed-form M-step (the prior mean becomes the average posterior mean,
//! the prior variance the average posterior variance plus the dispersion of
//! the means). All coupling flows through the prior; nodes never read each
//! other.

use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::adam::{adam_step, AdamState};
use crate::embedding::FourierEmbedding;
use crate::error::{Error, Result};
use crate::geometry::Sinogram;
use crate::grid::ImageGrid;
use crate::metrics::{psnr, ssim, SsimConfig};
use crate::projector::{GridSpec, Projector};
use crate::siren::{SirenParams, SirenSpec, Tape, WeightVector};
use crate::train::{NetSpec, ReconResult, TracePoint};

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `d softplus / dx`, the logistic sigmoid.
pub fn softplus_deriv(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`softplus`]: `ln(e^y - 1)`.
pub fn inv_softplus(y: f64) -> f64 {
    assert!(y > 0.0, "softplus is positive");
    y.exp_m1().ln()
}

/// Guard against a fully underflowed posterior variance in gradient
/// denominators.
const RHO_FLOOR: f64 = 1e-30;

/// Per-object posterior parameters and their optimizer state.
#[derive(Debug, Clone)]
pub struct VariationalNode {
    pub id: usize,
    /// Posterior mean.
    pub mu: WeightVector,
    /// Pre-softplus variance parameter; the variance is `softplus(pi)`.
    pub pi: WeightVector,
    adam_mu: AdamState,
    adam_pi: AdamState,
}

impl VariationalNode {
    pub fn new(id: usize, mu: WeightVector, init_variance: f64) -> Self {
        let p = mu.len();
        let pi0 = inv_softplus(init_variance);
        Self {
            id,
            mu,
            pi: WeightVector::new(vec![pi0; p]),
            adam_mu: AdamState::new(p),
            adam_pi: AdamState::new(p),
        }
    }

    pub fn param_count(&self) -> usize {
        self.mu.len()
    }

    /// Element-wise posterior variance `softplus(pi)`.
    pub fn variance(&self) -> WeightVector {
        WeightVector::new(self.pi.as_slice().iter().map(|&p| softplus(p)).collect())
    }
}

/// Shared axis-aligned Gaussian prior over the flat weight vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPrior {
    pub mean: WeightVector,
    pub variance: WeightVector,
}

impl LatentPrior {
    /// Unit prior centered at zero.
    pub fn standard(param_count: usize) -> Self {
        Self {
            mean: WeightVector::zeros(param_count),
            variance: WeightVector::new(vec![1.0; param_count]),
        }
    }

    pub fn write_binary(
        &self,
        spec: &SirenSpec,
        mean_path: impl AsRef<Path>,
        var_path: impl AsRef<Path>,
    ) -> Result<()> {
        self.mean.write_binary(spec, mean_path)?;
        self.variance.write_binary(spec, var_path)?;
        Ok(())
    }

    pub fn read_binary(
        mean_path: impl AsRef<Path>,
        var_path: impl AsRef<Path>,
    ) -> Result<(Self, SirenSpec)> {
        let (mean, spec_a) = WeightVector::read_binary(mean_path)?;
        let (variance, spec_b) = WeightVector::read_binary(var_path)?;
        if spec_a != spec_b || mean.len() != variance.len() {
            return Err(Error::UnsupportedFormat(
                "prior mean/variance files disagree on architecture".into(),
            ));
        }
        if variance.as_slice().iter().any(|&v| !(v > 0.0)) {
            return Err(Error::invalid("prior variance must be positive"));
        }
        Ok((Self { mean, variance }, spec_a))
    }
}

/// Closed-form KL divergence between diagonal Gaussians and its gradients
/// with respect to the first argument's mean and variance.
#[derive(Debug, Clone)]
pub struct KlResult {
    pub value: f64,
    pub grad_mean: WeightVector,
    pub grad_variance: WeightVector,
}

/// `KL(N(q_mean, q_var) || N(p_mean, p_var))` for axis-aligned Gaussians.
pub fn kl_diag_gauss(
    q_mean: &[f64],
    q_var: &[f64],
    p_mean: &[f64],
    p_var: &[f64],
) -> Result<KlResult> {
    let n = q_mean.len();
    if q_var.len() != n || p_mean.len() != n || p_var.len() != n {
        return Err(Error::shape("kl_diag_gauss: length mismatch"));
    }
    if q_var.iter().chain(p_var).any(|&v| !(v > 0.0)) {
        return Err(Error::invalid("kl_diag_gauss: variances must be positive"));
    }
    let mut value = 0.0;
    let mut gm = vec![0.0; n];
    let mut gv = vec![0.0; n];
    for i in 0..n {
        let dm = q_mean[i] - p_mean[i];
        value += 0.5 * ((p_var[i] / q_var[i]).ln() + (q_var[i] + dm * dm) / p_var[i] - 1.0);
        gm[i] = dm / p_var[i];
        gv[i] = 0.5 * (1.0 / p_var[i] - 1.0 / q_var[i]);
    }
    if !value.is_finite() {
        return Err(Error::NonFinite("kl divergence".into()));
    }
    Ok(KlResult {
        value,
        grad_mean: WeightVector::new(gm),
        grad_variance: WeightVector::new(gv),
    })
}

/// Reparameterized draw `w = mu + sqrt(softplus(pi)) * eps`,
/// `eps ~ N(0, I)`.
pub fn sample_weights(node: &VariationalNode, rng: &mut impl Rng) -> WeightVector {
    let mut w = vec![0.0; node.param_count()];
    for i in 0..w.len() {
        let eps: f64 = rng.sample(StandardNormal);
        w[i] = node.mu.as_slice()[i] + softplus(node.pi.as_slice()[i]).sqrt() * eps;
    }
    WeightVector::new(w)
}

/// EM schedule and hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BayesConfig {
    /// EM rounds `R`.
    pub em_rounds: usize,
    /// E-step iterations `T` per round.
    pub e_steps_per_round: usize,
    /// KL weight, balancing data fit against prior coupling.
    pub kl_weight: f64,
    pub lr: f64,
    pub seed: u64,
    pub sigma_floor: f64,
    /// Initial posterior variance `softplus(pi_0)`.
    pub init_variance: f64,
    pub net: NetSpec,
    pub log_every: usize,
    /// Diagnostic switch: keep `pi` fixed during E-steps.
    pub freeze_pi: bool,
}

impl BayesConfig {
    pub fn new(em_rounds: usize, e_steps_per_round: usize, seed: u64) -> Self {
        Self {
            em_rounds,
            e_steps_per_round,
            kl_weight: DESK_KL_WEIGHT,
            lr: 1e-4,
            seed,
            sigma_floor: 1e-12,
            init_variance: 1e-6,
            net: NetSpec::desk_default(),
            log_every: 25,
            freeze_pi: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.em_rounds == 0 || self.e_steps_per_round == 0 {
            return Err(Error::invalid("em_rounds and e_steps_per_round must be >= 1"));
        }
        if self.kl_weight < 0.0 {
            return Err(Error::invalid("kl_weight must be >= 0"));
        }
        if !(self.lr > 0.0) {
            return Err(Error::invalid("lr must be positive"));
        }
        if !(self.init_variance > 0.0) {
            return Err(Error::invalid("init_variance must be positive"));
        }
        Ok(())
    }
}

/// KL weight pinned by a grid search over {1e-8 .. 1e-2} on a held-out
/// ten-member family at desk scale (64x64, 20 angles); see the
/// `tune_kl_weight` example for the protocol.
pub const DESK_KL_WEIGHT: f64 = 1e-5;

/// Buffers reused across E-step iterations of one node.
pub struct EStepWorkspace {
    spec: SirenSpec,
    params: SirenParams,
    tape: Tape,
    out: Array2<f64>,
    out_grads: Array2<f64>,
    features: Arc<Array2<f64>>,
    projector: Arc<Projector>,
    target: Vec<f64>,
    ax: Vec<f64>,
    sample: Vec<f64>,
    rho: Vec<f64>,
    grad_w: WeightVector,
}

impl EStepWorkspace {
    pub fn new(
        spec: SirenSpec,
        features: Arc<Array2<f64>>,
        projector: Arc<Projector>,
        sino: &Sinogram,
    ) -> Result<Self> {
        if sino.geometry() != projector.geometry() {
            return Err(Error::GeometryMismatch(
                "sinogram geometry does not match projector".into(),
            ));
        }
        let n = features.nrows();
        let p = spec.param_count();
        Ok(Self {
            spec,
            params: SirenParams::zeros(spec)?,
            tape: Tape::new(spec, n),
            out: Array2::zeros((n, 1)),
            out_grads: Array2::zeros((n, 1)),
            features,
            projector,
            target: sino.flat().to_vec(),
            ax: vec![0.0; sino.flat().len()],
            sample: vec![0.0; p],
            rho: vec![0.0; p],
            grad_w: WeightVector::zeros(p),
        })
    }

    /// `||A f_w(C) - y||^2` and its weight gradient at the current sample.
    fn data_loss_and_grad_at_sample(&mut self) -> Result<f64> {
        self.params.assign_flat(&self.sample);
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
        self.params.backward_into(
            &self.features,
            &mut self.tape,
            &self.out_grads,
            self.grad_w.as_mut_slice(),
            None,
        )?;
        Ok(loss)
    }

    fn render(&mut self, flat: &[f64], grid: GridSpec) -> Result<ImageGrid> {
        self.params.assign_flat(flat);
        self.params
            .forward_into(&self.features, &mut self.tape, &mut self.out)?;
        ImageGrid::from_flat(grid.side, grid.spacing, self.out.as_slice().unwrap())
    }
}

/// The E-step objective at a fixed noise draw: data term at the
/// reparameterized sample plus `beta` times the KL to the prior. Returns
/// `(total, data_loss, kl)` and writes the analytic gradients for `mu` and
/// `pi`. Public so gradient oracles can drive it with frozen noise.
#[allow(clippy::too_many_arguments)]
pub fn e_step_objective(
    ws: &mut EStepWorkspace,
    mu: &[f64],
    pi: &[f64],
    eps: &[f64],
    prior: &LatentPrior,
    beta: f64,
    grad_mu: &mut [f64],
    grad_pi: &mut [f64],
) -> Result<(f64, f64, f64)> {
    let p = mu.len();
    if pi.len() != p || eps.len() != p || grad_mu.len() != p || grad_pi.len() != p {
        return Err(Error::shape("e_step_objective: length mismatch"));
    }
    for i in 0..p {
        let rho = softplus(pi[i]);
        ws.rho[i] = rho;
        ws.sample[i] = mu[i] + rho.sqrt() * eps[i];
    }
    let loss = ws.data_loss_and_grad_at_sample()?;

    let kl = kl_diag_gauss(mu, &ws.rho, prior.mean.as_slice(), prior.variance.as_slice())?;

    for i in 0..p {
        let gw = ws.grad_w.as_slice()[i];
        grad_mu[i] = gw + beta * kl.grad_mean.as_slice()[i];
        let rho = ws.rho[i].max(RHO_FLOOR);
        let dsp = softplus_deriv(pi[i]);
        // d w / d pi = eps * softplus'(pi) / (2 sqrt(rho))
        grad_pi[i] = gw * eps[i] * dsp / (2.0 * rho.sqrt())
            + beta * kl.grad_variance.as_slice()[i] * dsp;
    }
    let total = loss + beta * kl.value;
    Ok((total, loss, kl.value))
}

/// Loss components of one E-step iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EStepLoss {
    pub iteration: usize,
    pub total: f64,
    pub data: f64,
    pub kl: f64,
}

/// Runs `steps` E-step iterations on one node against a fixed prior.
/// One fresh noise draw per iteration; the node's Adam states carry across
/// calls.
#[allow(clippy::too_many_arguments)]
pub fn e_step(
    node: &mut VariationalNode,
    prior: &LatentPrior,
    ws: &mut EStepWorkspace,
    rng: &mut ChaCha8Rng,
    beta: f64,
    steps: usize,
    lr: f64,
    freeze_pi: bool,
) -> Result<Vec<EStepLoss>> {
    let p = node.param_count();
    if prior.mean.len() != p || ws.spec.param_count() != p {
        return Err(Error::shape("e_step: parameter length mismatch"));
    }
    let mut eps = vec![0.0; p];
    let mut gmu = vec![0.0; p];
    let mut gpi = vec![0.0; p];
    let mut losses = Vec::with_capacity(steps);
    for t in 0..steps {
        for e in eps.iter_mut() {
            *e = rng.sample(StandardNormal);
        }
        let (total, data, kl) = e_step_objective(
            ws,
            node.mu.as_slice(),
            node.pi.as_slice(),
            &eps,
            prior,
            beta,
            &mut gmu,
            &mut gpi,
        )?;
        adam_step(&mut node.adam_mu, node.mu.as_mut_slice(), &gmu, lr)?;
        if !freeze_pi {
            adam_step(&mut node.adam_pi, node.pi.as_mut_slice(), &gpi, lr)?;
        }
        losses.push(EStepLoss { iteration: t, total, data, kl });
    }
    Ok(losses)
}

/// Closed-form prior update from the current posteriors: the mean of the
/// means, and the mean of (variance + squared deviation from the new mean),
/// floored elementwise.
pub fn m_step(nodes: &[&VariationalNode], sigma_floor: f64) -> Result<LatentPrior> {
    if nodes.is_empty() {
        return Err(Error::invalid("m_step needs at least one node"));
    }
    let p = nodes[0].param_count();
    if nodes.iter().any(|n| n.param_count() != p) {
        return Err(Error::shape("m_step: nodes disagree on parameter count"));
    }
    let jn = nodes.len() as f64;
    let mut mean = vec![0.0; p];
    for node in nodes {
        for (m, v) in mean.iter_mut().zip(node.mu.as_slice()) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= jn;
    }
    let mut var = vec![0.0; p];
    for node in nodes {
        let mu = node.mu.as_slice();
        let pi = node.pi.as_slice();
        for i in 0..p {
            let d = mu[i] - mean[i];
            var[i] += softplus(pi[i]) + d * d;
        }
    }
    for v in var.iter_mut() {
        *v = (*v / jn).max(sigma_floor);
    }
    Ok(LatentPrior {
        mean: WeightVector::new(mean),
        variance: WeightVector::new(var),
    })
}

/// One row of the per-round EM trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmRoundPoint {
    pub round: usize,
    /// Sum over nodes of the last single-sample data loss in the round.
    pub data_loss_sum: f64,
    /// Sum over nodes of the KL to the freshly updated prior.
    pub kl_sum: f64,
    /// Surrogate evidence bound `-(data_loss_sum + kl_sum)`.
    pub elbo: f64,
}

/// Everything a joint training run produces.
pub struct BayesOutcome {
    pub results: Vec<ReconResult>,
    pub prior: LatentPrior,
    pub em_trace: Vec<EmRoundPoint>,
    /// Ids of nodes that stopped updating after a numeric failure.
    pub diverged: Vec<usize>,
}

struct NodeState {
    node: VariationalNode,
    ws: EStepWorkspace,
    rng: ChaCha8Rng,
    trace: Vec<TracePoint>,
    last_data_loss: f64,
    diverged: bool,
}

/// Joint variational-EM reconstruction of all sinograms.
///
/// Rounds alternate parallel per-node E-steps with the closed-form prior
/// update; coupling flows only through the prior, and the M-step reduction
/// runs in fixed node order so reruns are bit-identical. The final image of
/// node `j` is rendered from the posterior mode `mu_j`. Ground truths, when
/// given, feed the PSNR/SSIM trace columns.
pub fn train_inr_bayes(
    sinos: &[Sinogram],
    grid: GridSpec,
    cfg: &BayesConfig,
    ground_truths: Option<&[ImageGrid]>,
) -> Result<BayesOutcome> {
    cfg.validate()?;
    if sinos.is_empty() {
        return Err(Error::invalid("need at least one sinogram"));
    }
    if let Some(gts) = ground_truths {
        if gts.len() != sinos.len() {
            return Err(Error::shape("ground truth count != sinogram count"));
        }
    }
    let spec = cfg.net.siren_spec();
    let embedding = cfg.net.embedding(cfg.seed)?;
    let coords = ImageGrid::pixel_centers(grid.side);
    let features = Arc::new(embedding.embed(&coords)?);

    let mut states: Vec<NodeState> = sinos
        .iter()
        .enumerate()
        .map(|(j, sino)| -> Result<NodeState> {
            let projector = Arc::new(Projector::new(sino.geometry().clone(), grid));
            let ws = EStepWorkspace::new(spec, features.clone(), projector, sino)?;
            let mu = SirenParams::init(spec, node_init_seed(cfg.seed, j))?.flatten();
            let node = VariationalNode::new(j, mu, cfg.init_variance);
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(0xE57E_0000 + j as u64);
            Ok(NodeState {
                node,
                ws,
                rng,
                trace: Vec::new(),
                last_data_loss: f64::NAN,
                diverged: false,
            })
        })
        .collect::<Result<_>>()?;

    let mut prior = LatentPrior::standard(spec.param_count());
    let mut em_trace = Vec::with_capacity(cfg.em_rounds);

    for round in 0..cfg.em_rounds {
        let prior_ref = &prior;
        let errors: Vec<(usize, String)> = states
            .par_iter_mut()
            .filter_map(|st| {
                if st.diverged {
                    return None;
                }
                match run_node_round(st, prior_ref, cfg, round, grid, ground_truths) {
                    Ok(()) => None,
                    Err(e) => {
                        st.diverged = true;
                        Some((st.node.id, e.to_string()))
                    }
                }
            })
            .collect();
        for (id, msg) in errors {
            log::warn!("node {id} diverged in round {round}: {msg}");
        }

        let live: Vec<&VariationalNode> = states
            .iter()
            .filter(|s| !s.diverged)
            .map(|s| &s.node)
            .collect();
        if live.is_empty() {
            return Err(Error::Diverged { iteration: round, loss: f64::NAN });
        }
        prior = m_step(&live, cfg.sigma_floor)?;

        let mut data_sum = 0.0;
        let mut kl_sum = 0.0;
        for st in states.iter().filter(|s| !s.diverged) {
            data_sum += st.last_data_loss;
            kl_sum += kl_diag_gauss(
                st.node.mu.as_slice(),
                st.node.variance().as_slice(),
                prior.mean.as_slice(),
                prior.variance.as_slice(),
            )?
            .value;
        }
        em_trace.push(EmRoundPoint {
            round,
            data_loss_sum: data_sum,
            kl_sum,
            elbo: -(data_sum + kl_sum),
        });
    }

    let mut results = Vec::with_capacity(states.len());
    let mut diverged = Vec::new();
    for st in states.iter_mut() {
        if st.diverged {
            diverged.push(st.node.id);
        }
        let image = st.ws.render(st.node.mu.as_slice(), grid)?;
        results.push(ReconResult {
            image,
            weights: st.node.mu.clone(),
            trace: st.trace.clone(),
        });
    }
    Ok(BayesOutcome { results, prior, em_trace, diverged })
}

fn node_init_seed(seed: u64, node: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(node as u64)
}

fn run_node_round(
    st: &mut NodeState,
    prior: &LatentPrior,
    cfg: &BayesConfig,
    round: usize,
    grid: GridSpec,
    ground_truths: Option<&[ImageGrid]>,
) -> Result<()> {
    let losses = e_step(
        &mut st.node,
        prior,
        &mut st.ws,
        &mut st.rng,
        cfg.kl_weight,
        cfg.e_steps_per_round,
        cfg.lr,
        cfg.freeze_pi,
    )?;
    st.last_data_loss = losses.last().map(|l| l.data).unwrap_or(f64::NAN);
    let gt = ground_truths.map(|g| &g[st.node.id]);
    for l in &losses {
        let global = round * cfg.e_steps_per_round + l.iteration;
        let is_last = round + 1 == cfg.em_rounds && l.iteration + 1 == cfg.e_steps_per_round;
        if global % cfg.log_every == 0 || is_last {
            let (p, s) = match gt {
                Some(gt) => {
                    let img = st.ws.render(st.node.mu.as_slice(), grid)?;
                    let range = gt.max().max(1e-12);
                    (
                        Some(psnr(gt, &img, range)?),
                        Some(ssim(gt, &img, &SsimConfig::with_range(range))?),
                    )
                }
                None => (None, None),
            };
            st.trace.push(TracePoint { iteration: global, loss: l.total, psnr: p, ssim: s });
        }
    }
    Ok(())
}

/// Reconstructs a new object against a fixed, previously learned prior.
/// The posterior mean starts at the prior mean; the prior itself is never
/// updated.
pub fn adapt_with_frozen_prior(
    sino: &Sinogram,
    grid: GridSpec,
    prior: &LatentPrior,
    cfg: &BayesConfig,
    iterations: usize,
    ground_truth: Option<&ImageGrid>,
) -> Result<ReconResult> {
    cfg.validate()?;
    if iterations == 0 {
        return Err(Error::invalid("iterations must be >= 1"));
    }
    let spec = cfg.net.siren_spec();
    if prior.mean.len() != spec.param_count() {
        return Err(Error::shape("prior does not match the configured architecture"));
    }
    let embedding = cfg.net.embedding(cfg.seed)?;
    let coords = ImageGrid::pixel_centers(grid.side);
    let features = Arc::new(embedding.embed(&coords)?);
    let projector = Arc::new(Projector::new(sino.geometry().clone(), grid));
    let mut ws = EStepWorkspace::new(spec, features, projector, sino)?;
    let mut node = VariationalNode::new(0, prior.mean.clone(), cfg.init_variance);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(0xADA9_7000);

    let mut trace = Vec::new();
    let mut done = 0;
    while done < iterations {
        let chunk = cfg.log_every.min(iterations - done).max(1);
        let losses = e_step(
            &mut node,
            prior,
            &mut ws,
            &mut rng,
            cfg.kl_weight,
            chunk,
            cfg.lr,
            cfg.freeze_pi,
        )?;
        done += chunk;
        let l = losses.last().unwrap();
        let (p, s) = match ground_truth {
            Some(gt) => {
                let img = ws.render(node.mu.as_slice(), grid)?;
                let range = gt.max().max(1e-12);
                (
                    Some(psnr(gt, &img, range)?),
                    Some(ssim(gt, &img, &SsimConfig::with_range(range))?),
                )
            }
            None => (None, None),
        };
        trace.push(TracePoint { iteration: done - 1, loss: l.total, psnr: p, ssim: s });
    }
    let image = ws.render(node.mu.as_slice(), grid)?;
    Ok(ReconResult { image, weights: node.mu.clone(), trace })
}

/// Pixelwise mean and unbiased variance over `n_samples` posterior draws.
pub fn posterior_uncertainty(
    node: &VariationalNode,
    spec: SirenSpec,
    embedding: &FourierEmbedding,
    grid: GridSpec,
    n_samples: usize,
    seed: u64,
) -> Result<(ImageGrid, ImageGrid)> {
    if n_samples < 2 {
        return Err(Error::invalid("need at least two samples"));
    }
    let coords = ImageGrid::pixel_centers(grid.side);
    let features = embedding.embed(&coords)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x5A3B_1E00);
    let n = features.nrows();
    let mut mean = vec![0.0; n];
    let mut m2 = vec![0.0; n];
    for k in 0..n_samples {
        let w = sample_weights(node, &mut rng);
        let params = SirenParams::from_flat(spec, &w)?;
        let (out, _) = params.forward(&features)?;
        let out = out.as_slice().unwrap();
        // Welford update
        for i in 0..n {
            let delta = out[i] - mean[i];
            mean[i] += delta / (k as f64 + 1.0);
            m2[i] += delta * (out[i] - mean[i]);
        }
    }
    let var: Vec<f64> = m2.iter().map(|v| v / (n_samples as f64 - 1.0)).collect();
    Ok((
        ImageGrid::from_flat(grid.side, grid.spacing, &mean)?,
        ImageGrid::from_flat(grid.side, grid.spacing, &var)?,
    ))
}
