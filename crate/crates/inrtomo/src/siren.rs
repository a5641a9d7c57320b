//! Sine-activated MLP over embedded coordinates, with a hand-written
//! reverse-mode pass over a flat weight vector.
//!
//! Layer 1 applies `sin(omega0 * (W x + b))`, later hidden layers
//! `sin(W x + b)`, the final layer is affine. The forward pass records the
//! activations and scaled cosines needed by the backward pass, so no trig is
//! recomputed there. All large buffers live in a reusable [`Tape`] so
//! training loops run allocation-free.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayViewMut2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fastmath;

/// Architecture of a SIREN MLP: `depth` linear layers mapping
/// `input_dim -> hidden_width -> ... -> output_dim`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SirenSpec {
    pub input_dim: usize,
    pub hidden_width: usize,
    /// Number of linear layers; `depth = 2` means one hidden sine layer.
    pub depth: usize,
    pub output_dim: usize,
    /// First-layer frequency scale.
    pub omega0: f64,
}

impl SirenSpec {
    pub fn new(input_dim: usize, hidden_width: usize, depth: usize) -> Self {
        Self { input_dim, hidden_width, depth, output_dim: 1, omega0: 30.0 }
    }

    pub fn with_output_dim(mut self, output_dim: usize) -> Self {
        self.output_dim = output_dim;
        self
    }

    pub fn with_omega0(mut self, omega0: f64) -> Self {
        self.omega0 = omega0;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.depth < 2 {
            return Err(Error::invalid("depth must be >= 2"));
        }
        if self.input_dim == 0 || self.hidden_width == 0 || self.output_dim == 0 {
            return Err(Error::invalid("layer widths must be positive"));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of each linear layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        (0..self.depth)
            .map(|l| {
                let fan_in = if l == 0 { self.input_dim } else { self.hidden_width };
                let fan_out = if l == self.depth - 1 { self.output_dim } else { self.hidden_width };
                (fan_in, fan_out)
            })
            .collect()
    }

    /// Total parameter count `P`.
    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }

    fn layer_omega(&self, layer: usize) -> f64 {
        if layer == 0 {
            self.omega0
        } else {
            1.0
        }
    }
}

/// Flat view of a parameter set; the layout is layer-major, weights
/// row-major, bias after weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    values: Vec<f64>,
}

impl WeightVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(len: usize) -> Self {
        Self { values: vec![0.0; len] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `self += alpha * other`, elementwise.
    pub fn axpy(&mut self, alpha: f64, other: &WeightVector) {
        assert_eq!(self.len(), other.len());
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for a in &mut self.values {
            *a *= alpha;
        }
    }

    /// Writes the spec header followed by the values as little-endian f32.
    pub fn write_binary(&self, spec: &SirenSpec, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(b"INRW")?;
        for v in [spec.input_dim, spec.hidden_width, spec.depth, spec.output_dim] {
            f.write_all(&(v as u32).to_le_bytes())?;
        }
        f.write_all(&(spec.omega0 as f32).to_le_bytes())?;
        f.write_all(&(self.len() as u32).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.len() * 4);
        for v in &self.values {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        f.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary(path: impl AsRef<Path>) -> Result<(Self, SirenSpec)> {
        let mut f = std::fs::File::open(path)?;
        let mut head = [0u8; 28];
        f.read_exact(&mut head)?;
        if &head[0..4] != b"INRW" {
            return Err(Error::UnsupportedFormat("missing INRW magic".into()));
        }
        let word = |i: usize| u32::from_le_bytes(head[4 + 4 * i..8 + 4 * i].try_into().unwrap());
        let spec = SirenSpec {
            input_dim: word(0) as usize,
            hidden_width: word(1) as usize,
            depth: word(2) as usize,
            output_dim: word(3) as usize,
            omega0: f32::from_le_bytes(head[20..24].try_into().unwrap()) as f64,
        };
        let count = word(5) as usize;
        if count != spec.param_count() {
            return Err(Error::UnsupportedFormat(format!(
                "value count {count} does not match architecture ({} expected)",
                spec.param_count()
            )));
        }
        let mut raw = vec![0u8; count * 4];
        f.read_exact(&mut raw)?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Ok((Self { values }, spec))
    }
}

impl From<Vec<f64>> for WeightVector {
    fn from(values: Vec<f64>) -> Self {
        Self { values }
    }
}

/// Reusable buffers for one forward/backward pair at a fixed batch size:
/// per-layer activations and scaled cosines (read by the backward pass),
/// plus ping-pong delta scratch.
#[derive(Debug, Clone)]
pub struct Tape {
    n: usize,
    spec: SirenSpec,
    zbuf: Array2<f64>,
    activations: Vec<Array2<f64>>,
    dcos: Vec<Array2<f64>>,
    delta_a: Array2<f64>,
    delta_b: Array2<f64>,
}

impl Tape {
    pub fn new(spec: SirenSpec, n: usize) -> Self {
        let hidden = spec.depth - 1;
        let w = spec.hidden_width;
        Self {
            n,
            spec,
            zbuf: Array2::zeros((n, w)),
            activations: (0..hidden).map(|_| Array2::zeros((n, w))).collect(),
            dcos: (0..hidden).map(|_| Array2::zeros((n, w))).collect(),
            delta_a: Array2::zeros((n, w)),
            delta_b: Array2::zeros((n, w)),
        }
    }

    pub fn batch_size(&self) -> usize {
        self.n
    }
}

/// Structured parameters of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct SirenParams {
    spec: SirenSpec,
    weights: Vec<Array2<f64>>,
    biases: Vec<Vec<f64>>,
}

impl SirenParams {
    /// Standard SIREN initialization: first layer `U(-1/d, 1/d)`, later
    /// layers `U(-sqrt(6/fan_in)/omega0, sqrt(6/fan_in)/omega0)`, biases
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn init(spec: SirenSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0x51_4e_49_54);
        let mut weights = Vec::with_capacity(spec.depth);
        let mut biases = Vec::with_capacity(spec.depth);
        for (l, (fan_in, fan_out)) in spec.layer_dims().into_iter().enumerate() {
            let limit = if l == 0 {
                1.0 / fan_in as f64
            } else {
                (6.0 / fan_in as f64).sqrt() / spec.omega0
            };
            let mut w = Array2::zeros((fan_out, fan_in));
            for v in w.iter_mut() {
                *v = rng.gen_range(-limit..=limit);
            }
            let b_limit = 1.0 / (fan_in as f64).sqrt();
            let b = (0..fan_out).map(|_| rng.gen_range(-b_limit..=b_limit)).collect();
            weights.push(w);
            biases.push(b);
        }
        Ok(Self { spec, weights, biases })
    }

    pub fn zeros(spec: SirenSpec) -> Result<Self> {
        spec.validate()?;
        let weights = spec
            .layer_dims()
            .iter()
            .map(|&(i, o)| Array2::zeros((o, i)))
            .collect();
        let biases = spec.layer_dims().iter().map(|&(_, o)| vec![0.0; o]).collect();
        Ok(Self { spec, weights, biases })
    }

    pub fn spec(&self) -> &SirenSpec {
        &self.spec
    }

    pub fn weight(&self, layer: usize) -> &Array2<f64> {
        &self.weights[layer]
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        &self.biases[layer]
    }

    pub fn weight_mut(&mut self, layer: usize) -> &mut Array2<f64> {
        &mut self.weights[layer]
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut [f64] {
        &mut self.biases[layer]
    }

    pub fn flatten(&self) -> WeightVector {
        let mut out = Vec::with_capacity(self.spec.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        WeightVector::new(out)
    }

    pub fn from_flat(spec: SirenSpec, flat: &WeightVector) -> Result<Self> {
        spec.validate()?;
        if flat.len() != spec.param_count() {
            return Err(Error::shape(format!(
                "weight vector length {} does not match architecture ({})",
                flat.len(),
                spec.param_count()
            )));
        }
        let mut params = Self::zeros(spec)?;
        params.assign_flat(flat.as_slice());
        Ok(params)
    }

    /// Overwrites the parameters in place from a flat slice of matching
    /// length; avoids reallocating the layer arrays in training loops.
    pub fn assign_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.spec.param_count());
        let mut cursor = 0usize;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let wlen = w.len();
            w.as_slice_mut()
                .unwrap()
                .copy_from_slice(&flat[cursor..cursor + wlen]);
            cursor += wlen;
            let blen = b.len();
            b.copy_from_slice(&flat[cursor..cursor + blen]);
            cursor += blen;
        }
    }

    /// Evaluates the network, reusing tape buffers. `out` must be
    /// `N x output_dim`.
    pub fn forward_into(
        &self,
        features: &Array2<f64>,
        tape: &mut Tape,
        out: &mut Array2<f64>,
    ) -> Result<()> {
        if features.ncols() != self.spec.input_dim {
            return Err(Error::shape(format!(
                "feature width {} does not match input dim {}",
                features.ncols(),
                self.spec.input_dim
            )));
        }
        if tape.spec != self.spec || tape.n != features.nrows() {
            return Err(Error::invalid("tape does not match network and batch"));
        }
        if out.dim() != (tape.n, self.spec.output_dim) {
            return Err(Error::shape("output buffer shape"));
        }
        let hidden = self.spec.depth - 1;
        for l in 0..hidden {
            let omega = self.spec.layer_omega(l);
            {
                let a_prev: &Array2<f64> = if l == 0 { features } else { &tape.activations[l - 1] };
                general_mat_mul(1.0, a_prev, &self.weights[l].t(), 0.0, &mut tape.zbuf);
            }
            let (s, c) = (&mut tape.activations[l], &mut tape.dcos[l]);
            fastmath::sine_layer_slice(
                tape.zbuf.as_slice().unwrap(),
                &self.biases[l],
                omega,
                s.as_slice_mut().unwrap(),
                c.as_slice_mut().unwrap(),
            );
        }
        let a_last: &Array2<f64> = if hidden == 0 { features } else { &tape.activations[hidden - 1] };
        general_mat_mul(1.0, a_last, &self.weights[hidden].t(), 0.0, out);
        let bias = &self.biases[hidden];
        for mut row in out.rows_mut() {
            for (v, b) in row.iter_mut().zip(bias) {
                *v += b;
            }
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network output".into()));
        }
        Ok(())
    }

    /// Convenience wrapper allocating a fresh tape and output buffer.
    pub fn forward(&self, features: &Array2<f64>) -> Result<(Array2<f64>, Tape)> {
        let mut tape = Tape::new(self.spec, features.nrows());
        let mut out = Array2::zeros((features.nrows(), self.spec.output_dim));
        self.forward_into(features, &mut tape, &mut out)?;
        Ok((out, tape))
    }

    /// Gradient of `sum_i g_i . f_i` with respect to every parameter,
    /// written into `grad_out` (flat layout). Optionally also produces the
    /// gradient with respect to the input features. The tape must come from
    /// a matching forward call; its activations are read, its delta scratch
    /// overwritten.
    pub fn backward_into(
        &self,
        features: &Array2<f64>,
        tape: &mut Tape,
        output_grads: &Array2<f64>,
        grad_out: &mut [f64],
        mut input_grads: Option<&mut Array2<f64>>,
    ) -> Result<()> {
        if tape.spec != self.spec || features.nrows() != tape.n {
            return Err(Error::invalid(
                "stale tape: produced by a different forward configuration",
            ));
        }
        if output_grads.dim() != (tape.n, self.spec.output_dim) {
            return Err(Error::shape(format!(
                "output grads {:?}, expected ({}, {})",
                output_grads.dim(),
                tape.n,
                self.spec.output_dim
            )));
        }
        if grad_out.len() != self.spec.param_count() {
            return Err(Error::shape("gradient buffer length"));
        }
        if let Some(g) = input_grads.as_deref() {
            if g.dim() != (tape.n, self.spec.input_dim) {
                return Err(Error::shape("input gradient buffer shape"));
            }
        }

        let hidden = self.spec.depth - 1;
        let dims = self.spec.layer_dims();
        // flat offsets of each layer's weight block
        let mut offsets = Vec::with_capacity(self.spec.depth);
        let mut cursor = 0usize;
        for &(fi, fo) in &dims {
            offsets.push(cursor);
            cursor += fi * fo + fo;
        }

        let write_layer_grads = |grad_out: &mut [f64],
                                 l: usize,
                                 delta: &Array2<f64>,
                                 a_prev: &Array2<f64>| {
            let (fi, fo) = dims[l];
            let off = offsets[l];
            let mut wview =
                ArrayViewMut2::from_shape((fo, fi), &mut grad_out[off..off + fi * fo]).unwrap();
            general_mat_mul(1.0, &delta.t(), a_prev, 0.0, &mut wview);
            let bslice = &mut grad_out[off + fi * fo..off + fi * fo + fo];
            bslice.fill(0.0);
            for row in delta.rows() {
                for (b, d) in bslice.iter_mut().zip(row) {
                    *b += d;
                }
            }
        };

        let layer_input = |l: usize| -> &Array2<f64> {
            if l == 0 {
                features
            } else {
                &tape.activations[l - 1]
            }
        };

        // final affine layer
        write_layer_grads(grad_out, hidden, output_grads, layer_input(hidden));
        if hidden == 0 {
            if let Some(gin) = input_grads.as_deref_mut() {
                general_mat_mul(1.0, output_grads, &self.weights[0], 0.0, gin);
            }
            return Ok(());
        }

        // seed the hidden chain: delta = (g W_last) . dcos[last]
        general_mat_mul(1.0, output_grads, &self.weights[hidden], 0.0, &mut tape.delta_a);
        tape.delta_a *= &tape.dcos[hidden - 1];

        let mut use_a = true;
        for l in (0..hidden).rev() {
            {
                let cur = if use_a { &tape.delta_a } else { &tape.delta_b };
                write_layer_grads(grad_out, l, cur, layer_input(l));
            }
            if l > 0 {
                let (da, db) = (&mut tape.delta_a, &mut tape.delta_b);
                let (cur, next) = if use_a { (&*da, db) } else { (&*db, da) };
                general_mat_mul(1.0, cur, &self.weights[l], 0.0, next);
                *next *= &tape.dcos[l - 1];
                use_a = !use_a;
            } else if let Some(gin) = input_grads.as_deref_mut() {
                let cur = if use_a { &tape.delta_a } else { &tape.delta_b };
                general_mat_mul(1.0, cur, &self.weights[0], 0.0, gin);
            }
        }
        Ok(())
    }

    /// Allocating wrapper around [`backward_into`](Self::backward_into).
    pub fn backward(
        &self,
        features: &Array2<f64>,
        tape: &mut Tape,
        output_grads: &Array2<f64>,
    ) -> Result<WeightVector> {
        let mut grad = WeightVector::zeros(self.spec.param_count());
        self.backward_into(features, tape, output_grads, grad.as_mut_slice(), None)?;
        Ok(grad)
    }

    /// As [`backward`](Self::backward), additionally returning the gradient
    /// with respect to the input features (`N x input_dim`).
    pub fn backward_with_input_grads(
        &self,
        features: &Array2<f64>,
        tape: &mut Tape,
        output_grads: &Array2<f64>,
    ) -> Result<(WeightVector, Array2<f64>)> {
        let mut grad = WeightVector::zeros(self.spec.param_count());
        let mut gin = Array2::zeros((tape.n, self.spec.input_dim));
        self.backward_into(features, tape, output_grads, grad.as_mut_slice(), Some(&mut gin))?;
        Ok((grad, gin))
    }
}
