//! LSTM stack with a dense head, batched over windows.
//!
//! Parameters live in one flat buffer so optimizers, soft updates and
//! checkpoints treat a network as a single vector. Per layer the layout is
//! `w_input (4H×I) | w_recurrent (4H×H) | bias (4H)` with gate blocks ordered
//! input, forget, output, candidate; the head follows as `w (O×H) | b (O)`.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::linalg::{mul_nn, mul_nt, mul_tn, sigmoid_in_place, tanh_in_place, Real};
use crate::error::{Error, Result};

static NEXT_REVISION: AtomicU64 = AtomicU64::new(1);

fn fresh_revision() -> u64 {
    NEXT_REVISION.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Identity,
    /// tanh squash into (−1, 1)
    Bounded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub output_activation: OutputActivation,
}

impl NetShape {
    pub fn new(input_dim: usize, hidden: Vec<usize>, output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden,
            output_dim,
            output_activation: OutputActivation::Identity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config(format!("invalid network shape {self:?}")));
        }
        Ok(())
    }

    fn layer_input(&self, l: usize) -> usize {
        if l == 0 {
            self.input_dim
        } else {
            self.hidden[l - 1]
        }
    }

    fn layer_len(&self, l: usize) -> usize {
        let (i, h) = (self.layer_input(l), self.hidden[l]);
        4 * h * i + 4 * h * h + 4 * h
    }

    fn last_hidden(&self) -> usize {
        *self.hidden.last().expect("at least one layer")
    }

    pub fn param_count(&self) -> usize {
        let layers: usize = (0..self.hidden.len()).map(|l| self.layer_len(l)).sum();
        layers + self.output_dim * self.last_hidden() + self.output_dim
    }

    fn layer_offset(&self, l: usize) -> usize {
        (0..l).map(|k| self.layer_len(k)).sum()
    }

    fn head_offset(&self) -> usize {
        self.layer_offset(self.hidden.len())
    }
}

/// Borrowed view of one LSTM layer's parameters (or gradients).
struct LayerView<'a, T> {
    input: usize,
    hidden: usize,
    w_input: &'a [T],
    w_recurrent: &'a [T],
    bias: &'a [T],
}

struct LayerViewMut<'a, T> {
    w_input: &'a mut [T],
    w_recurrent: &'a mut [T],
    bias: &'a mut [T],
}

fn split_layer<T>(buf: &[T], input: usize, hidden: usize) -> LayerView<'_, T> {
    let (w_input, rest) = buf.split_at(4 * hidden * input);
    let (w_recurrent, bias) = rest.split_at(4 * hidden * hidden);
    LayerView {
        input,
        hidden,
        w_input,
        w_recurrent,
        bias,
    }
}

fn split_layer_mut<T>(buf: &mut [T], input: usize, hidden: usize) -> LayerViewMut<'_, T> {
    let (w_input, rest) = buf.split_at_mut(4 * hidden * input);
    let (w_recurrent, bias) = rest.split_at_mut(4 * hidden * hidden);
    LayerViewMut {
        w_input,
        w_recurrent,
        bias,
    }
}

/// All weights of one network.
#[derive(Debug, Clone)]
pub struct NetworkParams<T: Real> {
    shape: NetShape,
    data: Vec<T>,
    revision: u64,
}

impl<T: Real> PartialEq for NetworkParams<T> {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape && self.data == other.data
    }
}

impl<T: Real> NetworkParams<T> {
    pub fn zeros(shape: NetShape) -> Result<Self> {
        shape.validate()?;
        let n = shape.param_count();
        Ok(Self {
            shape,
            data: vec![T::zero(); n],
            revision: fresh_revision(),
        })
    }

    pub fn from_data(shape: NetShape, data: Vec<T>) -> Result<Self> {
        shape.validate()?;
        if data.len() != shape.param_count() {
            return Err(Error::Dimension {
                expected: shape.param_count(),
                got: data.len(),
                context: "parameter vector",
            });
        }
        Ok(Self {
            shape,
            data,
            revision: fresh_revision(),
        })
    }

    /// Glorot-uniform weights per gate block, zero biases except the forget
    /// gate which starts at `forget_bias`.
    pub fn glorot(shape: NetShape, seed: u64, forget_bias: f64) -> Result<Self> {
        let mut p = Self::zeros(shape)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = p.shape.clone();
        let mut sample = |buf: &mut [T], fan_in: usize, fan_out: usize| {
            let limit = glorot_limit(fan_in, fan_out);
            for w in buf.iter_mut() {
                *w = T::of(rng.random_range(-limit..=limit));
            }
        };
        for l in 0..shape.hidden.len() {
            let (input, hidden) = (shape.layer_input(l), shape.hidden[l]);
            let off = shape.layer_offset(l);
            let view = split_layer_mut(&mut p.data[off..off + shape.layer_len(l)], input, hidden);
            for gate in 0..4 {
                sample(&mut view.w_input[gate * hidden * input..(gate + 1) * hidden * input], input, hidden);
                sample(
                    &mut view.w_recurrent[gate * hidden * hidden..(gate + 1) * hidden * hidden],
                    hidden,
                    hidden,
                );
            }
            for b in &mut view.bias[hidden..2 * hidden] {
                *b = T::of(forget_bias);
            }
        }
        let off = shape.head_offset();
        let (h, o) = (shape.last_hidden(), shape.output_dim);
        sample(&mut p.data[off..off + o * h], h, o);
        Ok(p)
    }

    pub fn shape(&self) -> &NetShape {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// Mutable access; invalidates every cache built from these parameters.
    pub fn data_mut(&mut self) -> &mut [T] {
        self.revision = fresh_revision();
        &mut self.data
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn cast<U: Real>(&self) -> NetworkParams<U> {
        NetworkParams {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::of(v.f64())).collect(),
            revision: fresh_revision(),
        }
    }

    /// Head weights (O×H) and bias (O).
    pub fn head(&self) -> (&[T], &[T]) {
        let off = self.shape.head_offset();
        let wlen = self.shape.output_dim * self.shape.last_hidden();
        let (w, b) = self.data[off..].split_at(wlen);
        (w, b)
    }

    pub fn head_mut(&mut self) -> (&mut [T], &mut [T]) {
        let off = self.shape.head_offset();
        let wlen = self.shape.output_dim * self.shape.last_hidden();
        let data = self.data_mut();
        let (w, b) = data[off..].split_at_mut(wlen);
        (w, b)
    }

    fn layer(&self, l: usize) -> LayerView<'_, T> {
        let off = self.shape.layer_offset(l);
        split_layer(
            &self.data[off..off + self.shape.layer_len(l)],
            self.shape.layer_input(l),
            self.shape.hidden[l],
        )
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self ← tau·source + (1 − tau)·self`
    pub fn soft_update_from(&mut self, source: &Self, tau: f64) -> Result<()> {
        if self.shape != source.shape {
            return Err(Error::Config("soft update between differently shaped networks".into()));
        }
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::Config(format!("soft update factor {tau} outside (0, 1]")));
        }
        if tau == 1.0 {
            self.data_mut().copy_from_slice(&source.data);
            return Ok(());
        }
        let (a, b) = (T::of(tau), T::of(1.0 - tau));
        for (t, s) in self.data_mut().iter_mut().zip(&source.data) {
            *t = a * *s + b * *t;
        }
        Ok(())
    }

    /// Euclidean distance between two parameter sets of the same shape.
    pub fn distance(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.f64() - b.f64()).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// `soft_update(target, source, τ)` returning the new target.
pub fn soft_update<T: Real>(target: &NetworkParams<T>, source: &NetworkParams<T>, tau: f64) -> Result<NetworkParams<T>> {
    let mut out = target.clone();
    out.soft_update_from(source, tau)?;
    Ok(out)
}

/// A batch of equal-length input windows, stored time-major: `[t][b][d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowBatch<T> {
    pub seq_len: usize,
    pub batch: usize,
    pub dim: usize,
    pub data: Vec<T>,
}

impl<T: Real> WindowBatch<T> {
    pub fn zeros(seq_len: usize, batch: usize, dim: usize) -> Self {
        Self {
            seq_len,
            batch,
            dim,
            data: vec![T::zero(); seq_len * batch * dim],
        }
    }

    pub fn from_sequences(seqs: &[Vec<Vec<T>>]) -> Result<Self> {
        let batch = seqs.len();
        let seq_len = seqs.first().map_or(0, Vec::len);
        let dim = seqs.first().and_then(|s| s.first()).map_or(0, Vec::len);
        let mut out = Self::zeros(seq_len, batch, dim);
        for (b, seq) in seqs.iter().enumerate() {
            if seq.len() != seq_len {
                return Err(Error::Dimension {
                    expected: seq_len,
                    got: seq.len(),
                    context: "window length",
                });
            }
            for (t, x) in seq.iter().enumerate() {
                if x.len() != dim {
                    return Err(Error::Dimension {
                        expected: dim,
                        got: x.len(),
                        context: "input vector",
                    });
                }
                out.row_mut(t, b).copy_from_slice(x);
            }
        }
        Ok(out)
    }

    pub fn row(&self, t: usize, b: usize) -> &[T] {
        let start = (t * self.batch + b) * self.dim;
        &self.data[start..start + self.dim]
    }

    pub fn row_mut(&mut self, t: usize, b: usize) -> &mut [T] {
        let start = (t * self.batch + b) * self.dim;
        &mut self.data[start..start + self.dim]
    }
}

#[derive(Debug, Clone)]
struct LayerCache<T> {
    /// Post-activation gates, `[t][b][4H]`.
    gates: Vec<T>,
    cell: Vec<T>,
    cell_tanh: Vec<T>,
    hidden: Vec<T>,
}

/// Activations of one forward pass, kept for backpropagation through time.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    revision: u64,
    seq_len: usize,
    batch: usize,
    input: Vec<T>,
    layers: Vec<LayerCache<T>>,
    output: Vec<T>,
}

impl<T: Real> ForwardCache<T> {
    pub fn len(&self) -> usize {
        self.seq_len
    }

    pub fn is_empty(&self) -> bool {
        self.seq_len == 0
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn output(&self) -> &[T] {
        &self.output
    }

    /// Gate activations of `layer` at step `t`, sequence `b`: `[i | f | o | g]`.
    pub fn gates(&self, layer: usize, t: usize, b: usize) -> &[T] {
        let lc = &self.layers[layer];
        let w = lc.gates.len() / (self.seq_len * self.batch);
        let start = (t * self.batch + b) * w;
        &lc.gates[start..start + w]
    }

    pub fn cell(&self, layer: usize, t: usize, b: usize) -> &[T] {
        let lc = &self.layers[layer];
        let w = lc.cell.len() / (self.seq_len * self.batch);
        let start = (t * self.batch + b) * w;
        &lc.cell[start..start + w]
    }

    pub fn hidden(&self, layer: usize, t: usize, b: usize) -> &[T] {
        let lc = &self.layers[layer];
        let w = lc.hidden.len() / (self.seq_len * self.batch);
        let start = (t * self.batch + b) * w;
        &lc.hidden[start..start + w]
    }

    pub fn all_finite(&self) -> bool {
        self.output.iter().all(|v| v.is_finite())
            && self.layers.iter().all(|l| {
                [&l.gates, &l.cell, &l.cell_tanh, &l.hidden]
                    .iter()
                    .all(|buf| buf.iter().all(|v| v.is_finite()))
            })
    }
}

/// Parameter gradient (flat, same layout as the parameters) and optionally
/// the gradient with respect to every input element (`[t][b][d]`).
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    pub params: Vec<T>,
    pub inputs: Option<Vec<T>>,
}

fn layer_forward<T: Real>(p: &LayerView<'_, T>, x: &[T], seq_len: usize, batch: usize) -> LayerCache<T> {
    let (hd, h4) = (p.hidden, 4 * p.hidden);
    let rows = seq_len * batch;
    let mut gates = vec![T::zero(); rows * h4];
    for row in gates.chunks_exact_mut(h4) {
        row.copy_from_slice(p.bias);
    }
    mul_nt(rows, p.input, h4, x, p.w_input, T::one(), &mut gates);
    let mut cell = vec![T::zero(); rows * hd];
    let mut cell_tanh = vec![T::zero(); rows * hd];
    let mut hidden = vec![T::zero(); rows * hd];
    for t in 0..seq_len {
        let step = t * batch;
        if t > 0 {
            let (prev_h, gt) = (&hidden[(step - batch) * hd..step * hd], &mut gates[step * h4..(step + batch) * h4]);
            mul_nt(batch, hd, h4, prev_h, p.w_recurrent, T::one(), gt);
        }
        for g in gates[step * h4..(step + batch) * h4].chunks_exact_mut(h4) {
            sigmoid_in_place(&mut g[..3 * hd]);
            tanh_in_place(&mut g[3 * hd..]);
        }
        for b in 0..batch {
            let row = step + b;
            let g = &gates[row * h4..(row + 1) * h4];
            for j in 0..hd {
                let c_prev = if t > 0 { cell[(row - batch) * hd + j] } else { T::zero() };
                cell[row * hd + j] = g[hd + j] * c_prev + g[j] * g[3 * hd + j];
            }
        }
        let block = step * hd..(step + batch) * hd;
        cell_tanh[block.clone()].copy_from_slice(&cell[block.clone()]);
        tanh_in_place(&mut cell_tanh[block.clone()]);
        for b in 0..batch {
            let row = step + b;
            for j in 0..hd {
                hidden[row * hd + j] = gates[row * h4 + 2 * hd + j] * cell_tanh[row * hd + j];
            }
        }
    }
    LayerCache {
        gates,
        cell,
        cell_tanh,
        hidden,
    }
}

/// Backpropagates one layer. `dh_ext` holds gradients arriving at each
/// hidden state from above. Accumulates into `grad` and returns the input
/// gradient when requested.
#[allow(clippy::too_many_arguments)]
fn layer_backward<T: Real>(
    p: &LayerView<'_, T>,
    cache: &LayerCache<T>,
    x: &[T],
    dh_ext: &[T],
    seq_len: usize,
    batch: usize,
    grad: LayerViewMut<'_, T>,
    want_dx: bool,
) -> Option<Vec<T>> {
    let (hd, h4) = (p.hidden, 4 * p.hidden);
    let rows = seq_len * batch;
    let one = T::one();
    let mut dz = vec![T::zero(); rows * h4];
    let mut dh_rec = vec![T::zero(); batch * hd];
    let mut dc_next = vec![T::zero(); batch * hd];
    for t in (0..seq_len).rev() {
        let step = t * batch;
        for b in 0..batch {
            let row = step + b;
            let g = &cache.gates[row * h4..(row + 1) * h4];
            let dzr = &mut dz[row * h4..(row + 1) * h4];
            for j in 0..hd {
                let (i_g, f_g, o_g, c_g) = (g[j], g[hd + j], g[2 * hd + j], g[3 * hd + j]);
                let k = b * hd + j;
                let dh = dh_ext[row * hd + j] + dh_rec[k];
                let tc = cache.cell_tanh[row * hd + j];
                let dc = dc_next[k] + dh * o_g * (one - tc * tc);
                let c_prev = if t > 0 { cache.cell[(row - batch) * hd + j] } else { T::zero() };
                dzr[j] = dc * c_g * i_g * (one - i_g);
                dzr[hd + j] = dc * c_prev * f_g * (one - f_g);
                dzr[2 * hd + j] = dh * tc * o_g * (one - o_g);
                dzr[3 * hd + j] = dc * i_g * (one - c_g * c_g);
                dc_next[k] = dc * f_g;
            }
        }
        if t > 0 {
            mul_nn(batch, h4, hd, &dz[step * h4..(step + batch) * h4], p.w_recurrent, T::zero(), &mut dh_rec);
        }
    }
    mul_tn(h4, rows, p.input, &dz, x, one, grad.w_input);
    if seq_len > 1 {
        mul_tn(
            h4,
            rows - batch,
            hd,
            &dz[batch * h4..],
            &cache.hidden[..(rows - batch) * hd],
            one,
            grad.w_recurrent,
        );
    }
    for row in dz.chunks_exact(h4) {
        for (gb, d) in grad.bias.iter_mut().zip(row) {
            *gb = *gb + *d;
        }
    }
    want_dx.then(|| {
        let mut dx = vec![T::zero(); rows * p.input];
        mul_nn(rows, h4, p.input, &dz, p.w_input, T::zero(), &mut dx);
        dx
    })
}

impl<T: Real> NetworkParams<T> {
    /// Runs every window from zero state; only the last hidden state of the
    /// top layer feeds the head. Returns `[b][o]` outputs and the cache.
    pub fn forward(&self, batch: &WindowBatch<T>) -> Result<(Vec<T>, ForwardCache<T>)> {
        if batch.dim != self.shape.input_dim {
            return Err(Error::Dimension {
                expected: self.shape.input_dim,
                got: batch.dim,
                context: "network input",
            });
        }
        if batch.seq_len == 0 || batch.batch == 0 {
            return Err(Error::Dimension {
                expected: 1,
                got: 0,
                context: "window length and batch size",
            });
        }
        let (seq_len, nb) = (batch.seq_len, batch.batch);
        let mut layers: Vec<LayerCache<T>> = Vec::with_capacity(self.shape.hidden.len());
        for l in 0..self.shape.hidden.len() {
            let x = if l == 0 { &batch.data } else { &layers[l - 1].hidden };
            let lc = layer_forward(&self.layer(l), x, seq_len, nb);
            layers.push(lc);
        }
        let hd = self.shape.last_hidden();
        let o = self.shape.output_dim;
        let last = &layers.last().expect("layers").hidden[(seq_len - 1) * nb * hd..];
        let (w, bias) = self.head();
        let mut output = vec![T::zero(); nb * o];
        for row in output.chunks_exact_mut(o) {
            row.copy_from_slice(bias);
        }
        mul_nt(nb, hd, o, last, w, T::one(), &mut output);
        if self.shape.output_activation == OutputActivation::Bounded {
            tanh_in_place(&mut output);
        }
        let cache = ForwardCache {
            revision: self.revision,
            seq_len,
            batch: nb,
            input: batch.data.clone(),
            layers,
            output: output.clone(),
        };
        Ok((output, cache))
    }

    pub fn predict(&self, batch: &WindowBatch<T>) -> Result<Vec<T>> {
        Ok(self.forward(batch)?.0)
    }

    fn check_cache(&self, cache: &ForwardCache<T>, out_grad: &[T]) -> Result<()> {
        if cache.revision != self.revision {
            return Err(Error::StaleCache);
        }
        let expected = cache.batch * self.shape.output_dim;
        if out_grad.len() != expected {
            return Err(Error::Dimension {
                expected,
                got: out_grad.len(),
                context: "output gradient",
            });
        }
        Ok(())
    }

    fn head_backward(&self, cache: &ForwardCache<T>, out_grad: &[T], grads: Option<&mut [T]>) -> Vec<T> {
        let (nb, hd, o) = (cache.batch, self.shape.last_hidden(), self.shape.output_dim);
        let mut dpre = out_grad.to_vec();
        if self.shape.output_activation == OutputActivation::Bounded {
            for (d, y) in dpre.iter_mut().zip(&cache.output) {
                *d = *d * (T::one() - *y * *y);
            }
        }
        let last = &cache.layers.last().expect("layers").hidden[(cache.seq_len - 1) * nb * hd..];
        if let Some(g) = grads {
            let (gw, gb) = g.split_at_mut(o * hd);
            mul_tn(o, nb, hd, &dpre, last, T::one(), gw);
            for row in dpre.chunks_exact(o) {
                for (acc, d) in gb.iter_mut().zip(row) {
                    *acc = *acc + *d;
                }
            }
        }
        let (w, _) = self.head();
        let mut dh_last = vec![T::zero(); nb * hd];
        mul_nn(nb, o, hd, &dpre, w, T::zero(), &mut dh_last);
        dh_last
    }

    /// Exact reverse-mode gradients of `Σ out_grad · output` with respect to
    /// every parameter and, if asked, every input element.
    pub fn backward(&self, cache: &ForwardCache<T>, out_grad: &[T], input_grads: bool) -> Result<Gradients<T>> {
        self.check_cache(cache, out_grad)?;
        let (seq_len, nb) = (cache.seq_len, cache.batch);
        let mut grads = vec![T::zero(); self.data.len()];
        let head_off = self.shape.head_offset();
        let dh_last = self.head_backward(cache, out_grad, Some(&mut grads[head_off..]));

        let n_layers = self.shape.hidden.len();
        let top = self.shape.last_hidden();
        let mut dh_ext = vec![T::zero(); seq_len * nb * top];
        dh_ext[(seq_len - 1) * nb * top..].copy_from_slice(&dh_last);
        let mut dx = None;
        for l in (0..n_layers).rev() {
            let x = if l == 0 { &cache.input } else { &cache.layers[l - 1].hidden };
            let off = self.shape.layer_offset(l);
            let len = self.shape.layer_len(l);
            let gview = split_layer_mut(
                &mut grads[off..off + len],
                self.shape.layer_input(l),
                self.shape.hidden[l],
            );
            let want = l > 0 || input_grads;
            dx = layer_backward(&self.layer(l), &cache.layers[l], x, &dh_ext, seq_len, nb, gview, want);
            if l > 0 {
                dh_ext = dx.take().expect("requested");
            }
        }
        Ok(Gradients {
            params: grads,
            inputs: dx,
        })
    }

    /// Gradient with respect to the inputs of the final window step only
    /// (`[b][d]`). Only that step's cells see those inputs, so no recursion
    /// through time is needed.
    pub fn last_step_input_grad(&self, cache: &ForwardCache<T>, out_grad: &[T]) -> Result<Vec<T>> {
        self.check_cache(cache, out_grad)?;
        let (seq_len, nb) = (cache.seq_len, cache.batch);
        let one = T::one();
        let mut dh = self.head_backward(cache, out_grad, None);
        for l in (0..self.shape.hidden.len()).rev() {
            let p = self.layer(l);
            let lc = &cache.layers[l];
            let (hd, h4) = (p.hidden, 4 * p.hidden);
            let base = (seq_len - 1) * nb;
            let mut dz = vec![T::zero(); nb * h4];
            for b in 0..nb {
                let row = base + b;
                let g = &lc.gates[row * h4..(row + 1) * h4];
                let dzr = &mut dz[b * h4..(b + 1) * h4];
                for j in 0..hd {
                    let (i_g, f_g, o_g, c_g) = (g[j], g[hd + j], g[2 * hd + j], g[3 * hd + j]);
                    let d = dh[b * hd + j];
                    let tc = lc.cell_tanh[row * hd + j];
                    let dc = d * o_g * (one - tc * tc);
                    let c_prev = if seq_len > 1 { lc.cell[(row - nb) * hd + j] } else { T::zero() };
                    dzr[j] = dc * c_g * i_g * (one - i_g);
                    dzr[hd + j] = dc * c_prev * f_g * (one - f_g);
                    dzr[2 * hd + j] = d * tc * o_g * (one - o_g);
                    dzr[3 * hd + j] = dc * i_g * (one - c_g * c_g);
                }
            }
            let mut dx = vec![T::zero(); nb * p.input];
            mul_nn(nb, h4, p.input, &dz, p.w_input, T::zero(), &mut dx);
            dh = dx;
        }
        Ok(dh)
    }
}

/// Single-window forward pass.
pub fn forward_window<T: Real>(params: &NetworkParams<T>, inputs: &[Vec<T>]) -> Result<(Vec<T>, ForwardCache<T>)> {
    let batch = WindowBatch::from_sequences(std::slice::from_ref(&inputs.to_vec()))?;
    params.forward(&batch)
}

/// Single-window backward pass: parameter gradients and per-step input gradients.
pub fn backward_window<T: Real>(
    params: &NetworkParams<T>,
    cache: &ForwardCache<T>,
    output_grad: &[T],
) -> Result<(Vec<T>, Vec<Vec<T>>)> {
    let g = params.backward(cache, output_grad, true)?;
    let dim = params.shape().input_dim;
    let inputs = g.inputs.expect("requested").chunks_exact(dim).map(<[T]>::to_vec).collect();
    Ok((g.params, inputs))
}
