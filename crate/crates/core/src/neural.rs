//! Minimal feed-forward network engine: dense layers, tanh/linear
//! activations, manual backprop, Xavier init, and a small binary model
//! format. Two networks are built on top of it:
//!
//! * [`PolicyNet`] — a tiny kernel applied to each pending job's feature
//!   row independently, producing one score per job. A masked softmax over
//!   the scores gives the action distribution, so reordering the jobs
//!   reorders the probabilities with them.
//! * [`ValueNet`] — an ordinary MLP over the flattened observation.
//!
//! Math runs in f64; model files store f32 as documented below.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::NeuralError;
use crate::sim::{ObservationMatrix, JOB_FEATURES};

const MODEL_MAGIC: &[u8; 4] = b"HSCM";
const MODEL_VERSION: u32 = 1;

/// Mask value added to illegal slots before the stable softmax; large
/// enough that their probability underflows to exactly zero.
const MASK_SCORE: f64 = -1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Linear,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the activation output.
    fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Linear => 1.0,
        }
    }

    fn tag(self) -> u8 {
        match self {
            Activation::Tanh => 1,
            Activation::Linear => 0,
        }
    }

    fn from_tag(tag: u8) -> Result<Self, NeuralError> {
        match tag {
            0 => Ok(Activation::Linear),
            1 => Ok(Activation::Tanh),
            t => Err(NeuralError::BadModelFile(format!("unknown activation tag {t}"))),
        }
    }
}

/// One dense layer; weights row-major `(out_dim, in_dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

/// A stack of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
}

/// Per-layer outputs of a forward pass, kept for backprop. Reusable:
/// `forward_into_prefix` overwrites in place without reallocating.
#[derive(Debug, Clone, Default)]
pub struct MlpCache {
    activations: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("cache from a non-empty network")
    }
}

/// Reusable buffers for [`Mlp::backward_prefix_scratch`].
#[derive(Debug, Clone, Default)]
pub struct BackpropScratch {
    d_cur: Vec<f64>,
    d_prev: Vec<f64>,
}

/// Parameter gradients, shape-congruent with an [`Mlp`]. Accumulating
/// semantics: `backward` adds into these buffers.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub d_weights: Vec<Vec<f64>>,
    pub d_biases: Vec<Vec<f64>>,
}

impl MlpGrads {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            d_weights: mlp.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            d_biases: mlp.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    pub fn reset(&mut self) {
        for w in &mut self.d_weights {
            w.fill(0.0);
        }
        for b in &mut self.d_biases {
            b.fill(0.0);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for w in &mut self.d_weights {
            for v in w.iter_mut() {
                *v *= factor;
            }
        }
        for b in &mut self.d_biases {
            for v in b.iter_mut() {
                *v *= factor;
            }
        }
    }

    pub fn add(&mut self, other: &MlpGrads) {
        for (a, b) in self.d_weights.iter_mut().zip(&other.d_weights) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.d_biases.iter_mut().zip(&other.d_biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.d_weights.iter().flatten().all(|v| v.is_finite())
            && self.d_biases.iter().flatten().all(|v| v.is_finite())
    }
}

impl Mlp {
    /// Xavier-uniform weights, zero biases; hidden layers tanh, final layer
    /// linear. Deterministic per seed.
    pub fn init(dims: &[usize], seed: u64) -> Self {
        assert!(dims.len() >= 2, "network needs an input and an output dimension");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for i in 0..dims.len() - 1 {
            let (in_dim, out_dim) = (dims[i], dims[i + 1]);
            let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
            let weights = (0..in_dim * out_dim).map(|_| rng.gen_range(-bound..bound)).collect();
            let activation =
                if i + 2 == dims.len() { Activation::Linear } else { Activation::Tanh };
            layers.push(DenseLayer {
                weights,
                biases: vec![0.0; out_dim],
                in_dim,
                out_dim,
                activation,
            });
        }
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().expect("non-empty network").in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty network").out_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        self.forward_cached_prefix(input, input.len()).output().to_vec()
    }

    pub fn forward_cached(&self, input: &[f64]) -> MlpCache {
        self.forward_cached_prefix(input, input.len())
    }

    /// Forward pass exploiting a known all-zero suffix of the input: only
    /// the first `active_prefix` entries are read in the first layer.
    pub fn forward_cached_prefix(&self, input: &[f64], active_prefix: usize) -> MlpCache {
        let mut cache = MlpCache::default();
        self.forward_into_prefix(input, active_prefix, &mut cache);
        cache
    }

    /// Same as [`Mlp::forward_cached_prefix`] but reusing `cache`'s buffers.
    pub fn forward_into_prefix(&self, input: &[f64], active_prefix: usize, cache: &mut MlpCache) {
        assert_eq!(input.len(), self.input_dim(), "input dimension mismatch");
        cache.activations.resize_with(self.layers.len(), Vec::new);
        for li in 0..self.layers.len() {
            let layer = &self.layers[li];
            let (done, rest) = cache.activations.split_at_mut(li);
            let x: &[f64] = if li == 0 { input } else { &done[li - 1] };
            let limit = if li == 0 { active_prefix } else { x.len() };
            let out = &mut rest[0];
            out.resize(layer.out_dim, 0.0);
            for o in 0..layer.out_dim {
                let row = &layer.weights[o * layer.in_dim..o * layer.in_dim + limit];
                let mut z = layer.biases[o];
                for (w, v) in row.iter().zip(&x[..limit]) {
                    z += w * v;
                }
                out[o] = layer.activation.apply(z);
            }
        }
    }

    /// Accumulate parameter gradients for the upstream gradient `d_out`.
    /// `active_prefix` mirrors the forward call; weight columns beyond it
    /// receive no gradient because their inputs were zero.
    pub fn backward_prefix(
        &self,
        input: &[f64],
        active_prefix: usize,
        cache: &MlpCache,
        d_out: &[f64],
        grads: &mut MlpGrads,
    ) {
        let mut scratch = BackpropScratch::default();
        self.backward_prefix_scratch(input, active_prefix, cache, d_out, grads, &mut scratch);
    }

    /// Same as [`Mlp::backward_prefix`] but reusing `scratch`'s buffers.
    pub fn backward_prefix_scratch(
        &self,
        input: &[f64],
        active_prefix: usize,
        cache: &MlpCache,
        d_out: &[f64],
        grads: &mut MlpGrads,
        scratch: &mut BackpropScratch,
    ) {
        assert_eq!(d_out.len(), self.output_dim(), "upstream gradient dimension mismatch");
        scratch.d_cur.clear();
        scratch.d_cur.extend_from_slice(d_out);
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let y = &cache.activations[li];
            // dz = dy * act'(y)
            for (d, &yo) in scratch.d_cur.iter_mut().zip(y) {
                *d *= layer.activation.grad_from_output(yo);
            }
            let x: &[f64] = if li == 0 { input } else { &cache.activations[li - 1] };
            let limit = if li == 0 { active_prefix } else { x.len() };
            let dw = &mut grads.d_weights[li];
            let db = &mut grads.d_biases[li];
            for o in 0..layer.out_dim {
                db[o] += scratch.d_cur[o];
                let row = &mut dw[o * layer.in_dim..o * layer.in_dim + limit];
                for (slot, &xv) in row.iter_mut().zip(&x[..limit]) {
                    *slot += scratch.d_cur[o] * xv;
                }
            }
            if li == 0 {
                break;
            }
            // dx = W^T dz for the layer below
            scratch.d_prev.clear();
            scratch.d_prev.resize(layer.in_dim, 0.0);
            for o in 0..layer.out_dim {
                let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (dp, &w) in scratch.d_prev.iter_mut().zip(row) {
                    *dp += scratch.d_cur[o] * w;
                }
            }
            std::mem::swap(&mut scratch.d_cur, &mut scratch.d_prev);
        }
    }

    pub fn backward(&self, input: &[f64], cache: &MlpCache, d_out: &[f64], grads: &mut MlpGrads) {
        self.backward_prefix(input, input.len(), cache, d_out, grads);
    }
}

/// Adaptive-moment gradient descent over an [`Mlp`]'s parameters
/// (decay 0.9 / 0.999, epsilon 1e-8).
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(param_count: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One descent step. Parameters stream in a fixed order (per layer:
    /// weights then biases), which keys them to the moment buffers.
    pub fn step(&mut self, mlp: &mut Mlp, grads: &MlpGrads) {
        self.t += 1;
        let (lr, beta1, beta2, eps) = (self.lr, self.beta1, self.beta2, self.eps);
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        let mut cursor = 0usize;
        for (li, layer) in mlp.layers.iter_mut().enumerate() {
            let params = layer.weights.iter_mut().chain(layer.biases.iter_mut());
            let gs = grads.d_weights[li].iter().chain(grads.d_biases[li].iter());
            for (param, &g) in params.zip(gs) {
                let m = &mut self.m[cursor];
                *m = beta1 * *m + (1.0 - beta1) * g;
                let v = &mut self.v[cursor];
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = self.m[cursor] / bc1;
                let v_hat = self.v[cursor] / bc2;
                *param -= lr * m_hat / (v_hat.sqrt() + eps);
                cursor += 1;
            }
        }
        assert_eq!(cursor, self.m.len(), "gradient shape does not match optimizer state");
    }
}

/// Numerically stable softmax over legal slots; illegal slots come out as
/// exactly zero probability.
pub fn masked_softmax(scores: &[f64], legal: &[bool]) -> Result<Vec<f64>, NeuralError> {
    assert_eq!(scores.len(), legal.len());
    let max = scores
        .iter()
        .zip(legal)
        .filter(|(_, &l)| l)
        .map(|(&s, _)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(NeuralError::NoLegalAction);
    }
    let mut probs = vec![0.0; scores.len()];
    let mut sum = 0.0;
    for i in 0..scores.len() {
        let s = if legal[i] { scores[i] } else { MASK_SCORE };
        let e = (s - max).exp();
        probs[i] = e;
        sum += e;
    }
    for p in &mut probs {
        *p /= sum;
    }
    Ok(probs)
}

/// The kernel policy network.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    pub kernel: Mlp,
}

/// Hidden sizes of the kernel, followed by a scalar head.
pub const POLICY_HIDDEN: [usize; 3] = [32, 16, 8];
/// Kernel networks stay tiny; construction asserts this bound.
pub const POLICY_PARAM_BUDGET: usize = 1000;

impl PolicyNet {
    pub fn init(seed: u64) -> Self {
        let dims = [JOB_FEATURES, POLICY_HIDDEN[0], POLICY_HIDDEN[1], POLICY_HIDDEN[2], 1];
        Self::from_kernel(Mlp::init(&dims, seed))
    }

    pub fn from_kernel(kernel: Mlp) -> Self {
        assert_eq!(kernel.output_dim(), 1, "kernel must end in a scalar head");
        let net = Self { kernel };
        assert!(
            net.param_count() < POLICY_PARAM_BUDGET,
            "policy network has {} parameters, budget is {}",
            net.param_count(),
            POLICY_PARAM_BUDGET
        );
        net
    }

    pub fn param_count(&self) -> usize {
        self.kernel.param_count()
    }

    /// Kernel score per slot; illegal slots get the mask value.
    pub fn scores(&self, obs: &ObservationMatrix) -> Vec<f64> {
        obs.rows
            .iter()
            .zip(&obs.legal)
            .map(|(row, &legal)| {
                if legal {
                    self.kernel.forward(row)[0]
                } else {
                    MASK_SCORE
                }
            })
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), NeuralError> {
        save_mlp(path, &self.kernel, JOB_FEATURES as u32, 0)
    }

    pub fn load(path: &Path) -> Result<Self, NeuralError> {
        let (mlp, header) = load_mlp(path)?;
        if header.job_features as usize != JOB_FEATURES {
            return Err(NeuralError::ShapeMismatch(format!(
                "model built for {} job features, this build uses {}",
                header.job_features, JOB_FEATURES
            )));
        }
        if mlp.input_dim() != JOB_FEATURES || mlp.output_dim() != 1 {
            return Err(NeuralError::ShapeMismatch(format!(
                "kernel shape {}x..x{} is not a per-job scorer",
                mlp.input_dim(),
                mlp.output_dim()
            )));
        }
        Ok(Self::from_kernel(mlp))
    }
}

/// Action distribution over observation slots.
pub fn policy_forward(net: &PolicyNet, obs: &ObservationMatrix) -> Result<Vec<f64>, NeuralError> {
    masked_softmax(&net.scores(obs), &obs.legal)
}

/// Draw a slot from the distribution. Deterministic given the RNG state.
pub fn policy_sample<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let draw: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
            acc += p;
            if draw < acc {
                return i;
            }
        }
    }
    // Rounding can leave acc marginally below 1; fall back to the last
    // slot with positive probability.
    last_positive
}

/// Highest-probability slot, ties to the lowest index.
pub fn policy_argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

/// The value network: an MLP over the flattened observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueNet {
    pub mlp: Mlp,
    pub max_obsv: usize,
}

pub const VALUE_HIDDEN: [usize; 3] = [64, 32, 16];

impl ValueNet {
    pub fn init(max_obsv: usize, seed: u64) -> Self {
        let dims =
            [max_obsv * JOB_FEATURES, VALUE_HIDDEN[0], VALUE_HIDDEN[1], VALUE_HIDDEN[2], 1];
        Self { mlp: Mlp::init(&dims, seed), max_obsv }
    }

    pub fn save(&self, path: &Path) -> Result<(), NeuralError> {
        save_mlp(path, &self.mlp, JOB_FEATURES as u32, self.max_obsv as u32)
    }

    pub fn load(path: &Path) -> Result<Self, NeuralError> {
        let (mlp, header) = load_mlp(path)?;
        let max_obsv = header.max_obsv as usize;
        if header.job_features as usize != JOB_FEATURES {
            return Err(NeuralError::ShapeMismatch(format!(
                "model built for {} job features, this build uses {}",
                header.job_features, JOB_FEATURES
            )));
        }
        if mlp.input_dim() != max_obsv * JOB_FEATURES {
            return Err(NeuralError::ShapeMismatch(format!(
                "value input dim {} does not match {} slots of {} features",
                mlp.input_dim(),
                max_obsv,
                JOB_FEATURES
            )));
        }
        Ok(Self { mlp, max_obsv })
    }
}

/// Scalar value estimate for an observation.
pub fn value_forward(net: &ValueNet, obs: &ObservationMatrix) -> f64 {
    assert_eq!(obs.size(), net.max_obsv, "observation size mismatch");
    let flat = obs.flattened();
    let active = active_prefix_len(obs);
    net.mlp.forward_cached_prefix(&flat, active).output()[0]
}

/// Length of the nonzero prefix of the flattened observation: rows past the
/// occupied slots are zero padding.
pub fn active_prefix_len(obs: &ObservationMatrix) -> usize {
    let occupied = obs
        .slot_to_queue_index
        .iter()
        .rposition(|s| s.is_some())
        .map(|i| i + 1)
        .unwrap_or(0);
    occupied * JOB_FEATURES
}

#[derive(Debug, Clone, Copy)]
pub struct ModelHeader {
    pub job_features: u32,
    pub max_obsv: u32,
}

pub fn save_mlp(
    path: &Path,
    mlp: &Mlp,
    job_features: u32,
    max_obsv: u32,
) -> Result<(), NeuralError> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MODEL_MAGIC);
    buf.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    buf.extend_from_slice(&job_features.to_le_bytes());
    buf.extend_from_slice(&max_obsv.to_le_bytes());
    buf.extend_from_slice(&(mlp.layers.len() as u32).to_le_bytes());
    for layer in &mlp.layers {
        buf.extend_from_slice(&(layer.in_dim as u32).to_le_bytes());
        buf.extend_from_slice(&(layer.out_dim as u32).to_le_bytes());
        buf.push(layer.activation.tag());
    }
    for layer in &mlp.layers {
        for &w in &layer.weights {
            buf.extend_from_slice(&(w as f32).to_le_bytes());
        }
        for &b in &layer.biases {
            buf.extend_from_slice(&(b as f32).to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

pub fn load_mlp(path: &Path) -> Result<(Mlp, ModelHeader), NeuralError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut cursor = 0usize;
    let take = |cursor: &mut usize, n: usize| -> Result<&[u8], NeuralError> {
        if *cursor + n > bytes.len() {
            return Err(NeuralError::BadModelFile("truncated file".into()));
        }
        let s = &bytes[*cursor..*cursor + n];
        *cursor += n;
        Ok(s)
    };
    let read_u32 = |cursor: &mut usize| -> Result<u32, NeuralError> {
        let s = take(cursor, 4)?;
        Ok(u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
    };

    if take(&mut cursor, 4)? != MODEL_MAGIC {
        return Err(NeuralError::BadModelFile("bad magic".into()));
    }
    let version = read_u32(&mut cursor)?;
    if version != MODEL_VERSION {
        return Err(NeuralError::BadModelFile(format!("unsupported version {version}")));
    }
    let job_features = read_u32(&mut cursor)?;
    let max_obsv = read_u32(&mut cursor)?;
    let n_layers = read_u32(&mut cursor)? as usize;
    if n_layers == 0 || n_layers > 64 {
        return Err(NeuralError::BadModelFile(format!("implausible layer count {n_layers}")));
    }
    let mut shapes = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let in_dim = read_u32(&mut cursor)? as usize;
        let out_dim = read_u32(&mut cursor)? as usize;
        let act = Activation::from_tag(take(&mut cursor, 1)?[0])?;
        if in_dim == 0 || out_dim == 0 {
            return Err(NeuralError::BadModelFile("zero layer dimension".into()));
        }
        shapes.push((in_dim, out_dim, act));
    }
    let mut layers = Vec::with_capacity(n_layers);
    for (i, &(in_dim, out_dim, activation)) in shapes.iter().enumerate() {
        if i > 0 && shapes[i - 1].1 != in_dim {
            return Err(NeuralError::ShapeMismatch(format!(
                "layer {i} input {} does not chain with previous output {}",
                in_dim,
                shapes[i - 1].1
            )));
        }
        let mut weights = Vec::with_capacity(in_dim * out_dim);
        for _ in 0..in_dim * out_dim {
            let s = take(&mut cursor, 4)?;
            weights.push(f32::from_le_bytes([s[0], s[1], s[2], s[3]]) as f64);
        }
        let mut biases = Vec::with_capacity(out_dim);
        for _ in 0..out_dim {
            let s = take(&mut cursor, 4)?;
            biases.push(f32::from_le_bytes([s[0], s[1], s[2], s[3]]) as f64);
        }
        layers.push(DenseLayer { weights, biases, in_dim, out_dim, activation });
    }
    if cursor != bytes.len() {
        return Err(NeuralError::BadModelFile("trailing bytes".into()));
    }
    Ok((Mlp { layers }, ModelHeader { job_features, max_obsv }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::DEFAULT_MAX_OBSV_SIZE;

    fn random_obs(legal_count: usize, size: usize, seed: u64) -> ObservationMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = vec![[0.0; JOB_FEATURES]; size];
        let mut legal = vec![false; size];
        let mut map = vec![None; size];
        for i in 0..legal_count {
            for f in 0..JOB_FEATURES {
                rows[i][f] = rng.gen::<f64>();
            }
            legal[i] = true;
            map[i] = Some(i);
        }
        ObservationMatrix { rows, legal, slot_to_queue_index: map }
    }

    #[test]
    fn default_policy_parameter_count() {
        let net = PolicyNet::init(0);
        assert_eq!(net.param_count(), 865);
        assert!(net.param_count() < POLICY_PARAM_BUDGET);
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let a = Mlp::init(&[5, 8, 1], 42);
        let b = Mlp::init(&[5, 8, 1], 42);
        assert_eq!(a, b);
        for layer in &a.layers {
            assert!(layer.biases.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let mut mlp = Mlp::init(&[4, 3, 1], 1);
        for layer in &mut mlp.layers {
            layer.weights.fill(0.0);
            layer.biases.fill(0.0);
        }
        assert_eq!(mlp.forward(&[1.0, -2.0, 3.0, 0.5]), vec![0.0]);
    }

    #[test]
    fn forward_is_deterministic() {
        let mlp = Mlp::init(&[5, 8, 1], 9);
        let x = [0.1, 0.2, 0.3, 0.4, 0.5];
        assert_eq!(mlp.forward(&x), mlp.forward(&x));
    }

    #[test]
    fn forward_matches_naive_oracle() {
        // Straightforward re-implementation with nested loops and explicit
        // matrix-vector products.
        let mlp = Mlp::init(&[4, 6, 3, 1], 7);
        let x = vec![0.3, -0.8, 0.05, 0.9];
        let mut cur = x.clone();
        for layer in &mlp.layers {
            let mut next = vec![0.0; layer.out_dim];
            for o in 0..layer.out_dim {
                let mut z = layer.biases[o];
                for i in 0..layer.in_dim {
                    z += layer.weights[o * layer.in_dim + i] * cur[i];
                }
                next[o] = match layer.activation {
                    Activation::Tanh => z.tanh(),
                    Activation::Linear => z,
                };
            }
            cur = next;
        }
        let got = mlp.forward(&x);
        assert!((got[0] - cur[0]).abs() < 1e-12);
    }

    #[test]
    fn prefix_forward_matches_dense() {
        let mlp = Mlp::init(&[20, 8, 1], 3);
        let mut x = vec![0.0; 20];
        for (i, v) in x.iter_mut().enumerate().take(10) {
            *v = (i as f64 + 1.0) / 10.0;
        }
        let dense = mlp.forward_cached(&x);
        let sparse = mlp.forward_cached_prefix(&x, 10);
        assert_eq!(dense.output(), sparse.output());
    }

    #[test]
    fn single_layer_linear_gradient_is_outer_product() {
        let mut mlp = Mlp::init(&[3, 2], 5);
        mlp.layers[0].activation = Activation::Linear;
        let x = [2.0, -1.0, 0.5];
        let cache = mlp.forward_cached(&x);
        let mut grads = MlpGrads::zeros_like(&mlp);
        mlp.backward(&x, &cache, &[1.0, -2.0], &mut grads);
        // dW[o][i] = d_out[o] * x[i]
        let expect = [2.0, -1.0, 0.5, -4.0, 2.0, -1.0];
        for (g, e) in grads.d_weights[0].iter().zip(expect) {
            assert!((g - e).abs() < 1e-12);
        }
        assert_eq!(grads.d_biases[0], vec![1.0, -2.0]);
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_grads() {
        let mlp = Mlp::init(&[4, 6, 1], 2);
        let x = [0.1, 0.4, -0.3, 0.8];
        let cache = mlp.forward_cached(&x);
        let mut grads = MlpGrads::zeros_like(&mlp);
        mlp.backward(&x, &cache, &[0.0], &mut grads);
        assert!(grads.d_weights.iter().flatten().all(|&g| g == 0.0));
        assert!(grads.d_biases.iter().flatten().all(|&g| g == 0.0));
    }

    #[test]
    fn backward_matches_central_differences() {
        // Loss: dot(output, c) for a fixed random c.
        let mut mlp = Mlp::init(&[5, 7, 4, 2], 11);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let loss = |m: &Mlp| -> f64 {
            m.forward(&x).iter().zip(&c).map(|(y, ci)| y * ci).sum()
        };
        let cache = mlp.forward_cached(&x);
        let mut grads = MlpGrads::zeros_like(&mlp);
        mlp.backward(&x, &cache, &c, &mut grads);

        let eps = 1e-5;
        for li in 0..mlp.layers.len() {
            for wi in 0..mlp.layers[li].weights.len() {
                let orig = mlp.layers[li].weights[wi];
                mlp.layers[li].weights[wi] = orig + eps;
                let plus = loss(&mlp);
                mlp.layers[li].weights[wi] = orig - eps;
                let minus = loss(&mlp);
                mlp.layers[li].weights[wi] = orig;
                let numeric = (plus - minus) / (2.0 * eps);
                let analytic = grads.d_weights[li][wi];
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
                assert!(rel < 1e-4, "layer {li} weight {wi}: {analytic} vs {numeric}");
            }
        }
    }

    #[test]
    fn masked_softmax_properties() {
        let scores = vec![1.0, 2.0, 3.0, 4.0];
        let legal = vec![true, false, true, false];
        let probs = masked_softmax(&scores, &legal).unwrap();
        assert_eq!(probs[1], 0.0);
        assert_eq!(probs[3], 0.0);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(probs[2] > probs[0]);
    }

    #[test]
    fn masked_softmax_all_illegal_errors() {
        let err = masked_softmax(&[1.0, 2.0], &[false, false]).unwrap_err();
        assert!(matches!(err, NeuralError::NoLegalAction));
    }

    #[test]
    fn single_legal_slot_gets_probability_one() {
        let net = PolicyNet::init(3);
        let obs = random_obs(1, 16, 1);
        let probs = policy_forward(&net, &obs).unwrap();
        assert_eq!(probs[0], 1.0);
        assert!(probs[1..].iter().all(|&p| p == 0.0));
    }

    #[test]
    fn identical_rows_split_probability() {
        let net = PolicyNet::init(3);
        let mut obs = random_obs(2, 8, 2);
        obs.rows[1] = obs.rows[0];
        let probs = policy_forward(&net, &obs).unwrap();
        assert!((probs[0] - 0.5).abs() < 1e-12);
        assert!((probs[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn permuting_rows_permutes_probabilities() {
        let net = PolicyNet::init(4);
        let obs = random_obs(10, 16, 5);
        let probs = policy_forward(&net, &obs).unwrap();

        let perm: Vec<usize> = vec![7, 3, 0, 9, 1, 4, 8, 2, 6, 5];
        let mut rows = obs.rows.clone();
        let mut legal = obs.legal.clone();
        let map = obs.slot_to_queue_index.clone();
        for (dst, &src) in perm.iter().enumerate() {
            rows[dst] = obs.rows[src];
            legal[dst] = obs.legal[src];
        }
        let permuted = ObservationMatrix { rows, legal, slot_to_queue_index: map };
        let probs_perm = policy_forward(&net, &permuted).unwrap();
        for (dst, &src) in perm.iter().enumerate() {
            assert!((probs_perm[dst] - probs[src]).abs() < 1e-9);
        }
    }

    #[test]
    fn argmax_follows_its_row_under_reordering() {
        let net = PolicyNet::init(6);
        let obs = random_obs(6, 8, 9);
        let probs = policy_forward(&net, &obs).unwrap();
        let winner_row = obs.rows[policy_argmax(&probs)];

        let perm = [5usize, 2, 4, 0, 3, 1];
        let mut rows = obs.rows.clone();
        for (dst, &src) in perm.iter().enumerate() {
            rows[dst] = obs.rows[src];
        }
        let permuted = ObservationMatrix {
            rows,
            legal: obs.legal.clone(),
            slot_to_queue_index: obs.slot_to_queue_index.clone(),
        };
        let probs_perm = policy_forward(&net, &permuted).unwrap();
        assert_eq!(permuted.rows[policy_argmax(&probs_perm)], winner_row);
    }

    #[test]
    fn sample_and_argmax_on_degenerate_distribution() {
        let probs = vec![0.0, 0.0, 1.0, 0.0];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(policy_sample(&probs, &mut rng), 2);
        }
        assert_eq!(policy_argmax(&probs), 2);
    }

    #[test]
    fn argmax_picks_highest() {
        assert_eq!(policy_argmax(&[0.2, 0.5, 0.3]), 1);
        assert_eq!(policy_argmax(&[0.4, 0.4, 0.2]), 0); // tie to lowest index
    }

    #[test]
    fn sample_frequencies_track_uniform_distribution() {
        let probs = vec![0.25, 0.25, 0.25, 0.25];
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut counts = [0usize; 4];
        let n = 100_000;
        for _ in 0..n {
            counts[policy_sample(&probs, &mut rng)] += 1;
        }
        for &c in &counts {
            let freq = c as f64 / n as f64;
            assert!((freq - 0.25).abs() < 0.01, "frequency {freq} too far from 0.25");
        }
    }

    #[test]
    fn value_forward_deterministic_and_matches_oracle() {
        let net = ValueNet::init(16, 21);
        let obs = random_obs(5, 16, 30);
        let a = value_forward(&net, &obs);
        let b = value_forward(&net, &obs);
        assert_eq!(a, b);
        // Dense naive forward over the flattened input.
        let naive = net.mlp.forward(&obs.flattened())[0];
        assert!((a - naive).abs() < 1e-12);
    }

    #[test]
    fn model_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("policy.bin");
        let net = PolicyNet::init(123);
        net.save(&path).unwrap();
        let loaded = PolicyNet::load(&path).unwrap();
        assert_eq!(loaded.kernel.layers.len(), net.kernel.layers.len());
        // f32 storage: reloaded weights match to f32 precision.
        for (a, b) in loaded.kernel.layers.iter().zip(&net.kernel.layers) {
            for (&wa, &wb) in a.weights.iter().zip(&b.weights) {
                assert!((wa - wb).abs() <= (wb.abs() + 1.0) * 1e-6);
            }
        }
        // Saving the loaded net again is byte-identical (f32 fixpoint).
        let path2 = dir.path().join("policy2.bin");
        loaded.save(&path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn load_rejects_garbage_and_mismatches() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        std::fs::write(&path, b"not a model").unwrap();
        assert!(PolicyNet::load(&path).is_err());

        // A value net is not loadable as a policy.
        let vpath = dir.path().join("value.bin");
        ValueNet::init(DEFAULT_MAX_OBSV_SIZE, 0).save(&vpath).unwrap();
        assert!(matches!(PolicyNet::load(&vpath), Err(NeuralError::ShapeMismatch(_))));
    }
}
