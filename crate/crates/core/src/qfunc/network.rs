//! Fully convolutional residual Q-network with hand-written backpropagation.
//!
//! Activations are `(batch · n · n) × channels` matrices, one row per grid
//! position. A 3×3 convolution with zero padding is an im2col gather
//! followed by one matrix product, so forward and backward both reduce to
//! GEMM calls.

use std::fmt::Debug;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis, LinalgScalar, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::env::{encode, mask, StateTensor, CHANNELS};
use crate::graph::PrefixGraph;
use crate::objectives::Objectives;

use super::{QError, QValues, Sample, ValueFunction, Q_CHANNELS};

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"PFXQNET\0";
pub const CHECKPOINT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 3 * 4 + 8 + 8 + 1 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl Precision {
    fn tag(self) -> u8 {
        match self {
            Precision::F32 => 4,
            Precision::F64 => 8,
        }
    }
}

/// Floating-point element type of a network.
pub trait Scalar: num_traits::Float + LinalgScalar + std::ops::AddAssign + Send + Sync + Debug + Default + 'static {
    const PRECISION: Precision;
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn put_le(self, out: &mut Vec<u8>);
    fn get_le(bytes: &[u8]) -> Self;
}

impl Scalar for f32 {
    const PRECISION: Precision = Precision::F32;
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn to_f64(self) -> f64 {
        f64::from(self)
    }
    fn put_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn get_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl Scalar for f64 {
    const PRECISION: Precision = Precision::F64;
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn put_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn get_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

/// Grid width `n`, residual block count and channel width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub n: usize,
    pub blocks: usize,
    pub channels: usize,
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<(), QError> {
        if self.n < 2 || self.channels == 0 {
            return Err(QError::Spec(format!("{self:?}")));
        }
        Ok(())
    }

    /// Named parameter tensors in storage order.
    pub fn slots(&self) -> Vec<Slot> {
        let c = self.channels;
        let mut shapes: Vec<(String, [usize; 2])> = vec![
            ("stem.weight".into(), [9 * CHANNELS, c]),
            ("stem.bias".into(), [1, c]),
        ];
        for j in 0..self.blocks {
            for k in 1..=2 {
                shapes.push((format!("block{j}.conv{k}.weight"), [9 * c, c]));
                shapes.push((format!("block{j}.conv{k}.bias"), [1, c]));
            }
        }
        shapes.push(("head.weight".into(), [c, Q_CHANNELS]));
        shapes.push(("head.bias".into(), [1, Q_CHANNELS]));
        let mut offset = 0;
        shapes
            .into_iter()
            .map(|(name, shape)| {
                let slot = Slot { name, offset, shape };
                offset += shape[0] * shape[1];
                slot
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.slots().last().map_or(0, |s| s.offset + s.len())
    }
}

/// Location of one parameter tensor inside the flat vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Slot {
    pub name: String,
    pub offset: usize,
    pub shape: [usize; 2],
}

impl Slot {
    pub fn len(&self) -> usize {
        self.shape[0] * self.shape[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn is_bias(&self) -> bool {
        self.shape[0] == 1
    }
}

fn stem_w() -> usize {
    0
}

fn block_w(j: usize, k: usize) -> usize {
    2 + 4 * j + 2 * (k - 1)
}

fn head_w(blocks: usize) -> usize {
    2 + 4 * blocks
}

/// Gathers each position's 3×3 neighbourhood into one row; out-of-grid
/// neighbours read as zero. Column index is `tap * cin + channel`.
fn im2col<T: Scalar>(x: ArrayView2<T>, n: usize) -> Array2<T> {
    let cin = x.ncols();
    let rows = x.nrows();
    let src = x.as_standard_layout();
    let src = src.as_slice().expect("standard layout");
    let mut col = Array2::<T>::zeros((rows, 9 * cin));
    let dst = col.as_slice_mut().expect("fresh array");
    let plane = n * n;
    for p in 0..rows {
        let (b, m, l) = (p / plane, (p % plane) / n, p % n);
        for tap in 0..9 {
            let (mm, ll) = ((m + tap / 3).wrapping_sub(1), (l + tap % 3).wrapping_sub(1));
            if mm < n && ll < n {
                let q = b * plane + mm * n + ll;
                let d = p * 9 * cin + tap * cin;
                dst[d..d + cin].copy_from_slice(&src[q * cin..(q + 1) * cin]);
            }
        }
    }
    col
}

/// Adjoint of [`im2col`]: scatters row gradients back onto positions.
fn col2im<T: Scalar>(dcol: &Array2<T>, n: usize, cin: usize) -> Array2<T> {
    let rows = dcol.nrows();
    let src = dcol.as_standard_layout();
    let src = src.as_slice().expect("standard layout");
    let mut dx = Array2::<T>::zeros((rows, cin));
    let dst = dx.as_slice_mut().expect("fresh array");
    let plane = n * n;
    for p in 0..rows {
        let (b, m, l) = (p / plane, (p % plane) / n, p % n);
        for tap in 0..9 {
            let (mm, ll) = ((m + tap / 3).wrapping_sub(1), (l + tap % 3).wrapping_sub(1));
            if mm < n && ll < n {
                let q = b * plane + mm * n + ll;
                let s0 = p * 9 * cin + tap * cin;
                for (d, &g) in dst[q * cin..(q + 1) * cin].iter_mut().zip(&src[s0..s0 + cin]) {
                    *d = *d + g;
                }
            }
        }
    }
    dx
}

fn relu<T: Scalar>(a: &mut Array2<T>) {
    a.mapv_inplace(|v| if v > T::zero() { v } else { T::zero() });
}

/// Zeroes `grad` wherever the post-ReLU activation is not positive.
fn relu_back<T: Scalar>(grad: &mut Array2<T>, act: &Array2<T>) {
    Zip::from(grad).and(act).for_each(|g, &a| {
        if a <= T::zero() {
            *g = T::zero();
        }
    });
}

/// Activations kept by the forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    stem_col: Array2<T>,
    stem_out: Array2<T>,
    blocks: Vec<BlockCache<T>>,
}

#[derive(Debug, Clone)]
struct BlockCache<T> {
    in_col: Array2<T>,
    mid: Array2<T>,
    mid_col: Array2<T>,
    out: Array2<T>,
}

/// Flat parameter vector plus the layer map derived from its spec.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters<T> {
    spec: NetworkSpec,
    slots: Vec<Slot>,
    data: Vec<T>,
}

impl<T: Scalar> Parameters<T> {
    pub fn zeros(spec: NetworkSpec) -> Result<Self, QError> {
        spec.validate()?;
        let slots = spec.slots();
        Ok(Parameters { spec, data: vec![T::zero(); spec.param_count()], slots })
    }

    /// He-normal weights (`std = sqrt(2 / fan_in)`) and zero biases.
    pub fn he_init(spec: NetworkSpec, seed: u64) -> Result<Self, QError> {
        let mut p = Self::zeros(spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for slot in &p.slots {
            if slot.is_bias() {
                continue;
            }
            let std = (2.0 / slot.shape[0] as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("positive std");
            for v in &mut p.data[slot.offset..slot.offset + slot.len()] {
                *v = T::from_f64(normal.sample(&mut rng));
            }
        }
        Ok(p)
    }

    pub fn from_vec(spec: NetworkSpec, data: Vec<T>) -> Result<Self, QError> {
        let mut p = Self::zeros(spec)?;
        if data.len() != p.data.len() {
            return Err(QError::Shape { expected: p.data.len().to_string(), got: data.len().to_string() });
        }
        p.data = data;
        Ok(p)
    }

    pub fn spec(&self) -> NetworkSpec {
        self.spec
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn weight(&self, i: usize) -> ArrayView2<'_, T> {
        let s = &self.slots[i];
        ArrayView2::from_shape(s.shape, &self.data[s.offset..s.offset + s.len()]).expect("slot shape")
    }

    fn bias(&self, i: usize) -> ArrayView1<'_, T> {
        let s = &self.slots[i + 1];
        ArrayView1::from(&self.data[s.offset..s.offset + s.len()])
    }

    fn conv(&self, col: &Array2<T>, w: usize) -> Array2<T> {
        let mut y = col.dot(&self.weight(w));
        y += &self.bias(w);
        y
    }

    fn check_input(&self, x: &ArrayView2<T>) -> Result<(), QError> {
        let plane = self.spec.n * self.spec.n;
        if x.ncols() != CHANNELS || x.nrows() == 0 || x.nrows() % plane != 0 {
            return Err(QError::Shape {
                expected: format!("(k·{plane}) × {CHANNELS}"),
                got: format!("{} × {}", x.nrows(), x.ncols()),
            });
        }
        Ok(())
    }

    fn body_cached(&self, x: ArrayView2<T>) -> Result<ForwardCache<T>, QError> {
        self.check_input(&x)?;
        let n = self.spec.n;
        let stem_col = im2col(x, n);
        let mut stem_out = self.conv(&stem_col, stem_w());
        relu(&mut stem_out);
        let mut blocks: Vec<BlockCache<T>> = Vec::with_capacity(self.spec.blocks);
        for j in 0..self.spec.blocks {
            let h = blocks.last().map_or(&stem_out, |b| &b.out);
            let in_col = im2col(h.view(), n);
            let mut mid = self.conv(&in_col, block_w(j, 1));
            relu(&mut mid);
            let mid_col = im2col(mid.view(), n);
            let mut out = self.conv(&mid_col, block_w(j, 2));
            out += h;
            relu(&mut out);
            blocks.push(BlockCache { in_col, mid, mid_col, out });
        }
        Ok(ForwardCache { stem_col, stem_out, blocks })
    }

    /// Pre-head activations, `(k·n·n) × channels`.
    pub fn body(&self, x: ArrayView2<T>) -> Result<Array2<T>, QError> {
        let mut c = self.body_cached(x)?;
        Ok(c.blocks.pop().map_or(c.stem_out, |b| b.out))
    }

    /// Raw outputs, `(k·n·n) × 4`, before masking.
    pub fn forward(&self, x: ArrayView2<T>) -> Result<Array2<T>, QError> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached(&self, x: ArrayView2<T>) -> Result<(Array2<T>, ForwardCache<T>), QError> {
        let cache = self.body_cached(x)?;
        let h = cache.blocks.last().map_or(&cache.stem_out, |b| &b.out);
        let out = self.conv(h, head_w(self.spec.blocks));
        Ok((out, cache))
    }

    /// Gradient of `sum(dout ⊙ forward(x))` with respect to every parameter,
    /// in flat storage order.
    pub fn backward(&self, cache: &ForwardCache<T>, dout: ArrayView2<T>) -> Result<Vec<T>, QError> {
        let rows = cache.stem_out.nrows();
        if dout.dim() != (rows, Q_CHANNELS) {
            return Err(QError::Shape {
                expected: format!("{rows} × {Q_CHANNELS}"),
                got: format!("{} × {}", dout.nrows(), dout.ncols()),
            });
        }
        let n = self.spec.n;
        let c = self.spec.channels;
        let mut grad = vec![T::zero(); self.data.len()];
        let mut put = |slot: usize, g: Array2<T>, gb: ndarray::Array1<T>| {
            let w = &self.slots[slot];
            let b = &self.slots[slot + 1];
            for (d, v) in grad[w.offset..w.offset + w.len()].iter_mut().zip(g.iter()) {
                *d = *v;
            }
            for (d, v) in grad[b.offset..b.offset + b.len()].iter_mut().zip(gb.iter()) {
                *d = *v;
            }
        };

        let hw = head_w(self.spec.blocks);
        let h_last = cache.blocks.last().map_or(&cache.stem_out, |b| &b.out);
        put(hw, h_last.t().dot(&dout), dout.sum_axis(Axis(0)));
        let mut dh = dout.dot(&self.weight(hw).t());

        for j in (0..self.spec.blocks).rev() {
            let b = &cache.blocks[j];
            relu_back(&mut dh, &b.out);
            put(block_w(j, 2), b.mid_col.t().dot(&dh), dh.sum_axis(Axis(0)));
            let mut dmid = col2im(&dh.dot(&self.weight(block_w(j, 2)).t()), n, c);
            relu_back(&mut dmid, &b.mid);
            put(block_w(j, 1), b.in_col.t().dot(&dmid), dmid.sum_axis(Axis(0)));
            dh = dh + col2im(&dmid.dot(&self.weight(block_w(j, 1)).t()), n, c);
        }

        relu_back(&mut dh, &cache.stem_out);
        put(stem_w(), cache.stem_col.t().dot(&dh), dh.sum_axis(Axis(0)));
        Ok(grad)
    }
}

/// Packs state tensors into network input rows.
pub fn input_rows<T: Scalar>(tensors: &[StateTensor]) -> Array2<T> {
    let n = tensors.first().map_or(0, |t| t.width());
    let plane = n * n;
    let mut x = Array2::<T>::zeros((tensors.len() * plane, CHANNELS));
    for (b, t) in tensors.iter().enumerate() {
        let d = t.data();
        for c in 0..CHANNELS {
            for p in 0..plane {
                x[[b * plane + p, c]] = T::from_f64(d[c * plane + p]);
            }
        }
    }
    x
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<T>,
    v: Vec<T>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(len: usize, lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: vec![T::zero(); len], v: vec![T::zero(); len] }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [T], grad: &[T]) {
        self.t += 1;
        let t = self.t as i32;
        let (b1, b2) = (T::from_f64(self.beta1), T::from_f64(self.beta2));
        let one = T::one();
        let step = T::from_f64(self.lr * (1.0 - self.beta2.powi(t)).sqrt() / (1.0 - self.beta1.powi(t)));
        let eps = T::from_f64(self.eps);
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            *p = *p - step * *m / (v.sqrt() + eps);
        }
    }
}

/// Online and target networks with an Adam optimizer on the online copy.
#[derive(Debug, Clone)]
pub struct ConvQNetwork<T> {
    seed: u64,
    updates: u64,
    local: Parameters<T>,
    target: Parameters<T>,
    adam: Adam<T>,
}

impl<T: Scalar> ConvQNetwork<T> {
    pub fn new(spec: NetworkSpec, seed: u64, lr: f64) -> Result<Self, QError> {
        Ok(Self::from_parameters(Parameters::he_init(spec, seed)?, seed, 0, lr))
    }

    pub fn from_parameters(params: Parameters<T>, seed: u64, updates: u64, lr: f64) -> Self {
        let adam = Adam::new(params.len(), lr);
        ConvQNetwork { seed, updates, target: params.clone(), local: params, adam }
    }

    pub fn spec(&self) -> NetworkSpec {
        self.local.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn params(&self) -> &Parameters<T> {
        &self.local
    }

    pub fn target_params(&self) -> &Parameters<T> {
        &self.target
    }

    fn check_width(&self, g: &PrefixGraph) {
        assert_eq!(g.width(), self.spec().n, "graph width does not match the network");
    }

    fn evaluate(&self, params: &Parameters<T>, gs: &[&PrefixGraph]) -> Vec<QValues> {
        if gs.is_empty() {
            return Vec::new();
        }
        gs.iter().for_each(|g| self.check_width(g));
        let tensors: Vec<StateTensor> = gs.iter().map(|g| encode(g)).collect();
        let out = params.forward(input_rows::<T>(&tensors).view()).expect("input rows match the network shape");
        let per = out.len() / gs.len();
        let flat = out.as_slice().expect("standard layout");
        gs.iter()
            .enumerate()
            .map(|(i, g)| {
                let data = flat[i * per..(i + 1) * per].iter().map(|&v| Scalar::to_f64(v)).collect();
                QValues::from_raw(mask(g), data).expect("output matches the grid")
            })
            .collect()
    }

    /// Serializes the online parameters with a versioned header.
    pub fn to_checkpoint(&self) -> Vec<u8> {
        let spec = self.spec();
        let mut out = Vec::with_capacity(48 + self.local.len() * 8);
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        for v in [spec.n, spec.blocks, spec.channels] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.updates.to_le_bytes());
        out.push(T::PRECISION.tag());
        out.extend_from_slice(&(self.local.len() as u64).to_le_bytes());
        for &v in &self.local.data {
            v.put_le(&mut out);
        }
        out
    }

    /// Restores a network from [`Self::to_checkpoint`] bytes. The target copy
    /// equals the online copy and the optimizer state starts fresh.
    pub fn from_checkpoint(bytes: &[u8], lr: f64) -> Result<Self, QError> {
        let bad = |m: &str| QError::Checkpoint(m.to_string());
        let mut r = bytes;
        let mut take = |k: usize| -> Result<&[u8], QError> {
            if r.len() < k {
                return Err(bad("truncated"));
            }
            let (h, t) = r.split_at(k);
            r = t;
            Ok(h)
        };
        if take(8)? != CHECKPOINT_MAGIC {
            return Err(bad("bad magic"));
        }
        let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().expect("4 bytes"));
        let u64_at = |b: &[u8]| u64::from_le_bytes(b.try_into().expect("8 bytes"));
        let version = u32_at(take(4)?);
        if version != CHECKPOINT_VERSION {
            return Err(QError::Checkpoint(format!("unsupported version {version}")));
        }
        let spec = NetworkSpec {
            n: u32_at(take(4)?) as usize,
            blocks: u32_at(take(4)?) as usize,
            channels: u32_at(take(4)?) as usize,
        };
        let seed = u64_at(take(8)?);
        let updates = u64_at(take(8)?);
        let tag = take(1)?[0];
        if tag != T::PRECISION.tag() {
            return Err(QError::Checkpoint(format!("precision tag {tag} does not match {:?}", T::PRECISION)));
        }
        let count = u64_at(take(8)?) as usize;
        if count != spec.param_count() {
            return Err(bad("parameter count does not match the network shape"));
        }
        let width = usize::from(tag);
        if bytes.len() != HEADER_LEN + count * width {
            return Err(bad("length does not match the header"));
        }
        let data = take(count * width)?.chunks_exact(width).map(T::get_le).collect();
        Ok(Self::from_parameters(Parameters::from_vec(spec, data)?, seed, updates, lr))
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_checkpoint())?;
        f.sync_all()
    }

    pub fn load(path: &Path, lr: f64) -> Result<Self, QError> {
        let bytes = std::fs::read(path).map_err(|e| QError::Checkpoint(e.to_string()))?;
        Self::from_checkpoint(&bytes, lr)
    }
}

impl<T: Scalar> ValueFunction for ConvQNetwork<T> {
    fn width(&self) -> usize {
        self.spec().n
    }

    fn q_values(&self, g: &PrefixGraph) -> QValues {
        self.evaluate(&self.local, &[g]).pop().expect("one state")
    }

    fn target_q_values(&self, g: &PrefixGraph) -> QValues {
        self.evaluate(&self.target, &[g]).pop().expect("one state")
    }

    fn q_values_batch(&self, gs: &[&PrefixGraph]) -> Vec<QValues> {
        self.evaluate(&self.local, gs)
    }

    fn target_q_values_batch(&self, gs: &[&PrefixGraph]) -> Vec<QValues> {
        self.evaluate(&self.target, gs)
    }

    /// One Adam step on the mean over the batch of the summed per-objective
    /// squared errors at the taken actions.
    fn train_step(&mut self, batch: &[Sample<'_>]) -> Objectives {
        if batch.is_empty() {
            return Objectives::ZERO;
        }
        batch.iter().for_each(|s| self.check_width(s.state));
        let n = self.spec().n;
        let plane = n * n;
        let tensors: Vec<StateTensor> = batch.iter().map(|s| encode(s.state)).collect();
        let (out, cache) =
            self.local.forward_cached(input_rows::<T>(&tensors).view()).expect("input rows match the network shape");
        let mut dout = Array2::<T>::zeros(out.dim());
        let k = batch.len() as f64;
        let mut sq = Objectives::ZERO;
        for (i, s) in batch.iter().enumerate() {
            let row = i * plane + s.action.msb * n + s.action.lsb;
            let ch = match s.action.kind {
                crate::env::ActionKind::Add => 0,
                crate::env::ActionKind::Delete => 2,
            };
            let err = [Scalar::to_f64(out[[row, ch]]) - s.target.area, Scalar::to_f64(out[[row, ch + 1]]) - s.target.delay];
            sq = sq + Objectives::new(err[0] * err[0], err[1] * err[1]);
            dout[[row, ch]] = T::from_f64(2.0 * err[0] / k);
            dout[[row, ch + 1]] = T::from_f64(2.0 * err[1] / k);
        }
        let grad = self.local.backward(&cache, dout.view()).expect("shapes come from forward");
        self.adam.step(&mut self.local.data, &grad);
        self.updates += 1;
        sq * (1.0 / k)
    }

    fn sync_target(&mut self) {
        self.target.data.clone_from(&self.local.data);
    }

    fn checkpoint(&self) -> Option<Vec<u8>> {
        Some(self.to_checkpoint())
    }
}

/// A network at either precision, chosen at run time.
#[derive(Debug, Clone)]
pub enum QNet {
    F32(ConvQNetwork<f32>),
    F64(ConvQNetwork<f64>),
}

impl QNet {
    pub fn new(spec: NetworkSpec, precision: Precision, seed: u64, lr: f64) -> Result<Self, QError> {
        Ok(match precision {
            Precision::F32 => QNet::F32(ConvQNetwork::new(spec, seed, lr)?),
            Precision::F64 => QNet::F64(ConvQNetwork::new(spec, seed, lr)?),
        })
    }

    pub fn to_checkpoint(&self) -> Vec<u8> {
        match self {
            QNet::F32(q) => q.to_checkpoint(),
            QNet::F64(q) => q.to_checkpoint(),
        }
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        match self {
            QNet::F32(q) => q.save(path),
            QNet::F64(q) => q.save(path),
        }
    }

    /// Loads a checkpoint at whichever precision it was written in.
    pub fn load(path: &Path, lr: f64) -> Result<Self, QError> {
        let bytes = std::fs::read(path).map_err(|e| QError::Checkpoint(e.to_string()))?;
        match ConvQNetwork::<f32>::from_checkpoint(&bytes, lr) {
            Ok(q) => Ok(QNet::F32(q)),
            Err(_) => ConvQNetwork::<f64>::from_checkpoint(&bytes, lr).map(QNet::F64),
        }
    }
}

macro_rules! delegate {
    ($self:ident, $q:ident => $e:expr) => {
        match $self {
            QNet::F32($q) => $e,
            QNet::F64($q) => $e,
        }
    };
}

impl ValueFunction for QNet {
    fn width(&self) -> usize {
        delegate!(self, q => q.width())
    }
    fn q_values(&self, g: &PrefixGraph) -> QValues {
        delegate!(self, q => q.q_values(g))
    }
    fn target_q_values(&self, g: &PrefixGraph) -> QValues {
        delegate!(self, q => q.target_q_values(g))
    }
    fn q_values_batch(&self, gs: &[&PrefixGraph]) -> Vec<QValues> {
        delegate!(self, q => q.q_values_batch(gs))
    }
    fn target_q_values_batch(&self, gs: &[&PrefixGraph]) -> Vec<QValues> {
        delegate!(self, q => q.target_q_values_batch(gs))
    }
    fn train_step(&mut self, batch: &[Sample<'_>]) -> Objectives {
        delegate!(self, q => q.train_step(batch))
    }
    fn sync_target(&mut self) {
        delegate!(self, q => q.sync_target())
    }
    fn checkpoint(&self) -> Option<Vec<u8>> {
        Some(self.to_checkpoint())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Action;

    fn spec(n: usize, blocks: usize, channels: usize) -> NetworkSpec {
        NetworkSpec { n, blocks, channels }
    }

    #[test]
    fn param_count_is_a_function_of_spec() {
        let s = spec(4, 2, 8);
        assert_eq!(s.param_count(), (36 * 8 + 8) + 2 * 2 * (72 * 8 + 8) + (8 * 4 + 4));
        assert_eq!(Parameters::<f64>::he_init(s, 1).unwrap().len(), s.param_count());
    }

    #[test]
    fn zero_parameters_give_zero_outputs() {
        let p = Parameters::<f64>::zeros(spec(4, 2, 3)).unwrap();
        let g = PrefixGraph::sklansky(4).unwrap();
        let out = p.forward(input_rows::<f64>(&[encode(&g)]).view()).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_shape_for_any_spec() {
        for (b, c) in [(0, 1), (1, 1), (3, 2), (1, 5)] {
            let p = Parameters::<f32>::he_init(spec(6, b, c), 3).unwrap();
            let g = PrefixGraph::ripple(6).unwrap();
            let t = encode(&g);
            let out = p.forward(input_rows::<f32>(&[t.clone(), t]).view()).unwrap();
            assert_eq!(out.dim(), (2 * 36, 4));
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let p = Parameters::<f64>::zeros(spec(4, 1, 2)).unwrap();
        let x = Array2::<f64>::zeros((15, 4));
        assert!(matches!(p.forward(x.view()), Err(QError::Shape { .. })));
        let x = Array2::<f64>::zeros((16, 3));
        assert!(matches!(p.forward(x.view()), Err(QError::Shape { .. })));
    }

    #[test]
    fn masked_positions_are_neg_infinity() {
        let q = ConvQNetwork::<f64>::new(spec(4, 1, 4), 7, 1e-3).unwrap();
        let v = q.q_values(&PrefixGraph::ripple(4).unwrap());
        assert!(v.get(Action::delete(3, 2)).area.is_infinite());
        assert!(v.get(Action::add(3, 2)).area.is_finite());
    }

    #[test]
    fn deterministic_init_and_forward() {
        let g = PrefixGraph::kogge_stone(8).unwrap();
        let a = ConvQNetwork::<f32>::new(spec(8, 2, 4), 11, 1e-3).unwrap().q_values(&g);
        let b = ConvQNetwork::<f32>::new(spec(8, 2, 4), 11, 1e-3).unwrap().q_values(&g);
        assert_eq!(a, b);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let q = ConvQNetwork::<f32>::new(spec(5, 2, 3), 99, 1e-3).unwrap();
        let bytes = q.to_checkpoint();
        let r = ConvQNetwork::<f32>::from_checkpoint(&bytes, 1e-3).unwrap();
        assert_eq!(r.params(), q.params());
        assert_eq!(r.to_checkpoint(), bytes);
        assert!(ConvQNetwork::<f64>::from_checkpoint(&bytes, 1e-3).is_err());
        assert!(ConvQNetwork::<f32>::from_checkpoint(&bytes[..bytes.len() - 1], 1e-3).is_err());
    }

    #[test]
    fn zero_output_gradient_gives_zero_gradient() {
        let p = Parameters::<f64>::he_init(spec(4, 2, 4), 5).unwrap();
        let x = input_rows::<f64>(&[encode(&PrefixGraph::sklansky(4).unwrap())]);
        let (out, cache) = p.forward_cached(x.view()).unwrap();
        let g = p.backward(&cache, Array2::zeros(out.dim()).view()).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn adam_moves_against_the_gradient() {
        let mut adam = Adam::<f64>::new(2, 0.1);
        let mut p = vec![1.0, -1.0];
        adam.step(&mut p, &[1.0, -2.0]);
        assert!((p[0] - 0.9).abs() < 1e-6 && (p[1] + 0.9).abs() < 1e-6);
    }
}
