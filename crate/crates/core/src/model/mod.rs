//! The hybrid classifier: a factorized 3D CNN branch whose pooled embedding is
//! concatenated with a precomputed interest-point bag-of-words histogram before the
//! final fully connected layer.

mod checkpoint;
mod train;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, STCV_MAGIC, STCV_VERSION};
pub use train::{adam_step, argmax_row, predict, predict_batch, train_epoch, Example};

use crate::dataio::mix64;
use crate::error::{Error, Result};
use crate::nn::{
    conv3d_factorized_backward, conv3d_forward, fc_backward, fc_forward, maxpool3d_backward, maxpool3d_forward,
    softmax_cross_entropy, FactorizedConv3d, PoolArgmax,
};
use crate::tensor::{Matrix, Tensor5};

/// Spatial kernel size of every block; fixed, only the temporal extent is configurable.
pub const SPATIAL_KERNEL: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    /// Output channels of both the temporal and the spatial stage.
    pub channels: usize,
    /// Temporal kernel extent; odd so that same-padding preserves T.
    pub kt: usize,
    /// Non-overlapping max-pool window (T, H, W).
    pub pool: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HybridConfig {
    pub num_classes: usize,
    /// Clip extents (T, H, W).
    pub input: [usize; 3],
    pub blocks: Vec<BlockSpec>,
    pub embed_dim: usize,
    /// Width of the bag-of-words histogram (codebook size).
    pub bow_dim: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for HybridConfig {
    fn default() -> Self {
        let block = |channels| BlockSpec {
            channels,
            kt: 3,
            pool: [2, 2, 2],
        };
        Self {
            num_classes: 5,
            input: [8, 32, 32],
            blocks: vec![block(8), block(16), block(32)],
            embed_dim: 64,
            bow_dim: 64,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            epochs: 30,
            batch_size: 5,
            seed: 0,
        }
    }
}

impl HybridConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.num_classes < 2 {
            return fail(format!("num_classes must be >= 2, got {}", self.num_classes));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1".into());
        }
        if self.input.contains(&0) {
            return fail(format!("input extents must be >= 1, got {:?}", self.input));
        }
        if self.blocks.is_empty() {
            return fail("at least one conv block is required".into());
        }
        for (i, b) in self.blocks.iter().enumerate() {
            if b.channels == 0 || b.kt == 0 || b.kt % 2 == 0 || b.pool.contains(&0) {
                return fail(format!(
                    "block {i}: channels and pool must be >= 1 and kt odd, got {b:?}"
                ));
            }
        }
        if self.embed_dim == 0 || self.bow_dim == 0 {
            return fail("embed_dim and bow_dim must be >= 1".into());
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return fail(format!("lr must be finite and >= 0, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return fail(format!("betas must lie in [0, 1), got {} and {}", self.beta1, self.beta2));
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return fail(format!("eps must be finite and > 0, got {}", self.eps));
        }
        Ok(())
    }

    /// Extents after each block, or a config error naming the block whose pooling empties an axis.
    pub fn feature_dims(&self) -> Result<Vec<[usize; 3]>> {
        let mut dims = self.input;
        let mut all = Vec::with_capacity(self.blocks.len());
        for (i, b) in self.blocks.iter().enumerate() {
            // same padding keeps the extents through the conv stages
            for axis in 0..3 {
                dims[axis] /= b.pool[axis];
            }
            if dims.contains(&0) {
                return Err(Error::Config(format!(
                    "block {i}: pool window {:?} exhausts the feature extents (flatten dimension would be 0)",
                    b.pool
                )));
            }
            all.push(dims);
        }
        Ok(all)
    }

    /// Width of the globally average-pooled CNN feature fed to `fc1`.
    pub fn flatten_dim(&self) -> Result<usize> {
        self.feature_dims()?;
        Ok(self.blocks.last().map_or(1, |b| b.channels))
    }
}

/// Shape and contents of one trainable tensor.
#[derive(Debug, Clone, Copy)]
pub struct ParamView<'a> {
    pub name: &'a str,
    pub shape: &'a [usize],
    pub data: &'a [f64],
}

/// Per-parameter gradients, in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridModel {
    config: HybridConfig,
    blocks: Vec<FactorizedConv3d>,
    fc1_w: Matrix,
    fc1_b: Vec<f64>,
    fusion_w: Matrix,
    fusion_b: Vec<f64>,
    names: Vec<String>,
    shapes: Vec<Vec<usize>>,
    pub adam: AdamState,
}

fn glorot(rng: &mut ChaCha8Rng, data: &mut [f64], fan_in: usize, fan_out: usize) {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound);
    for v in data {
        *v = dist.sample(rng);
    }
}

/// Glorot-uniform weights, zero biases and zeroed optimizer state.
pub fn model_init(cfg: &HybridConfig, seed: u64) -> Result<HybridModel> {
    let mut model = HybridModel::zeros(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ 0x1417_1A11));
    for f in &mut model.blocks {
        let [cmid, cin, kt, _, _] = f.temporal.weights.shape();
        glorot(&mut rng, f.temporal.weights.data_mut(), cin * kt, cmid * kt);
        let [cout, cmid, _, kh, kw] = f.spatial.weights.shape();
        glorot(&mut rng, f.spatial.weights.data_mut(), cmid * kh * kw, cout * kh * kw);
    }
    let (r, c) = (model.fc1_w.rows(), model.fc1_w.cols());
    glorot(&mut rng, model.fc1_w.data_mut(), r, c);
    let (r, c) = (model.fusion_w.rows(), model.fusion_w.cols());
    glorot(&mut rng, model.fusion_w.data_mut(), r, c);
    Ok(model)
}

/// Activations kept from the forward pass for backpropagation.
struct BlockCache {
    input: Tensor5,
    mid: Tensor5,
    /// Post-ReLU conv output; its positive entries mark where the ReLU passed gradient.
    act: Tensor5,
    argmax: PoolArgmax,
}

struct ForwardCache {
    blocks: Vec<BlockCache>,
    pooled_shape: [usize; 5],
    gap: Matrix,
    hidden_pre: Matrix,
    fused: Matrix,
}

impl HybridModel {
    /// All parameters zero; shapes follow `cfg`.
    pub fn zeros(cfg: &HybridConfig) -> Result<Self> {
        cfg.validate()?;
        let flatten = cfg.flatten_dim()?;
        let mut blocks = Vec::with_capacity(cfg.blocks.len());
        let mut names = Vec::new();
        let mut shapes = Vec::new();
        let mut cin = 1;
        for (i, b) in cfg.blocks.iter().enumerate() {
            let k = SPATIAL_KERNEL;
            let f = FactorizedConv3d::zeros(cin, b.channels, b.channels, [b.kt, k, k], [1; 3], [b.kt / 2, k / 2, k / 2])?;
            names.push(format!("block{i}.temporal.weight"));
            shapes.push(f.temporal.weights.shape().to_vec());
            names.push(format!("block{i}.spatial.weight"));
            shapes.push(f.spatial.weights.shape().to_vec());
            names.push(format!("block{i}.spatial.bias"));
            shapes.push(vec![b.channels]);
            blocks.push(f);
            cin = b.channels;
        }
        let fused = cfg.embed_dim + cfg.bow_dim;
        for (name, shape) in [
            ("fc1.weight", vec![flatten, cfg.embed_dim]),
            ("fc1.bias", vec![cfg.embed_dim]),
            ("fusion.weight", vec![fused, cfg.num_classes]),
            ("fusion.bias", vec![cfg.num_classes]),
        ] {
            names.push(name.to_string());
            shapes.push(shape);
        }
        let mut model = Self {
            config: cfg.clone(),
            blocks,
            fc1_w: Matrix::zeros(flatten, cfg.embed_dim),
            fc1_b: vec![0.0; cfg.embed_dim],
            fusion_w: Matrix::zeros(fused, cfg.num_classes),
            fusion_b: vec![0.0; cfg.num_classes],
            names,
            shapes,
            adam: AdamState::default(),
        };
        model.reset_optimizer();
        Ok(model)
    }

    pub fn config(&self) -> &HybridConfig {
        &self.config
    }

    pub fn reset_optimizer(&mut self) {
        let zeros: Vec<Vec<f64>> = self.shapes.iter().map(|s| vec![0.0; s.iter().product()]).collect();
        self.adam = AdamState {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        };
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    /// Trainable tensors in declaration order.
    pub fn params(&self) -> Vec<ParamView<'_>> {
        let mut data: Vec<&[f64]> = Vec::with_capacity(self.names.len());
        for f in &self.blocks {
            data.push(f.temporal.weights.data());
            data.push(f.spatial.weights.data());
            data.push(&f.spatial.bias);
        }
        data.extend([self.fc1_w.data(), &self.fc1_b[..], self.fusion_w.data(), &self.fusion_b[..]]);
        self.names
            .iter()
            .zip(&self.shapes)
            .zip(data)
            .map(|((name, shape), data)| ParamView { name, shape, data })
            .collect()
    }

    /// Mutable trainable tensors in declaration order.
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(self.names.len());
        for f in &mut self.blocks {
            out.push(f.temporal.weights.data_mut());
            out.push(f.spatial.weights.data_mut());
            out.push(&mut f.spatial.bias);
        }
        out.push(self.fc1_w.data_mut());
        out.push(&mut self.fc1_b);
        out.push(self.fusion_w.data_mut());
        out.push(&mut self.fusion_b);
        out
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|p| p.data.iter().all(|v| v.is_finite()))
    }

    fn check_inputs(&self, clips: &Tensor5, bow: &Matrix) -> Result<()> {
        let [n, c, t, h, w] = clips.shape();
        let [et, eh, ew] = self.config.input;
        if c != 1 || [t, h, w] != [et, eh, ew] {
            return Err(Error::Shape(format!(
                "clips {:?} do not match (N, 1, {et}, {eh}, {ew})",
                clips.shape()
            )));
        }
        if bow.rows() != n || bow.cols() != self.config.bow_dim {
            return Err(Error::Shape(format!(
                "bow features {}x{} do not match {n}x{}",
                bow.rows(),
                bow.cols(),
                self.config.bow_dim
            )));
        }
        Ok(())
    }

    fn forward_cached(&self, clips: &Tensor5, bow: &Matrix) -> Result<(Matrix, ForwardCache)> {
        self.check_inputs(clips, bow)?;
        let mut x = clips.clone();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for (f, spec) in self.blocks.iter().zip(&self.config.blocks) {
            let mid = conv3d_forward(&x, &f.temporal)?;
            let act = conv3d_forward(&mid, &f.spatial)?.relu();
            let (pooled, argmax) = maxpool3d_forward(&act, spec.pool, spec.pool)?;
            caches.push(BlockCache {
                input: std::mem::replace(&mut x, pooled),
                mid,
                act,
                argmax,
            });
        }

        let [n, c, t, h, w] = x.shape();
        let vol = t * h * w;
        let mut gap = Matrix::zeros(n, c);
        for (i, chunk) in x.data().chunks(vol).enumerate() {
            gap.data_mut()[i] = chunk.iter().sum::<f64>() / vol as f64;
        }
        let hidden_pre = fc_forward(&gap, &self.fc1_w, &self.fc1_b)?;
        let embed = self.config.embed_dim;
        let mut fused = Matrix::zeros(n, embed + self.config.bow_dim);
        for i in 0..n {
            let row = fused.row_mut(i);
            for (d, &s) in row[..embed].iter_mut().zip(hidden_pre.row(i)) {
                *d = s.max(0.0);
            }
            row[embed..].copy_from_slice(bow.row(i));
        }
        let logits = fc_forward(&fused, &self.fusion_w, &self.fusion_b)?;
        Ok((
            logits,
            ForwardCache {
                blocks: caches,
                pooled_shape: x.shape(),
                gap,
                hidden_pre,
                fused,
            },
        ))
    }

    /// Class logits `(N, num_classes)` for clips `(N, 1, T, H, W)` and bag-of-words rows `(N, K)`.
    pub fn forward(&self, clips: &Tensor5, bow: &Matrix) -> Result<Matrix> {
        self.forward_cached(clips, bow).map(|(logits, _)| logits)
    }

    fn backward(&self, cache: ForwardCache, grad_logits: &Matrix) -> Result<Gradients> {
        let fusion = fc_backward(&cache.fused, &self.fusion_w, grad_logits)?;
        let embed = self.config.embed_dim;
        let n = grad_logits.rows();
        // the bag-of-words columns are fixed features and get no gradient
        let mut grad_hidden = Matrix::zeros(n, embed);
        for i in 0..n {
            let pre = cache.hidden_pre.row(i);
            let src = &fusion.grad_x.row(i)[..embed];
            for ((d, &g), &p) in grad_hidden.row_mut(i).iter_mut().zip(src).zip(pre) {
                *d = if p > 0.0 { g } else { 0.0 };
            }
        }
        let fc1 = fc_backward(&cache.gap, &self.fc1_w, &grad_hidden)?;

        let [_, _, t, h, w] = cache.pooled_shape;
        let vol = t * h * w;
        let mut grad = Tensor5::zeros(cache.pooled_shape)?;
        for (chunk, &g) in grad.data_mut().chunks_mut(vol).zip(fc1.grad_x.data()) {
            chunk.fill(g / vol as f64);
        }

        let mut block_grads = Vec::with_capacity(self.blocks.len());
        for (i, (f, bc)) in self.blocks.iter().zip(cache.blocks).enumerate().rev() {
            let grad_act = maxpool3d_backward(&bc.argmax, &grad, bc.act.shape())?;
            let grad_out = grad_act.zip_with(&bc.act, |g, a| if a > 0.0 { g } else { 0.0 })?;
            let fg = conv3d_factorized_backward(&bc.input, f, &bc.mid, &grad_out, i > 0)?;
            block_grads.push([fg.temporal.grad_w.into_vec(), fg.spatial.grad_w.into_vec(), fg.spatial.grad_b]);
            grad = fg.grad_x;
        }

        let mut tensors: Vec<Vec<f64>> = block_grads.into_iter().rev().flatten().collect();
        tensors.extend([
            fc1.grad_w.data().to_vec(),
            fc1.grad_b,
            fusion.grad_w.data().to_vec(),
            fusion.grad_b,
        ]);
        Ok(Gradients { tensors })
    }

    /// Mean softmax cross-entropy of a batch and its gradient with respect to every parameter.
    pub fn loss_and_grads(&self, clips: &Tensor5, bow: &Matrix, labels: &[usize]) -> Result<(f64, Gradients)> {
        let (logits, cache) = self.forward_cached(clips, bow)?;
        let (loss, grad_logits) = softmax_cross_entropy(&logits, labels)?;
        Ok((loss, self.backward(cache, &grad_logits)?))
    }

    pub fn loss(&self, clips: &Tensor5, bow: &Matrix, labels: &[usize]) -> Result<f64> {
        let logits = self.forward(clips, bow)?;
        softmax_cross_entropy(&logits, labels).map(|(loss, _)| loss)
    }

    fn set_param(&mut self, index: usize, values: &[f64]) -> Result<()> {
        let mut slots = self.params_mut();
        let slot = slots
            .get_mut(index)
            .ok_or_else(|| Error::Shape(format!("parameter index {index} out of range")))?;
        if slot.len() != values.len() {
            return Err(Error::Shape(format!(
                "parameter {index} holds {} values, got {}",
                slot.len(),
                values.len()
            )));
        }
        slot.copy_from_slice(values);
        Ok(())
    }
}
