use super::{Gradients, HybridConfig, HybridModel};
use crate::dataio::batch_iter;
use crate::error::{Error, Result};
use crate::tensor::{Matrix, Tensor5, Volume};

/// One training or evaluation clip with its precomputed bag-of-words histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub voxels: Volume,
    pub bow: Vec<f64>,
    pub label: usize,
}

/// One Adam update of every parameter using the hyperparameters in `cfg`.
///
/// All gradients are checked before anything is modified, so a non-finite gradient
/// leaves the model untouched and names the offending parameter.
pub fn adam_step(model: &mut HybridModel, grads: &Gradients, cfg: &HybridConfig) -> Result<()> {
    if grads.tensors.len() != model.names.len() {
        return Err(Error::Shape(format!(
            "{} gradient tensors for {} parameters",
            grads.tensors.len(),
            model.names.len()
        )));
    }
    for ((g, m), name) in grads.tensors.iter().zip(&model.adam.m).zip(&model.names) {
        if g.len() != m.len() {
            return Err(Error::Shape(format!("gradient for `{name}` has {} values, expected {}", g.len(), m.len())));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { param: name.clone() });
        }
    }

    model.adam.step += 1;
    let step = model.adam.step as i32;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let correct1 = 1.0 - b1.powi(step);
    let correct2 = 1.0 - b2.powi(step);
    let (lr, eps) = (cfg.lr, cfg.eps);
    let mut ms = std::mem::take(&mut model.adam.m);
    let mut vs = std::mem::take(&mut model.adam.v);
    for (((theta, g), m), v) in model.params_mut().into_iter().zip(&grads.tensors).zip(&mut ms).zip(&mut vs) {
        for i in 0..theta.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / correct1;
            let v_hat = v[i] / correct2;
            theta[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    model.adam.m = ms;
    model.adam.v = vs;
    Ok(())
}

fn assemble(examples: &[&Example], bow_dim: usize) -> Result<(Tensor5, Matrix, Vec<usize>)> {
    let volumes: Vec<&Volume> = examples.iter().map(|e| &e.voxels).collect();
    let clips = Volume::stack(&volumes)?;
    let mut bow = Matrix::zeros(examples.len(), bow_dim);
    for (i, e) in examples.iter().enumerate() {
        if e.bow.len() != bow_dim {
            return Err(Error::Shape(format!("bow histogram has {} bins, expected {bow_dim}", e.bow.len())));
        }
        bow.row_mut(i).copy_from_slice(&e.bow);
    }
    Ok((clips, bow, examples.iter().map(|e| e.label).collect()))
}

/// One pass over `examples` in an order shuffled by `(cfg.seed, epoch)`.
/// Returns the mean of the per-batch losses.
pub fn train_epoch(model: &mut HybridModel, examples: &[Example], cfg: &HybridConfig, epoch: u64) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::Input("empty training set".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    let order: Vec<usize> = (0..examples.len()).collect();
    let batches = batch_iter(&order, cfg.batch_size, cfg.seed, epoch);
    let mut total = 0.0;
    for batch in &batches {
        let picked: Vec<&Example> = batch.iter().map(|&i| &examples[i]).collect();
        let (clips, bow, labels) = assemble(&picked, model.config.bow_dim)?;
        let (loss, grads) = model.loss_and_grads(&clips, &bow, &labels)?;
        adam_step(model, &grads, cfg)?;
        total += loss;
    }
    Ok(total / batches.len() as f64)
}

/// Index of the largest logit; the lowest index wins exact ties.
pub fn argmax_row(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn predict(model: &HybridModel, clip: &Volume, bow: &[f64]) -> Result<usize> {
    let clips = Volume::stack(&[clip])?;
    let bow = Matrix::from_vec(1, bow.len(), bow.to_vec())?;
    let logits = model.forward(&clips, &bow)?;
    Ok(argmax_row(logits.row(0)))
}

/// Predictions for `examples`, evaluated `chunk` clips at a time.
pub fn predict_batch(model: &HybridModel, examples: &[Example], chunk: usize) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(examples.len());
    for part in examples.chunks(chunk.max(1)) {
        let picked: Vec<&Example> = part.iter().collect();
        let (clips, bow, _) = assemble(&picked, model.config.bow_dim)?;
        let logits = model.forward(&clips, &bow)?;
        out.extend((0..logits.rows()).map(|i| argmax_row(logits.row(i))));
    }
    Ok(out)
}
