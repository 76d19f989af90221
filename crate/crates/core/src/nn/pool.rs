use crate::error::{Error, Result};
use crate::tensor::{Shape5, Tensor5};

/// Flat input index of the maximum chosen for every output voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolArgmax {
    pub in_shape: Shape5,
    pub out_shape: Shape5,
    pub indices: Vec<usize>,
}

/// 3D max pooling without padding. Ties go to the lowest flat index.
pub fn maxpool3d_forward(x: &Tensor5, window: [usize; 3], stride: [usize; 3]) -> Result<(Tensor5, PoolArgmax)> {
    if window.iter().chain(&stride).any(|&v| v == 0) {
        return Err(Error::Shape(format!(
            "pool window {window:?} and stride {stride:?} must be >= 1"
        )));
    }
    let [n_batch, c, t, h, w] = x.shape();
    let dims = [t, h, w];
    let mut out_dims = [0; 3];
    for axis in 0..3 {
        if dims[axis] < window[axis] {
            return Err(Error::Shape(format!(
                "pool window {window:?} larger than input {dims:?}"
            )));
        }
        out_dims[axis] = (dims[axis] - window[axis]) / stride[axis] + 1;
    }
    let [to, ho, wo] = out_dims;
    let out_shape = [n_batch, c, to, ho, wo];
    let mut out = Tensor5::zeros(out_shape)?;
    let mut indices = Vec::with_capacity(out.len());
    let xs = x.data();
    let os = out.data_mut();
    let mut o = 0;
    for n in 0..n_batch {
        for ch in 0..c {
            let base = (n * c + ch) * t * h * w;
            for ot in 0..to {
                for oh in 0..ho {
                    for ow in 0..wo {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_idx = usize::MAX;
                        for a in 0..window[0] {
                            let it = ot * stride[0] + a;
                            for b in 0..window[1] {
                                let ih = oh * stride[1] + b;
                                let row = base + (it * h + ih) * w;
                                for cc in 0..window[2] {
                                    let idx = row + ow * stride[2] + cc;
                                    // strict `>` keeps the first (lowest) index on ties
                                    if xs[idx] > best || best_idx == usize::MAX {
                                        best = xs[idx];
                                        best_idx = idx;
                                    }
                                }
                            }
                        }
                        os[o] = best;
                        indices.push(best_idx);
                        o += 1;
                    }
                }
            }
        }
    }
    Ok((
        out,
        PoolArgmax {
            in_shape: x.shape(),
            out_shape,
            indices,
        },
    ))
}

/// Routes `grad_out` back to the recorded maxima; overlapping windows accumulate.
pub fn maxpool3d_backward(argmax: &PoolArgmax, grad_out: &Tensor5, in_shape: Shape5) -> Result<Tensor5> {
    if grad_out.shape() != argmax.out_shape || argmax.indices.len() != grad_out.len() {
        return Err(Error::Shape(format!(
            "grad_out {:?} does not match pooled shape {:?}",
            grad_out.shape(),
            argmax.out_shape
        )));
    }
    if in_shape != argmax.in_shape {
        return Err(Error::Shape(format!(
            "input shape {in_shape:?} differs from forward input {:?}",
            argmax.in_shape
        )));
    }
    let mut grad_in = Tensor5::zeros(in_shape)?;
    let len = grad_in.len();
    let gi = grad_in.data_mut();
    for (&idx, &g) in argmax.indices.iter().zip(grad_out.data()) {
        if idx >= len {
            return Err(Error::Corruption(format!(
                "pool argmax index {idx} outside input of {len} elements"
            )));
        }
        gi[idx] += g;
    }
    Ok(grad_in)
}
