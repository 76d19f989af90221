use crate::error::{Error, Result};
use crate::tensor::{matmul2d, Matrix};

/// `x · w + b`, with `b` broadcast over rows.
pub fn fc_forward(x: &Matrix, w: &Matrix, b: &[f64]) -> Result<Matrix> {
    if b.len() != w.cols() {
        return Err(Error::Shape(format!(
            "bias length {} does not match {} outputs",
            b.len(),
            w.cols()
        )));
    }
    let mut out = matmul2d(x, w)?;
    for i in 0..out.rows() {
        for (o, &bv) in out.row_mut(i).iter_mut().zip(b) {
            *o += bv;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcGrads {
    pub grad_x: Matrix,
    pub grad_w: Matrix,
    pub grad_b: Vec<f64>,
}

pub fn fc_backward(x: &Matrix, w: &Matrix, grad_out: &Matrix) -> Result<FcGrads> {
    if grad_out.rows() != x.rows() || grad_out.cols() != w.cols() || x.cols() != w.rows() {
        return Err(Error::Shape(format!(
            "fc backward: x {}x{}, w {}x{}, grad_out {}x{}",
            x.rows(),
            x.cols(),
            w.rows(),
            w.cols(),
            grad_out.rows(),
            grad_out.cols()
        )));
    }
    let grad_x = matmul2d(grad_out, &w.transpose())?;
    let grad_w = matmul2d(&x.transpose(), grad_out)?;
    let mut grad_b = vec![0.0; w.cols()];
    for i in 0..grad_out.rows() {
        for (gb, &g) in grad_b.iter_mut().zip(grad_out.row(i)) {
            *gb += g;
        }
    }
    Ok(FcGrads { grad_x, grad_w, grad_b })
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Mean cross-entropy over rows and its gradient `(softmax - onehot) / N`.
pub fn softmax_cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    let (n, c) = (logits.rows(), logits.cols());
    if labels.len() != n {
        return Err(Error::Shape(format!("{} labels for {n} rows", labels.len())));
    }
    if n == 0 {
        return Err(Error::Input("softmax cross-entropy of an empty batch".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::Input(format!("label {bad} out of range for {c} classes")));
    }
    let mut grad = softmax_rows(logits);
    let mut loss = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        let row = logits.row(i);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
        loss += lse - row[label];
        grad.row_mut(i)[label] -= 1.0;
    }
    let scale = 1.0 / n as f64;
    grad.data_mut().iter_mut().for_each(|g| *g *= scale);
    Ok((loss * scale, grad))
}
