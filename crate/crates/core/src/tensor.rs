//! Dense rank-5 tensors, 2-D matrices and 3-D volumes.
//!
//! Everything is stored row-major in `f64`. A [`Tensor5`] is always
//! `(N, C, T, H, W)` with W varying fastest; lower-rank data uses leading
//! extents of one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Shape5 = [usize; 5];

fn checked_len(shape: &[usize]) -> Result<usize> {
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .filter(|&n| n.checked_mul(std::mem::size_of::<f64>()).is_some())
        .ok_or_else(|| Error::Alloc(format!("extent product of {shape:?} overflows")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor5 {
    shape: Shape5,
    data: Vec<f64>,
}

impl Tensor5 {
    pub fn filled(shape: Shape5, value: f64) -> Result<Self> {
        let len = checked_len(&shape)?;
        Ok(Self {
            shape,
            data: vec![value; len],
        })
    }

    pub fn zeros(shape: Shape5) -> Result<Self> {
        Self::filled(shape, 0.0)
    }

    pub fn from_vec(shape: Shape5, data: Vec<f64>) -> Result<Self> {
        let len = checked_len(&shape)?;
        if len != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {len} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    /// `0, 1, 2, ...` in flat order.
    pub fn arange(shape: Shape5) -> Result<Self> {
        let len = checked_len(&shape)?;
        Ok(Self {
            shape,
            data: (0..len).map(|i| i as f64).collect(),
        })
    }

    pub fn shape(&self) -> Shape5 {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn strides(&self) -> Shape5 {
        let [_, c, t, h, w] = self.shape;
        [c * t * h * w, t * h * w, h * w, w, 1]
    }

    #[inline]
    pub fn offset(&self, idx: Shape5) -> usize {
        let [_, c, t, h, w] = self.shape;
        (((idx[0] * c + idx[1]) * t + idx[2]) * h + idx[3]) * w + idx[4]
    }

    #[inline]
    pub fn get(&self, idx: Shape5) -> f64 {
        self.data[self.offset(idx)]
    }

    #[inline]
    pub fn set(&mut self, idx: Shape5, value: f64) {
        let o = self.offset(idx);
        self.data[o] = value;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Borrow sample `n` as a contiguous `(C, T, H, W)` block.
    pub fn sample(&self, n: usize) -> &[f64] {
        let s = self.strides()[0];
        &self.data[n * s..(n + 1) * s]
    }

    pub fn relu(&self) -> Tensor5 {
        self.map(|v| v.max(0.0))
    }

    pub fn scale(&self, factor: f64) -> Tensor5 {
        self.map(|v| v * factor)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor5 {
        Tensor5 {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Tensor5, f: impl Fn(f64, f64) -> f64) -> Result<Tensor5> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "elementwise operands differ: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(Tensor5 {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElemOp {
    Add,
    Sub,
    Mul,
    Max,
    Relu,
    Scale,
}

/// Second operand of [`elementwise`]; only tensor-scalar broadcasting exists.
#[derive(Debug, Clone, Copy)]
pub enum Operand<'a> {
    Tensor(&'a Tensor5),
    Scalar(f64),
    None,
}

pub fn elementwise(op: ElemOp, a: &Tensor5, b: Operand<'_>) -> Result<Tensor5> {
    let f: fn(f64, f64) -> f64 = match op {
        ElemOp::Add => |x, y| x + y,
        ElemOp::Sub => |x, y| x - y,
        ElemOp::Mul | ElemOp::Scale => |x, y| x * y,
        ElemOp::Max => f64::max,
        ElemOp::Relu => return Ok(a.relu()),
    };
    match b {
        Operand::Tensor(t) => a.zip_with(t, f),
        Operand::Scalar(s) => Ok(a.map(|x| f(x, s))),
        Operand::None => Err(Error::Input(format!("{op:?} needs a second operand"))),
    }
}

/// Copy of the axis-aligned block `origin .. origin + extent`.
pub fn slice_window(t: &Tensor5, origin: Shape5, extent: Shape5) -> Result<Tensor5> {
    for axis in 0..5 {
        let end = origin[axis].checked_add(extent[axis]);
        if end.is_none_or(|e| e > t.shape[axis]) {
            return Err(Error::Bounds(format!(
                "origin {origin:?} + extent {extent:?} exceeds shape {:?}",
                t.shape
            )));
        }
    }
    let mut out = Tensor5::zeros(extent)?;
    if out.is_empty() {
        return Ok(out);
    }
    let [en, ec, et, eh, ew] = extent;
    let mut dst = 0;
    for n in 0..en {
        for c in 0..ec {
            for tt in 0..et {
                for y in 0..eh {
                    let src = t.offset([
                        origin[0] + n,
                        origin[1] + c,
                        origin[2] + tt,
                        origin[3] + y,
                        origin[4],
                    ]);
                    out.data[dst..dst + ew].copy_from_slice(&t.data[src..src + ew]);
                    dst += ew;
                }
            }
        }
    }
    Ok(out)
}

/// Row-major 2-D matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows.checked_mul(cols) != Some(data.len()) {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} elements, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }
}

pub fn matmul2d(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::Shape(format!(
            "matmul inner extents differ: {}x{} * {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for p in 0..a.cols {
            let av = a.data[i * a.cols + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b.data[p * b.cols..(p + 1) * b.cols];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Ok(out)
}

/// Single-channel `T x H x W` grid, the unit the interest-point detector works on.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub t: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Volume {
    pub fn filled(t: usize, h: usize, w: usize, value: f64) -> Self {
        Self {
            t,
            h,
            w,
            data: vec![value; t * h * w],
        }
    }

    pub fn from_vec(t: usize, h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if t * h * w != data.len() {
            return Err(Error::Shape(format!(
                "volume {t}x{h}x{w} needs {} voxels, got {}",
                t * h * w,
                data.len()
            )));
        }
        Ok(Self { t, h, w, data })
    }

    pub fn from_fn(t: usize, h: usize, w: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(t * h * w);
        for tt in 0..t {
            for y in 0..h {
                for x in 0..w {
                    data.push(f(tt, y, x));
                }
            }
        }
        Self { t, h, w, data }
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.t, self.h, self.w]
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn idx(&self, t: usize, y: usize, x: usize) -> usize {
        (t * self.h + y) * self.w + x
    }

    #[inline]
    pub fn at(&self, t: usize, y: usize, x: usize) -> f64 {
        self.data[self.idx(t, y, x)]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Stack equally sized volumes into an `(N, 1, T, H, W)` batch.
    pub fn stack(volumes: &[&Volume]) -> Result<Tensor5> {
        let Some(first) = volumes.first() else {
            return Err(Error::Input("cannot stack zero volumes".into()));
        };
        let dims = first.dims();
        let mut data = Vec::with_capacity(volumes.len() * first.data.len());
        for v in volumes {
            if v.dims() != dims {
                return Err(Error::Shape(format!(
                    "cannot stack {:?} with {:?}",
                    v.dims(),
                    dims
                )));
            }
            data.extend_from_slice(&v.data);
        }
        Tensor5::from_vec([volumes.len(), 1, dims[0], dims[1], dims[2]], data)
    }
}
