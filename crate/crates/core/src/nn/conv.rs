//! Direct-loop 3D convolution (cross-correlation) and its two-stage factorized form.

use crate::error::{Error, Result};
use crate::tensor::{Shape5, Tensor5};

#[derive(Debug, Clone, PartialEq)]
pub struct Conv3dKernel {
    /// `(Cout, Cin, kt, kh, kw)`
    pub weights: Tensor5,
    pub bias: Vec<f64>,
    pub stride: [usize; 3],
    /// Zeros added on each side of (T, H, W).
    pub padding: [usize; 3],
}

impl Conv3dKernel {
    pub fn new(weights: Tensor5, bias: Vec<f64>, stride: [usize; 3], padding: [usize; 3]) -> Result<Self> {
        let k = Self {
            weights,
            bias,
            stride,
            padding,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn zeros(cout: usize, cin: usize, extent: [usize; 3], stride: [usize; 3], padding: [usize; 3]) -> Result<Self> {
        let weights = Tensor5::zeros([cout, cin, extent[0], extent[1], extent[2]])?;
        Self::new(weights, vec![0.0; cout], stride, padding)
    }

    /// 1x1x1 single-channel kernel passing its input through.
    pub fn identity() -> Self {
        let weights = Tensor5::filled([1; 5], 1.0).expect("unit tensor");
        Self {
            weights,
            bias: vec![0.0],
            stride: [1; 3],
            padding: [0; 3],
        }
    }

    fn validate(&self) -> Result<()> {
        let [cout, _, kt, kh, kw] = self.weights.shape();
        if kt == 0 || kh == 0 || kw == 0 {
            return Err(Error::Shape(format!("kernel extent must be >= 1, got {:?}", [kt, kh, kw])));
        }
        if self.stride.contains(&0) {
            return Err(Error::Shape(format!("strides must be >= 1, got {:?}", self.stride)));
        }
        if self.bias.len() != cout {
            return Err(Error::Shape(format!(
                "bias length {} does not match {cout} output channels",
                self.bias.len()
            )));
        }
        Ok(())
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn extent(&self) -> [usize; 3] {
        let s = self.weights.shape();
        [s[2], s[3], s[4]]
    }

    /// Output extents `floor((A + 2p - k) / s) + 1` for an input of extents `input`.
    pub fn output_dims(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        let k = self.extent();
        let mut out = [0; 3];
        for axis in 0..3 {
            let padded = input[axis] + 2 * self.padding[axis];
            if padded < k[axis] {
                return Err(Error::Shape(format!(
                    "padded input {:?} smaller than kernel {:?}",
                    input, k
                )));
            }
            out[axis] = (padded - k[axis]) / self.stride[axis] + 1;
        }
        Ok(out)
    }

    fn output_shape(&self, x: &Tensor5) -> Result<Shape5> {
        let [n, c, t, h, w] = x.shape();
        if c != self.in_channels() {
            return Err(Error::Shape(format!(
                "input has {c} channels, kernel expects {}",
                self.in_channels()
            )));
        }
        let [to, ho, wo] = self.output_dims([t, h, w])?;
        Ok([n, self.out_channels(), to, ho, wo])
    }
}

/// Output indices `o` in `0..out` whose tap `o*stride + offset - pad` lands inside `0..input`.
#[inline]
fn valid_range(out: usize, input: usize, stride: usize, pad: usize, offset: usize) -> (usize, usize) {
    let lo = if offset >= pad {
        0
    } else {
        (pad - offset).div_ceil(stride)
    };
    let hi = if input + pad > offset {
        ((input - 1 + pad - offset) / stride + 1).min(out)
    } else {
        0
    };
    (lo, hi.max(lo))
}

struct Geometry {
    in_shape: Shape5,
    out_shape: Shape5,
    extent: [usize; 3],
    stride: [usize; 3],
    padding: [usize; 3],
}

impl Geometry {
    /// Visits every (kernel tap, output row) pair together with the input row it reads.
    fn for_each_row(&self, mut f: impl FnMut(RowTask)) {
        let [n_batch, cin, t, h, w] = self.in_shape;
        let [_, cout, to, ho, wo] = self.out_shape;
        let [kt, kh, kw] = self.extent;
        let [st, sh, sw] = self.stride;
        let [pt, ph, pw] = self.padding;
        for n in 0..n_batch {
            for co in 0..cout {
                let out_base = ((n * cout + co) * to) * ho * wo;
                for ci in 0..cin {
                    let in_base = ((n * cin + ci) * t) * h * w;
                    for a in 0..kt {
                        let (t_lo, t_hi) = valid_range(to, t, st, pt, a);
                        for b in 0..kh {
                            let (h_lo, h_hi) = valid_range(ho, h, sh, ph, b);
                            for c in 0..kw {
                                let (w_lo, w_hi) = valid_range(wo, w, sw, pw, c);
                                if w_lo >= w_hi {
                                    continue;
                                }
                                let tap = (((co * cin + ci) * kt + a) * kh + b) * kw + c;
                                for ot in t_lo..t_hi {
                                    let it = ot * st + a - pt;
                                    for oh in h_lo..h_hi {
                                        let ih = oh * sh + b - ph;
                                        f(RowTask {
                                            tap,
                                            out_row: out_base + (ot * ho + oh) * wo,
                                            in_row: in_base + (it * h + ih) * w,
                                            w_lo,
                                            w_hi,
                                            stride: sw,
                                            shift: c as isize - pw as isize,
                                        });
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

#[derive(Clone, Copy)]
struct RowTask {
    tap: usize,
    out_row: usize,
    in_row: usize,
    w_lo: usize,
    w_hi: usize,
    stride: usize,
    shift: isize,
}

impl RowTask {
    #[inline]
    fn input_col(&self, ow: usize) -> usize {
        (ow as isize * self.stride as isize + self.shift) as usize
    }
}

fn geometry(x: &Tensor5, k: &Conv3dKernel) -> Result<Geometry> {
    Ok(Geometry {
        in_shape: x.shape(),
        out_shape: k.output_shape(x)?,
        extent: k.extent(),
        stride: k.stride,
        padding: k.padding,
    })
}

pub fn conv3d_forward(x: &Tensor5, k: &Conv3dKernel) -> Result<Tensor5> {
    let geo = geometry(x, k)?;
    let mut out = Tensor5::zeros(geo.out_shape)?;
    let [n_batch, cout, to, ho, wo] = geo.out_shape;
    let plane = to * ho * wo;
    {
        let data = out.data_mut();
        for n in 0..n_batch {
            for co in 0..cout {
                let base = (n * cout + co) * plane;
                data[base..base + plane].fill(k.bias[co]);
            }
        }
    }
    let xs = x.data();
    let ws = k.weights.data();
    let os = out.data_mut();
    geo.for_each_row(|r| {
        let wgt = ws[r.tap];
        if r.stride == 1 {
            let start = r.input_col(r.w_lo);
            let len = r.w_hi - r.w_lo;
            let orow = &mut os[r.out_row + r.w_lo..r.out_row + r.w_hi];
            let xrow = &xs[r.in_row + start..r.in_row + start + len];
            for (o, &xv) in orow.iter_mut().zip(xrow) {
                *o += wgt * xv;
            }
        } else {
            for ow in r.w_lo..r.w_hi {
                os[r.out_row + ow] += wgt * xs[r.in_row + r.input_col(ow)];
            }
        }
    });
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub grad_x: Tensor5,
    pub grad_w: Tensor5,
    pub grad_b: Vec<f64>,
}

/// Gradients of `sum(conv3d_forward(x, k) * grad_out)` with respect to input, weights and bias.
pub fn conv3d_backward(x: &Tensor5, k: &Conv3dKernel, grad_out: &Tensor5) -> Result<ConvGrads> {
    conv3d_backward_impl(x, k, grad_out, true)
}

fn conv3d_backward_impl(x: &Tensor5, k: &Conv3dKernel, grad_out: &Tensor5, want_grad_x: bool) -> Result<ConvGrads> {
    let geo = geometry(x, k)?;
    if grad_out.shape() != geo.out_shape {
        return Err(Error::Shape(format!(
            "grad_out {:?} does not match conv output {:?}",
            grad_out.shape(),
            geo.out_shape
        )));
    }
    let [n_batch, cout, to, ho, wo] = geo.out_shape;
    let plane = to * ho * wo;
    let gs = grad_out.data();
    let mut grad_b = vec![0.0; cout];
    for n in 0..n_batch {
        for (co, gb) in grad_b.iter_mut().enumerate() {
            let base = (n * cout + co) * plane;
            *gb += gs[base..base + plane].iter().sum::<f64>();
        }
    }

    let mut grad_w = Tensor5::zeros(k.weights.shape())?;
    let mut grad_x = Tensor5::zeros(if want_grad_x { x.shape() } else { [0; 5] })?;
    let xs = x.data();
    let ws = k.weights.data();
    {
        let gw = grad_w.data_mut();
        let gx = grad_x.data_mut();
        geo.for_each_row(|r| {
            let wgt = ws[r.tap];
            let mut acc = 0.0;
            if r.stride == 1 {
                let start = r.input_col(r.w_lo);
                let len = r.w_hi - r.w_lo;
                let grow = &gs[r.out_row + r.w_lo..r.out_row + r.w_hi];
                let xrow = &xs[r.in_row + start..r.in_row + start + len];
                for (&g, &xv) in grow.iter().zip(xrow) {
                    acc += g * xv;
                }
                if want_grad_x {
                    let gxrow = &mut gx[r.in_row + start..r.in_row + start + len];
                    for (d, &g) in gxrow.iter_mut().zip(grow) {
                        *d += wgt * g;
                    }
                }
            } else {
                for ow in r.w_lo..r.w_hi {
                    let g = gs[r.out_row + ow];
                    let xi = r.in_row + r.input_col(ow);
                    acc += g * xs[xi];
                    if want_grad_x {
                        gx[xi] += wgt * g;
                    }
                }
            }
            gw[r.tap] += acc;
        });
    }
    Ok(ConvGrads { grad_x, grad_w, grad_b })
}

/// A dense `(kt, kh, kw)` kernel replaced by a temporal `(kt, 1, 1)` stage
/// followed by a spatial `(1, kh, kw)` stage.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorizedConv3d {
    pub temporal: Conv3dKernel,
    pub spatial: Conv3dKernel,
}

impl FactorizedConv3d {
    pub fn new(temporal: Conv3dKernel, spatial: Conv3dKernel) -> Result<Self> {
        let [_, th, tw] = temporal.extent();
        let [sk, _, _] = spatial.extent();
        if th != 1 || tw != 1 || sk != 1 {
            return Err(Error::Shape(format!(
                "temporal stage must be (kt,1,1) and spatial stage (1,kh,kw); got {:?} and {:?}",
                temporal.extent(),
                spatial.extent()
            )));
        }
        if temporal.stride[1..] != [1, 1] || temporal.padding[1..] != [0, 0] || spatial.stride[0] != 1 || spatial.padding[0] != 0 {
            return Err(Error::Shape(
                "each stage may only stride/pad along its own axes".into(),
            ));
        }
        if temporal.out_channels() != spatial.in_channels() {
            return Err(Error::Shape(format!(
                "temporal stage emits {} channels, spatial stage expects {}",
                temporal.out_channels(),
                spatial.in_channels()
            )));
        }
        Ok(Self { temporal, spatial })
    }

    /// Zero-initialized stages covering `extent` with the given (dense) stride and padding.
    pub fn zeros(cin: usize, cmid: usize, cout: usize, extent: [usize; 3], stride: [usize; 3], padding: [usize; 3]) -> Result<Self> {
        let temporal = Conv3dKernel::zeros(cmid, cin, [extent[0], 1, 1], [stride[0], 1, 1], [padding[0], 0, 0])?;
        let spatial = Conv3dKernel::zeros(cout, cmid, [1, extent[1], extent[2]], [1, stride[1], stride[2]], [0, padding[1], padding[2]])?;
        Self::new(temporal, spatial)
    }

    pub fn identity() -> Self {
        Self {
            temporal: Conv3dKernel::identity(),
            spatial: Conv3dKernel::identity(),
        }
    }

    /// Receptive field of the composed stages.
    pub fn extent(&self) -> [usize; 3] {
        let [kt, _, _] = self.temporal.extent();
        let [_, kh, kw] = self.spatial.extent();
        [kt, kh, kw]
    }
}

pub fn conv3d_factorized_forward(x: &Tensor5, f: &FactorizedConv3d) -> Result<Tensor5> {
    let mid = conv3d_forward(x, &f.temporal)?;
    conv3d_forward(&mid, &f.spatial)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorizedGrads {
    pub grad_x: Tensor5,
    pub temporal: ConvGrads,
    pub spatial: ConvGrads,
}

/// Backward pass through both stages; `mid` is the temporal stage output from the forward pass.
/// With `want_grad_x == false` the input gradient is left empty.
pub fn conv3d_factorized_backward(
    x: &Tensor5,
    f: &FactorizedConv3d,
    mid: &Tensor5,
    grad_out: &Tensor5,
    want_grad_x: bool,
) -> Result<FactorizedGrads> {
    let mut spatial = conv3d_backward_impl(mid, &f.spatial, grad_out, true)?;
    let mut temporal = conv3d_backward_impl(x, &f.temporal, &spatial.grad_x, want_grad_x)?;
    let grad_x = std::mem::replace(&mut temporal.grad_x, Tensor5::zeros([0; 5])?);
    spatial.grad_x = Tensor5::zeros([0; 5])?;
    Ok(FactorizedGrads {
        grad_x,
        temporal,
        spatial,
    })
}
