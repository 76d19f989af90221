use crate::error::{Error, Result};
use crate::tensor::Volume;

/// Normalized sampled Gaussian with radius `ceil(3 * scale)`.
pub fn gaussian_kernel(scale: f64) -> Vec<f64> {
    let radius = (3.0 * scale).ceil() as i64;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * scale * scale)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|v| v / sum).collect()
}

#[derive(Clone, Copy)]
enum Axis {
    T,
    Y,
    X,
}

/// One 1-D pass with replicated borders.
fn convolve_axis(v: &Volume, kernel: &[f64], axis: Axis) -> Volume {
    let radius = (kernel.len() / 2) as i64;
    let (n, stride) = match axis {
        Axis::T => (v.t, v.h * v.w),
        Axis::Y => (v.h, v.w),
        Axis::X => (v.w, 1),
    };
    let mut out = vec![0.0; v.data.len()];
    let last = n as i64 - 1;
    for (i, o) in out.iter_mut().enumerate() {
        let pos = ((i / stride) % n) as i64;
        let base = i - pos as usize * stride;
        let mut acc = 0.0;
        for (j, &w) in kernel.iter().enumerate() {
            let src = (pos + j as i64 - radius).clamp(0, last) as usize;
            acc += w * v.data[base + src * stride];
        }
        *o = acc;
    }
    Volume {
        t: v.t,
        h: v.h,
        w: v.w,
        data: out,
    }
}

/// Separable Gaussian smoothing: `sigma` along x and y, `tau` along t.
pub fn gaussian_smooth3d(v: &Volume, sigma: f64, tau: f64) -> Result<Volume> {
    if v.is_empty() {
        return Err(Error::Input("cannot smooth an empty volume".into()));
    }
    if !(sigma > 0.0 && tau > 0.0) {
        return Err(Error::Input(format!(
            "smoothing scales must be positive, got sigma={sigma}, tau={tau}"
        )));
    }
    let spatial = gaussian_kernel(sigma);
    let temporal = gaussian_kernel(tau);
    let sx = convolve_axis(v, &spatial, Axis::X);
    let sy = convolve_axis(&sx, &spatial, Axis::Y);
    Ok(convolve_axis(&sy, &temporal, Axis::T))
}

/// Difference along one axis at position `i` of `n`: central inside, one-sided at the ends.
#[inline]
pub(crate) fn axis_diff(get: impl Fn(usize) -> f64, i: usize, n: usize) -> f64 {
    if n < 2 {
        0.0
    } else if i == 0 {
        get(1) - get(0)
    } else if i == n - 1 {
        get(n - 1) - get(n - 2)
    } else {
        (get(i + 1) - get(i - 1)) * 0.5
    }
}

/// `(Lx, Ly, Lt)` of a volume.
pub fn gradients3d(l: &Volume) -> Result<[Volume; 3]> {
    if l.t < 2 || l.h < 2 || l.w < 2 {
        return Err(Error::Input(format!(
            "gradients need every axis >= 2, got {:?}",
            l.dims()
        )));
    }
    let mut gx = Vec::with_capacity(l.data.len());
    let mut gy = Vec::with_capacity(l.data.len());
    let mut gt = Vec::with_capacity(l.data.len());
    for t in 0..l.t {
        for y in 0..l.h {
            for x in 0..l.w {
                gx.push(axis_diff(|i| l.at(t, y, i), x, l.w));
                gy.push(axis_diff(|i| l.at(t, i, x), y, l.h));
                gt.push(axis_diff(|i| l.at(i, y, x), t, l.t));
            }
        }
    }
    let wrap = |data| Volume {
        t: l.t,
        h: l.h,
        w: l.w,
        data,
    };
    Ok([wrap(gx), wrap(gy), wrap(gt)])
}
