//! Harris-3D spatio-temporal interest points, cuboid descriptors and the
//! k-means bag-of-words encoding built on top of them.

mod codebook;
mod descriptor;
mod filter;

use serde::{Deserialize, Serialize};

pub use codebook::{encode_bow, encode_descriptors, kmeans_fit, kmeans_fit_with_history, Codebook};
pub use descriptor::{describe_point, DESCRIPTOR_LEN};
pub use filter::{gaussian_kernel, gaussian_smooth3d, gradients3d};

use crate::error::{Error, Result};
use crate::tensor::Volume;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StipParams {
    /// Spatial smoothing scale, pixels.
    pub sigma: f64,
    /// Temporal smoothing scale, frames.
    pub tau: f64,
    /// Integration scale multiplier applied to both `sigma` and `tau`.
    pub scale: f64,
    /// Harris constant.
    pub k: f64,
    /// Keep responses above this fraction of the clip maximum.
    pub threshold_frac: f64,
    pub nms_radius: usize,
    /// Descriptor half-extents `(dt, dy, dx)`.
    pub cuboid: [usize; 3],
    /// Strongest points kept per clip.
    pub max_points: usize,
}

impl Default for StipParams {
    fn default() -> Self {
        Self {
            sigma: 2.0,
            tau: 2.0,
            scale: 2.0,
            k: 0.005,
            threshold_frac: 0.1,
            nms_radius: 2,
            cuboid: [4, 6, 6],
            max_points: 200,
        }
    }
}

impl StipParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.sigma > 0.0
            && self.tau > 0.0
            && self.scale >= 1.0
            && self.k > 0.0
            && self.threshold_frac > 0.0
            && self.threshold_frac <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Input(format!("invalid interest point parameters: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterestPoint {
    pub t: usize,
    pub y: usize,
    pub x: usize,
    pub response: f64,
    pub descriptor: Vec<f64>,
}

/// `det(mu) - k * trace(mu)^3` where `mu` is the integration-scale smoothed
/// second-moment matrix of the gradients of `l`.
pub fn harris_response(l: &Volume, params: &StipParams) -> Result<Volume> {
    params.validate()?;
    let [gx, gy, gt] = gradients3d(l)?;
    let product = |a: &Volume, b: &Volume| Volume {
        t: l.t,
        h: l.h,
        w: l.w,
        data: a.data.iter().zip(&b.data).map(|(p, q)| p * q).collect(),
    };
    let (is, it) = (params.scale * params.sigma, params.scale * params.tau);
    let smooth = |v: Volume| gaussian_smooth3d(&v, is, it);
    let xx = smooth(product(&gx, &gx))?;
    let yy = smooth(product(&gy, &gy))?;
    let tt = smooth(product(&gt, &gt))?;
    let xy = smooth(product(&gx, &gy))?;
    let xt = smooth(product(&gx, &gt))?;
    let yt = smooth(product(&gy, &gt))?;
    let data = (0..l.data.len())
        .map(|i| {
            let (a, b, c) = (xx.data[i], xy.data[i], xt.data[i]);
            let (e, f) = (yy.data[i], yt.data[i]);
            let z = tt.data[i];
            let det = a * (e * z - f * f) - b * (b * z - f * c) + c * (b * f - e * c);
            let trace = a + e + z;
            det - params.k * trace * trace * trace
        })
        .collect();
    Ok(Volume {
        t: l.t,
        h: l.h,
        w: l.w,
        data,
    })
}

/// True when `(t, y, x)` beats every other voxel in its clipped `(2r+1)^3`
/// neighbourhood; equal neighbours only lose to lexicographically earlier voxels.
fn is_local_max(h: &Volume, t: usize, y: usize, x: usize, r: usize) -> bool {
    let v = h.at(t, y, x);
    let here = (t, y, x);
    for tt in t.saturating_sub(r)..(t + r + 1).min(h.t) {
        for yy in y.saturating_sub(r)..(y + r + 1).min(h.h) {
            for xx in x.saturating_sub(r)..(x + r + 1).min(h.w) {
                let n = h.at(tt, yy, xx);
                if n > v || (n == v && (tt, yy, xx) < here) {
                    return false;
                }
            }
        }
    }
    true
}

/// Detect interest points in `v`, strongest first, each with its descriptor.
pub fn detect_stips(v: &Volume, params: &StipParams) -> Result<Vec<InterestPoint>> {
    params.validate()?;
    let min_extent = 2 * params.nms_radius + 1;
    if v.dims().iter().any(|&d| d < min_extent) {
        return Err(Error::Input(format!(
            "video {:?} smaller than suppression window {min_extent}",
            v.dims()
        )));
    }
    let smoothed = gaussian_smooth3d(v, params.sigma, params.tau)?;
    let response = harris_response(&smoothed, params)?;
    let peak = response.max();
    if !(peak > 0.0) {
        return Ok(Vec::new());
    }
    let threshold = params.threshold_frac * peak;
    let mut points = Vec::new();
    for t in 0..response.t {
        for y in 0..response.h {
            for x in 0..response.w {
                let r = response.at(t, y, x);
                if r > threshold && is_local_max(&response, t, y, x, params.nms_radius) {
                    points.push((t, y, x, r));
                }
            }
        }
    }
    // scan order is already lexicographic, so a stable sort keeps it among equal responses
    points.sort_by(|a, b| b.3.total_cmp(&a.3));
    points.truncate(params.max_points);
    Ok(points
        .into_iter()
        .map(|(t, y, x, response)| InterestPoint {
            t,
            y,
            x,
            response,
            descriptor: describe_point(&smoothed, (t, y, x), params.cuboid),
        })
        .collect())
}
