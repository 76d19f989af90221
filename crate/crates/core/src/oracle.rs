//! Slow reference implementations used only by tests.
//!
//! Each routine here is written independently of the production code path it
//! checks: plain nested loops, exhaustive enumeration, finite differences.

use crate::error::Result;
use crate::nn::Conv3dKernel;
use crate::tensor::{slice_window, Tensor5, Volume};

pub const FD_STEP: f64 = 1e-5;

/// Central finite differences of `f` around `params`.
pub fn central_difference(params: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut work = params.to_vec();
    (0..params.len())
        .map(|i| {
            let orig = work[i];
            work[i] = orig + FD_STEP;
            let up = f(&work);
            work[i] = orig - FD_STEP;
            let down = f(&work);
            work[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Largest `|a - b| / max(|a|, |b|, 1e-4)`; the floor keeps vanishing gradients from
/// turning finite-difference noise into huge relative errors.
pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-4))
        .fold(0.0, f64::max)
}

/// Six nested loops over output voxels, each the dot product of a
/// [`slice_window`] of the zero-padded input with one output filter.
pub fn conv3d_bruteforce(x: &Tensor5, k: &Conv3dKernel) -> Result<Tensor5> {
    let [n, cin, t, h, w] = x.shape();
    let [cout, _, kt, kh, kw] = k.weights.shape();
    let [pt, ph, pw] = k.padding;
    let [st, sh, sw] = k.stride;
    let padded_shape = [n, cin, t + 2 * pt, h + 2 * ph, w + 2 * pw];
    let mut padded = Tensor5::zeros(padded_shape)?;
    for b in 0..n {
        for c in 0..cin {
            for tt in 0..t {
                for y in 0..h {
                    for xx in 0..w {
                        padded.set([b, c, tt + pt, y + ph, xx + pw], x.get([b, c, tt, y, xx]));
                    }
                }
            }
        }
    }
    let to = (padded_shape[2] - kt) / st + 1;
    let ho = (padded_shape[3] - kh) / sh + 1;
    let wo = (padded_shape[4] - kw) / sw + 1;
    let mut out = Tensor5::zeros([n, cout, to, ho, wo])?;
    for b in 0..n {
        for co in 0..cout {
            let filter = slice_window(&k.weights, [co, 0, 0, 0, 0], [1, cin, kt, kh, kw])?;
            for ot in 0..to {
                for oh in 0..ho {
                    for ow in 0..wo {
                        let patch = slice_window(
                            &padded,
                            [b, 0, ot * st, oh * sh, ow * sw],
                            [1, cin, kt, kh, kw],
                        )?;
                        let dot: f64 = patch.data().iter().zip(filter.data()).map(|(p, f)| p * f).sum();
                        out.set([b, co, ot, oh, ow], dot + k.bias[co]);
                    }
                }
            }
        }
    }
    Ok(out)
}

fn gauss_taps(scale: f64) -> Vec<f64> {
    let radius = (3.0 * scale).ceil() as i64;
    let raw: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * scale * scale)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Non-separated 3-D Gaussian: one triple sum per voxel with clamped (replicated) borders.
pub fn gaussian_smooth_dense(v: &Volume, sigma: f64, tau: f64) -> Volume {
    let gs = gauss_taps(sigma);
    let gt = gauss_taps(tau);
    let rs = (gs.len() / 2) as i64;
    let rt = (gt.len() / 2) as i64;
    let clamp = |i: i64, n: usize| i.clamp(0, n as i64 - 1) as usize;
    Volume::from_fn(v.t, v.h, v.w, |t, y, x| {
        let mut acc = 0.0;
        for dt in -rt..=rt {
            for dy in -rs..=rs {
                for dx in -rs..=rs {
                    let wgt = gt[(dt + rt) as usize] * gs[(dy + rs) as usize] * gs[(dx + rs) as usize];
                    acc += wgt
                        * v.at(
                            clamp(t as i64 + dt, v.t),
                            clamp(y as i64 + dy, v.h),
                            clamp(x as i64 + dx, v.w),
                        );
                }
            }
        }
        acc
    })
}

/// Per-voxel difference stencil: central inside, one-sided on the two border voxels.
pub fn gradient_stencil(v: &Volume) -> [Volume; 3] {
    let diff = |get: &dyn Fn(usize) -> f64, i: usize, n: usize| -> f64 {
        if i == 0 {
            get(1) - get(0)
        } else if i == n - 1 {
            get(n - 1) - get(n - 2)
        } else {
            (get(i + 1) - get(i - 1)) / 2.0
        }
    };
    let gx = Volume::from_fn(v.t, v.h, v.w, |t, y, x| diff(&|i| v.at(t, y, i), x, v.w));
    let gy = Volume::from_fn(v.t, v.h, v.w, |t, y, x| diff(&|i| v.at(t, i, x), y, v.h));
    let gt = Volume::from_fn(v.t, v.h, v.w, |t, y, x| diff(&|i| v.at(i, y, x), t, v.t));
    [gx, gy, gt]
}

/// Location `(t, y, x)` of the largest value, scanning every voxel.
pub fn volume_argmax(v: &Volume) -> (usize, usize, usize) {
    let mut best = (0, 0, 0);
    let mut best_val = f64::NEG_INFINITY;
    for t in 0..v.t {
        for y in 0..v.h {
            for x in 0..v.w {
                if v.at(t, y, x) > best_val {
                    best_val = v.at(t, y, x);
                    best = (t, y, x);
                }
            }
        }
    }
    best
}

/// Minimum within-cluster sum of squares over every split of `points` into two non-empty sets.
pub fn best_two_partition_inertia(points: &[Vec<f64>]) -> f64 {
    let m = points.len();
    assert!((2..=20).contains(&m), "exhaustive search needs 2..=20 points");
    let dim = points[0].len();
    let sse = |members: &[&Vec<f64>]| -> f64 {
        let mut mean = vec![0.0; dim];
        for p in members {
            for (a, b) in mean.iter_mut().zip(p.iter()) {
                *a += b;
            }
        }
        mean.iter_mut().for_each(|a| *a /= members.len() as f64);
        members
            .iter()
            .map(|p| p.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            .sum()
    };
    let mut best = f64::INFINITY;
    // fixing point 0 in side A enumerates each unordered split once
    for mask in 0u32..(1 << (m - 1)) {
        let (mut a, mut b) = (vec![&points[0]], Vec::new());
        for (i, p) in points.iter().enumerate().skip(1) {
            if mask & (1 << (i - 1)) != 0 {
                b.push(p);
            } else {
                a.push(p);
            }
        }
        if b.is_empty() {
            continue;
        }
        best = best.min(sse(&a) + sse(&b));
    }
    best
}

/// Per-class (precision, recall, f1, support) recounted straight from a prediction stream.
pub fn recount_metrics(truth: &[usize], pred: &[usize], classes: usize) -> Vec<(f64, f64, f64, u64)> {
    (0..classes)
        .map(|c| {
            let tp = truth.iter().zip(pred).filter(|(&t, &p)| t == c && p == c).count() as f64;
            let fp = truth.iter().zip(pred).filter(|(&t, &p)| t != c && p == c).count() as f64;
            let fneg = truth.iter().zip(pred).filter(|(&t, &p)| t == c && p != c).count() as f64;
            let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let r = if tp + fneg > 0.0 { tp / (tp + fneg) } else { 0.0 };
            let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
            (p, r, f, (tp + fneg) as u64)
        })
        .collect()
}

/// Flatten width reached by walking the input extents through each
/// (same-padded conv, non-overlapping pool) block and a global average pool.
pub fn propagate_flatten_dim(input: [usize; 3], blocks: &[(usize, [usize; 3])]) -> Option<usize> {
    let mut dims = input;
    let mut channels = 1;
    for &(cout, pool) in blocks {
        for axis in 0..3 {
            dims[axis] /= pool[axis];
        }
        if dims.contains(&0) {
            return None;
        }
        channels = cout;
    }
    Some(channels)
}
