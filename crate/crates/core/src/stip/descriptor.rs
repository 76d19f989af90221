use std::f64::consts::PI;

use super::filter::axis_diff;
use crate::tensor::Volume;

const ORIENTATION_BINS: usize = 8;
const TEMPORAL_BINS: usize = 4;
const CELL_BINS: usize = ORIENTATION_BINS + TEMPORAL_BINS;
pub const DESCRIPTOR_LEN: usize = 8 * CELL_BINS;

fn orientation_bin(gx: f64, gy: f64) -> usize {
    let theta = gy.atan2(gx);
    (((theta + PI) / (2.0 * PI / ORIENTATION_BINS as f64)).floor() as usize) % ORIENTATION_BINS
}

/// 96-d cuboid descriptor around `p = (t, y, x)`.
///
/// The cuboid spans `[p - d, p + d)` on each axis (clipped to the volume) and is split
/// into 2x2x2 cells at `p`. Every cell holds an 8-bin histogram of spatial gradient
/// orientation weighted by spatial magnitude, followed by a 4-bin histogram of `|Lt|`
/// (weighted by `|Lt|`) whose bin edges are the quartiles of `|Lt|` over the cuboid.
/// The result is L2-normalized unless it is all zero.
pub fn describe_point(v: &Volume, p: (usize, usize, usize), cuboid: [usize; 3]) -> Vec<f64> {
    let (pt, py, px) = p;
    let span = |c: usize, d: usize, n: usize| (c.saturating_sub(d), (c + d).min(n));
    let (t0, t1) = span(pt, cuboid[0], v.t);
    let (y0, y1) = span(py, cuboid[1], v.h);
    let (x0, x1) = span(px, cuboid[2], v.w);

    let mut samples = Vec::with_capacity((t1 - t0) * (y1 - y0) * (x1 - x0));
    for t in t0..t1 {
        for y in y0..y1 {
            for x in x0..x1 {
                let gx = axis_diff(|i| v.at(t, y, i), x, v.w);
                let gy = axis_diff(|i| v.at(t, i, x), y, v.h);
                let gt = axis_diff(|i| v.at(i, y, x), t, v.t);
                let cell = ((t >= pt) as usize) * 4 + ((y >= py) as usize) * 2 + (x >= px) as usize;
                samples.push((cell, gx, gy, gt.abs()));
            }
        }
    }

    let mut sorted: Vec<f64> = samples.iter().map(|s| s.3).collect();
    sorted.sort_by(f64::total_cmp);
    let quartiles: [f64; 3] = if sorted.is_empty() {
        [0.0; 3]
    } else {
        std::array::from_fn(|k| sorted[((k + 1) * sorted.len()) / 4])
    };

    let mut desc = vec![0.0; DESCRIPTOR_LEN];
    for (cell, gx, gy, at) in samples {
        let base = cell * CELL_BINS;
        let mag = gx.hypot(gy);
        if mag > 0.0 {
            desc[base + orientation_bin(gx, gy)] += mag;
        }
        if at > 0.0 {
            let bin = quartiles.iter().take_while(|&&q| at >= q).count();
            desc[base + ORIENTATION_BINS + bin] += at;
        }
    }
    let norm = desc.iter().map(|d| d * d).sum::<f64>().sqrt();
    if norm > 0.0 {
        desc.iter_mut().for_each(|d| *d /= norm);
    }
    desc
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_video_gives_zero_vector() {
        let v = Volume::filled(8, 16, 16, 0.5);
        let d = describe_point(&v, (4, 8, 8), [4, 6, 6]);
        assert_eq!(d.len(), DESCRIPTOR_LEN);
        assert!(d.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn textured_cuboids_are_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let v = Volume::from_fn(10, 20, 20, |_, _, _| rng.gen::<f64>());
        for &p in &[(0, 0, 0), (5, 10, 10), (9, 19, 19), (2, 17, 3)] {
            let d = describe_point(&v, p, [4, 6, 6]);
            let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-9, "{p:?}: {norm}");
        }
    }

    #[test]
    fn vertical_edges_fill_only_horizontal_orientation_bins() {
        // intensity varies with x only and never over time
        let v = Volume::from_fn(8, 16, 16, |_, _, x| if (x / 3) % 2 == 0 { 0.2 } else { 0.8 });
        let d = describe_point(&v, (4, 8, 8), [4, 6, 6]);
        let (mut horizontal, mut other, mut temporal) = (0.0, 0.0, 0.0);
        for cell in 0..8 {
            for bin in 0..CELL_BINS {
                let val = d[cell * CELL_BINS + bin];
                match bin {
                    // atan2 = pi lands in bin 0, atan2 = 0 in bin 4
                    0 | 4 => horizontal += val,
                    b if b >= ORIENTATION_BINS => temporal += val,
                    _ => other += val,
                }
            }
        }
        assert_eq!(temporal, 0.0);
        assert_eq!(other, 0.0);
        assert!(horizontal > 0.0);
    }

    #[test]
    fn orientation_bins() {
        assert_eq!(orientation_bin(1.0, 0.0), 4);
        assert_eq!(orientation_bin(-1.0, 0.0), 0);
        assert_eq!(orientation_bin(0.0, 1.0), 6);
        assert_eq!(orientation_bin(0.0, -1.0), 2);
    }
}
