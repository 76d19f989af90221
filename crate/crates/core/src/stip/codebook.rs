use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::InterestPoint;
use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// k-means vocabulary: one center per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub centers: Matrix,
}

impl Codebook {
    pub fn new(centers: Matrix) -> Result<Self> {
        if centers.rows() == 0 {
            return Err(Error::Input("codebook needs at least one center".into()));
        }
        if !centers.data().iter().all(|v| v.is_finite()) {
            return Err(Error::Input("codebook centers must be finite".into()));
        }
        Ok(Self { centers })
    }

    pub fn size(&self) -> usize {
        self.centers.rows()
    }

    pub fn dim(&self) -> usize {
        self.centers.cols()
    }

    /// Index of the closest center; lowest index wins ties.
    pub fn nearest(&self, x: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for k in 0..self.size() {
            let d = sq_dist(self.centers.row(k), x);
            if d < best.1 {
                best = (k, d);
            }
        }
        best
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Fit `k` centers to the rows of `data` with k-means++ seeding and Lloyd iterations.
pub fn kmeans_fit(data: &Matrix, k: usize, seed: u64, max_iters: usize) -> Result<Codebook> {
    kmeans_fit_with_history(data, k, seed, max_iters).map(|(cb, _)| cb)
}

/// Like [`kmeans_fit`], also returning the inertia after the initial assignment and after every iteration.
pub fn kmeans_fit_with_history(data: &Matrix, k: usize, seed: u64, max_iters: usize) -> Result<(Codebook, Vec<f64>)> {
    let m = data.rows();
    if k == 0 || m < k {
        return Err(Error::Input(format!("k-means needs 1 <= K <= M, got K={k}, M={m}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = seed_plus_plus(data, k, &mut rng);
    let mut assign = vec![0usize; m];
    let mut dist = vec![0.0; m];
    assign_all(data, &centers, &mut assign, &mut dist);
    let mut history = vec![dist.iter().sum::<f64>()];

    for _ in 0..max_iters {
        update_centers(data, &mut centers, &mut assign, &mut dist);
        let previous = assign.clone();
        assign_all(data, &centers, &mut assign, &mut dist);
        history.push(dist.iter().sum());
        if assign == previous {
            break;
        }
    }
    Ok((Codebook::new(centers)?, history))
}

fn seed_plus_plus(data: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let m = data.rows();
    let mut chosen = vec![rng.gen_range(0..m)];
    let mut d2: Vec<f64> = (0..m).map(|i| sq_dist(data.row(i), data.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave `acc` just short of `target`
            pick.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).expect("positive mass"))
        } else {
            (0..m).find(|i| !chosen.contains(i)).expect("m >= k")
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(data.row(i), data.row(next)));
        }
    }
    let mut centers = Matrix::zeros(k, data.cols());
    for (j, &i) in chosen.iter().enumerate() {
        centers.row_mut(j).copy_from_slice(data.row(i));
    }
    centers
}

fn assign_all(data: &Matrix, centers: &Matrix, assign: &mut [usize], dist: &mut [f64]) {
    for i in 0..data.rows() {
        let mut best = (0, f64::INFINITY);
        for c in 0..centers.rows() {
            let d = sq_dist(centers.row(c), data.row(i));
            if d < best.1 {
                best = (c, d);
            }
        }
        assign[i] = best.0;
        dist[i] = best.1;
    }
}

/// Move every center to the mean of its members; an empty cluster takes over the
/// point currently farthest from its own center.
fn update_centers(data: &Matrix, centers: &mut Matrix, assign: &mut [usize], dist: &mut [f64]) {
    let k = centers.rows();
    let dim = data.cols();
    let mut sums = Matrix::zeros(k, dim);
    let mut counts = vec![0usize; k];
    for (i, &c) in assign.iter().enumerate() {
        counts[c] += 1;
        for (s, &v) in sums.row_mut(c).iter_mut().zip(data.row(i)) {
            *s += v;
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            let n = counts[c] as f64;
            for (dst, &s) in centers.row_mut(c).iter_mut().zip(sums.row(c)) {
                *dst = s / n;
            }
        }
    }
    for c in 0..k {
        if counts[c] == 0 {
            let far = (0..dist.len())
                .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
                .expect("non-empty data");
            centers.row_mut(c).copy_from_slice(data.row(far));
            counts[assign[far]] -= 1;
            assign[far] = c;
            counts[c] = 1;
            dist[far] = 0.0;
        }
    }
}

/// L1-normalized histogram of nearest-center assignments.
pub fn encode_descriptors<'a>(descriptors: impl IntoIterator<Item = &'a [f64]>, cb: &Codebook) -> Result<Vec<f64>> {
    let mut hist = vec![0.0; cb.size()];
    let mut n = 0usize;
    for d in descriptors {
        if d.len() != cb.dim() {
            return Err(Error::Shape(format!(
                "descriptor width {} does not match codebook width {}",
                d.len(),
                cb.dim()
            )));
        }
        hist[cb.nearest(d).0] += 1.0;
        n += 1;
    }
    if n > 0 {
        hist.iter_mut().for_each(|h| *h /= n as f64);
    }
    Ok(hist)
}

pub fn encode_bow(points: &[InterestPoint], cb: &Codebook) -> Result<Vec<f64>> {
    encode_descriptors(points.iter().map(|p| p.descriptor.as_slice()), cb)
}
