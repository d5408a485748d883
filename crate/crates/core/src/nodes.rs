//! Node-count estimation: project spectrogram frames to two principal
//! components, fit Gaussian mixtures of increasing size and read the elbow
//! of the likelihood curve.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{pca_project, rng, Matrix, Rng};

pub const COVARIANCE_FLOOR: f64 = 1e-6;
pub const EM_TOL: f64 = 1e-6;
pub const EM_MAX_ITER: usize = 500;
pub const RESTARTS: usize = 5;

/// Stacks the frames (rows) of every magnitude matrix and projects them onto
/// their first two principal components.
pub fn frame_features(specs: &[&Matrix]) -> Result<Matrix> {
    let cols = match specs.first() {
        Some(m) => m.cols(),
        None => return Err(Error::InsufficientData("no spectrograms".into())),
    };
    let total: usize = specs.iter().map(|m| m.rows()).sum();
    if total < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 frames, got {total}"
        )));
    }
    let mut data = Vec::with_capacity(total * cols);
    for m in specs {
        if m.cols() != cols {
            return Err(Error::ShapeMismatch(format!(
                "spectrograms have {} and {} bins",
                cols,
                m.cols()
            )));
        }
        data.extend_from_slice(m.as_slice());
    }
    let stacked = Matrix::from_vec(total, cols, data)?;
    if cols >= 2 {
        pca_project(&stacked, 2)
    } else {
        // A single bin has one component; the second is identically zero.
        let p = pca_project(&stacked, 1)?;
        Ok(Matrix::from_fn(total, 2, |i, j| if j == 0 { p[(i, 0)] } else { 0.0 }))
    }
}

/// Symmetric 2 × 2 matrix `[[a, b], [b, c]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cov2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Cov2 {
    pub fn det(&self) -> f64 {
        self.a * self.c - self.b * self.b
    }

    pub fn eigenvalues(&self) -> (f64, f64) {
        let mean = 0.5 * (self.a + self.c);
        let r = (0.25 * (self.a - self.c).powi(2) + self.b * self.b).sqrt();
        (mean + r, mean - r)
    }

    /// Raises every eigenvalue to at least `floor`, keeping the eigenvectors.
    pub fn floored(&self, floor: f64) -> Cov2 {
        let (l1, l2) = self.eigenvalues();
        if l2 >= floor {
            return *self;
        }
        // Unit eigenvector of l1.
        let (vx, vy) = if self.b.abs() > 1e-300 {
            let (x, y) = (self.b, l1 - self.a);
            let n = x.hypot(y);
            (x / n, y / n)
        } else if self.a >= self.c {
            (1.0, 0.0)
        } else {
            (0.0, 1.0)
        };
        let (e1, e2) = (l1.max(floor), l2.max(floor));
        // e1 v vᵗ + e2 w wᵗ with w ⟂ v.
        Cov2 {
            a: e1 * vx * vx + e2 * vy * vy,
            b: (e1 - e2) * vx * vy,
            c: e1 * vy * vy + e2 * vx * vx,
        }
    }

    fn log_density(&self, mean: [f64; 2], p: [f64; 2]) -> f64 {
        let det = self.det();
        let (dx, dy) = (p[0] - mean[0], p[1] - mean[1]);
        let q = (self.c * dx * dx - 2.0 * self.b * dx * dy + self.a * dy * dy) / det;
        -0.5 * q - (2.0 * PI).ln() - 0.5 * det.ln()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmFit {
    pub weights: Vec<f64>,
    pub means: Vec<[f64; 2]>,
    pub covariances: Vec<Cov2>,
    /// Mean per-point log density on the fitted data.
    pub train_log_likelihood: f64,
    pub iterations: usize,
    /// Mean log-likelihood after each EM iteration of the winning restart.
    pub history: Vec<f64>,
    /// All points were identical; only the covariance floor kept EM defined.
    pub degenerate: bool,
}

impl GmmFit {
    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn log_density(&self, p: [f64; 2]) -> f64 {
        let terms: Vec<f64> = (0..self.n_components())
            .map(|j| self.weights[j].ln() + self.covariances[j].log_density(self.means[j], p))
            .collect();
        log_sum_exp(&terms)
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn points(x: &Matrix) -> Result<Vec<[f64; 2]>> {
    if x.cols() != 2 {
        return Err(Error::ShapeMismatch(format!(
            "expected 2 feature columns, got {}",
            x.cols()
        )));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("gmm features"));
    }
    Ok((0..x.rows()).map(|i| [x[(i, 0)], x[(i, 1)]]).collect())
}

fn dist2(p: [f64; 2], q: [f64; 2]) -> f64 {
    (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)
}

/// k-means++ seeding: first center uniform, the rest drawn with probability
/// proportional to the squared distance to the nearest chosen center.
fn kmeans_pp(pts: &[[f64; 2]], k: usize, g: &mut Rng) -> Vec<[f64; 2]> {
    let mut centers = vec![pts[g.random_range(0..pts.len())]];
    let mut d2: Vec<f64> = pts.iter().map(|&p| dist2(p, centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut r = g.random::<f64>() * total;
            let mut pick = pts.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if r < d {
                    pick = i;
                    break;
                }
                r -= d;
            }
            pick
        } else {
            g.random_range(0..pts.len())
        };
        let c = pts[idx];
        centers.push(c);
        for (d, &p) in d2.iter_mut().zip(pts) {
            *d = d.min(dist2(p, c));
        }
    }
    centers
}

fn sample_covariance(pts: &[[f64; 2]], w: impl Fn(usize) -> f64, mean: [f64; 2], total: f64) -> Cov2 {
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for (i, p) in pts.iter().enumerate() {
        let wi = w(i);
        let (dx, dy) = (p[0] - mean[0], p[1] - mean[1]);
        a += wi * dx * dx;
        b += wi * dx * dy;
        c += wi * dy * dy;
    }
    Cov2 {
        a: a / total,
        b: b / total,
        c: c / total,
    }
}

struct Em {
    weights: Vec<f64>,
    means: Vec<[f64; 2]>,
    covs: Vec<Cov2>,
}

impl Em {
    /// E-step; fills `resp` (n × k, row-major) and returns the mean log-likelihood.
    fn expect(&self, pts: &[[f64; 2]], resp: &mut [f64]) -> f64 {
        let k = self.weights.len();
        let log_w: Vec<f64> = self.weights.iter().map(|w| w.ln()).collect();
        let mut ll = 0.0;
        for (i, &p) in pts.iter().enumerate() {
            let row = &mut resp[i * k..(i + 1) * k];
            for j in 0..k {
                row[j] = log_w[j] + self.covs[j].log_density(self.means[j], p);
            }
            let lse = log_sum_exp(row);
            for r in row.iter_mut() {
                *r = (*r - lse).exp();
            }
            ll += lse;
        }
        ll / pts.len() as f64
    }

    fn maximize(&mut self, pts: &[[f64; 2]], resp: &[f64], fallback: Cov2) {
        let k = self.weights.len();
        let n = pts.len();
        for j in 0..k {
            let nj: f64 = (0..n).map(|i| resp[i * k + j]).sum();
            if nj < 1e-10 {
                // Starved component: keep its mean, reset its shape, tiny weight.
                self.weights[j] = 1e-10 / n as f64;
                self.covs[j] = fallback;
                continue;
            }
            let mut m = [0.0, 0.0];
            for (i, p) in pts.iter().enumerate() {
                m[0] += resp[i * k + j] * p[0];
                m[1] += resp[i * k + j] * p[1];
            }
            m = [m[0] / nj, m[1] / nj];
            self.means[j] = m;
            self.covs[j] = sample_covariance(pts, |i| resp[i * k + j], m, nj).floored(COVARIANCE_FLOOR);
            self.weights[j] = nj / n as f64;
        }
        let total: f64 = self.weights.iter().sum();
        self.weights.iter_mut().for_each(|w| *w /= total);
    }
}

fn fit_once(pts: &[[f64; 2]], k: usize, g: &mut Rng, global: Cov2) -> GmmFit {
    let centers = kmeans_pp(pts, k, g);
    let mut em = Em {
        weights: vec![1.0 / k as f64; k],
        means: centers,
        covs: vec![global; k],
    };
    let mut resp = vec![0.0; pts.len() * k];
    let mut history = Vec::new();
    let mut prev = em.expect(pts, &mut resp);
    let mut iterations = 0;
    while iterations < EM_MAX_ITER {
        em.maximize(pts, &resp, global);
        let ll = em.expect(pts, &mut resp);
        iterations += 1;
        history.push(ll);
        let improvement = ll - prev;
        prev = ll;
        if improvement < EM_TOL {
            break;
        }
    }
    GmmFit {
        weights: em.weights,
        means: em.means,
        covariances: em.covs,
        train_log_likelihood: prev,
        iterations,
        history,
        degenerate: false,
    }
}

/// Full-covariance EM, best of [`RESTARTS`] seeded k-means++ restarts.
pub fn fit_gmm(x: &Matrix, k: usize, seed: u64) -> Result<GmmFit> {
    let pts = points(x)?;
    let n = pts.len();
    if k == 0 || n < k {
        return Err(Error::InsufficientData(format!(
            "cannot fit {k} components to {n} points"
        )));
    }
    let mean = pts.iter().fold([0.0, 0.0], |m, p| [m[0] + p[0], m[1] + p[1]]);
    let mean = [mean[0] / n as f64, mean[1] / n as f64];
    let degenerate = pts.iter().all(|&p| p == pts[0]);
    let global = sample_covariance(&pts, |_| 1.0, mean, n as f64).floored(COVARIANCE_FLOOR);

    let mut g = rng(seed);
    let mut best: Option<GmmFit> = None;
    let restarts = if k == 1 { 1 } else { RESTARTS };
    for _ in 0..restarts {
        let fit = fit_once(&pts, k, &mut g, global);
        if best
            .as_ref()
            .map_or(true, |b| fit.train_log_likelihood > b.train_log_likelihood)
        {
            best = Some(fit);
        }
    }
    let mut best = best.expect("at least one restart");
    best.degenerate = degenerate;
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodCurve {
    pub points: Vec<(usize, f64)>,
}

pub fn likelihood_curve(x: &Matrix, ks: &[usize], seed: u64) -> Result<LikelihoodCurve> {
    if ks.is_empty() || ks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "component counts must be nonempty and strictly increasing".into(),
        ));
    }
    let mut points = Vec::with_capacity(ks.len());
    for &k in ks {
        let fit = fit_gmm(x, k, seed.wrapping_add(k as u64))?;
        log::debug!("gmm k={k}: mean log-likelihood {:.5}", fit.train_log_likelihood);
        points.push((k, fit.train_log_likelihood));
    }
    Ok(LikelihoodCurve { points })
}

impl LikelihoodCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,log_likelihood\n");
        for (k, ll) in &self.points {
            let _ = writeln!(s, "{k},{ll}");
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeEstimate {
    /// Cluster count at the elbow of the likelihood curve.
    pub clusters: usize,
    pub k: usize,
    /// `k + 2`: a few spare nodes are harmless.
    pub k_safe: usize,
}

pub const DEFAULT_GAIN_RATIO: f64 = 0.1;

/// Elbow rule on the likelihood curve.
///
/// The gain of step `n → n+1` is normalized by the total gain over the
/// curve. The elbow `n*` is the first `n` whose normalized gain falls below
/// `gain_ratio_threshold` (the last `n` if none does). One cluster is the
/// residual, so `k = max(n* − 1, 1)`.
pub fn estimate_nodes(curve: &LikelihoodCurve, gain_ratio_threshold: f64) -> Result<NodeEstimate> {
    let pts = &curve.points;
    if pts.len() < 2 {
        return Err(Error::InsufficientData(
            "likelihood curve needs at least 2 points".into(),
        ));
    }
    if !(gain_ratio_threshold > 0.0) {
        return Err(Error::InvalidArgument("gain ratio threshold must be positive".into()));
    }
    let lo = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let hi = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let clusters = if span <= 1e-12 {
        pts[0].0
    } else {
        pts.windows(2)
            .find(|w| (w[1].1 - w[0].1) / span < gain_ratio_threshold)
            .map_or(pts[pts.len() - 1].0, |w| w[0].0)
    };
    let k = clusters.saturating_sub(1).max(1);
    Ok(NodeEstimate {
        clusters,
        k,
        k_safe: k + 2,
    })
}

/// 2-D histogram of the features over their bounding box, `bins × bins` cells.
pub fn density_grid(x: &Matrix, bins: usize) -> Result<Vec<(f64, f64, usize)>> {
    let pts = points(x)?;
    if bins == 0 || pts.is_empty() {
        return Err(Error::InvalidArgument("density grid needs points and bins".into()));
    }
    let range = |c: usize| {
        let lo = pts.iter().map(|p| p[c]).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(|p| p[c]).fold(f64::NEG_INFINITY, f64::max);
        (lo, if hi > lo { hi - lo } else { 1.0 })
    };
    let (x0, wx) = range(0);
    let (y0, wy) = range(1);
    let mut counts = vec![0usize; bins * bins];
    let cell = |v: f64, lo: f64, w: f64| (((v - lo) / w * bins as f64) as usize).min(bins - 1);
    for p in &pts {
        counts[cell(p[1], y0, wy) * bins + cell(p[0], x0, wx)] += 1;
    }
    Ok((0..bins * bins)
        .map(|i| {
            let (r, c) = (i / bins, i % bins);
            (
                x0 + (c as f64 + 0.5) * wx / bins as f64,
                y0 + (r as f64 + 0.5) * wy / bins as f64,
                counts[i],
            )
        })
        .collect())
}

pub fn density_grid_csv(grid: &[(f64, f64, usize)]) -> String {
    let mut s = String::from("x,y,count\n");
    for (x, y, n) in grid {
        let _ = writeln!(s, "{x},{y},{n}");
    }
    s
}
