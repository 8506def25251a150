//! `k`-means on the rows of the eigenspace and the anchor built from its
//! centers.
//!
//! The exact `k`-means minimizer is out of reach in general, so each call
//! runs several k-means++ seeded Lloyd refinements and keeps the best.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::eigen::Eigenspace;
use crate::error::{Error, Result};
use crate::model::mix_seed;
use crate::sync::Anchor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterConfig {
    pub restarts: usize,
    pub max_iters: usize,
    /// Stop once a Lloyd step improves the objective by less than this
    /// fraction.
    pub rel_tol: f64,
    pub seed: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self { restarts: 10, max_iters: 100, rel_tol: 1e-10, seed: 0 }
    }
}

impl ClusterConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.restarts == 0 || self.max_iters == 0 || !(self.rel_tol >= 0.0) {
            return Err(Error::InvalidParams(format!("bad cluster config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Clustering {
    /// `k × dim`, one center per row.
    pub centers: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub objective: f64,
    pub converged: bool,
    /// Whether any restart had to re-seed an empty cluster.
    pub reseeded_empty: bool,
    /// Final objective of each restart, in restart order.
    pub restart_objectives: Vec<f64>,
}

fn sq_dist(points: &DMatrix<f64>, i: usize, centers: &DMatrix<f64>, c: usize) -> f64 {
    points.row(i).iter().zip(centers.row(c).iter()).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `Σ_i ‖v_i − μ_{label_i}‖²`.
pub fn objective(points: &DMatrix<f64>, centers: &DMatrix<f64>, labels: &[usize]) -> f64 {
    labels.iter().enumerate().map(|(i, &c)| sq_dist(points, i, centers, c)).sum()
}

fn kmeans_pp(points: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let m = points.nrows();
    let mut centers = DMatrix::zeros(k, points.ncols());
    let first = rng.random_range(0..m);
    centers.row_mut(0).copy_from(&points.row(first));
    let mut best: Vec<f64> = (0..m).map(|i| sq_dist(points, i, &centers, 0)).collect();
    for c in 1..k {
        let total: f64 = best.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = m - 1;
            for (i, &w) in best.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..m)
        };
        centers.row_mut(c).copy_from(&points.row(pick));
        for (i, b) in best.iter_mut().enumerate() {
            *b = b.min(sq_dist(points, i, &centers, c));
        }
    }
    centers
}

/// Result of one Lloyd run plus the objective after every update.
pub(crate) struct LloydRun {
    pub centers: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub objective: f64,
    pub converged: bool,
    pub reseeded_empty: bool,
    #[allow(dead_code)]
    pub history: Vec<f64>,
}

/// Nearest-center labels, ties to the lowest center index.
fn assign(points: &DMatrix<f64>, centers: &DMatrix<f64>, labels: &mut [usize]) {
    for (i, label) in labels.iter_mut().enumerate() {
        let mut best = (f64::INFINITY, 0);
        for c in 0..centers.nrows() {
            let dist = sq_dist(points, i, centers, c);
            if dist < best.0 {
                best = (dist, c);
            }
        }
        *label = best.1;
    }
}

pub(crate) fn lloyd(points: &DMatrix<f64>, mut centers: DMatrix<f64>, cfg: &ClusterConfig) -> LloydRun {
    let (m, dim) = points.shape();
    let k = centers.nrows();
    let mut labels = vec![0usize; m];
    let mut history = Vec::new();
    let mut converged = false;
    let mut reseeded_empty = false;
    let mut prev = f64::INFINITY;

    // Each pass assigns and then updates. The run stops right after an
    // assignment, so returned labels always point at their nearest center.
    for iter in 0..=cfg.max_iters {
        assign(points, &centers, &mut labels);
        let obj = objective(points, &centers, &labels);
        history.push(obj);
        if obj == 0.0 || (prev.is_finite() && prev - obj <= cfg.rel_tol * prev) {
            converged = true;
            prev = obj;
            break;
        }
        prev = obj;
        if iter == cfg.max_iters {
            break;
        }

        // update
        let mut sums = DMatrix::<f64>::zeros(k, dim);
        let mut counts = vec![0usize; k];
        for (i, &c) in labels.iter().enumerate() {
            counts[c] += 1;
            let mut row = sums.row_mut(c);
            row += points.row(i);
        }
        for c in 0..k {
            if counts[c] > 0 {
                let mean = sums.row(c) / counts[c] as f64;
                centers.row_mut(c).copy_from(&mean);
            }
        }
        // empty clusters move to the point farthest from its own center
        for c in (0..k).filter(|&c| counts[c] == 0) {
            reseeded_empty = true;
            let far = (0..m)
                .map(|i| (sq_dist(points, i, &centers, labels[i]), i))
                .fold((-1.0, 0), |a, b| if b.0 > a.0 { b } else { a })
                .1;
            let row = points.row(far).into_owned();
            centers.row_mut(c).copy_from(&row);
        }
    }
    LloydRun { centers, labels, objective: prev, converged, reseeded_empty, history }
}

/// Multi-restart `k`-means over the rows of `points`.
pub fn d_means(points: &DMatrix<f64>, k: usize, cfg: &ClusterConfig) -> Result<Clustering> {
    cfg.validate()?;
    let m = points.nrows();
    if k == 0 || m < k {
        return Err(Error::TooFewPoints { points: m, clusters: k });
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }

    let runs: Vec<LloydRun> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[cfg.seed, r as u64]));
            let init = kmeans_pp(points, k, &mut rng);
            lloyd(points, init, cfg)
        })
        .collect();

    let restart_objectives: Vec<f64> = runs.iter().map(|r| r.objective).collect();
    let reseeded_empty = runs.iter().any(|r| r.reseeded_empty);
    // lowest objective, earliest restart on ties
    let best = runs
        .into_iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| a.objective.total_cmp(&b.objective).then(ia.cmp(ib)))
        .map(|(_, r)| r)
        .expect("at least one restart");
    Ok(Clustering {
        centers: best.centers,
        labels: best.labels,
        objective: best.objective,
        converged: best.converged,
        reseeded_empty,
        restart_objectives,
    })
}

/// Clusters the `nd` rows of `U` into `d` groups and stacks the centers,
/// scaled by `√n`, as the rows of the anchor `M`.
pub fn build_anchor(es: &Eigenspace, cfg: &ClusterConfig) -> Result<Anchor> {
    let d = es.d();
    let n = es.n();
    if n * d != es.dim() {
        return Err(Error::DimensionMismatch { expected: n * d, found: es.dim() });
    }
    let clustering = d_means(&es.u, d, cfg)?;
    let m = &clustering.centers * (n as f64).sqrt();
    Ok(Anchor { m, clustering_objective: clustering.objective, empty_cluster_flag: clustering.reseeded_empty })
}
