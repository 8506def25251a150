//! Permutations of `[d]`, rounding of real `d×d` matrices onto the
//! permutation group, and the normalized Hamming loss.
//!
//! A [`Permutation`] stores its images: `images[j] = i` means the matrix
//! view has `P[i][j] = 1`, i.e. `P e_j = e_i`. Composition follows the
//! matrix product, so `compose(a, b).images[j] = a.images[b.images[j]]`.

use std::collections::HashMap;
use std::fmt;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A bijection on `{0, …, d-1}`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation {
    images: Vec<usize>,
}

impl Permutation {
    pub fn identity(d: usize) -> Self {
        Self { images: (0..d).collect() }
    }

    /// Validates that `images` is a bijection of `0..images.len()`.
    pub fn new(images: Vec<usize>) -> Result<Self> {
        let d = images.len();
        if d == 0 {
            return Err(Error::InvalidPermutation("empty image list".into()));
        }
        let mut seen = vec![false; d];
        for &i in &images {
            if i >= d {
                return Err(Error::InvalidPermutation(format!("image {i} out of range for d={d}")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidPermutation(format!("image {i} repeated")));
            }
        }
        Ok(Self { images })
    }

    pub fn d(&self) -> usize {
        self.images.len()
    }

    pub fn images(&self) -> &[usize] {
        &self.images
    }

    pub fn is_identity(&self) -> bool {
        self.images.iter().enumerate().all(|(j, &i)| i == j)
    }

    /// Dense 0/1 matrix with `P[images[j]][j] = 1`.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        let d = self.d();
        let mut m = DMatrix::zeros(d, d);
        for (j, &i) in self.images.iter().enumerate() {
            m[(i, j)] = 1.0;
        }
        m
    }

    /// `⟨P, q⟩ = Σ_j q[images[j]][j]`.
    pub fn score(&self, q: &DMatrix<f64>) -> f64 {
        self.images.iter().enumerate().map(|(j, &i)| q[(i, j)]).sum()
    }
}

impl fmt::Debug for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.images)
    }
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (k, i) in self.images.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{i}")?;
        }
        write!(f, "]")
    }
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = Error;

    fn try_from(images: Vec<usize>) -> Result<Self> {
        Self::new(images)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Self {
        p.images
    }
}

/// Group product: the matrix of the result is `matrix(a) · matrix(b)`.
pub fn compose(a: &Permutation, b: &Permutation) -> Result<Permutation> {
    if a.d() != b.d() {
        return Err(Error::DimensionMismatch { expected: a.d(), found: b.d() });
    }
    Ok(Permutation { images: b.images.iter().map(|&j| a.images[j]).collect() })
}

pub fn inverse(a: &Permutation) -> Permutation {
    let mut images = vec![0; a.d()];
    for (j, &i) in a.images.iter().enumerate() {
        images[i] = j;
    }
    Permutation { images }
}

/// Fisher–Yates draw; every one of the `d!` permutations is equally likely.
pub fn sample_uniform<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Permutation {
    let mut images: Vec<usize> = (0..d).collect();
    for i in (1..d).rev() {
        let j = rng.random_range(0..=i);
        images.swap(i, j);
    }
    Permutation { images }
}

/// All permutations of `[d]` in lexicographic order of their image lists.
pub fn all_permutations(d: usize) -> Vec<Permutation> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..d).collect();
    loop {
        out.push(Permutation { images: cur.clone() });
        // next lexicographic permutation
        let Some(k) = (0..d.saturating_sub(1)).rev().find(|&k| cur[k] < cur[k + 1]) else {
            break;
        };
        let l = (k + 1..d).rev().find(|&l| cur[k] < cur[l]).unwrap();
        cur.swap(k, l);
        cur[k + 1..].reverse();
    }
    out
}

/// Absolute slack under which two assignment scores count as tied.
pub(crate) fn tie_tolerance(q: &DMatrix<f64>) -> f64 {
    let scale = q.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    1e-12 * q.nrows() as f64 * scale
}

/// Rounds `q` onto the permutation group: returns `argmax_P ⟨P, q⟩`, which is
/// also `argmin_P ‖P − q‖_F` because every permutation matrix has the same
/// Frobenius norm.
///
/// Solved exactly with the Hungarian algorithm. Among optimal assignments
/// (scores within a relative `1e-12` of the maximum) the lexicographically
/// smallest image list is returned.
pub fn project_to_permutation(q: &DMatrix<f64>) -> Result<Permutation> {
    let d = q.nrows();
    if d == 0 {
        return Err(Error::InvalidPermutation("empty score matrix".into()));
    }
    if q.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, found: q.ncols() });
    }
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    if d == 1 {
        return Ok(Permutation::identity(1));
    }

    let all: Vec<usize> = (0..d).collect();
    let (_, best) = max_assignment(q, &all, &all);
    let tol = tie_tolerance(q);

    // Fix columns left to right, taking the smallest row that still admits
    // an optimal completion.
    let mut images = Vec::with_capacity(d);
    let mut used = vec![false; d];
    let mut prefix_score = 0.0;
    for j in 0..d {
        let rest_cols: Vec<usize> = (j + 1..d).collect();
        let mut chosen = None;
        for i in (0..d).filter(|&i| !used[i]) {
            let rows: Vec<usize> = (0..d).filter(|&r| !used[r] && r != i).collect();
            let (_, tail) = max_assignment(q, &rows, &rest_cols);
            if prefix_score + q[(i, j)] + tail >= best - tol {
                chosen = Some(i);
                break;
            }
        }
        // the row from the Hungarian optimum always qualifies, so this only
        // trips if rounding pushed every candidate below the slack
        let i = chosen.unwrap_or_else(|| (0..d).find(|&r| !used[r]).unwrap());
        used[i] = true;
        prefix_score += q[(i, j)];
        images.push(i);
    }
    Ok(Permutation { images })
}

/// Maximum-weight perfect matching of `rows` onto `cols` (equal lengths) in
/// the score matrix `q`. Returns the row assigned to each column and the
/// total score.
fn max_assignment(q: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> (Vec<usize>, f64) {
    let m = cols.len();
    if m == 0 {
        return (Vec::new(), 0.0);
    }
    debug_assert_eq!(rows.len(), m);

    // cost = offset − score keeps costs non-negative
    let offset = rows
        .iter()
        .flat_map(|&i| cols.iter().map(move |&j| q[(i, j)]))
        .fold(f64::NEG_INFINITY, f64::max);
    let cost = |r: usize, c: usize| offset - q[(rows[r], cols[c])];

    // O(m^3) shortest augmenting path with potentials, 1-based sentinels
    let inf = f64::INFINITY;
    let mut u = vec![0.0; m + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for r in 1..=m {
        p[0] = r;
        let mut c0 = 0usize;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[c0] = true;
            let r0 = p[c0];
            let mut delta = inf;
            let mut c1 = 0usize;
            for c in 1..=m {
                if used[c] {
                    continue;
                }
                let cur = cost(r0 - 1, c - 1) - u[r0] - v[c];
                if cur < minv[c] {
                    minv[c] = cur;
                    way[c] = c0;
                }
                if minv[c] < delta {
                    delta = minv[c];
                    c1 = c;
                }
            }
            for c in 0..=m {
                if used[c] {
                    u[p[c]] += delta;
                    v[c] -= delta;
                } else {
                    minv[c] -= delta;
                }
            }
            c0 = c1;
            if p[c0] == 0 {
                break;
            }
        }
        loop {
            let c1 = way[c0];
            p[c0] = p[c1];
            c0 = c1;
            if c0 == 0 {
                break;
            }
        }
    }

    let assignment: Vec<usize> = (1..=m).map(|c| rows[p[c] - 1]).collect();
    let total = assignment.iter().zip(cols).map(|(&i, &j)| q[(i, j)]).sum();
    (assignment, total)
}

/// Normalized Hamming loss modulo a global permutation:
/// `min_P (1/n) Σ_j 1{est_j ≠ truth_j · Pᵀ}`.
///
/// For each `j` exactly one global `P` makes block `j` correct, namely
/// `P = est_j⁻¹ · truth_j`, so the minimum is attained at the most frequent
/// such `P`. This is exact for every `d` and runs in `O(n d)`.
pub fn hamming_loss(est: &[Permutation], truth: &[Permutation]) -> Result<f64> {
    let n = truth.len();
    if est.len() != n {
        return Err(Error::LengthMismatch { expected: n, found: est.len() });
    }
    if n == 0 {
        return Err(Error::LengthMismatch { expected: 1, found: 0 });
    }
    let d = truth[0].d();
    let mut counts: HashMap<Permutation, usize> = HashMap::new();
    for (e, t) in est.iter().zip(truth) {
        if e.d() != d || t.d() != d {
            return Err(Error::DimensionMismatch { expected: d, found: e.d().max(t.d()) });
        }
        let aligning = compose(&inverse(e), t)?;
        *counts.entry(aligning).or_default() += 1;
    }
    let best = counts.values().copied().max().unwrap_or(0);
    Ok((n - best) as f64 / n as f64)
}
