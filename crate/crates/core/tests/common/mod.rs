//! Brute-force oracles shared by the integration tests. None of these call
//! into the solver code they are checked against.
#![allow(dead_code)]

use nalgebra::DMatrix;
use permsync::Permutation;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// All permutations of `0..d` as image vectors, in lexicographic order.
pub fn lex_images(d: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; d], &mut out);
    out
}

/// `⟨P, q⟩` where `P[images[j]][j] = 1`.
pub fn inner(images: &[usize], q: &DMatrix<f64>) -> f64 {
    images.iter().enumerate().map(|(j, &i)| q[(i, j)]).sum()
}

/// Exhaustive argmax with the documented tie rule: the lexicographically
/// smallest image vector whose score is within `1e-12·d·max|q|` of the best.
pub fn brute_project(q: &DMatrix<f64>) -> Vec<usize> {
    let d = q.nrows();
    let all = lex_images(d);
    let best = all.iter().map(|p| inner(p, q)).fold(f64::NEG_INFINITY, f64::max);
    let scale = q.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-12 * d as f64 * scale;
    all.into_iter().find(|p| inner(p, q) >= best - tol).unwrap()
}

/// Exhaustive `min_Q (1/n)·#{j : est_j ≠ truth_j ∘ Q}`.
pub fn brute_loss(est: &[Vec<usize>], truth: &[Vec<usize>]) -> f64 {
    let d = truth[0].len();
    let n = truth.len();
    lex_images(d)
        .iter()
        .map(|q| {
            let wrong = est
                .iter()
                .zip(truth)
                .filter(|(e, t)| (0..d).any(|i| e[i] != t[q[i]]))
                .count();
            wrong as f64 / n as f64
        })
        .fold(f64::INFINITY, f64::min)
}

pub fn random_images<R: Rng>(d: usize, rng: &mut R) -> Vec<usize> {
    let mut v: Vec<usize> = (0..d).collect();
    for i in (1..d).rev() {
        let j = rng.random_range(0..=i);
        v.swap(i, j);
    }
    v
}

pub fn perm(images: &[usize]) -> Permutation {
    Permutation::new(images.to_vec()).unwrap()
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, descending.
pub fn jacobi_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[(i, j)].powi(2)).sum();
        let total: f64 = m.iter().map(|v| v * v).sum();
        if off <= 1e-30 * total {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[(k, p)], m[(k, q)]);
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[(p, k)], m[(q, k)]);
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

pub fn random_symmetric<R: Rng>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    (&a + a.transpose()) * 0.5
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Median by sorting (average of the two middle values for even length).
pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 0 {
        0.5 * (s[m - 1] + s[m])
    } else {
        s[m]
    }
}
