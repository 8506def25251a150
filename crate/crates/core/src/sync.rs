//! Vanilla and anchored spectral estimators, plus diagnostics that compare
//! the empirical eigenspace with the population one.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigen::{sorted_symmetric_eigen, Eigenspace};
use crate::error::{Error, Result};
use crate::model::population_eigenspace;
use crate::permutation::{project_to_permutation, Permutation};

/// The `d × d` anchor whose rows are the `√n`-scaled cluster centers.
#[derive(Debug, Clone)]
pub struct Anchor {
    pub m: DMatrix<f64>,
    pub clustering_objective: f64,
    pub empty_cluster_flag: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Vanilla,
    Anchored,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::Vanilla, Method::Anchored];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Vanilla => "vanilla",
            Method::Anchored => "anchored",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(Method::Vanilla),
            "anchored" => Ok(Method::Anchored),
            other => Err(Error::InvalidParams(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSet {
    pub perms: Vec<Permutation>,
    pub method: Method,
}

impl EstimateSet {
    /// CSV with header `object_index,image_0,…,image_{d-1}`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        let d = self.perms.first().map_or(0, Permutation::d);
        let cols: Vec<String> = (0..d).map(|i| format!("image_{i}")).collect();
        writeln!(w, "object_index,{}", cols.join(","))?;
        for (j, p) in self.perms.iter().enumerate() {
            let imgs: Vec<String> = p.images().iter().map(ToString::to_string).collect();
            writeln!(w, "{j},{}", imgs.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        use std::io::BufRead;
        let mut lines = std::io::BufReader::new(r).lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty estimate file".into()))??;
        if !header.starts_with("object_index") {
            return Err(Error::Format(format!("unexpected header {header:?}")));
        }
        let mut perms = Vec::new();
        for (row, line) in lines.enumerate() {
            let line = line?;
            let mut fields = line.split(',');
            let idx: usize = fields
                .next()
                .and_then(|f| f.trim().parse().ok())
                .ok_or_else(|| Error::Format(format!("bad object index on line {}", row + 2)))?;
            if idx != row {
                return Err(Error::Format(format!("object index {idx} out of order")));
            }
            let images = fields
                .map(|f| f.trim().parse::<usize>().map_err(|e| Error::Format(e.to_string())))
                .collect::<Result<Vec<_>>>()?;
            perms.push(Permutation::new(images)?);
        }
        // method is not stored in the file
        Ok(Self { perms, method: Method::Anchored })
    }
}

fn round_all(es: &Eigenspace, right: &DMatrix<f64>) -> Result<Vec<Permutation>> {
    (0..es.n())
        .into_par_iter()
        .map(|j| project_to_permutation(&(es.block_row(j)? * right)))
        .collect()
}

/// `Z̃_1 = I`, `Z̃_j = round(U_j U_1ᵀ)`.
pub fn vanilla_estimate(es: &Eigenspace) -> Result<EstimateSet> {
    let first_t = es.block_row(0)?.transpose();
    let mut perms = round_all(es, &first_t)?;
    perms[0] = Permutation::identity(es.d());
    Ok(EstimateSet { perms, method: Method::Vanilla })
}

/// `Ẑ_j = round(U_j Mᵀ)` for every `j`, including the first.
pub fn anchored_estimate(es: &Eigenspace, anchor: &Anchor) -> Result<EstimateSet> {
    let d = es.d();
    if anchor.m.shape() != (d, d) {
        return Err(Error::DimensionMismatch { expected: d, found: anchor.m.nrows() });
    }
    if anchor.m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let perms = round_all(es, &anchor.m.transpose())?;
    Ok(EstimateSet { perms, method: Method::Anchored })
}

/// Perturbation quantities relative to the ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    /// `H = Uᵀ U*`.
    pub h: DMatrix<f64>,
    /// `‖U H − U*‖_op`.
    pub global_err: f64,
    /// `max_j ‖U_j H − U*_j‖_op`.
    pub blockwise_err: f64,
    /// `min_P ‖M − P Hᵀ‖_F`, when an anchor was supplied.
    pub anchor_err: Option<f64>,
    /// `λ_d − λ_{d+1}`, when the solver reported the next eigenvalue.
    pub gap: Option<f64>,
    /// `min_O ‖H − O‖_op = max_i |σ_i(H) − 1|`.
    pub h_orth_defect: f64,
}

/// Largest singular value of a matrix with Gram matrix `gram`.
fn op_norm_from_gram(gram: DMatrix<f64>) -> f64 {
    let (vals, _) = sorted_symmetric_eigen(gram);
    vals.first().copied().unwrap_or(0.0).max(0.0).sqrt()
}

pub fn compute_diagnostics(es: &Eigenspace, truth: &[Permutation], anchor: Option<&Anchor>) -> Result<Diagnostics> {
    let (n, d) = (es.n(), es.d());
    if truth.is_empty() {
        return Err(Error::MissingTruth);
    }
    if truth.len() != n {
        return Err(Error::LengthMismatch { expected: n, found: truth.len() });
    }
    if let Some(bad) = truth.iter().find(|z| z.d() != d) {
        return Err(Error::DimensionMismatch { expected: d, found: bad.d() });
    }

    let u_star = population_eigenspace(truth);
    let h = es.u.transpose() * &u_star;

    let mut gram = DMatrix::<f64>::zeros(d, d);
    let mut blockwise_err = 0.0f64;
    for j in 0..n {
        let diff = es.u.rows(j * d, d) * &h - u_star.rows(j * d, d);
        let g = diff.transpose() * &diff;
        gram += &g;
        blockwise_err = blockwise_err.max(op_norm_from_gram(g));
    }
    let global_err = op_norm_from_gram(gram);

    let h_orth_defect = h.clone().svd(false, false).singular_values.iter().fold(0.0f64, |m, s| m.max((s - 1.0).abs()));

    // ‖M − P Hᵀ‖² = ‖M‖² + ‖H‖² − 2⟨P, M H⟩, so the best P rounds M H
    let anchor_err = anchor
        .map(|a| -> Result<f64> {
            let p = project_to_permutation(&(&a.m * &h))?;
            Ok((&a.m - p.to_matrix() * h.transpose()).norm())
        })
        .transpose()?;

    Ok(Diagnostics { h, global_err, blockwise_err, anchor_err, gap: es.gap(), h_orth_defect })
}
