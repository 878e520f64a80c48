//! Exact RIP and HiRIP constants by exhaustive support enumeration.
//!
//! Only usable on small matrices. The constant over all supports of size at
//! most `s` equals the constant over supports of size exactly `s`, because
//! the spectrum of a principal Gram submatrix interlaces that of any larger
//! one; the same holds for hierarchical supports and their maximal
//! completions.

use serde::{Deserialize, Serialize};

use crate::block::{enumerate_maximal_supports, maximal_support_count, BlockShape, SparsityProfile};
use crate::combin::{binomial, for_each_combination_starting_at};
use crate::error::{dim_err, param_err, Error, Result};
use crate::linalg::{hermitian_extremes, CMatrix};
use crate::sensing::PilotDesign;

/// Default limit on the number of enumerated supports.
pub const ENUMERATION_CAP: u128 = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RipReport {
    pub rows: usize,
    pub cols: usize,
    /// Block dims for HiRIP, `None` for the flat constant.
    pub shape: Option<Vec<usize>>,
    /// `[s]` for the flat constant, the profile otherwise.
    pub sparsity: Vec<usize>,
    pub delta: f64,
    pub witness: Vec<usize>,
    pub enumerated: u128,
}

impl RipReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// `max(λ_max − 1, 1 − λ_min)` of the Gram block `G[S, S]`.
fn gram_deviation(gram: &CMatrix, support: &[usize]) -> f64 {
    let k = support.len();
    if k == 0 {
        return 0.0;
    }
    let block = CMatrix::from_fn(k, k, |i, j| gram[(support[i], support[j])]);
    let (lo, hi) = hermitian_extremes(block);
    (hi - 1.0).max(1.0 - lo).max(0.0)
}

/// Spectral deviation of `A_S^H A_S` from the identity.
pub fn support_deviation(a: &CMatrix, support: &[usize]) -> Result<f64> {
    if support.iter().any(|&i| i >= a.ncols()) {
        return dim_err("support index out of range");
    }
    let sub = CMatrix::from_fn(a.nrows(), support.len(), |i, j| a[(i, support[j])]);
    let local: Vec<usize> = (0..support.len()).collect();
    Ok(gram_deviation(&(sub.adjoint() * &sub), &local))
}

/// Larger deviation wins; ties keep the candidate that comes first.
fn better(a: (f64, Vec<usize>), b: (f64, Vec<usize>)) -> (f64, Vec<usize>) {
    if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
        b
    } else {
        a
    }
}

/// Exact `δ_s(A)`.
pub fn rip_constant(a: &CMatrix, s: usize) -> Result<RipReport> {
    rip_constant_with_cap(a, s, ENUMERATION_CAP)
}

pub fn rip_constant_with_cap(a: &CMatrix, s: usize, cap: u128) -> Result<RipReport> {
    let cols = a.ncols();
    if s == 0 || cols == 0 {
        return param_err("need s ≥ 1 and a non-empty matrix");
    }
    let s = s.min(cols);
    let count = binomial(cols, s);
    if count > cap {
        return Err(Error::CapExceeded { count, cap });
    }
    let gram = a.adjoint() * a;
    let scan_first = |first: usize| {
        let mut best = (f64::NEG_INFINITY, Vec::new());
        for_each_combination_starting_at(cols, s, first, |supp| {
            let d = gram_deviation(&gram, supp);
            if d > best.0 {
                best = (d, supp.to_vec());
            }
        });
        best
    };
    let firsts = 0..=cols - s;
    #[cfg(feature = "parallel")]
    let best = {
        use rayon::prelude::*;
        firsts.into_par_iter().map(scan_first).reduce(|| (f64::NEG_INFINITY, Vec::new()), better)
    };
    #[cfg(not(feature = "parallel"))]
    let best = firsts.map(scan_first).fold((f64::NEG_INFINITY, Vec::new()), better);

    Ok(RipReport {
        rows: a.nrows(),
        cols,
        shape: None,
        sparsity: vec![s],
        delta: best.0,
        witness: best.1,
        enumerated: count,
    })
}

/// Exact `δ_s` restricted to `s`-hierarchically-sparse vectors on `shape`.
pub fn hirip_constant(a: &CMatrix, shape: &BlockShape, s: &SparsityProfile) -> Result<RipReport> {
    hirip_constant_with_cap(a, shape, s, ENUMERATION_CAP)
}

pub fn hirip_constant_with_cap(a: &CMatrix, shape: &BlockShape, s: &SparsityProfile, cap: u128) -> Result<RipReport> {
    if shape.total() != a.ncols() {
        return dim_err(format!("shape {:?} does not cover {} columns", shape.dims(), a.ncols()));
    }
    let s = s.clamped_to(shape)?;
    let count = maximal_support_count(shape, &s);
    if count > cap {
        return Err(Error::CapExceeded { count, cap });
    }
    let supports = enumerate_maximal_supports(shape, &s)?;
    let gram = a.adjoint() * a;
    let score = |(i, supp): (usize, &Vec<usize>)| (gram_deviation(&gram, supp), i);
    // ties keep the earliest support in enumeration order
    let pick = |x: (f64, usize), y: (f64, usize)| if y.0 > x.0 || (y.0 == x.0 && y.1 < x.1) { y } else { x };
    #[cfg(feature = "parallel")]
    let (delta, at) = {
        use rayon::prelude::*;
        supports.par_iter().enumerate().map(score).reduce(|| (f64::NEG_INFINITY, usize::MAX), pick)
    };
    #[cfg(not(feature = "parallel"))]
    let (delta, at) = supports.iter().enumerate().map(score).fold((f64::NEG_INFINITY, usize::MAX), pick);

    Ok(RipReport {
        rows: a.nrows(),
        cols: a.ncols(),
        shape: Some(shape.dims().to_vec()),
        sparsity: s.levels().to_vec(),
        delta,
        witness: supports[at].clone(),
        enumerated: count,
    })
}

/// How a three-level profile `(s1, s2, s3)` is split between the factors of
/// `A1 ⊗ A2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Grouping {
    /// `A1` carries level 1, `A2` levels 2 and 3.
    OuterFirst,
    /// `A1` carries levels 1 and 2, `A2` level 3.
    InnerMerged,
}

/// Upper bound on the HiRIP constant of `A1 ⊗ A2` from exact flat constants
/// of the factors.
pub fn lemma7_bound(a1: &CMatrix, a2: &CMatrix, s: &SparsityProfile, grouping: Grouping) -> Result<f64> {
    let [s1, s2, s3] = s.levels() else {
        return param_err(format!("need a three-level profile, got {:?}", s.levels()));
    };
    let (k1, k2) = match grouping {
        Grouping::OuterFirst => (*s1, s2 * s3),
        Grouping::InnerMerged => (s1 * s2, *s3),
    };
    let d1 = rip_constant(a1, k1.min(a1.ncols()))?.delta;
    let d2 = rip_constant(a2, k2.min(a2.ncols()))?.delta;
    Ok((1.0 + d1) * (1.0 + d2) - 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtensionCheck {
    pub delta_restricted: f64,
    pub delta_extended: f64,
    pub holds: bool,
}

/// Compares `δ_s` of the `Np × UD` delay factor with its zero-padded
/// `Np × N` extension.
pub fn eq21_check(design: &PilotDesign, s: usize) -> Result<ExtensionCheck> {
    let p = design.params();
    if s == 0 || s > p.u * p.d {
        return param_err(format!("need 1 ≤ s ≤ UD = {}", p.u * p.d));
    }
    let op = crate::sensing::KroneckerSensingOperator::new(design.clone(), crate::sensing::Vectorization::FrequencySpace);
    let delta_restricted = rip_constant(&op.tau_factor(), s)?.delta;
    let delta_extended = rip_constant(&op.tau_factor_extended(), s)?.delta;
    Ok(ExtensionCheck { delta_restricted, delta_extended, holds: delta_restricted <= delta_extended + 1e-12 })
}
