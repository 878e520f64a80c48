//! Small dense helpers on complex vectors and matrices.

use nalgebra::{DMatrix, DVector};

use crate::C64;

pub type CMatrix = DMatrix<C64>;

pub fn zeros(n: usize) -> Vec<C64> {
    vec![C64::new(0.0, 0.0); n]
}

pub fn norm_sqr(x: &[C64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum()
}

pub fn norm(x: &[C64]) -> f64 {
    norm_sqr(x).sqrt()
}

/// `⟨a, b⟩ = Σ conj(a_i) b_i`.
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn sub(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn distance(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

pub fn mat_vec(a: &CMatrix, x: &[C64]) -> Vec<C64> {
    let v = a * DVector::from_column_slice(x);
    v.as_slice().to_vec()
}

pub fn mat_adjoint_vec(a: &CMatrix, y: &[C64]) -> Vec<C64> {
    let v = a.adjoint() * DVector::from_column_slice(y);
    v.as_slice().to_vec()
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Smallest and largest eigenvalue of a Hermitian matrix.
pub fn hermitian_extremes(g: CMatrix) -> (f64, f64) {
    let eig = nalgebra::SymmetricEigen::new(g);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &l in eig.eigenvalues.iter() {
        lo = lo.min(l);
        hi = hi.max(l);
    }
    (lo, hi)
}

/// Least-squares solution of `a·x ≈ b`.
///
/// Householder QR when `a` is tall with a well-conditioned `R`; otherwise the
/// minimum-norm solution through the SVD.
pub fn least_squares(a: &CMatrix, b: &[C64]) -> Vec<C64> {
    let (rows, cols) = a.shape();
    if cols == 0 {
        return Vec::new();
    }
    let rhs = DVector::from_column_slice(b);
    if rows >= cols {
        let qr = a.clone().qr();
        let r = qr.r();
        let diag_max = (0..cols).map(|i| r[(i, i)].norm()).fold(0.0, f64::max);
        let diag_min = (0..cols).map(|i| r[(i, i)].norm()).fold(f64::INFINITY, f64::min);
        if diag_max > 0.0 && diag_min > 1e-10 * diag_max {
            let mut qhb = rhs.clone();
            qr.q_tr_mul(&mut qhb);
            if let Some(x) = r.solve_upper_triangular(&qhb.rows(0, cols)) {
                return x.as_slice().to_vec();
            }
        }
    }
    let svd = a.clone().svd(true, true);
    let eps = 1e-12 * svd.singular_values.iter().cloned().fold(0.0, f64::max);
    match svd.solve(&rhs, eps) {
        Ok(x) => x.as_slice().to_vec(),
        Err(_) => zeros(cols),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn least_squares_matches_normal_equations() {
        let a = CMatrix::from_fn(6, 3, |i, j| C64::new((i * 3 + j) as f64 * 0.1 + (i == j) as u8 as f64, (i as f64 - j as f64) * 0.05));
        let b: Vec<C64> = (0..6).map(|i| C64::new(i as f64, 1.0 - i as f64 * 0.5)).collect();
        let x = least_squares(&a, &b);
        // normal-equation residual A^H (A x - b) vanishes
        let r = sub(&mat_vec(&a, &x), &b);
        let g = mat_adjoint_vec(&a, &r);
        assert!(norm(&g) < 1e-10);
    }

    #[test]
    fn rank_deficient_falls_back_to_min_norm() {
        let col = [C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(0.5, 0.0)];
        let a = CMatrix::from_fn(3, 2, |i, _| col[i]);
        let b = col.to_vec();
        let x = least_squares(&a, &b);
        assert!((x[0] - C64::new(0.5, 0.0)).norm() < 1e-10);
        assert!((x[1] - C64::new(0.5, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn hermitian_extremes_of_diagonal() {
        let g = CMatrix::from_diagonal(&DVector::from_vec(vec![C64::new(0.5, 0.0), C64::new(2.0, 0.0)]));
        assert_eq!(hermitian_extremes(g), (0.5, 2.0));
    }
}
