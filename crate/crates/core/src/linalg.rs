//! Numeric helpers: order-fixed reductions, symmetric solves, sample moments
//! and reference distributions.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor, Normal};

/// Pairwise (tree) sum in input order. Deterministic for a fixed input.
pub fn pairwise_sum_vec(parts: &[DVector<f64>], dim: usize) -> DVector<f64> {
    match parts.len() {
        0 => DVector::zeros(dim),
        1 => parts[0].clone(),
        len => {
            let (l, r) = parts.split_at(len / 2);
            pairwise_sum_vec(l, dim) + pairwise_sum_vec(r, dim)
        }
    }
}

pub fn pairwise_sum_mat(parts: &[DMatrix<f64>], dim: usize) -> DMatrix<f64> {
    match parts.len() {
        0 => DMatrix::zeros(dim, dim),
        1 => parts[0].clone(),
        len => {
            let (l, r) = parts.split_at(len / 2);
            pairwise_sum_mat(l, dim) + pairwise_sum_mat(r, dim)
        }
    }
}

pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        len => {
            let (l, r) = xs.split_at(len / 2);
            pairwise_sum(l) + pairwise_sum(r)
        }
    }
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Eigenvalues ascending, with matching eigenvector columns.
pub fn sym_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let mut s = m.clone();
    symmetrize(&mut s);
    let eig = SymmetricEigen::new(s);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = DVector::from_iterator(order.len(), order.iter().map(|&k| eig.eigenvalues[k]));
    let vecs = DMatrix::from_fn(m.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

/// Solves `A x = b` for symmetric positive definite `A`; `None` otherwise.
pub fn spd_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let chol = a.clone().cholesky()?;
    Some(chol.solve(b))
}

pub fn spd_inverse(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    Some(a.clone().cholesky()?.inverse())
}

/// Smallest-over-largest eigenvalue ratio test for positive definiteness.
pub fn is_numerically_pd(a: &DMatrix<f64>, rel_tol: f64) -> bool {
    if a.nrows() == 0 {
        return true;
    }
    let (vals, _) = sym_eigen(a);
    let max = vals[vals.len() - 1];
    max > 0.0 && vals[0] > rel_tol * max
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance; `NaN` for fewer than two values.
pub fn sample_var(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    pairwise_sum(&sq) / (xs.len() - 1) as f64
}

pub fn sample_sd(xs: &[f64]) -> f64 {
    sample_var(xs).sqrt()
}

pub fn normal_two_sided_p(z: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).unwrap();
    (2.0 * n.cdf(-z.abs())).min(1.0)
}

pub fn normal_cdf(z: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().cdf(z)
}

pub fn chi2_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    1.0 - ChiSquared::new(df).unwrap().cdf(x)
}

pub fn f_sf(x: f64, df1: f64, df2: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    1.0 - FisherSnedecor::new(df1, df2).unwrap().cdf(x)
}
