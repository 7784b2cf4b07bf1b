//! Small dense linear-algebra helpers shared by the design modules.

use nalgebra::{Complex, DMatrix, DVector};

/// `[b, A b, A^2 b, ..., A^{n-1} b]`.
pub fn controllability_matrix(a: &DMatrix<f64>, b: &DVector<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut out = DMatrix::zeros(n, n);
    let mut col = b.clone();
    for k in 0..n {
        out.set_column(k, &col);
        col = a * &col;
    }
    out
}

/// Stacked `[C; C A; ...; C A^{n-1}]` for a (possibly multi-row) output matrix.
pub fn observability_matrix(a: &DMatrix<f64>, c: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let p = c.nrows();
    let mut out = DMatrix::zeros(n * p, n);
    let mut block = c.clone();
    for k in 0..n {
        out.view_mut((k * p, 0), (p, n)).copy_from(&block);
        block = &block * a;
    }
    out
}

pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    sv
}

/// Rank with singular values below `rel_tol * sigma_max` treated as zero.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let sv = singular_values(m);
    let Some(&max) = sv.first() else { return 0 };
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// 2-norm condition number; infinite for singular input.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = singular_values(m);
    match (sv.first(), sv.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// Eigenvalues of a general real matrix, sorted by (re, im).
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex<f64>> {
    let mut ev: Vec<Complex<f64>> = m.complex_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    ev
}

/// Largest distance between two eigenvalue multisets after greedy nearest
/// matching, divided by `max(1, max |lambda|)`.
pub fn eigenvalue_mismatch(lhs: &[Complex<f64>], rhs: &[Complex<f64>]) -> f64 {
    assert_eq!(lhs.len(), rhs.len());
    let scale = lhs
        .iter()
        .chain(rhs)
        .map(|z| z.norm())
        .fold(1.0_f64, f64::max);
    let mut used = vec![false; rhs.len()];
    let mut worst = 0.0_f64;
    for z in lhs {
        let (idx, dist) = rhs
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .map(|(i, w)| (i, (z - w).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("equal lengths");
        used[idx] = true;
        worst = worst.max(dist);
    }
    worst / scale
}

pub fn is_finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_of_double_integrator() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = DVector::from_vec(vec![0.0, 1.0]);
        assert_eq!(numerical_rank(&controllability_matrix(&a, &b), 1e-10), 2);
        let b = DVector::from_vec(vec![1.0, 0.0]);
        assert_eq!(numerical_rank(&controllability_matrix(&a, &b), 1e-10), 1);
    }

    #[test]
    fn observability_stacks_rows() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let o = observability_matrix(&a, &c);
        assert_eq!(o, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]));
    }

    #[test]
    fn zero_matrix_rank_zero() {
        assert_eq!(numerical_rank(&DMatrix::zeros(3, 3), 1e-8), 0);
        assert!(condition_number(&DMatrix::zeros(2, 2)).is_infinite());
    }
}
