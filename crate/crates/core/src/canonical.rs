//! Controllable canonical (companion) form of a single-input plant.
//!
//! With `W = [B, AB, ..., A^{m-1}B]` and `q` the last row of `W^{-1}`, the
//! rows of `T` are `q, qA, ..., qA^{m-1}`. Then `z = T psi` obeys a chain of
//! integrators whose last row carries the negated characteristic
//! coefficients.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::beam::{rows_of, StateSpacePlant};
use crate::error::{Error, Result};
use crate::linalg;

/// Condition number of `T` above which a warning is logged.
pub const CONDITION_WARN: f64 = 1e8;

/// Monic characteristic-polynomial coefficients `[f_0, ..., f_{m-1}]`
/// (constant term first, leading 1 omitted), by Faddeev-LeVerrier.
pub fn characteristic_coefficients(a: &DMatrix<f64>) -> Vec<f64> {
    assert!(a.is_square(), "characteristic polynomial needs a square matrix");
    let n = a.nrows();
    let mut coeffs = vec![0.0; n + 1];
    coeffs[n] = 1.0;
    let mut m = DMatrix::<f64>::zeros(n, n);
    for k in 1..=n {
        m = a * &m;
        for i in 0..n {
            m[(i, i)] += coeffs[n - k + 1];
        }
        coeffs[n - k] = -(a * &m).trace() / k as f64;
    }
    coeffs.truncate(n);
    coeffs
}

/// Exact companion matrix for coefficients `f`.
pub fn companion(f: &[f64]) -> DMatrix<f64> {
    let m = f.len();
    let mut a = DMatrix::zeros(m, m);
    for i in 0..m.saturating_sub(1) {
        a[(i, i + 1)] = 1.0;
    }
    for (j, fj) in f.iter().enumerate() {
        a[(m - 1, j)] = -fj;
    }
    a
}

#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalSystem {
    pub t: DMatrix<f64>,
    pub t_inv: DMatrix<f64>,
    pub a_c: DMatrix<f64>,
    pub b_c: DVector<f64>,
    pub c_c: DMatrix<f64>,
    pub f: Vec<f64>,
}

impl CanonicalSystem {
    pub fn from_matrices(a: &DMatrix<f64>, b: &DVector<f64>, c: &DMatrix<f64>) -> Result<Self> {
        let m = a.nrows();
        if !a.is_square() || b.len() != m || c.ncols() != m {
            return Err(Error::Dimension(format!(
                "A is {}x{}, B has {} rows, C has {} columns",
                a.nrows(),
                a.ncols(),
                b.len(),
                c.ncols()
            )));
        }
        let w = linalg::controllability_matrix(a, b);
        let rank = linalg::numerical_rank(&w, 1e-12);
        if rank < m {
            return Err(Error::Uncontrollable { rank, order: m });
        }
        let mut e_last = DVector::zeros(m);
        e_last[m - 1] = 1.0;
        let q = w
            .transpose()
            .lu()
            .solve(&e_last)
            .ok_or_else(|| Error::Singular("controllability matrix".into()))?
            .transpose();
        let mut t = DMatrix::zeros(m, m);
        let mut row = q;
        for k in 0..m {
            t.set_row(k, &row);
            row = &row * a;
        }
        let t_inv = t
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Singular("transformation matrix".into()))?;
        let cond = linalg::condition_number(&t);
        if cond > CONDITION_WARN {
            log::warn!("canonical transformation is ill-conditioned: cond(T) = {cond:.3e}");
        }
        let f = characteristic_coefficients(a);
        let mut b_c = DVector::zeros(m);
        b_c[m - 1] = 1.0;
        Ok(CanonicalSystem {
            a_c: companion(&f),
            b_c,
            c_c: c * &t_inv,
            t,
            t_inv,
            f,
        })
    }

    pub fn order(&self) -> usize {
        self.f.len()
    }

    /// `z = T psi`.
    pub fn transform_state(&self, psi: &DVector<f64>) -> DVector<f64> {
        &self.t * psi
    }

    /// Desired canonical state `z_d = T psi_d`.
    pub fn transform_desired(&self, psi_d: &DVector<f64>) -> DVector<f64> {
        self.transform_state(psi_d)
    }

    /// `psi = T^{-1} z`.
    pub fn inverse_transform(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.t_inv * z
    }

    /// Drift of the last integrator, `-f . z`.
    pub fn drift(&self, z: &[f64]) -> f64 {
        -self.f.iter().zip(z).map(|(f, z)| f * z).sum::<f64>()
    }

    pub fn condition_number(&self) -> f64 {
        linalg::condition_number(&self.t)
    }

    pub fn export(&self) -> CanonicalExport {
        CanonicalExport {
            t: rows_of(&self.t),
            t_inv: rows_of(&self.t_inv),
            a_c: rows_of(&self.a_c),
            b_c: self.b_c.iter().copied().collect(),
            c_c: rows_of(&self.c_c),
            f: self.f.clone(),
            condition_number: self.condition_number(),
        }
    }
}

/// Row-major JSON view of a [`CanonicalSystem`].
#[derive(Debug, Clone, Serialize)]
pub struct CanonicalExport {
    pub t: Vec<Vec<f64>>,
    pub t_inv: Vec<Vec<f64>>,
    pub a_c: Vec<Vec<f64>>,
    pub b_c: Vec<f64>,
    pub c_c: Vec<Vec<f64>>,
    pub f: Vec<f64>,
    pub condition_number: f64,
}

pub fn to_canonical(plant: &StateSpacePlant) -> Result<CanonicalSystem> {
    CanonicalSystem::from_matrices(&plant.a, &plant.b, &plant.c)
}
