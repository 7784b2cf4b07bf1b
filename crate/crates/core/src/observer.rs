//! Fixed-time sliding-mode observer on the canonical one-mode model:
//!
//! ```text
//! zhat' = A_C zhat + B_C u + L e_y + K1 sig(e_y, mu1) + K2 sig(e_y, mu2),
//! e_y   = g - C_C zhat.
//! ```
//!
//! Gains come from an output-injection pole placement; see [`ObserverDesign`].

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::beam::rows_of;
use crate::canonical::{characteristic_coefficients, CanonicalSystem};
use crate::controller::{sig, Switching};
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverGains {
    /// `m x 2` linear injection.
    pub l: DMatrix<f64>,
    pub k1: DMatrix<f64>,
    pub k2: DMatrix<f64>,
    pub mu1: f64,
    pub mu2: f64,
    /// Regularisation width of the signed powers (non-theory runs).
    pub boundary_layer: f64,
}

impl ObserverGains {
    pub fn validate(&self, order: usize) -> Result<()> {
        for (name, m) in [("L", &self.l), ("K1", &self.k1), ("K2", &self.k2)] {
            if m.nrows() != order || m.ncols() != 2 {
                return Err(Error::Dimension(format!(
                    "{name} must be {order}x2, got {}x{}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if !m.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!("observer gain {name}")));
            }
        }
        if !(self.mu1 > 0.0 && self.mu1 < 1.0) {
            return Err(Error::invalid("mu1", format!("must lie in (0, 1), got {}", self.mu1)));
        }
        if !(self.mu2 > 1.0 && self.mu2.is_finite()) {
            return Err(Error::invalid("mu2", format!("must exceed 1, got {}", self.mu2)));
        }
        if !(self.boundary_layer >= 0.0) {
            return Err(Error::invalid("boundary_layer", "must be >= 0"));
        }
        Ok(())
    }

    pub fn export(&self) -> ObserverGainsExport {
        ObserverGainsExport {
            l: rows_of(&self.l),
            k1: rows_of(&self.k1),
            k2: rows_of(&self.k2),
            mu1: self.mu1,
            mu2: self.mu2,
            boundary_layer: self.boundary_layer,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ObserverGainsExport {
    pub l: Vec<Vec<f64>>,
    pub k1: Vec<Vec<f64>>,
    pub k2: Vec<Vec<f64>>,
    pub mu1: f64,
    pub mu2: f64,
    pub boundary_layer: f64,
}

/// Design recipe for the one-mode system.
///
/// In physical coordinates `psi = [theta, theta', p1, p1']` the outputs
/// measure the positions through `M = [[1, phi_l / l], [1, phi'(0)]]`.
/// Each second-order block gets its own pole pair from position-error
/// injection `[l1, l2]`, so `L = T blockdiag([l1, l2]) M^{-1}`. The
/// signed-power gains use `G = T blockdiag([1, g_theta], [1, g_p]) M^{-1}`,
/// which satisfies `C_C G = I`, as `K_i = k_i G`.
///
/// While the signed-power terms hold `e_y` near zero, a matched
/// disturbance `xi` leaves a velocity-estimate bias of about
/// `xi / (J_t g_theta)`. Ratios above the second flexible frequency shrink
/// that bias but destabilise the loop against the unmodelled mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObserverDesign {
    /// Real poles: the first pair goes to the rigid block, the second to the mode.
    pub poles: Vec<f64>,
    /// `[g_theta, g_p]`; defaults to each block's `l2 / l1`, which makes
    /// the columns of `K_i` proportional to those of `L`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity_ratio: Option<[f64; 2]>,
    /// When set, the angle error is injected along the input direction
    /// only, `L_psi[:, 0] = beta B`, and all four poles are placed through
    /// the mode-error column. A matched constant disturbance `xi` then
    /// leaves a pure angle bias `xi / beta`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rigid_velocity_gain: Option<f64>,
    pub k1: f64,
    pub k2: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub boundary_layer: f64,
}

impl Default for ObserverDesign {
    fn default() -> Self {
        let k = DEFAULT_K;
        ObserverDesign {
            poles: vec![-20.0, -22.0, -24.0, -26.0],
            velocity_ratio: None,
            rigid_velocity_gain: None,
            k1: 3.0 * k,
            k2: k,
            mu1: 0.6,
            mu2: 1.4,
            boundary_layer: 1e-6,
        }
    }
}

/// Scale of the default signed-power gains.
pub const DEFAULT_K: f64 = 0.25;

const STRUCTURE_TOL: f64 = 1e-8;

impl ObserverDesign {
    pub fn validate(&self) -> Result<()> {
        if let Some(p) = self.poles.iter().find(|p| !(p.is_finite() && **p < 0.0)) {
            return Err(Error::invalid("observer.poles", format!("pole {p} is not stable")));
        }
        if self.velocity_ratio.iter().flatten().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(Error::invalid("observer.velocity_ratio", "entries must be > 0"));
        }
        if let Some(beta) = self.rigid_velocity_gain {
            if !(beta.is_finite() && beta > 0.0) {
                return Err(Error::invalid("observer.rigid_velocity_gain", "must be > 0"));
            }
        }
        for (name, k) in [("observer.k1", self.k1), ("observer.k2", self.k2)] {
            if !(k.is_finite() && k >= 0.0) {
                return Err(Error::invalid(name, format!("must be >= 0, got {k}")));
            }
        }
        Ok(())
    }

    pub fn gains(&self, sys: &CanonicalSystem) -> Result<ObserverGains> {
        self.validate()?;
        let m = sys.order();
        if m != 4 {
            return Err(Error::Dimension(format!("observer design needs the one-mode system, got order {m}")));
        }
        if self.poles.len() != m {
            return Err(Error::Dimension(format!(
                "{} observer poles for an order-{m} system",
                self.poles.len()
            )));
        }
        // Back to physical coordinates psi = T^{-1} z.
        let a = &sys.t_inv * &sys.a_c * &sys.t;
        let c = &sys.c_c * &sys.t;
        let scale = a.amax().max(1.0);
        let cscale = c.amax().max(1.0);
        let coupling = [a[(0, 2)], a[(0, 3)], a[(1, 2)], a[(1, 3)], a[(2, 0)], a[(2, 1)], a[(3, 0)], a[(3, 1)]];
        let chain = [a[(0, 0)], a[(0, 1)] - 1.0, a[(2, 2)], a[(2, 3)] - 1.0];
        let velocity_cols = [c[(0, 1)], c[(0, 3)], c[(1, 1)], c[(1, 3)]];
        if coupling.iter().chain(&chain).any(|v| v.abs() > STRUCTURE_TOL * scale)
            || velocity_cols.iter().any(|v| v.abs() > STRUCTURE_TOL * cscale)
        {
            return Err(Error::invalid(
                "observer",
                "system is not a rigid block plus one mode measured through positions",
            ));
        }
        let m_pos = DMatrix::from_row_slice(2, 2, &[c[(0, 0)], c[(0, 2)], c[(1, 0)], c[(1, 2)]]);
        let m_inv = m_pos
            .try_inverse()
            .ok_or_else(|| Error::Singular("position output map".into()))?;
        let mut inj = DMatrix::zeros(4, 2);
        let mut dir = DMatrix::zeros(4, 2);
        for (blk, pair) in self.poles.chunks(2).enumerate() {
            let (row, col) = (2 * blk + 1, 2 * blk);
            let (ra, rb) = (a[(row, col)], a[(row, col + 1)]);
            // Block [[-l1, 1], [ra - l2, rb]] has s^2 + (l1 - rb) s + (l2 - ra - l1 rb).
            let l1 = -(pair[0] + pair[1]) + rb;
            let l2 = pair[0] * pair[1] + ra + l1 * rb;
            inj[(2 * blk, blk)] = l1;
            inj[(2 * blk + 1, blk)] = l2;
            dir[(2 * blk, blk)] = 1.0;
            dir[(2 * blk + 1, blk)] = match self.velocity_ratio {
                Some(g) => g[blk],
                None => l2 / l1,
            };
        }
        if let Some(beta) = self.rigid_velocity_gain {
            inj = constrained_injection(&a, &(&sys.t_inv * &sys.b_c), beta, &self.poles)?;
        }
        let l = &sys.t * inj * &m_inv;
        let g = &sys.t * dir * &m_inv;
        let gains = ObserverGains {
            l,
            k1: &g * self.k1,
            k2: &g * self.k2,
            mu1: self.mu1,
            mu2: self.mu2,
            boundary_layer: self.boundary_layer,
        };
        gains.validate(m)?;
        Ok(gains)
    }
}

/// `[beta b, x]` with `x` chosen so `a - beta b e_0^T - x e_2^T` has `poles`.
fn constrained_injection(a: &DMatrix<f64>, b: &DVector<f64>, beta: f64, poles: &[f64]) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let mut a0 = a.clone();
    for i in 0..n {
        a0[(i, 0)] -= beta * b[i];
    }
    let coeffs = |x: &DVector<f64>| {
        let mut ae = a0.clone();
        for i in 0..n {
            ae[(i, 2)] -= x[i];
        }
        characteristic_coefficients(&ae)
    };
    // The coefficients are affine in x.
    let base = coeffs(&DVector::zeros(n));
    let mut jac = DMatrix::zeros(n, n);
    for j in 0..n {
        let cj = coeffs(&DVector::from_fn(n, |i, _| if i == j { 1.0 } else { 0.0 }));
        for i in 0..n {
            jac[(i, j)] = cj[i] - base[i];
        }
    }
    let target = poly_from_roots(poles);
    let rhs = DVector::from_fn(n, |i, _| target[i] - base[i]);
    let x = jac
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("mode-error injection is not assignable".into()))?;
    let mut inj = DMatrix::zeros(n, 2);
    inj.set_column(0, &(b * beta));
    inj.set_column(1, &x);
    Ok(inj)
}

/// Monic polynomial coefficients (constant first, leading 1 dropped) with
/// the given real roots.
pub fn poly_from_roots(roots: &[f64]) -> Vec<f64> {
    let mut p = vec![1.0];
    for &r in roots {
        let mut next = vec![0.0; p.len() + 1];
        for (k, c) in p.iter().enumerate() {
            next[k + 1] += c;
            next[k] -= r * c;
        }
        p = next;
    }
    p.pop();
    p
}

/// Signed power applied entry-wise, regularised near zero on request.
pub fn signed_power(x: f64, mu: f64, width: f64, switching: Switching) -> f64 {
    match switching {
        Switching::Regularized if width > 0.0 => x * (x * x + width * width).powf(0.5 * (mu - 1.0)),
        _ => sig(x, mu),
    }
}

/// `[|e1|^mu sgn(e1), |e2|^mu sgn(e2)]`.
pub fn signed_power_vector(e_y: [f64; 2], mu: f64) -> [f64; 2] {
    [sig(e_y[0], mu), sig(e_y[1], mu)]
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverState {
    pub z_hat: DVector<f64>,
    pub e_y: [f64; 2],
}

impl ObserverState {
    pub fn new(z_hat: DVector<f64>) -> Self {
        ObserverState { z_hat, e_y: [0.0; 2] }
    }
}

/// Output estimation error `g - C_C zhat`.
pub fn output_error(z_hat: &DVector<f64>, g: [f64; 2], sys: &CanonicalSystem) -> [f64; 2] {
    let y = &sys.c_c * z_hat;
    [g[0] - y[0], g[1] - y[1]]
}

/// Right-hand side of the observer for measured output `g` and input `u`.
pub fn observer_rhs(
    z_hat: &DVector<f64>,
    g: [f64; 2],
    u: f64,
    sys: &CanonicalSystem,
    gains: &ObserverGains,
    switching: Switching,
) -> Result<DVector<f64>> {
    if !linalg::is_finite(z_hat) || !g.iter().all(|v| v.is_finite()) || !u.is_finite() {
        return Err(Error::NonFinite("observer input".into()));
    }
    let e = output_error(z_hat, g, sys);
    let mut d = &sys.a_c * z_hat;
    d.axpy(u, &sys.b_c, 1.0);
    let bl = gains.boundary_layer;
    for k in 0..2 {
        if e[k] == 0.0 {
            continue;
        }
        let lin = e[k];
        let low = signed_power(e[k], gains.mu1, bl, switching);
        let high = signed_power(e[k], gains.mu2, bl, switching);
        d.axpy(lin, &gains.l.column(k), 1.0);
        d.axpy(low, &gains.k1.column(k), 1.0);
        d.axpy(high, &gains.k2.column(k), 1.0);
    }
    Ok(d)
}

/// Lyapunov-matrix and observability diagnostics for a gain set.
#[derive(Debug, Clone, Serialize)]
pub struct QReport {
    /// Eigenvalues of `Q = -(C'C (A_C - L C_C) + (A_C - L C_C)' C'C)`, ascending.
    pub q_eigenvalues: Vec<f64>,
    pub q_positive_semidefinite: bool,
    /// Eigenvalues of `Q` restricted to `range(C_C')`, ascending.
    pub output_subspace_eigenvalues: Vec<f64>,
    pub output_subspace_definite: bool,
    pub observability_rank: usize,
    pub observability_singular_values: Vec<f64>,
    /// Eigenvalues of `A_C - L C_C` as `[re, im]`.
    pub error_dynamics_eigenvalues: Vec<[f64; 2]>,
    pub error_dynamics_hurwitz: bool,
    pub norm: &'static str,
    pub c_norm: f64,
    pub k1_norm: f64,
    pub k2_norm: f64,
}

const PSD_TOL: f64 = 1e-9;

pub fn validate_gains(sys: &CanonicalSystem, gains: &ObserverGains) -> QReport {
    let c = &sys.c_c;
    let ctc = c.transpose() * c;
    let closed = &sys.a_c - &gains.l * c;
    let q = -(&ctc * &closed + closed.transpose() * &ctc);
    let q = (&q + q.transpose()) * 0.5;
    let mut q_eig: Vec<f64> = q.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    q_eig.sort_by(f64::total_cmp);
    let scale = q.amax().max(1.0);
    let psd = q_eig.first().is_none_or(|&l| l >= -PSD_TOL * scale);

    // Orthonormal basis of range(C') from the SVD of C'.
    let svd = c.transpose().svd(true, false);
    let u = svd.u.expect("requested U");
    let keep: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s > 1e-12 * svd.singular_values.max())
        .map(|(i, _)| i)
        .collect();
    let (sub_eig, sub_def) = if keep.is_empty() {
        (Vec::new(), false)
    } else {
        let basis = u.select_columns(&keep);
        let qr = basis.transpose() * &q * &basis;
        let mut ev: Vec<f64> = qr.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        let def = ev[0] > PSD_TOL * scale;
        (ev, def)
    };

    let o = linalg::observability_matrix(&sys.a_c, c);
    let obs_sv = linalg::singular_values(&o);
    let rank = linalg::numerical_rank(&o, 1e-10);
    let ev: Vec<Complex<f64>> = linalg::eigenvalues(&closed);
    QReport {
        q_eigenvalues: q_eig,
        q_positive_semidefinite: psd,
        output_subspace_eigenvalues: sub_eig,
        output_subspace_definite: sub_def,
        observability_rank: rank,
        observability_singular_values: obs_sv,
        error_dynamics_hurwitz: ev.iter().all(|z| z.re < 0.0),
        error_dynamics_eigenvalues: ev.iter().map(|z| [z.re, z.im]).collect(),
        norm: "spectral",
        c_norm: linalg::spectral_norm(c),
        k1_norm: linalg::spectral_norm(&gains.k1),
        k2_norm: linalg::spectral_norm(&gains.k2),
    }
}

/// `2 / (eps1 (1 - mu1)) + 2 / (eps2 (mu2 - 1))`.
pub fn observer_bound_from_rates(eps1: f64, eps2: f64, mu1: f64, mu2: f64) -> f64 {
    2.0 / (eps1 * (1.0 - mu1)) + 2.0 / (eps2 * (mu2 - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObserverBound {
    pub eps1: f64,
    pub eps2: f64,
    pub t_ftsmo: f64,
}

/// Settling bound with `eps_i = ||C_C||_2 ||K_i||_2`.
pub fn settling_bound_observer(sys: &CanonicalSystem, gains: &ObserverGains) -> ObserverBound {
    let c = linalg::spectral_norm(&sys.c_c);
    let eps1 = c * linalg::spectral_norm(&gains.k1);
    let eps2 = c * linalg::spectral_norm(&gains.k2);
    ObserverBound {
        eps1,
        eps2,
        t_ftsmo: observer_bound_from_rates(eps1, eps2, gains.mu1, gains.mu2),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HierarchyVerdict {
    /// `T_FTSMO < T_ctrl`.
    pub separated: bool,
    pub t_total: f64,
}

pub fn check_time_hierarchy(t_ftsmo: f64, t_ctrl: f64) -> HierarchyVerdict {
    HierarchyVerdict {
        separated: t_ftsmo < t_ctrl,
        t_total: t_ftsmo + t_ctrl,
    }
}
