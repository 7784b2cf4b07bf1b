//! Nested non-singular terminal sliding-mode controller for the fourth-order
//! canonical chain `z1' = z2, z2' = z3, z3' = z4, z4' = -f.z + u + delta`.
//!
//! Surfaces are built recursively from the position error `e = z1 - z_d1`:
//!
//! ```text
//! s_0     = e
//! s_{i+1} = s_i' + alpha_i s_i + kappa_i1 phi_eps(s_i) + kappa_i2 |s_i|^gamma2 sgn(s_i)
//! ```
//!
//! and the reaching law drives `s_3` with `c1 |s|^p + c2 |s|^q + eta sgn(s)`.
//! The feed-forward term `Phi` (everything in `s_3'` except `z4'`) is obtained
//! by propagating truncated Taylor series through the recursion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::Jet;

/// Below this magnitude the higher derivatives of `|s|^gamma2 sgn(s)` are
/// clamped to zero.
pub const POWER_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerGains {
    pub alpha: [f64; 3],
    pub kappa1: [f64; 3],
    pub kappa2: [f64; 3],
    pub gamma1: f64,
    pub gamma2: f64,
    pub eps: f64,
    pub c1: f64,
    pub c2: f64,
    pub p: f64,
    pub q: f64,
    pub eta: f64,
    /// Assumed bound on the matched disturbance; `eta` must exceed it.
    pub disturbance_bound: f64,
    /// Width of the regularised sign `s / (|s| + width)`.
    pub boundary_layer: f64,
    /// Actuator torque limit (N m).
    pub saturation: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        let d_bar = 0.5;
        ControllerGains {
            alpha: [2.0; 3],
            kappa1: [2.0; 3],
            kappa2: [2.0; 3],
            gamma1: 0.6,
            gamma2: 2.0,
            eps: 0.05,
            c1: 15.0,
            c2: 15.0,
            p: 0.6,
            q: 1.5,
            eta: 1.2 * d_bar,
            disturbance_bound: d_bar,
            boundary_layer: 1e-3,
            saturation: 50.0,
        }
    }
}

impl ControllerGains {
    pub fn validate(&self) -> Result<()> {
        let arrays = [("alpha", self.alpha), ("kappa1", self.kappa1), ("kappa2", self.kappa2)];
        for (name, arr) in arrays {
            for (i, v) in arr.iter().enumerate() {
                if !(v.is_finite() && *v > 0.0) {
                    return Err(Error::invalid(format!("{name}[{i}]"), format!("must be > 0, got {v}")));
                }
            }
        }
        for (name, v) in [
            ("eps", self.eps),
            ("c1", self.c1),
            ("c2", self.c2),
            ("eta", self.eta),
            ("saturation", self.saturation),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("must be > 0, got {v}")));
            }
        }
        if !(self.gamma1 > 0.0 && self.gamma1 < 1.0) {
            return Err(Error::invalid("gamma1", format!("must lie in (0, 1), got {}", self.gamma1)));
        }
        if !(self.gamma2 > 1.0 && self.gamma2.is_finite()) {
            return Err(Error::invalid("gamma2", format!("must exceed 1, got {}", self.gamma2)));
        }
        if self.gamma2 < 2.0 {
            log::warn!("gamma2 = {} < 2: feed-forward relies on the clamped power derivative", self.gamma2);
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(Error::invalid("p", format!("must lie in (0, 1), got {}", self.p)));
        }
        if !(self.q > 1.0 && self.q.is_finite()) {
            return Err(Error::invalid("q", format!("must exceed 1, got {}", self.q)));
        }
        if !(self.disturbance_bound >= 0.0) {
            return Err(Error::invalid("disturbance_bound", "must be >= 0"));
        }
        if self.eta <= self.disturbance_bound {
            return Err(Error::invalid(
                "eta",
                format!(
                    "switching gain {} must exceed the disturbance bound {}",
                    self.eta, self.disturbance_bound
                ),
            ));
        }
        if !(self.boundary_layer >= 0.0) {
            return Err(Error::invalid("boundary_layer", "must be >= 0"));
        }
        Ok(())
    }
}

/// How discontinuous sign terms are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Switching {
    /// `s / (|s| + width)`.
    #[default]
    Regularized,
    /// Exact `sgn(s)`.
    Pure,
}

pub fn sign_switch(s: f64, width: f64, mode: Switching) -> f64 {
    match mode {
        Switching::Pure => sgn(s),
        Switching::Regularized if width > 0.0 => s / (s.abs() + width),
        Switching::Regularized => sgn(s),
    }
}

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `|x|^a sgn(x)`.
pub fn sig(x: f64, a: f64) -> f64 {
    sgn(x) * x.abs().powf(a)
}

/// Smooth sub-unity map `x (x^2 + eps^2)^((gamma1 - 1) / 2)`.
pub fn phi_eps(x: f64, gamma1: f64, eps: f64) -> f64 {
    x * (x * x + eps * eps).powf(0.5 * (gamma1 - 1.0))
}

/// Analytic derivative of [`phi_eps`] of order 1, 2 or 3.
pub fn phi_eps_derivative(x: f64, gamma1: f64, eps: f64, order: u8) -> f64 {
    let a = 0.5 * (gamma1 - 1.0);
    let e2 = eps * eps;
    let x2 = x * x;
    let r = x2 + e2;
    match order {
        1 => r.powf(a - 1.0) * (e2 + gamma1 * x2),
        2 => 2.0 * a * x * r.powf(a - 2.0) * (3.0 * e2 + gamma1 * x2),
        3 => {
            let g = 3.0 * e2 + gamma1 * x2;
            2.0 * a
                * r.powf(a - 3.0)
                * (r * g + 2.0 * (a - 2.0) * x2 * g + 2.0 * gamma1 * x2 * r)
        }
        _ => panic!("phi_eps derivative order must be 1, 2 or 3 (got {order})"),
    }
}

fn phi_eps_derivs(x: f64, gamma1: f64, eps: f64) -> [f64; 4] {
    [
        phi_eps(x, gamma1, eps),
        phi_eps_derivative(x, gamma1, eps, 1),
        phi_eps_derivative(x, gamma1, eps, 2),
        phi_eps_derivative(x, gamma1, eps, 3),
    ]
}

/// `|x|^g sgn(x)` and its first three derivatives.
fn power_derivs(x: f64, g: f64) -> [f64; 4] {
    let ax = x.abs();
    let d0 = sig(x, g);
    let d1 = g * ax.powf(g - 1.0);
    if ax < POWER_CLAMP {
        return [d0, d1, 0.0, 0.0];
    }
    let d2 = g * (g - 1.0) * sig(x, g - 2.0);
    let d3 = g * (g - 1.0) * (g - 2.0) * ax.powf(g - 3.0);
    [d0, d1, d2, d3]
}

/// Surface values plus the feed-forward term `Phi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurfaceStack {
    pub s: [f64; 4],
    pub phi: f64,
}

fn check_state(z: &[f64], z_d: &[f64]) {
    assert!(z.len() == 4 && z_d.len() == 4, "controller is fourth-order");
}

/// Recursive surfaces `s_0..s_3` and `Phi` for a constant set-point.
pub fn build_surfaces(z: &[f64], z_d: &[f64], gains: &ControllerGains) -> SurfaceStack {
    check_state(z, z_d);
    let mut s = Jet::from_derivatives(&[z[0] - z_d[0], z[1] - z_d[1], z[2] - z_d[2], z[3] - z_d[3], 0.0]);
    let mut values = [0.0; 4];
    values[0] = s.value();
    for i in 0..3 {
        let ds = s.differentiate();
        let base = s.truncate(ds.len());
        let x = base.value();
        let phi = base.compose(phi_eps_derivs(x, gains.gamma1, gains.eps));
        let pw = base.compose(power_derivs(x, gains.gamma2));
        s = ds + gains.alpha[i] * base + gains.kappa1[i] * phi + gains.kappa2[i] * pw;
        values[i + 1] = s.value();
    }
    SurfaceStack {
        s: values,
        phi: s.differentiate().value(),
    }
}

pub fn feedforward_phi(z: &[f64], z_d: &[f64], gains: &ControllerGains) -> f64 {
    build_surfaces(z, z_d, gains).phi
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControlOutput {
    /// Unsaturated command.
    pub u: f64,
    pub surfaces: SurfaceStack,
}

/// `u = -f(z) - Phi - c1 sig(s3, p) - c2 sig(s3, q) - eta sgn(s3)`, with
/// `f(z) = -coeffs . z`.
pub fn control_law(
    z_hat: &[f64],
    z_d: &[f64],
    gains: &ControllerGains,
    f_coeffs: &[f64],
    switching: Switching,
) -> Result<ControlOutput> {
    if !z_hat.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("controller state estimate".into()));
    }
    let surfaces = build_surfaces(z_hat, z_d, gains);
    let s3 = surfaces.s[3];
    let drift: f64 = -f_coeffs.iter().zip(z_hat).map(|(f, z)| f * z).sum::<f64>();
    let u = -drift
        - surfaces.phi
        - gains.c1 * sig(s3, gains.p)
        - gains.c2 * sig(s3, gains.q)
        - gains.eta * sign_switch(s3, gains.boundary_layer, switching);
    if !u.is_finite() {
        return Err(Error::NonFinite("control input".into()));
    }
    Ok(ControlOutput { u, surfaces })
}

/// Fixed-time settling bounds per surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControllerBounds {
    /// `T_0..T_3` from the gains directly.
    pub stages: [f64; 4],
    /// Sum of `stages`; the controller bound used everywhere else.
    pub total: f64,
    /// Same stages from the Lyapunov-level constants `a = k 2^{-(x+1)/2}`,
    /// with `kappa_i1` scaled by `eps^(gamma1 - 1)`.
    pub lyapunov_stages: [f64; 4],
    pub lyapunov_total: f64,
}

/// `1 / (a (1 - lo)) + 1 / (b (hi - 1))`.
pub fn fixed_time_bound(a: f64, lo: f64, b: f64, hi: f64) -> f64 {
    1.0 / (a * (1.0 - lo)) + 1.0 / (b * (hi - 1.0))
}

pub fn settling_bound_controller(gains: &ControllerGains) -> ControllerBounds {
    let mut stages = [0.0; 4];
    let mut lyap = [0.0; 4];
    let c_eps = gains.eps.powf(gains.gamma1 - 1.0);
    let lo = 0.5 * (gains.gamma1 + 1.0);
    let hi = 0.5 * (gains.gamma2 + 1.0);
    for i in 0..3 {
        stages[i] = fixed_time_bound(gains.kappa1[i], gains.gamma1, gains.kappa2[i], gains.gamma2);
        let a = gains.kappa1[i] * c_eps * 2f64.powf(-lo);
        let b = gains.kappa2[i] * 2f64.powf(-hi);
        lyap[i] = fixed_time_bound(a, lo, b, hi);
    }
    stages[3] = fixed_time_bound(gains.c1, gains.p, gains.c2, gains.q);
    let lo3 = 0.5 * (gains.p + 1.0);
    let hi3 = 0.5 * (gains.q + 1.0);
    lyap[3] = fixed_time_bound(gains.c1 * 2f64.powf(-lo3), lo3, gains.c2 * 2f64.powf(-hi3), hi3);
    ControllerBounds {
        stages,
        total: stages.iter().sum(),
        lyapunov_stages: lyap,
        lyapunov_total: lyap.iter().sum(),
    }
}

/// PD baseline acting on the tip angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdGains {
    pub kp: f64,
    pub kd: f64,
    /// Bandwidth `N` of the differentiator `N s / (s + N)` (rad/s).
    pub filter_bandwidth: f64,
}

impl Default for PdGains {
    fn default() -> Self {
        PdGains {
            kp: 1.0,
            kd: 1.0,
            filter_bandwidth: 200.0,
        }
    }
}

impl PdGains {
    pub fn validate(&self) -> Result<()> {
        if !(self.kp >= 0.0 && self.kd >= 0.0) {
            return Err(Error::invalid("pd", "kp and kd must be >= 0"));
        }
        if !(self.filter_bandwidth > 0.0) {
            return Err(Error::invalid("pd.filter_bandwidth", "must be > 0"));
        }
        Ok(())
    }
}

/// `u = kp (theta_d - theta_t) - kd theta_t'`.
pub fn pd_baseline(theta_t: f64, theta_t_dot_est: f64, theta_d: f64, kp: f64, kd: f64) -> f64 {
    kp * (theta_d - theta_t) - kd * theta_t_dot_est
}

/// Sampled first-order filtered differentiator `N s / (s + N)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeFilter {
    bandwidth: f64,
    state: Option<f64>,
}

impl DerivativeFilter {
    pub fn new(bandwidth: f64) -> Self {
        DerivativeFilter {
            bandwidth,
            state: None,
        }
    }

    /// Rate estimate from the current sample; advances the filter by `dt`.
    pub fn update(&mut self, x: f64, dt: f64) -> f64 {
        let lag = *self.state.get_or_insert(x);
        let rate = self.bandwidth * (x - lag);
        let blend = 1.0 - (-self.bandwidth * dt).exp();
        self.state = Some(lag + blend * (x - lag));
        rate
    }
}
