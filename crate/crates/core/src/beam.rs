//! Assumed-mode model of a hub-actuated flexible link.
//!
//! The link is an Euler-Bernoulli beam pinned to a rotating hub of inertia
//! `hub_inertia`, with an optional tip payload. Flexible modes are the
//! pinned-free eigenfunctions with the hub inertia entering the root moment
//! balance:
//!
//! ```text
//! phi(0) = 0,  EI phi''(0) + J_h w^2 phi'(0) = 0,
//! EI phi''(l) - I_p w^2 phi'(l) = 0,  EI phi'''(l) + M_p w^2 phi(l) = 0.
//! ```
//!
//! Mode shapes are normalised so that `int_0^l rho phi_j^2 dx` equals the
//! configured normalisation constant (1 by default). Per-mode overrides can
//! replace solver output entirely, which is how the published parameter set
//! is reproduced.

use nalgebra::{DMatrix, DVector, Matrix4, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_DAMPING_RATIO: f64 = 0.01;

fn default_damping_ratio() -> f64 {
    DEFAULT_DAMPING_RATIO
}

/// Physical constants of the link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamParams {
    /// Linear mass density (kg/m).
    pub rho: f64,
    /// Link length (m).
    pub length: f64,
    /// Flexural rigidity (N m^2).
    #[serde(rename = "EI", alias = "ei")]
    pub ei: f64,
    /// Tip payload mass (kg).
    pub payload_mass: f64,
    /// Tip payload rotary inertia (kg m^2).
    pub payload_inertia: f64,
    /// Hub (motor) inertia (kg m^2).
    pub hub_inertia: f64,
    /// Modal damping ratio shared by every flexible mode.
    #[serde(default = "default_damping_ratio")]
    pub damping_ratio: f64,
}

impl BeamParams {
    /// The laboratory link used throughout the simulation study.
    pub fn reference() -> Self {
        BeamParams {
            rho: 0.5,
            length: 1.0,
            ei: 1.0,
            payload_mass: 0.0,
            payload_inertia: 0.0,
            hub_inertia: 0.002,
            damping_ratio: DEFAULT_DAMPING_RATIO,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rho", self.rho),
            ("length", self.length),
            ("EI", self.ei),
            ("hub_inertia", self.hub_inertia),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("must be > 0, got {v}")));
            }
        }
        for (name, v) in [
            ("payload_mass", self.payload_mass),
            ("payload_inertia", self.payload_inertia),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(name, format!("must be >= 0, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.damping_ratio) {
            return Err(Error::invalid(
                "damping_ratio",
                format!("must lie in [0, 1), got {}", self.damping_ratio),
            ));
        }
        Ok(())
    }
}

/// Eigendata of one flexible mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    /// Natural frequency (rad/s).
    pub omega: f64,
    /// Tip value of the mode shape.
    pub phi_l: f64,
    /// Base slope of the mode shape (1/m).
    pub phi_prime_0: f64,
}

/// Replaces the solver output for one (1-based) mode index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModalOverride {
    pub mode: usize,
    pub omega: f64,
    pub phi_l: f64,
    pub phi_prime_0: f64,
}

impl ModalOverride {
    /// First-mode values of the reference link.
    pub fn reference() -> Vec<ModalOverride> {
        vec![ModalOverride {
            mode: 1,
            omega: 20.53,
            phi_l: 0.3214,
            phi_prime_0: 32.8184,
        }]
    }

    fn as_mode(&self) -> Mode {
        Mode {
            omega: self.omega,
            phi_l: self.phi_l,
            phi_prime_0: self.phi_prime_0,
        }
    }
}

/// Ordered per-mode eigendata. Frequencies are positive and strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Mode>", into = "Vec<Mode>")]
pub struct ModalData {
    modes: Vec<Mode>,
}

impl ModalData {
    pub fn new(modes: Vec<Mode>) -> Result<Self> {
        for (j, m) in modes.iter().enumerate() {
            if !(m.omega.is_finite() && m.omega > 0.0) {
                return Err(Error::invalid(
                    format!("modes[{j}].omega"),
                    format!("must be > 0, got {}", m.omega),
                ));
            }
            if !(m.phi_l.is_finite() && m.phi_prime_0.is_finite()) {
                return Err(Error::invalid(format!("modes[{j}]"), "non-finite mode-shape value"));
            }
        }
        for (j, w) in modes.windows(2).enumerate() {
            if w[1].omega <= w[0].omega {
                return Err(Error::invalid(
                    format!("modes[{}].omega", j + 1),
                    "frequencies must be strictly increasing",
                ));
            }
        }
        Ok(ModalData { modes })
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }
}

impl TryFrom<Vec<Mode>> for ModalData {
    type Error = Error;
    fn try_from(modes: Vec<Mode>) -> Result<Self> {
        ModalData::new(modes)
    }
}

impl From<ModalData> for Vec<Mode> {
    fn from(d: ModalData) -> Self {
        d.modes
    }
}

/// A solved mode shape `phi(x) = a sin(bx) + b cos(bx) + c e^{-bx} + d e^{b(x-l)}`.
///
/// The decaying-exponential basis keeps every coefficient O(1) for high modes,
/// where the sinh/cosh basis would cancel catastrophically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeShape {
    pub beta: f64,
    pub length: f64,
    pub coeffs: [f64; 4],
    pub omega: f64,
}

impl ModeShape {
    pub fn value(&self, x: f64) -> f64 {
        let [a, b, c, d] = self.coeffs;
        let bx = self.beta * x;
        a * bx.sin() + b * bx.cos() + c * (-bx).exp() + d * (self.beta * (x - self.length)).exp()
    }

    pub fn slope(&self, x: f64) -> f64 {
        let [a, b, c, d] = self.coeffs;
        let bx = self.beta * x;
        self.beta
            * (a * bx.cos() - b * bx.sin() - c * (-bx).exp()
                + d * (self.beta * (x - self.length)).exp())
    }

    pub fn tip_value(&self) -> f64 {
        self.value(self.length)
    }

    pub fn base_slope(&self) -> f64 {
        self.slope(0.0)
    }

    fn scale(&mut self, k: f64) {
        for c in &mut self.coeffs {
            *c *= k;
        }
    }
}

// 5-point Gauss-Legendre on [-1, 1].
const GL_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189,
    0.478_628_670_499_366,
    0.568_888_888_888_889,
    0.478_628_670_499_366,
    0.236_926_885_056_189,
];

fn gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut sum = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
            sum += w * f(mid + 0.5 * h * x);
        }
    }
    0.5 * h * sum
}

/// Brent's method on a sign-changing bracket.
pub(crate) fn brent(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, rel_tol: f64) -> f64 {
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return a;
    }
    if fb == 0.0 {
        return b;
    }
    debug_assert!(fa.signum() != fb.signum());
    if fa.abs() < fb.abs() {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut bisected = true;
    for _ in 0..200 {
        let tol = rel_tol * b.abs().max(f64::MIN_POSITIVE);
        if fb == 0.0 || (b - a).abs() <= tol {
            break;
        }
        let mut s = if fa != fc && fb != fc {
            a * fb * fc / ((fa - fb) * (fa - fc))
                + b * fa * fc / ((fb - fa) * (fb - fc))
                + c * fa * fb / ((fc - fa) * (fc - fb))
        } else {
            b - fb * (b - a) / (fb - fa)
        };
        let lo = (3.0 * a + b) / 4.0;
        let out_of_range = !((s > lo.min(b)) && (s < lo.max(b)));
        let slow = if bisected {
            (s - b).abs() >= (b - c).abs() / 2.0 || (b - c).abs() < tol
        } else {
            (s - b).abs() >= (c - d).abs() / 2.0 || (c - d).abs() < tol
        };
        if out_of_range || slow {
            s = 0.5 * (a + b);
            bisected = true;
        } else {
            bisected = false;
        }
        let fs = f(s);
        d = c;
        c = b;
        fc = fb;
        if fa.signum() != fs.signum() {
            b = s;
            fb = fs;
        } else {
            a = s;
            fa = fs;
        }
        if fa.abs() < fb.abs() {
            std::mem::swap(&mut a, &mut b);
            std::mem::swap(&mut fa, &mut fb);
        }
    }
    b
}

/// Frequency-equation solver for the pinned-free link with hub inertia.
#[derive(Debug, Clone)]
pub struct ModeSolver {
    beam: BeamParams,
    normalization: f64,
    scan_step: f64,
}

/// Relative tolerance on the dimensionless root `beta * l`.
pub const ROOT_REL_TOL: f64 = 1e-10;

impl ModeSolver {
    pub fn new(beam: BeamParams) -> Result<Self> {
        beam.validate()?;
        Ok(ModeSolver {
            beam,
            normalization: 1.0,
            scan_step: 0.01,
        })
    }

    /// Sets the target of `int rho phi^2 dx`. Zero or negative is rejected.
    pub fn with_normalization(mut self, value: f64) -> Result<Self> {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::invalid(
                "normalization",
                format!("must be > 0, got {value}"),
            ));
        }
        self.normalization = value;
        Ok(self)
    }

    pub fn beam(&self) -> &BeamParams {
        &self.beam
    }

    fn boundary_matrix(&self, k: f64) -> Matrix4<f64> {
        let BeamParams {
            rho,
            length,
            hub_inertia,
            payload_mass,
            payload_inertia,
            ..
        } = self.beam;
        let beta = k / length;
        let h = hub_inertia * beta.powi(3) / rho;
        let ip = payload_inertia * beta.powi(3) / rho;
        let mp = payload_mass * beta / rho;
        let (s, c) = k.sin_cos();
        let e = (-k).exp();
        Matrix4::new(
            0.0, 1.0, 1.0, e,
            h / (1.0 + h), -1.0 / (1.0 + h), (1.0 - h) / (1.0 + h), e,
            (-s - ip * c) / (1.0 + ip), (-c + ip * s) / (1.0 + ip), e, (1.0 - ip) / (1.0 + ip),
            (-c + mp * s) / (1.0 + mp), (s + mp * c) / (1.0 + mp), e * (mp - 1.0) / (1.0 + mp), 1.0,
        )
    }

    /// Scaled frequency determinant as a function of `k = beta * l`; its
    /// positive zeros are the flexible modes.
    pub fn frequency_function(&self, k: f64) -> f64 {
        self.boundary_matrix(k).determinant()
    }

    pub fn omega_from_root(&self, k: f64) -> f64 {
        let beta = k / self.beam.length;
        beta * beta * (self.beam.ei / self.beam.rho).sqrt()
    }

    /// First `n` positive roots in `k = beta * l`, ascending.
    pub fn roots(&self, n: usize) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::invalid("n_modes", "must be >= 1"));
        }
        let limit = std::f64::consts::PI * (n as f64 + 2.0) + 5.0;
        let mut roots = Vec::with_capacity(n);
        let mut lo = 0.05;
        let mut f_lo = self.frequency_function(lo);
        while roots.len() < n {
            let hi = lo + self.scan_step;
            if hi > limit {
                return Err(Error::BracketingExhausted {
                    found: roots.len(),
                    wanted: n,
                    limit,
                });
            }
            let f_hi = self.frequency_function(hi);
            if !f_hi.is_finite() {
                return Err(Error::NonFinite("frequency equation".into()));
            }
            if f_lo == 0.0 {
                roots.push(lo);
            } else if f_lo.signum() != f_hi.signum() && f_hi != 0.0 {
                roots.push(brent(|k| self.frequency_function(k), lo, hi, ROOT_REL_TOL));
            }
            lo = hi;
            f_lo = f_hi;
        }
        Ok(roots)
    }

    pub fn frequencies(&self, n: usize) -> Result<Vec<f64>> {
        Ok(self
            .roots(n)?
            .into_iter()
            .map(|k| self.omega_from_root(k))
            .collect())
    }

    /// Normalised shape of the 1-based mode `index`, signed so `phi'(0) > 0`.
    pub fn mode_shape(&self, index: usize) -> Result<ModeShape> {
        if index == 0 {
            return Err(Error::invalid("mode_index", "mode indices are 1-based"));
        }
        let k = self.roots(index)?[index - 1];
        let m = self.boundary_matrix(k);
        let svd = m.svd(false, true);
        let v_t = svd.v_t.expect("requested V^T");
        let (imin, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("4 singular values");
        let row = v_t.row(imin);
        let mut shape = ModeShape {
            beta: k / self.beam.length,
            length: self.beam.length,
            coeffs: [row[0], row[1], row[2], row[3]],
            omega: self.omega_from_root(k),
        };
        let rho = self.beam.rho;
        let mass = gauss_legendre(|x| rho * shape.value(x).powi(2), 0.0, self.beam.length, 64);
        if !(mass > 0.0) {
            return Err(Error::Singular("mode shape has zero modal mass".into()));
        }
        let mut factor = (self.normalization / mass).sqrt();
        if shape.base_slope() < 0.0 {
            factor = -factor;
        }
        shape.scale(factor);
        Ok(shape)
    }

    pub fn mode(&self, index: usize) -> Result<Mode> {
        let shape = self.mode_shape(index)?;
        Ok(Mode {
            omega: shape.omega,
            phi_l: shape.tip_value(),
            phi_prime_0: shape.base_slope(),
        })
    }
}

/// Solver plus per-mode override table.
#[derive(Debug, Clone)]
pub struct ModalModel {
    solver: ModeSolver,
    overrides: Vec<ModalOverride>,
}

impl ModalModel {
    pub fn new(beam: BeamParams, overrides: Vec<ModalOverride>) -> Result<Self> {
        for (i, o) in overrides.iter().enumerate() {
            if o.mode == 0 {
                return Err(Error::invalid(
                    format!("modal_overrides[{i}].mode"),
                    "mode indices are 1-based",
                ));
            }
        }
        Ok(ModalModel {
            solver: ModeSolver::new(beam)?,
            overrides,
        })
    }

    pub fn with_normalization(mut self, value: f64) -> Result<Self> {
        self.solver = self.solver.with_normalization(value)?;
        Ok(self)
    }

    pub fn solver(&self) -> &ModeSolver {
        &self.solver
    }

    fn override_for(&self, index: usize) -> Option<&ModalOverride> {
        self.overrides.iter().find(|o| o.mode == index)
    }

    pub fn mode(&self, index: usize) -> Result<Mode> {
        match self.override_for(index) {
            Some(o) => Ok(o.as_mode()),
            None => self.solver.mode(index),
        }
    }

    pub fn frequencies(&self, n: usize) -> Result<Vec<f64>> {
        Ok(self.modal_data(n)?.modes().iter().map(|m| m.omega).collect())
    }

    pub fn modal_data(&self, n: usize) -> Result<ModalData> {
        if n == 0 {
            return Err(Error::invalid("n_modes", "must be >= 1"));
        }
        let modes = (1..=n).map(|j| self.mode(j)).collect::<Result<Vec<_>>>()?;
        ModalData::new(modes)
    }
}

pub fn solve_mode_frequencies(beam: &BeamParams, n_modes: usize) -> Result<Vec<f64>> {
    ModeSolver::new(*beam)?.frequencies(n_modes)
}

/// `(phi_j(l), phi_j'(0))` of the mass-normalised 1-based mode.
pub fn mode_shape_boundary_values(beam: &BeamParams, mode_index: usize) -> Result<(f64, f64)> {
    let m = ModeSolver::new(*beam)?.mode(mode_index)?;
    Ok((m.phi_l, m.phi_prime_0))
}

/// Hub-referred rigid-body inertia of hub, uniform link and payload.
pub fn total_inertia(beam: &BeamParams) -> f64 {
    beam.hub_inertia
        + beam.rho * beam.length.powi(3) / 3.0
        + beam.payload_mass * beam.length.powi(2)
        + beam.payload_inertia
}

/// Linear plant `psi' = A psi + B (u + xi)`, `g = C psi` with
/// `psi = [theta, theta', p_1, p_1', ..., p_n, p_n']` and `g = [theta_t, theta_c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpacePlant {
    pub n_modes: usize,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DMatrix<f64>,
    pub j_t: f64,
}

impl StateSpacePlant {
    pub fn order(&self) -> usize {
        2 * self.n_modes + 2
    }

    pub fn output(&self, psi: &DVector<f64>) -> Vector2<f64> {
        let g = &self.c * psi;
        Vector2::new(g[0], g[1])
    }

    /// `A psi + B (u + xi)`.
    pub fn derivative(&self, psi: &DVector<f64>, input: f64) -> DVector<f64> {
        let mut d = &self.a * psi;
        d.axpy(input, &self.b, 1.0);
        d
    }

    /// A, B and C as comma-separated blocks, one matrix row per line.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let mut block = |name: &str, rows: Vec<Vec<f64>>| {
            out.push_str(&format!("# {name}\n"));
            for r in rows {
                let line: Vec<String> = r.iter().map(|x| format!("{x:.17e}")).collect();
                out.push_str(&line.join(","));
                out.push('\n');
            }
        };
        block("A", rows_of(&self.a));
        block("B", self.b.iter().map(|x| vec![*x]).collect());
        block("C", rows_of(&self.c));
        out
    }
}

pub(crate) fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

/// Assembles the `n_modes`-mode plant from beam constants and eigendata.
pub fn build_plant(beam: &BeamParams, modes: &ModalData, n_modes: usize) -> Result<StateSpacePlant> {
    beam.validate()?;
    if n_modes == 0 {
        return Err(Error::invalid("n_modes", "a rigid-only model is not supported"));
    }
    if modes.len() < n_modes {
        return Err(Error::Dimension(format!(
            "{n_modes} modes requested but only {} supplied",
            modes.len()
        )));
    }
    let m = 2 * n_modes + 2;
    let j_t = total_inertia(beam);
    let zeta = beam.damping_ratio;
    let mut a = DMatrix::zeros(m, m);
    let mut b = DVector::zeros(m);
    let mut c = DMatrix::zeros(2, m);
    a[(0, 1)] = 1.0;
    b[1] = 1.0 / j_t;
    c[(0, 0)] = 1.0;
    c[(1, 0)] = 1.0;
    for (j, mode) in modes.modes()[..n_modes].iter().enumerate() {
        let r = 2 + 2 * j;
        a[(r, r + 1)] = 1.0;
        a[(r + 1, r)] = -mode.omega * mode.omega;
        a[(r + 1, r + 1)] = -2.0 * zeta * mode.omega;
        b[r + 1] = mode.phi_prime_0;
        c[(0, r)] = mode.phi_l / beam.length;
        c[(1, r)] = mode.phi_prime_0;
    }
    Ok(StateSpacePlant {
        n_modes,
        a,
        b,
        c,
        j_t,
    })
}

/// `(theta_t, theta_c) = C psi`.
pub fn output_map(plant: &StateSpacePlant, state: &DVector<f64>) -> Result<(f64, f64)> {
    if state.len() != plant.order() {
        return Err(Error::Dimension(format!(
            "state has {} entries, plant order is {}",
            state.len(),
            plant.order()
        )));
    }
    let g = plant.output(state);
    Ok((g[0], g[1]))
}

/// JSON plant definition: beam constants plus optional modal overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantDefinition {
    #[serde(flatten)]
    pub beam: BeamParams,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub modal_overrides: Vec<ModalOverride>,
}

impl PlantDefinition {
    pub fn reference() -> Self {
        PlantDefinition {
            beam: BeamParams::reference(),
            modal_overrides: ModalOverride::reference(),
        }
    }

    pub fn modal_model(&self) -> Result<ModalModel> {
        ModalModel::new(self.beam, self.modal_overrides.clone())
    }

    pub fn build(&self, n_modes: usize) -> Result<StateSpacePlant> {
        let data = self.modal_model()?.modal_data(n_modes)?;
        build_plant(&self.beam, &data, n_modes)
    }
}
