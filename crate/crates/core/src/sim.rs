//! Composite closed loop: truth plant (one or two modes), fixed-time observer
//! on the one-mode canonical model, and the selected controller.
//!
//! Each step holds the control constant and advances plant and observer
//! together with classical RK4.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::beam::{PlantDefinition, StateSpacePlant};
use crate::canonical::{to_canonical, CanonicalSystem};
use crate::controller::{
    build_surfaces, control_law, pd_baseline, settling_bound_controller, ControllerGains, DerivativeFilter, PdGains,
    Switching,
};
use crate::disturbance::{Disturbance, DisturbanceSpec};
use crate::error::{Error, Result};
use crate::metrics::settling_time_abs;
use crate::observer::{observer_rhs, output_error, settling_bound_observer, ObserverGains};
use crate::parallel::Execution;

/// Divergence threshold on any state entry.
pub const DIVERGENCE_LIMIT: f64 = 1e6;
/// Width of padded physical-state columns in a trace.
pub const PSI_COLUMNS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerSelect {
    #[default]
    Proposed,
    Pd,
    /// Zero input; used for plant verification.
    OpenLoop,
}

/// Initial observer estimate.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObserverInit {
    /// `zhat(0) = T psi(0)`.
    #[default]
    Matched,
    /// Explicit canonical estimate.
    Canonical { z_hat: Vec<f64> },
    /// `zhat(0) = T (psi(0) + offset)` on the first four physical states.
    PhysicalOffset { offset: Vec<f64> },
}

impl ObserverInit {
    /// Scales the deviation from the matched estimate.
    pub fn scaled(&self, scale: f64) -> ObserverInit {
        match self {
            ObserverInit::Matched => ObserverInit::Matched,
            ObserverInit::Canonical { z_hat } => ObserverInit::Canonical { z_hat: z_hat.clone() },
            ObserverInit::PhysicalOffset { offset } => ObserverInit::PhysicalOffset {
                offset: offset.iter().map(|v| v * scale).collect(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    pub theta_d: f64,
    /// Physical initial state; missing entries are zero.
    #[serde(default)]
    pub plant_ic: Vec<f64>,
    #[serde(default)]
    pub observer_init: ObserverInit,
    #[serde(default)]
    pub disturbance: DisturbanceSpec,
    #[serde(default)]
    pub controller: ControllerSelect,
    #[serde(default = "default_truth_modes")]
    pub truth_modes: usize,
    /// Pure sign functions and no saturation.
    #[serde(default)]
    pub theory_mode: bool,
}

fn default_truth_modes() -> usize {
    2
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 1e-4,
            t_end: 8.0,
            theta_d: std::f64::consts::FRAC_PI_4,
            plant_ic: Vec::new(),
            observer_init: ObserverInit::Matched,
            disturbance: DisturbanceSpec::None,
            controller: ControllerSelect::Proposed,
            truth_modes: 2,
            theory_mode: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("sim.dt", format!("must be > 0, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::invalid("sim.t_end", format!("must be >= 0, got {}", self.t_end)));
        }
        if !self.theta_d.is_finite() {
            return Err(Error::invalid("sim.theta_d", "must be finite"));
        }
        if !(1..=2).contains(&self.truth_modes) {
            return Err(Error::invalid(
                "sim.truth_modes",
                format!("must be 1 or 2, got {}", self.truth_modes),
            ));
        }
        let order = 2 * self.truth_modes + 2;
        if self.plant_ic.len() > order {
            return Err(Error::invalid(
                "sim.plant_ic",
                format!("{} entries for a state of dimension {order}", self.plant_ic.len()),
            ));
        }
        if !self.plant_ic.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("sim.plant_ic", "entries must be finite"));
        }
        match &self.observer_init {
            ObserverInit::Matched => {}
            ObserverInit::Canonical { z_hat: v } | ObserverInit::PhysicalOffset { offset: v } => {
                if v.len() != 4 || !v.iter().all(|x| x.is_finite()) {
                    return Err(Error::invalid("sim.observer_init", "needs four finite entries"));
                }
            }
        }
        self.disturbance.validate()
    }

    /// Number of steps on `[0, t_end]`.
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn switching(&self) -> Switching {
        if self.theory_mode {
            Switching::Pure
        } else {
            Switching::Regularized
        }
    }
}

/// Truth plant, one-mode design plant and its canonical form.
#[derive(Debug, Clone, PartialEq)]
pub struct Systems {
    pub truth: StateSpacePlant,
    pub design: StateSpacePlant,
    pub canonical: CanonicalSystem,
}

impl Systems {
    pub fn build(plant: &PlantDefinition, truth_modes: usize) -> Result<Self> {
        let design = plant.build(1)?;
        let truth = if truth_modes == 1 {
            design.clone()
        } else {
            plant.build(truth_modes)?
        };
        Ok(Systems {
            canonical: to_canonical(&design)?,
            truth,
            design,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopGains {
    pub controller: ControllerGains,
    pub observer: ObserverGains,
    pub pd: PdGains,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopState {
    pub step: usize,
    pub psi: DVector<f64>,
    pub z_hat: DVector<f64>,
    pd_filter: DerivativeFilter,
}

/// Values recorded at one sample instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub psi: [f64; PSI_COLUMNS],
    pub z: [f64; 4],
    pub z_hat: [f64; 4],
    pub s: [f64; 4],
    pub u_raw: f64,
    pub u_sat: f64,
    pub theta_t: f64,
    pub theta_c: f64,
    pub xi: f64,
    pub e_y: [f64; 2],
}

/// A configured closed loop ready to step.
pub struct ClosedLoop<'a> {
    config: &'a SimConfig,
    systems: &'a Systems,
    gains: &'a LoopGains,
    disturbance: Disturbance,
    z_d: [f64; 4],
    switching: Switching,
}

fn head4(v: &DVector<f64>) -> DVector<f64> {
    v.rows(0, 4).into_owned()
}

fn arr4(v: &DVector<f64>) -> [f64; 4] {
    [v[0], v[1], v[2], v[3]]
}

impl<'a> ClosedLoop<'a> {
    pub fn new(config: &'a SimConfig, systems: &'a Systems, gains: &'a LoopGains) -> Result<Self> {
        config.validate()?;
        if systems.truth.n_modes != config.truth_modes {
            return Err(Error::Dimension(format!(
                "truth plant has {} modes, config asks for {}",
                systems.truth.n_modes, config.truth_modes
            )));
        }
        gains.observer.validate(systems.canonical.order())?;
        let mut psi_d = DVector::zeros(4);
        psi_d[0] = config.theta_d;
        let z_d = systems.canonical.transform_desired(&psi_d);
        Ok(ClosedLoop {
            config,
            systems,
            gains,
            disturbance: config.disturbance.realize()?,
            z_d: arr4(&z_d),
            switching: config.switching(),
        })
    }

    pub fn desired(&self) -> [f64; 4] {
        self.z_d
    }

    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.config.dt
    }

    pub fn initial_state(&self) -> Result<LoopState> {
        let order = self.systems.truth.order();
        let mut psi = DVector::zeros(order);
        for (k, v) in self.config.plant_ic.iter().enumerate() {
            psi[k] = *v;
        }
        let t = &self.systems.canonical;
        let z_hat = match &self.config.observer_init {
            ObserverInit::Matched => t.transform_state(&head4(&psi)),
            ObserverInit::Canonical { z_hat } => DVector::from_column_slice(z_hat),
            ObserverInit::PhysicalOffset { offset } => {
                t.transform_state(&(head4(&psi) + DVector::from_column_slice(offset)))
            }
        };
        Ok(LoopState {
            step: 0,
            psi,
            z_hat,
            pd_filter: DerivativeFilter::new(self.gains.pd.filter_bandwidth),
        })
    }

    /// Control and diagnostics at the current instant. Advances the PD
    /// differentiator, so call once per step.
    pub fn sample(&self, state: &mut LoopState) -> Result<Sample> {
        let t = self.time(state.step);
        let sys = &self.systems.canonical;
        let y = self.systems.truth.output(&state.psi);
        let g = [y[0], y[1]];
        let z_hat = arr4(&state.z_hat);
        let gains = &self.gains.controller;
        let (u_raw, s) = match self.config.controller {
            ControllerSelect::Proposed => {
                let out = control_law(&z_hat, &self.z_d, gains, &sys.f, self.switching)?;
                (out.u, out.surfaces.s)
            }
            ControllerSelect::Pd => {
                let rate = state.pd_filter.update(g[0], self.config.dt);
                let u = pd_baseline(g[0], rate, self.config.theta_d, self.gains.pd.kp, self.gains.pd.kd);
                (u, build_surfaces(&z_hat, &self.z_d, gains).s)
            }
            ControllerSelect::OpenLoop => (0.0, build_surfaces(&z_hat, &self.z_d, gains).s),
        };
        let u_sat = if self.config.theory_mode {
            u_raw
        } else {
            u_raw.clamp(-gains.saturation, gains.saturation)
        };
        let mut psi = [0.0; PSI_COLUMNS];
        for (dst, src) in psi.iter_mut().zip(state.psi.iter()) {
            *dst = *src;
        }
        Ok(Sample {
            t,
            psi,
            z: arr4(&sys.transform_state(&head4(&state.psi))),
            z_hat,
            s,
            u_raw,
            u_sat,
            theta_t: g[0],
            theta_c: g[1],
            xi: self.disturbance.at(t),
            e_y: output_error(&state.z_hat, g, sys),
        })
    }

    fn rhs(&self, psi: &DVector<f64>, z_hat: &DVector<f64>, u: f64, t: f64) -> Result<(DVector<f64>, DVector<f64>)> {
        let truth = &self.systems.truth;
        let d_psi = truth.derivative(psi, u + self.disturbance.at(t));
        let y = truth.output(psi);
        let d_z = observer_rhs(
            z_hat,
            [y[0], y[1]],
            u,
            &self.systems.canonical,
            &self.gains.observer,
            self.switching,
        )?;
        Ok((d_psi, d_z))
    }

    /// One RK4 step with the input held at `u`.
    pub fn advance(&self, state: &mut LoopState, u: f64) -> Result<()> {
        let dt = self.config.dt;
        let t = self.time(state.step);
        let (p0, z0) = (&state.psi, &state.z_hat);
        let wrap = |r: Result<(DVector<f64>, DVector<f64>)>| r.map_err(|e| self.diverged(t, e.to_string(), state));
        let (k1p, k1z) = wrap(self.rhs(p0, z0, u, t))?;
        let (k2p, k2z) = wrap(self.rhs(&(p0 + &k1p * (0.5 * dt)), &(z0 + &k1z * (0.5 * dt)), u, t + 0.5 * dt))?;
        let (k3p, k3z) = wrap(self.rhs(&(p0 + &k2p * (0.5 * dt)), &(z0 + &k2z * (0.5 * dt)), u, t + 0.5 * dt))?;
        let (k4p, k4z) = wrap(self.rhs(&(p0 + &k3p * dt), &(z0 + &k3z * dt), u, t + dt))?;
        let psi = p0 + (k1p + k2p * 2.0 + k3p * 2.0 + k4p) * (dt / 6.0);
        let z_hat = z0 + (k1z + k2z * 2.0 + k3z * 2.0 + k4z) * (dt / 6.0);
        let bad = psi
            .iter()
            .chain(z_hat.iter())
            .any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT);
        state.psi = psi;
        state.z_hat = z_hat;
        state.step += 1;
        if bad {
            return Err(self.diverged(
                self.time(state.step),
                format!("state left the |x| <= {DIVERGENCE_LIMIT:e} region"),
                state,
            ));
        }
        Ok(())
    }

    fn diverged(&self, time: f64, reason: String, state: &LoopState) -> Error {
        Error::Diverged {
            time,
            reason,
            snapshot: state.psi.iter().chain(state.z_hat.iter()).copied().collect(),
        }
    }
}

/// One closed-loop step from `state`; returns the sample taken at the start
/// of the step and the advanced state.
pub fn step_closed_loop(
    state: &LoopState,
    config: &SimConfig,
    systems: &Systems,
    gains: &LoopGains,
) -> Result<(Sample, LoopState)> {
    let cl = ClosedLoop::new(config, systems, gains)?;
    let mut next = state.clone();
    let sample = cl.sample(&mut next)?;
    cl.advance(&mut next, sample.u_sat)?;
    Ok((sample, next))
}

/// Column-oriented trajectory on the uniform grid `t_k = k dt`.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SimTrace {
    pub dt: f64,
    pub theta_d: f64,
    pub t: Vec<f64>,
    pub psi: Vec<[f64; PSI_COLUMNS]>,
    pub z: Vec<[f64; 4]>,
    pub z_hat: Vec<[f64; 4]>,
    pub s: Vec<[f64; 4]>,
    pub u_raw: Vec<f64>,
    pub u_sat: Vec<f64>,
    pub theta_t: Vec<f64>,
    pub theta_c: Vec<f64>,
    pub xi: Vec<f64>,
    pub e_y: Vec<[f64; 2]>,
    /// Samples at which the actuator limit clipped the command.
    pub saturated_samples: usize,
    /// Separate runs of consecutive saturated samples.
    pub saturation_episodes: usize,
    /// Fraction of samples with `|s_3|` inside the sign boundary layer.
    pub boundary_layer_dwell: f64,
}

impl SimTrace {
    fn push(&mut self, s: &Sample) {
        self.t.push(s.t);
        self.psi.push(s.psi);
        self.z.push(s.z);
        self.z_hat.push(s.z_hat);
        self.s.push(s.s);
        self.u_raw.push(s.u_raw);
        self.u_sat.push(s.u_sat);
        self.theta_t.push(s.theta_t);
        self.theta_c.push(s.theta_c);
        self.xi.push(s.xi);
        self.e_y.push(s.e_y);
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn tip_error(&self) -> Vec<f64> {
        self.theta_t.iter().map(|v| v - self.theta_d).collect()
    }

    pub fn joint_error(&self) -> Vec<f64> {
        self.theta_c.iter().map(|v| v - self.theta_d).collect()
    }

    pub fn output_error_norm(&self) -> Vec<f64> {
        self.e_y.iter().map(|e| e[0].hypot(e[1])).collect()
    }

    /// `||z - zhat||` per sample.
    pub fn estimation_error_norm(&self) -> Vec<f64> {
        self.z
            .iter()
            .zip(&self.z_hat)
            .map(|(z, h)| z.iter().zip(h).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
            .collect()
    }

    /// Largest `|s_i|` over the final `fraction` of the run.
    pub fn residual_radii(&self, fraction: f64) -> [f64; 4] {
        let start = ((1.0 - fraction) * self.len() as f64).floor() as usize;
        let mut r = [0.0f64; 4];
        for s in &self.s[start.min(self.len())..] {
            for i in 0..4 {
                r[i] = r[i].max(s[i].abs());
            }
        }
        r
    }

    /// First sample time with `|s_3| < band`.
    pub fn surface_entry_time(&self, band: f64) -> Option<f64> {
        self.s.iter().position(|s| s[3].abs() < band).map(|k| self.t[k])
    }
}

pub fn run_scenario(config: &SimConfig, systems: &Systems, gains: &LoopGains) -> Result<SimTrace> {
    let cl = ClosedLoop::new(config, systems, gains)?;
    let mut state = cl.initial_state()?;
    let steps = config.steps();
    let mut trace = SimTrace {
        dt: config.dt,
        theta_d: config.theta_d,
        ..SimTrace::default()
    };
    let sat = gains.controller.saturation;
    let bl = gains.controller.boundary_layer;
    let mut was_saturated = false;
    let mut dwell = 0usize;
    for k in 0..=steps {
        let sample = cl.sample(&mut state)?;
        let saturated = sample.u_raw.abs() > sat && !config.theory_mode;
        if saturated {
            trace.saturated_samples += 1;
            if !was_saturated {
                trace.saturation_episodes += 1;
                log::debug!("actuator saturated at t = {:.4} s (u = {:.3})", sample.t, sample.u_raw);
            }
        }
        was_saturated = saturated;
        if sample.s[3].abs() <= bl {
            dwell += 1;
        }
        trace.push(&sample);
        if k < steps {
            cl.advance(&mut state, sample.u_sat)?;
        }
    }
    trace.boundary_layer_dwell = dwell as f64 / trace.len() as f64;
    if trace.saturated_samples > 0 {
        log::info!(
            "actuator limit active on {} samples in {} episodes",
            trace.saturated_samples,
            trace.saturation_episodes
        );
    }
    Ok(trace)
}

/// Controller and observer bounds combined as in the cascade argument.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CascadeBounds {
    pub t_ctrl: f64,
    pub t_ftsmo: f64,
    pub t_total: f64,
    pub separated: bool,
}

pub fn cascade_bounds(systems: &Systems, gains: &LoopGains) -> CascadeBounds {
    let t_ctrl = settling_bound_controller(&gains.controller).total;
    let t_ftsmo = settling_bound_observer(&systems.canonical, &gains.observer).t_ftsmo;
    let v = crate::observer::check_time_hierarchy(t_ftsmo, t_ctrl);
    CascadeBounds {
        t_ctrl,
        t_ftsmo,
        t_total: v.t_total,
        separated: v.separated,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub scale: f64,
    /// Negative scales start on the far side of the set-point.
    pub mirrored: bool,
    pub theta0: f64,
    /// `|theta_d - theta(0)|`; the settling band is a percentage of it.
    pub step_magnitude: f64,
    pub settling_time_tip: Option<f64>,
    pub settling_time_joint: Option<f64>,
    /// Tip settling with the band taken from `|theta_d|` instead.
    pub settling_time_tip_fixed_band: Option<f64>,
    pub diverged: Option<String>,
    pub within_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub band_pct: f64,
    pub bounds: CascadeBounds,
    pub rows: Vec<SweepRow>,
    pub violations: usize,
}

/// Runs the scenario with `theta(0) = theta_d + scale (theta0 - theta_d)`.
pub fn sweep_initial_conditions(
    config: &SimConfig,
    systems: &Systems,
    gains: &LoopGains,
    scales: &[f64],
    band_pct: f64,
    execution: Execution,
) -> Result<SweepReport> {
    if scales.is_empty() {
        return Err(Error::invalid("scales", "at least one scale is required"));
    }
    if let Some(s) = scales.iter().find(|s| !s.is_finite()) {
        return Err(Error::invalid("scales", format!("scale {s} is not finite")));
    }
    config.validate()?;
    let bounds = cascade_bounds(systems, gains);
    let theta_base = config.plant_ic.first().copied().unwrap_or(0.0);
    let rows = execution.map(scales, |&scale| {
        let mut cfg = config.clone();
        if cfg.plant_ic.is_empty() {
            cfg.plant_ic.push(0.0);
        }
        let theta0 = config.theta_d + scale * (theta_base - config.theta_d);
        cfg.plant_ic[0] = theta0;
        let step = (config.theta_d - theta0).abs();
        let step = if step > 0.0 { step } else { config.theta_d.abs() };
        let half = 0.01 * band_pct * step;
        match run_scenario(&cfg, systems, gains) {
            Ok(tr) => {
                let tip = settling_time_abs(&tr.theta_t, &tr.t, tr.theta_d, half);
                let joint = settling_time_abs(&tr.theta_c, &tr.t, tr.theta_d, half);
                let fixed = settling_time_abs(&tr.theta_t, &tr.t, tr.theta_d, 0.01 * band_pct * tr.theta_d.abs());
                SweepRow {
                    scale,
                    mirrored: scale < 0.0,
                    theta0,
                    step_magnitude: step,
                    settling_time_tip: tip,
                    settling_time_joint: joint,
                    settling_time_tip_fixed_band: fixed,
                    diverged: None,
                    within_bound: tip.is_some_and(|t| t <= bounds.t_total),
                }
            }
            Err(e) => SweepRow {
                scale,
                mirrored: scale < 0.0,
                theta0,
                step_magnitude: step,
                settling_time_tip: None,
                settling_time_joint: None,
                settling_time_tip_fixed_band: None,
                diverged: Some(e.to_string()),
                within_bound: false,
            },
        }
    });
    let violations = rows.iter().filter(|r| !r.within_bound).count();
    Ok(SweepReport {
        band_pct,
        bounds,
        rows,
        violations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObserverSweepRow {
    pub scale: f64,
    pub initial_error: f64,
    /// First time `||e_y|| < entry_band`.
    pub entry_time: Option<f64>,
    /// Largest `||e_y||` after entry.
    pub max_after_entry: f64,
    pub diverged: Option<String>,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObserverSweepReport {
    pub t_ftsmo: f64,
    pub entry_band: f64,
    pub persist_band: f64,
    pub rows: Vec<ObserverSweepRow>,
    pub violations: usize,
}

/// Scales the observer's initial deviation and checks entry into
/// `entry_band` before the observer bound and confinement to
/// `persist_band` afterwards.
pub fn sweep_observer_initial_conditions(
    config: &SimConfig,
    systems: &Systems,
    gains: &LoopGains,
    scales: &[f64],
    entry_band: f64,
    persist_band: f64,
    execution: Execution,
) -> Result<ObserverSweepReport> {
    if scales.is_empty() {
        return Err(Error::invalid("scales", "at least one scale is required"));
    }
    config.validate()?;
    let t_ftsmo = settling_bound_observer(&systems.canonical, &gains.observer).t_ftsmo;
    let rows = execution.map(scales, |&scale| {
        let mut cfg = config.clone();
        cfg.observer_init = config.observer_init.scaled(scale);
        match run_scenario(&cfg, systems, gains) {
            Ok(tr) => {
                let norm = tr.output_error_norm();
                let entry = norm.iter().position(|v| *v < entry_band);
                let max_after = entry.map_or(f64::INFINITY, |k| norm[k..].iter().copied().fold(0.0, f64::max));
                let entry_time = entry.map(|k| tr.t[k]);
                ObserverSweepRow {
                    scale,
                    initial_error: norm[0],
                    entry_time,
                    max_after_entry: max_after,
                    diverged: None,
                    ok: entry_time.is_some_and(|t| t <= t_ftsmo) && max_after <= persist_band,
                }
            }
            Err(e) => ObserverSweepRow {
                scale,
                initial_error: f64::NAN,
                entry_time: None,
                max_after_entry: f64::INFINITY,
                diverged: Some(e.to_string()),
                ok: false,
            },
        }
    });
    let violations = rows.iter().filter(|r| !r.ok).count();
    Ok(ObserverSweepReport {
        t_ftsmo,
        entry_band,
        persist_band,
        rows,
        violations,
    })
}
