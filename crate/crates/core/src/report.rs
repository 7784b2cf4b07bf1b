//! Run artifacts. Each one starts with the SHA-256 of the scenario file.

use std::io::{self, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::{integral_indices, MetricsReport};
use crate::observer::{ObserverGainsExport, QReport};
use crate::parallel::Execution;
use crate::scenario::{Overrides, Scenario, ScenarioBounds};
use crate::sim::{ControllerSelect, SimTrace, SweepReport};

/// Frozen column order of the trace CSV.
pub const TRACE_COLUMNS: [&str; 26] = [
    "t", "theta", "theta_dot", "p1", "p1_dot", "p2", "p2_dot", "z1", "z2", "z3", "z4", "z1_hat", "z2_hat", "z3_hat",
    "z4_hat", "s0", "s1", "s2", "s3", "u_raw", "u", "theta_t", "theta_c", "xi", "e_y1", "e_y2",
];

/// `|s_3|` band for the surface entry time.
pub const SURFACE_BAND: f64 = 1e-3;
/// `||e_y||` band for the observer entry time.
pub const OUTPUT_BAND: f64 = 1e-4;
/// Trailing fraction of the run used for residual radii.
pub const RESIDUAL_FRACTION: f64 = 0.2;

pub fn hash_line(sha256: &str) -> String {
    format!("# scenario {sha256}")
}

/// Values use Rust's shortest round-trip formatting, so equal traces give
/// equal bytes and the file parses back bit-exactly.
pub fn write_trace_csv<W: Write>(mut w: W, trace: &SimTrace, sha256: &str) -> io::Result<()> {
    writeln!(w, "{}", hash_line(sha256))?;
    writeln!(w, "{}", TRACE_COLUMNS.join(","))?;
    let mut row = Vec::with_capacity(TRACE_COLUMNS.len());
    for k in 0..trace.len() {
        row.clear();
        row.push(trace.t[k]);
        row.extend_from_slice(&trace.psi[k]);
        row.extend_from_slice(&trace.z[k]);
        row.extend_from_slice(&trace.z_hat[k]);
        row.extend_from_slice(&trace.s[k]);
        row.extend([
            trace.u_raw[k],
            trace.u_sat[k],
            trace.theta_t[k],
            trace.theta_c[k],
            trace.xi[k],
            trace.e_y[k][0],
            trace.e_y[k][1],
        ]);
        let mut first = true;
        for v in &row {
            if !first {
                w.write_all(b",")?;
            }
            first = false;
            write!(w, "{v:e}")?;
        }
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn trace_csv(trace: &SimTrace, sha256: &str) -> String {
    let mut buf = Vec::new();
    write_trace_csv(&mut buf, trace, sha256).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Settled,
    Unsettled,
    Diverged,
}

/// Quantities read off a completed trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunFacts {
    pub samples: usize,
    pub final_tip_angle: f64,
    pub final_joint_angle: f64,
    pub max_abs_u: f64,
    /// First time `|s_3| < SURFACE_BAND`.
    pub surface_entry_time: Option<f64>,
    /// First time `||e_y|| < OUTPUT_BAND`.
    pub output_error_entry_time: Option<f64>,
    /// Largest `|s_i|` over the trailing `RESIDUAL_FRACTION` of the run.
    pub residual_radii: [f64; 4],
    /// Largest `||z - zhat||` over the same window.
    pub estimation_residual: f64,
    pub saturated_samples: usize,
    pub saturation_episodes: usize,
    pub boundary_layer_dwell: f64,
}

impl RunFacts {
    pub fn from_trace(trace: &SimTrace) -> Self {
        let last = trace.len() - 1;
        let est = trace.estimation_error_norm();
        let start = ((1.0 - RESIDUAL_FRACTION) * trace.len() as f64).floor() as usize;
        RunFacts {
            samples: trace.len(),
            final_tip_angle: trace.theta_t[last],
            final_joint_angle: trace.theta_c[last],
            max_abs_u: trace.u_sat.iter().fold(0.0, |m, u| m.max(u.abs())),
            surface_entry_time: trace.surface_entry_time(SURFACE_BAND),
            output_error_entry_time: trace
                .output_error_norm()
                .iter()
                .position(|v| *v < OUTPUT_BAND)
                .map(|k| trace.t[k]),
            residual_radii: trace.residual_radii(RESIDUAL_FRACTION),
            estimation_residual: est[start.min(last)..].iter().copied().fold(0.0, f64::max),
            saturated_samples: trace.saturated_samples,
            saturation_episodes: trace.saturation_episodes,
            boundary_layer_dwell: trace.boundary_layer_dwell,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Divergence {
    pub time: f64,
    pub reason: String,
    pub snapshot: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub scenario_sha256: String,
    pub status: RunStatus,
    pub controller: ControllerSelect,
    pub overrides: Overrides,
    pub dt: f64,
    pub t_end: f64,
    pub theta_d: f64,
    pub truth_modes: usize,
    pub theory_mode: bool,
    pub bounds: ScenarioBounds,
    pub q_report: QReport,
    pub observer_gains: ObserverGainsExport,
    pub metrics: Option<MetricsReport>,
    pub run: Option<RunFacts>,
    pub divergence: Option<Divergence>,
}

/// Summary plus the trace when the run completed.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub summary: Summary,
    pub trace: Option<SimTrace>,
}

fn classify(result: Result<SimTrace>) -> Result<std::result::Result<SimTrace, Divergence>> {
    match result {
        Ok(tr) => Ok(Ok(tr)),
        Err(Error::Diverged { time, reason, snapshot }) => Ok(Err(Divergence { time, reason, snapshot })),
        Err(e) => Err(e),
    }
}

pub fn run(sc: &Scenario) -> Result<RunArtifacts> {
    run_controller(sc, sc.config().controller)
}

pub fn run_controller(sc: &Scenario, controller: ControllerSelect) -> Result<RunArtifacts> {
    let outcome = classify(sc.run_with(controller))?;
    let cfg = sc.config();
    let mut summary = Summary {
        scenario_sha256: sc.sha256.clone(),
        status: RunStatus::Diverged,
        controller,
        overrides: sc.overrides,
        dt: cfg.dt,
        t_end: cfg.t_end,
        theta_d: cfg.theta_d,
        truth_modes: cfg.truth_modes,
        theory_mode: cfg.theory_mode,
        bounds: sc.bounds,
        q_report: sc.q_report(),
        observer_gains: sc.gains.observer.export(),
        metrics: None,
        run: None,
        divergence: None,
    };
    match outcome {
        Ok(trace) => {
            let metrics = MetricsReport::from_trace(&trace, &sc.file.metrics);
            summary.status = if metrics.settling_time_tip.is_some() {
                RunStatus::Settled
            } else {
                RunStatus::Unsettled
            };
            summary.metrics = Some(metrics);
            summary.run = Some(RunFacts::from_trace(&trace));
            Ok(RunArtifacts {
                summary,
                trace: Some(trace),
            })
        }
        Err(d) => {
            log::warn!("run diverged at t = {:.4} s: {}", d.time, d.reason);
            summary.divergence = Some(d);
            Ok(RunArtifacts { summary, trace: None })
        }
    }
}

/// One row of the controller comparison, in the column order of the
/// published comparison tables.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub controller: ControllerSelect,
    pub status: RunStatus,
    pub settling_time_tip: Option<f64>,
    pub settling_time_joint: Option<f64>,
    pub overshoot_pct: Option<f64>,
    pub steady_state_norm_tip: Option<f64>,
    pub ise: Option<f64>,
    pub iae: Option<f64>,
    pub itse: Option<f64>,
    pub itae: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareTable {
    pub scenario_sha256: String,
    pub rows: Vec<CompareRow>,
}

pub const COMPARE_COLUMNS: [&str; 10] = [
    "controller",
    "status",
    "settling_time_tip",
    "settling_time_joint",
    "overshoot_pct",
    "steady_state_norm_tip",
    "ise",
    "iae",
    "itse",
    "itae",
];

fn compare_row(sc: &Scenario, controller: ControllerSelect) -> Result<CompareRow> {
    let art = run_controller(sc, controller)?;
    let m = art.summary.metrics;
    let ix = art.trace.as_ref().map(|tr| integral_indices(&tr.tip_error(), &tr.t));
    Ok(CompareRow {
        controller,
        status: art.summary.status,
        settling_time_tip: m.and_then(|m| m.settling_time_tip),
        settling_time_joint: m.and_then(|m| m.settling_time_joint),
        overshoot_pct: m.and_then(|m| m.overshoot_pct),
        steady_state_norm_tip: m.map(|m| m.steady_state_norm_tip),
        ise: ix.map(|i| i.ise),
        iae: ix.map(|i| i.iae),
        itse: ix.map(|i| i.itse),
        itae: ix.map(|i| i.itae),
    })
}

/// Proposed controller and PD baseline on the same scenario.
pub fn compare(sc: &Scenario) -> Result<CompareTable> {
    Ok(CompareTable {
        scenario_sha256: sc.sha256.clone(),
        rows: vec![
            compare_row(sc, ControllerSelect::Proposed)?,
            compare_row(sc, ControllerSelect::Pd)?,
        ],
    })
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

fn token<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|j| j.as_str().map(str::to_owned))
        .unwrap_or_default()
}

impl CompareTable {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n{}\n", hash_line(&self.scenario_sha256), COMPARE_COLUMNS.join(","));
        for r in &self.rows {
            let cells = [
                token(&r.controller),
                token(&r.status),
                cell(r.settling_time_tip),
                cell(r.settling_time_joint),
                cell(r.overshoot_pct),
                cell(r.steady_state_norm_tip),
                cell(r.ise),
                cell(r.iae),
                cell(r.itse),
                cell(r.itae),
            ];
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepArtifact {
    pub scenario_sha256: String,
    pub scales: Vec<f64>,
    pub report: SweepReport,
}

pub fn sweep(sc: &Scenario, scales: &[f64], execution: Execution) -> Result<SweepArtifact> {
    Ok(SweepArtifact {
        scenario_sha256: sc.sha256.clone(),
        scales: scales.to_vec(),
        report: sc.sweep(scales, execution)?,
    })
}

/// Gnuplot script drawing the tip/joint angles, the control and `s_3`
/// from a trace CSV.
pub fn gnuplot_script(trace_file: &str, sha256: &str, theta_d: f64) -> String {
    format!(
        "{hash}
set datafile separator ','
set datafile commentschars '#'
set terminal pngcairo size 900,1000
set output 'trace.png'
set multiplot layout 3,1
set xlabel 't (s)'
set ylabel 'angle (rad)'
plot '{f}' using 't':'theta_t' with lines title 'tip', \\
     '{f}' using 't':'theta_c' with lines title 'joint', \\
     {theta_d:e} with lines dashtype 2 title 'set-point'
set ylabel 'u (N m)'
plot '{f}' using 't':'u' with lines title 'u'
set ylabel 's3'
set logscale y
plot '{f}' using 't':(abs(column('s3'))) with lines title '|s3|'
unset multiplot
",
        hash = hash_line(sha256),
        f = trace_file,
    )
}
