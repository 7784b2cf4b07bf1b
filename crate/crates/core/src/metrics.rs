//! Regulation quality measures on uniformly sampled signals.

use serde::{Deserialize, Serialize};

use crate::sim::SimTrace;

/// Earliest time after which `signal` stays within `target +- half_width`.
/// `None` when the last sample is outside.
pub fn settling_time_abs(signal: &[f64], t: &[f64], target: f64, half_width: f64) -> Option<f64> {
    assert_eq!(signal.len(), t.len(), "signal and grid differ in length");
    let last_out = signal.iter().rposition(|x| (x - target).abs() > half_width);
    match last_out {
        None => t.first().copied(),
        Some(k) if k + 1 == signal.len() => None,
        Some(k) => Some(t[k + 1]),
    }
}

/// Settling time with a band of `band_pct` percent of `|target|`.
pub fn settling_time(signal: &[f64], t: &[f64], target: f64, band_pct: f64) -> Option<f64> {
    settling_time_abs(signal, t, target, 0.01 * band_pct * target.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct IntegralIndices {
    pub ise: f64,
    pub iae: f64,
    pub itse: f64,
    pub itae: f64,
}

/// Trapezoidal ISE, IAE, ITSE and ITAE.
pub fn integral_indices(e: &[f64], t: &[f64]) -> IntegralIndices {
    assert_eq!(e.len(), t.len(), "signal and grid differ in length");
    let mut out = IntegralIndices::default();
    for k in 1..e.len() {
        let h = 0.5 * (t[k] - t[k - 1]);
        let (e0, e1) = (e[k - 1], e[k]);
        let (t0, t1) = (t[k - 1], t[k]);
        out.ise += h * (e0 * e0 + e1 * e1);
        out.iae += h * (e0.abs() + e1.abs());
        out.itse += h * (t0 * e0 * e0 + t1 * e1 * e1);
        out.itae += h * (t0 * e0.abs() + t1 * e1.abs());
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Overshoot {
    /// Percent of `|target|`; `None` when the target is zero.
    pub percent: Option<f64>,
    /// Overshoot in signal units.
    pub absolute: f64,
}

/// Peak excursion beyond `target` in the direction of approach.
pub fn overshoot(signal: &[f64], target: f64) -> Overshoot {
    let start = signal.first().copied().unwrap_or(target);
    let dir = if target > start {
        1.0
    } else if target < start {
        -1.0
    } else if target >= 0.0 {
        1.0
    } else {
        -1.0
    };
    let peak = signal.iter().map(|x| dir * (x - target)).fold(0.0, f64::max);
    Overshoot {
        percent: (target != 0.0).then(|| 100.0 * peak / target.abs()),
        absolute: peak,
    }
}

/// RMS of `e` over samples with `t >= t_last - window`.
pub fn steady_state_norm(e: &[f64], t: &[f64], window: f64) -> f64 {
    assert_eq!(e.len(), t.len(), "signal and grid differ in length");
    let Some(&t_end) = t.last() else {
        return 0.0;
    };
    let cut = t_end - window - 1e-9 * window.max(1.0);
    let tail: Vec<f64> = t.iter().zip(e).filter(|(ti, _)| **ti >= cut).map(|(_, v)| *v).collect();
    if tail.is_empty() {
        return 0.0;
    }
    (tail.iter().map(|v| v * v).sum::<f64>() / tail.len() as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsOptions {
    pub band_pct: f64,
    pub window: f64,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        MetricsOptions {
            band_pct: 2.0,
            window: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsReport {
    pub settling_time_tip: Option<f64>,
    pub settling_time_joint: Option<f64>,
    pub overshoot_pct: Option<f64>,
    pub overshoot_abs: f64,
    pub steady_state_norm_tip: f64,
    pub steady_state_norm_joint: f64,
    pub tip: IntegralIndices,
    pub joint: IntegralIndices,
}

impl MetricsReport {
    pub fn from_trace(trace: &SimTrace, opts: &MetricsOptions) -> Self {
        let target = trace.theta_d;
        let e_tip = trace.tip_error();
        let e_joint = trace.joint_error();
        let os = overshoot(&trace.theta_t, target);
        MetricsReport {
            settling_time_tip: settling_time(&trace.theta_t, &trace.t, target, opts.band_pct),
            settling_time_joint: settling_time(&trace.theta_c, &trace.t, target, opts.band_pct),
            overshoot_pct: os.percent,
            overshoot_abs: os.absolute,
            steady_state_norm_tip: steady_state_norm(&e_tip, &trace.t, opts.window),
            steady_state_norm_joint: steady_state_norm(&e_joint, &trace.t, opts.window),
            tip: integral_indices(&e_tip, &trace.t),
            joint: integral_indices(&e_joint, &trace.t),
        }
    }
}
