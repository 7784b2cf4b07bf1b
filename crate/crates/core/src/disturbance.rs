//! Bounded matched disturbances `xi(t)` entering through the input channel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DisturbanceSpec {
    #[default]
    None,
    /// `amplitude sin(omega t + phase)`.
    Sine {
        amplitude: f64,
        omega: f64,
        #[serde(default)]
        phase: f64,
    },
    /// `amplitude` for `t >= time`.
    Step { amplitude: f64, time: f64 },
    /// Sum of `components` sinusoids with random frequencies in
    /// `(0, bandwidth]`, random phases and weights summing to `amplitude`.
    BandLimitedNoise {
        amplitude: f64,
        bandwidth: f64,
        seed: u64,
        #[serde(default = "default_components")]
        components: usize,
    },
}

fn default_components() -> usize {
    16
}

impl DisturbanceSpec {
    /// The bound `xi_bar` with `|xi(t)| <= xi_bar`.
    pub fn bound(&self) -> f64 {
        match *self {
            DisturbanceSpec::None => 0.0,
            DisturbanceSpec::Sine { amplitude, .. }
            | DisturbanceSpec::Step { amplitude, .. }
            | DisturbanceSpec::BandLimitedNoise { amplitude, .. } => amplitude.abs(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("disturbance.{name}"), "must be finite"))
            }
        };
        match *self {
            DisturbanceSpec::None => Ok(()),
            DisturbanceSpec::Sine { amplitude, omega, phase } => {
                finite("amplitude", amplitude)?;
                finite("omega", omega)?;
                finite("phase", phase)
            }
            DisturbanceSpec::Step { amplitude, time } => {
                finite("amplitude", amplitude)?;
                finite("time", time)
            }
            DisturbanceSpec::BandLimitedNoise {
                amplitude,
                bandwidth,
                components,
                ..
            } => {
                finite("amplitude", amplitude)?;
                if !(bandwidth > 0.0 && bandwidth.is_finite()) {
                    return Err(Error::invalid("disturbance.bandwidth", "must be > 0"));
                }
                if components == 0 {
                    return Err(Error::invalid("disturbance.components", "must be >= 1"));
                }
                Ok(())
            }
        }
    }

    pub fn realize(&self) -> Result<Disturbance> {
        self.validate()?;
        let tones = match *self {
            DisturbanceSpec::BandLimitedNoise {
                amplitude,
                bandwidth,
                seed,
                components,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut tones: Vec<Tone> = (0..components)
                    .map(|_| Tone {
                        weight: rng.random_range(0.05..=1.0),
                        omega: bandwidth * rng.random_range(f64::EPSILON..=1.0),
                        phase: rng.random_range(0.0..std::f64::consts::TAU),
                    })
                    .collect();
                let total: f64 = tones.iter().map(|t| t.weight).sum();
                for t in &mut tones {
                    t.weight *= amplitude / total;
                }
                tones
            }
            _ => Vec::new(),
        };
        Ok(Disturbance {
            spec: self.clone(),
            tones,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Tone {
    weight: f64,
    omega: f64,
    phase: f64,
}

/// A realised disturbance; cheap to evaluate at any time.
#[derive(Debug, Clone, PartialEq)]
pub struct Disturbance {
    spec: DisturbanceSpec,
    tones: Vec<Tone>,
}

impl Disturbance {
    pub fn at(&self, t: f64) -> f64 {
        match self.spec {
            DisturbanceSpec::None => 0.0,
            DisturbanceSpec::Sine { amplitude, omega, phase } => amplitude * (omega * t + phase).sin(),
            DisturbanceSpec::Step { amplitude, time } => {
                if t >= time {
                    amplitude
                } else {
                    0.0
                }
            }
            DisturbanceSpec::BandLimitedNoise { amplitude, .. } => {
                let bound = amplitude.abs();
                let v: f64 = self.tones.iter().map(|k| k.weight * (k.omega * t + k.phase).sin()).sum();
                v.clamp(-bound, bound)
            }
        }
    }

    pub fn bound(&self) -> f64 {
        self.spec.bound()
    }
}

/// One-off evaluation of `xi(t)`.
pub fn disturbance_signal(spec: &DisturbanceSpec, t: f64) -> Result<f64> {
    Ok(spec.realize()?.at(t))
}
