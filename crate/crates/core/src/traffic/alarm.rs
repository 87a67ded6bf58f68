use serde::{Deserialize, Serialize};

use super::Point;
use crate::{Error, Result};

/// Probability that a station at a given distance from the epicenter is
/// triggered by the event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum CorrelationModel {
    /// Every station is triggered.
    Unit,
    /// `exp(-a d)` with `a` in 1/m.
    ExpDecay { decay_per_m: f64 },
    /// `sqrt(d_max^2 - d^2) / d_max` inside `d_max`, zero outside.
    SqrtCap { d_max_m: f64 },
}

impl CorrelationModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CorrelationModel::Unit => Ok(()),
            CorrelationModel::ExpDecay { decay_per_m } if decay_per_m > 0.0 => Ok(()),
            CorrelationModel::ExpDecay { .. } => {
                Err(Error::invalid("decay_per_m", "must be positive"))
            }
            CorrelationModel::SqrtCap { d_max_m } if d_max_m > 0.0 => Ok(()),
            CorrelationModel::SqrtCap { .. } => Err(Error::invalid("d_max_m", "must be positive")),
        }
    }

    pub fn psi(&self, d: f64) -> f64 {
        debug_assert!(d >= 0.0);
        match *self {
            CorrelationModel::Unit => 1.0,
            CorrelationModel::ExpDecay { decay_per_m } => (-decay_per_m * d).exp(),
            CorrelationModel::SqrtCap { d_max_m } => {
                if d <= d_max_m {
                    // normalized so the peak at the epicenter is 1
                    ((d_max_m * d_max_m - d * d).max(0.0)).sqrt() / d_max_m
                } else {
                    0.0
                }
            }
        }
    }
}

pub fn spatial_correlation(model: &CorrelationModel, d: f64) -> f64 {
    model.psi(d)
}

/// One alarm event: a front leaving `epicenter` at `t_a_s` with speed
/// `speed_m_per_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlarmScenario {
    pub epicenter: Point,
    pub speed_m_per_s: f64,
    pub t_a_s: f64,
    pub correlation: CorrelationModel,
}

impl AlarmScenario {
    pub fn new(
        epicenter: Point,
        speed_m_per_s: f64,
        t_a_s: f64,
        correlation: CorrelationModel,
    ) -> Result<Self> {
        let s = AlarmScenario {
            epicenter,
            speed_m_per_s,
            t_a_s,
            correlation,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.speed_m_per_s > 0.0) {
            return Err(Error::invalid("speed_m_per_s", "must be positive"));
        }
        if !self.t_a_s.is_finite() {
            return Err(Error::invalid("t_a_s", "must be finite"));
        }
        self.correlation.validate()
    }

    /// Same event shifted to a new start time.
    pub fn at(&self, t_a_s: f64) -> Self {
        AlarmScenario { t_a_s, ..*self }
    }

    pub fn distance(&self, position: &Point) -> f64 {
        self.epicenter.distance(position)
    }

    /// Instant the front reaches `position`.
    pub fn activation_time(&self, position: &Point) -> f64 {
        self.t_a_s + self.distance(position) / self.speed_m_per_s
    }

    pub fn trigger_probability(&self, position: &Point) -> f64 {
        self.correlation.psi(self.distance(position))
    }

    /// Discrete-time background sample for the step `[t, t + dt)`: the
    /// correlation factor in the single step holding the front's arrival, else 0.
    pub fn background(&self, position: &Point, t: f64, dt: f64) -> f64 {
        let hit = self.activation_time(position);
        if hit >= t && hit < t + dt {
            self.trigger_probability(position)
        } else {
            0.0
        }
    }
}

/// Background excitation of a station over `[t, t + dt)` from a set of
/// independently configured events. Overlapping pulses combine as independent
/// trigger chances.
pub fn background_sample(scenarios: &[AlarmScenario], position: &Point, t: f64, dt: f64) -> f64 {
    debug_assert!(dt > 0.0);
    let miss: f64 = scenarios
        .iter()
        .map(|s| 1.0 - s.background(position, t, dt))
        .product();
    1.0 - miss
}
