//! Station placement and report-arrival generation.
//!
//! Regular reporting (periodic plus on-demand) is Poisson per station. Alarm
//! reporting follows a coupled Markov-modulated Poisson process whose
//! background excitation is a wavefront expanding from an epicenter at a fixed
//! speed; a station is hit by the front once, at distance over speed after the
//! event, and is triggered with a distance-dependent probability.

mod activation;
mod alarm;
mod station;

pub use activation::{activation_curve, beta_pdf, fit_beta, ActivationCurve, BetaFit};
pub use alarm::{background_sample, spatial_correlation, AlarmScenario, CorrelationModel};
pub use station::{
    stationary_distribution, transition_matrix, Report, ReportKind, ReportingState,
    StationModel, StationState, StepOutcome,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{substream, GEOMETRY_STREAM};
use crate::{Error, Result};

/// A point in the cell plane, in meters. The access point sits at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

/// Circular cell of fixed stations around the access point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellGeometry {
    radius_m: f64,
    positions: Vec<Point>,
}

impl CellGeometry {
    pub fn new(radius_m: f64, positions: Vec<Point>) -> Result<Self> {
        if !(radius_m > 0.0) {
            return Err(Error::invalid("radius_m", "must be positive"));
        }
        if positions.is_empty() {
            return Err(Error::invalid("n_stations", "must be at least 1"));
        }
        // small slack for points produced by polar sampling at the rim
        if let Some(p) = positions.iter().find(|p| p.norm() > radius_m * (1.0 + 1e-12)) {
            return Err(Error::invalid(
                "positions",
                format!("({}, {}) lies outside the cell", p.x, p.y),
            ));
        }
        Ok(CellGeometry {
            radius_m,
            positions,
        })
    }

    pub fn radius_m(&self) -> f64 {
        self.radius_m
    }

    pub fn n_stations(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }
}

/// Places `n` stations independently and uniformly over the disk of radius `r`.
pub fn place_stations(n: usize, r: f64, seed: u64) -> Result<CellGeometry> {
    if n == 0 {
        return Err(Error::invalid("n_stations", "must be at least 1"));
    }
    if !(r > 0.0) {
        return Err(Error::invalid("radius_m", "must be positive"));
    }
    let mut rng = substream(seed, GEOMETRY_STREAM);
    let positions = (0..n)
        .map(|_| {
            let d = r * rng.random::<f64>().sqrt();
            let phi = std::f64::consts::TAU * rng.random::<f64>();
            Point::new(d * phi.cos(), d * phi.sin())
        })
        .collect();
    CellGeometry::new(r, positions)
}

/// Per-station regular reporting rates, in reports per second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularTrafficParams {
    pub lambda_p: f64,
    pub lambda_d: f64,
}

impl RegularTrafficParams {
    pub fn new(lambda_p: f64, lambda_d: f64) -> Result<Self> {
        if !(lambda_p > 0.0) || !lambda_p.is_finite() {
            return Err(Error::invalid("lambda_p", "must be positive"));
        }
        if !(lambda_d >= 0.0) || !lambda_d.is_finite() {
            return Err(Error::invalid("lambda_d", "must be non-negative"));
        }
        Ok(RegularTrafficParams { lambda_p, lambda_d })
    }

    /// Periodic reporting with interval `t_ri_s` plus on-demand reports at `lambda_d`.
    pub fn from_interval(t_ri_s: f64, lambda_d: f64) -> Result<Self> {
        if !(t_ri_s > 0.0) {
            return Err(Error::invalid("t_ri_s", "must be positive"));
        }
        Self::new(1.0 / t_ri_s, lambda_d)
    }

    /// Reporting interval T_RI = 1 / lambda_p.
    pub fn t_ri(&self) -> f64 {
        1.0 / self.lambda_p
    }

    pub fn total_rate(&self) -> f64 {
        self.lambda_p + self.lambda_d
    }
}

/// Maximum delays per report kind, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deadlines {
    pub tau_a: f64,
    pub tau_d: f64,
    pub tau_p: f64,
}

impl Deadlines {
    pub fn new(tau_a: f64, tau_d: f64, tau_p: f64) -> Result<Self> {
        if !(tau_a > 0.0) {
            return Err(Error::invalid("tau_a_s", "must be positive"));
        }
        if !(tau_a < tau_d) {
            return Err(Error::invalid("tau_d_s", "alarm deadline must be below on-demand deadline"));
        }
        if !(tau_d <= tau_p) {
            return Err(Error::invalid("tau_p_s", "on-demand deadline must not exceed periodic deadline"));
        }
        Ok(Deadlines { tau_a, tau_d, tau_p })
    }

    /// Periodic deadline equal to the reporting interval.
    pub fn for_regular(tau_a: f64, tau_d: f64, regular: &RegularTrafficParams) -> Result<Self> {
        Self::new(tau_a, tau_d, regular.t_ri())
    }

    pub fn for_kind(&self, kind: ReportKind) -> f64 {
        match kind {
            ReportKind::Periodic => self.tau_p,
            ReportKind::OnDemand => self.tau_d,
            ReportKind::Alarm => self.tau_a,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_station_is_inside() {
        for seed in 0..20 {
            let g = place_stations(1, 10.0, seed).unwrap();
            assert_eq!(g.n_stations(), 1);
            assert!(g.positions()[0].norm() <= 10.0);
        }
    }

    #[test]
    fn mean_distance_is_two_thirds_radius() {
        let g = place_stations(8000, 1000.0, 11).unwrap();
        let mean = g.positions().iter().map(Point::norm).sum::<f64>() / 8000.0;
        assert!((mean - 2000.0 / 3.0).abs() < 0.01 * 2000.0 / 3.0, "mean {mean}");
    }

    #[test]
    fn thousand_stations_in_small_cell() {
        let g = place_stations(1000, 10.0, 3).unwrap();
        assert_eq!(g.n_stations(), 1000);
        assert!(g.positions().iter().all(|p| p.norm() <= 10.0));
    }

    #[test]
    fn placement_is_deterministic() {
        assert_eq!(place_stations(50, 5.0, 9).unwrap(), place_stations(50, 5.0, 9).unwrap());
        assert_ne!(place_stations(50, 5.0, 9).unwrap(), place_stations(50, 5.0, 10).unwrap());
    }

    #[test]
    fn rejects_bad_placement_inputs() {
        assert!(place_stations(0, 10.0, 0).is_err());
        assert!(place_stations(5, 0.0, 0).is_err());
        assert!(place_stations(5, -1.0, 0).is_err());
    }

    #[test]
    fn regular_rates() {
        let r = RegularTrafficParams::from_interval(300.0, 1.0 / 1500.0).unwrap();
        assert!((r.lambda_p - 1.0 / 300.0).abs() < 1e-15);
        assert!((r.t_ri() - 300.0).abs() < 1e-9);
        assert!(RegularTrafficParams::new(0.0, 0.0).is_err());
        assert!(RegularTrafficParams::new(1.0, -0.1).is_err());
    }

    #[test]
    fn deadline_ordering() {
        assert!(Deadlines::new(5.0, 60.0, 300.0).is_ok());
        assert!(Deadlines::new(5.0, 300.0, 300.0).is_ok());
        assert!(Deadlines::new(60.0, 5.0, 300.0).is_err());
        assert!(Deadlines::new(5.0, 400.0, 300.0).is_err());
        let r = RegularTrafficParams::from_interval(300.0, 0.0).unwrap();
        let d = Deadlines::for_regular(5.0, 60.0, &r).unwrap();
        assert_eq!(d.for_kind(ReportKind::Periodic), 300.0);
        assert_eq!(d.for_kind(ReportKind::Alarm), 5.0);
    }
}
