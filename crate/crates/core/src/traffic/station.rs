use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::RegularTrafficParams;
use crate::{Error, Result};

/// Expected alarm reports emitted per step while in the alarm state.
const ALARM_RATE_PER_STEP: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportingState {
    Regular = 0,
    Alarm = 1,
}

/// Report kinds in increasing urgency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    Periodic,
    OnDemand,
    Alarm,
}

impl ReportKind {
    pub const ALL: [ReportKind; 3] = [ReportKind::Periodic, ReportKind::OnDemand, ReportKind::Alarm];

    pub fn as_str(&self) -> &'static str {
        match self {
            ReportKind::Periodic => "periodic",
            ReportKind::OnDemand => "on_demand",
            ReportKind::Alarm => "alarm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub kind: ReportKind,
    pub generated_at: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationState {
    pub station_id: usize,
    pub reporting_state: ReportingState,
    /// At most one report waits for the next pool; later arrivals are merged
    /// into it.
    pub pending: Option<Report>,
}

impl StationState {
    pub fn new(station_id: usize) -> Self {
        StationState {
            station_id,
            reporting_state: ReportingState::Regular,
            pending: None,
        }
    }

    pub fn is_active(&self) -> bool {
        self.pending.is_some()
    }

    /// Admits `report`, or merges it into the pending one (earliest generation
    /// time, most urgent kind). Returns whether it was admitted as new.
    fn admit(&mut self, report: Report) -> bool {
        match &mut self.pending {
            None => {
                self.pending = Some(report);
                true
            }
            Some(p) => {
                p.kind = p.kind.max(report.kind);
                p.generated_at = p.generated_at.min(report.generated_at);
                false
            }
        }
    }
}

/// `(1 - theta) P0 + theta P1`, with `P0 = [[1,0],[1,0]]` and `P1 = [[0,1],[1,0]]`.
pub fn transition_matrix(theta: f64) -> [[f64; 2]; 2] {
    [[1.0 - theta, theta], [1.0, 0.0]]
}

/// Solution of `pi = pi P` for a constant background sample.
pub fn stationary_distribution(theta: f64) -> [f64; 2] {
    [1.0 / (1.0 + theta), theta / (1.0 + theta)]
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepOutcome {
    /// Raw Poisson arrival count before the single-report cap.
    pub emitted: u64,
    /// A new report entered the pending slot.
    pub admitted: bool,
}

/// Per-station coupled Markov-modulated Poisson source advanced in steps of
/// `dt` seconds.
///
/// A step first draws the state occupied during the step from the mixed
/// transition matrix, then emits from that state: `Poisson(lambda_0)` regular
/// reports in the regular state, `Poisson(1)` alarm reports in the alarm
/// state. The alarm state always falls back to regular on the next step.
#[derive(Debug, Clone)]
pub struct StationModel {
    dt: f64,
    lambda0: f64,
    periodic_share: f64,
    regular: Option<Poisson<f64>>,
    alarm: Poisson<f64>,
}

impl StationModel {
    pub fn new(traffic: &RegularTrafficParams, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::invalid("dt", "must be positive"));
        }
        let lambda0 = traffic.total_rate() * dt;
        let regular = if lambda0 > 0.0 {
            Some(Poisson::new(lambda0).map_err(|e| Error::invalid("lambda0", e.to_string()))?)
        } else {
            None
        };
        Ok(StationModel {
            dt,
            lambda0,
            periodic_share: traffic.lambda_p / traffic.total_rate(),
            regular,
            alarm: Poisson::new(ALARM_RATE_PER_STEP).expect("valid rate"),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Regular arrival rate per step, `(lambda_p + lambda_d) dt`.
    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    /// Advances `state` over `[window_start, window_start + dt)`.
    ///
    /// `pulse_time` is the front's arrival instant when `theta > 0`; alarm
    /// reports are stamped with it.
    pub fn step<R: Rng + ?Sized>(
        &self,
        state: &mut StationState,
        window_start: f64,
        theta: f64,
        pulse_time: Option<f64>,
        rng: &mut R,
    ) -> Result<StepOutcome> {
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::invalid("theta", format!("{theta} outside [0, 1]")));
        }
        let next = match state.reporting_state {
            ReportingState::Regular if theta > 0.0 && rng.random::<f64>() < theta => {
                ReportingState::Alarm
            }
            _ => ReportingState::Regular,
        };
        state.reporting_state = next;

        let mut out = StepOutcome::default();
        match next {
            ReportingState::Regular => {
                let Some(dist) = &self.regular else {
                    return Ok(out);
                };
                let count = dist.sample(rng) as u64;
                out.emitted = count;
                for _ in 0..count {
                    let kind = if rng.random::<f64>() < self.periodic_share {
                        ReportKind::Periodic
                    } else {
                        ReportKind::OnDemand
                    };
                    let generated_at = window_start + self.dt * rng.random::<f64>();
                    out.admitted |= state.admit(Report { kind, generated_at });
                }
            }
            ReportingState::Alarm => {
                let count = self.alarm.sample(rng) as u64;
                out.emitted = count;
                if count > 0 {
                    let generated_at = pulse_time
                        .unwrap_or(window_start)
                        .clamp(window_start, window_start + self.dt);
                    out.admitted = state.admit(Report {
                        kind: ReportKind::Alarm,
                        generated_at,
                    });
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use proptest::prelude::*;
    use rand::Rng;

    fn model() -> StationModel {
        let t = RegularTrafficParams::new(1.0 / 300.0, 1.0 / 1500.0).unwrap();
        StationModel::new(&t, 2.5).unwrap()
    }

    #[test]
    fn lambda0_scales_with_step() {
        assert!((model().lambda0() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn zero_theta_keeps_regular_state() {
        let m = model();
        let mut rng = substream(1, 0);
        let mut s = StationState::new(0);
        for k in 0..1000 {
            m.step(&mut s, k as f64, 0.0, None, &mut rng).unwrap();
            assert_eq!(s.reporting_state, ReportingState::Regular);
        }
    }

    #[test]
    fn unit_theta_moves_to_alarm_state() {
        let m = model();
        let mut rng = substream(2, 0);
        for _ in 0..200 {
            let mut s = StationState::new(0);
            m.step(&mut s, 0.0, 1.0, Some(0.1), &mut rng).unwrap();
            assert_eq!(s.reporting_state, ReportingState::Alarm);
        }
    }

    #[test]
    fn alarm_state_reports_once_and_returns() {
        let m = model();
        let mut rng = substream(3, 0);
        let trials = 20_000;
        let mut admitted = 0;
        for _ in 0..trials {
            let mut s = StationState::new(0);
            let o = m.step(&mut s, 0.0, 1.0, Some(0.7), &mut rng).unwrap();
            assert!(s.pending.iter().all(|r| r.kind == ReportKind::Alarm && r.generated_at == 0.7));
            admitted += o.admitted as u32;
            let theta = rng.random::<f64>();
            m.step(&mut s, 2.5, theta, None, &mut rng).unwrap();
            assert_eq!(s.reporting_state, ReportingState::Regular);
        }
        // admitted at least one of Poisson(1): 1 - e^-1
        let p = 1.0 - (-1.0f64).exp();
        let f = admitted as f64 / trials as f64;
        let sigma = (p * (1.0 - p) / trials as f64).sqrt();
        assert!((f - p).abs() < 4.0 * sigma, "{f} vs {p}");
    }

    #[test]
    fn rejects_theta_outside_unit_interval() {
        let m = model();
        let mut rng = substream(4, 0);
        let mut s = StationState::new(0);
        assert!(m.step(&mut s, 0.0, 1.5, None, &mut rng).is_err());
        assert!(m.step(&mut s, 0.0, -0.1, None, &mut rng).is_err());
    }

    #[test]
    fn at_most_one_pending_report() {
        let t = RegularTrafficParams::new(2.0, 1.0).unwrap();
        let m = StationModel::new(&t, 1.0).unwrap();
        let mut rng = substream(5, 0);
        let mut s = StationState::new(0);
        let mut emitted = 0;
        let mut admitted = 0;
        for k in 0..50 {
            let o = m.step(&mut s, k as f64 * 0.01, 0.0, None, &mut rng).unwrap();
            emitted += o.emitted;
            admitted += o.admitted as u32;
        }
        assert!(emitted > 1);
        assert_eq!(admitted, 1);
        // the merged report keeps the earliest time and the most urgent kind seen
        assert!(s.pending.unwrap().generated_at < 1.0);
    }

    #[test]
    fn state_occupancy_matches_balance_equation() {
        let m = model();
        let mut rng = substream(6, 0);
        for theta in [0.05, 0.3, 0.8] {
            let steps = 200_000;
            let mut s = StationState::new(0);
            let mut in_alarm = 0u64;
            for k in 0..steps {
                m.step(&mut s, k as f64, theta, None, &mut rng).unwrap();
                s.pending = None;
                in_alarm += (s.reporting_state == ReportingState::Alarm) as u64;
            }
            let pi = stationary_distribution(theta);
            let f = in_alarm as f64 / steps as f64;
            assert!((f - pi[1]).abs() < 0.01, "theta {theta}: {f} vs {}", pi[1]);
            assert!((pi[0] + pi[1] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn aggregated_count_matches_poisson_sum() {
        // T_I = M dt with a constant background; start from the stationary law.
        let m = model();
        let theta = 0.02;
        let steps = 20;
        let pi = stationary_distribution(theta);
        let lambda = steps as f64 * (m.lambda0() * pi[0] + ALARM_RATE_PER_STEP * pi[1]);
        let reps = 10_000;
        let mut rng = substream(7, 0);
        let mut total = 0u64;
        let mut sq = 0.0;
        for _ in 0..reps {
            let mut s = StationState::new(0);
            if rng.random::<f64>() < pi[1] {
                s.reporting_state = ReportingState::Alarm;
            }
            let mut c = 0;
            for k in 0..steps {
                c += m.step(&mut s, k as f64, theta, None, &mut rng).unwrap().emitted;
            }
            total += c;
            sq += (c * c) as f64;
        }
        let mean = total as f64 / reps as f64;
        let var = sq / reps as f64 - mean * mean;
        let se = (var / reps as f64).sqrt();
        assert!((mean - lambda).abs() < 3.0 * se, "{mean} vs {lambda} (se {se})");
    }

    proptest! {
        #[test]
        fn mixed_matrix_is_row_stochastic(theta in 0.0f64..=1.0) {
            let p = transition_matrix(theta);
            for row in p {
                prop_assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
                prop_assert!((row[0] + row[1] - 1.0).abs() < 1e-15);
            }
        }
    }
}
