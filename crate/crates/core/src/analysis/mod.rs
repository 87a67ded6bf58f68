//! Closed-form performance model of the reservation pool.
//!
//! Under each hypothesis (regular reporting only, or an ongoing alarm) every
//! preallocated RS collides independently with probability `P_C`; the number
//! of collided RSs is therefore binomial over the pool, and the threshold test
//! `k_C >= delta_c` selects the resolution strategy. Costs are counted in RSs.

mod combinatorics;

pub use combinatorics::{binomial_pmf, binomial_upper_mass, no_singleton_arrangements, resolve_prob};

use serde::{Deserialize, Serialize};

use crate::traffic::{AlarmScenario, CellGeometry, RegularTrafficParams};
use crate::{Error, Result};
use combinatorics::all_resolved_prob;

/// Multiplicities whose truncated-binomial weight falls below this are dropped
/// from the resolution sums; each term is bounded by its weight.
const NEGLIGIBLE_WEIGHT: f64 = 1e-20;

/// Pool layout and resolution parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    /// Stations in the cell.
    pub n: usize,
    /// Stations sharing one preallocated RS.
    pub omega: usize,
    /// Collided-RS count at or above which the alarm regime is declared.
    pub delta_c: usize,
    /// First contention frame length, in RSs.
    pub l1: usize,
    /// Second contention frame length, in RSs.
    pub l2: usize,
    /// Pool period, seconds.
    pub t_r_s: f64,
    /// Duration of one RS, seconds.
    pub rs_duration_s: f64,
}

/// `ceil(pct / 100 * pool)`, at least 1.
pub fn delta_from_percent(pct: f64, pool_size: usize) -> usize {
    // tolerate binary noise such as 0.3 * 200 = 60.000000000000007
    let raw = pct / 100.0 * pool_size as f64;
    ((raw - 1e-9).ceil() as usize).max(1)
}

/// Frame lengths as fractions of `omega`, rounded to the nearest integer and at
/// least one slot each.
pub fn frames_from_fractions(omega: usize, l1_frac: f64, l2_frac: f64) -> (usize, usize) {
    let f = |x: f64| ((x * omega as f64).round() as usize).max(1);
    (f(l1_frac), f(l2_frac))
}

impl ProtocolParams {
    pub fn new(
        n: usize,
        omega: usize,
        delta_c: usize,
        l1: usize,
        l2: usize,
        t_r_s: f64,
        rs_duration_s: f64,
    ) -> Result<Self> {
        let p = ProtocolParams {
            n,
            omega,
            delta_c,
            l1,
            l2,
            t_r_s,
            rs_duration_s,
        };
        p.validate()?;
        Ok(p)
    }

    /// Threshold given as a percentage of the preallocated pool and frames at
    /// `0.6 omega` and `0.4 omega`.
    pub fn with_defaults(n: usize, omega: usize, delta_c_pct: f64, t_r_s: f64, rs_duration_s: f64) -> Result<Self> {
        if omega == 0 || n == 0 {
            return Err(Error::invalid("omega", "n and omega must be at least 1"));
        }
        let pool = n.div_ceil(omega);
        let (l1, l2) = frames_from_fractions(omega, 0.6, 0.4);
        Self::new(n, omega, delta_from_percent(delta_c_pct, pool), l1, l2, t_r_s, rs_duration_s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("n_stations", "must be at least 1"));
        }
        if self.omega == 0 || self.omega > self.n {
            return Err(Error::invalid("omega", format!("must lie in [1, {}]", self.n)));
        }
        let pool = self.pool_size();
        if self.delta_c == 0 || self.delta_c > pool {
            return Err(Error::invalid("delta_c", format!("must lie in [1, {pool}]")));
        }
        if self.omega > 1 {
            if self.l1 == 0 || self.l1 >= self.omega {
                return Err(Error::invalid("l1", format!("must lie in [1, {})", self.omega)));
            }
            if self.l2 == 0 || self.l2 > self.l1 {
                return Err(Error::invalid("l2", format!("must lie in [1, {}]", self.l1)));
            }
        }
        if !(self.t_r_s > 0.0) {
            return Err(Error::invalid("t_r_s", "must be positive"));
        }
        if !(self.rs_duration_s > 0.0) {
            return Err(Error::invalid("rs_duration_s", "must be positive"));
        }
        Ok(())
    }

    /// Preallocated pool size `ceil(n / omega)`.
    pub fn pool_size(&self) -> usize {
        self.n.div_ceil(self.omega)
    }

    /// Threshold as a percentage of the preallocated pool.
    pub fn delta_c_pct(&self) -> f64 {
        100.0 * self.delta_c as f64 / self.pool_size() as f64
    }

    /// Largest pool the adaptive scheme can allocate, in RSs.
    ///
    /// Below the threshold at most `delta_c - 1` groups escalate through both
    /// contention frames and the dedicated frame; at or above it every group can
    /// collide but each one costs only `omega`.
    pub fn max_pool_rs(&self) -> usize {
        let pool = self.pool_size();
        if self.omega == 1 {
            return pool;
        }
        let below = (self.delta_c - 1) * (self.l1 + self.l2 + self.omega);
        let above = pool * self.omega;
        pool + below.max(above)
    }

    /// Largest pool of the always-contention-free baseline, in RSs.
    pub fn max_pool_rs_naive(&self) -> usize {
        let pool = self.pool_size();
        if self.omega == 1 {
            pool
        } else {
            pool + pool * self.omega
        }
    }

    pub fn max_pool_duration_s(&self) -> f64 {
        self.max_pool_rs() as f64 * self.rs_duration_s
    }

    /// Checks `tau > T_R + max T_pool` and `max T_pool <= T_R`.
    pub fn check_deadline(&self, tau_a_s: f64) -> Result<()> {
        self.check_pool_bound(tau_a_s, self.max_pool_duration_s())
    }

    pub fn check_deadline_naive(&self, tau_a_s: f64) -> Result<()> {
        self.check_pool_bound(tau_a_s, self.max_pool_rs_naive() as f64 * self.rs_duration_s)
    }

    fn check_pool_bound(&self, tau_a_s: f64, max_pool_s: f64) -> Result<()> {
        if tau_a_s > self.t_r_s + max_pool_s && max_pool_s <= self.t_r_s {
            Ok(())
        } else {
            Err(Error::Infeasible {
                tau_a_s,
                t_r_s: self.t_r_s,
                max_pool_s,
            })
        }
    }
}

/// Per-pool probability that a station is active, under each hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivityProbs {
    pub p_a0: f64,
    pub p_a1: f64,
}

impl ActivityProbs {
    pub fn new(p_a0: f64, p_a1: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_a0) {
            return Err(Error::invalid("p_a0", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&p_a1) {
            return Err(Error::invalid("p_a1", "must lie in [0, 1]"));
        }
        Ok(ActivityProbs { p_a0, p_a1 })
    }
}

/// Probability of at least one regular report during a pool period.
pub fn activity_prob_regular(lambda_p: f64, lambda_d: f64, t_r_s: f64) -> f64 {
    -(-(lambda_p + lambda_d) * t_r_s).exp_m1()
}

/// Population-mean activity probability for the pool period
/// `[window_start, window_start + t_r)`.
///
/// A station whose front arrival falls inside the window enters the alarm
/// state with probability `psi` and then emits `Poisson(1)` alarm reports, so
/// it stays silent with probability `(1 - psi) e^{-lambda_0} + psi e^{-1}`.
/// Stations outside the window only carry regular traffic.
pub fn activity_prob_alarm_in_window(
    scenario: &AlarmScenario,
    geometry: &CellGeometry,
    regular: &RegularTrafficParams,
    window_start: f64,
    t_r_s: f64,
) -> f64 {
    let lambda0 = regular.total_rate() * t_r_s;
    let quiet_regular = (-lambda0).exp();
    let quiet_alarm = (-1.0f64).exp();
    let total: f64 = geometry
        .positions()
        .iter()
        .map(|p| {
            let psi = scenario.background(p, window_start, t_r_s);
            1.0 - ((1.0 - psi) * quiet_regular + psi * quiet_alarm)
        })
        .sum();
    total / geometry.n_stations() as f64
}

/// Alarm-hypothesis activity probability for the pool period holding the
/// event onset, assuming the whole front crosses the cell inside it.
pub fn activity_prob_alarm(
    scenario: &AlarmScenario,
    geometry: &CellGeometry,
    regular: &RegularTrafficParams,
    t_r_s: f64,
) -> f64 {
    let window_start = (scenario.t_a_s / t_r_s).floor() * t_r_s;
    activity_prob_alarm_in_window(scenario, geometry, regular, window_start, t_r_s)
}

/// Probability that at least two of the `omega` stations of a group are active.
pub fn collision_prob(p_a: f64, omega: usize) -> f64 {
    if omega < 2 || p_a <= 0.0 {
        return 0.0;
    }
    if p_a >= 1.0 {
        return 1.0;
    }
    let w = omega as f64;
    let ln_q = (-p_a).ln_1p();
    let not_idle = -(w * ln_q).exp_m1();
    let single = w * p_a * ((w - 1.0) * ln_q).exp();
    (not_idle - single).clamp(0.0, 1.0)
}

/// Distribution of the number of active stations in a collided group,
/// indexed by `m = 0..=omega` (zero below 2).
pub fn truncated_active_dist(omega: usize, p_a: f64) -> Result<Vec<f64>> {
    if omega < 2 {
        return Err(Error::invalid("omega", "a collision needs at least two stations"));
    }
    if !(p_a > 0.0 && p_a < 1.0) {
        return Err(Error::invalid("p_a", "must lie strictly inside (0, 1)"));
    }
    Ok(collided_multiplicity(omega, p_a))
}

/// As [`truncated_active_dist`] but with `p_a = 1` allowed (all stations active).
fn collided_multiplicity(omega: usize, p_a: f64) -> Vec<f64> {
    let mut pmf = binomial_pmf(omega as u64, p_a);
    pmf[0] = 0.0;
    pmf[1] = 0.0;
    let mass: f64 = pmf.iter().sum();
    pmf.iter_mut().for_each(|v| *v /= mass);
    pmf
}

/// Probabilities that a collided group is fully resolved in the first frame
/// (`r1`) or only after the second (`r2`).
pub fn resolution_probs(omega: usize, l1: usize, l2: usize, p_a: f64) -> Result<(f64, f64)> {
    if l1 == 0 || l2 == 0 {
        return Err(Error::invalid("l1", "frames need at least one slot"));
    }
    let weights = if p_a >= 1.0 && omega >= 2 {
        collided_multiplicity(omega, 1.0)
    } else {
        truncated_active_dist(omega, p_a)?
    };
    let (l1, l2) = (l1 as u64, l2 as u64);
    let mut r1 = 0.0;
    let mut r2 = 0.0;
    for (m, &w) in weights.iter().enumerate().skip(2) {
        if w < NEGLIGIBLE_WEIGHT {
            continue;
        }
        let m = m as u64;
        r1 += w * all_resolved_prob(m, l1);
        let mut second = 0.0;
        // h users left over from frame 1, all resolved in frame 2
        for h in 2..=m.min(l2) {
            let resolved_first = m - h;
            if resolved_first > l1 {
                continue;
            }
            second += all_resolved_prob(h, l2) * resolve_prob(resolved_first, m, l1)?;
        }
        r2 += w * second;
    }
    Ok((r1.clamp(0.0, 1.0), r2.clamp(0.0, 1.0 - r1.clamp(0.0, 1.0))))
}

/// Mean RSs spent resolving one collided group:
/// `L1 + L2 (1 - r1) + omega (1 - (r1 + r2))`.
pub fn expected_frame_cost(omega: usize, l1: usize, l2: usize, r1: f64, r2: f64) -> f64 {
    l1 as f64 + l2 as f64 * (1.0 - r1) + omega as f64 * (1.0 - (r1 + r2))
}

/// Decision probabilities `P(H_i | H_j)` of the threshold test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionProbs {
    pub p00: f64,
    pub p10: f64,
    pub p01: f64,
    pub p11: f64,
}

/// Mean collided-RS counts conditioned on each decision/hypothesis pair.
/// `None` marks a branch with zero probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionCounts {
    pub e_k_00: Option<f64>,
    pub e_k_10: Option<f64>,
    pub e_k_01: Option<f64>,
    pub e_k_11: Option<f64>,
}

fn split_at_threshold(pool_size: usize, delta_c: usize, p_c: f64) -> (f64, Option<f64>, f64, Option<f64>) {
    let pmf = binomial_pmf(pool_size as u64, p_c);
    let cut = delta_c.min(pool_size + 1);
    let moments = |range: &[f64], offset: usize| {
        let mass: f64 = range.iter().sum();
        let first: f64 = range.iter().enumerate().map(|(i, w)| (i + offset) as f64 * w).sum();
        (mass, (mass > 0.0).then(|| first / mass))
    };
    let (below, mean_below) = moments(&pmf[..cut], 0);
    let (above, mean_above) = moments(&pmf[cut..], cut);
    (below, mean_below, above, mean_above)
}

/// `P(k_C < delta_c | H_0)`, `P(k_C >= delta_c | H_0)` and the same under `H_1`,
/// with `k_C ~ Binomial(pool_size, P_C)`.
pub fn detection_probs(pool_size: usize, delta_c: usize, p_c_h0: f64, p_c_h1: f64) -> DecisionProbs {
    let (p00, _, p10, _) = split_at_threshold(pool_size, delta_c, p_c_h0);
    let (p01, _, p11, _) = split_at_threshold(pool_size, delta_c, p_c_h1);
    DecisionProbs { p00, p10, p01, p11 }
}

pub fn expected_collision_counts(pool_size: usize, delta_c: usize, p_c_h0: f64, p_c_h1: f64) -> CollisionCounts {
    let (_, e_k_00, _, e_k_10) = split_at_threshold(pool_size, delta_c, p_c_h0);
    let (_, e_k_01, _, e_k_11) = split_at_threshold(pool_size, delta_c, p_c_h1);
    CollisionCounts {
        e_k_00,
        e_k_10,
        e_k_01,
        e_k_11,
    }
}

/// Closed-form evaluation of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub n: usize,
    pub omega: usize,
    pub pool_size: usize,
    pub delta_c: usize,
    pub delta_c_pct: f64,
    pub l1: usize,
    pub l2: usize,
    pub p_a0: f64,
    pub p_a1: f64,
    pub p_c_h0: f64,
    pub p_c_h1: f64,
    /// Resolution probabilities and mean cost of one collided group, when a
    /// regular-regime collision is possible.
    pub r1: Option<f64>,
    pub r2: Option<f64>,
    pub e_s: Option<f64>,
    pub p_00: f64,
    pub p_10: f64,
    pub p_01: f64,
    pub p_11: f64,
    pub e_k_00: Option<f64>,
    pub e_k_10: Option<f64>,
    pub e_k_01: Option<f64>,
    pub e_k_11: Option<f64>,
    pub e_c_00: Option<f64>,
    pub e_c_10: Option<f64>,
    pub e_c_01: Option<f64>,
    pub e_c_11: Option<f64>,
    pub e_c: f64,
    pub p_h1: f64,
    /// `e_c * rs_duration`.
    pub e_pool_duration_s: f64,
}

/// Expected pool cost of the adaptive scheme for alarm prior `p_h1`.
pub fn expected_costs(params: &ProtocolParams, activity: &ActivityProbs, p_h1: f64) -> Result<AnalysisReport> {
    params.validate()?;
    if !(0.0..=1.0).contains(&p_h1) {
        return Err(Error::invalid("p_h1", "must lie in [0, 1]"));
    }
    let pool = params.pool_size();
    let omega = params.omega;
    let p_c_h0 = collision_prob(activity.p_a0, omega);
    let p_c_h1 = collision_prob(activity.p_a1, omega);

    let (r1, r2, e_s) = if p_c_h0 > 0.0 {
        let (r1, r2) = resolution_probs(omega, params.l1, params.l2, activity.p_a0)?;
        (Some(r1), Some(r2), Some(expected_frame_cost(omega, params.l1, params.l2, r1, r2)))
    } else {
        (None, None, None)
    };

    let d = detection_probs(pool, params.delta_c, p_c_h0, p_c_h1);
    let k = expected_collision_counts(pool, params.delta_c, p_c_h0, p_c_h1);
    let base = pool as f64;
    let escalated = (params.l1 + params.l2 + omega) as f64;
    // E[k] is zero whenever E[S] is undefined
    let e_c_00 = k.e_k_00.map(|k| base + k * e_s.unwrap_or(0.0));
    let e_c_10 = k.e_k_10.map(|k| base + k * omega as f64);
    let e_c_01 = k.e_k_01.map(|k| base + k * escalated);
    let e_c_11 = k.e_k_11.map(|k| base + k * omega as f64);

    let weighted = |c: Option<f64>, p: f64| c.map_or(0.0, |c| c * p);
    let e_c = (weighted(e_c_00, d.p00) + weighted(e_c_10, d.p10)) * (1.0 - p_h1)
        + (weighted(e_c_01, d.p01) + weighted(e_c_11, d.p11)) * p_h1;

    Ok(AnalysisReport {
        n: params.n,
        omega,
        pool_size: pool,
        delta_c: params.delta_c,
        delta_c_pct: params.delta_c_pct(),
        l1: params.l1,
        l2: params.l2,
        p_a0: activity.p_a0,
        p_a1: activity.p_a1,
        p_c_h0,
        p_c_h1,
        r1,
        r2,
        e_s,
        p_00: d.p00,
        p_10: d.p10,
        p_01: d.p01,
        p_11: d.p11,
        e_k_00: k.e_k_00,
        e_k_10: k.e_k_10,
        e_k_01: k.e_k_01,
        e_k_11: k.e_k_11,
        e_c_00,
        e_c_10,
        e_c_01,
        e_c_11,
        e_c,
        p_h1,
        e_pool_duration_s: e_c * params.rs_duration_s,
    })
}

/// Expected pool cost when every collided RS is expanded into `omega`
/// dedicated RSs regardless of the collision count.
pub fn naive_expected_cost(params: &ProtocolParams, activity: &ActivityProbs, p_h1: f64) -> Result<f64> {
    params.validate()?;
    let pool = params.pool_size() as f64;
    let per_group = |p_a: f64| pool + pool * collision_prob(p_a, params.omega) * params.omega as f64;
    Ok((1.0 - p_h1) * per_group(activity.p_a0) + p_h1 * per_group(activity.p_a1))
}
