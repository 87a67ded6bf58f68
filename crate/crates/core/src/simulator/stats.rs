use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::pool::{Decision, PoolOutcome};
use crate::analysis::binomial_pmf;
use crate::traffic::{Deadlines, ReportKind};
use crate::{Error, Result};

/// Ground truth of a pool: whether any station was excited by an alarm front
/// during the window the pool serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hypothesis {
    Regular,
    Alarm,
}

impl Hypothesis {
    fn index(self) -> usize {
        match self {
            Hypothesis::Regular => 0,
            Hypothesis::Alarm => 1,
        }
    }
}

fn kind_index(kind: ReportKind) -> usize {
    match kind {
        ReportKind::Periodic => 0,
        ReportKind::OnDemand => 1,
        ReportKind::Alarm => 2,
    }
}

/// Running mean and variance, mergeable across partial results.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let d = other.mean - self.mean;
        self.mean += d * other.count as f64 / n;
        self.m2 += other.m2 + d * d * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

/// Fixed-width histogram starting at zero that grows on demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(bin_width: f64) -> Self {
        Histogram {
            bin_width,
            counts: Vec::new(),
        }
    }

    pub fn push(&mut self, x: f64) {
        let i = (x.max(0.0) / self.bin_width) as usize;
        if i >= self.counts.len() {
            self.counts.resize(i + 1, 0);
        }
        self.counts[i] += 1;
    }

    pub fn merge(&mut self, other: &Histogram) {
        if other.counts.len() > self.counts.len() {
            self.counts.resize(other.counts.len(), 0);
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Result of a chi-square goodness-of-fit test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoodnessOfFit {
    pub statistic: f64,
    pub dof: usize,
    pub critical_value: f64,
    pub p_value: f64,
    pub significance: f64,
}

impl GoodnessOfFit {
    pub fn passes(&self) -> bool {
        self.statistic <= self.critical_value
    }
}

/// Counts of pools by number of collided preallocated RSs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KcHistogram {
    pub counts: Vec<u64>,
}

impl KcHistogram {
    pub fn push(&mut self, k_c: usize) {
        if k_c >= self.counts.len() {
            self.counts.resize(k_c + 1, 0);
        }
        self.counts[k_c] += 1;
    }

    pub fn merge(&mut self, other: &KcHistogram) {
        if other.counts.len() > self.counts.len() {
            self.counts.resize(other.counts.len(), 0);
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        let n = self.total();
        if n == 0 {
            return 0.0;
        }
        self.counts.iter().enumerate().map(|(k, &c)| k as f64 * c as f64).sum::<f64>() / n as f64
    }

    /// Pearson test against Binomial(`pool_size`, `p_c`). Adjacent values are
    /// pooled left to right until each class expects at least five pools.
    pub fn chi_square_vs_binomial(&self, pool_size: usize, p_c: f64, significance: f64) -> Result<GoodnessOfFit> {
        if self.counts.len() > pool_size + 1 && self.counts[pool_size + 1..].iter().any(|&c| c > 0) {
            return Err(Error::invalid("k_c", "observed count exceeds pool size"));
        }
        if !(0.0..=1.0).contains(&p_c) {
            return Err(Error::invalid("p_c", format!("{p_c} outside [0, 1]")));
        }
        let n = self.total();
        if n == 0 {
            return Err(Error::invalid("k_c", "empty histogram"));
        }
        let pmf = binomial_pmf(pool_size as u64, p_c);
        let observed = |k: usize| self.counts.get(k).copied().unwrap_or(0) as f64;

        let mut classes: Vec<(f64, f64)> = Vec::new();
        let (mut exp, mut obs) = (0.0, 0.0);
        for (k, &p) in pmf.iter().enumerate() {
            exp += p * n as f64;
            obs += observed(k);
            if exp >= 5.0 {
                classes.push((exp, obs));
                exp = 0.0;
                obs = 0.0;
            }
        }
        match classes.last_mut() {
            Some(last) => {
                last.0 += exp;
                last.1 += obs;
            }
            None => classes.push((exp, obs)),
        }
        let statistic: f64 = classes.iter().map(|(e, o)| (o - e) * (o - e) / e).sum();
        let dof = classes.len() - 1;
        let (critical_value, p_value) = if dof == 0 {
            (0.0, 1.0)
        } else {
            let chi = ChiSquared::new(dof as f64).expect("positive degrees of freedom");
            (chi.inverse_cdf(1.0 - significance), chi.sf(statistic))
        };
        Ok(GoodnessOfFit {
            statistic,
            dof,
            critical_value,
            p_value,
            significance,
        })
    }
}

/// Aggregate statistics over a sequence of pools.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioStats {
    pub n_stations: usize,
    pub t_r_s: f64,
    /// Interval used to normalize the per-station overhead.
    pub t_ri_s: f64,
    pub deadlines: Deadlines,
    pub pools_run: u64,
    pub total_rs: Moments,
    pub pool_duration_s: Moments,
    /// Indexed by hypothesis (regular, alarm).
    pub pools_by_hypothesis: [u64; 2],
    pub alarm_decisions_by_hypothesis: [u64; 2],
    /// Indexed by report kind (periodic, on-demand, alarm).
    pub delay_histograms: [Histogram; 3],
    pub max_delay_s: [f64; 3],
    pub dropped_by_kind: [u64; 3],
    pub unresolved: u64,
    pub kc_by_hypothesis: [KcHistogram; 2],
}

/// Flat view of [`ScenarioStats`] for reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsSummary {
    pub pools_run: u64,
    pub mean_rs_per_pool: f64,
    pub rs_per_pool_std_error: f64,
    pub mean_pool_duration_s: f64,
    pub pools_under_regular: u64,
    pub pools_under_alarm: u64,
    pub p_alarm_given_regular: Option<f64>,
    pub p_alarm_given_alarm: Option<f64>,
    pub resolved_periodic: u64,
    pub resolved_on_demand: u64,
    pub resolved_alarm: u64,
    pub max_delay_periodic_s: f64,
    pub max_delay_on_demand_s: f64,
    pub max_delay_alarm_s: f64,
    pub dropped_reports: u64,
    pub unresolved: u64,
    pub rs_per_station_per_ri: f64,
}

impl ScenarioStats {
    pub const DELAY_BIN_S: f64 = 1e-3;

    pub fn new(n_stations: usize, t_r_s: f64, t_ri_s: f64, deadlines: Deadlines) -> Self {
        ScenarioStats {
            n_stations,
            t_r_s,
            t_ri_s,
            deadlines,
            pools_run: 0,
            total_rs: Moments::default(),
            pool_duration_s: Moments::default(),
            pools_by_hypothesis: [0; 2],
            alarm_decisions_by_hypothesis: [0; 2],
            delay_histograms: std::array::from_fn(|_| Histogram::new(Self::DELAY_BIN_S)),
            max_delay_s: [0.0; 3],
            dropped_by_kind: [0; 3],
            unresolved: 0,
            kc_by_hypothesis: Default::default(),
        }
    }

    pub fn record(&mut self, pool: &PoolOutcome, hypothesis: Hypothesis) {
        self.pools_run += 1;
        self.total_rs.push(pool.total_rs as f64);
        self.pool_duration_s.push(pool.pool_duration_s);
        let h = hypothesis.index();
        self.pools_by_hypothesis[h] += 1;
        if pool.decision == Decision::Alarm {
            self.alarm_decisions_by_hypothesis[h] += 1;
        }
        self.kc_by_hypothesis[h].push(pool.k_c);
        self.unresolved += pool.active.saturating_sub(pool.resolved.len()) as u64;
        for r in &pool.resolved {
            let k = kind_index(r.report.kind);
            let delay = r.delay();
            self.delay_histograms[k].push(delay);
            self.max_delay_s[k] = self.max_delay_s[k].max(delay);
            if delay > self.deadlines.for_kind(r.report.kind) {
                self.dropped_by_kind[k] += 1;
            }
        }
    }

    pub fn merge(&mut self, other: &ScenarioStats) {
        self.pools_run += other.pools_run;
        self.total_rs.merge(&other.total_rs);
        self.pool_duration_s.merge(&other.pool_duration_s);
        for h in 0..2 {
            self.pools_by_hypothesis[h] += other.pools_by_hypothesis[h];
            self.alarm_decisions_by_hypothesis[h] += other.alarm_decisions_by_hypothesis[h];
            self.kc_by_hypothesis[h].merge(&other.kc_by_hypothesis[h]);
        }
        for k in 0..3 {
            self.delay_histograms[k].merge(&other.delay_histograms[k]);
            self.max_delay_s[k] = self.max_delay_s[k].max(other.max_delay_s[k]);
            self.dropped_by_kind[k] += other.dropped_by_kind[k];
        }
        self.unresolved += other.unresolved;
    }

    pub fn mean_rs_per_pool(&self) -> f64 {
        self.total_rs.mean
    }

    pub fn rs_std_error(&self) -> f64 {
        self.total_rs.std_error()
    }

    pub fn mean_pool_duration_s(&self) -> f64 {
        self.pool_duration_s.mean
    }

    /// Empirical P(decision = Alarm | hypothesis); `None` without such pools.
    pub fn p_alarm_given(&self, hypothesis: Hypothesis) -> Option<f64> {
        let h = hypothesis.index();
        let n = self.pools_by_hypothesis[h];
        (n > 0).then(|| self.alarm_decisions_by_hypothesis[h] as f64 / n as f64)
    }

    pub fn resolved(&self, kind: ReportKind) -> u64 {
        self.delay_histograms[kind_index(kind)].total()
    }

    pub fn max_delay_s(&self, kind: ReportKind) -> f64 {
        self.max_delay_s[kind_index(kind)]
    }

    pub fn dropped(&self, kind: ReportKind) -> u64 {
        self.dropped_by_kind[kind_index(kind)]
    }

    pub fn dropped_reports(&self) -> u64 {
        self.dropped_by_kind.iter().sum()
    }

    /// Mean RSs spent per station over one reporting interval.
    pub fn rs_per_station_per_ri(&self) -> f64 {
        self.mean_rs_per_pool() * (self.t_ri_s / self.t_r_s) / self.n_stations as f64
    }

    pub fn summary(&self) -> StatsSummary {
        StatsSummary {
            pools_run: self.pools_run,
            mean_rs_per_pool: self.mean_rs_per_pool(),
            rs_per_pool_std_error: self.rs_std_error(),
            mean_pool_duration_s: self.mean_pool_duration_s(),
            pools_under_regular: self.pools_by_hypothesis[0],
            pools_under_alarm: self.pools_by_hypothesis[1],
            p_alarm_given_regular: self.p_alarm_given(Hypothesis::Regular),
            p_alarm_given_alarm: self.p_alarm_given(Hypothesis::Alarm),
            resolved_periodic: self.resolved(ReportKind::Periodic),
            resolved_on_demand: self.resolved(ReportKind::OnDemand),
            resolved_alarm: self.resolved(ReportKind::Alarm),
            max_delay_periodic_s: self.max_delay_s(ReportKind::Periodic),
            max_delay_on_demand_s: self.max_delay_s(ReportKind::OnDemand),
            max_delay_alarm_s: self.max_delay_s(ReportKind::Alarm),
            dropped_reports: self.dropped_reports(),
            unresolved: self.unresolved,
            rs_per_station_per_ri: self.rs_per_station_per_ri(),
        }
    }

    /// Writes the identification-delay histograms, one column per report kind.
    pub fn write_delay_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "bin_start_s,periodic,on_demand,alarm")?;
        let bins = self.delay_histograms.iter().map(|h| h.counts.len()).max().unwrap_or(0);
        for i in 0..bins {
            let c = |k: usize| self.delay_histograms[k].counts.get(i).copied().unwrap_or(0);
            writeln!(w, "{:.3},{},{},{}", i as f64 * Self::DELAY_BIN_S, c(0), c(1), c(2))?;
        }
        Ok(())
    }
}

/// Distribution of `k_c` over the pools recorded under `hypothesis`.
pub fn empirical_kc_distribution(stats: &ScenarioStats, hypothesis: Hypothesis) -> &KcHistogram {
    &stats.kc_by_hypothesis[hypothesis.index()]
}
