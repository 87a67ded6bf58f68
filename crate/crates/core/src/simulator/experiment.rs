use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pool::{AccessMode, Pool};
use super::stats::{Hypothesis, ScenarioStats};
use crate::analysis::ProtocolParams;
use crate::rng::substream;
use crate::traffic::{AlarmScenario, CellGeometry, Deadlines, RegularTrafficParams, StationModel, StationState};
use crate::{Error, Result};

/// Which hypothesis each replication runs under.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HypothesisMix {
    Regular,
    Alarm,
    /// Alarm with the given probability, drawn per replication.
    Prior(f64),
}

/// Independent single-pool replications from an idle cell.
///
/// Each replication steps every station once over `[0, T_R)` and runs the
/// pool at `T_R`. Under the alarm hypothesis the event time is drawn so the
/// whole front sweeps the cell inside that window.
#[derive(Debug, Clone)]
pub struct PoolExperiment {
    pub geometry: CellGeometry,
    pub regular: RegularTrafficParams,
    pub deadlines: Deadlines,
    pub params: ProtocolParams,
    pub mode: AccessMode,
    pub alarm: Option<AlarmScenario>,
    pub mix: HypothesisMix,
}

const CHUNK: u64 = 64;

impl PoolExperiment {
    /// Replication `r` uses substream `r` of `seed`. Partial results are merged
    /// in replication order, so the outcome does not depend on thread count.
    pub fn run(&self, replications: u64, seed: u64) -> Result<ScenarioStats> {
        if replications == 0 {
            return Err(Error::invalid("replications", "must be at least 1"));
        }
        let needs_alarm = match self.mix {
            HypothesisMix::Regular => false,
            HypothesisMix::Alarm => true,
            HypothesisMix::Prior(p) => {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::invalid("p_h1", format!("{p} outside [0, 1]")));
                }
                p > 0.0
            }
        };
        if needs_alarm && self.alarm.is_none() {
            return Err(Error::invalid("alarm", "alarm hypothesis requires an alarm scenario"));
        }
        if self.geometry.n_stations() != self.params.n {
            return Err(Error::invalid("n", "geometry and protocol disagree on station count"));
        }
        let pool = Pool::new(self.params, self.mode, self.deadlines.tau_a)?;
        let model = StationModel::new(&self.regular, self.params.t_r_s)?;
        let sweep = self.alarm.as_ref().map(|a| {
            self.geometry
                .positions()
                .iter()
                .map(|p| a.distance(p) / a.speed_m_per_s)
                .fold(0.0, f64::max)
        });

        let chunks = replications.div_ceil(CHUNK);
        let partials: Vec<Result<ScenarioStats>> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut stats = self.empty_stats();
                for r in c * CHUNK..((c + 1) * CHUNK).min(replications) {
                    self.replicate(&pool, &model, sweep, seed, r, &mut stats)?;
                }
                Ok(stats)
            })
            .collect();
        let mut total = self.empty_stats();
        for p in partials {
            total.merge(&p?);
        }
        Ok(total)
    }

    fn empty_stats(&self) -> ScenarioStats {
        ScenarioStats::new(self.params.n, self.params.t_r_s, self.regular.t_ri(), self.deadlines)
    }

    fn replicate(
        &self,
        pool: &Pool,
        model: &StationModel,
        sweep_s: Option<f64>,
        seed: u64,
        r: u64,
        stats: &mut ScenarioStats,
    ) -> Result<()> {
        let mut rng = substream(seed, r);
        let hypothesis = match self.mix {
            HypothesisMix::Regular => Hypothesis::Regular,
            HypothesisMix::Alarm => Hypothesis::Alarm,
            HypothesisMix::Prior(p) if rng.random::<f64>() < p => Hypothesis::Alarm,
            HypothesisMix::Prior(_) => Hypothesis::Regular,
        };
        let t_r = self.params.t_r_s;
        let alarm = match (hypothesis, &self.alarm, sweep_s) {
            (Hypothesis::Alarm, Some(a), Some(sweep)) => Some(a.at((t_r - sweep).max(0.0) * rng.random::<f64>())),
            _ => None,
        };
        let mut stations: Vec<StationState> = (0..self.params.n).map(StationState::new).collect();
        for (st, pos) in stations.iter_mut().zip(self.geometry.positions()) {
            let (theta, pulse) = match &alarm {
                Some(a) => {
                    let theta = a.background(pos, 0.0, t_r);
                    (theta, (theta > 0.0).then(|| a.activation_time(pos)))
                }
                None => (0.0, None),
            };
            model.step(st, 0.0, theta, pulse, &mut rng)?;
        }
        let outcome = pool.run(&mut stations, t_r, &mut rng);
        stats.record(&outcome, hypothesis);
        Ok(())
    }
}
