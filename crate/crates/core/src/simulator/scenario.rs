use std::io::Write;

use serde::{Deserialize, Serialize};

use super::pool::{AccessMode, Decision, FrameKind, Pool, PoolOutcome};
use super::stats::{Hypothesis, ScenarioStats};
use crate::analysis::ProtocolParams;
use crate::rng::{substream, CONTENTION_STREAM};
use crate::traffic::{AlarmScenario, CellGeometry, Deadlines, RegularTrafficParams, StationModel, StationState};
use crate::{Error, Result};

/// Everything a time-driven scenario run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub geometry: CellGeometry,
    pub regular: RegularTrafficParams,
    pub deadlines: Deadlines,
    pub params: ProtocolParams,
    pub alarms: Vec<AlarmScenario>,
    pub horizon_s: f64,
    pub mode: AccessMode,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.geometry.n_stations() != self.params.n {
            return Err(Error::invalid(
                "n",
                format!("{} stations placed but {} configured", self.geometry.n_stations(), self.params.n),
            ));
        }
        if !(self.horizon_s >= self.params.t_r_s) {
            return Err(Error::invalid("horizon_s", "must cover at least one reporting period"));
        }
        self.alarms.iter().try_for_each(AlarmScenario::validate)
    }
}

/// One line of the per-pool trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolSummary {
    pub index: u64,
    pub start_s: f64,
    pub hypothesis: Hypothesis,
    pub active: usize,
    pub k_c: usize,
    pub decision: Decision,
    pub collided_groups: Vec<usize>,
    pub frames: Vec<(usize, FrameKind, usize)>,
    pub total_rs: usize,
    pub pool_duration_s: f64,
    pub resolved: usize,
    pub max_delay_s: f64,
}

impl PoolSummary {
    pub fn new(index: u64, hypothesis: Hypothesis, pool: &PoolOutcome) -> Self {
        PoolSummary {
            index,
            start_s: pool.start_s,
            hypothesis,
            active: pool.active,
            k_c: pool.k_c,
            decision: pool.decision,
            collided_groups: pool
                .preallocated
                .iter()
                .enumerate()
                .filter(|(_, o)| o.is_collision())
                .map(|(g, _)| g)
                .collect(),
            frames: pool.common_pool.iter().map(|f| (f.group, f.kind, f.len())).collect(),
            total_rs: pool.total_rs,
            pool_duration_s: pool.pool_duration_s,
            resolved: pool.resolved.len(),
            max_delay_s: pool.resolved.iter().map(|r| r.delay()).fold(0.0, f64::max),
        }
    }
}

/// Runs pools at `T_R, 2 T_R, ...` up to the horizon. Before each pool every
/// station is stepped once over the preceding window, so reports arriving
/// while a pool is in progress wait for the next one.
///
/// Station `i` draws from substream `i` of `seed`; the access point's frame
/// draws use a dedicated stream. When `trace` is given, one JSON object per
/// pool is written to it.
pub fn run_scenario(cfg: &ScenarioConfig, seed: u64, mut trace: Option<&mut dyn Write>) -> Result<ScenarioStats> {
    cfg.validate()?;
    let pool = Pool::new(cfg.params, cfg.mode, cfg.deadlines.tau_a)?;
    let t_r = cfg.params.t_r_s;
    let model = StationModel::new(&cfg.regular, t_r)?;
    let positions = cfg.geometry.positions();
    let mut stations: Vec<StationState> = (0..positions.len()).map(StationState::new).collect();
    let mut rngs: Vec<_> = (0..positions.len()).map(|i| substream(seed, i as u64)).collect();
    let mut ap_rng = substream(seed, CONTENTION_STREAM);
    let mut stats = ScenarioStats::new(positions.len(), t_r, cfg.regular.t_ri(), cfg.deadlines);

    let pools = (cfg.horizon_s / t_r + 1e-9).floor() as u64;
    for k in 0..pools {
        let start = k as f64 * t_r;
        let mut excited = false;
        for (i, st) in stations.iter_mut().enumerate() {
            let pos = &positions[i];
            let theta = crate::traffic::background_sample(&cfg.alarms, pos, start, t_r);
            let pulse = if theta > 0.0 {
                excited = true;
                cfg.alarms
                    .iter()
                    .filter(|a| a.background(pos, start, t_r) > 0.0)
                    .map(|a| a.activation_time(pos))
                    .reduce(f64::min)
            } else {
                None
            };
            model.step(st, start, theta, pulse, &mut rngs[i])?;
        }
        let hypothesis = if excited {
            Hypothesis::Alarm
        } else {
            Hypothesis::Regular
        };
        let outcome = pool.run(&mut stations, start + t_r, &mut ap_rng);
        stats.record(&outcome, hypothesis);
        if let Some(w) = trace.as_deref_mut() {
            let line = serde_json::to_string(&PoolSummary::new(k, hypothesis, &outcome))
                .map_err(|e| Error::Config(e.to_string()))?;
            writeln!(w, "{line}").map_err(|e| Error::Config(format!("trace: {e}")))?;
        }
    }
    Ok(stats)
}
