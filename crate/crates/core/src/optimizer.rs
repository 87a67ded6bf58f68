//! Grid search over slot degree, threshold and contention-frame lengths.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    activity_prob_alarm, activity_prob_regular, delta_from_percent, expected_costs, frames_from_fractions,
    naive_expected_cost, ActivityProbs, ProtocolParams,
};
use crate::rng::derive_seed;
use crate::simulator::{AccessMode, HypothesisMix, PoolExperiment};
use crate::traffic::{AlarmScenario, CellGeometry, Deadlines, RegularTrafficParams};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "frames")]
pub enum FrameChoice {
    /// `L1 = round(l1_frac * omega)`, `L2 = round(l2_frac * omega)`.
    Fractions { l1_frac: f64, l2_frac: f64 },
    /// Best analytical cost over fractions in steps of 0.1 with `L1 >= L2`.
    Search,
}

impl Default for FrameChoice {
    fn default() -> Self {
        FrameChoice::Fractions {
            l1_frac: 0.6,
            l2_frac: 0.4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "evaluation")]
pub enum Evaluation {
    Analytical,
    /// Analytical plus the mean over this many simulated pools.
    Simulated { replications: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub omega_values: Vec<usize>,
    pub delta_c_pct_values: Vec<f64>,
    pub frames: FrameChoice,
    pub evaluation: Evaluation,
}

impl SweepGrid {
    /// Slot degrees from 1 to 200 against thresholds of 10% to 90%.
    pub fn default_grid() -> Self {
        SweepGrid {
            omega_values: vec![1, 2, 4, 5, 8, 10, 16, 20, 25, 32, 40, 50, 64, 80, 100, 125, 160, 200],
            delta_c_pct_values: (1..=9).map(|i| i as f64 * 10.0).collect(),
            frames: FrameChoice::default(),
            evaluation: Evaluation::Analytical,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.omega_values.is_empty() || self.omega_values.contains(&0) {
            return Err(Error::invalid("omega_values", "need at least one positive value"));
        }
        if self.delta_c_pct_values.is_empty() || self.delta_c_pct_values.iter().any(|d| !(*d > 0.0 && *d <= 100.0)) {
            return Err(Error::invalid("delta_c_pct_values", "need values in (0, 100]"));
        }
        if let FrameChoice::Fractions { l1_frac, l2_frac } = self.frames {
            for (name, f) in [("l1_frac", l1_frac), ("l2_frac", l2_frac)] {
                if !(f > 0.0 && f <= 1.0) {
                    return Err(Error::invalid(name, format!("{f} outside (0, 1]")));
                }
            }
        }
        if self.evaluation == (Evaluation::Simulated { replications: 0 }) {
            return Err(Error::invalid("replications", "must be at least 1"));
        }
        Ok(())
    }
}

/// Cell, traffic and timing shared by every grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepBase {
    pub geometry: CellGeometry,
    pub regular: RegularTrafficParams,
    pub deadlines: Deadlines,
    /// Representative event used for the alarm hypothesis.
    pub alarm: AlarmScenario,
    pub p_h1: f64,
    pub t_r_s: f64,
    pub rs_duration_s: f64,
}

impl SweepBase {
    pub fn activity(&self) -> Result<ActivityProbs> {
        ActivityProbs::new(
            activity_prob_regular(self.regular.lambda_p, self.regular.lambda_d, self.t_r_s),
            activity_prob_alarm(&self.alarm, &self.geometry, &self.regular, self.t_r_s),
        )
    }

    pub fn n(&self) -> usize {
        self.geometry.n_stations()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub omega: usize,
    pub delta_c_pct: f64,
    pub delta_c: usize,
    pub l1: usize,
    pub l2: usize,
    pub feasible: bool,
    pub max_pool_duration_s: f64,
    pub e_c_analytical: Option<f64>,
    pub e_c_simulated: Option<f64>,
    pub e_c_simulated_std_error: Option<f64>,
    pub p11: Option<f64>,
    pub p10: Option<f64>,
}

impl SweepRow {
    /// Cost under the evaluation the sweep was asked for.
    pub fn objective(&self, evaluation: Evaluation) -> Option<f64> {
        match evaluation {
            Evaluation::Analytical => self.e_c_analytical,
            Evaluation::Simulated { .. } => self.e_c_simulated,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub evaluation: Evaluation,
    /// Sorted by slot degree, then threshold.
    pub rows: Vec<SweepRow>,
    pub argmin: SweepRow,
}

fn params_for(base: &SweepBase, omega: usize, delta_pct: f64, l1: usize, l2: usize) -> Result<ProtocolParams> {
    let pool = base.n().div_ceil(omega);
    ProtocolParams::new(
        base.n(),
        omega,
        delta_from_percent(delta_pct, pool),
        l1,
        l2,
        base.t_r_s,
        base.rs_duration_s,
    )
}

/// Frame lengths for one grid point.
fn choose_frames(
    base: &SweepBase,
    activity: &ActivityProbs,
    omega: usize,
    delta_pct: f64,
    frames: FrameChoice,
) -> Result<(usize, usize)> {
    match frames {
        FrameChoice::Fractions { l1_frac, l2_frac } => {
            let (l1, l2) = frames_from_fractions(omega, l1_frac, l2_frac);
            Ok(if omega > 1 { (l1.min(omega - 1), l2.min(l1).min(omega - 1)) } else { (l1, l2) })
        }
        FrameChoice::Search => search_frames(base, activity, omega, delta_pct),
    }
}

/// Exhaustive search of `(L1, L2)` as tenths of `omega` with `L1 >= L2`,
/// minimizing the analytical cost. Earlier candidates win ties.
pub fn search_frames(base: &SweepBase, activity: &ActivityProbs, omega: usize, delta_pct: f64) -> Result<(usize, usize)> {
    if omega == 1 {
        return Ok((1, 1));
    }
    let mut best: Option<(f64, (usize, usize))> = None;
    let mut seen = Vec::new();
    for i in 1..=10 {
        for j in 1..=i {
            let (l1, l2) = frames_from_fractions(omega, i as f64 / 10.0, j as f64 / 10.0);
            if l1 >= omega || l2 > l1 || seen.contains(&(l1, l2)) {
                continue;
            }
            seen.push((l1, l2));
            let e_c = expected_costs(&params_for(base, omega, delta_pct, l1, l2)?, activity, base.p_h1)?.e_c;
            if best.is_none_or(|(b, _)| e_c < b) {
                best = Some((e_c, (l1, l2)));
            }
        }
    }
    best.map(|(_, f)| f)
        .ok_or_else(|| Error::invalid("omega", format!("no valid frame lengths for omega {omega}")))
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    base: &SweepBase,
    activity: &ActivityProbs,
    omega: usize,
    delta_pct: f64,
    frames: FrameChoice,
    evaluation: Evaluation,
    mode: AccessMode,
    seed: u64,
) -> Result<SweepRow> {
    let (l1, l2) = choose_frames(base, activity, omega, delta_pct, frames)?;
    let params = params_for(base, omega, delta_pct, l1, l2)?;
    let (feasible, max_rs) = match mode {
        AccessMode::Adaptive => (params.check_deadline(base.deadlines.tau_a).is_ok(), params.max_pool_rs()),
        AccessMode::NaiveContentionFree => (
            params.check_deadline_naive(base.deadlines.tau_a).is_ok(),
            params.max_pool_rs_naive(),
        ),
    };
    let mut row = SweepRow {
        omega,
        delta_c_pct: delta_pct,
        delta_c: params.delta_c,
        l1,
        l2,
        feasible,
        max_pool_duration_s: max_rs as f64 * params.rs_duration_s,
        e_c_analytical: None,
        e_c_simulated: None,
        e_c_simulated_std_error: None,
        p11: None,
        p10: None,
    };
    if !feasible {
        return Ok(row);
    }
    let report = expected_costs(&params, activity, base.p_h1)?;
    row.p11 = Some(report.p_11);
    row.p10 = Some(report.p_10);
    row.e_c_analytical = Some(match mode {
        AccessMode::Adaptive => report.e_c,
        AccessMode::NaiveContentionFree => naive_expected_cost(&params, activity, base.p_h1)?,
    });
    if let Evaluation::Simulated { replications } = evaluation {
        let stats = PoolExperiment {
            geometry: base.geometry.clone(),
            regular: base.regular,
            deadlines: base.deadlines,
            params,
            mode,
            alarm: Some(base.alarm),
            mix: HypothesisMix::Prior(base.p_h1),
        }
        .run(replications, seed)?;
        row.e_c_simulated = Some(stats.mean_rs_per_pool());
        row.e_c_simulated_std_error = Some(stats.rs_std_error());
    }
    Ok(row)
}

fn grid_rows(
    base: &SweepBase,
    grid: &SweepGrid,
    mode: AccessMode,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    grid.validate()?;
    let activity = base.activity()?;
    let mut omegas = grid.omega_values.clone();
    omegas.sort_unstable();
    omegas.dedup();
    let mut deltas = grid.delta_c_pct_values.clone();
    deltas.sort_by(f64::total_cmp);
    deltas.dedup();
    let points: Vec<(usize, f64)> = omegas
        .iter()
        .flat_map(|&o| deltas.iter().map(move |&d| (o, d)))
        .collect();
    // the sort above fixes each point's index and hence its simulation seed
    points
        .par_iter()
        .enumerate()
        .map(|(i, &(o, d))| evaluate(base, &activity, o, d, grid.frames, grid.evaluation, mode, derive_seed(seed, i as u64)))
        .collect()
}

fn argmin(rows: &[SweepRow], evaluation: Evaluation) -> Result<SweepRow> {
    let mut best: Option<(&SweepRow, f64)> = None;
    for row in rows {
        if let Some(c) = row.objective(evaluation) {
            // rows are in (omega, delta) order, so strict improvement breaks ties
            if best.is_none_or(|(_, b)| c < b) {
                best = Some((row, c));
            }
        }
    }
    best.map(|(r, _)| r.clone()).ok_or(Error::NoFeasiblePoint)
}

/// Evaluates every grid point for the adaptive scheme. Points whose worst-case
/// pool misses the alarm deadline are kept as infeasible rows.
pub fn sweep(grid: &SweepGrid, base: &SweepBase, seed: u64) -> Result<SweepResult> {
    let rows = grid_rows(base, grid, AccessMode::Adaptive, seed)?;
    let argmin = argmin(&rows, grid.evaluation)?;
    Ok(SweepResult {
        evaluation: grid.evaluation,
        rows,
        argmin,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub omega: usize,
    pub e_c_adaptive: Option<f64>,
    pub e_c_naive: Option<f64>,
    pub e_c_adaptive_simulated: Option<f64>,
    pub e_c_naive_simulated: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveComparison {
    pub delta_c_pct: f64,
    pub rows: Vec<ComparisonRow>,
    pub best_adaptive: SweepRow,
    pub best_naive: SweepRow,
    /// Minimum naive cost over the slot degrees divided by the adaptive one.
    pub ratio: f64,
}

/// Adaptive scheme against the always-contention-free baseline at one threshold.
pub fn compare_naive(
    base: &SweepBase,
    omega_values: &[usize],
    delta_c_pct: f64,
    frames: FrameChoice,
    evaluation: Evaluation,
    seed: u64,
) -> Result<NaiveComparison> {
    let grid = SweepGrid {
        omega_values: omega_values.to_vec(),
        delta_c_pct_values: vec![delta_c_pct],
        frames,
        evaluation,
    };
    let adaptive = grid_rows(base, &grid, AccessMode::Adaptive, seed)?;
    let naive = grid_rows(base, &grid, AccessMode::NaiveContentionFree, derive_seed(seed, u64::MAX))?;
    let best_adaptive = argmin(&adaptive, evaluation)?;
    let best_naive = argmin(&naive, evaluation)?;
    let objective = |r: &SweepRow| r.objective(evaluation).expect("argmin has a cost");
    let ratio = objective(&best_naive) / objective(&best_adaptive);
    let rows = adaptive
        .iter()
        .zip(&naive)
        .map(|(a, n)| ComparisonRow {
            omega: a.omega,
            e_c_adaptive: a.e_c_analytical,
            e_c_naive: n.e_c_analytical,
            e_c_adaptive_simulated: a.e_c_simulated,
            e_c_naive_simulated: n.e_c_simulated,
        })
        .collect();
    Ok(NaiveComparison {
        delta_c_pct,
        rows,
        best_adaptive,
        best_naive,
        ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traffic::{place_stations, CorrelationModel, Point};

    fn base(lambda_scale: f64) -> SweepBase {
        let regular = RegularTrafficParams::new(lambda_scale / 300.0, lambda_scale / 1500.0).unwrap();
        SweepBase {
            geometry: place_stations(8000, 1000.0, 3).unwrap(),
            deadlines: Deadlines::for_regular(5.0, 60.0, &regular).unwrap(),
            regular,
            alarm: AlarmScenario::new(Point::ORIGIN, 4000.0, 0.0, CorrelationModel::SqrtCap { d_max_m: 500.0 })
                .unwrap(),
            p_h1: 5e-3,
            t_r_s: 2.5,
            rs_duration_s: 200e-6,
        }
    }

    fn analytical(omegas: Vec<usize>, deltas: Vec<f64>) -> SweepGrid {
        SweepGrid {
            omega_values: omegas,
            delta_c_pct_values: deltas,
            frames: FrameChoice::default(),
            evaluation: Evaluation::Analytical,
        }
    }

    #[test]
    fn polling_point_costs_every_station() {
        let r = sweep(&analytical(vec![1], vec![50.0]), &base(1.0), 0).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.argmin.e_c_analytical, Some(8000.0));
    }

    #[test]
    fn single_point_matches_analysis() {
        let b = base(1.0);
        let r = sweep(&analytical(vec![40], vec![50.0]), &b, 0).unwrap();
        let params = ProtocolParams::new(8000, 40, 100, 24, 16, 2.5, 200e-6).unwrap();
        let direct = expected_costs(&params, &b.activity().unwrap(), 5e-3).unwrap();
        assert_eq!(r.argmin.e_c_analytical, Some(direct.e_c));
        assert_eq!(r.argmin.p11, Some(direct.p_11));
        assert_eq!((r.argmin.l1, r.argmin.l2, r.argmin.delta_c), (24, 16, 100));
    }

    #[test]
    fn rows_sorted_and_argmin_minimal() {
        let r = sweep(&analytical(vec![80, 10, 40, 20], vec![70.0, 30.0, 50.0]), &base(1.0), 0).unwrap();
        let keys: Vec<_> = r.rows.iter().map(|x| (x.omega, x.delta_c_pct as u32)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        let min = r.rows.iter().filter_map(|x| x.e_c_analytical).fold(f64::INFINITY, f64::min);
        assert_eq!(r.argmin.e_c_analytical, Some(min));
    }

    #[test]
    fn ties_prefer_smaller_omega_then_delta() {
        let row = |omega, delta_c_pct, cost| SweepRow {
            omega,
            delta_c_pct,
            delta_c: 1,
            l1: 1,
            l2: 1,
            feasible: true,
            max_pool_duration_s: 0.0,
            e_c_analytical: Some(cost),
            e_c_simulated: None,
            e_c_simulated_std_error: None,
            p11: None,
            p10: None,
        };
        let rows = [row(20, 30.0, 5.0), row(20, 50.0, 4.0), row(40, 10.0, 4.0), row(40, 20.0, 4.0)];
        let best = argmin(&rows, Evaluation::Analytical).unwrap();
        assert_eq!((best.omega, best.delta_c_pct), (20, 50.0));
        assert!(matches!(
            argmin(&rows, Evaluation::Simulated { replications: 1 }),
            Err(Error::NoFeasiblePoint)
        ));
    }

    #[test]
    fn cost_curve_falls_then_rises() {
        let r = sweep(&analytical(SweepGrid::default_grid().omega_values, vec![50.0]), &base(1.0), 0).unwrap();
        let costs: Vec<f64> = r.rows.iter().map(|x| x.e_c_analytical.unwrap()).collect();
        let best = costs.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert!(best > 0 && best < costs.len() - 1);
        assert!(costs[..=best].windows(2).all(|w| w[0] > w[1]));
        assert!(costs[best..].windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn infeasible_grid_is_an_error() {
        // worst-case pools: 1.76 s at omega 10, 1.64 s at omega 40
        let mut b = base(1.0);
        b.deadlines = Deadlines::new(4.15, 60.0, 300.0).unwrap();
        let r = sweep(&analytical(vec![10], vec![50.0]), &b, 0);
        assert!(matches!(r, Err(Error::NoFeasiblePoint)));
        let ok = sweep(&analytical(vec![10, 40], vec![50.0]), &b, 0).unwrap();
        assert!(!ok.rows[0].feasible && ok.rows[0].e_c_analytical.is_none());
        assert!((ok.rows[0].max_pool_duration_s - 1.76).abs() < 1e-9);
        assert_eq!(ok.argmin.omega, 40);
    }

    #[test]
    fn frame_search_respects_ordering_and_beats_defaults() {
        let b = base(1.0);
        let activity = b.activity().unwrap();
        let (l1, l2) = search_frames(&b, &activity, 40, 50.0).unwrap();
        assert!(l2 <= l1 && l1 < 40);
        let cost = |l1, l2| {
            expected_costs(&params_for(&b, 40, 50.0, l1, l2).unwrap(), &activity, 5e-3)
                .unwrap()
                .e_c
        };
        assert!(cost(l1, l2) <= cost(24, 16));
    }

    #[test]
    fn naive_ratio_near_one_without_collisions() {
        let mut b = base(1e-6);
        b.p_h1 = 0.0;
        let c = compare_naive(&b, &[10, 40, 100], 50.0, FrameChoice::default(), Evaluation::Analytical, 0).unwrap();
        assert!((c.ratio - 1.0).abs() < 1e-3);
        let c = compare_naive(&base(1.0), &[1], 50.0, FrameChoice::default(), Evaluation::Analytical, 0).unwrap();
        assert_eq!(c.rows[0].e_c_adaptive, Some(8000.0));
        assert_eq!(c.rows[0].e_c_naive, Some(8000.0));
    }

    #[test]
    fn simulated_sweep_is_deterministic() {
        let g = SweepGrid {
            evaluation: Evaluation::Simulated { replications: 50 },
            ..analytical(vec![40, 80], vec![50.0])
        };
        let a = sweep(&g, &base(1.0), 7).unwrap();
        assert_eq!(a, sweep(&g, &base(1.0), 7).unwrap());
        assert!(a.rows.iter().all(|r| r.e_c_simulated.is_some()));
    }
}
