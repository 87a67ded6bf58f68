//! Scenario file schema.
//!
//! A TOML document with SI units spelled out in every key name. Every section
//! is optional and defaults to the reference cell: 8000 stations within
//! 1000 m, a 5 min reporting interval with one on-demand report per 25 min,
//! `T_R` = 2.5 s, RSs of 200 us, `omega` = 40 and a 50% threshold.
//!
//! ```toml
//! [cell]
//! radius_m = 1000.0
//! n_stations = 8000
//!
//! [traffic]
//! lambda_p_per_s = 0.0033333333333333335
//! lambda_d_per_s = 0.0006666666666666666
//!
//! [protocol]
//! omega = 40
//! delta_c_pct = 50.0
//! l1_frac = 0.6
//! l2_frac = 0.4
//!
//! [[alarm]]
//! speed_m_per_s = 4000.0
//! t_a_s = 10.0
//! correlation = "sqrt_cap"
//! d_max_m = 500.0
//! ```
//!
//! Unknown keys are rejected and reported by name.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{
    activity_prob_alarm, activity_prob_regular, delta_from_percent, frames_from_fractions, ActivityProbs,
    ProtocolParams,
};
use crate::optimizer::{Evaluation, FrameChoice, SweepBase, SweepGrid};
use crate::rng::derive_seed;
use crate::simulator::{AccessMode, HypothesisMix, PoolExperiment, ScenarioConfig};
use crate::traffic::{
    place_stations, AlarmScenario, CellGeometry, CorrelationModel, Deadlines, Point, RegularTrafficParams,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CellSection {
    pub radius_m: f64,
    pub n_stations: usize,
    /// Placement seed; derived from the run seed when absent.
    pub placement_seed: Option<u64>,
}

impl Default for CellSection {
    fn default() -> Self {
        CellSection {
            radius_m: 1000.0,
            n_stations: 8000,
            placement_seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficSection {
    pub lambda_p_per_s: f64,
    pub lambda_d_per_s: f64,
}

impl Default for TrafficSection {
    fn default() -> Self {
        TrafficSection {
            lambda_p_per_s: 1.0 / 300.0,
            lambda_d_per_s: 1.0 / 1500.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeadlineSection {
    pub tau_a_s: f64,
    pub tau_d_s: f64,
    /// Defaults to the reporting interval.
    pub tau_p_s: Option<f64>,
}

impl Default for DeadlineSection {
    fn default() -> Self {
        DeadlineSection {
            tau_a_s: 5.0,
            tau_d_s: 60.0,
            tau_p_s: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolSection {
    pub omega: usize,
    pub delta_c_pct: f64,
    /// Explicit frame lengths take precedence over the fractions.
    pub l1: Option<usize>,
    pub l2: Option<usize>,
    pub l1_frac: f64,
    pub l2_frac: f64,
    pub t_r_s: f64,
    pub rs_duration_s: f64,
    pub mode: AccessMode,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        ProtocolSection {
            omega: 40,
            delta_c_pct: 50.0,
            l1: None,
            l2: None,
            l1_frac: 0.6,
            l2_frac: 0.4,
            t_r_s: 2.5,
            rs_duration_s: 200e-6,
            mode: AccessMode::Adaptive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSection {
    pub p_h1: f64,
}

impl Default for PriorSection {
    fn default() -> Self {
        PriorSection { p_h1: 5e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulationKind {
    /// One continuous run over `horizon_s` with the configured alarms.
    Scenario,
    /// Independent single-pool replications.
    Pools,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HypothesisChoice {
    Regular,
    Alarm,
    /// Alarm with probability `priors.p_h1`.
    Prior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub kind: SimulationKind,
    pub horizon_s: f64,
    pub hypothesis: HypothesisChoice,
    pub trace: bool,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection {
            kind: SimulationKind::Scenario,
            horizon_s: 300.0,
            hypothesis: HypothesisChoice::Prior,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActivationSection {
    pub bin_width_s: f64,
}

impl Default for ActivationSection {
    fn default() -> Self {
        ActivationSection { bin_width_s: 5e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameMode {
    Fractions,
    Search,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaluationMode {
    Analytical,
    Simulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub omega_values: Vec<usize>,
    pub delta_c_pct_values: Vec<f64>,
    pub frames: FrameMode,
    pub evaluation: EvaluationMode,
}

impl Default for SweepSection {
    fn default() -> Self {
        let g = SweepGrid::default_grid();
        SweepSection {
            omega_values: g.omega_values,
            delta_c_pct_values: g.delta_c_pct_values,
            frames: FrameMode::Fractions,
            evaluation: EvaluationMode::Analytical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationKind {
    Unit,
    ExpDecay,
    SqrtCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlarmSection {
    #[serde(default)]
    pub epicenter_x_m: f64,
    #[serde(default)]
    pub epicenter_y_m: f64,
    pub speed_m_per_s: f64,
    #[serde(default)]
    pub t_a_s: f64,
    pub correlation: CorrelationKind,
    pub decay_per_m: Option<f64>,
    pub d_max_m: Option<f64>,
}

impl AlarmSection {
    pub fn scenario(&self) -> Result<AlarmScenario> {
        let need = |v: Option<f64>, key: &str| {
            v.ok_or_else(|| Error::Config(format!("alarm: `{key}` required for correlation {:?}", self.correlation)))
        };
        let correlation = match self.correlation {
            CorrelationKind::Unit => CorrelationModel::Unit,
            CorrelationKind::ExpDecay => CorrelationModel::ExpDecay {
                decay_per_m: need(self.decay_per_m, "decay_per_m")?,
            },
            CorrelationKind::SqrtCap => CorrelationModel::SqrtCap {
                d_max_m: need(self.d_max_m, "d_max_m")?,
            },
        };
        AlarmScenario::new(
            Point::new(self.epicenter_x_m, self.epicenter_y_m),
            self.speed_m_per_s,
            self.t_a_s,
            correlation,
        )
    }
}

/// A whole scenario file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub cell: CellSection,
    pub traffic: TrafficSection,
    pub deadlines: DeadlineSection,
    pub protocol: ProtocolSection,
    pub priors: PriorSection,
    pub simulation: SimulationSection,
    pub activation: ActivationSection,
    pub sweep: SweepSection,
    pub alarm: Vec<AlarmSection>,
}

impl ExperimentConfig {
    /// Parses a TOML document. Errors name the offending key and line.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start].matches('\n').count() + 1);
            let msg = e.message().replace('\n', " ");
            Error::Config(match line {
                Some(l) => format!("line {l}: {msg}"),
                None => msg,
            })
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn geometry(&self, seed: u64) -> Result<CellGeometry> {
        let placement = self.cell.placement_seed.unwrap_or_else(|| derive_seed(seed, 0));
        place_stations(self.cell.n_stations, self.cell.radius_m, placement)
    }

    pub fn regular(&self) -> Result<RegularTrafficParams> {
        RegularTrafficParams::new(self.traffic.lambda_p_per_s, self.traffic.lambda_d_per_s)
    }

    pub fn deadlines(&self) -> Result<Deadlines> {
        let d = &self.deadlines;
        match d.tau_p_s {
            Some(tau_p) => Deadlines::new(d.tau_a_s, d.tau_d_s, tau_p),
            None => Deadlines::for_regular(d.tau_a_s, d.tau_d_s, &self.regular()?),
        }
    }

    pub fn protocol(&self) -> Result<ProtocolParams> {
        let p = &self.protocol;
        if p.omega == 0 {
            return Err(Error::invalid("protocol.omega", "must be positive"));
        }
        let (f1, f2) = frames_from_fractions(p.omega, p.l1_frac, p.l2_frac);
        let pool = self.cell.n_stations.div_ceil(p.omega);
        ProtocolParams::new(
            self.cell.n_stations,
            p.omega,
            delta_from_percent(p.delta_c_pct, pool),
            p.l1.unwrap_or(f1),
            p.l2.unwrap_or(f2),
            p.t_r_s,
            p.rs_duration_s,
        )
    }

    pub fn alarms(&self) -> Result<Vec<AlarmScenario>> {
        self.alarm.iter().map(AlarmSection::scenario).collect()
    }

    /// The first configured alarm stands for the alarm hypothesis.
    pub fn representative_alarm(&self) -> Result<Option<AlarmScenario>> {
        self.alarm.first().map(AlarmSection::scenario).transpose()
    }

    fn required_alarm(&self) -> Result<AlarmScenario> {
        self.representative_alarm()?
            .ok_or_else(|| Error::Config("priors.p_h1 > 0 requires at least one [[alarm]] entry".into()))
    }

    pub fn activity(&self, geometry: &CellGeometry) -> Result<ActivityProbs> {
        let regular = self.regular()?;
        let p_a0 = activity_prob_regular(regular.lambda_p, regular.lambda_d, self.protocol.t_r_s);
        let p_a1 = match self.representative_alarm()? {
            Some(a) => activity_prob_alarm(&a, geometry, &regular, self.protocol.t_r_s),
            None if self.priors.p_h1 > 0.0 => return Err(self.required_alarm().unwrap_err()),
            None => p_a0,
        };
        ActivityProbs::new(p_a0, p_a1)
    }

    pub fn scenario(&self, seed: u64) -> Result<ScenarioConfig> {
        Ok(ScenarioConfig {
            geometry: self.geometry(seed)?,
            regular: self.regular()?,
            deadlines: self.deadlines()?,
            params: self.protocol()?,
            alarms: self.alarms()?,
            horizon_s: self.simulation.horizon_s,
            mode: self.protocol.mode,
        })
    }

    pub fn pool_experiment(&self, seed: u64) -> Result<PoolExperiment> {
        let mix = match self.simulation.hypothesis {
            HypothesisChoice::Regular => HypothesisMix::Regular,
            HypothesisChoice::Alarm => HypothesisMix::Alarm,
            HypothesisChoice::Prior => HypothesisMix::Prior(self.priors.p_h1),
        };
        Ok(PoolExperiment {
            geometry: self.geometry(seed)?,
            regular: self.regular()?,
            deadlines: self.deadlines()?,
            params: self.protocol()?,
            mode: self.protocol.mode,
            alarm: self.representative_alarm()?,
            mix,
        })
    }

    pub fn frames(&self) -> FrameChoice {
        match self.sweep.frames {
            FrameMode::Fractions => FrameChoice::Fractions {
                l1_frac: self.protocol.l1_frac,
                l2_frac: self.protocol.l2_frac,
            },
            FrameMode::Search => FrameChoice::Search,
        }
    }

    pub fn sweep_grid(&self, replications: u64) -> Result<SweepGrid> {
        let grid = SweepGrid {
            omega_values: self.sweep.omega_values.clone(),
            delta_c_pct_values: self.sweep.delta_c_pct_values.clone(),
            frames: self.frames(),
            evaluation: match self.sweep.evaluation {
                EvaluationMode::Analytical => Evaluation::Analytical,
                EvaluationMode::Simulated => Evaluation::Simulated { replications },
            },
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn sweep_base(&self, seed: u64) -> Result<SweepBase> {
        let alarm = match self.representative_alarm()? {
            Some(a) => a,
            None if self.priors.p_h1 > 0.0 => self.required_alarm()?,
            // never drawn with a zero prior; any event keeps the types simple
            None => AlarmScenario::new(Point::ORIGIN, 1.0, 0.0, CorrelationModel::Unit)?,
        };
        Ok(SweepBase {
            geometry: self.geometry(seed)?,
            regular: self.regular()?,
            deadlines: self.deadlines()?,
            alarm,
            p_h1: self.priors.p_h1,
            t_r_s: self.protocol.t_r_s,
            rs_duration_s: self.protocol.rs_duration_s,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_reference_cell() {
        let c = ExperimentConfig::from_toml_str("").unwrap();
        let p = c.protocol().unwrap();
        assert_eq!((p.n, p.omega, p.delta_c, p.l1, p.l2), (8000, 40, 100, 24, 16));
        assert_eq!(c.deadlines().unwrap().tau_p, 300.0);
    }

    #[test]
    fn unknown_key_is_named() {
        let e = ExperimentConfig::from_toml_str("[protocol]\nomgea = 4\n").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("omgea") && msg.contains("line 2"), "{msg}");
        assert!(!msg.contains('\n'));
        assert_eq!(e.category(), "config");
    }

    #[test]
    fn alarm_entries_parse() {
        let c = ExperimentConfig::from_toml_str(
            r#"
            [[alarm]]
            speed_m_per_s = 4000.0
            correlation = "sqrt_cap"
            d_max_m = 500.0

            [[alarm]]
            speed_m_per_s = 4000.0
            t_a_s = 3.0
            correlation = "exp_decay"
            decay_per_m = 0.002
            "#,
        )
        .unwrap();
        let a = c.alarms().unwrap();
        assert_eq!(a[0].correlation, CorrelationModel::SqrtCap { d_max_m: 500.0 });
        assert_eq!(a[1].t_a_s, 3.0);
    }

    #[test]
    fn missing_model_parameter_reported() {
        let c = ExperimentConfig::from_toml_str("[[alarm]]\nspeed_m_per_s = 1.0\ncorrelation = \"sqrt_cap\"\n").unwrap();
        assert!(c.alarms().unwrap_err().to_string().contains("d_max_m"));
    }

    #[test]
    fn prior_without_alarm_rejected() {
        let c = ExperimentConfig::from_toml_str("").unwrap();
        let g = c.geometry(1).unwrap();
        assert!(c.activity(&g).is_err());
        let c = ExperimentConfig::from_toml_str("[priors]\np_h1 = 0.0\n").unwrap();
        let a = c.activity(&g).unwrap();
        assert_eq!(a.p_a0, a.p_a1);
    }

    #[test]
    fn explicit_frames_override_fractions() {
        let c = ExperimentConfig::from_toml_str("[protocol]\nomega = 20\nl1 = 15\nl2 = 5\n").unwrap();
        let p = c.protocol().unwrap();
        assert_eq!((p.l1, p.l2, p.delta_c), (15, 5, 200));
    }

    #[test]
    fn placement_follows_seed() {
        let c = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(c.geometry(4).unwrap(), c.geometry(4).unwrap());
        assert_ne!(c.geometry(4).unwrap(), c.geometry(5).unwrap());
        let fixed = ExperimentConfig::from_toml_str("[cell]\nplacement_seed = 9\n").unwrap();
        assert_eq!(fixed.geometry(4).unwrap(), fixed.geometry(5).unwrap());
    }
}
