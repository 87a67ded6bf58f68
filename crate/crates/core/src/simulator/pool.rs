use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::ProtocolParams;
use crate::traffic::{Report, StationState};
use crate::Result;

/// Contiguous grouping by station index: stations `g*omega .. (g+1)*omega`
/// share preallocated RS `g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAssignment {
    omega: usize,
    groups: Vec<Vec<usize>>,
}

impl GroupAssignment {
    pub fn contiguous(n: usize, omega: usize) -> Self {
        let groups = (0..n)
            .collect::<Vec<_>>()
            .chunks(omega)
            .map(<[usize]>::to_vec)
            .collect();
        GroupAssignment { omega, groups }
    }

    pub fn omega(&self) -> usize {
        self.omega
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn group_of(&self, station: usize) -> usize {
        station / self.omega
    }

    pub fn in_group_index(&self, station: usize) -> usize {
        station % self.omega
    }

    pub fn n_stations(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotOutcome {
    Idle,
    Singleton(usize),
    Collision(Vec<usize>),
}

impl SlotOutcome {
    fn from_contenders(mut stations: Vec<usize>) -> Self {
        match stations.len() {
            0 => SlotOutcome::Idle,
            1 => SlotOutcome::Singleton(stations[0]),
            _ => {
                stations.sort_unstable();
                SlotOutcome::Collision(stations)
            }
        }
    }

    pub fn is_collision(&self) -> bool {
        matches!(self, SlotOutcome::Collision(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessMode {
    /// Threshold test picks contention-based or contention-free resolution.
    Adaptive,
    /// Every collided RS expands into `omega` dedicated RSs.
    NaiveContentionFree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Regular,
    Alarm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameKind {
    FirstContention,
    SecondContention,
    ContentionFree,
}

/// One frame allocated in the common pool for a collided group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub group: usize,
    pub kind: FrameKind,
    /// Offset of the first RS of the frame inside the pool.
    pub start_rs: usize,
    pub outcomes: Vec<SlotOutcome>,
}

impl FrameRecord {
    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub station: usize,
    pub report: Report,
    /// End of the RS that identified the station, absolute time in seconds.
    pub resolved_at: f64,
}

impl Resolution {
    pub fn delay(&self) -> f64 {
        self.resolved_at - self.report.generated_at
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolOutcome {
    pub start_s: f64,
    pub preallocated: Vec<SlotOutcome>,
    pub k_c: usize,
    pub decision: Decision,
    pub common_pool: Vec<FrameRecord>,
    pub total_rs: usize,
    pub pool_duration_s: f64,
    pub resolved: Vec<Resolution>,
    /// Stations that were active at the pool start.
    pub active: usize,
}

/// A configured pool: parameters, grouping and resolution mode.
#[derive(Debug, Clone)]
pub struct Pool {
    params: ProtocolParams,
    assignment: GroupAssignment,
    mode: AccessMode,
}

impl Pool {
    /// Fails when the worst-case pool of `mode` cannot meet the alarm deadline.
    pub fn new(params: ProtocolParams, mode: AccessMode, tau_a_s: f64) -> Result<Self> {
        params.validate()?;
        match mode {
            AccessMode::Adaptive => params.check_deadline(tau_a_s)?,
            AccessMode::NaiveContentionFree => params.check_deadline_naive(tau_a_s)?,
        }
        Ok(Pool {
            assignment: GroupAssignment::contiguous(params.n, params.omega),
            params,
            mode,
        })
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    pub fn mode(&self) -> AccessMode {
        self.mode
    }

    pub fn assignment(&self) -> &GroupAssignment {
        &self.assignment
    }

    /// Runs one pool starting at `start_s` over the stations' pending reports.
    /// Every active station is identified and its pending report cleared.
    pub fn run<R: Rng + ?Sized>(&self, stations: &mut [StationState], start_s: f64, rng: &mut R) -> PoolOutcome {
        let p = &self.params;
        let rs = p.rs_duration_s;
        let end_of = |slot: usize| start_s + (slot + 1) as f64 * rs;

        let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); self.assignment.groups().len()];
        let mut active = 0;
        for (i, st) in stations.iter().enumerate() {
            if st.pending.is_some() {
                buckets[self.assignment.group_of(i)].push(i);
                active += 1;
            }
        }

        let mut resolved = Vec::with_capacity(active);
        let mut identify = |station: usize, slot: usize, stations: &mut [StationState]| {
            let report = stations[station].pending.take().expect("active station has a report");
            resolved.push(Resolution {
                station,
                report,
                resolved_at: end_of(slot),
            });
        };

        let preallocated: Vec<SlotOutcome> = buckets.into_iter().map(SlotOutcome::from_contenders).collect();
        for (slot, outcome) in preallocated.iter().enumerate() {
            if let SlotOutcome::Singleton(s) = outcome {
                identify(*s, slot, stations);
            }
        }
        let k_c = preallocated.iter().filter(|o| o.is_collision()).count();
        let decision = if k_c >= p.delta_c {
            Decision::Alarm
        } else {
            Decision::Regular
        };
        let contention = self.mode == AccessMode::Adaptive && decision == Decision::Regular;

        let mut cursor = preallocated.len();
        let mut common_pool = Vec::new();
        for (group, outcome) in preallocated.iter().enumerate() {
            let SlotOutcome::Collision(members) = outcome else {
                continue;
            };
            let mut left = members.clone();
            if contention {
                for (kind, len) in [(FrameKind::FirstContention, p.l1), (FrameKind::SecondContention, p.l2)] {
                    if left.is_empty() {
                        break;
                    }
                    let mut slots: Vec<Vec<usize>> = vec![Vec::new(); len];
                    for &s in &left {
                        slots[rng.random_range(0..len)].push(s);
                    }
                    let outcomes: Vec<SlotOutcome> = slots.into_iter().map(SlotOutcome::from_contenders).collect();
                    left.clear();
                    for (i, o) in outcomes.iter().enumerate() {
                        match o {
                            SlotOutcome::Singleton(s) => identify(*s, cursor + i, stations),
                            SlotOutcome::Collision(c) => left.extend_from_slice(c),
                            SlotOutcome::Idle => {}
                        }
                    }
                    common_pool.push(FrameRecord {
                        group,
                        kind,
                        start_rs: cursor,
                        outcomes,
                    });
                    cursor += len;
                }
                if left.is_empty() {
                    continue;
                }
            }
            // one dedicated RS per in-group position, used or not
            let mut outcomes = vec![SlotOutcome::Idle; p.omega];
            left.sort_unstable();
            for &s in &left {
                let idx = self.assignment.in_group_index(s);
                outcomes[idx] = SlotOutcome::Singleton(s);
                identify(s, cursor + idx, stations);
            }
            common_pool.push(FrameRecord {
                group,
                kind: FrameKind::ContentionFree,
                start_rs: cursor,
                outcomes,
            });
            cursor += p.omega;
        }

        PoolOutcome {
            start_s,
            preallocated,
            k_c,
            decision,
            common_pool,
            total_rs: cursor,
            pool_duration_s: cursor as f64 * rs,
            resolved,
            active,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use crate::traffic::ReportKind;

    fn params(omega: usize) -> ProtocolParams {
        ProtocolParams::with_defaults(8000, omega, 50.0, 2.5, 200e-6).unwrap()
    }

    fn stations(n: usize, active: impl Fn(usize) -> bool) -> Vec<StationState> {
        (0..n)
            .map(|i| {
                let mut s = StationState::new(i);
                if active(i) {
                    s.pending = Some(Report {
                        kind: ReportKind::Periodic,
                        generated_at: 1.0,
                    });
                }
                s
            })
            .collect()
    }

    #[test]
    fn contiguous_groups_partition_stations() {
        let a = GroupAssignment::contiguous(103, 10);
        assert_eq!(a.groups().len(), 11);
        assert_eq!(a.groups()[10], vec![100, 101, 102]);
        assert_eq!(a.n_stations(), 103);
        assert!(a.groups().iter().all(|g| g.len() <= 10));
        assert_eq!(a.group_of(57), 5);
        assert_eq!(a.in_group_index(57), 7);
    }

    #[test]
    fn empty_pool_costs_preallocated_slots() {
        let pool = Pool::new(params(40), AccessMode::Adaptive, 5.0).unwrap();
        let mut st = stations(8000, |_| false);
        let o = pool.run(&mut st, 2.5, &mut substream(1, 0));
        assert!(o.preallocated.iter().all(|s| *s == SlotOutcome::Idle));
        assert_eq!((o.k_c, o.decision, o.total_rs), (0, Decision::Regular, 200));
        assert!((o.pool_duration_s - 0.04).abs() < 1e-12);
    }

    #[test]
    fn one_per_group_resolves_in_preallocated_pool() {
        let pool = Pool::new(params(40), AccessMode::Adaptive, 5.0).unwrap();
        let mut st = stations(8000, |i| i % 40 == 7);
        let o = pool.run(&mut st, 2.5, &mut substream(2, 0));
        assert!(o.preallocated.iter().all(|s| matches!(s, SlotOutcome::Singleton(_))));
        assert_eq!(o.total_rs, 200);
        assert_eq!(o.resolved.len(), 200);
        assert!(st.iter().all(|s| s.pending.is_none()));
        // station 7 sits in RS 0 and ends at the first RS boundary
        assert!((o.resolved[0].resolved_at - (2.5 + 200e-6)).abs() < 1e-12);
    }

    #[test]
    fn full_activity_declares_alarm() {
        let pool = Pool::new(params(40), AccessMode::Adaptive, 5.0).unwrap();
        let mut st = stations(8000, |_| true);
        let o = pool.run(&mut st, 2.5, &mut substream(3, 0));
        assert_eq!(o.k_c, 200);
        assert_eq!(o.decision, Decision::Alarm);
        assert_eq!(o.total_rs, 200 + 200 * 40);
        assert_eq!(o.resolved.len(), 8000);
        assert!(o.common_pool.iter().all(|f| f.kind == FrameKind::ContentionFree));
    }

    #[test]
    fn below_threshold_escalates_through_both_frames() {
        let pool = Pool::new(params(40), AccessMode::Adaptive, 5.0).unwrap();
        // a whole group active: frame 1 of 24 slots cannot separate 40 users
        let mut st = stations(8000, |i| i < 40);
        let o = pool.run(&mut st, 0.0, &mut substream(4, 0));
        assert_eq!((o.k_c, o.decision), (1, Decision::Regular));
        let kinds: Vec<_> = o.common_pool.iter().map(|f| f.kind).collect();
        assert_eq!(kinds, [FrameKind::FirstContention, FrameKind::SecondContention, FrameKind::ContentionFree]);
        assert_eq!(o.total_rs, 200 + 24 + 16 + 40);
        assert_eq!(o.resolved.len(), 40);
        let frames: usize = o.common_pool.iter().map(FrameRecord::len).sum();
        assert_eq!(o.total_rs, 200 + frames);
    }

    #[test]
    fn naive_mode_skips_contention_frames() {
        let pool = Pool::new(params(40), AccessMode::NaiveContentionFree, 5.0).unwrap();
        let mut st = stations(8000, |i| i == 0 || i == 1);
        let o = pool.run(&mut st, 0.0, &mut substream(5, 0));
        assert_eq!(o.decision, Decision::Regular);
        assert_eq!(o.total_rs, 240);
        assert_eq!(o.common_pool.len(), 1);
        assert_eq!(o.common_pool[0].kind, FrameKind::ContentionFree);
    }

    #[test]
    fn pair_collision_resolves_in_frame_one_or_two() {
        let pool = Pool::new(params(40), AccessMode::Adaptive, 5.0).unwrap();
        let mut rng = substream(6, 0);
        let mut first = 0;
        for _ in 0..2000 {
            let mut st = stations(8000, |i| i == 3 || i == 4);
            let o = pool.run(&mut st, 0.0, &mut rng);
            assert_eq!(o.resolved.len(), 2);
            if o.total_rs == 224 {
                first += 1;
            } else {
                assert!(o.total_rs == 240 || o.total_rs == 280);
            }
        }
        // 23/24 of pairs split in frame one
        assert!((first as f64 / 2000.0 - 23.0 / 24.0).abs() < 0.02);
    }

    #[test]
    fn polling_configuration() {
        let pool = Pool::new(params(1), AccessMode::Adaptive, 5.0).unwrap();
        let mut st = stations(8000, |i| i % 3 == 0);
        let o = pool.run(&mut st, 0.0, &mut substream(7, 0));
        assert_eq!(o.total_rs, 8000);
        assert!((o.pool_duration_s - 1.6).abs() < 1e-12);
        assert_eq!(o.k_c, 0);
    }

    #[test]
    fn infeasible_configuration_rejected() {
        assert!(Pool::new(params(40), AccessMode::Adaptive, 4.0).is_err());
        // the baseline always reserves omega per collided group: 8200 RSs
        assert!(Pool::new(params(40), AccessMode::NaiveContentionFree, 5.0).is_ok());
    }
}
