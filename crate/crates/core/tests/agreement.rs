//! Simulation against the closed forms.

use m2m_pool::analysis::{activity_prob_regular, expected_frame_cost, resolution_probs, ProtocolParams};
use m2m_pool::optimizer::{sweep, Evaluation, FrameChoice, SweepBase, SweepGrid};
use m2m_pool::rng::substream;
use m2m_pool::simulator::{AccessMode, Decision, Pool};
use m2m_pool::traffic::{
    place_stations, AlarmScenario, CorrelationModel, Deadlines, Point, RegularTrafficParams, Report, ReportKind,
    StationState,
};
use rand::Rng;

fn regular() -> RegularTrafficParams {
    RegularTrafficParams::new(1.0 / 300.0, 1.0 / 1500.0).unwrap()
}

#[test]
fn per_collision_cost_matches_frame_cost() {
    let p_a = activity_prob_regular(1.0 / 300.0, 1.0 / 1500.0, 2.5);
    let params = ProtocolParams::new(8000, 40, 100, 24, 16, 2.5, 200e-6).unwrap();
    let pool = Pool::new(params, AccessMode::Adaptive, 5.0).unwrap();
    let mut rng = substream(21, 0);
    let (mut groups, mut rs) = (0u64, 0u64);
    for _ in 0..2000 {
        let mut stations: Vec<StationState> = (0..8000)
            .map(|i| {
                let mut s = StationState::new(i);
                if rng.random::<f64>() < p_a {
                    s.pending = Some(Report {
                        kind: ReportKind::Periodic,
                        generated_at: 0.0,
                    });
                }
                s
            })
            .collect();
        let o = pool.run(&mut stations, 2.5, &mut rng);
        assert_eq!(o.decision, Decision::Regular);
        groups += o.k_c as u64;
        rs += (o.total_rs - 200) as u64;
    }
    let (r1, r2) = resolution_probs(40, 24, 16, p_a).unwrap();
    let e_s = expected_frame_cost(40, 24, 16, r1, r2);
    let simulated = rs as f64 / groups as f64;
    assert!(groups > 20_000);
    assert!((simulated - e_s).abs() / e_s < 0.02, "simulated {simulated}, analytical {e_s}");
}

#[test]
fn simulated_sweep_agrees_with_analysis() {
    let regular = regular();
    let base = SweepBase {
        geometry: place_stations(8000, 1000.0, 17).unwrap(),
        deadlines: Deadlines::for_regular(5.0, 60.0, &regular).unwrap(),
        regular,
        alarm: AlarmScenario::new(Point::ORIGIN, 4000.0, 0.0, CorrelationModel::SqrtCap { d_max_m: 500.0 }).unwrap(),
        p_h1: 5e-3,
        t_r_s: 2.5,
        rs_duration_s: 200e-6,
    };
    let grid = SweepGrid {
        omega_values: vec![10, 40, 100],
        delta_c_pct_values: vec![30.0, 50.0],
        frames: FrameChoice::default(),
        evaluation: Evaluation::Simulated { replications: 4000 },
    };
    let result = sweep(&grid, &base, 3).unwrap();
    let mut exact_points = 0;
    for row in &result.rows {
        let (a, s, se) = (
            row.e_c_analytical.unwrap(),
            row.e_c_simulated.unwrap(),
            row.e_c_simulated_std_error.unwrap(),
        );
        let tag = format!("omega {} delta {}%: {a} vs {s} +- {se}", row.omega, row.delta_c_pct);
        if 1.0 - row.p11.unwrap() < 1e-9 {
            exact_points += 1;
            assert!((a - s).abs() <= 3.0 * se, "{tag}");
        } else {
            // a missed alarm is costed as if every group escalated to the
            // dedicated frame, which bounds the simulated cost from above
            assert!(s <= a + 3.0 * se, "{tag}");
        }
    }
    assert!(exact_points >= 4);
}
