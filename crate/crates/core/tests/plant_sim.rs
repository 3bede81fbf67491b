use nalgebra::{DMatrix, DVector};

use resilient_lqr::plant::{
    compute_cost, consensus_drift, consensus_initial_state, make_sum_of_sinusoids,
    multi_agent_benchmark, simulate, CamouflageGain, CamouflageMap, Channels, LtiModel, SimOptions,
    TrajectoryLog,
};

fn camouflage() -> CamouflageMap {
    CamouflageMap::with_tight_bound(
        CamouflageGain::SinCos {
            scale: 0.3,
            offset: 0.02,
        },
        DMatrix::identity(6, 6),
    )
    .unwrap()
}

#[test]
fn consensus_is_preserved_without_input() {
    let a = consensus_drift();
    let model = LtiModel::new(a, DMatrix::identity(6, 6)).unwrap();
    let x0 = consensus_initial_state();
    let log = simulate(
        &model,
        &Channels::default(),
        &x0,
        &SimOptions::new(20.0, 0.01),
    )
    .unwrap();
    let mean0 = x0.mean();
    let last = log.x.last().unwrap();
    assert!((last.mean() - mean0).abs() < 1e-9);
    assert!(last.iter().all(|v| (v - mean0).abs() < 1e-3));
}

#[test]
fn camouflaged_log_round_trips_through_csv() {
    let (model, _, x0) = multi_agent_benchmark();
    let expl = make_sum_of_sinusoids(3, 6, 20, 1.0, (0.1, 50.0)).unwrap();
    let camo = camouflage();
    let ch = Channels {
        exploration: Some(&expl),
        camouflage: Some(&camo),
        ..Default::default()
    };
    let log = simulate(&model, &ch, &x0, &SimOptions::new(0.5, 0.01)).unwrap();
    assert!(log.has_camouflage);
    let back = TrajectoryLog::from_csv(&log.to_csv()).unwrap();
    assert_eq!(back.len(), log.len());
    assert!(back.has_camouflage);
    for (a, b) in back.x.iter().zip(&log.x) {
        assert!((a - b).amax() <= 1e-10 * (1.0 + b.amax()));
    }
}

#[test]
fn psi_matches_camouflage_map() {
    let (model, _, x0) = multi_agent_benchmark();
    let camo = camouflage();
    let ch = Channels {
        camouflage: Some(&camo),
        ..Default::default()
    };
    let log = simulate(&model, &ch, &x0, &SimOptions::new(0.3, 0.01)).unwrap();
    for ((t, x), psi) in log.t.iter().zip(&log.x).zip(&log.psi) {
        assert!((camo.psi(*t, x) - psi).amax() < 1e-12);
    }
}

#[test]
fn feedback_cost_is_positive_and_finite() {
    let (model, cost, x0) = multi_agent_benchmark();
    let k = DMatrix::identity(6, 6);
    let ch = Channels {
        controller_gain: Some(&k),
        ..Default::default()
    };
    let log = simulate(&model, &ch, &x0, &SimOptions::new(2.0, 0.01)).unwrap();
    let j = compute_cost(&log, &cost, 0.0, 2.0).unwrap();
    assert!(j.is_finite() && j > 0.0);
    let tail = compute_cost(&log, &cost, 1.0, 2.0).unwrap();
    assert!(tail < j);
}

#[test]
fn restart_continues_the_trajectory() {
    let (model, _, x0) = multi_agent_benchmark();
    let k = DMatrix::identity(6, 6);
    let ch = Channels {
        controller_gain: Some(&k),
        ..Default::default()
    };
    let whole = simulate(&model, &ch, &x0, &SimOptions::new(1.0, 0.01)).unwrap();
    let first = simulate(&model, &ch, &x0, &SimOptions::new(0.5, 0.01)).unwrap();
    let mid: DVector<f64> = first.x.last().unwrap().clone();
    let second = simulate(
        &model,
        &ch,
        &mid,
        &SimOptions::new(0.5, 0.01).starting_at(0.5),
    )
    .unwrap();
    let joined = first.concat(&second).unwrap();
    assert_eq!(joined.len(), whole.len());
    assert!((joined.x.last().unwrap() - whole.x.last().unwrap()).amax() < 1e-12);
}
