use nalgebra::DMatrix;

use resilient_lqr::data::{build_data_matrices, check_rank, required_rank, Mode, Quadrature};
use resilient_lqr::plant::{
    make_sum_of_sinusoids, multi_agent_benchmark, simulate, CamouflageGain, CamouflageMap,
    Channels, SimOptions, TrajectoryLog,
};
use resilient_lqr::Error;

fn exploration_log(camouflaged: bool) -> TrajectoryLog {
    let (model, _, x0) = multi_agent_benchmark();
    let expl = make_sum_of_sinusoids(7, 6, 100, 1.0, (0.1, 200.0)).unwrap();
    let camo = CamouflageMap::with_tight_bound(
        CamouflageGain::SinCos {
            scale: 0.3,
            offset: 0.02,
        },
        DMatrix::identity(6, 6),
    )
    .unwrap();
    let ch = Channels {
        exploration: Some(&expl),
        camouflage: camouflaged.then_some(&camo),
        ..Default::default()
    };
    simulate(&model, &ch, &x0, &SimOptions::new(2.0, 0.01)).unwrap()
}

#[test]
fn benchmark_data_meets_the_nominal_rank() {
    let log = exploration_log(false);
    let d = build_data_matrices(&log, 0.01, 114, false, Quadrature::Auto).unwrap();
    assert_eq!((d.windows(), d.mxx.ncols(), d.mxu0.ncols()), (114, 36, 36));
    let r = check_rank(&d, Mode::Nominal);
    assert_eq!(r.required, 57);
    assert!(r.satisfied, "{r:?}");
}

#[test]
fn camouflaged_rank_requirement() {
    assert_eq!(required_rank(6, 6, Mode::Arrl), 93);
    let log = exploration_log(true);
    let d = build_data_matrices(&log, 0.01, 114, true, Quadrature::Auto).unwrap();
    let r = check_rank(&d, Mode::Arrl);
    assert_eq!(r.required, 93);
    assert!(r.achieved > 57 && r.achieved <= 93);
}

#[test]
fn exact_and_trapezoid_quadrature_agree_to_discretization_error() {
    let log = exploration_log(false);
    let exact = build_data_matrices(&log, 0.01, 50, false, Quadrature::Exact).unwrap();
    let trap = build_data_matrices(&log, 0.01, 50, false, Quadrature::Trapezoid).unwrap();
    let rel = (&exact.mxx - &trap.mxx).norm() / exact.mxx.norm();
    assert!(rel < 0.05, "relative gap {rel}");
    assert_eq!(exact.nxx, trap.nxx);
}

#[test]
fn csv_round_trip_preserves_data_matrices_within_print_precision() {
    let log = exploration_log(false);
    let back = TrajectoryLog::from_csv(&log.to_csv()).unwrap();
    let a = build_data_matrices(&log, 0.01, 20, false, Quadrature::Trapezoid).unwrap();
    let b = build_data_matrices(&back, 0.01, 20, false, Quadrature::Trapezoid).unwrap();
    assert!((&a.mxu0 - &b.mxu0).amax() < 1e-8 * (1.0 + a.mxu0.amax()));
}

#[test]
fn too_many_windows_is_reported() {
    let log = exploration_log(false);
    assert!(matches!(
        build_data_matrices(&log, 0.01, 500, false, Quadrature::Auto),
        Err(Error::InsufficientData { .. })
    ));
    assert!(matches!(
        build_data_matrices(&log, 0.01, 10, true, Quadrature::Auto),
        Err(Error::MissingPsi)
    ));
}
