use nalgebra::DMatrix;

use resilient_lqr::detector::{calibrate, detect, DEFAULT_MARGIN, DEFAULT_PERSISTENCE};
use resilient_lqr::plant::{multi_agent_benchmark_with_input_gain, simulate, Channels, SimOptions};

#[test]
fn quiet_closed_loop_never_alarms_and_a_disturbance_does() {
    let (model, _, x0) = multi_agent_benchmark_with_input_gain(1.0);
    let k = DMatrix::identity(6, 6) * 2.0;
    let ch = Channels {
        controller_gain: Some(&k),
        ..Default::default()
    };
    let log = simulate(&model, &ch, &x0, &SimOptions::new(6.0, 0.01)).unwrap();
    let cfg = calibrate(&log, (1.0, 2.0), DEFAULT_MARGIN, DEFAULT_PERSISTENCE).unwrap();
    assert!(detect(&log, &cfg).is_none());

    let kicked = x0 * 10.0;
    let late = simulate(
        &model,
        &ch,
        &kicked,
        &SimOptions::new(1.0, 0.01).starting_at(3.0),
    )
    .unwrap();
    let alarm = detect(&late, &cfg).expect("large deviation alarms");
    assert!((alarm.time - 3.0).abs() < 1e-9);
}
