use vanet_sec::config::ExperimentConfig;
use vanet_sec::metrics::pdr_curve;
use vanet_sec::scenario::{Heading, Scenario, VehicleId, VehicleSpec};
use vanet_sec::sim::{SimOptions, Simulation};

fn pair(gap_m: f64) -> Scenario {
    let v = |i: u32, x: f64| VehicleSpec {
        id: VehicleId(i),
        lane: 0,
        heading: Heading::Forward,
        position_m: x,
        speed_mps: 20.0,
        platoon_index: Some(i + 1),
    };
    Scenario { vehicles: vec![v(0, 5000.0), v(1, 5000.0 - gap_m)], road_length_m: 20_000.0, lane_width_m: 3.5, platoon_lane: 0 }
}

/// Two vehicles alone on the road: no interference, so success is the
/// probability that the faded SNR clears the threshold. With m = 1 the
/// fading is exponential and the mean SNR at the nominal range equals the
/// threshold, giving exp(-1).
#[test]
fn isolated_pair_at_nominal_range_matches_rayleigh() {
    let cfg = ExperimentConfig {
        lanes: 4,
        platoon_size: 2,
        emergency: false,
        warmup_s: 1.0,
        steady_state_s: 500.0,
        max_duration_s: 600.0,
        ..Default::default()
    };
    let out = Simulation::new(&cfg, pair(cfg.nominal_range_m), 9, SimOptions::default()).unwrap().run().unwrap();
    let curve = pdr_curve(&out.pdr);
    let [p] = curve.as_slice() else { panic!("expected one bin, got {curve:?}") };
    let expected = (-1f64).exp();
    let sigma = (expected * (1.0 - expected) / p.attempts as f64).sqrt();
    assert!(p.attempts > 9000, "{}", p.attempts);
    assert!((p.pdr - expected).abs() < 4.0 * sigma, "pdr {} vs {expected} (sigma {sigma})", p.pdr);
}

#[test]
fn isolated_pair_close_in_almost_always_succeeds() {
    let cfg = ExperimentConfig { lanes: 4, platoon_size: 2, emergency: false, warmup_s: 1.0, steady_state_s: 60.0, ..Default::default() };
    let out = Simulation::new(&cfg, pair(30.0), 9, SimOptions::default()).unwrap().run().unwrap();
    let curve = pdr_curve(&out.pdr);
    assert!(curve.iter().all(|p| p.pdr > 0.99), "{curve:?}");
}
