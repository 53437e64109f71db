use std::sync::Mutex;

use tfqkd_core::config::validate;
use tfqkd_core::keyrate::evaluate;
use tfqkd_core::optimizer::{optimize, optimize_observed, scan, SearchSpace};
use tfqkd_core::{ChannelPair, DeviceParams, ProtocolVariant, SourceParams};

fn small_space() -> SearchSpace {
    SearchSpace { restarts: 3, evaluations_per_restart: 400, start_pool: 300, ..SearchSpace::default() }
}

#[test]
fn identical_seeds_give_identical_outcomes() {
    let device = DeviceParams::reference();
    let channel = ChannelPair::new(20.0, 70.0);
    let a = optimize(&device, &channel, ProtocolVariant::General, &small_space(), 5).unwrap();
    let b = optimize(&device, &channel, ProtocolVariant::General, &small_space(), 5).unwrap();
    assert_eq!(a, b);
}

#[test]
fn beats_a_symmetric_heuristic_start() {
    let device = DeviceParams::reference();
    let start = SourceParams::symmetric(0.45, 0.01, 0.4, 0.03, 0.88, 0.035, 0.08, 0.005, 0.015);
    for (la, lb) in [(0.0, 50.0), (100.0, 150.0), (50.0, 150.0)] {
        let channel = ChannelPair::new(la, lb);
        let heuristic = evaluate(&validate(device, channel, start, ProtocolVariant::Original).unwrap()).unwrap();
        for variant in ProtocolVariant::ALL {
            let best = optimize(&device, &channel, variant, &SearchSpace::default(), 0).unwrap().best;
            assert!(best.rate_per_window >= heuristic.rate_per_window, "{variant} at ({la}, {lb})");
        }
    }
}

#[test]
fn best_rate_dominates_every_probed_candidate() {
    let device = DeviceParams::reference();
    let channel = ChannelPair::new(50.0, 100.0);
    let seen = Mutex::new(Vec::new());
    let outcome = optimize_observed(&device, &channel, ProtocolVariant::General, &small_space(), 2, None, &|p: &SourceParams| {
        seen.lock().unwrap().push(*p)
    })
    .unwrap();
    let seen = seen.into_inner().unwrap();
    assert!(seen.len() >= 1000);
    for p in seen.iter().step_by(7) {
        if let Ok(cfg) = validate(device, channel, *p, ProtocolVariant::General) {
            assert!(evaluate(&cfg).unwrap().rate_per_window <= outcome.best.rate_per_window);
        }
    }
}

#[test]
fn scan_is_non_increasing_with_distance() {
    let device = DeviceParams::reference();
    let grid: Vec<f64> = (0..6).map(|i| 40.0 * i as f64).collect();
    let curve = scan(&device, ProtocolVariant::Original, 50.0, &grid, &small_space(), 1).unwrap();
    let rates: Vec<f64> = curve.iter().map(|o| o.best.rate_per_window).collect();
    assert!(rates.windows(2).all(|w| w[1] <= w[0]), "{rates:?}");
}

#[test]
fn rejects_malformed_search_space() {
    let device = DeviceParams::reference();
    let space = SearchSpace { restarts: 0, ..SearchSpace::default() };
    assert!(optimize(&device, &ChannelPair::default(), ProtocolVariant::General, &space, 0).is_err());
}
