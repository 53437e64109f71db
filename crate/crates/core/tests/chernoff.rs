use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tfqkd_core::chernoff::*;

const XI: f64 = 1e-10;

fn setting() -> TailSetting {
    TailSetting::new(XI).unwrap()
}

fn grid() -> impl Iterator<Item = f64> {
    (1..=6).map(|k| 10f64.powi(2 * k))
}

// Tail exponents in the delta form, written with ln_1p only.
fn f_exp_lower(x: f64, d: f64) -> f64 {
    x / (1.0 + d) * ((1.0 + d) * d.ln_1p() - d)
}

fn f_exp_upper(x: f64, d: f64) -> f64 {
    x / (1.0 - d) * (d + (1.0 - d) * (-d).ln_1p())
}

fn f_real_upper(phi: f64, d: f64) -> f64 {
    phi * ((1.0 + d) * d.ln_1p() - d)
}

fn f_real_lower(phi: f64, d: f64) -> f64 {
    phi * (d + (1.0 - d) * (-d).ln_1p())
}

/// Plain bisection for an increasing `f` with a root in `(lo, hi)`.
fn bisect(f: impl Fn(f64) -> f64, target: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Relative distance of the tail bound `e^{-exponent}` from `xi/2`.
fn residual(exponent: f64) -> f64 {
    ((-exponent).exp() - XI / 2.0).abs() / (XI / 2.0)
}

#[test]
fn defining_equation_residuals_on_grid() {
    let s = setting();
    for x in grid() {
        let d1 = delta_expected_lower(x, &s).unwrap();
        let d2 = delta_expected_upper(x, &s).unwrap();
        let d1r = delta_real_upper(x, &s).unwrap();
        let d2r = delta_real_lower(x, &s).unwrap();
        for (name, r) in [
            ("delta_1", residual(f_exp_lower(x, d1))),
            ("delta_2", residual(f_exp_upper(x, d2))),
            ("delta'_1", residual(f_real_upper(x, d1r))),
            ("delta'_2", residual(f_real_lower(x, d2r))),
        ] {
            assert!(r < 1e-8, "{name} at X = {x:e}: residual {r:e}");
        }
    }
}

#[test]
fn ordering_on_grid_and_small_inputs() {
    let s = setting();
    for x in grid().chain([1.0, 3.0, 10.0, 25.0]) {
        let lo = expected_lower(x, &s).unwrap();
        let hi = expected_upper(x, &s).unwrap();
        assert!(lo <= x && x <= hi, "phi bounds at {x}: {lo} {hi}");
        let rl = real_lower(x, &s).unwrap();
        let ru = real_upper(x, &s).unwrap();
        assert!(rl <= x && x <= ru, "X bounds at {x}: {rl} {ru}");
    }
}

#[test]
fn round_trip_consistency_on_grid() {
    let s = setting();
    for x in grid() {
        let back_lower = real_lower(expected_lower(x, &s).unwrap(), &s).unwrap();
        let back_upper = real_upper(expected_upper(x, &s).unwrap(), &s).unwrap();
        assert!(back_lower <= x, "X^L(phi^L({x:e})) = {back_lower:e}");
        assert!(back_upper >= x, "X^U(phi^U({x:e})) = {back_upper:e}");
    }
}

#[test]
fn relative_width_decays_on_grid() {
    let s = setting();
    let widths: Vec<f64> = grid()
        .map(|x| (expected_upper(x, &s).unwrap() - expected_lower(x, &s).unwrap()) / x)
        .collect();
    assert!(widths.windows(2).all(|w| w[1] < w[0]), "{widths:?}");
}

#[test]
fn agrees_with_independent_bisection() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..100 {
        let x = 10f64.powf(rng.gen_range(2.0..12.0));
        let xi = 10f64.powf(rng.gen_range(-12.0..-3.0));
        let s = TailSetting::new(xi).unwrap();
        let l2 = (2.0 / xi).ln();
        let one = 1.0 - 1e-15;

        let cases = [
            ("delta_1", delta_expected_lower(x, &s).unwrap(), bisect(|d| f_exp_lower(x, d), l2, 0.0, 10.0)),
            ("delta_2", delta_expected_upper(x, &s).unwrap(), bisect(|d| f_exp_upper(x, d), l2, 0.0, one)),
            ("delta'_1", delta_real_upper(x, &s).unwrap(), bisect(|d| f_real_upper(x, d), l2, 0.0, 10.0)),
            ("delta'_2", delta_real_lower(x, &s).unwrap(), bisect(|d| f_real_lower(x, d), l2, 0.0, one)),
        ];
        for (name, got, oracle) in cases {
            let rel = (got - oracle).abs() / oracle;
            assert!(rel < 1e-9, "{name} at X = {x:e}, xi = {xi:e}: {got:e} vs {oracle:e}");
        }
    }
}

#[test]
fn zero_observation_limits() {
    let s = setting();
    let l2 = s.log_term();
    assert_eq!(expected_lower(0.0, &s).unwrap(), 0.0);
    assert_eq!(expected_upper(0.0, &s).unwrap(), l2);
    assert_eq!(real_upper(0.0, &s).unwrap(), l2);
    assert_eq!(real_lower(l2 * 0.5, &s).unwrap(), 0.0);
    assert_eq!(delta_real_lower(l2, &s).unwrap(), 1.0);
}

#[test]
fn rejects_negative_and_non_finite_counts() {
    let s = setting();
    assert!(expected_lower(-1.0, &s).is_err());
    assert!(expected_upper(f64::NAN, &s).is_err());
    assert!(real_upper(f64::INFINITY, &s).is_err());
    assert!(TailSetting::new(0.0).is_err());
    assert!(TailSetting::new(1.0).is_err());
}
