//! Multiplicative Chernoff bounds in both directions: from an observed count
//! to bounds on its expectation, and from an expectation to bounds on the
//! count that will be observed.
//!
//! Each defining equation is solved in a substituted variable in which it is
//! monotone, so plain bracketed bisection always converges.

use serde::{Deserialize, Serialize};

use crate::channel::{ExpectedRates, Setting};
use crate::config::{SourceParams, ValidatedConfig};
use crate::decoy::{DecoyInputs, Interval};
use crate::error::{Error, Result};
use crate::numerics::roots::bisect_increasing;
use crate::numerics::special::{exp_rem2, log_rem2};

const REL_WIDTH: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailSetting {
    failure_prob: f64,
}

impl TailSetting {
    pub fn new(failure_prob: f64) -> Result<Self> {
        if !(failure_prob > 0.0 && failure_prob < 1.0) {
            return Err(Error::ConstraintViolation(format!("failure probability {failure_prob} not in (0, 1)")));
        }
        Ok(Self { failure_prob })
    }

    pub fn failure_prob(&self) -> f64 {
        self.failure_prob
    }

    /// `ln(2 / xi)`, minus the log of the per-tail failure probability.
    pub fn log_term(&self) -> f64 {
        (2.0 / self.failure_prob).ln()
    }
}

fn check_count(value: f64, function: &'static str) -> Result<()> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::DomainError { function, value })
    }
}

fn seed_guess(scale: f64, l2: f64) -> f64 {
    (2.0 * l2 / scale).sqrt() + l2 / scale
}

// u = ln(1 + delta_1):  X (e^{-u} - 1 + u) = ln(2/xi)
fn lower_expected_log(x: f64, l2: f64) -> Result<f64> {
    bisect_increasing(|u| x * exp_rem2(-u) - l2, seed_guess(x, l2), REL_WIDTH)
}

// q = delta_2 / (1 - delta_2):  X (q - ln(1 + q)) = ln(2/xi)
fn upper_expected_ratio(x: f64, l2: f64) -> Result<f64> {
    bisect_increasing(|q| x * log_rem2(q) - l2, seed_guess(x, l2), REL_WIDTH)
}

// u = ln(1 + delta'_1):  phi ((u - 1) e^u + 1) = ln(2/xi)
fn upper_real_log(phi: f64, l2: f64) -> Result<f64> {
    bisect_increasing(|u| phi * (u * u.exp_m1() - exp_rem2(u)) - l2, seed_guess(phi, l2), REL_WIDTH)
}

// v = -ln(1 - delta'_2):  phi e^{-v} (e^v - 1 - v) = ln(2/xi), bounded by phi
fn lower_real_log(phi: f64, l2: f64) -> Result<f64> {
    bisect_increasing(|v| phi * (-v).exp() * exp_rem2(v) - l2, seed_guess(phi, l2), REL_WIDTH)
}

/// `delta_1(X)`; infinite at `X = 0`.
pub fn delta_expected_lower(observed: f64, setting: &TailSetting) -> Result<f64> {
    check_count(observed, "delta_expected_lower")?;
    if observed == 0.0 {
        return Ok(f64::INFINITY);
    }
    lower_expected_log(observed, setting.log_term()).map(f64::exp_m1)
}

/// `delta_2(X)` in `(0, 1)`; 1 at `X = 0`.
pub fn delta_expected_upper(observed: f64, setting: &TailSetting) -> Result<f64> {
    check_count(observed, "delta_expected_upper")?;
    if observed == 0.0 {
        return Ok(1.0);
    }
    upper_expected_ratio(observed, setting.log_term()).map(|q| q / (1.0 + q))
}

pub fn delta_real_upper(expected: f64, setting: &TailSetting) -> Result<f64> {
    check_count(expected, "delta_real_upper")?;
    if expected == 0.0 {
        return Ok(f64::INFINITY);
    }
    upper_real_log(expected, setting.log_term()).map(f64::exp_m1)
}

/// `delta'_2(phi)`; 1 when `phi <= ln(2/xi)` and the equation has no root.
pub fn delta_real_lower(expected: f64, setting: &TailSetting) -> Result<f64> {
    check_count(expected, "delta_real_lower")?;
    let l2 = setting.log_term();
    if expected <= l2 {
        return Ok(1.0);
    }
    lower_real_log(expected, l2).map(|v| -(-v).exp_m1())
}

/// `phi^L(X) = X / (1 + delta_1)`.
pub fn expected_lower(observed: f64, setting: &TailSetting) -> Result<f64> {
    check_count(observed, "expected_lower")?;
    if observed == 0.0 {
        return Ok(0.0);
    }
    lower_expected_log(observed, setting.log_term()).map(|u| observed * (-u).exp())
}

/// `phi^U(X) = X / (1 - delta_2)`; `ln(2/xi)` at `X = 0`.
pub fn expected_upper(observed: f64, setting: &TailSetting) -> Result<f64> {
    check_count(observed, "expected_upper")?;
    let l2 = setting.log_term();
    if observed == 0.0 {
        return Ok(l2);
    }
    upper_expected_ratio(observed, l2).map(|q| observed + observed * q)
}

/// `X^U(phi) = (1 + delta'_1) phi`; `ln(2/xi)` at `phi = 0`.
pub fn real_upper(expected: f64, setting: &TailSetting) -> Result<f64> {
    check_count(expected, "real_upper")?;
    let l2 = setting.log_term();
    if expected == 0.0 {
        return Ok(l2);
    }
    upper_real_log(expected, l2).map(|u| expected * u.exp())
}

/// `X^L(phi) = (1 - delta'_2) phi`; 0 when `phi <= ln(2/xi)`.
pub fn real_lower(expected: f64, setting: &TailSetting) -> Result<f64> {
    check_count(expected, "real_lower")?;
    let l2 = setting.log_term();
    if expected <= l2 {
        return Ok(0.0);
    }
    lower_real_log(expected, l2).map(|v| expected * (-v).exp())
}

/// Bounds on an expected rate from a rate observed over `windows` windows.
pub fn rate_interval(rate: f64, windows: f64, setting: &TailSetting) -> Result<Interval> {
    if !(windows > 0.0) {
        return Err(Error::DivisionByZero("rate_interval: window count"));
    }
    let observed = windows * rate;
    Ok(Interval::new(expected_lower(observed, setting)? / windows, expected_upper(observed, setting)? / windows))
}

/// Treats the expected rates as observed and turns each into an interval on
/// its expectation.
pub fn apply_to_rates(rates: &ExpectedRates, source: &SourceParams, setting: &TailSetting) -> Result<DecoyInputs> {
    use Setting::{Decoy1, Decoy2, Vacuum};
    let wc = &rates.window_counts;
    let iv = |rate: f64, windows: f64| rate_interval(rate, windows, setting);
    Ok(DecoyInputs {
        s00: iv(rates.s_vac, wc.get(Vacuum, Vacuum))?,
        s_a1_0: iv(rates.s_a1_0, wc.get(Decoy1, Vacuum))?,
        s_a2_0: iv(rates.s_a2_0, wc.get(Decoy2, Vacuum))?,
        s_0_b1: iv(rates.s_0_b1, wc.get(Vacuum, Decoy1))?,
        s_0_b2: iv(rates.s_0_b2, wc.get(Vacuum, Decoy2))?,
        t_delta: iv(rates.t_delta, wc.slice)?,
        dec_a1: source.dec_a1,
        dec_a2: source.dec_a2,
        dec_b1: source.dec_b1,
        dec_b2: source.dec_b2,
    })
}

/// Expected number of signal windows in which exactly one user sends and
/// emits exactly one photon.
pub fn single_photon_windows(config: &ValidatedConfig) -> f64 {
    let s = config.source();
    let (ea, eb) = (s.send_a, s.send_b);
    let bracket = ea * (1.0 - eb) * s.sig_a * (-s.sig_a).exp() + eb * (1.0 - ea) * s.sig_b * (-s.sig_b).exp();
    config.device().total_windows * s.pz_a * s.pz_b * bracket
}

/// Converts expected single-photon bounds into the count `n1` and phase-error
/// rate that enter the key length.
pub fn finalize_counts(s1z_lower_expected: f64, e1ph_upper_expected: f64, config: &ValidatedConfig) -> Result<(f64, f64)> {
    if !(s1z_lower_expected > 0.0) {
        return Err(Error::ZeroYield);
    }
    let setting = TailSetting::new(config.device().failure_prob)?;
    let mean = single_photon_windows(config) * s1z_lower_expected;
    if !(mean > 0.0) {
        return Err(Error::ZeroYield);
    }
    let n1 = real_lower(mean, &setting)?;
    let e1ph = real_upper(mean * e1ph_upper_expected, &setting)? / mean;
    Ok((n1, e1ph))
}
