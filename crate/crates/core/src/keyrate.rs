//! Finite-size key length, key rate per window and the repeaterless bounds.

use serde::{Deserialize, Serialize};

use crate::channel::expected_rates;
use crate::chernoff::{apply_to_rates, finalize_counts, single_photon_windows, TailSetting};
use crate::config::{ChannelPair, DeviceParams, ProtocolVariant, SecurityCoefficients, SourceParams, ValidatedConfig};
use crate::decoy::{e1ph_upper, s01_lower_raw, s10_lower_raw, s1z_lower};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyRateReport {
    pub variant: ProtocolVariant,
    pub channel: ChannelPair,
    pub params: SourceParams,
    pub key_length: f64,
    pub rate_per_window: f64,
    pub n1: f64,
    pub e1ph: f64,
    pub n_t: f64,
    pub e_z: f64,
    pub s1z_lower: f64,
    pub plob: f64,
    pub tgw: f64,
    pub security: SecurityCoefficients,
}

pub fn binary_entropy(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::DomainError { function: "binary_entropy", value: p });
    }
    if p == 0.0 || p == 1.0 {
        return Ok(0.0);
    }
    Ok(-p * p.log2() - (1.0 - p) * (-p).ln_1p() / std::f64::consts::LN_2)
}

/// Bits spent on error verification and privacy amplification.
pub fn log_terms(sec: &SecurityCoefficients) -> f64 {
    (2.0 / sec.eps_cor).log2() + 2.0 * (1.0 / (std::f64::consts::SQRT_2 * sec.eps_pa * sec.eps_hat)).log2()
}

/// Extractable bits before the zero clamp: `n1 [1 - H(e1ph)]` minus the
/// error-correction leakage and the log terms.
pub fn key_length_unclamped(n1: f64, e1ph: f64, n_t: f64, e_z: f64, device: &DeviceParams, sec: &SecurityCoefficients) -> Result<f64> {
    let privacy = n1 * (1.0 - binary_entropy(e1ph.min(0.5))?);
    let leak = device.ec_inefficiency * n_t * binary_entropy(e_z)?;
    Ok(privacy - leak - log_terms(sec))
}

pub fn key_length(n1: f64, e1ph: f64, n_t: f64, e_z: f64, device: &DeviceParams, sec: &SecurityCoefficients) -> Result<f64> {
    key_length_unclamped(n1, e1ph, n_t, e_z, device, sec).map(|v| v.max(0.0))
}

fn loss_transmittance(loss_db: f64, function: &'static str) -> Result<f64> {
    if !(loss_db >= 0.0) {
        return Err(Error::DomainError { function, value: loss_db });
    }
    let eta = 10f64.powf(-loss_db / 10.0);
    if eta >= 1.0 {
        return Err(Error::InfiniteBound);
    }
    Ok(eta)
}

/// `-log2(1 - eta)` for a pure-loss channel of the given attenuation in dB.
pub fn plob_bound(total_channel_loss_db: f64) -> Result<f64> {
    let eta = loss_transmittance(total_channel_loss_db, "plob_bound")?;
    Ok(-(-eta).ln_1p() / std::f64::consts::LN_2)
}

/// `log2((1 + eta) / (1 - eta))`.
pub fn tgw_bound(total_channel_loss_db: f64) -> Result<f64> {
    let eta = loss_transmittance(total_channel_loss_db, "tgw_bound")?;
    Ok((eta.ln_1p() - (-eta).ln_1p()) / std::f64::consts::LN_2)
}

fn bound_or_infinite(r: Result<f64>) -> Result<f64> {
    match r {
        Err(Error::InfiniteBound) => Ok(f64::INFINITY),
        other => other,
    }
}

/// Intermediate quantities of one evaluation, kept for search heuristics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub report: KeyRateReport,
    /// Unclamped single-photon yield bound.
    pub s1z_raw: f64,
    /// Decoy phase-error bound before the Chernoff step, clamped to `[0, 0.5]`.
    pub e1ph_decoy: f64,
    /// Expected signal windows with exactly one sender emitting one photon.
    pub single_photon_windows: f64,
    /// Leakage plus log terms.
    pub cost: f64,
}

/// Full pipeline from a validated configuration to a key-rate report.
pub fn evaluate(config: &ValidatedConfig) -> Result<KeyRateReport> {
    evaluate_detailed(config).map(|e| e.report)
}

pub fn evaluate_detailed(config: &ValidatedConfig) -> Result<Evaluation> {
    let device = config.device();
    let channel = config.channel();
    let source = config.source();
    let sec = config.security();
    let loss = device.attenuation * (channel.len_a + channel.len_b);
    let mut report = KeyRateReport {
        variant: config.variant(),
        channel: *channel,
        params: *source,
        key_length: 0.0,
        rate_per_window: 0.0,
        n1: 0.0,
        e1ph: 0.5,
        n_t: 0.0,
        e_z: 0.0,
        s1z_lower: 0.0,
        plob: bound_or_infinite(plob_bound(loss))?,
        tgw: bound_or_infinite(tgw_bound(loss))?,
        security: sec,
    };

    let rates = match expected_rates(config) {
        Ok(r) => r,
        Err(Error::ZeroRate(_)) => {
            return Ok(Evaluation { report, s1z_raw: 0.0, e1ph_decoy: 0.5, single_photon_windows: 0.0, cost: log_terms(&sec) })
        }
        Err(e) => return Err(e),
    };
    report.n_t = device.total_windows * source.pz_a * source.pz_b * rates.s_z;
    report.e_z = rates.e_z;
    let cost = device.ec_inefficiency * report.n_t * binary_entropy(rates.e_z)? + log_terms(&sec);

    let tail = TailSetting::new(device.failure_prob)?;
    let inputs = apply_to_rates(&rates, source, &tail)?;
    inputs.check()?;
    let s10 = s10_lower_raw(&inputs)?;
    let s01 = s01_lower_raw(&inputs)?;
    let s1z_raw = s1z_lower(s10, s01, inputs.dec_a1, inputs.dec_b1)?;
    let s1z = s1z_lower(s10.max(0.0), s01.max(0.0), inputs.dec_a1, inputs.dec_b1)?;
    report.s1z_lower = s1z;
    let mut eval = Evaluation { report, s1z_raw, e1ph_decoy: 0.5, single_photon_windows: single_photon_windows(config), cost };
    if !(s1z > 0.0) {
        return Ok(eval);
    }
    let e1 = e1ph_upper(inputs.t_delta.upper, inputs.s00.lower, s1z, inputs.dec_a1, inputs.dec_b1)?;
    eval.e1ph_decoy = e1;
    let (n1, e1ph) = match finalize_counts(s1z, e1, config) {
        Ok(v) => v,
        Err(Error::ZeroYield) => return Ok(eval),
        Err(e) => return Err(e),
    };
    let key = key_length(n1, e1ph, report.n_t, report.e_z, device, &sec)?;
    eval.report.n1 = n1;
    eval.report.e1ph = e1ph;
    eval.report.key_length = key;
    eval.report.rate_per_window = key / device.total_windows;
    Ok(eval)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{validate, DeviceParams};

    #[test]
    fn entropy_values() {
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert!((binary_entropy(0.05).unwrap() - 0.286_396_957_115_956_5).abs() < 1e-15);
        assert!(binary_entropy(1.5).is_err());
        assert!(binary_entropy(-0.1).is_err());
    }

    #[test]
    fn log_term_total() {
        let sec = SecurityCoefficients::from_failure_prob(1e-10);
        assert!((log_terms(&sec) - 166.09).abs() < 0.01, "{}", log_terms(&sec));
    }

    #[test]
    fn half_phase_error_gives_no_key() {
        let dev = DeviceParams::reference();
        let sec = SecurityCoefficients::from_failure_prob(1e-10);
        assert_eq!(key_length(1e9, 0.5, 1e3, 0.01, &dev, &sec).unwrap(), 0.0);
        assert!(key_length(1e9, 0.01, 1e9, 0.01, &dev, &sec).unwrap() > 0.0);
    }

    #[test]
    fn benchmark_bounds() {
        let half = 10.0 * 2f64.log10();
        assert!((plob_bound(half).unwrap() - 1.0).abs() < 1e-12);
        assert!((tgw_bound(half).unwrap() - 3f64.log2()).abs() < 1e-12);
        assert_eq!(plob_bound(0.0), Err(Error::InfiniteBound));
        assert!(matches!(tgw_bound(-1.0), Err(Error::DomainError { .. })));
        for db in [0.1, 1.0, 10.0, 60.0, 100.0] {
            assert!(tgw_bound(db).unwrap() >= plob_bound(db).unwrap());
        }
    }

    #[test]
    fn tuned_point_has_positive_rate_and_consistent_report() {
        let src = SourceParams::symmetric(0.5744, 0.0048, 0.2351, 0.0078, 0.9639, 0.0068, 0.0291, 0.0002, 0.0074);
        let cfg = validate(DeviceParams::reference(), ChannelPair::new(0.0, 50.0), src, ProtocolVariant::Original).unwrap();
        let r = evaluate(&cfg).unwrap();
        assert!((r.rate_per_window / 1.12197e-4 - 1.0).abs() < 1e-4, "{r:?}");
        assert!((r.rate_per_window - r.key_length / 1e13).abs() <= 1e-15 * r.rate_per_window);
        assert!(r.n1 > 0.0 && r.e1ph < 0.5);
        assert_eq!(r.security.eps_tot, 2.2e-9);
    }

    #[test]
    fn opaque_channel_gives_zero_rate() {
        let dev = DeviceParams { attenuation: 1e6, dark_rate: 0.0, ..DeviceParams::reference() };
        let cfg = validate(dev, ChannelPair::new(10.0, 10.0), SourceParams::default(), ProtocolVariant::Original).unwrap();
        let r = evaluate(&cfg).unwrap();
        assert_eq!(r.rate_per_window, 0.0);
    }
}
