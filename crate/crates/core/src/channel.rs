//! Analytic model of the two fibres, Charlie's beam splitter and his two
//! threshold detectors.
//!
//! A detector illuminated by coherent light of mean photon number `I` clicks
//! with probability `1 - (1 - d) e^{-I}`. Interference windows suffer an
//! outcome swap with probability `e_d`; signal windows do not, since their
//! phases are never compared.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::config::{ChannelPair, DeviceParams, SourceParams, ValidatedConfig};
use crate::error::{Error, Result};
use crate::numerics::quadrature::integrate;
use crate::numerics::special::{click_probability, ln_bessel_i0};

const SLICE_REL_TOL: f64 = 1e-10;

/// Total transmittance of each arm, detector efficiency and attenuators included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmTransmittance {
    pub eta_a: f64,
    pub eta_b: f64,
}

/// `eta_d * 10^{-alpha L / 10} * extra_loss`.
pub fn transmittance(length_km: f64, device: &DeviceParams, extra_loss: f64) -> f64 {
    device.detector_eff * 10f64.powf(-device.attenuation * length_km / 10.0) * extra_loss
}

pub fn arm_transmittance(device: &DeviceParams, channel: &ChannelPair) -> ArmTransmittance {
    ArmTransmittance {
        eta_a: transmittance(channel.len_a, device, channel.extra_loss_a),
        eta_b: transmittance(channel.len_b, device, channel.extra_loss_b),
    }
}

/// Attenuates the better arm so both arms end with the weaker transmittance.
pub fn equalized_channel(device: &DeviceParams, channel: &ChannelPair) -> ChannelPair {
    let eta_a = transmittance(channel.len_a, device, 1.0);
    let eta_b = transmittance(channel.len_b, device, 1.0);
    let (extra_loss_a, extra_loss_b) = if eta_a > eta_b {
        (eta_b / eta_a, 1.0)
    } else if eta_b > eta_a {
        (1.0, eta_a / eta_b)
    } else {
        (1.0, 1.0)
    };
    ChannelPair { extra_loss_a, extra_loss_b, ..*channel }
}

/// Probability that exactly one detector clicks when both users send
/// phase-randomized coherent pulses of the given intensities:
/// `2(1-d) e^{-(x+y)/2} I0(sqrt(xy)) - 2(1-d)^2 e^{-(x+y)}` with `x = eta_A int_a`, `y = eta_B int_b`.
pub fn pair_rate_phase_randomized(int_a: f64, int_b: f64, arms: &ArmTransmittance, device: &DeviceParams) -> f64 {
    let x = arms.eta_a * int_a;
    let y = arms.eta_b * int_b;
    let d = device.dark_rate;
    let total = x + y;
    // rewritten as 2(1-d) e^{-(x+y)} [ (e^{(x+y)/2} I0 - 1) + d ] to keep the vacuum limit exact
    let excess = (0.5 * total + ln_bessel_i0((x * y).sqrt())).exp_m1();
    2.0 * (1.0 - d) * (-total).exp() * (excess + d)
}

/// Per-phase outcome probabilities of an interference window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterferenceOutcome {
    pub effective: f64,
    pub error: f64,
}

/// Exactly-one-click and error probabilities for received intensities `x`, `y`
/// at relative phase `theta`. The detector expected to click is L when
/// `cos(theta) >= 0` and R otherwise.
pub fn interference_outcome(x: f64, y: f64, theta: f64, device: &DeviceParams) -> InterferenceOutcome {
    let d = device.dark_rate;
    let cos = theta.cos();
    let root = (x * y).sqrt();
    let half_sin = (0.5 * theta).sin();
    let half_cos = (0.5 * theta).cos();
    let gap = (x.sqrt() - y.sqrt()).powi(2);
    // (x + y -/+ 2 sqrt(xy) cos) / 2 written without cancellation
    let dim = 0.5 * (gap + 4.0 * root * half_sin * half_sin);
    let bright = 0.5 * (gap + 4.0 * root * half_cos * half_cos);
    let (i_left, i_right) = if cos >= 0.0 { (bright, dim) } else { (dim, bright) };
    let p_left = click_probability(i_left, d);
    let p_right = click_probability(i_right, d);
    let only_left = p_left * (1.0 - p_right);
    let only_right = p_right * (1.0 - p_left);
    let (right_only, wrong_only) = if cos >= 0.0 { (only_left, only_right) } else { (only_right, only_left) };
    let e_d = device.misalignment;
    InterferenceOutcome {
        effective: only_left + only_right,
        error: (1.0 - e_d) * wrong_only + e_d * right_only,
    }
}

/// Fraction `2 arccos(1 - lambda) / pi` of relative phases accepted by the slice.
pub fn slice_fraction(slice: f64) -> f64 {
    2.0 * (1.0 - slice).max(0.0).acos() / PI
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceRates {
    /// Error-event probability per accepted window.
    pub t_delta: f64,
    /// Effective-event probability per accepted window.
    pub s_delta: f64,
}

/// Error and counting rates of `(dec_a1, dec_b1)` windows whose relative phase
/// passes `1 - |cos(theta)| <= lambda`, averaged over the accepted set.
pub fn slice_rates(source: &SourceParams, arms: &ArmTransmittance, device: &DeviceParams) -> Result<SliceRates> {
    if !(source.slice > 0.0) {
        return Err(Error::EmptySlice(source.slice));
    }
    let x = arms.eta_a * source.dec_a1;
    let y = arms.eta_b * source.dec_b1;
    // accepted set is symmetric under theta -> -theta and theta -> pi - theta
    let edge = (1.0 - source.slice).max(0.0).acos();
    let t = integrate(|th| interference_outcome(x, y, th, device).error, 0.0, edge, SLICE_REL_TOL) / edge;
    let s = integrate(|th| interference_outcome(x, y, th, device).effective, 0.0, edge, SLICE_REL_TOL) / edge;
    Ok(SliceRates { t_delta: t.min(s), s_delta: s })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZWindowRates {
    pub s_z: f64,
    pub e_z: f64,
}

/// Counting rate and bit-flip error rate of signal windows.
///
/// Alice records 1 when she sends and Bob records 0 when he sends, so windows
/// where both or neither send produce mismatched bits.
pub fn z_window_rates(source: &SourceParams, arms: &ArmTransmittance, device: &DeviceParams) -> Result<ZWindowRates> {
    let (ea, eb) = (source.send_a, source.send_b);
    let both = pair_rate_phase_randomized(source.sig_a, source.sig_b, arms, device);
    let only_a = pair_rate_phase_randomized(source.sig_a, 0.0, arms, device);
    let only_b = pair_rate_phase_randomized(0.0, source.sig_b, arms, device);
    let none = pair_rate_phase_randomized(0.0, 0.0, arms, device);
    let wrong = ea * eb * both + (1.0 - ea) * (1.0 - eb) * none;
    let s_z = wrong + ea * (1.0 - eb) * only_a + (1.0 - ea) * eb * only_b;
    if !(s_z > 0.0) {
        return Err(Error::ZeroRate("signal windows"));
    }
    Ok(ZWindowRates { s_z, e_z: wrong / s_z })
}

/// What one user sends in a window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Signal,
    Vacuum,
    Decoy1,
    Decoy2,
}

impl Setting {
    pub const ALL: [Setting; 4] = [Setting::Signal, Setting::Vacuum, Setting::Decoy1, Setting::Decoy2];

    fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Setting::Signal => "z",
            Setting::Vacuum => "0",
            Setting::Decoy1 => "1",
            Setting::Decoy2 => "2",
        }
    }
}

/// Expected number of windows for every (Alice, Bob) setting pair, plus the
/// phase-accepted part of the `(Decoy1, Decoy1)` cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowCounts {
    cells: [[f64; 4]; 4],
    pub slice: f64,
}

impl WindowCounts {
    pub fn new(total_windows: f64, source: &SourceParams) -> Self {
        let pa = [source.pz_a, source.px_a0, source.px_a1, source.px_a2];
        let pb = [source.pz_b, source.px_b0, source.px_b1, source.px_b2];
        let mut cells = [[0.0; 4]; 4];
        for (i, row) in cells.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = total_windows * pa[i] * pb[j];
            }
        }
        let slice = cells[2][2] * slice_fraction(source.slice);
        Self { cells, slice }
    }

    pub fn get(&self, alice: Setting, bob: Setting) -> f64 {
        self.cells[alice.index()][bob.index()]
    }

    /// Sum over the sixteen setting pairs; equals the total window count.
    pub fn total(&self) -> f64 {
        self.cells.iter().flatten().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Setting, Setting, f64)> + '_ {
        Setting::ALL
            .into_iter()
            .flat_map(move |a| Setting::ALL.into_iter().map(move |b| (a, b, self.get(a, b))))
    }
}

/// Expected rates of every quantity the estimators consume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedRates {
    pub s_vac: f64,
    pub s_a1_0: f64,
    pub s_a2_0: f64,
    pub s_0_b1: f64,
    pub s_0_b2: f64,
    pub s_z: f64,
    pub e_z: f64,
    pub t_delta: f64,
    pub s_delta: f64,
    pub window_counts: WindowCounts,
}

pub fn expected_rates(config: &ValidatedConfig) -> Result<ExpectedRates> {
    let device = config.device();
    let source = config.source();
    let arms = arm_transmittance(device, config.channel());
    let rate = |a: f64, b: f64| pair_rate_phase_randomized(a, b, &arms, device);
    let z = z_window_rates(source, &arms, device)?;
    let slice = slice_rates(source, &arms, device)?;
    Ok(ExpectedRates {
        s_vac: rate(0.0, 0.0),
        s_a1_0: rate(source.dec_a1, 0.0),
        s_a2_0: rate(source.dec_a2, 0.0),
        s_0_b1: rate(0.0, source.dec_b1),
        s_0_b2: rate(0.0, source.dec_b2),
        s_z: z.s_z,
        e_z: z.e_z,
        t_delta: slice.t_delta,
        s_delta: slice.s_delta,
        window_counts: WindowCounts::new(device.total_windows, source),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{validate, ProtocolVariant};

    fn device(d: f64, e_d: f64) -> DeviceParams {
        DeviceParams { dark_rate: d, misalignment: e_d, ..DeviceParams::reference() }
    }

    const UNIT: ArmTransmittance = ArmTransmittance { eta_a: 1.0, eta_b: 1.0 };

    #[test]
    fn transmittance_examples() {
        let dev = DeviceParams::reference();
        assert_eq!(transmittance(0.0, &dev, 1.0), 0.5);
        assert!((transmittance(50.0, &dev, 1.0) - 0.05).abs() < 1e-17);
        let lossless = DeviceParams { attenuation: 0.0, ..dev };
        assert_eq!(transmittance(1234.0, &lossless, 1.0), 0.5);
    }

    #[test]
    fn vacuum_rate_is_two_dark_counts() {
        for &d in &[0.0, 1e-10, 1e-6, 0.01, 0.3] {
            let r = pair_rate_phase_randomized(0.0, 0.0, &UNIT, &device(d, 0.05));
            let exact = 2.0 * d * (1.0 - d);
            assert!((r - exact).abs() <= 1e-15 * exact.max(1e-300), "d={d}: {r} vs {exact}");
        }
    }

    #[test]
    fn pair_rate_matches_naive_formula_and_is_symmetric() {
        let dev = device(1e-3, 0.05);
        for &(a, b) in &[(0.3, 0.1), (1.0, 0.0), (0.05, 0.7)] {
            let r = pair_rate_phase_randomized(a, b, &UNIT, &dev);
            let i0 = crate::numerics::special::bessel_i0((a * b as f64).sqrt());
            let naive = 2.0 * (1.0 - 1e-3) * (-(a + b) / 2.0f64).exp() * i0 - 2.0 * (1.0 - 1e-3f64).powi(2) * (-(a + b) as f64).exp();
            assert!((r - naive).abs() < 1e-14, "{r} vs {naive}");
            let arms = ArmTransmittance { eta_a: 0.2, eta_b: 0.7 };
            let swapped = ArmTransmittance { eta_a: 0.7, eta_b: 0.2 };
            let r1 = pair_rate_phase_randomized(a, b, &arms, &dev);
            let r2 = pair_rate_phase_randomized(b, a, &swapped, &dev);
            assert!((r1 - r2).abs() <= 1e-16 * r1.abs().max(1e-300) * 10.0);
        }
        assert_eq!(pair_rate_phase_randomized(0.0, 0.0, &UNIT, &device(0.0, 0.05)), 0.0);
    }

    #[test]
    fn pair_rate_is_monotone_in_intensity() {
        let dev = device(1e-3, 0.05);
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
        for &b in &grid {
            let mut prev = -1.0;
            for &a in &grid {
                let r = pair_rate_phase_randomized(a, b, &UNIT, &dev);
                assert!(r >= prev - 1e-16, "a={a} b={b}");
                prev = r;
            }
        }
    }

    fn slice_source(lambda: f64, dec: f64) -> SourceParams {
        SourceParams { slice: lambda, dec_a1: dec, dec_b1: dec, ..SourceParams::default() }
    }

    #[test]
    fn perfect_interference_has_no_errors_in_narrow_slice() {
        let dev = device(0.0, 0.0);
        let r = slice_rates(&slice_source(1e-8, 0.3), &UNIT, &dev).unwrap();
        assert!(r.t_delta < 1e-8 * r.s_delta, "{r:?}");
    }

    #[test]
    fn coin_flip_misalignment_halves_the_counting_rate() {
        let dev = device(1e-6, 0.5);
        let r = slice_rates(&slice_source(0.2, 0.3), &UNIT, &dev).unwrap();
        assert!((r.t_delta - 0.5 * r.s_delta).abs() < 1e-12 * r.s_delta);
    }

    #[test]
    fn full_slice_recovers_phase_randomized_rate() {
        let dev = device(1e-4, 0.05);
        let arms = ArmTransmittance { eta_a: 0.3, eta_b: 0.05 };
        let src = SourceParams { slice: 1.0, dec_a1: 0.2, dec_b1: 0.6, dec_b2: 0.9, ..SourceParams::default() };
        let r = slice_rates(&src, &arms, &dev).unwrap();
        let full = pair_rate_phase_randomized(0.2, 0.6, &arms, &dev);
        assert!(((r.s_delta - full) / full).abs() < 1e-9, "{} vs {}", r.s_delta, full);
    }

    #[test]
    fn empty_slice_is_an_error() {
        assert!(matches!(
            slice_rates(&slice_source(0.0, 0.3), &UNIT, &device(0.0, 0.0)),
            Err(Error::EmptySlice(_))
        ));
    }

    #[test]
    fn slice_fraction_examples() {
        assert!((slice_fraction(1.0) - 1.0).abs() < 1e-15);
        let lambda = 1.0 - (PI / 4.0).cos();
        assert!((slice_fraction(lambda) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn z_rates_single_error_source_removed() {
        let src = SourceParams { send_a: 1.0, send_b: 0.0, ..SourceParams::default() };
        let r = z_window_rates(&src, &ArmTransmittance { eta_a: 0.1, eta_b: 0.1 }, &device(0.0, 0.05)).unwrap();
        assert_eq!(r.e_z, 0.0);
        assert!(r.s_z > 0.0);
    }

    #[test]
    fn z_rates_without_light_is_zero_rate() {
        let src = SourceParams { sig_a: 0.0, sig_b: 0.0, ..SourceParams::default() };
        assert!(matches!(
            z_window_rates(&src, &UNIT, &device(0.0, 0.05)),
            Err(Error::ZeroRate(_))
        ));
    }

    #[test]
    fn window_counts_partition_total() {
        let cfg = validate(DeviceParams::reference(), ChannelPair::new(0.0, 50.0), SourceParams::default(), ProtocolVariant::General).unwrap();
        let rates = expected_rates(&cfg).unwrap();
        let wc = rates.window_counts;
        assert!((wc.total() - 1e13).abs() < 0.5);
        assert!(rates.t_delta <= rates.s_delta);
        assert!((wc.get(Setting::Signal, Setting::Signal) - 1e13 * 0.81).abs() < 1.0);
        assert!(wc.slice < wc.get(Setting::Decoy1, Setting::Decoy1));
    }

    #[test]
    fn dark_free_system_without_light_has_zero_rates() {
        let dev = device(0.0, 0.05);
        let src = SourceParams { dec_a1: 0.0, dec_b1: 0.0, dec_a2: 0.0, dec_b2: 0.0, sig_a: 0.0, sig_b: 0.0, ..SourceParams::default() };
        let r = slice_rates(&src, &UNIT, &dev).unwrap();
        assert_eq!((r.t_delta, r.s_delta), (0.0, 0.0));
        assert_eq!(pair_rate_phase_randomized(0.0, 0.0, &UNIT, &dev), 0.0);
    }

    #[test]
    fn equalized_channel_matches_arms() {
        let dev = DeviceParams::reference();
        for &(la, lb) in &[(0.0, 50.0), (200.0, 300.0), (123.4, 17.0), (40.0, 40.0)] {
            let ch = equalized_channel(&dev, &ChannelPair::new(la, lb));
            let arms = arm_transmittance(&dev, &ch);
            assert!((arms.eta_a - arms.eta_b).abs() < 1e-15, "{la} {lb}");
        }
    }
}
