//! Pulse-level Monte Carlo of the protocol windows, used as an independent
//! check of the analytic rates.
//!
//! Each setting pair of interest is simulated as its own stratum. Within a
//! window both users draw private phases, the two detectors see the
//! interfering intensities, and each click is drawn from its own Bernoulli.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{arm_transmittance, ArmTransmittance, ExpectedRates, Setting};
use crate::chernoff::{expected_lower, expected_upper, TailSetting};
use crate::config::{DeviceParams, SourceParams, ValidatedConfig};
use crate::decoy::{DecoyInputs, Interval};
use crate::error::{Error, Result};

const CHUNK: u64 = 1 << 18;

/// Which setting pair a block of windows uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratum {
    Vacuum,
    AliceDecoy1,
    AliceDecoy2,
    BobDecoy1,
    BobDecoy2,
    Slice,
    Signal,
}

impl Stratum {
    pub const ALL: [Stratum; 7] = [
        Stratum::Vacuum,
        Stratum::AliceDecoy1,
        Stratum::AliceDecoy2,
        Stratum::BobDecoy1,
        Stratum::BobDecoy2,
        Stratum::Slice,
        Stratum::Signal,
    ];

    pub fn settings(self) -> (Setting, Setting) {
        use Setting::*;
        match self {
            Stratum::Vacuum => (Vacuum, Vacuum),
            Stratum::AliceDecoy1 => (Decoy1, Vacuum),
            Stratum::AliceDecoy2 => (Decoy2, Vacuum),
            Stratum::BobDecoy1 => (Vacuum, Decoy1),
            Stratum::BobDecoy2 => (Vacuum, Decoy2),
            Stratum::Slice => (Decoy1, Decoy1),
            Stratum::Signal => (Signal, Signal),
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// What each user emits in one simulated window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseSetting {
    pub kind_a: Setting,
    pub kind_b: Setting,
    pub intensity_a: f64,
    pub intensity_b: f64,
    pub delta_a: f64,
    pub delta_b: f64,
    /// Shared phase reference; it drops out of the interference.
    pub gamma_a: f64,
    pub gamma_b: f64,
    pub sends_a: bool,
    pub sends_b: bool,
}

impl PulseSetting {
    fn relative_phase(&self) -> f64 {
        (self.delta_a + self.gamma_a) - (self.delta_b + self.gamma_b)
    }
}

/// Event counts of one stratum.
///
/// `accepted`, `accepted_effective` and, for the slice stratum, `errors`
/// refer to windows that pass the phase slice. For the signal stratum
/// `errors` counts effective windows whose bits disagree.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counter {
    pub windows: u64,
    pub effective: u64,
    pub no_click: u64,
    pub double_click: u64,
    pub accepted: u64,
    pub accepted_effective: u64,
    pub errors: u64,
}

impl Counter {
    fn merge(self, o: Counter) -> Counter {
        Counter {
            windows: self.windows + o.windows,
            effective: self.effective + o.effective,
            no_click: self.no_click + o.no_click,
            double_click: self.double_click + o.double_click,
            accepted: self.accepted + o.accepted,
            accepted_effective: self.accepted_effective + o.accepted_effective,
            errors: self.errors + o.errors,
        }
    }

    pub fn is_conserved(&self) -> bool {
        self.effective + self.no_click + self.double_click == self.windows
            && self.accepted <= self.windows
            && self.accepted_effective <= self.accepted
            && self.errors <= self.effective
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TallySet {
    counters: [Counter; 7],
}

impl TallySet {
    pub fn get(&self, stratum: Stratum) -> &Counter {
        &self.counters[stratum.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (Stratum, &Counter)> {
        Stratum::ALL.into_iter().zip(self.counters.iter())
    }

    /// Effective events per window of a stratum.
    pub fn counting_rate(&self, stratum: Stratum) -> f64 {
        let c = self.get(stratum);
        ratio(c.effective, c.windows)
    }

    pub fn e_z(&self) -> f64 {
        let c = self.get(Stratum::Signal);
        ratio(c.errors, c.effective)
    }

    pub fn t_delta(&self) -> f64 {
        let c = self.get(Stratum::Slice);
        ratio(c.errors, c.accepted)
    }

    pub fn s_delta(&self) -> f64 {
        let c = self.get(Stratum::Slice);
        ratio(c.accepted_effective, c.accepted)
    }

    /// Decoy inputs built from the simulated counts as observed data.
    pub fn decoy_inputs(&self, source: &SourceParams, tail: &TailSetting) -> Result<DecoyInputs> {
        let iv = |events: u64, windows: u64| -> Result<Interval> {
            if windows == 0 {
                return Err(Error::DivisionByZero("decoy_inputs: empty stratum"));
            }
            let n = windows as f64;
            let x = events as f64;
            Ok(Interval::new(expected_lower(x, tail)? / n, expected_upper(x, tail)? / n))
        };
        let c = |s: Stratum| self.get(s);
        let slice = c(Stratum::Slice);
        Ok(DecoyInputs {
            s00: iv(c(Stratum::Vacuum).effective, c(Stratum::Vacuum).windows)?,
            s_a1_0: iv(c(Stratum::AliceDecoy1).effective, c(Stratum::AliceDecoy1).windows)?,
            s_a2_0: iv(c(Stratum::AliceDecoy2).effective, c(Stratum::AliceDecoy2).windows)?,
            s_0_b1: iv(c(Stratum::BobDecoy1).effective, c(Stratum::BobDecoy1).windows)?,
            s_0_b2: iv(c(Stratum::BobDecoy2).effective, c(Stratum::BobDecoy2).windows)?,
            t_delta: iv(slice.errors, slice.accepted)?,
            dec_a1: source.dec_a1,
            dec_a2: source.dec_a2,
            dec_b1: source.dec_b1,
            dec_b2: source.dec_b2,
        })
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn intensity(source: &SourceParams, setting: Setting, alice: bool) -> f64 {
    match (setting, alice) {
        (Setting::Vacuum, _) => 0.0,
        (Setting::Signal, true) => source.sig_a,
        (Setting::Signal, false) => source.sig_b,
        (Setting::Decoy1, true) => source.dec_a1,
        (Setting::Decoy1, false) => source.dec_b1,
        (Setting::Decoy2, true) => source.dec_a2,
        (Setting::Decoy2, false) => source.dec_b2,
    }
}

fn click<R: Rng>(rng: &mut R, intensity: f64, dark: f64) -> bool {
    let silent = (1.0 - dark) * (-intensity).exp();
    rng.gen::<f64>() >= silent
}

struct Model {
    arms: ArmTransmittance,
    device: DeviceParams,
    source: SourceParams,
}

impl Model {
    fn draw<R: Rng>(&self, stratum: Stratum, rng: &mut R) -> PulseSetting {
        let (kind_a, kind_b) = stratum.settings();
        let gamma = rng.gen_range(0.0..TAU);
        let mut p = PulseSetting {
            kind_a,
            kind_b,
            intensity_a: intensity(&self.source, kind_a, true),
            intensity_b: intensity(&self.source, kind_b, false),
            delta_a: rng.gen_range(0.0..TAU),
            delta_b: rng.gen_range(0.0..TAU),
            gamma_a: gamma,
            gamma_b: gamma,
            sends_a: true,
            sends_b: true,
        };
        if stratum == Stratum::Signal {
            p.sends_a = rng.gen_bool(self.source.send_a);
            p.sends_b = rng.gen_bool(self.source.send_b);
            if !p.sends_a {
                p.intensity_a = 0.0;
            }
            if !p.sends_b {
                p.intensity_b = 0.0;
            }
        }
        p
    }

    fn window<R: Rng>(&self, stratum: Stratum, rng: &mut R, c: &mut Counter) {
        let p = self.draw(stratum, rng);
        let x = self.arms.eta_a * p.intensity_a;
        let y = self.arms.eta_b * p.intensity_b;
        let theta = p.relative_phase();
        let cos = theta.cos();
        let cross = 2.0 * (x * y).sqrt() * cos;
        let d = self.device.dark_rate;
        let mut left = click(rng, 0.5 * (x + y + cross), d);
        let mut right = click(rng, 0.5 * (x + y - cross), d);
        if stratum != Stratum::Signal && rng.gen_bool(self.device.misalignment) {
            std::mem::swap(&mut left, &mut right);
        }
        c.windows += 1;
        let effective = left != right;
        match (left, right) {
            (false, false) => c.no_click += 1,
            (true, true) => c.double_click += 1,
            _ => c.effective += 1,
        }
        match stratum {
            Stratum::Slice => {
                if 1.0 - cos.abs() <= self.source.slice {
                    c.accepted += 1;
                    if effective {
                        c.accepted_effective += 1;
                        let wrong = if cos < 0.0 { left } else { right };
                        if wrong {
                            c.errors += 1;
                        }
                    }
                }
            }
            Stratum::Signal => {
                // Alice's bit is 1 when she sends, Bob's is 0 when he sends
                if effective && p.sends_a == p.sends_b {
                    c.errors += 1;
                }
            }
            _ => {}
        }
    }
}

fn stream_id(stratum: Stratum, chunk: u64) -> u64 {
    ((stratum.index() as u64) << 40) | chunk
}

/// Simulates `samples` windows for every stratum.
pub fn simulate(config: &ValidatedConfig, samples: u64, seed: u64) -> Result<TallySet> {
    if samples == 0 {
        return Err(Error::ConstraintViolation("samples must be at least 1".into()));
    }
    let model = Model { arms: arm_transmittance(config.device(), config.channel()), device: *config.device(), source: *config.source() };
    let chunks = samples.div_ceil(CHUNK);
    let jobs: Vec<(Stratum, u64)> = Stratum::ALL.into_iter().flat_map(|s| (0..chunks).map(move |k| (s, k))).collect();
    let parts: Vec<(Stratum, Counter)> = jobs
        .into_par_iter()
        .map(|(stratum, k)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream_id(stratum, k));
            let n = CHUNK.min(samples - k * CHUNK);
            let mut c = Counter::default();
            for _ in 0..n {
                model.window(stratum, &mut rng, &mut c);
            }
            (stratum, c)
        })
        .collect();
    let mut counters = [Counter::default(); 7];
    for (stratum, c) in parts {
        counters[stratum.index()] = counters[stratum.index()].merge(c);
    }
    Ok(TallySet { counters })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Alice,
    Bob,
}

/// Effective-event rate when exactly one photon is sent down one arm.
pub fn simulate_single_photon(side: Side, arms: &ArmTransmittance, device: &DeviceParams, samples: u64, seed: u64) -> Result<f64> {
    if samples == 0 {
        return Err(Error::ConstraintViolation("samples must be at least 1".into()));
    }
    let eta = match side {
        Side::Alice => arms.eta_a,
        Side::Bob => arms.eta_b,
    };
    let d = device.dark_rate;
    let chunks = samples.div_ceil(CHUNK);
    let hits: u64 = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k);
            let n = CHUNK.min(samples - k * CHUNK);
            let mut hits = 0u64;
            for _ in 0..n {
                let arrives = rng.gen::<f64>() < eta;
                let to_left = rng.gen_bool(0.5);
                let left = (arrives && to_left) || rng.gen::<f64>() < d;
                let right = (arrives && !to_left) || rng.gen::<f64>() < d;
                if left != right {
                    hits += 1;
                }
            }
            hits
        })
        .sum();
    Ok(hits as f64 / samples as f64)
}

/// Outcome of one analytic-versus-simulated comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub quantity: &'static str,
    pub analytic: f64,
    pub empirical: f64,
    pub standard_error: f64,
    pub passed: bool,
}

impl Gate {
    fn binomial(quantity: &'static str, analytic: f64, empirical: f64, trials: f64, width: f64) -> Self {
        let standard_error = if trials > 0.0 { (analytic * (1.0 - analytic) / trials).sqrt() } else { f64::INFINITY };
        let deviation = (empirical - analytic).abs();
        let passed = deviation <= width * standard_error || (standard_error == 0.0 && deviation == 0.0);
        Self { quantity, analytic, empirical, standard_error, passed }
    }

    /// Deviation in units of the standard error.
    pub fn z_score(&self) -> f64 {
        if self.standard_error > 0.0 {
            (self.empirical - self.analytic) / self.standard_error
        } else if self.empirical == self.analytic {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Compares every simulated rate with its analytic value, allowing `width`
/// standard errors computed from the analytic probability.
pub fn compare(analytic: &ExpectedRates, tallies: &TallySet, width: f64) -> Vec<Gate> {
    let n = |s: Stratum| tallies.get(s).windows as f64;
    let signal = tallies.get(Stratum::Signal);
    let slice = tallies.get(Stratum::Slice);
    vec![
        Gate::binomial("s_vac", analytic.s_vac, tallies.counting_rate(Stratum::Vacuum), n(Stratum::Vacuum), width),
        Gate::binomial("s_a1_0", analytic.s_a1_0, tallies.counting_rate(Stratum::AliceDecoy1), n(Stratum::AliceDecoy1), width),
        Gate::binomial("s_a2_0", analytic.s_a2_0, tallies.counting_rate(Stratum::AliceDecoy2), n(Stratum::AliceDecoy2), width),
        Gate::binomial("s_0_b1", analytic.s_0_b1, tallies.counting_rate(Stratum::BobDecoy1), n(Stratum::BobDecoy1), width),
        Gate::binomial("s_0_b2", analytic.s_0_b2, tallies.counting_rate(Stratum::BobDecoy2), n(Stratum::BobDecoy2), width),
        Gate::binomial("s_z", analytic.s_z, tallies.counting_rate(Stratum::Signal), n(Stratum::Signal), width),
        Gate::binomial("e_z", analytic.e_z, tallies.e_z(), signal.effective as f64, width),
        Gate::binomial("t_delta", analytic.t_delta, tallies.t_delta(), slice.accepted as f64, width),
        Gate::binomial("s_delta", analytic.s_delta, tallies.s_delta(), slice.accepted as f64, width),
    ]
}
