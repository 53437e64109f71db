//! Input parameters, their invariants, and the flat `name = value` file format.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel;
use crate::error::{Error, Result};

const SIMPLEX_TOL: f64 = 1e-12;
const RATIO_TOL: f64 = 1e-9;

/// Fixed experimental parameters of the measurement station and fibre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    /// Total number of pulse pairs `N_t`.
    pub total_windows: f64,
    /// Misalignment error `e_d` in interference windows.
    pub misalignment: f64,
    /// Dark-count probability per detector per window.
    pub dark_rate: f64,
    pub detector_eff: f64,
    /// Error-correction inefficiency `f`.
    pub ec_inefficiency: f64,
    /// Failure probability `xi` of each parameter-estimation step.
    pub failure_prob: f64,
    /// Fibre loss in dB/km.
    pub attenuation: f64,
}

impl DeviceParams {
    /// The device set used for all published asymmetric-channel comparisons.
    pub fn reference() -> Self {
        Self {
            total_windows: 1e13,
            misalignment: 0.05,
            dark_rate: 1e-10,
            detector_eff: 0.5,
            ec_inefficiency: 1.1,
            failure_prob: 1e-10,
            attenuation: 0.2,
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.total_windows >= 1.0 && self.total_windows.is_finite()) {
            return violation(format!("total_windows = {} must be a finite count >= 1", self.total_windows));
        }
        check_probability("misalignment", self.misalignment)?;
        check_probability("dark_rate", self.dark_rate)?;
        check_probability("detector_eff", self.detector_eff)?;
        if !(self.ec_inefficiency >= 1.0 && self.ec_inefficiency.is_finite()) {
            return violation(format!("ec_inefficiency = {} must be >= 1", self.ec_inefficiency));
        }
        if !(self.failure_prob > 0.0 && self.failure_prob < 1.0) {
            return violation(format!("failure_prob = {} must lie in (0, 1)", self.failure_prob));
        }
        if !(self.attenuation >= 0.0 && self.attenuation.is_finite()) {
            return violation(format!("attenuation = {} must be >= 0", self.attenuation));
        }
        Ok(())
    }
}

impl Default for DeviceParams {
    fn default() -> Self {
        Self::reference()
    }
}

/// Fibre lengths from each user to the measurement station, plus optional
/// attenuators placed in front of the beam splitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelPair {
    pub len_a: f64,
    pub len_b: f64,
    pub extra_loss_a: f64,
    pub extra_loss_b: f64,
}

impl ChannelPair {
    pub fn new(len_a: f64, len_b: f64) -> Self {
        Self { len_a, len_b, extra_loss_a: 1.0, extra_loss_b: 1.0 }
    }

    pub fn check(&self) -> Result<()> {
        for (name, len) in [("len_a", self.len_a), ("len_b", self.len_b)] {
            if !(len >= 0.0 && len.is_finite()) {
                return violation(format!("{name} = {len} must be a finite length >= 0"));
            }
        }
        for (name, f) in [("extra_loss_a", self.extra_loss_a), ("extra_loss_b", self.extra_loss_b)] {
            if !(f > 0.0 && f <= 1.0) {
                return violation(format!("{name} = {f} must lie in (0, 1]"));
            }
        }
        Ok(())
    }
}

/// All tunable source-side parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceParams {
    pub sig_a: f64,
    pub sig_b: f64,
    pub dec_a1: f64,
    pub dec_a2: f64,
    pub dec_b1: f64,
    pub dec_b2: f64,
    pub send_a: f64,
    pub send_b: f64,
    pub pz_a: f64,
    pub pz_b: f64,
    pub px_a0: f64,
    pub px_a1: f64,
    pub px_a2: f64,
    pub px_b0: f64,
    pub px_b1: f64,
    pub px_b2: f64,
    /// Phase post-selection width `lambda` in `(0, 1]`.
    pub slice: f64,
    pub phase_offset: f64,
}

impl SourceParams {
    /// Identical settings on both sides.
    #[allow(clippy::too_many_arguments)]
    pub fn symmetric(sig: f64, dec1: f64, dec2: f64, send: f64, pz: f64, px0: f64, px1: f64, px2: f64, slice: f64) -> Self {
        Self {
            sig_a: sig,
            sig_b: sig,
            dec_a1: dec1,
            dec_a2: dec2,
            dec_b1: dec1,
            dec_b2: dec2,
            send_a: send,
            send_b: send,
            pz_a: pz,
            pz_b: pz,
            px_a0: px0,
            px_a1: px1,
            px_a2: px2,
            px_b0: px0,
            px_b1: px1,
            px_b2: px2,
            slice,
            phase_offset: 0.0,
        }
    }

    /// Copies Alice's settings onto Bob.
    pub fn mirror_alice(&self) -> Self {
        Self {
            sig_b: self.sig_a,
            dec_b1: self.dec_a1,
            dec_b2: self.dec_a2,
            send_b: self.send_a,
            pz_b: self.pz_a,
            px_b0: self.px_a0,
            px_b1: self.px_a1,
            px_b2: self.px_a2,
            ..*self
        }
    }

    /// Single-photon weight `eps_A (1 - eps_B) mu'_A e^{-mu'_A}` of Alice-only sending.
    pub fn single_photon_weight_a(&self) -> f64 {
        self.send_a * (1.0 - self.send_b) * self.sig_a * (-self.sig_a).exp()
    }

    pub fn single_photon_weight_b(&self) -> f64 {
        self.send_b * (1.0 - self.send_a) * self.sig_b * (-self.sig_b).exp()
    }

    /// Required value of `dec_a1 / dec_b1`.
    pub fn constraint_ratio(&self) -> f64 {
        self.single_photon_weight_a() / self.single_photon_weight_b()
    }

    fn check(&self) -> Result<()> {
        for (name, v) in [("sig_a", self.sig_a), ("sig_b", self.sig_b)] {
            if !(v > 0.0 && v.is_finite()) {
                return violation(format!("{name} = {v} must be a positive intensity"));
            }
        }
        for (name, v) in [("dec_a1", self.dec_a1), ("dec_a2", self.dec_a2), ("dec_b1", self.dec_b1), ("dec_b2", self.dec_b2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return violation(format!("{name} = {v} must be a non-negative intensity"));
            }
        }
        for (name, v) in [
            ("send_a", self.send_a),
            ("send_b", self.send_b),
            ("pz_a", self.pz_a),
            ("pz_b", self.pz_b),
            ("px_a0", self.px_a0),
            ("px_a1", self.px_a1),
            ("px_a2", self.px_a2),
            ("px_b0", self.px_b0),
            ("px_b1", self.px_b1),
            ("px_b2", self.px_b2),
        ] {
            check_probability(name, v)?;
        }
        let sum_a = self.pz_a + self.px_a0 + self.px_a1 + self.px_a2;
        if (sum_a - 1.0).abs() > SIMPLEX_TOL {
            return violation(format!("pz_a + px_a0 + px_a1 + px_a2 = {sum_a} must equal 1"));
        }
        let sum_b = self.pz_b + self.px_b0 + self.px_b1 + self.px_b2;
        if (sum_b - 1.0).abs() > SIMPLEX_TOL {
            return violation(format!("pz_b + px_b0 + px_b1 + px_b2 = {sum_b} must equal 1"));
        }
        if !(self.dec_a1 < self.dec_a2) {
            return violation(format!("dec_a1 = {} must be smaller than dec_a2 = {}", self.dec_a1, self.dec_a2));
        }
        if !(self.dec_b1 < self.dec_b2) {
            return violation(format!("dec_b1 = {} must be smaller than dec_b2 = {}", self.dec_b1, self.dec_b2));
        }
        if !(self.slice > 0.0 && self.slice <= 1.0) {
            return violation(format!("slice = {} must lie in (0, 1]", self.slice));
        }
        if self.phase_offset != 0.0 {
            return violation(format!("phase_offset = {} must be exactly 0", self.phase_offset));
        }
        for (name, v) in [("send_a", self.send_a), ("send_b", self.send_b)] {
            if !(v > 0.0 && v < 1.0) {
                return violation(format!("{name} = {v} must lie in (0, 1) for the intensity-ratio constraint"));
            }
        }
        let required = self.constraint_ratio();
        let actual = self.dec_a1 / self.dec_b1;
        if !(((actual - required) / required).abs() <= RATIO_TOL) {
            return violation(format!(
                "intensity-ratio constraint: dec_a1/dec_b1 = {actual} but the sending parameters require {required}"
            ));
        }
        Ok(())
    }

    fn first_asymmetry(&self) -> Option<&'static str> {
        let pairs = [
            ("sig", self.sig_a, self.sig_b),
            ("dec1", self.dec_a1, self.dec_b1),
            ("dec2", self.dec_a2, self.dec_b2),
            ("send", self.send_a, self.send_b),
            ("pz", self.pz_a, self.pz_b),
            ("px0", self.px_a0, self.px_b0),
            ("px1", self.px_a1, self.px_b1),
            ("px2", self.px_a2, self.px_b2),
        ];
        pairs.iter().find(|(_, a, b)| a != b).map(|(name, _, _)| *name)
    }
}

impl Default for SourceParams {
    fn default() -> Self {
        Self::symmetric(0.4, 0.05, 0.3, 0.03, 0.9, 0.03, 0.05, 0.02, 0.05)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolVariant {
    /// Symmetric sources, channels used as they are.
    Original,
    /// Symmetric sources; the stronger arm is attenuated to match the weaker one.
    Modified,
    /// Independent sources tied only by the intensity-ratio constraint.
    #[default]
    General,
}

impl ProtocolVariant {
    pub const ALL: [ProtocolVariant; 3] = [ProtocolVariant::General, ProtocolVariant::Modified, ProtocolVariant::Original];

    pub fn is_symmetric(self) -> bool {
        !matches!(self, ProtocolVariant::General)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolVariant::Original => "original",
            ProtocolVariant::Modified => "modified",
            ProtocolVariant::General => "general",
        }
    }
}

impl fmt::Display for ProtocolVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProtocolVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "original" => Ok(ProtocolVariant::Original),
            "modified" => Ok(ProtocolVariant::Modified),
            "general" => Ok(ProtocolVariant::General),
            other => violation(format!("unknown protocol variant `{other}` (expected original, modified or general)")),
        }
    }
}

/// Composable-security budget of the finite-key analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecurityCoefficients {
    pub eps_cor: f64,
    pub eps_hat: f64,
    pub eps_pa: f64,
    pub eps_bar: f64,
    pub eps_n1: f64,
    pub eps_sec: f64,
    pub eps_tot: f64,
}

impl SecurityCoefficients {
    /// Allocation with `eps_cor = eps_hat = eps_pa = xi`.
    ///
    /// The phase-error estimate consumes three Chernoff steps and the
    /// single-photon count six, hence `eps_bar = 3 xi` and `eps_n1 = 6 xi`.
    pub fn from_failure_prob(xi: f64) -> Self {
        Self::new(xi, xi, xi, 3.0 * xi, 6.0 * xi)
    }

    pub fn new(eps_cor: f64, eps_hat: f64, eps_pa: f64, eps_bar: f64, eps_n1: f64) -> Self {
        let eps_sec = 2.0 * eps_hat + 4.0 * eps_bar + eps_pa + eps_n1;
        Self { eps_cor, eps_hat, eps_pa, eps_bar, eps_n1, eps_sec, eps_tot: eps_cor + eps_sec }
    }
}

/// A configuration whose every invariant has been checked.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValidatedConfig {
    device: DeviceParams,
    channel: ChannelPair,
    source: SourceParams,
    variant: ProtocolVariant,
}

impl ValidatedConfig {
    pub fn device(&self) -> &DeviceParams {
        &self.device
    }

    /// Channel as seen by the model; for the modified variant the extra-loss
    /// factors already equalize the arms.
    pub fn channel(&self) -> &ChannelPair {
        &self.channel
    }

    pub fn source(&self) -> &SourceParams {
        &self.source
    }

    pub fn variant(&self) -> ProtocolVariant {
        self.variant
    }

    pub fn security(&self) -> SecurityCoefficients {
        SecurityCoefficients::from_failure_prob(self.device.failure_prob)
    }
}

pub fn validate(device: DeviceParams, channel: ChannelPair, source: SourceParams, variant: ProtocolVariant) -> Result<ValidatedConfig> {
    device.check()?;
    channel.check()?;
    source.check()?;
    if variant.is_symmetric() {
        if let Some(field) = source.first_asymmetry() {
            return Err(Error::AsymmetricParamsForSymmetricVariant { variant: variant.to_string(), field });
        }
    }
    let channel = match variant {
        ProtocolVariant::Modified => channel::equalized_channel(&device, &channel),
        _ => channel,
    };
    Ok(ValidatedConfig { device, channel, source, variant })
}

/// Overwrites `dec_b1` so that the intensity-ratio constraint holds exactly for
/// the first decoy pair. `dec_b2` is untouched; only the first pair enters the
/// phase-error estimate.
pub fn bind_constrained_intensity(source: &SourceParams) -> Result<SourceParams> {
    let weight_a = source.single_photon_weight_a();
    if weight_a == 0.0 || !weight_a.is_finite() {
        return Err(Error::DivisionByZero("intensity-ratio constraint (Alice single-photon weight)"));
    }
    let dec_b1 = source.dec_a1 * source.single_photon_weight_b() / weight_a;
    Ok(SourceParams { dec_b1, ..*source })
}

/// Parameters for one run, before validation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RunConfig {
    pub device: DeviceParams,
    pub channel: ChannelPair,
    pub source: SourceParams,
    pub variant: ProtocolVariant,
}

impl Default for ChannelPair {
    fn default() -> Self {
        Self::new(0.0, 50.0)
    }
}

/// Keys accepted in configuration files and as CLI overrides.
pub const FIELD_NAMES: [&str; 30] = [
    "total_windows",
    "misalignment",
    "dark_rate",
    "detector_eff",
    "ec_inefficiency",
    "failure_prob",
    "attenuation",
    "len_a",
    "len_b",
    "extra_loss_a",
    "extra_loss_b",
    "sig_a",
    "sig_b",
    "dec_a1",
    "dec_a2",
    "dec_b1",
    "dec_b2",
    "send_a",
    "send_b",
    "pz_a",
    "pz_b",
    "px_a0",
    "px_a1",
    "px_a2",
    "px_b0",
    "px_b1",
    "px_b2",
    "slice",
    "phase_offset",
    "variant",
];

impl RunConfig {
    pub fn validate(&self) -> Result<ValidatedConfig> {
        validate(self.device, self.channel, self.source, self.variant)
    }

    fn slot(&mut self, name: &str) -> Option<&mut f64> {
        let d = &mut self.device;
        let c = &mut self.channel;
        let s = &mut self.source;
        Some(match name {
            "total_windows" => &mut d.total_windows,
            "misalignment" => &mut d.misalignment,
            "dark_rate" => &mut d.dark_rate,
            "detector_eff" => &mut d.detector_eff,
            "ec_inefficiency" => &mut d.ec_inefficiency,
            "failure_prob" => &mut d.failure_prob,
            "attenuation" => &mut d.attenuation,
            "len_a" => &mut c.len_a,
            "len_b" => &mut c.len_b,
            "extra_loss_a" => &mut c.extra_loss_a,
            "extra_loss_b" => &mut c.extra_loss_b,
            "sig_a" => &mut s.sig_a,
            "sig_b" => &mut s.sig_b,
            "dec_a1" => &mut s.dec_a1,
            "dec_a2" => &mut s.dec_a2,
            "dec_b1" => &mut s.dec_b1,
            "dec_b2" => &mut s.dec_b2,
            "send_a" => &mut s.send_a,
            "send_b" => &mut s.send_b,
            "pz_a" => &mut s.pz_a,
            "pz_b" => &mut s.pz_b,
            "px_a0" => &mut s.px_a0,
            "px_a1" => &mut s.px_a1,
            "px_a2" => &mut s.px_a2,
            "px_b0" => &mut s.px_b0,
            "px_b1" => &mut s.px_b1,
            "px_b2" => &mut s.px_b2,
            "slice" => &mut s.slice,
            "phase_offset" => &mut s.phase_offset,
            _ => return None,
        })
    }

    /// Sets one field from its textual value.
    pub fn set(&mut self, name: &str, value: &str) -> Result<()> {
        if name == "variant" {
            self.variant = value.parse()?;
            return Ok(());
        }
        let parsed: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::ConstraintViolation(format!("{name}: `{}` is not a number", value.trim())))?;
        match self.slot(name) {
            Some(slot) => {
                *slot = parsed;
                Ok(())
            }
            None => violation(format!("unknown configuration key `{name}`")),
        }
    }

    /// Reads `name = value` lines on top of the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (name, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: idx + 1,
                message: format!("expected `name = value`, found `{line}`"),
            })?;
            cfg.set(name.trim(), value).map_err(|e| Error::Parse { line: idx + 1, message: e.to_string() })?;
        }
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut copy = *self;
        let mut out = String::new();
        for name in FIELD_NAMES {
            if name == "variant" {
                out.push_str(&format!("variant = {}\n", self.variant));
            } else {
                let v = *copy.slot(name).expect("every listed field has a slot");
                out.push_str(&format!("{name} = {v:?}\n"));
            }
        }
        out
    }
}

impl From<&ValidatedConfig> for RunConfig {
    fn from(v: &ValidatedConfig) -> Self {
        RunConfig { device: v.device, channel: v.channel, source: v.source, variant: v.variant }
    }
}

fn check_probability(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v <= 1.0 {
        Ok(())
    } else {
        violation(format!("probability out of range: {name} = {v} not in [0, 1]"))
    }
}

fn violation<T>(msg: String) -> Result<T> {
    Err(Error::ConstraintViolation(msg))
}
