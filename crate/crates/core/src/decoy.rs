//! Four-intensity decoy-state bounds on the single-photon yield and the
//! single-photon phase-flip error rate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower and upper bound on an expected rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    /// Both ends at `v`; used when the exact expectation is known.
    pub fn exact(v: f64) -> Self {
        Self { lower: v, upper: v }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoyInputs {
    pub s00: Interval,
    pub s_a1_0: Interval,
    pub s_a2_0: Interval,
    pub s_0_b1: Interval,
    pub s_0_b2: Interval,
    pub t_delta: Interval,
    pub dec_a1: f64,
    pub dec_a2: f64,
    pub dec_b1: f64,
    pub dec_b2: f64,
}

impl DecoyInputs {
    pub fn check(&self) -> Result<()> {
        let pairs = [
            ("s00", self.s00),
            ("s_a1_0", self.s_a1_0),
            ("s_a2_0", self.s_a2_0),
            ("s_0_b1", self.s_0_b1),
            ("s_0_b2", self.s_0_b2),
            ("t_delta", self.t_delta),
        ];
        if let Some((name, _)) = pairs.iter().find(|(_, iv)| !(iv.lower <= iv.upper)) {
            return Err(Error::ConstraintViolation(format!("bound pair {name} has lower > upper")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub s1z_lower: f64,
    pub s10_lower: f64,
    pub s01_lower: f64,
    pub e1ph_upper: f64,
}

fn single_side_raw(mu1: f64, mu2: f64, s1: Interval, s2: Interval, s00: Interval) -> Result<f64> {
    if mu1 == 0.0 {
        return Err(Error::DegenerateIntensities("weaker decoy intensity is zero"));
    }
    if !(mu2 > mu1) {
        return Err(Error::DegenerateIntensities("decoy intensities must satisfy mu1 < mu2"));
    }
    let numerator = mu2 * mu2 * mu1.exp() * s1.lower - mu1 * mu1 * mu2.exp() * s2.upper - (mu2 * mu2 - mu1 * mu1) * s00.upper;
    Ok(numerator / (mu1 * mu2 * (mu2 - mu1)))
}

/// Unclamped value of [`s10_lower`]; negative when the data carry no single-photon evidence.
pub fn s10_lower_raw(inputs: &DecoyInputs) -> Result<f64> {
    single_side_raw(inputs.dec_a1, inputs.dec_a2, inputs.s_a1_0, inputs.s_a2_0, inputs.s00)
}

pub fn s01_lower_raw(inputs: &DecoyInputs) -> Result<f64> {
    single_side_raw(inputs.dec_b1, inputs.dec_b2, inputs.s_0_b1, inputs.s_0_b2, inputs.s00)
}

/// Lower bound on the yield of windows where only Alice emits one photon.
pub fn s10_lower(inputs: &DecoyInputs) -> Result<f64> {
    s10_lower_raw(inputs).map(|v| v.max(0.0))
}

pub fn s01_lower(inputs: &DecoyInputs) -> Result<f64> {
    s01_lower_raw(inputs).map(|v| v.max(0.0))
}

pub fn s1z_lower(s10: f64, s01: f64, dec_a1: f64, dec_b1: f64) -> Result<f64> {
    let total = dec_a1 + dec_b1;
    if !(total > 0.0) {
        return Err(Error::DivisionByZero("s1z_lower: dec_a1 + dec_b1"));
    }
    Ok((dec_a1 * s10 + dec_b1 * s01) / total)
}

/// Unclamped phase-flip ratio.
pub fn e1ph_ratio(t_delta_upper: f64, s00_lower: f64, s1z_lower: f64, dec_a1: f64, dec_b1: f64) -> Result<f64> {
    if !(s1z_lower > 0.0) {
        return Err(Error::ZeroYield);
    }
    let total = dec_a1 + dec_b1;
    let vac = (-total).exp();
    Ok((t_delta_upper - vac * s00_lower / 2.0) / (vac * total * s1z_lower))
}

pub fn e1ph_upper(t_delta_upper: f64, s00_lower: f64, s1z_lower: f64, dec_a1: f64, dec_b1: f64) -> Result<f64> {
    e1ph_ratio(t_delta_upper, s00_lower, s1z_lower, dec_a1, dec_b1).map(|e| e.clamp(0.0, 0.5))
}

pub fn estimate(inputs: &DecoyInputs) -> Result<EstimationResult> {
    inputs.check()?;
    let s10 = s10_lower(inputs)?;
    let s01 = s01_lower(inputs)?;
    let s1z = s1z_lower(s10, s01, inputs.dec_a1, inputs.dec_b1)?;
    let e1 = e1ph_upper(inputs.t_delta.upper, inputs.s00.lower, s1z, inputs.dec_a1, inputs.dec_b1)?;
    Ok(EstimationResult { s1z_lower: s1z, s10_lower: s10, s01_lower: s01, e1ph_upper: e1 })
}
