//! Multi-start Nelder–Mead search over source parameters.
//!
//! The search runs in an unconstrained space: bounded intensities and the
//! slice width through a log-scaled logistic, send probabilities through a
//! logistic, and each user's four window probabilities through a floored
//! softmax with the vacuum logit pinned at zero. Bob's weaker decoy is never
//! a free coordinate: it is bound by the intensity-ratio constraint (General)
//! or mirrored from Alice (symmetric variants).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::arm_transmittance;
use crate::config::{bind_constrained_intensity, validate, ChannelPair, DeviceParams, ProtocolVariant, SourceParams};
use crate::error::{Error, Result};
use crate::keyrate::{binary_entropy, evaluate_detailed, Evaluation, KeyRateReport};

const INFEASIBLE: f64 = 1e100;
const NO_KEY_OFFSET: f64 = 800.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl Bounds {
    pub const fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    fn log_span(&self) -> (f64, f64) {
        (self.lower.ln(), self.upper.ln() - self.lower.ln())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub signal: Bounds,
    pub intensity: Bounds,
    pub probability: Bounds,
    pub slice: Bounds,
    pub restarts: usize,
    pub evaluations_per_restart: usize,
    pub start_pool: usize,
    /// Relative rate spread at which a simplex counts as converged.
    pub tolerance: f64,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            signal: Bounds::new(1e-3, 1.0),
            intensity: Bounds::new(1e-6, 1.0),
            probability: Bounds::new(1e-6, 1.0 - 1e-6),
            slice: Bounds::new(1e-4, 1.0),
            restarts: 8,
            evaluations_per_restart: 2000,
            start_pool: 4000,
            tolerance: 1e-3,
        }
    }
}

const GENERAL_FREE: [&str; 14] = [
    "sig_a", "sig_b", "dec_a1", "dec_a2", "dec_b2", "send_a", "send_b", "pz_a", "pz_b", "px_a1", "px_a2", "px_b1", "px_b2", "slice",
];
const SYMMETRIC_FREE: [&str; 8] = ["sig_a", "dec_a1", "dec_a2", "send_a", "pz_a", "px_a1", "px_a2", "slice"];

impl SearchSpace {
    pub fn check(&self) -> Result<()> {
        let all = [("signal", self.signal), ("intensity", self.intensity), ("probability", self.probability), ("slice", self.slice)];
        for (name, b) in all {
            if !(b.lower > 0.0 && b.lower < b.upper && b.upper <= 1.0) {
                return Err(Error::ConstraintViolation(format!("search bounds for {name} must satisfy 0 < lower < upper <= 1")));
            }
        }
        if self.restarts == 0 || self.evaluations_per_restart == 0 {
            return Err(Error::ConstraintViolation("search needs at least one restart and one evaluation".into()));
        }
        Ok(())
    }

    /// Parameters the search moves; the rest are derived or frozen.
    pub fn free_parameters(variant: ProtocolVariant) -> &'static [&'static str] {
        if variant.is_symmetric() {
            &SYMMETRIC_FREE
        } else {
            &GENERAL_FREE
        }
    }

    pub fn dimension(variant: ProtocolVariant) -> usize {
        Self::free_parameters(variant).len()
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-15, 1.0 - 1e-15);
    (p / (1.0 - p)).ln()
}

fn log_logistic(z: f64, b: Bounds) -> f64 {
    let (base, span) = b.log_span();
    (base + span * sigmoid(z)).exp().clamp(b.lower, b.upper)
}

fn inv_log_logistic(v: f64, b: Bounds) -> f64 {
    let (base, span) = b.log_span();
    logit((v.clamp(b.lower, b.upper).ln() - base) / span)
}

fn logistic(z: f64, b: Bounds) -> f64 {
    b.lower + (b.upper - b.lower) * sigmoid(z)
}

fn inv_logistic(v: f64, b: Bounds) -> f64 {
    logit((v - b.lower) / (b.upper - b.lower))
}

/// `[pz, px1, px2, px0]` from three logits.
fn floored_softmax(z: [f64; 3], floor: f64) -> [f64; 4] {
    let logits = [z[0], z[1], z[2], 0.0];
    let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w = logits.map(|l| (l - top).exp());
    let total: f64 = w.iter().sum();
    let scale = 1.0 - 4.0 * floor;
    let mut p = w.map(|wi| floor + scale * wi / total);
    // absorb rounding into the largest entry so the four sum to one
    let sum: f64 = p.iter().sum();
    let (imax, _) = p.iter().enumerate().fold((0, 0.0), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    p[imax] += 1.0 - sum;
    p
}

fn inv_floored_softmax(p: [f64; 4], floor: f64) -> [f64; 3] {
    let scale = 1.0 - 4.0 * floor;
    let q = p.map(|v| ((v - floor) / scale).max(1e-300));
    [(q[0] / q[3]).ln(), (q[1] / q[3]).ln(), (q[2] / q[3]).ln()]
}

/// Map between search coordinates and source parameters for one variant.
#[derive(Debug, Clone)]
pub struct Transform {
    variant: ProtocolVariant,
    space: SearchSpace,
}

impl Transform {
    pub fn new(variant: ProtocolVariant, space: &SearchSpace) -> Self {
        Self { variant, space: space.clone() }
    }

    pub fn dimension(&self) -> usize {
        SearchSpace::dimension(self.variant)
    }

    fn upper_decoy(&self, z: f64, dec1: f64) -> f64 {
        dec1 + (self.space.intensity.upper - dec1) * sigmoid(z)
    }

    fn inv_upper_decoy(&self, dec2: f64, dec1: f64) -> f64 {
        logit((dec2 - dec1) / (self.space.intensity.upper - dec1))
    }

    /// Candidate parameters for coordinates `z`, with Bob's weaker decoy
    /// already bound or mirrored. `None` when the bound intensity leaves its range.
    pub fn decode(&self, z: &[f64]) -> Option<SourceParams> {
        let sp = &self.space;
        let floor = sp.probability.lower;
        if self.variant.is_symmetric() {
            let sig = log_logistic(z[0], sp.signal);
            let dec1 = log_logistic(z[1], sp.intensity);
            let dec2 = self.upper_decoy(z[2], dec1);
            let send = logistic(z[3], sp.probability);
            let [pz, px1, px2, px0] = floored_softmax([z[4], z[5], z[6]], floor);
            let slice = log_logistic(z[7], sp.slice);
            if !(dec2 > dec1) {
                return None;
            }
            return Some(SourceParams::symmetric(sig, dec1, dec2, send, pz, px0, px1, px2, slice));
        }
        let dec_a1 = log_logistic(z[2], sp.intensity);
        let [pz_a, px_a1, px_a2, px_a0] = floored_softmax([z[7], z[9], z[10]], floor);
        let [pz_b, px_b1, px_b2, px_b0] = floored_softmax([z[8], z[11], z[12]], floor);
        let partial = SourceParams {
            sig_a: log_logistic(z[0], sp.signal),
            sig_b: log_logistic(z[1], sp.signal),
            dec_a1,
            dec_a2: self.upper_decoy(z[3], dec_a1),
            dec_b1: dec_a1,
            dec_b2: log_logistic(z[4], sp.intensity),
            send_a: logistic(z[5], sp.probability),
            send_b: logistic(z[6], sp.probability),
            pz_a,
            pz_b,
            px_a0,
            px_a1,
            px_a2,
            px_b0,
            px_b1,
            px_b2,
            slice: log_logistic(z[13], sp.slice),
            phase_offset: 0.0,
        };
        let bound = bind_constrained_intensity(&partial).ok()?;
        let feasible = bound.dec_b1 >= sp.intensity.lower && bound.dec_b1 <= sp.intensity.upper && bound.dec_b1 < bound.dec_b2 && bound.dec_a1 < bound.dec_a2;
        feasible.then_some(bound)
    }

    pub fn encode(&self, p: &SourceParams) -> Vec<f64> {
        let sp = &self.space;
        let floor = sp.probability.lower;
        let za = inv_floored_softmax([p.pz_a, p.px_a1, p.px_a2, p.px_a0], floor);
        let slice = inv_log_logistic(p.slice, sp.slice);
        if self.variant.is_symmetric() {
            return vec![
                inv_log_logistic(p.sig_a, sp.signal),
                inv_log_logistic(p.dec_a1, sp.intensity),
                self.inv_upper_decoy(p.dec_a2, p.dec_a1),
                inv_logistic(p.send_a, sp.probability),
                za[0],
                za[1],
                za[2],
                slice,
            ];
        }
        let zb = inv_floored_softmax([p.pz_b, p.px_b1, p.px_b2, p.px_b0], floor);
        vec![
            inv_log_logistic(p.sig_a, sp.signal),
            inv_log_logistic(p.sig_b, sp.signal),
            inv_log_logistic(p.dec_a1, sp.intensity),
            self.inv_upper_decoy(p.dec_a2, p.dec_a1),
            inv_log_logistic(p.dec_b2, sp.intensity),
            inv_logistic(p.send_a, sp.probability),
            inv_logistic(p.send_b, sp.probability),
            za[0],
            zb[0],
            za[1],
            za[2],
            zb[1],
            zb[2],
            slice,
        ]
    }
}

/// Value minimized by the search: `-ln R` for positive rates, otherwise a
/// number above 800 that falls as the candidate approaches positive key.
pub fn objective(eval: &Evaluation) -> f64 {
    let r = &eval.report;
    if r.rate_per_window > 0.0 {
        return -r.rate_per_window.ln();
    }
    let gain = if eval.s1z_raw <= 0.0 {
        eval.single_photon_windows * eval.s1z_raw
    } else {
        let privacy = r.n1 * (1.0 - binary_entropy(r.e1ph.clamp(0.0, 0.5)).unwrap_or(1.0));
        if privacy > 0.0 {
            privacy
        } else {
            (1.0 - 2.0 * eval.e1ph_decoy) * eval.single_photon_windows * r.s1z_lower * 1e-3
        }
    };
    let ratio = gain / eval.cost;
    NO_KEY_OFFSET + (1.0 - ratio.min(1.0))
}

/// Everything the search needs to score a candidate.
struct Problem<'a, O> {
    device: DeviceParams,
    channel: ChannelPair,
    variant: ProtocolVariant,
    transform: Transform,
    observer: &'a O,
}

impl<O: Fn(&SourceParams) + Sync> Problem<'_, O> {
    fn evaluate(&self, z: &[f64]) -> (f64, Option<KeyRateReport>) {
        let Some(params) = self.transform.decode(z) else {
            return (INFEASIBLE, None);
        };
        (self.observer)(&params);
        let Ok(cfg) = validate(self.device, self.channel, params, self.variant) else {
            return (INFEASIBLE, None);
        };
        match evaluate_detailed(&cfg) {
            Ok(eval) => (objective(&eval), Some(eval.report)),
            Err(_) => (INFEASIBLE, None),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizeOutcome {
    pub best: KeyRateReport,
    pub evaluations: usize,
    pub restarts: usize,
    pub converged: bool,
    pub objective: f64,
}

impl OptimizeOutcome {
    /// True when no probed candidate produced key, i.e. the distance is past cutoff.
    pub fn no_positive_rate(&self) -> bool {
        self.best.rate_per_window <= 0.0
    }
}

struct Point {
    z: Vec<f64>,
    f: f64,
    report: Option<KeyRateReport>,
}

struct LocalResult {
    best: Point,
    evaluations: usize,
    converged: bool,
}

/// Adaptive Nelder–Mead from `start`, restarted with a fresh simplex around
/// the incumbent until the budget runs out or a restart stops improving.
fn local_search<O: Fn(&SourceParams) + Sync>(problem: &Problem<O>, start: Point, budget: usize, tol: f64, rng: &mut ChaCha8Rng) -> LocalResult {
    let n = start.z.len();
    let nf = n as f64;
    let (alpha, gamma, rho, shrink) = (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf);
    let mut used = 0usize;
    let mut best = start;
    let mut converged = false;
    let eval = |z: Vec<f64>, used: &mut usize| {
        *used += 1;
        let (f, report) = problem.evaluate(&z);
        Point { z, f, report }
    };
    while used + n + 1 <= budget {
        let leg_start = best.f;
        let mut simplex: Vec<Point> = Vec::with_capacity(n + 1);
        for i in 0..n {
            let mut z = best.z.clone();
            z[i] += rng.gen_range(0.3..0.8) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            simplex.push(eval(z, &mut used));
        }
        simplex.push(Point { z: best.z.clone(), f: best.f, report: best.report });
        let mut leg_converged = false;
        while used < budget {
            simplex.sort_by(|a, b| a.f.total_cmp(&b.f));
            let spread = simplex[n].f - simplex[0].f;
            if spread <= tol {
                leg_converged = true;
                break;
            }
            let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|p| p.z[j]).sum::<f64>() / nf).collect();
            let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&simplex[n].z).map(|(c, w)| c + t * (c - w)).collect() };
            let reflected = eval(along(alpha), &mut used);
            if reflected.f < simplex[0].f {
                let expanded = eval(along(alpha * gamma), &mut used);
                simplex[n] = if expanded.f < reflected.f { expanded } else { reflected };
                continue;
            }
            if reflected.f < simplex[n - 1].f {
                simplex[n] = reflected;
                continue;
            }
            let contracted = if reflected.f < simplex[n].f {
                eval(along(alpha * rho), &mut used)
            } else {
                eval(along(-rho), &mut used)
            };
            if contracted.f < reflected.f.min(simplex[n].f) {
                simplex[n] = contracted;
                continue;
            }
            let anchor = simplex[0].z.clone();
            for p in simplex.iter_mut().skip(1) {
                if used >= budget {
                    break;
                }
                let z = anchor.iter().zip(&p.z).map(|(a, x)| a + shrink * (x - a)).collect();
                *p = eval(z, &mut used);
            }
        }
        let leg_best = simplex.into_iter().min_by(|a, b| a.f.total_cmp(&b.f)).expect("simplex is non-empty");
        if leg_best.f < best.f {
            best = leg_best;
        }
        converged = leg_converged;
        if leg_start - best.f < 1e-9 {
            break;
        }
    }
    LocalResult { best, evaluations: used, converged }
}

fn heuristic_starts(device: &DeviceParams, channel: &ChannelPair, variant: ProtocolVariant) -> Vec<SourceParams> {
    let arms = arm_transmittance(device, channel);
    let sym = SourceParams::symmetric(0.45, 0.01, 0.4, 0.03, 0.88, 0.035, 0.08, 0.005, 0.015);
    let mut starts = vec![SourceParams::default(), sym];
    if !variant.is_symmetric() {
        let send_b = 0.05;
        let ratio = (arms.eta_b / arms.eta_a).clamp(0.01, 100.0);
        let mut balanced = sym;
        let (send_a, send_b) = if ratio <= 1.0 { (send_b * ratio, send_b) } else { (send_b, send_b / ratio) };
        balanced.send_a = send_a.max(1e-4);
        balanced.send_b = send_b.max(1e-4);
        starts.push(balanced);
        starts.push(SourceParams {
            sig_a: 0.22,
            sig_b: 0.67,
            dec_a1: 0.0066,
            dec_a2: 0.38,
            dec_b2: 0.41,
            send_a: 0.0115,
            send_b: 0.0515,
            pz_a: 0.891,
            pz_b: 0.891,
            px_a1: 0.0771,
            px_a2: 0.0007,
            px_a0: 1.0 - 0.891 - 0.0771 - 0.0007,
            px_b1: 0.0778,
            px_b2: 0.0062,
            px_b0: 1.0 - 0.891 - 0.0778 - 0.0062,
            slice: 0.0135,
            ..sym
        });
    }
    starts
}

/// Maximizes the key rate over the free parameters of `variant`.
pub fn optimize(device: &DeviceParams, channel: &ChannelPair, variant: ProtocolVariant, space: &SearchSpace, seed: u64) -> Result<OptimizeOutcome> {
    optimize_observed(device, channel, variant, space, seed, None, &|_: &SourceParams| {})
}

/// [`optimize`] with an optional warm start and a hook that sees every
/// candidate handed to the key-rate pipeline.
pub fn optimize_observed<O: Fn(&SourceParams) + Sync>(
    device: &DeviceParams,
    channel: &ChannelPair,
    variant: ProtocolVariant,
    space: &SearchSpace,
    seed: u64,
    warm_start: Option<&SourceParams>,
    observer: &O,
) -> Result<OptimizeOutcome> {
    space.check()?;
    device.check()?;
    channel.check()?;
    let transform = Transform::new(variant, space);
    let problem = Problem { device: *device, channel: *channel, variant, transform: transform.clone(), observer };
    let dim = transform.dimension();

    let mut pool_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut candidates: Vec<Vec<f64>> = heuristic_starts(device, channel, variant)
        .iter()
        .chain(warm_start)
        .map(|p| transform.encode(p))
        .collect();
    candidates.extend((0..space.start_pool).map(|_| (0..dim).map(|_| pool_rng.gen_range(-6.0..6.0)).collect()));
    let mut scored: Vec<Point> = candidates
        .into_par_iter()
        .map(|z| {
            let (f, report) = problem.evaluate(&z);
            Point { z, f, report }
        })
        .collect();
    let pool_evaluations = scored.len();
    scored.sort_by(|a, b| a.f.total_cmp(&b.f));
    scored.dedup_by(|a, b| a.z == b.z);
    scored.truncate(space.restarts);

    let results: Vec<LocalResult> = scored
        .into_par_iter()
        .enumerate()
        .map(|(i, start)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            local_search(&problem, start, space.evaluations_per_restart, space.tolerance, &mut rng)
        })
        .collect();
    let restarts = results.len();
    let evaluations = pool_evaluations + results.iter().map(|r| r.evaluations).sum::<usize>();
    let winner = results.into_iter().min_by(|a, b| a.best.f.total_cmp(&b.best.f));
    let (best, objective, converged) = match winner {
        Some(LocalResult { best: Point { report: Some(report), f, .. }, converged, .. }) => (report, f, converged || report.rate_per_window == 0.0),
        _ => {
            let fallback = SourceParams::default();
            let cfg = validate(*device, *channel, fallback, variant)?;
            (crate::keyrate::evaluate(&cfg)?, INFEASIBLE, true)
        }
    };
    Ok(OptimizeOutcome { best, evaluations, restarts, converged, objective })
}

/// One optimization per `L_A` with `L_B = L_A + delta_km`, each warm-started
/// from the previous optimum.
pub fn scan(device: &DeviceParams, variant: ProtocolVariant, delta_km: f64, la_grid: &[f64], space: &SearchSpace, seed: u64) -> Result<Vec<OptimizeOutcome>> {
    if la_grid.is_empty() {
        return Err(Error::ConstraintViolation("scan grid is empty".into()));
    }
    let mut out: Vec<OptimizeOutcome> = Vec::with_capacity(la_grid.len());
    for &la in la_grid {
        let channel = ChannelPair::new(la, la + delta_km);
        let warm = out.last().filter(|o| !o.no_positive_rate()).map(|o| o.best.params);
        let outcome = optimize_observed(device, &channel, variant, space, seed, warm.as_ref(), &|_: &SourceParams| {})?;
        out.push(outcome);
    }
    Ok(out)
}
