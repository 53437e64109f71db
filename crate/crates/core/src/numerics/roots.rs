//! Bracketed bisection for monotone scalar equations.

use crate::error::{Error, Result};

const MAX_EXPANSIONS: usize = 2100;
const MAX_BISECTIONS: usize = 400;

/// Finds `t > 0` with `g(t) = 0` for `g` non-decreasing on `[0, inf)` and `g(0) < 0`.
///
/// The bracket is grown or shrunk geometrically around `guess`, then bisected
/// until its relative width falls below `rel_width`.
pub fn bisect_increasing<G: Fn(f64) -> f64>(g: G, guess: f64, rel_width: f64) -> Result<f64> {
    let guess = if guess.is_finite() && guess > 0.0 { guess } else { 1.0 };
    let (mut lo, mut hi);
    if g(guess) < 0.0 {
        lo = guess;
        hi = 2.0 * guess;
        let mut n = 0;
        while g(hi) < 0.0 {
            lo = hi;
            hi *= 2.0;
            n += 1;
            if n > MAX_EXPANSIONS || !hi.is_finite() {
                return Err(Error::NonConvergence(format!("no upper bracket found above {lo:e}")));
            }
        }
    } else {
        hi = guess;
        lo = 0.5 * guess;
        let mut n = 0;
        while g(lo) >= 0.0 {
            hi = lo;
            lo *= 0.5;
            n += 1;
            if n > MAX_EXPANSIONS || lo < f64::MIN_POSITIVE {
                lo = 0.0;
                break;
            }
        }
    }
    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= rel_width * hi {
            return Ok(0.5 * (lo + hi));
        }
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NonConvergence(format!("bracket [{lo:e}, {hi:e}] did not shrink")))
}
