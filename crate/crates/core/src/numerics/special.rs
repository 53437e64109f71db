//! Special functions evaluated without catastrophic cancellation.

use std::f64::consts::PI;

const SERIES_LIMIT: f64 = 30.0;

/// `I0(s) - 1` for the modified Bessel function of the first kind, order zero.
pub fn bessel_i0_minus_one(s: f64) -> f64 {
    let s = s.abs();
    if s > SERIES_LIMIT {
        return ln_bessel_i0(s).exp_m1();
    }
    // sum_{k>=1} (s^2/4)^k / (k!)^2, all terms positive
    let q = 0.25 * s * s;
    let mut term = 1.0;
    let mut sum = 0.0;
    let mut k = 1.0;
    loop {
        term *= q / (k * k);
        sum += term;
        if term <= sum * 1e-17 {
            break;
        }
        k += 1.0;
    }
    sum
}

/// Natural log of `I0(s)`.
pub fn ln_bessel_i0(s: f64) -> f64 {
    let s = s.abs();
    if s <= SERIES_LIMIT {
        return bessel_i0_minus_one(s).ln_1p();
    }
    // Hankel expansion: I0(s) ~ e^s / sqrt(2 pi s) * sum_k ((2k-1)!!)^2 / (k! (8s)^k)
    let mut term = 1.0_f64;
    let mut sum = 1.0;
    for k in 1..60 {
        let kf = k as f64;
        let next = term * (2.0 * kf - 1.0).powi(2) / (kf * 8.0 * s);
        if next >= term {
            break;
        }
        term = next;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    s - 0.5 * (2.0 * PI * s).ln() + sum.ln()
}

pub fn bessel_i0(s: f64) -> f64 {
    if s.abs() <= SERIES_LIMIT {
        1.0 + bessel_i0_minus_one(s)
    } else {
        ln_bessel_i0(s).exp()
    }
}

/// `e^u - 1 - u`.
pub fn exp_rem2(u: f64) -> f64 {
    if u.abs() < 0.5 {
        let mut term = u * u / 2.0;
        let mut sum = term;
        let mut n = 3.0;
        while term.abs() > 1e-18 * sum.abs() {
            term *= u / n;
            sum += term;
            n += 1.0;
        }
        sum
    } else {
        u.exp_m1() - u
    }
}

/// `q - ln(1 + q)` for `q > -1`.
pub fn log_rem2(q: f64) -> f64 {
    if q.abs() < 0.5 {
        // sum_{n>=2} (-1)^n q^n / n
        let mut power = q * q;
        let mut sum = 0.0;
        let mut n = 2.0;
        let mut sign = 1.0;
        loop {
            let term = sign * power / n;
            sum += term;
            if term.abs() <= 1e-18 * sum.abs() {
                break;
            }
            power *= q;
            sign = -sign;
            n += 1.0;
        }
        sum
    } else {
        q - q.ln_1p()
    }
}

/// Click probability `1 - (1 - d) e^{-I}` of a threshold detector with dark-count
/// probability `d` illuminated by coherent light of mean photon number `I`.
pub fn click_probability(intensity: f64, dark: f64) -> f64 {
    -((-dark).ln_1p() - intensity).exp_m1()
}
