//! Log-gamma, polygamma and incomplete gamma functions.
//!
//! Small arguments are shifted upward by recurrence until an asymptotic
//! series converges to machine precision.

use crate::quadrature::{integrate, QuadOptions};

const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_8;

/// Bernoulli numbers B_2, B_4, ..., B_16.
const BERNOULLI_EVEN: [f64; 8] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
];

const STIRLING_SHIFT: f64 = 15.0;
const DIGAMMA_SHIFT: f64 = 12.0;

/// Remainder of Stirling's formula for x >= STIRLING_SHIFT.
fn stirling_series(z: f64) -> f64 {
    let z2 = 1.0 / (z * z);
    let mut acc = 0.0;
    for k in (1..=7).rev() {
        let b = BERNOULLI_EVEN[k - 1];
        let kf = k as f64;
        acc = acc * z2 + b / (2.0 * kf * (2.0 * kf - 1.0));
    }
    acc / z
}

/// ln Γ(x) for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    if x.is_nan() || x <= 0.0 {
        return f64::NAN;
    }
    if x.is_infinite() {
        return f64::INFINITY;
    }
    if x >= STIRLING_SHIFT {
        return (x - 0.5) * x.ln() - x + HALF_LN_TWO_PI + stirling_series(x);
    }
    let mut z = x;
    let mut prod = 1.0;
    while z < STIRLING_SHIFT {
        prod *= z;
        z += 1.0;
    }
    ln_gamma(z) - prod.ln()
}

/// Stirling remainder ln Γ(x) − [(x − ½) ln x − x + ½ ln 2π].
pub fn stirling_correction(x: f64) -> f64 {
    if x >= STIRLING_SHIFT {
        stirling_series(x)
    } else {
        ln_gamma(x) - ((x - 0.5) * x.ln() - x + HALF_LN_TWO_PI)
    }
}

/// Digamma ψ(x) for x > 0.
pub fn digamma(x: f64) -> f64 {
    if x.is_nan() || x <= 0.0 {
        return f64::NAN;
    }
    let mut z = x;
    let mut shift = 0.0;
    while z < DIGAMMA_SHIFT {
        shift -= 1.0 / z;
        z += 1.0;
    }
    let z2 = 1.0 / (z * z);
    let mut acc = 0.0;
    for k in (1..=7).rev() {
        acc = acc * z2 + BERNOULLI_EVEN[k - 1] / (2.0 * k as f64);
    }
    shift + z.ln() - 0.5 / z - acc * z2
}

/// Trigamma ψ′(x) for x > 0.
pub fn trigamma(x: f64) -> f64 {
    polygamma(1, x)
}

/// Polygamma ψ^{(m)}(x) for m >= 1 and x > 0.
pub fn polygamma(m: u32, x: f64) -> f64 {
    if m == 0 {
        return digamma(x);
    }
    if x.is_nan() || x <= 0.0 {
        return f64::NAN;
    }
    let sign = if m % 2 == 1 { 1.0 } else { -1.0 };
    let mf = m as f64;
    let m_fact: f64 = (1..=m).map(f64::from).product();
    let threshold = 20.0 + 2.0 * mf;

    let mut z = x;
    let mut shift = 0.0;
    while z < threshold {
        shift += m_fact / z.powi(m as i32 + 1);
        z += 1.0;
    }

    // (m-1)!/z^m + m!/(2 z^{m+1}) + Σ B_2k (2k+m-1)!/((2k)! z^{2k+m})
    let mut series = m_fact / mf / z.powi(m as i32) + m_fact / (2.0 * z.powi(m as i32 + 1));
    let z2 = 1.0 / (z * z);
    let mut zpow = 1.0 / z.powi(m as i32);
    // ratio (2k+m-1)!/(2k)!
    for (k, &b) in BERNOULLI_EVEN.iter().enumerate() {
        let k = (k + 1) as u32;
        zpow *= z2;
        let ratio: f64 = ((2 * k + 1)..=(2 * k + m - 1)).map(f64::from).product();
        series += b * ratio * zpow;
    }
    sign * (shift + series)
}

/// ln Γ(α+δ) − ln Γ(α) − δψ(α), the second-order Taylor remainder of ln Γ.
///
/// For arguments at least one the remainder is evaluated as
/// ∫₀^δ ψ′(α+t)(δ−t) dt, which avoids cancellation between the log-gamma
/// values when δ is small relative to α.
pub fn ln_gamma_taylor_remainder(alpha: f64, delta: f64) -> f64 {
    if delta == 0.0 {
        return 0.0;
    }
    if alpha.min(alpha + delta) < 1.0 {
        return ln_gamma(alpha + delta) - ln_gamma(alpha) - delta * digamma(alpha);
    }
    let (lo, hi, sign) = if delta > 0.0 { (0.0, delta, 1.0) } else { (delta, 0.0, -1.0) };
    let opts = QuadOptions {
        abs_tol: 0.0,
        rel_tol: 1e-14,
        ..QuadOptions::default()
    };
    let r = integrate(|t| trigamma(alpha + t) * (delta - t), lo, hi, &opts)
        .expect("smooth trigamma integrand");
    sign * r.value
}

/// Regularized lower incomplete gamma P(a, x).
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    if x < a + 1.0 {
        gamma_series(a, x)
    } else {
        1.0 - gamma_continued_fraction(a, x)
    }
}

/// Regularized upper incomplete gamma Q(a, x) = 1 − P(a, x).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_series(a, x)
    } else {
        gamma_continued_fraction(a, x)
    }
}

fn gamma_prefactor(a: f64, x: f64) -> f64 {
    (a * x.ln() - x - ln_gamma(a)).exp()
}

fn gamma_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..1_000_000 {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * 1e-17 {
            break;
        }
    }
    sum * gamma_prefactor(a, x)
}

fn gamma_continued_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..1_000_000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    gamma_prefactor(a, x) * h
}
