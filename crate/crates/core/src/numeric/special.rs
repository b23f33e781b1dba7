//! Gamma, incomplete gamma and the Bessel functions J0/J1 with the zeros of
//! J0, all for real arguments.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use super::dd::DoubleDouble;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Gamma function for real `s` (Lanczos approximation, reflection below 1/2).
pub fn gamma(s: f64) -> f64 {
    if s < 0.5 {
        return PI / ((PI * s).sin() * gamma(1.0 - s));
    }
    let s = s - 1.0;
    let mut a = LANCZOS_COEF[0];
    let t = s + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        a += c / (s + i as f64);
    }
    (2.0 * PI).sqrt() * t.powf(s + 0.5) * (-t).exp() * a
}

pub fn ln_gamma(s: f64) -> f64 {
    if s < 0.5 {
        return (PI / (PI * s).sin()).abs().ln() - ln_gamma(1.0 - s);
    }
    let s = s - 1.0;
    let mut a = LANCZOS_COEF[0];
    let t = s + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        a += c / (s + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (s + 0.5) * t.ln() - t + a.ln()
}

/// Upper incomplete gamma `Γ(s, x) = ∫_x^∞ t^{s-1} e^{-t} dt` for `s > 0`, `x ≥ 0`.
pub fn upper_incomplete_gamma(s: f64, x: f64) -> f64 {
    assert!(s > 0.0 && x >= 0.0);
    if x == 0.0 {
        return gamma(s);
    }
    let log_prefactor = s * x.ln() - x;
    if x < s + 1.0 {
        // lower series, then complement
        let mut term = 1.0 / s;
        let mut total = term;
        let mut a = s;
        for _ in 0..10_000 {
            a += 1.0;
            term *= x / a;
            total += term;
            if term.abs() < total.abs() * 1e-17 {
                break;
            }
        }
        let lower = total * log_prefactor.exp();
        gamma(s) - lower
    } else {
        // modified Lentz continued fraction
        let tiny = 1e-300;
        let mut b = x + 1.0 - s;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -(i as f64) * (i as f64 - s);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        log_prefactor.exp() * h
    }
}

/// Below this argument J0/J1 use the power series in double-double; above it
/// the Hankel asymptotic expansion.
const SERIES_LIMIT: f64 = 25.0;

fn bessel_series(x: f64, order: u32) -> f64 {
    let xx = DoubleDouble::from_f64(x);
    let q = xx * xx * 0.25;
    let mut term = if order == 0 {
        DoubleDouble::ONE
    } else {
        xx * 0.5
    };
    let mut total = term;
    let mut k = 1u32;
    loop {
        let denom = (k as f64) * ((k + order) as f64);
        term = -(term * q) / DoubleDouble::from_f64(denom);
        total += term;
        if term.abs().hi < 1e-34 * total.abs().hi.max(1e-300) || k > 400 {
            break;
        }
        k += 1;
    }
    total.to_f64()
}

fn bessel_asymptotic(x: f64, order: u32) -> f64 {
    let mu = 4.0 * (order as f64).powi(2);
    let mut p = 0.0;
    let mut q = 0.0;
    let mut a = 1.0;
    let mut prev = f64::INFINITY;
    for k in 0..200u32 {
        if k > 0 {
            let odd = (2 * k - 1) as f64;
            a *= (mu - odd * odd) / (8.0 * k as f64);
        }
        let term = a / x.powi(k as i32);
        if term.abs() > prev {
            break;
        }
        prev = term.abs();
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 0 {
            p += sign * term;
        } else {
            q += sign * term;
        }
        if term.abs() < 1e-18 {
            break;
        }
    }
    let (s, c) = x.sin_cos();
    let (cos_chi, sin_chi) = if order == 0 {
        ((c + s) * FRAC_1_SQRT_2, (s - c) * FRAC_1_SQRT_2)
    } else {
        ((s - c) * FRAC_1_SQRT_2, -(s + c) * FRAC_1_SQRT_2)
    };
    (2.0 / (PI * x)).sqrt() * (p * cos_chi - q * sin_chi)
}

pub fn bessel_j0(x: f64) -> f64 {
    let x = x.abs();
    if x <= SERIES_LIMIT {
        bessel_series(x, 0)
    } else {
        bessel_asymptotic(x, 0)
    }
}

pub fn bessel_j1(x: f64) -> f64 {
    let sign = x.signum();
    let x = x.abs();
    sign * if x <= SERIES_LIMIT {
        bessel_series(x, 1)
    } else {
        bessel_asymptotic(x, 1)
    }
}

/// The `n`-th positive zero of J0 (1-based), by Newton iteration from the
/// McMahon expansion.
pub fn bessel_j0_zero(n: usize) -> f64 {
    assert!(n >= 1);
    let beta = (n as f64 - 0.25) * PI;
    let b2 = beta * beta;
    let mut x = beta + 1.0 / (8.0 * beta) - 31.0 / (384.0 * beta * b2)
        + 3779.0 / (15360.0 * beta * b2 * b2);
    for _ in 0..50 {
        let step = bessel_j0(x) / bessel_j1(x);
        x += step;
        if step.abs() <= 1e-15 * x {
            break;
        }
    }
    x
}
