//! Special functions used by the closed forms.

use statrs::function::{erf, gamma as sgamma};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Euler's Gamma function (Lanczos approximation, ~1e-15 relative).
pub fn gamma(x: f64) -> f64 {
    sgamma::gamma(x)
}

pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erf::erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail `1 - Phi(x)`, accurate for large `x`.
pub fn std_normal_sf(x: f64) -> f64 {
    0.5 * erf::erfc(x * FRAC_1_SQRT_2)
}

/// Mills ratio `(1 - Phi(z)) / phi(z)` for `z >= 0`.
pub fn mills_ratio(z: f64) -> f64 {
    if z < 25.0 {
        return std_normal_sf(z) / std_normal_pdf(z);
    }
    // Laplace continued fraction z + 1/(z + 2/(z + 3/(z + ...))), evaluated bottom-up.
    let mut tail = z;
    for k in (1..=40).rev() {
        tail = z + k as f64 / tail;
    }
    1.0 / tail
}

/// `P(|N(0, t)| <= x)` for `x >= 0`: CDF of the Brownian supremum at time `t`.
pub fn half_normal_cdf(x: f64, t: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    erf::erf(x / (2.0 * t).sqrt())
}

/// CDF of the norm of a 3-dimensional centred Gaussian with per-coordinate variance `u`.
pub fn chi3_cdf(r: f64, u: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    let z = r / u.sqrt();
    erf::erf(z * FRAC_1_SQRT_2) - (2.0 / PI).sqrt() * z * (-0.5 * z * z).exp()
}

/// `e^x * Gamma(a, x)` for `a > 0`, `x >= 0` (scaled upper incomplete Gamma).
pub fn upper_gamma_scaled(a: f64, x: f64) -> f64 {
    if x == 0.0 {
        return gamma(a);
    }
    if x < a + 1.0 || x < 30.0 {
        return sgamma::gamma_ur(a, x) * gamma(a) * x.exp();
    }
    // Modified Lentz on the continued fraction for Gamma(a, x) e^x x^{-a}.
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..300 {
        let an = -(i as f64) * (i as f64 - a);
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
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    x.powf(a) * h
}
