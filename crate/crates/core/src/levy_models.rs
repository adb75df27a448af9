//! Catalog of oscillating Lévy models and their fluctuation-theory quantities.
//!
//! Normalization: the local time at the supremum is scaled so that the
//! renewal function is `h(x) = x` for Brownian motion and `h(x) = x^{αρ}`
//! for a strictly `(α, ρ)`-stable process. Every other ladder quantity
//! (`κ`, `h_q`, the excursion tail `n(s < ζ)`) is tied to `h` through
//!
//! ```text
//! λ ∫_0^∞ e^{-λx} h_q(x) dx = 1 / κ(q, λ)
//! q ∫_0^∞ e^{-qs} n(s < ζ) ds = κ(q, 0).
//! ```
//!
//! Penalization ratios do not depend on this constant; only the normalized
//! masses `E[f(S_τ)]/κ(q,0)` and `E[f(S_s)]/n(s<ζ)` do.
//!
//! Stable ladder exponent: Fristedt's formula with the sampler's scale gives
//! `κ(q, 0) ∝ q^ρ` and `κ(0, λ) ∝ cos(πα(ρ-1/2))^{-ρ} λ^{αρ}`; dividing by
//! `cos(πα(ρ-1/2))^{-ρ} Γ(1+αρ)` makes `h(x) = x^{αρ}` exact. The joint
//! exponent `κ(q, λ)` with both arguments positive, and hence `h_q`, is
//! available in closed form only for the symmetric Cauchy process, where
//!
//! ```text
//! κ(q, λ) ∝ exp( (1/π) ∫_0^∞ ln(q + λy) / (1 + y²) dy ).
//! ```

use crate::error::{check_at_least, check_positive, Error, Result};
use crate::laplace::{talbot, DEFAULT_NODES};
use crate::numerics::{gamma, half_normal_cdf};
use crate::quad::{integrate, integrate_to_infinity, Tolerance};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, LN_2, PI};
use std::fmt;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ModelKind {
    BrownianStd,
    Stable { alpha: f64, rho: f64 },
}

impl ModelKind {
    pub fn is_brownian(&self) -> bool {
        matches!(self, ModelKind::BrownianStd)
    }

    /// `(α, ρ)` with Brownian motion as the `α = 2, ρ = 1/2` member for scaling laws.
    pub fn index_and_positivity(&self) -> (f64, f64) {
        match *self {
            ModelKind::BrownianStd => (2.0, 0.5),
            ModelKind::Stable { alpha, rho } => (alpha, rho),
        }
    }

    fn is_cauchy(&self) -> bool {
        matches!(*self, ModelKind::Stable { alpha, rho } if alpha == 1.0 && rho == 0.5)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::BrownianStd => write!(f, "brownian"),
            ModelKind::Stable { alpha, rho } => write!(f, "stable:alpha={alpha},rho={rho}"),
        }
    }
}

/// Documentary Lévy-Khintchine data, used in reports only.
#[derive(Debug, Clone, PartialEq)]
pub struct CharTriplet {
    pub gamma: f64,
    pub sigma2: f64,
    pub levy_measure: &'static str,
}

/// Ladder-height potential, ladder exponent and excursion tail of a model.
#[derive(Debug, Clone)]
pub struct LadderBundle {
    kind: ModelKind,
    /// `κ = κ_Fristedt / norm` for stable models; 1 for Brownian motion.
    norm: f64,
    caches: Arc<Vec<HqTable>>,
}

#[derive(Debug, Clone)]
pub struct LevyModel {
    kind: ModelKind,
    triplet: Option<CharTriplet>,
    ladder: LadderBundle,
}

impl LevyModel {
    pub fn brownian() -> Self {
        let kind = ModelKind::BrownianStd;
        Self {
            kind,
            triplet: Some(CharTriplet {
                gamma: 0.0,
                sigma2: 1.0,
                levy_measure: "none",
            }),
            ladder: LadderBundle {
                kind,
                norm: 1.0,
                caches: Arc::default(),
            },
        }
    }

    /// Strictly stable process with index `alpha` and positivity parameter `rho`.
    ///
    /// Requires `ρ ∈ [1-1/α, 1/α] ∩ (0,1)`; for `α = 1` only the symmetric
    /// Cauchy process (`ρ = 1/2`) is strictly stable without a drift.
    pub fn stable(alpha: f64, rho: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(Error::Construction(format!("alpha = {alpha} must lie in (0, 2)")));
        }
        let lo = (1.0 - 1.0 / alpha).max(0.0);
        let hi = (1.0 / alpha).min(1.0);
        if !(rho > 0.0 && rho < 1.0 && rho >= lo - 1e-12 && rho <= hi + 1e-12) {
            return Err(Error::Construction(format!(
                "rho = {rho} outside the positivity range [{lo}, {hi}] ∩ (0,1) for alpha = {alpha}"
            )));
        }
        if alpha == 1.0 && rho != 0.5 {
            return Err(Error::Construction(
                "alpha = 1 requires rho = 1/2 (asymmetric 1-stable laws are not strictly stable)".into(),
            ));
        }
        let kind = ModelKind::Stable { alpha, rho };
        let phase = PI * alpha * (rho - 0.5);
        let norm = phase.cos().powf(-rho) * gamma(1.0 + alpha * rho);
        let levy_measure = if alpha == 1.0 { "cauchy" } else { "stable" };
        Ok(Self {
            kind,
            triplet: Some(CharTriplet {
                gamma: 0.0,
                sigma2: 0.0,
                levy_measure,
            }),
            ladder: LadderBundle {
                kind,
                norm,
                caches: Arc::default(),
            },
        })
    }

    pub fn cauchy() -> Self {
        Self::stable(1.0, 0.5).expect("Cauchy parameters are admissible")
    }

    /// Parse `"brownian"` or `"stable:alpha=<a>,rho=<r>"`.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        if spec == "brownian" {
            return Ok(Self::brownian());
        }
        let Some(params) = spec.strip_prefix("stable:") else {
            return Err(Error::parse(spec, "expected `brownian` or `stable:alpha=<a>,rho=<r>`"));
        };
        let mut alpha = None;
        let mut rho = None;
        for item in params.split(',') {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| Error::parse(item, "expected key=value"))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::parse(value, "not a number"))?;
            match key.trim() {
                "alpha" => alpha = Some(value),
                "rho" => rho = Some(value),
                other => return Err(Error::parse(other, "unknown stable parameter")),
            }
        }
        let alpha = alpha.ok_or_else(|| Error::parse(spec, "missing alpha"))?;
        let rho = rho.ok_or_else(|| Error::parse(spec, "missing rho"))?;
        Self::stable(alpha, rho)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn triplet(&self) -> Option<&CharTriplet> {
        self.triplet.as_ref()
    }

    pub fn ladder(&self) -> &LadderBundle {
        &self.ladder
    }

    pub fn is_brownian(&self) -> bool {
        self.kind.is_brownian()
    }

    /// Precompute `h_q` tables for the given `q` values on `[0, x_max]`.
    /// The tables are immutable afterwards; lookups outside them fall back
    /// to direct inversion.
    pub fn with_hq_cache(mut self, qs: &[f64], x_max: f64) -> Result<Self> {
        let mut tables = Vec::with_capacity(qs.len());
        for &q in qs {
            tables.push(HqTable::build(&self.ladder, q, x_max, 2048)?);
        }
        self.ladder.caches = Arc::new(tables);
        Ok(self)
    }
}

impl fmt::Display for LevyModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.kind.fmt(f)
    }
}

/// `J(c) = ∫_0^∞ ln(1 + c y)/(1 + y²) dy` for complex `c` off the negative axis.
fn cauchy_log_integral(c: Complex64) -> Complex64 {
    if c.norm() > 1.0 {
        // y -> 1/y symmetry keeps the quadrature variable bounded.
        return c.ln() * FRAC_PI_2 + cauchy_log_integral(c.inv());
    }
    if c.norm() == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let integrand = |theta: f64| (Complex64::new(theta.cos(), 0.0) + c * theta.sin()).ln();
    let r = integrate("kappa", integrand, 0.0, FRAC_PI_2, Tolerance::new(1e-15, 1e-14))
        .expect("smooth integrand on a bounded interval");
    r.value + FRAC_PI_2 * LN_2
}

impl LadderBundle {
    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    fn stable_exponent(&self) -> f64 {
        let (alpha, rho) = self.kind.index_and_positivity();
        alpha * rho
    }

    /// Renewal function of the ladder height process.
    pub fn h(&self, x: f64) -> f64 {
        match self.kind {
            ModelKind::BrownianStd => x,
            ModelKind::Stable { .. } => x.powf(self.stable_exponent()),
        }
    }

    pub fn h_prime(&self, x: f64) -> f64 {
        match self.kind {
            ModelKind::BrownianStd => 1.0,
            ModelKind::Stable { .. } => {
                let e = self.stable_exponent();
                e * x.powf(e - 1.0)
            }
        }
    }

    /// Drift of the ladder height process.
    pub fn gamma_h(&self) -> f64 {
        match self.kind {
            ModelKind::BrownianStd => 1.0,
            ModelKind::Stable { .. } => {
                if self.stable_exponent() >= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `κ(q, λ)`; for stable models with both arguments positive only the
    /// Cauchy process is supported.
    pub fn kappa(&self, q: f64, lam: f64) -> Result<f64> {
        match self.kind {
            ModelKind::BrownianStd => Ok((2.0 * q).sqrt() + lam),
            ModelKind::Stable { alpha, rho } => {
                if lam == 0.0 {
                    Ok(q.powf(rho) / self.norm)
                } else if q == 0.0 {
                    Ok(lam.powf(alpha * rho) / gamma(1.0 + alpha * rho))
                } else {
                    Ok(self.kappa_complex(q, Complex64::new(lam, 0.0))?.re)
                }
            }
        }
    }

    /// Analytic continuation of `λ ↦ κ(q, λ)` off the negative real axis.
    pub(crate) fn kappa_complex(&self, q: f64, lam: Complex64) -> Result<Complex64> {
        match self.kind {
            ModelKind::BrownianStd => Ok(lam + (2.0 * q).sqrt()),
            _ if self.kind.is_cauchy() => {
                if q == 0.0 {
                    return Ok(lam.sqrt() / self.norm);
                }
                let j = cauchy_log_integral(lam / q);
                Ok((j / PI).exp() * q.sqrt() / self.norm)
            }
            _ => Err(Error::unsupported("kappa(q>0, lambda>0)", self.kind)),
        }
    }

    /// `h_q(x)`, the q-discounted renewal function.
    pub fn h_q(&self, q: f64, x: f64) -> Result<f64> {
        if q == 0.0 || x == 0.0 {
            return Ok(self.h(x));
        }
        match self.kind {
            ModelKind::BrownianStd => {
                let k = (2.0 * q).sqrt();
                Ok(-(-k * x).exp_m1() / k)
            }
            _ => {
                if let Some(table) = self.caches.iter().find(|t| t.q == q) {
                    if let Some(v) = table.value(x) {
                        return Ok(v);
                    }
                }
                self.invert_hq(q, x, false)
            }
        }
    }

    /// Density of `∫ e^{-qs} V(ds, dx)`, i.e. `d h_q / dx`.
    pub fn hq_prime(&self, q: f64, x: f64) -> Result<f64> {
        if q == 0.0 {
            return Ok(self.h_prime(x));
        }
        match self.kind {
            ModelKind::BrownianStd => Ok((-(2.0 * q).sqrt() * x).exp()),
            _ => self.invert_hq(q, x, true),
        }
    }

    fn invert_hq(&self, q: f64, x: f64, derivative: bool) -> Result<f64> {
        // Probe support once, so unsupported models fail before the contour loop.
        self.kappa_complex(q, Complex64::new(1.0, 0.0))?;
        let transform = |lam: Complex64| {
            let k = self.kappa_complex(q, lam).expect("support checked above");
            if derivative {
                k.inv()
            } else {
                (lam * k).inv()
            }
        };
        Ok(talbot(transform, x, DEFAULT_NODES))
    }

    /// Tail of the excursion lifetime, `n(s < ζ)`.
    pub fn n_tail(&self, s: f64) -> f64 {
        match self.kind {
            ModelKind::BrownianStd => (2.0 / (PI * s)).sqrt(),
            ModelKind::Stable { rho, .. } => s.powf(-rho) / (gamma(1.0 - rho) * self.norm),
        }
    }

    /// Density of `S_t`, when a closed form exists.
    pub fn sup_density(&self, t: f64, x: f64) -> Option<f64> {
        match self.kind {
            ModelKind::BrownianStd => Some((2.0 / (PI * t)).sqrt() * (-x * x / (2.0 * t)).exp()),
            ModelKind::Stable { .. } => None,
        }
    }

    /// `P(S_t <= x)`, when a closed form exists.
    pub fn sup_cdf(&self, t: f64, x: f64) -> Option<f64> {
        match self.kind {
            ModelKind::BrownianStd => Some(half_normal_cdf(x, t)),
            ModelKind::Stable { .. } => None,
        }
    }
}

/// Cubic Hermite table of `h_q` in the variable `u = sqrt(x)`, where
/// `h_q(u²)` is smooth even though `h_q` has a square-root cusp at 0.
#[derive(Debug, Clone)]
pub struct HqTable {
    q: f64,
    du: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl HqTable {
    fn build(ladder: &LadderBundle, q: f64, x_max: f64, cells: usize) -> Result<Self> {
        check_positive("hq_table", "q", q)?;
        check_positive("hq_table", "x_max", x_max)?;
        let du = x_max.sqrt() / cells as f64;
        let mut values = Vec::with_capacity(cells + 1);
        let mut slopes = Vec::with_capacity(cells + 1);
        for i in 0..=cells {
            let u = i as f64 * du;
            let x = u * u;
            values.push(if i == 0 { 0.0 } else { ladder.invert_hq(q, x, false)? });
            // dh/du = 2u h_q'(u²); the u -> 0 limit is finite for the Cauchy cusp.
            let slope = if i == 0 {
                let probe = 1e-6 * du;
                ladder.invert_hq(q, probe * probe, false)? / probe
            } else {
                2.0 * u * ladder.invert_hq(q, x, true)?
            };
            slopes.push(slope);
        }
        Ok(Self { q, du, values, slopes })
    }

    fn value(&self, x: f64) -> Option<f64> {
        let u = x.sqrt();
        let pos = u / self.du;
        let i = pos.floor() as usize;
        if i + 1 >= self.values.len() {
            return None;
        }
        let s = pos - i as f64;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.slopes[i] * self.du, self.slopes[i + 1] * self.du);
        let s2 = s * s;
        let s3 = s2 * s;
        Some(
            (2.0 * s3 - 3.0 * s2 + 1.0) * y0
                + (s3 - 2.0 * s2 + s) * m0
                + (-2.0 * s3 + 3.0 * s2) * y1
                + (s3 - s2) * m1,
        )
    }
}

// ---------------------------------------------------------------------------
// Operations.

pub fn h_eval(model: &LevyModel, x: f64) -> Result<f64> {
    check_at_least("h_eval", "x", x, 0.0)?;
    Ok(model.ladder.h(x))
}

pub fn kappa_eval(model: &LevyModel, q: f64, lam: f64) -> Result<f64> {
    check_at_least("kappa_eval", "q", q, 0.0)?;
    check_at_least("kappa_eval", "lambda", lam, 0.0)?;
    model.ladder.kappa(q, lam)
}

pub fn hq_eval(model: &LevyModel, q: f64, x: f64) -> Result<f64> {
    check_at_least("hq_eval", "q", q, 0.0)?;
    check_at_least("hq_eval", "x", x, 0.0)?;
    model.ladder.h_q(q, x)
}

pub fn hq_prime_eval(model: &LevyModel, q: f64, x: f64) -> Result<f64> {
    check_at_least("hq_prime_eval", "q", q, 0.0)?;
    check_positive("hq_prime_eval", "x", x)?;
    model.ladder.hq_prime(q, x)
}

pub fn n_tail_eval(model: &LevyModel, s: f64) -> Result<f64> {
    check_positive("n_tail_eval", "s", s)?;
    Ok(model.ladder.n_tail(s))
}

pub fn sup_density_eval(model: &LevyModel, t: f64, x: f64) -> Result<f64> {
    check_positive("sup_density_eval", "t", t)?;
    check_positive("sup_density_eval", "x", x)?;
    model
        .ladder
        .sup_density(t, x)
        .ok_or_else(|| Error::unsupported("sup_density_eval", model))
}

/// Outcome of a numerical identity check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityCheck {
    pub residual: f64,
    /// Upper limit where a semi-infinite quadrature was cut.
    pub truncation: Option<f64>,
}

/// `|λ ∫_0^∞ e^{-λx} h_q(x) dx · κ(q, λ) - 1|` by adaptive quadrature.
pub fn check_laplace_hq(model: &LevyModel, q: f64, lam: f64) -> Result<IdentityCheck> {
    check_positive("check_laplace_hq", "q", q)?;
    check_positive("check_laplace_hq", "lambda", lam)?;
    let ladder = &model.ladder;
    let kappa = ladder.kappa(q, lam)?;
    let scale = 1.0 / lam;
    let integral = if model.is_brownian() {
        integrate_to_infinity(
            "check_laplace_hq",
            |x| (-lam * x).exp() * ladder.h_q(q, x).unwrap_or(f64::NAN),
            0.0,
            scale,
            Tolerance::new(1e-15, 1e-13),
        )?
    } else {
        // x = u² removes the square-root cusp of h_q at the origin.
        let mut failure = None;
        let r = integrate_to_infinity(
            "check_laplace_hq",
            |u| {
                let x = u * u;
                match ladder.h_q(q, x) {
                    Ok(v) => 2.0 * u * (-lam * x).exp() * v,
                    Err(e) => {
                        failure.get_or_insert(e);
                        0.0
                    }
                }
            },
            0.0,
            scale.sqrt(),
            Tolerance::new(1e-13, 1e-11),
        )?;
        if let Some(e) = failure {
            return Err(e);
        }
        r
    };
    Ok(IdentityCheck {
        residual: (lam * integral.value * kappa - 1.0).abs(),
        truncation: integral.truncation,
    })
}

/// First-passage density of Brownian motion at level `x`: `V(ds, dx)/dx`.
pub fn brownian_ladder_time_density(x: f64, s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    x * (-x * x / (2.0 * s)).exp() / (2.0 * PI * s * s * s).sqrt()
}

/// Relative residual of `φ_t(x) = ∫_0^t n(t-s < ζ) V(ds, dx)/dx` (Brownian motion).
pub fn check_convolution_identity(model: &LevyModel, t: f64, x: f64) -> Result<IdentityCheck> {
    if !model.is_brownian() {
        return Err(Error::unsupported("check_convolution_identity", model));
    }
    check_positive("check_convolution_identity", "t", t)?;
    check_positive("check_convolution_identity", "x", x)?;
    let ladder = &model.ladder;
    // s = t - v² turns the (t-s)^{-1/2} endpoint singularity into a constant factor.
    let r = integrate(
        "check_convolution_identity",
        |v| {
            let s = t - v * v;
            2.0 * v * ladder.n_tail(v * v).min(f64::MAX) * brownian_ladder_time_density(x, s)
        },
        0.0,
        t.sqrt(),
        Tolerance::new(1e-300, 1e-13),
    )?;
    let exact = ladder.sup_density(t, x).expect("Brownian closed form");
    Ok(IdentityCheck {
        residual: ((r.value - exact) / exact).abs(),
        truncation: None,
    })
}

/// `|κ(q,0) h_q(x) - P(S_{e_q} <= x)|` for Brownian motion, the right side
/// by quadrature of the half-normal CDF against the exponential clock.
pub fn check_exp_sup_law(model: &LevyModel, q: f64, x: f64) -> Result<IdentityCheck> {
    if !model.is_brownian() {
        return Err(Error::unsupported("check_exp_sup_law", model));
    }
    check_positive("check_exp_sup_law", "q", q)?;
    check_positive("check_exp_sup_law", "x", x)?;
    let ladder = &model.ladder;
    let lhs = ladder.kappa(q, 0.0)? * ladder.h_q(q, x)?;
    let rhs = integrate_to_infinity(
        "check_exp_sup_law",
        |t| q * (-q * t).exp() * half_normal_cdf(x, t),
        0.0,
        1.0 / q,
        Tolerance::new(1e-15, 1e-13),
    )?;
    Ok(IdentityCheck {
        residual: (lhs - rhs.value).abs(),
        truncation: rhs.truncation,
    })
}

/// Relative residual of `q ∫_0^∞ e^{-qs} n(s < ζ) ds = κ(q, 0)`.
pub fn check_n_tail_laplace(model: &LevyModel, q: f64) -> Result<IdentityCheck> {
    check_positive("check_n_tail_laplace", "q", q)?;
    let ladder = &model.ladder;
    let (_, rho) = model.kind.index_and_positivity();
    // s = w^k with k = 1/(1-ρ) cancels the s^{-ρ} singularity against the Jacobian.
    let k = 1.0 / (1.0 - rho);
    let r = integrate_to_infinity(
        "check_n_tail_laplace",
        |w| {
            if w == 0.0 {
                // Limit of k w^{k-1} n(w^k) as w -> 0.
                return q * k * ladder.n_tail(1.0);
            }
            let s = w.powf(k);
            q * (-q * s).exp() * ladder.n_tail(s) * k * w.powf(k - 1.0)
        },
        0.0,
        q.powf(-1.0 / k),
        Tolerance::new(1e-15, 1e-13),
    )?;
    let kappa = ladder.kappa(q, 0.0)?;
    Ok(IdentityCheck {
        residual: ((r.value - kappa) / kappa).abs(),
        truncation: r.truncation,
    })
}

/// `max(h_q(x) - h(x), h_q(x) - h_{q'}(x))⁺` over a `q ↓ 0` grid and `x` grid.
pub fn check_hq_monotone(model: &LevyModel, qs: &[f64], xs: &[f64]) -> Result<f64> {
    let ladder = &model.ladder;
    let mut worst = 0.0f64;
    for &x in xs {
        let h = ladder.h(x);
        let mut prev = 0.0f64;
        for &q in qs {
            let v = ladder.h_q(q, x)?;
            worst = worst.max(v - h).max(prev - v);
            prev = v;
        }
    }
    Ok(worst.max(0.0))
}

/// `q / κ(q, 0)`, which vanishes as `q ↓ 0` for oscillating processes.
pub fn q_over_kappa(model: &LevyModel, q: f64) -> Result<f64> {
    check_positive("q_over_kappa", "q", q)?;
    Ok(q / model.ladder.kappa(q, 0.0)?)
}

/// `|φ_t(x)/n(t<ζ) - h'(x)|`, the constant-clock density ratio error.
pub fn sup_density_ratio_residual(model: &LevyModel, t: f64, x: f64) -> Result<f64> {
    let phi = sup_density_eval(model, t, x)?;
    Ok((phi / model.ladder.n_tail(t) - model.ladder.h_prime(x)).abs())
}
