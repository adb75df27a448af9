//! Weight functions and the Azéma-Yor type martingales built from them.
//!
//! For a weight `f` and a model with renewal function `h`,
//!
//! ```text
//! M_t = f(S_t) h(S_t - X_t) + ∫_{S_t}^∞ f(x) h'(x - X_t) dx,
//! ```
//!
//! and the exponential- and constant-clock approximants replace `h` by
//! `h_q` (resp. the law of the supremum at the remaining horizon).

use crate::error::{check_at_least, check_positive, Error, Result};
use crate::levy_models::{LadderBundle, LevyModel};
use crate::numerics::{half_normal_cdf, mills_ratio, std_normal_pdf, upper_gamma_scaled};
use crate::path_sim::PathSample;
use crate::quad::{integrate, integrate_to_infinity, Tolerance};
use std::fmt;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub enum WeightShape {
    Indicator { a: f64 },
    ExpDecay { c: f64 },
    /// Piecewise-linear between knots, zero outside `[x_0, x_n]`.
    Table { knots: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightFn {
    shape: WeightShape,
    label: String,
}

impl WeightFn {
    pub fn indicator(a: f64) -> Result<Self> {
        check_positive("weight", "a", a)?;
        Ok(Self {
            shape: WeightShape::Indicator { a },
            label: format!("indicator:a={a}"),
        })
    }

    pub fn exp_decay(c: f64) -> Result<Self> {
        check_positive("weight", "c", c)?;
        Ok(Self {
            shape: WeightShape::ExpDecay { c },
            label: format!("expdecay:c={c}"),
        })
    }

    pub fn table(knots: Vec<(f64, f64)>, label: impl Into<String>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::Admissibility("table weight needs at least two knots".into()));
        }
        if knots[0].0 < 0.0 || knots.iter().any(|(x, f)| !x.is_finite() || !f.is_finite()) {
            return Err(Error::Admissibility("table knots must be finite with x >= 0".into()));
        }
        if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Admissibility("table x values must be strictly increasing".into()));
        }
        if knots.iter().any(|&(_, f)| f < 0.0) {
            return Err(Error::Admissibility("table weight takes negative values".into()));
        }
        if knots.iter().all(|&(_, f)| f == 0.0) {
            return Err(Error::Admissibility("table weight vanishes identically".into()));
        }
        Ok(Self {
            shape: WeightShape::Table { knots },
            label: label.into(),
        })
    }

    /// Read a table weight from a CSV file with columns `x,f`.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::parse(path.display().to_string(), format!("missing column `{name}`")))
        };
        let (ix, iff) = (col("x")?, col("f")?);
        let mut knots = Vec::new();
        for record in reader.records() {
            let record = record?;
            let num = |i: usize| -> Result<f64> {
                let field = record.get(i).unwrap_or("").trim();
                field.parse().map_err(|_| Error::parse(field, "not a number"))
            };
            knots.push((num(ix)?, num(iff)?));
        }
        Self::table(knots, format!("table:{}", path.display()))
    }

    /// Parse `indicator:a=<a>`, `expdecay:c=<c>` or `table:<path>`.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        let (kind, rest) = spec
            .split_once(':')
            .ok_or_else(|| Error::parse(spec, "expected indicator:a=, expdecay:c= or table:<path>"))?;
        let param = |key: &str| -> Result<f64> {
            let (k, v) = rest.split_once('=').ok_or_else(|| Error::parse(rest, "expected key=value"))?;
            if k.trim() != key {
                return Err(Error::parse(k, format!("expected `{key}`")));
            }
            v.trim().parse().map_err(|_| Error::parse(v, "not a number"))
        };
        match kind {
            "indicator" => Self::indicator(param("a")?),
            "expdecay" => Self::exp_decay(param("c")?),
            "table" => Self::from_csv(Path::new(rest)),
            other => Err(Error::parse(other, "unknown weight kind")),
        }
    }

    pub fn shape(&self) -> &WeightShape {
        &self.shape
    }

    pub fn value(&self, x: f64) -> f64 {
        match &self.shape {
            WeightShape::Indicator { a } => {
                if (0.0..=*a).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            }
            WeightShape::ExpDecay { c } => {
                if x >= 0.0 {
                    (-c * x).exp()
                } else {
                    0.0
                }
            }
            WeightShape::Table { knots } => {
                let (first, last) = (knots[0], knots[knots.len() - 1]);
                if x < first.0 || x > last.0 {
                    return 0.0;
                }
                let k = knots.partition_point(|&(kx, _)| kx <= x);
                if k >= knots.len() {
                    return last.1;
                }
                let ((x0, f0), (x1, f1)) = (knots[k - 1], knots[k]);
                f0 + (f1 - f0) * (x - x0) / (x1 - x0)
            }
        }
    }

    pub fn sup(&self) -> f64 {
        match &self.shape {
            WeightShape::Indicator { .. } | WeightShape::ExpDecay { .. } => 1.0,
            WeightShape::Table { knots } => knots.iter().map(|k| k.1).fold(0.0, f64::max),
        }
    }

    /// Linear pieces `(x0, x1, A, B)` with `f = A + B x` on `[x0, x1]`.
    fn pieces(knots: &[(f64, f64)]) -> impl Iterator<Item = (f64, f64, f64, f64)> + '_ {
        knots.windows(2).map(|w| {
            let ((x0, f0), (x1, f1)) = (w[0], w[1]);
            let b = (f1 - f0) / (x1 - x0);
            (x0, x1, f0 - b * x0, b)
        })
    }
}

impl fmt::Display for WeightFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MartingaleState {
    pub t: f64,
    pub s_t: f64,
    pub x_t: f64,
}

impl MartingaleState {
    pub fn new(t: f64, s_t: f64, x_t: f64) -> Result<Self> {
        check_at_least("martingale_state", "t", t, 0.0)?;
        if !(s_t.is_finite() && x_t.is_finite()) || s_t < x_t.max(0.0) {
            return Err(Error::domain(
                "martingale_state",
                format!("need s_t >= max(x_t, 0), got s_t = {s_t}, x_t = {x_t}"),
            ));
        }
        Ok(Self { t, s_t, x_t })
    }

    pub fn origin() -> Self {
        Self { t: 0.0, s_t: 0.0, x_t: 0.0 }
    }

    pub fn at(path: &PathSample, i: usize) -> Self {
        Self {
            t: path.times[i],
            s_t: path.s[i],
            x_t: path.x[i],
        }
    }
}

fn renewal_power(ladder: &LadderBundle) -> f64 {
    let (alpha, rho) = ladder.kind().index_and_positivity();
    if ladder.kind().is_brownian() {
        1.0
    } else {
        alpha * rho
    }
}

/// `∫_s^∞ f(x) h'(x - y) dx`.
pub fn weight_tail_integral(f: &WeightFn, model: &LevyModel, s: f64, y: f64) -> Result<f64> {
    check_at_least("weight_tail_integral", "s", s, 0.0)?;
    if !y.is_finite() || y > s {
        return Err(Error::domain("weight_tail_integral", format!("need y <= s, got y = {y}, s = {s}")));
    }
    Ok(tail(f, model.ladder(), s, y))
}

fn tail(f: &WeightFn, ladder: &LadderBundle, s: f64, y: f64) -> f64 {
    let d = s - y;
    match &f.shape {
        WeightShape::Indicator { a } => {
            if s >= *a {
                0.0
            } else {
                ladder.h(a - y) - ladder.h(d)
            }
        }
        WeightShape::ExpDecay { c } => {
            if ladder.kind().is_brownian() {
                (-c * s).exp() / c
            } else {
                let p = renewal_power(ladder);
                p * c.powf(-p) * (-c * s).exp() * upper_gamma_scaled(p, c * d)
            }
        }
        WeightShape::Table { knots } => {
            // u = x - y; ∫ (A + By + Bu) h'(u) du = (A+By) h(u) + B p u^{p+1}/(p+1).
            let p = renewal_power(ladder);
            let anti = |u: f64, a: f64, b: f64| (a + b * y) * u.powf(p) + b * p * u.powf(p + 1.0) / (p + 1.0);
            WeightFn::pieces(knots)
                .filter(|&(_, x1, _, _)| x1 > s)
                .map(|(x0, x1, a, b)| {
                    let lo = x0.max(s) - y;
                    anti(x1 - y, a, b) - anti(lo, a, b)
                })
                .sum::<f64>()
                .max(0.0)
        }
    }
}

/// `∫_s^∞ f(x) h_q'(x - y) dx` for `q > 0`.
fn tail_q(f: &WeightFn, ladder: &LadderBundle, q: f64, s: f64, y: f64) -> Result<f64> {
    let d = s - y;
    let brownian = ladder.kind().is_brownian();
    let k = (2.0 * q).sqrt();
    match &f.shape {
        WeightShape::Indicator { a } => {
            if s >= *a {
                Ok(0.0)
            } else {
                Ok(ladder.h_q(q, a - y)? - ladder.h_q(q, d)?)
            }
        }
        WeightShape::ExpDecay { c } if brownian => Ok((-c * s - k * d).exp() / (c + k)),
        WeightShape::ExpDecay { c } => {
            // u = d + w²; smooth in w even at d = 0.
            let mut failure = None;
            let r = integrate_to_infinity(
                "n_qf_eval",
                |w| {
                    let u = d + w * w;
                    match ladder.hq_prime(q, u) {
                        Ok(v) => 2.0 * w * (-c * (w * w)).exp() * v,
                        Err(e) => {
                            failure.get_or_insert(e);
                            0.0
                        }
                    }
                },
                0.0,
                (1.0 / c).sqrt(),
                Tolerance::new(1e-12, 1e-10),
            )?;
            if let Some(e) = failure {
                return Err(e);
            }
            Ok((-c * s).exp() * r.value)
        }
        WeightShape::Table { knots } if brownian => {
            let anti = |u: f64, cc: f64, b: f64| {
                let e = (-k * u).exp();
                -cc * e / k - b * e * (u / k + 1.0 / (k * k))
            };
            Ok(WeightFn::pieces(knots)
                .filter(|&(_, x1, _, _)| x1 > s)
                .map(|(x0, x1, a, b)| {
                    let cc = a + b * y;
                    anti(x1 - y, cc, b) - anti(x0.max(s) - y, cc, b)
                })
                .sum::<f64>()
                .max(0.0))
        }
        WeightShape::Table { knots } => {
            let mut total = 0.0;
            for (x0, x1, a, b) in WeightFn::pieces(knots).filter(|&(_, x1, _, _)| x1 > s) {
                let (w0, w1) = ((x0.max(s) - y).sqrt(), (x1 - y).sqrt());
                let mut failure = None;
                let r = integrate(
                    "n_qf_eval",
                    |w| match ladder.hq_prime(q, w * w) {
                        Ok(v) => 2.0 * w * (a + b * (y + w * w)) * v,
                        Err(e) => {
                            failure.get_or_insert(e);
                            0.0
                        }
                    },
                    w0,
                    w1,
                    Tolerance::new(1e-12, 1e-10),
                )?;
                if let Some(e) = failure {
                    return Err(e);
                }
                total += r.value;
            }
            Ok(total.max(0.0))
        }
    }
}

/// `M_0 = ∫_0^∞ f(x) h'(x) dx`, rejecting inadmissible pairs.
pub fn m0(f: &WeightFn, model: &LevyModel) -> Result<f64> {
    let v = tail(f, model.ladder(), 0.0, 0.0);
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::Admissibility(format!("∫ f h' = {v} for {f} under {model}")));
    }
    Ok(v)
}

pub fn ay_eval(f: &WeightFn, model: &LevyModel, st: &MartingaleState) -> f64 {
    let ladder = model.ladder();
    f.value(st.s_t) * ladder.h(st.s_t - st.x_t) + tail(f, ladder, st.s_t, st.x_t)
}

/// `N_t = e^{-qt} [f(S_t) h_q(S_t - X_t) + ∫_{S_t}^∞ f(x) h_q'(x - X_t) dx]`.
pub fn n_qf_eval(f: &WeightFn, model: &LevyModel, q: f64, st: &MartingaleState, t: f64) -> Result<f64> {
    check_positive("n_qf_eval", "q", q)?;
    check_at_least("n_qf_eval", "t", t, 0.0)?;
    let ladder = model.ladder();
    let fs = f.value(st.s_t);
    let first = if fs == 0.0 { 0.0 } else { fs * ladder.h_q(q, st.s_t - st.x_t)? };
    Ok((-q * t).exp() * (first + tail_q(f, ladder, q, st.s_t, st.x_t)?))
}

/// `N_t + (q/κ(q,0)) ∫_0^t e^{-qs} f(S_s) ds`, the integral by the trapezoid rule.
pub fn m_qf_eval(f: &WeightFn, model: &LevyModel, q: f64, path: &PathSample, t: f64) -> Result<f64> {
    check_positive("m_qf_eval", "q", q)?;
    let i = path
        .index_of(t)
        .ok_or_else(|| Error::domain("m_qf_eval", format!("t = {t} not on the path grid (horizon {})", path.horizon())))?;
    let n = n_qf_eval(f, model, q, &MartingaleState::at(path, i), t)?;
    let g = |j: usize| (-q * path.times[j]).exp() * f.value(path.s[j]);
    let integral: f64 = (1..=i).map(|j| 0.5 * (g(j - 1) + g(j)) * (path.times[j] - path.times[j - 1])).sum();
    Ok(n + q / model.ladder().kappa(q, 0.0)? * integral)
}

/// `[f(S_t) P(S_{s-t} <= S_t - X_t) + ∫_{S_t}^∞ f(x) φ_{s-t}(x - X_t) dx] / n(s < ζ)`.
pub fn m_sf_eval(f: &WeightFn, model: &LevyModel, s: f64, st: &MartingaleState, t: f64) -> Result<f64> {
    if !model.is_brownian() {
        return Err(Error::unsupported("m_sf_eval", model));
    }
    check_positive("m_sf_eval", "s", s)?;
    if !(s > t) {
        return Err(Error::domain("m_sf_eval", format!("need s > t, got s = {s}, t = {t}")));
    }
    let tau = s - t;
    let d = st.s_t - st.x_t;
    let first = f.value(st.s_t) * half_normal_cdf(d, tau);
    let rest = match f.shape() {
        WeightShape::Indicator { a } => {
            if st.s_t >= *a {
                0.0
            } else {
                half_normal_cdf(a - st.x_t, tau) - half_normal_cdf(d, tau)
            }
        }
        WeightShape::ExpDecay { c } => {
            let z = (d + c * tau) / tau.sqrt();
            2.0 * (-c * st.s_t - d * d / (2.0 * tau)).exp() * mills_ratio(z) * std_normal_pdf(0.0)
        }
        WeightShape::Table { knots } => {
            // ∫ (C + B u) φ_τ(u) du with u φ_τ(u) = -τ φ_τ'(u).
            let phi = |u: f64| 2.0 * std_normal_pdf(u / tau.sqrt()) / tau.sqrt();
            WeightFn::pieces(knots)
                .filter(|&(_, x1, _, _)| x1 > st.s_t)
                .map(|(x0, x1, a, b)| {
                    let (u0, u1) = (x0.max(st.s_t) - st.x_t, x1 - st.x_t);
                    let cc = a + b * st.x_t;
                    cc * (half_normal_cdf(u1, tau) - half_normal_cdf(u0, tau)) + b * tau * (phi(u0) - phi(u1))
                })
                .sum::<f64>()
                .max(0.0)
        }
    };
    Ok((first + rest) / model.ladder().n_tail(s))
}

/// Quantile of the density `f(x) h'(x) / M_0` on `[0, ∞)`, for `u ∈ [0, 1)`.
pub fn level_quantile(f: &WeightFn, model: &LevyModel, m0: f64, u: f64) -> f64 {
    let ladder = model.ladder();
    match f.shape() {
        WeightShape::Indicator { a } => {
            let p = renewal_power(ladder);
            a * u.powf(1.0 / p)
        }
        WeightShape::ExpDecay { c } if model.is_brownian() => -(-u).ln_1p() / c,
        _ => {
            let cdf = |x: f64| 1.0 - tail(f, ladder, x, 0.0) / m0;
            let mut hi = 1.0;
            while cdf(hi) < u && hi < 1e12 {
                hi *= 2.0;
            }
            let mut lo = 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if cdf(mid) < u {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::std_normal_cdf;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn bm() -> LevyModel {
        LevyModel::brownian()
    }

    fn ind1() -> WeightFn {
        WeightFn::indicator(1.0).unwrap()
    }

    /// Tail integral by brute-force quadrature, `x = s + w²` to absorb the h' cusp.
    fn tail_oracle(f: &WeightFn, model: &LevyModel, s: f64, y: f64, hp: impl Fn(f64) -> f64) -> f64 {
        let upper = match f.shape() {
            WeightShape::Indicator { a } => (a - s).max(0.0).sqrt(),
            WeightShape::Table { knots } => (knots.last().unwrap().0 - s).max(0.0).sqrt(),
            WeightShape::ExpDecay { .. } => 12.0,
        };
        let _ = model;
        integrate(
            "oracle",
            |w| {
                let x = s + w * w;
                2.0 * w * f.value(x) * hp(x - y)
            },
            0.0,
            upper,
            Tolerance::new(1e-13, 1e-11),
        )
        .unwrap()
        .value
    }

    fn table_weight() -> WeightFn {
        WeightFn::table(vec![(0.0, 0.5), (0.4, 1.0), (1.0, 0.2), (1.5, 0.0)], "table:test").unwrap()
    }

    #[test]
    fn tail_integral_examples() {
        assert_relative_eq!(weight_tail_integral(&ind1(), &bm(), 0.5, 0.2).unwrap(), 0.5, max_relative = 1e-15);
        let c = LevyModel::cauchy();
        assert_relative_eq!(weight_tail_integral(&ind1(), &c, 0.25, 0.0).unwrap(), 0.5, max_relative = 1e-15);
        let e2 = WeightFn::exp_decay(2.0).unwrap();
        assert_relative_eq!(weight_tail_integral(&e2, &bm(), 0.0, 0.0).unwrap(), 0.5, max_relative = 1e-15);
        assert!(weight_tail_integral(&ind1(), &bm(), -0.1, -0.2).is_err());
    }

    #[test]
    fn m0_examples() {
        assert_relative_eq!(m0(&ind1(), &bm()).unwrap(), 1.0);
        assert_relative_eq!(m0(&ind1(), &LevyModel::cauchy()).unwrap(), 1.0);
        assert_relative_eq!(m0(&WeightFn::exp_decay(1.0).unwrap(), &bm()).unwrap(), 1.0);
        // Γ(1.5) for the Cauchy renewal density x^{-1/2}/2.
        assert_relative_eq!(
            m0(&WeightFn::exp_decay(1.0).unwrap(), &LevyModel::cauchy()).unwrap(),
            0.886_226_925_452_758,
            max_relative = 1e-12
        );
    }

    #[test]
    fn ay_examples() {
        let st = MartingaleState::new(1.0, 0.5, 0.2).unwrap();
        assert_relative_eq!(ay_eval(&ind1(), &bm(), &st), 0.8, max_relative = 1e-15);
        let st = MartingaleState::new(1.0, 2.0, 1.0).unwrap();
        assert_eq!(ay_eval(&ind1(), &bm(), &st), 0.0);
        let st = MartingaleState::new(1.0, 0.25, 0.0).unwrap();
        let c = LevyModel::cauchy();
        assert_relative_eq!(ay_eval(&ind1(), &c, &st), 1.0, max_relative = 1e-15);
        let q = tail_oracle(&ind1(), &c, 0.25, 0.0, |u| 0.5 / u.sqrt());
        assert_relative_eq!(q, 0.5, max_relative = 1e-9);
        assert!(MartingaleState::new(0.0, -0.1, -0.2).is_err());
        assert!(MartingaleState::new(0.0, 0.1, 0.2).is_err());
    }

    #[test]
    fn closed_form_tails_match_quadrature() {
        let c = LevyModel::cauchy();
        let stable = LevyModel::stable(1.5, 0.6).unwrap();
        let weights = [ind1(), WeightFn::exp_decay(1.3).unwrap(), table_weight()];
        for f in &weights {
            for model in [&bm(), &c, &stable] {
                let p = renewal_power(model.ladder());
                for &(s, y) in &[(0.0, 0.0), (0.3, -0.4), (0.7, 0.7), (1.2, -2.0)] {
                    let got = weight_tail_integral(f, model, s, y).unwrap();
                    let want = tail_oracle(f, model, s, y, |u| p * u.powf(p - 1.0));
                    assert!((got - want).abs() < 1e-8 * (1.0 + want), "{f} {model} ({s},{y}): {got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn n_qf_example_value() {
        let st = MartingaleState::new(1.0, 0.5, 0.2).unwrap();
        let v = n_qf_eval(&ind1(), &bm(), 0.5, &st, 1.0).unwrap();
        assert_relative_eq!(v, 0.333_998_866_678_620, max_relative = 1e-12);
        // Quadrature of the tail with h_q'(u) = e^{-u}.
        let tail = tail_oracle(&ind1(), &bm(), 0.5, 0.2, |u| (-u).exp());
        let oracle = (-0.5f64).exp() * ((1.0 - (-0.3f64).exp()) + tail);
        assert_relative_eq!(v, oracle, max_relative = 1e-10);
    }

    #[test]
    fn n_qf_tails_match_quadrature() {
        let c = LevyModel::cauchy();
        let q = 0.3;
        for f in [ind1(), WeightFn::exp_decay(1.3).unwrap(), table_weight()] {
            for &(s, y) in &[(0.0, 0.0), (0.3, -0.4)] {
                let bm_tail = tail_q(&f, bm().ladder(), q, s, y).unwrap();
                let k = (2.0 * q).sqrt();
                let want = tail_oracle(&f, &bm(), s, y, |u| (-k * u).exp());
                assert!((bm_tail - want).abs() < 1e-9, "{f} bm ({s},{y})");
                let c_tail = tail_q(&f, c.ladder(), q, s, y).unwrap();
                let want = tail_oracle(&f, &c, s, y, |u| c.ladder().hq_prime(q, u).unwrap());
                assert!((c_tail - want).abs() < 1e-7, "{f} cauchy ({s},{y}): {c_tail} vs {want}");
            }
        }
    }

    #[test]
    fn n_qf_at_origin_is_hq_mass() {
        let v = n_qf_eval(&ind1(), &bm(), 0.02, &MartingaleState::origin(), 0.0).unwrap();
        assert_relative_eq!(v, 0.906_346_234_610_091, max_relative = 1e-12);
    }

    #[test]
    fn q_limit_is_monotone() {
        let states = [
            MartingaleState::new(1.0, 0.5, 0.2).unwrap(),
            MartingaleState::new(2.0, 0.9, -1.0).unwrap(),
            MartingaleState::new(0.5, 0.1, 0.1).unwrap(),
        ];
        for model in [bm(), LevyModel::cauchy()] {
            for f in [ind1(), WeightFn::exp_decay(1.0).unwrap()] {
                for st in &states {
                    let target = ay_eval(&f, &model, st);
                    let mut prev = f64::INFINITY;
                    for k in 0..=6 {
                        let q = 10f64.powi(-k);
                        let gap = (n_qf_eval(&f, &model, q, st, 0.0).unwrap() - target).abs();
                        assert!(gap < prev + 1e-9, "{f} {model} k={k}: {gap} !< {prev}");
                        prev = gap;
                    }
                    assert!(prev < 5e-3, "{f} {model}: final gap {prev}");
                }
            }
        }
    }

    #[test]
    fn m_qf_gap_bound_and_vanishing() {
        let mut streams = crate::path_sim::Streams::new(3, 0);
        let raw = crate::path_sim::simulate_path(&bm(), 1.0, 1e-3, &mut streams.path).unwrap();
        let path = crate::path_sim::refine_supremum_brownian(&raw, &mut streams.refine).unwrap();
        let st = MartingaleState::at(&path, path.len() - 1);
        let q = 0.01;
        let gap = m_qf_eval(&ind1(), &bm(), q, &path, 1.0).unwrap() - n_qf_eval(&ind1(), &bm(), q, &st, 1.0).unwrap();
        assert!((0.0..=(q / 2.0f64).sqrt()).contains(&gap), "gap {gap}");
        // A weight supported below the path's positive excursion contributes nothing.
        let mut high = path.clone();
        for (x, s) in high.x.iter_mut().zip(high.s.iter_mut()) {
            *x += 5.0;
            *s += 5.0;
        }
        let n = n_qf_eval(&ind1(), &bm(), q, &MartingaleState::at(&high, high.len() - 1), 1.0).unwrap();
        assert_eq!(m_qf_eval(&ind1(), &bm(), q, &high, 1.0).unwrap(), n);
        assert!(m_qf_eval(&ind1(), &bm(), q, &path, 1.5).is_err());
    }

    #[test]
    fn m_sf_examples() {
        let origin = MartingaleState::origin();
        for &(s, exact) in &[(4.0, 0.959_850_437_919_768), (16.0, 0.989_680_267_367_011), (64.0, 0.997_401_925_512_917)] {
            let v = m_sf_eval(&ind1(), &bm(), s, &origin, 0.0).unwrap();
            assert_relative_eq!(v, exact, max_relative = 1e-12);
            let oracle = (2.0 * std_normal_cdf(1.0 / f64::sqrt(s)) - 1.0) / (2.0 / (std::f64::consts::PI * s)).sqrt();
            assert_relative_eq!(v, oracle, max_relative = 1e-12);
            assert!((v - 1.0).abs() <= 1.0 / (6.0 * s) + 0.005);
        }
        let st = MartingaleState::new(0.3, 1.2, 0.4).unwrap();
        assert_eq!(m_sf_eval(&ind1(), &bm(), 5.0, &st, 0.3).unwrap(), 0.0);
        assert!(m_sf_eval(&ind1(), &LevyModel::cauchy(), 5.0, &st, 0.3).is_err());
        assert!(m_sf_eval(&ind1(), &bm(), 0.3, &st, 0.3).is_err());
    }

    #[test]
    fn m_sf_tails_match_quadrature_and_limit() {
        let st = MartingaleState::new(0.5, 0.35, -0.3).unwrap();
        for f in [ind1(), WeightFn::exp_decay(1.7).unwrap(), table_weight()] {
            let tau: f64 = 2.5;
            let phi = |u: f64| (2.0 / (std::f64::consts::PI * tau)).sqrt() * (-u * u / (2.0 * tau)).exp();
            let want = (f.value(st.s_t) * half_normal_cdf(st.s_t - st.x_t, tau)
                + tail_oracle(&f, &bm(), st.s_t, st.x_t, phi))
                / bm().ladder().n_tail(3.0);
            let got = m_sf_eval(&f, &bm(), 3.0, &st, 0.5).unwrap();
            assert!((got - want).abs() < 1e-8, "{f}: {got} vs {want}");
            let far = m_sf_eval(&f, &bm(), 1e8, &st, 0.5).unwrap();
            assert!((far - ay_eval(&f, &bm(), &st)).abs() < 1e-3, "{f} s->inf");
        }
        // Large Mills-ratio argument stays finite.
        let v = m_sf_eval(&WeightFn::exp_decay(50.0).unwrap(), &bm(), 1.0 + 1e-6, &MartingaleState::new(1.0, 3.0, 0.0).unwrap(), 1.0);
        assert!(v.unwrap().is_finite());
    }

    #[test]
    fn level_quantiles_invert_cdf() {
        for model in [bm(), LevyModel::cauchy()] {
            for f in [ind1(), WeightFn::exp_decay(0.7).unwrap(), table_weight()] {
                let m = m0(&f, &model).unwrap();
                for &u in &[0.0, 0.1, 0.5, 0.93] {
                    let x = level_quantile(&f, &model, m, u);
                    let cdf = 1.0 - weight_tail_integral(&f, &model, x, 0.0).unwrap() / m;
                    assert!((cdf - u).abs() < 1e-10, "{f} {model} u={u}: cdf {cdf}");
                }
            }
        }
    }

    #[test]
    fn parse_weights() {
        assert_eq!(WeightFn::parse("indicator:a=1").unwrap(), ind1());
        assert_eq!(WeightFn::parse("expdecay:c=2").unwrap().to_string(), "expdecay:c=2");
        assert!(matches!(WeightFn::parse("indicator:b=1"), Err(Error::Parse { .. })));
        assert!(WeightFn::parse("indicator:a=-1").is_err());
        assert!(WeightFn::parse("box:a=1").is_err());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.csv");
        std::fs::write(&p, "x,f\n0,0.5\n0.4,1\n1,0.2\n1.5,0\n").unwrap();
        let w = WeightFn::parse(&format!("table:{}", p.display())).unwrap();
        assert_eq!(w.shape(), table_weight().shape());
        std::fs::write(&p, "x,f\n0,1\n1,-1\n").unwrap();
        assert!(matches!(WeightFn::parse(&format!("table:{}", p.display())), Err(Error::Admissibility(_))));
        assert!(WeightFn::parse("table:/nonexistent/w.csv").is_err());
    }

    #[test]
    fn table_values() {
        let w = table_weight();
        assert_eq!(w.value(-0.1), 0.0);
        assert_eq!(w.value(0.0), 0.5);
        assert_relative_eq!(w.value(0.2), 0.75);
        assert_eq!(w.value(1.5), 0.0);
        assert_eq!(w.value(2.0), 0.0);
        assert_eq!(w.sup(), 1.0);
    }

    proptest! {
        #[test]
        fn evaluators_are_nonnegative(s in 0.0f64..3.0, gap in 0.0f64..3.0, q in 1e-4f64..5.0, c in 0.1f64..4.0) {
            let st = MartingaleState::new(0.5, s, s - gap).unwrap();
            for f in [ind1(), WeightFn::exp_decay(c).unwrap(), table_weight()] {
                prop_assert!(ay_eval(&f, &bm(), &st) >= 0.0);
                prop_assert!(ay_eval(&f, &LevyModel::cauchy(), &st) >= 0.0);
                prop_assert!(n_qf_eval(&f, &bm(), q, &st, 0.5).unwrap() >= 0.0);
                prop_assert!(m_sf_eval(&f, &bm(), 1.0 + q, &st, 0.5).unwrap() >= 0.0);
            }
        }
    }
}
