//! Monte Carlo penalization experiments and the two samplers of the
//! penalized law.
//!
//! Every experiment draws replica `i` from the streams `(seed, i, purpose)`,
//! so runs that differ only in the clock parameter share paths and clock
//! draws (`e_q = E / q` with the same `E`).

use crate::azema_yor::{ay_eval, level_quantile, m0, m_sf_eval, n_qf_eval, MartingaleState, WeightFn};
use crate::error::{check_at_least, check_positive, Error, Result};
use crate::exec::{map_collect, map_reduce, Runtime};
use crate::levy_models::LevyModel;
use crate::mc_stats::{delta_ratio_ci, effective_sample_size, ks_distance, PairMoments, StreamingMoments, WeightedEcdf};
use crate::path_sim::{first_passage, ClockSpec, FirstPassage, PathSample, Streams, Walker};
use crate::rng::{stream, Purpose};
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundedMap {
    Logistic,
    Tanh,
}

/// A bounded functional of the path on `[0, t]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FunctionalSpec {
    One,
    IndicatorXle { b: f64 },
    /// `b = ∞` is allowed.
    IndicatorSle { b: f64 },
    BoundedOfX(BoundedMap),
}

impl FunctionalSpec {
    /// Parse `one`, `x-le:b=<b>`, `s-le:b=<b|inf>`, `logistic` or `tanh`.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        match spec {
            "one" => return Ok(FunctionalSpec::One),
            "logistic" => return Ok(FunctionalSpec::BoundedOfX(BoundedMap::Logistic)),
            "tanh" => return Ok(FunctionalSpec::BoundedOfX(BoundedMap::Tanh)),
            _ => {}
        }
        let (kind, rest) = spec
            .split_once(':')
            .ok_or_else(|| Error::parse(spec, "expected one, x-le:b=, s-le:b=, logistic or tanh"))?;
        let b: f64 = rest
            .strip_prefix("b=")
            .ok_or_else(|| Error::parse(rest, "expected b=<value>"))?
            .trim()
            .parse()
            .map_err(|_| Error::parse(rest, "not a number"))?;
        if b.is_nan() {
            return Err(Error::parse(rest, "NaN level"));
        }
        match kind {
            "x-le" => Ok(FunctionalSpec::IndicatorXle { b }),
            "s-le" if b > 0.0 => Ok(FunctionalSpec::IndicatorSle { b }),
            "s-le" => Err(Error::parse(rest, "s-le level must be positive")),
            other => Err(Error::parse(other, "unknown functional")),
        }
    }

    pub fn eval(&self, x_t: f64, s_t: f64) -> f64 {
        match *self {
            FunctionalSpec::One => 1.0,
            FunctionalSpec::IndicatorXle { b } => f64::from(u8::from(x_t <= b)),
            FunctionalSpec::IndicatorSle { b } => f64::from(u8::from(s_t <= b)),
            FunctionalSpec::BoundedOfX(BoundedMap::Logistic) => 1.0 / (1.0 + (-x_t).exp()),
            FunctionalSpec::BoundedOfX(BoundedMap::Tanh) => x_t.tanh(),
        }
    }
}

impl fmt::Display for FunctionalSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FunctionalSpec::One => write!(f, "one"),
            FunctionalSpec::IndicatorXle { b } => write!(f, "x-le:b={b}"),
            FunctionalSpec::IndicatorSle { b } => write!(f, "s-le:b={b}"),
            FunctionalSpec::BoundedOfX(BoundedMap::Logistic) => write!(f, "logistic"),
            FunctionalSpec::BoundedOfX(BoundedMap::Tanh) => write!(f, "tanh"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub n_paths: u64,
    pub dt: f64,
    pub seed: u64,
    /// Bridge-maximum refinement; Brownian only, ignored otherwise.
    pub refine: bool,
    pub runtime: Runtime,
}

impl McConfig {
    pub fn new(n_paths: u64, dt: f64, seed: u64) -> Self {
        Self {
            n_paths,
            dt,
            seed,
            refine: true,
            runtime: Runtime::default(),
        }
    }

    fn validate(&self, op: &'static str, min_paths: u64) -> Result<()> {
        check_positive(op, "dt", self.dt)?;
        if self.n_paths < min_paths {
            return Err(Error::domain(op, format!("n_paths = {} must be >= {min_paths}", self.n_paths)));
        }
        Ok(())
    }

    fn walker(&self, model: &LevyModel, replica: u64) -> Walker {
        Walker::new(model, self.dt, self.refine && model.is_brownian(), Streams::new(self.seed, replica))
            .expect("dt validated and refinement gated on the model")
    }
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_err: f64,
    pub n: u64,
}

impl Estimate {
    fn from_moments(m: &StreamingMoments) -> Self {
        Self {
            value: m.mean(),
            std_err: m.std_err(),
            n: m.n,
        }
    }

    fn from_ratio(p: &PairMoments) -> Result<Self> {
        let (value, std_err) = delta_ratio_ci(p)?;
        Ok(Self { value, std_err, n: p.n() })
    }
}

/// `√(se₁² + se₂²)`.
pub fn combined_se(a: &Estimate, b: &Estimate) -> f64 {
    a.std_err.hypot(b.std_err)
}

fn clock_draw(seed: u64, replica: u64) -> f64 {
    stream(seed, replica, Purpose::Clock).sample(Exp1)
}

/// `P[F_t f(S_{e_q})] / P[f(S_{e_q})]`.
pub fn exp_clock_ratio(
    f: &WeightFn,
    model: &LevyModel,
    functional: FunctionalSpec,
    q: f64,
    t: f64,
    cfg: &McConfig,
) -> Result<Estimate> {
    cfg.validate("exp_clock_ratio", 100)?;
    check_positive("exp_clock_ratio", "q", q)?;
    check_at_least("exp_clock_ratio", "t", t, 0.0)?;
    let pairs = map_reduce(
        cfg.runtime,
        cfg.n_paths,
        PairMoments::default,
        |acc, i| {
            let clock = clock_draw(cfg.seed, i) / q;
            let mut w = cfg.walker(model, i);
            let (s_clock, ft);
            if clock <= t {
                w.advance_exact_to(clock);
                s_clock = w.s();
                w.advance_exact_to(t);
                ft = functional.eval(w.x(), w.s());
            } else {
                w.advance_exact_to(t);
                ft = functional.eval(w.x(), w.s());
                w.advance_unobserved(clock - w.t());
                s_clock = w.s();
            }
            let fs = f.value(s_clock);
            acc.push(ft * fs, fs);
        },
        |a, b| a.merge(&b),
    );
    Estimate::from_ratio(&pairs)
}

/// `P[F_t M_t / M_0]`, the penalized expectation of `F_t`.
pub fn penalized_target(
    f: &WeightFn,
    model: &LevyModel,
    functional: FunctionalSpec,
    t: f64,
    cfg: &McConfig,
) -> Result<Estimate> {
    cfg.validate("penalized_target", 2)?;
    check_at_least("penalized_target", "t", t, 0.0)?;
    let m0 = m0(f, model)?;
    let m = map_reduce(
        cfg.runtime,
        cfg.n_paths,
        StreamingMoments::default,
        |acc, i| {
            let mut w = cfg.walker(model, i);
            w.advance_exact_to(t);
            let st = MartingaleState { t, s_t: w.s(), x_t: w.x() };
            acc.push(functional.eval(w.x(), w.s()) * ay_eval(f, model, &st) / m0);
        },
        |a, b| a.merge(&b),
    );
    Ok(Estimate::from_moments(&m))
}

/// `P[F_t f(S_s)] / P[f(S_s)]` for Brownian motion.
pub fn const_clock_ratio(
    f: &WeightFn,
    model: &LevyModel,
    functional: FunctionalSpec,
    s: f64,
    t: f64,
    cfg: &McConfig,
) -> Result<Estimate> {
    if !model.is_brownian() {
        return Err(Error::unsupported("const_clock_ratio", model));
    }
    cfg.validate("const_clock_ratio", 100)?;
    check_at_least("const_clock_ratio", "t", t, 0.0)?;
    if !(s > t) {
        return Err(Error::domain("const_clock_ratio", format!("need s > t, got s = {s}, t = {t}")));
    }
    let pairs = map_reduce(
        cfg.runtime,
        cfg.n_paths,
        PairMoments::default,
        |acc, i| {
            let mut w = cfg.walker(model, i);
            w.advance_exact_to(t);
            let ft = functional.eval(w.x(), w.s());
            w.advance_unobserved(s - w.t());
            let fs = f.value(w.s());
            acc.push(ft * fs, fs);
        },
        |a, b| a.merge(&b),
    );
    Estimate::from_ratio(&pairs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassEstimate {
    pub estimate: Estimate,
    /// Exact value at this clock parameter, where a closed form or inversion exists.
    pub exact: Option<f64>,
    /// The clock-free limit `M_0`.
    pub limit: f64,
}

/// `E[f(S_τ)] / κ(q,0)` for `τ = e_q`, or `E[f(S_s)] / n(s<ζ)` for `τ = s`.
pub fn normalized_mass(f: &WeightFn, model: &LevyModel, clock: ClockSpec, cfg: &McConfig) -> Result<MassEstimate> {
    cfg.validate("normalized_mass", 2)?;
    let limit = m0(f, model)?;
    let ladder = model.ladder();
    let (norm, exact) = match clock {
        ClockSpec::Exponential { q } => {
            let exact = match n_qf_eval(f, model, q, &MartingaleState::origin(), 0.0) {
                Ok(v) => Some(v),
                Err(Error::Unsupported { .. }) => None,
                Err(e) => return Err(e),
            };
            (ladder.kappa(q, 0.0)?, exact)
        }
        ClockSpec::Constant { s } => {
            if !model.is_brownian() {
                return Err(Error::unsupported("normalized_mass (constant clock)", model));
            }
            (ladder.n_tail(s), Some(m_sf_eval(f, model, s, &MartingaleState::origin(), 0.0)?))
        }
    };
    let m = map_reduce(
        cfg.runtime,
        cfg.n_paths,
        StreamingMoments::default,
        |acc, i| {
            let horizon = match clock {
                ClockSpec::Exponential { q } => clock_draw(cfg.seed, i) / q,
                ClockSpec::Constant { s } => s,
            };
            let mut w = cfg.walker(model, i);
            w.advance_unobserved(horizon);
            acc.push(f.value(w.s()) / norm);
        },
        |a, b| a.merge(&b),
    );
    Ok(MassEstimate {
        estimate: Estimate::from_moments(&m),
        exact,
        limit,
    })
}

/// Paths on `[0, t]` weighted by `M_t / M_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample {
    pub t: f64,
    pub x_t: Vec<f64>,
    pub s_t: Vec<f64>,
    pub s_half: Vec<f64>,
    pub weights: Vec<f64>,
    pub mean_weight: Estimate,
    pub ess: f64,
    /// Effective sample size below 1% of the path count.
    pub low_ess: bool,
}

impl WeightedSample {
    /// Weighted frequency of `S_t > S_{t/2}`: a proxy for `P^f(g > t/2)`.
    pub fn late_max_fraction(&self) -> f64 {
        let total: f64 = self.weights.iter().sum();
        let late: f64 = self
            .weights
            .iter()
            .zip(self.s_t.iter().zip(&self.s_half))
            .filter(|(_, (s, h))| s > h)
            .map(|(w, _)| w)
            .sum();
        late / total
    }

    pub fn sup_ecdf(&self) -> Result<WeightedEcdf> {
        WeightedEcdf::new(&self.s_t, &self.weights)
    }

    pub fn x_ecdf(&self) -> Result<WeightedEcdf> {
        WeightedEcdf::new(&self.x_t, &self.weights)
    }
}

pub fn importance_sample_penalized(f: &WeightFn, model: &LevyModel, t: f64, cfg: &McConfig) -> Result<WeightedSample> {
    cfg.validate("importance_sample_penalized", 2)?;
    check_at_least("importance_sample_penalized", "t", t, 0.0)?;
    let m0 = m0(f, model)?;
    let draws = map_collect(cfg.runtime, cfg.n_paths, |i| {
        let mut w = cfg.walker(model, i);
        w.advance_exact_to(0.5 * t);
        let half = w.s();
        w.advance_exact_to(t);
        let st = MartingaleState { t, s_t: w.s(), x_t: w.x() };
        (w.x(), w.s(), half, ay_eval(f, model, &st) / m0)
    });
    let n = draws.len();
    let mut out = WeightedSample {
        t,
        x_t: Vec::with_capacity(n),
        s_t: Vec::with_capacity(n),
        s_half: Vec::with_capacity(n),
        weights: Vec::with_capacity(n),
        mean_weight: Estimate { value: 0.0, std_err: 0.0, n: 0 },
        ess: 0.0,
        low_ess: false,
    };
    for (x, s, h, w) in draws {
        out.x_t.push(x);
        out.s_t.push(s);
        out.s_half.push(h);
        out.weights.push(w);
    }
    out.mean_weight = Estimate::from_moments(&out.weights.iter().copied().collect());
    out.ess = effective_sample_size(&out.weights);
    out.low_ess = out.ess < 0.01 * n as f64;
    if !(out.mean_weight.value > 0.0) {
        return Err(Error::Degenerate(format!(
            "all {n} importance weights vanish; increase the path count or use a weight with more mass"
        )));
    }
    Ok(out)
}

/// A path of the penalized Brownian law assembled from its pieces.
#[derive(Debug, Clone, PartialEq)]
pub struct PenalizedPath {
    pub s_inf: f64,
    pub pre_max: PathSample,
    pub g: f64,
    /// `X_g - X_{g+u}` at `u = 0, dt, 2dt, ...`.
    pub post_max: Vec<f64>,
}

impl PenalizedPath {
    /// `X_t`, from the pre-maximum path when `t <= g`.
    pub fn x_at(&self, t: f64) -> Option<f64> {
        if t <= self.g {
            return self.pre_max.index_of(t).map(|i| self.pre_max.x[i]);
        }
        let k = ((t - self.g) / self.pre_max.dt).round() as usize;
        self.post_max.get(k).map(|r| self.s_inf - r)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decomposition {
    Sampled(PenalizedPath),
    /// First passage to `s_inf` did not occur before `cap`.
    Censored { s_inf: f64, cap: f64, path: PathSample },
}

/// Norm of a 3-dimensional Brownian motion from 0 on the grid `dt`.
pub fn bessel3_path(u_max: f64, dt: f64, seed: u64, replica: u64) -> Vec<f64> {
    let n = (u_max / dt - 1e-9).ceil().max(0.0) as usize;
    let mut rng = stream(seed, replica, Purpose::PostMax);
    let sd = dt.sqrt();
    let mut b = [0.0f64; 3];
    let mut out = Vec::with_capacity(n + 1);
    out.push(0.0);
    for _ in 0..n {
        for c in &mut b {
            *c += sd * rng.sample::<f64, _>(StandardNormal);
        }
        out.push((b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt());
    }
    out
}

/// Sample one penalized Brownian path: `S_∞` from `f/M_0`, the path up to
/// its first passage above `S_∞`, then a Bessel(3) decrement.
pub fn decompose_sample_brownian(
    f: &WeightFn,
    u_max: f64,
    dt: f64,
    cap: f64,
    seed: u64,
    replica: u64,
) -> Result<Decomposition> {
    let model = LevyModel::brownian();
    check_positive("decompose_sample_brownian", "u_max", u_max)?;
    check_positive("decompose_sample_brownian", "dt", dt)?;
    let m0 = m0(f, &model)?;
    let u: f64 = stream(seed, replica, Purpose::Level).random();
    let s_inf = level_quantile(f, &model, m0, u);
    let (g, pre_max) = if s_inf > 0.0 {
        match first_passage(&model, s_inf, dt, cap, Streams::new(seed, replica), replica)? {
            FirstPassage::Hit { time, mut path } => {
                let last = path.len() - 1;
                path.x[last] = s_inf;
                path.s[last] = s_inf;
                (time, path)
            }
            FirstPassage::Censored { cap, path } => return Ok(Decomposition::Censored { s_inf, cap, path }),
        }
    } else {
        let mut p = Walker::new(&model, dt, true, Streams::new(seed, replica))?
            .recording(model.kind(), replica)
            .into_path()
            .expect("recording enabled");
        p.refined = true;
        (0.0, p)
    };
    Ok(Decomposition::Sampled(PenalizedPath {
        s_inf,
        pre_max,
        g,
        post_max: bessel3_path(u_max, dt, seed, replica),
    }))
}

/// Summary of many decomposition samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionStudy {
    pub s_inf: Vec<f64>,
    /// `(g, post_max at u_probe)` for uncensored samples.
    pub g_and_probe: Vec<(f64, f64)>,
    pub censored: u64,
    pub u_probe: f64,
}

pub fn decomposition_study(
    f: &WeightFn,
    u_probe: f64,
    dt: f64,
    cap: f64,
    n: u64,
    seed: u64,
    runtime: Runtime,
) -> Result<DecompositionStudy> {
    let k = (u_probe / dt).round() as usize;
    let results = map_collect(runtime, n, |i| decompose_sample_brownian(f, u_probe, dt, cap, seed, i));
    let mut study = DecompositionStudy {
        s_inf: Vec::with_capacity(n as usize),
        g_and_probe: Vec::with_capacity(n as usize),
        censored: 0,
        u_probe,
    };
    for r in results {
        match r? {
            Decomposition::Sampled(p) => {
                study.s_inf.push(p.s_inf);
                study.g_and_probe.push((p.g, p.post_max[k]));
            }
            Decomposition::Censored { s_inf, .. } => {
                study.s_inf.push(s_inf);
                study.censored += 1;
            }
        }
    }
    Ok(study)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crosscheck {
    pub ks: f64,
    /// Fraction of decomposition samples whose maximum time exceeds `t`;
    /// their `X_t` is read off the pre-maximum path.
    pub late_max_fraction: f64,
    /// Importance-weighted frequency of `S_t > S_{t/2}`.
    pub weighted_late_increase: f64,
    pub censored_fraction: f64,
    pub inconclusive: bool,
    pub low_ess: bool,
}

/// Weighted KS distance between the `X_t` laws of the two samplers.
pub fn crosscheck_samplers(f: &WeightFn, model: &LevyModel, t: f64, cfg: &McConfig) -> Result<Crosscheck> {
    if !model.is_brownian() {
        return Err(Error::unsupported("crosscheck_samplers", model));
    }
    cfg.validate("crosscheck_samplers", 2)?;
    check_at_least("crosscheck_samplers", "t", t, 0.0)?;
    if t == 0.0 {
        return Ok(Crosscheck {
            ks: 0.0,
            late_max_fraction: 0.0,
            weighted_late_increase: 0.0,
            censored_fraction: 0.0,
            inconclusive: false,
            low_ess: false,
        });
    }
    let weighted = importance_sample_penalized(f, model, t, cfg)?;
    // Independent replicas for the second sampler.
    let seed = cfg.seed ^ 0x005e_ed0f_dec0;
    let dt = cfg.dt;
    let results = map_collect(cfg.runtime, cfg.n_paths, |i| decompose_sample_brownian(f, t, dt, t, seed, i));
    let mut xs = Vec::with_capacity(results.len());
    let mut late = 0u64;
    let mut censored = 0u64;
    for r in results {
        match r? {
            Decomposition::Sampled(p) => {
                if p.g > t {
                    late += 1;
                }
                match p.x_at(t) {
                    Some(x) => xs.push(x),
                    None => censored += 1,
                }
            }
            // Under the penalized law the maximum comes after t on this event,
            // so X_t is the pre-maximum path at t.
            Decomposition::Censored { path, .. } => {
                late += 1;
                xs.push(*path.x.last().expect("non-empty path"));
            }
        }
    }
    let n = cfg.n_paths as f64;
    let censored_fraction = censored as f64 / n;
    let ks = ks_distance(&weighted.x_ecdf()?, &WeightedEcdf::unweighted(&xs)?)?;
    Ok(Crosscheck {
        ks,
        late_max_fraction: late as f64 / n,
        weighted_late_increase: weighted.late_max_fraction(),
        censored_fraction,
        inconclusive: censored_fraction > 0.05,
        low_ess: weighted.low_ess,
    })
}

/// Mean of `M_t` at each of `times` over one set of paths.
pub fn martingale_means(f: &WeightFn, model: &LevyModel, times: &[f64], cfg: &McConfig) -> Result<Vec<Estimate>> {
    Ok(martingale_means_halving(f, model, times, cfg, false)?.0)
}

/// As [`martingale_means`], also returning the estimates on the grid `2 dt`
/// built from the same increments (pairwise sums).
pub fn martingale_means_halving(
    f: &WeightFn,
    model: &LevyModel,
    times: &[f64],
    cfg: &McConfig,
    with_coarse: bool,
) -> Result<(Vec<Estimate>, Vec<Estimate>)> {
    cfg.validate("martingale_means", 2)?;
    for &t in times {
        check_at_least("martingale_means", "t", t, 0.0)?;
    }
    let k = times.len();
    let acc = map_reduce(
        cfg.runtime,
        cfg.n_paths,
        || vec![StreamingMoments::default(); 2 * k],
        |acc, i| {
            let mut w = cfg.walker(model, i);
            let mut coarse_s = 0.0f64;
            for (j, &t) in times.iter().enumerate() {
                if with_coarse {
                    while w.t() < t - 1e-9 * cfg.dt {
                        w.step();
                        w.step();
                        coarse_s = coarse_s.max(w.x());
                    }
                    let st = MartingaleState { t, s_t: coarse_s, x_t: w.x() };
                    acc[k + j].push(ay_eval(f, model, &st));
                } else {
                    w.advance_exact_to(t);
                }
                let st = MartingaleState { t, s_t: w.s(), x_t: w.x() };
                acc[j].push(ay_eval(f, model, &st));
            }
        },
        |a, b| {
            for (x, y) in a.iter_mut().zip(&b) {
                x.merge(y);
            }
        },
    );
    let fine = acc[..k].iter().map(Estimate::from_moments).collect();
    let coarse = if with_coarse {
        acc[k..].iter().map(Estimate::from_moments).collect()
    } else {
        Vec::new()
    };
    Ok((fine, coarse))
}

/// `P^f(S_t <= b)` for Brownian motion and `f = 1_{[0,a]}`.
pub fn penalized_sup_cdf_brownian(a: f64, b: f64, t: f64) -> f64 {
    if b <= 0.0 {
        return 0.0;
    }
    if b >= a {
        return 1.0;
    }
    let p = crate::numerics::half_normal_cdf(b, t);
    p + (b / a) * (1.0 - p)
}

/// One row of a convergence table.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub experiment: String,
    pub model: String,
    pub weight: String,
    pub functional: String,
    pub clock_param: f64,
    pub estimate: f64,
    pub std_err: f64,
    pub target: f64,
    pub abs_err: f64,
    pub n_paths: u64,
    pub dt: f64,
    pub seed: u64,
    pub pass: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
}

impl ExperimentReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}
