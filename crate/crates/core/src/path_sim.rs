//! Discretized paths, running suprema and clocks.
//!
//! Brownian paths can be *refined*: each grid cell's maximum is drawn from
//! the exact law of a Brownian bridge maximum, so the refined supremum has
//! exactly the law of the continuous-time supremum at grid times. Stable
//! paths use the grid maximum.

use crate::error::{check_positive, Error, Result};
use crate::levy_models::{LevyModel, ModelKind};
use crate::rng::{stream, Purpose};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use std::f64::consts::PI;
use std::io::{Read, Write};

/// Sub-steps used for an unobserved stable segment of any length.
pub const MAX_CONTINUATION_STEPS: u64 = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub dt: f64,
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    pub s: Vec<f64>,
    pub refined: bool,
    pub seed_path: u64,
    pub source: ModelKind,
}

impl PathSample {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    /// `R = S - X`.
    pub fn reflected(&self) -> Vec<f64> {
        self.s.iter().zip(&self.x).map(|(s, x)| s - x).collect()
    }

    /// Grid index of time `t`, if `t` lies on the path.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let i = (t / self.dt).round();
        if i < 0.0 || (i * self.dt - t).abs() > 1e-9 * self.dt.max(t) {
            return None;
        }
        let i = i as usize;
        (i < self.len()).then_some(i)
    }

    fn with_capacity(dt: f64, n: usize, refined: bool, seed_path: u64, source: ModelKind) -> Self {
        let mut p = Self {
            dt,
            times: Vec::with_capacity(n),
            x: Vec::with_capacity(n),
            s: Vec::with_capacity(n),
            refined,
            seed_path,
            source,
        };
        p.push(0.0, 0.0, 0.0);
        p
    }

    fn push(&mut self, t: f64, x: f64, s: f64) {
        self.times.push(t);
        self.x.push(x);
        self.s.push(s);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClockSpec {
    Exponential { q: f64 },
    Constant { s: f64 },
}

impl ClockSpec {
    pub fn exponential(q: f64) -> Result<Self> {
        check_positive("clock", "q", q)?;
        Ok(ClockSpec::Exponential { q })
    }

    pub fn constant(s: f64) -> Result<Self> {
        check_positive("clock", "s", s)?;
        Ok(ClockSpec::Constant { s })
    }

    pub fn param(&self) -> f64 {
        match *self {
            ClockSpec::Exponential { q } => q,
            ClockSpec::Constant { s } => s,
        }
    }
}

pub fn sample_clock<R: Rng + ?Sized>(spec: ClockSpec, rng: &mut R) -> f64 {
    match spec {
        ClockSpec::Exponential { q } => rng.sample::<f64, _>(Exp1) / q,
        ClockSpec::Constant { s } => s,
    }
}

/// Exact one-step transition law, precomputed per model.
#[derive(Debug, Clone, Copy)]
pub enum IncrementLaw {
    Brownian,
    Cauchy,
    Stable {
        alpha: f64,
        inv_alpha: f64,
        xi: f64,
        scale: f64,
        tail_exp: f64,
    },
}

impl IncrementLaw {
    pub fn for_model(model: &LevyModel) -> Self {
        match model.kind() {
            ModelKind::BrownianStd => IncrementLaw::Brownian,
            ModelKind::Stable { alpha, .. } if alpha == 1.0 => IncrementLaw::Cauchy,
            ModelKind::Stable { alpha, rho } => {
                let xi = PI * (rho - 0.5);
                IncrementLaw::Stable {
                    alpha,
                    inv_alpha: 1.0 / alpha,
                    xi,
                    scale: (alpha * xi).cos().powf(-1.0 / alpha),
                    tail_exp: (1.0 - alpha) / alpha,
                }
            }
        }
    }

    /// Skewness `β` of the stable law, `tan(πα(ρ-1/2)) / tan(πα/2)`.
    pub fn skewness(&self) -> f64 {
        match *self {
            IncrementLaw::Stable { alpha, xi, .. } => (alpha * xi).tan() / (PI * alpha / 2.0).tan(),
            _ => 0.0,
        }
    }

    /// `dt^{1/α}`, the self-similar scale of an increment over `dt`.
    pub fn time_scale(&self, dt: f64) -> f64 {
        match *self {
            IncrementLaw::Brownian => dt.sqrt(),
            IncrementLaw::Cauchy => dt,
            IncrementLaw::Stable { inv_alpha, .. } => dt.powf(inv_alpha),
        }
    }

    /// An increment over unit time.
    pub fn unit<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            IncrementLaw::Brownian => rng.sample(StandardNormal),
            IncrementLaw::Cauchy => open_angle(rng).tan(),
            IncrementLaw::Stable {
                alpha,
                inv_alpha,
                xi,
                scale,
                tail_exp,
            } => {
                // Chambers-Mallows-Stuck in the strictly stable form.
                let v = open_angle(rng);
                let w: f64 = rng.sample(Exp1);
                let a = alpha * (v + xi);
                scale * a.sin() / v.cos().powf(inv_alpha) * ((v - a).cos() / w).powf(tail_exp)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R) -> f64 {
        self.time_scale(dt) * self.unit(rng)
    }
}

/// Uniform on the open interval `(-π/2, π/2)`.
fn open_angle<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return PI * (u - 0.5);
        }
    }
}

/// One exact transition of `model` over `dt`.
pub fn sample_increment<R: Rng + ?Sized>(model: &LevyModel, dt: f64, rng: &mut R) -> Result<f64> {
    check_positive("sample_increment", "dt", dt)?;
    Ok(IncrementLaw::for_model(model).sample(dt, rng))
}

/// Maximum of a Brownian bridge from `a` to `b` over time `h`, given `u ∈ (0, 1]`.
pub fn bridge_max(a: f64, b: f64, h: f64, u: f64) -> f64 {
    let d = b - a;
    0.5 * (a + b + (d * d - 2.0 * h * u.ln()).sqrt())
}

fn unit_open_closed<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

fn grid_steps(op: &'static str, horizon: f64, dt: f64) -> Result<usize> {
    check_positive(op, "dt", dt)?;
    check_positive(op, "horizon", horizon)?;
    if horizon < dt * (1.0 - 1e-12) {
        return Err(Error::domain(op, format!("horizon {horizon} shorter than dt {dt}")));
    }
    Ok((horizon / dt - 1e-9).ceil() as usize)
}

/// Unrefined path on `[0, horizon]`.
pub fn simulate_path<R: Rng + ?Sized>(
    model: &LevyModel,
    horizon: f64,
    dt: f64,
    rng: &mut R,
) -> Result<PathSample> {
    let n = grid_steps("simulate_path", horizon, dt)?;
    let law = IncrementLaw::for_model(model);
    let scale = law.time_scale(dt);
    let mut path = PathSample::with_capacity(dt, n + 1, false, 0, model.kind());
    let (mut x, mut s) = (0.0f64, 0.0f64);
    for i in 1..=n {
        x += scale * law.unit(rng);
        s = s.max(x);
        path.push(i as f64 * dt, x, s);
    }
    Ok(path)
}

/// Replace grid maxima by Brownian bridge maxima.
pub fn refine_supremum_brownian<R: Rng + ?Sized>(path: &PathSample, rng: &mut R) -> Result<PathSample> {
    if !path.source.is_brownian() {
        return Err(Error::unsupported("refine_supremum_brownian", path.source));
    }
    if path.refined {
        return Err(Error::domain("refine_supremum_brownian", "path is already refined"));
    }
    let mut out = path.clone();
    out.refined = true;
    let mut s = 0.0f64;
    for i in 1..path.len() {
        let m = bridge_max(path.x[i - 1], path.x[i], path.dt, unit_open_closed(rng));
        s = s.max(m);
        out.s[i] = s;
    }
    Ok(out)
}

/// The per-replica random streams a walker consumes.
#[derive(Debug, Clone)]
pub struct Streams {
    pub path: ChaCha8Rng,
    pub refine: ChaCha8Rng,
}

impl Streams {
    pub fn new(seed: u64, replica: u64) -> Self {
        Self {
            path: stream(seed, replica, Purpose::Path),
            refine: stream(seed, replica, Purpose::Refine),
        }
    }
}

/// Streaming path generator tracking `(t, X_t, S_t)` without storing the path
/// unless asked to.
#[derive(Debug, Clone)]
pub struct Walker {
    law: IncrementLaw,
    dt: f64,
    scale: f64,
    refine: bool,
    steps: u64,
    offset: f64,
    x: f64,
    s: f64,
    streams: Streams,
    record: Option<PathSample>,
}

impl Walker {
    /// `refine` requires a Brownian model.
    pub fn new(model: &LevyModel, dt: f64, refine: bool, streams: Streams) -> Result<Self> {
        check_positive("walker", "dt", dt)?;
        if refine && !model.is_brownian() {
            return Err(Error::unsupported("refined supremum", model));
        }
        let law = IncrementLaw::for_model(model);
        Ok(Self {
            law,
            dt,
            scale: law.time_scale(dt),
            refine,
            steps: 0,
            offset: 0.0,
            x: 0.0,
            s: 0.0,
            streams,
            record: None,
        })
    }

    /// Keep every grid point for `into_path`.
    pub fn recording(mut self, model: ModelKind, seed_path: u64) -> Self {
        self.record = Some(PathSample::with_capacity(self.dt, 1024, self.refine, seed_path, model));
        self
    }

    pub fn t(&self) -> f64 {
        self.offset + self.steps as f64 * self.dt
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// One grid step; returns the cell maximum.
    pub fn step(&mut self) -> f64 {
        let a = self.x;
        self.x = a + self.scale * self.law.unit(&mut self.streams.path);
        let cell_max = if self.refine {
            bridge_max(a, self.x, self.dt, unit_open_closed(&mut self.streams.refine))
        } else {
            self.x.max(a)
        };
        self.s = self.s.max(cell_max);
        self.steps += 1;
        if let Some(p) = self.record.as_mut() {
            let t = self.offset + self.steps as f64 * self.dt;
            p.push(t, self.x, self.s);
        }
        cell_max
    }

    /// Step until the grid time reaches `t` (to within rounding).
    pub fn advance_to(&mut self, t: f64) {
        while self.t() < t - 1e-9 * self.dt {
            self.step();
        }
    }

    /// Full grid steps while they fit before `target`, then one shorter
    /// step landing exactly on it.
    pub fn advance_exact_to(&mut self, target: f64) {
        let eps = 1e-9 * self.dt;
        while self.t() + self.dt <= target + eps {
            self.step();
        }
        let rest = target - self.t();
        if rest > eps {
            self.advance_unobserved(rest);
        }
    }

    /// Move forward by `h` without observing intermediate times. Refined
    /// Brownian walkers take one exact step of length `h`; stable walkers
    /// take at most `MAX_CONTINUATION_STEPS` sub-steps.
    pub fn advance_unobserved(&mut self, h: f64) {
        if h <= 0.0 {
            return;
        }
        let a = self.x;
        if self.refine {
            let inc = self.law.sample(h, &mut self.streams.path);
            self.x = a + inc;
            let m = bridge_max(a, self.x, h, unit_open_closed(&mut self.streams.refine));
            self.s = self.s.max(m);
        } else {
            let n = ((h / self.dt).ceil() as u64).clamp(1, MAX_CONTINUATION_STEPS);
            let sub = self.law.time_scale(h / n as f64);
            for _ in 0..n {
                self.x += sub * self.law.unit(&mut self.streams.path);
                self.s = self.s.max(self.x);
            }
        }
        self.offset += h;
        if let Some(p) = self.record.as_mut() {
            p.push(self.offset + self.steps as f64 * self.dt, self.x, self.s);
        }
    }

    /// The recorded path, if recording was enabled.
    pub fn into_path(self) -> Option<PathSample> {
        self.record
    }
}

#[derive(Debug, Clone)]
pub enum FirstPassage {
    Hit { time: f64, path: PathSample },
    Censored { cap: f64, path: PathSample },
}

impl FirstPassage {
    pub fn time(&self) -> Option<f64> {
        match self {
            FirstPassage::Hit { time, .. } => Some(*time),
            FirstPassage::Censored { .. } => None,
        }
    }

    pub fn path(&self) -> &PathSample {
        match self {
            FirstPassage::Hit { path, .. } | FirstPassage::Censored { path, .. } => path,
        }
    }
}

/// First time the (refined, for Brownian motion) supremum exceeds `level`,
/// reported as the end of the crossing cell; censored at `cap`.
pub fn first_passage(
    model: &LevyModel,
    level: f64,
    dt: f64,
    cap: f64,
    streams: Streams,
    replica: u64,
) -> Result<FirstPassage> {
    check_positive("first_passage", "level", level)?;
    check_positive("first_passage", "dt", dt)?;
    if !(cap.is_finite() && cap >= dt) {
        return Err(Error::domain("first_passage", format!("cap {cap} must be >= dt {dt}")));
    }
    let mut walker = Walker::new(model, dt, model.is_brownian(), streams)?.recording(model.kind(), replica);
    let steps = (cap / dt - 1e-9).ceil() as u64;
    for _ in 0..steps {
        if walker.step() > level {
            let time = walker.t();
            let path = walker.into_path().expect("recording enabled");
            return Ok(FirstPassage::Hit { time, path });
        }
    }
    let path = walker.into_path().expect("recording enabled");
    Ok(FirstPassage::Censored { cap, path })
}

/// Little-endian dump: `dt: f64, n: u64, x[0..n]: f64, s[0..n]: f64`.
pub fn write_path_dump<W: Write>(path: &PathSample, mut w: W) -> Result<()> {
    w.write_all(&path.dt.to_le_bytes())?;
    w.write_all(&(path.len() as u64).to_le_bytes())?;
    for v in path.x.iter().chain(&path.s) {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Inverse of [`write_path_dump`]: `(dt, x, s)`.
pub fn read_path_dump<R: Read>(mut r: R) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    let dt = f64::from_le_bytes(buf);
    r.read_exact(&mut buf)?;
    let n = u64::from_le_bytes(buf) as usize;
    let mut read_vec = |r: &mut R| -> Result<Vec<f64>> {
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            r.read_exact(&mut buf)?;
            v.push(f64::from_le_bytes(buf));
        }
        Ok(v)
    };
    let x = read_vec(&mut r)?;
    let s = read_vec(&mut r)?;
    Ok((dt, x, s))
}
