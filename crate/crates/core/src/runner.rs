//! Suite orchestration: run configuration, config files, CSV reports and
//! JSON manifests.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::azema_yor::{m0, weight_tail_integral, WeightFn};
use crate::error::{Error, Result};
use crate::exec::Runtime;
use crate::levy_models::{
    check_convolution_identity, check_exp_sup_law, check_hq_monotone, check_laplace_hq, check_n_tail_laplace,
    q_over_kappa, sup_density_ratio_residual, LevyModel,
};
use crate::mc_stats::{correlation, ks_against_cdf, ks_weighted_against_cdf};
use crate::numerics::chi3_cdf;
use crate::path_sim::ClockSpec;
use crate::penalization::{
    combined_se, const_clock_ratio, crosscheck_samplers, decomposition_study, exp_clock_ratio,
    importance_sample_penalized, normalized_mass, penalized_target, ExperimentReport, FunctionalSpec, McConfig,
    ReportRow,
};

/// `git describe`-style identifier baked in at compile time.
pub const BUILD_ID: &str = match option_env!("LEVY_PENALIZE_BUILD_ID") {
    Some(id) => id,
    None => concat!("v", env!("CARGO_PKG_VERSION")),
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Identities,
    ExpClock,
    ConstClock,
    Mass,
    PenalizedSample,
    Decompose,
    Crosscheck,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Identities,
        Suite::ExpClock,
        Suite::ConstClock,
        Suite::Mass,
        Suite::PenalizedSample,
        Suite::Decompose,
        Suite::Crosscheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Identities => "identities",
            Suite::ExpClock => "exp-clock",
            Suite::ConstClock => "const-clock",
            Suite::Mass => "mass",
            Suite::PenalizedSample => "penalized-sample",
            Suite::Decompose => "decompose",
            Suite::Crosscheck => "crosscheck",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown suite `{s}`")))
    }
}

/// Clock family used by the `mass` suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClockKind {
    #[default]
    Exp,
    Const,
}

impl FromStr for ClockKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exp" => Ok(ClockKind::Exp),
            "const" => Ok(ClockKind::Const),
            _ => Err(Error::Usage(format!("unknown clock kind `{s}` (expected exp or const)"))),
        }
    }
}

impl fmt::Display for ClockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClockKind::Exp => "exp",
            ClockKind::Const => "const",
        })
    }
}

/// Pass thresholds. Defaults equal the acceptance criteria.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Brownian `check_laplace_hq`, `check_exp_sup_law` and `check_n_tail_laplace`.
    pub laplace_brownian: f64,
    /// Stable-model inversion checks.
    pub laplace_stable: f64,
    pub convolution: f64,
    pub sm_conv: f64,
    /// Bound on `q/κ(q,0)` at the smallest grid point.
    pub q_over_kappa: f64,
    pub hq_monotone: f64,
    /// Multiplier on standard errors.
    pub sigmas: f64,
    pub ratio_bias: f64,
    pub mass_bias_exp: f64,
    pub mass_bias_const: f64,
    /// Slack on `|M_s - M_0| <= 1/(6s) + slack`.
    pub mass_limit: f64,
    pub ks_s_inf: f64,
    pub ks_bessel: f64,
    pub ks_penalized: f64,
    pub ks_penalized_stable: f64,
    pub ks_crosscheck: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            laplace_brownian: 1e-8,
            laplace_stable: 1e-6,
            convolution: 1e-6,
            sm_conv: 0.011,
            q_over_kappa: 1e-3,
            hq_monotone: 1e-9,
            sigmas: 3.0,
            ratio_bias: 0.02,
            mass_bias_exp: 0.005,
            mass_bias_const: 0.01,
            mass_limit: 0.005,
            ks_s_inf: 0.0043,
            ks_bessel: 0.01,
            ks_penalized: 0.03,
            ks_penalized_stable: 0.04,
            ks_crosscheck: 0.03,
        }
    }
}

impl Tolerances {
    fn slot(&mut self, key: &str) -> Option<&mut f64> {
        Some(match key {
            "laplace_brownian" => &mut self.laplace_brownian,
            "laplace_stable" => &mut self.laplace_stable,
            "convolution" => &mut self.convolution,
            "sm_conv" => &mut self.sm_conv,
            "q_over_kappa" => &mut self.q_over_kappa,
            "hq_monotone" => &mut self.hq_monotone,
            "sigmas" => &mut self.sigmas,
            "ratio_bias" => &mut self.ratio_bias,
            "mass_bias_exp" => &mut self.mass_bias_exp,
            "mass_bias_const" => &mut self.mass_bias_const,
            "mass_limit" => &mut self.mass_limit,
            "ks_s_inf" => &mut self.ks_s_inf,
            "ks_bessel" => &mut self.ks_bessel,
            "ks_penalized" => &mut self.ks_penalized,
            "ks_penalized_stable" => &mut self.ks_penalized_stable,
            "ks_crosscheck" => &mut self.ks_crosscheck,
            _ => return None,
        })
    }

    fn values(&self) -> [(&'static str, f64); 16] {
        [
            ("laplace_brownian", self.laplace_brownian),
            ("laplace_stable", self.laplace_stable),
            ("convolution", self.convolution),
            ("sm_conv", self.sm_conv),
            ("q_over_kappa", self.q_over_kappa),
            ("hq_monotone", self.hq_monotone),
            ("sigmas", self.sigmas),
            ("ratio_bias", self.ratio_bias),
            ("mass_bias_exp", self.mass_bias_exp),
            ("mass_bias_const", self.mass_bias_const),
            ("mass_limit", self.mass_limit),
            ("ks_s_inf", self.ks_s_inf),
            ("ks_bessel", self.ks_bessel),
            ("ks_penalized", self.ks_penalized),
            ("ks_penalized_stable", self.ks_penalized_stable),
            ("ks_crosscheck", self.ks_crosscheck),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub suite: Suite,
    pub model: String,
    pub weight: String,
    pub functional: String,
    /// `q` values for exponential clocks, `s` values for constant clocks.
    pub clocks: Vec<f64>,
    pub clock_kind: ClockKind,
    pub t: f64,
    pub dt: f64,
    /// Post-maximum probe time for `decompose`.
    pub horizon: f64,
    pub n_paths: u64,
    pub seed: u64,
    pub refine: bool,
    pub out: PathBuf,
    pub tolerance: Tolerances,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            suite: Suite::Identities,
            model: "brownian".into(),
            weight: "indicator:a=1".into(),
            functional: "x-le:b=0".into(),
            clocks: vec![1.0, 0.1, 0.01],
            clock_kind: ClockKind::Exp,
            t: 0.25,
            dt: 1e-3,
            horizon: 1.0,
            n_paths: 100_000,
            seed: 1,
            refine: true,
            out: PathBuf::from("report.csv"),
            tolerance: Tolerances::default(),
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Usage(format!("invalid value `{value}` for `{key}`")))
}

fn parse_switch(key: &str, value: &str) -> Result<bool> {
    match value {
        "on" | "true" | "1" => Ok(true),
        "off" | "false" | "0" => Ok(false),
        _ => Err(Error::Usage(format!("invalid value `{value}` for `{key}` (expected on or off)"))),
    }
}

impl RunConfig {
    /// Parse a config file: `key = value` lines under `[run]` and
    /// `[tolerance]`, `#` comments. Keys absent from the file keep defaults.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut section = "run".to_string();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                if section != "run" && section != "tolerance" {
                    return Err(Error::Usage(format!("line {}: unknown section `[{section}]`", lineno + 1)));
                }
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("line {}: expected key = value, got `{line}`", lineno + 1)))?;
            cfg.set(&section, key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn from_config_file(path: &Path) -> Result<Self> {
        Self::from_config_str(&fs::read_to_string(path)?)
    }

    /// Set one key. Command-line flags go through here too.
    pub fn set(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        match section {
            "run" => self.set_run(key, value),
            "tolerance" => {
                let slot = self
                    .tolerance
                    .slot(key)
                    .ok_or_else(|| Error::Usage(format!("unknown tolerance `{key}`")))?;
                *slot = parse_num(key, value)?;
                Ok(())
            }
            _ => Err(Error::Usage(format!("unknown section `{section}`"))),
        }
    }

    fn set_run(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "suite" => self.suite = value.parse()?,
            "model" => self.model = value.to_string(),
            "weight" => self.weight = value.to_string(),
            "functional" => self.functional = value.to_string(),
            "clocks" => {
                self.clocks = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse_num(key, s))
                    .collect::<Result<_>>()?;
            }
            "clock_kind" => self.clock_kind = value.parse()?,
            "t" => self.t = parse_num(key, value)?,
            "dt" => self.dt = parse_num(key, value)?,
            "horizon" => self.horizon = parse_num(key, value)?,
            "paths" | "n_paths" => self.n_paths = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "refine" => self.refine = parse_switch(key, value)?,
            "out" => self.out = PathBuf::from(value),
            _ => return Err(Error::Usage(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// The config in file form; `from_config_str` reads it back unchanged.
    pub fn to_config_string(&self) -> String {
        let clocks: Vec<String> = self.clocks.iter().map(|c| c.to_string()).collect();
        let mut s = format!(
            "[run]\nsuite = {}\nmodel = {}\nweight = {}\nfunctional = {}\nclocks = {}\nclock_kind = {}\n\
             t = {}\ndt = {}\nhorizon = {}\nn_paths = {}\nseed = {}\nrefine = {}\nout = {}\n\n[tolerance]\n",
            self.suite,
            self.model,
            self.weight,
            self.functional,
            clocks.join(","),
            self.clock_kind,
            self.t,
            self.dt,
            self.horizon,
            self.n_paths,
            self.seed,
            if self.refine { "on" } else { "off" },
            self.out.display(),
        );
        for (k, v) in self.tolerance.values() {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("t", self.t), ("dt", self.dt), ("horizon", self.horizon)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Usage(format!("`{name}` must be positive, got {v}")));
            }
        }
        if self.n_paths == 0 {
            return Err(Error::Usage("`n_paths` must be positive".into()));
        }
        if self.clocks.is_empty() {
            return Err(Error::Usage(format!("suite `{}` needs a nonempty clock grid", self.suite)));
        }
        if let Some(c) = self.clocks.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
            return Err(Error::Usage(format!("clock values must be positive, got {c}")));
        }
        let up = self.clocks.windows(2).all(|w| w[0] < w[1]);
        let down = self.clocks.windows(2).all(|w| w[0] > w[1]);
        if !(up || down) {
            return Err(Error::Usage("clock grid must be strictly sorted".into()));
        }
        for (k, v) in self.tolerance.values() {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Usage(format!("tolerance `{k}` must be positive, got {v}")));
            }
        }
        self.parsed().map(|_| ())
    }

    fn parsed(&self) -> Result<(LevyModel, WeightFn, FunctionalSpec)> {
        let usage = |what: &str, spec: &str| {
            let what = what.to_string();
            let spec = spec.to_string();
            move |e: Error| match e {
                Error::Parse { token, reason } if token == spec => {
                    Error::Usage(format!("invalid {what} `{token}`: {reason}"))
                }
                Error::Parse { token, reason } => {
                    Error::Usage(format!("invalid {what} `{spec}`: `{token}`: {reason}"))
                }
                other => other,
            }
        };
        Ok((
            LevyModel::parse(&self.model).map_err(usage("model", &self.model))?,
            WeightFn::parse(&self.weight).map_err(usage("weight", &self.weight))?,
            FunctionalSpec::parse(&self.functional).map_err(usage("functional", &self.functional))?,
        ))
    }

    fn mc(&self, runtime: Runtime) -> McConfig {
        McConfig {
            n_paths: self.n_paths,
            dt: self.dt,
            seed: self.seed,
            refine: self.refine,
            runtime,
        }
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.out.with_extension("manifest.json")
    }
}

/// One row of the identity suite. Time-indexed checks put `t` in `param_q`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityRow {
    pub model: String,
    pub check: String,
    pub param_q: f64,
    pub param_lambda_or_x: f64,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl IdentityRow {
    fn new(model: &LevyModel, check: &str, p: f64, r: f64, residual: f64, tolerance: f64) -> Self {
        Self {
            model: model.to_string(),
            check: check.into(),
            param_q: p,
            param_lambda_or_x: r,
            residual,
            tolerance,
            pass: residual <= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Report {
    Identity(Vec<IdentityRow>),
    Experiment(ExperimentReport),
}

pub const IDENTITY_HEADER: [&str; 7] = ["model", "check", "param_q", "param_lambda_or_x", "residual", "tolerance", "pass"];
pub const EXPERIMENT_HEADER: [&str; 13] = [
    "experiment",
    "model",
    "weight",
    "functional",
    "clock_param",
    "estimate",
    "std_err",
    "target",
    "abs_err",
    "n_paths",
    "dt",
    "seed",
    "pass",
];

/// Shortest round-trip decimal, switching to exponent form outside `[1e-4, 1e15)`.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

impl Report {
    pub fn all_pass(&self) -> bool {
        match self {
            Report::Identity(rows) => rows.iter().all(|r| r.pass),
            Report::Experiment(r) => r.all_pass(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Report::Identity(rows) => rows.len(),
            Report::Experiment(r) => r.rows.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        match self {
            Report::Identity(rows) => {
                w.write_record(IDENTITY_HEADER)?;
                for r in rows {
                    w.write_record([
                        r.model.clone(),
                        r.check.clone(),
                        fmt_f64(r.param_q),
                        fmt_f64(r.param_lambda_or_x),
                        fmt_f64(r.residual),
                        fmt_f64(r.tolerance),
                        r.pass.to_string(),
                    ])?;
                }
            }
            Report::Experiment(rep) => {
                w.write_record(EXPERIMENT_HEADER)?;
                for r in &rep.rows {
                    w.write_record([
                        r.experiment.clone(),
                        r.model.clone(),
                        r.weight.clone(),
                        r.functional.clone(),
                        fmt_f64(r.clock_param),
                        fmt_f64(r.estimate),
                        fmt_f64(r.std_err),
                        fmt_f64(r.target),
                        fmt_f64(r.abs_err),
                        r.n_paths.to_string(),
                        fmt_f64(r.dt),
                        r.seed.to_string(),
                        r.pass.to_string(),
                    ])?;
                }
            }
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOutcome {
    pub report: Report,
    pub exit_code: i32,
    pub wall_time_s: f64,
}

/// Run the configured suite, then write the CSV report to `config.out` and
/// the manifest next to it.
pub fn run_suite(config: &RunConfig, runtime: Runtime) -> Result<SuiteOutcome> {
    let start = Instant::now();
    let report = compute_report(config, runtime)?;
    let wall_time_s = start.elapsed().as_secs_f64();
    write_file(&config.out, &report.to_csv()?)?;
    let manifest = emit_manifest(config, BUILD_ID, wall_time_s)?;
    write_file(&config.manifest_path(), manifest.as_bytes())?;
    let exit_code = if report.all_pass() { 0 } else { 1 };
    Ok(SuiteOutcome {
        report,
        exit_code,
        wall_time_s,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Run the configured suite without touching the filesystem.
pub fn compute_report(config: &RunConfig, runtime: Runtime) -> Result<Report> {
    config.validate()?;
    let (model, f, functional) = config.parsed()?;
    match config.suite {
        Suite::Identities => identity_rows(&model, &config.tolerance).map(Report::Identity),
        suite => {
            let ctx = Ctx {
                config,
                model: &model,
                f: &f,
                functional,
                mc: config.mc(runtime),
            };
            let rows = match suite {
                Suite::ExpClock | Suite::ConstClock => ctx.clock_rows(suite == Suite::ExpClock)?,
                Suite::Mass => ctx.mass_rows()?,
                Suite::PenalizedSample => ctx.penalized_rows()?,
                Suite::Decompose => ctx.decompose_rows()?,
                Suite::Crosscheck => ctx.crosscheck_rows()?,
                Suite::Identities => unreachable!(),
            };
            Ok(Report::Experiment(ExperimentReport { rows }))
        }
    }
}

/// The identity suite for one model.
pub fn identity_rows(model: &LevyModel, tol: &Tolerances) -> Result<Vec<IdentityRow>> {
    let mut rows = Vec::new();
    let brownian = model.is_brownian();
    let cauchy = model.kind() == LevyModel::cauchy().kind();
    let lap_tol = if brownian { tol.laplace_brownian } else { tol.laplace_stable };
    if brownian || cauchy {
        let grid: &[(f64, f64)] = if brownian {
            &[
                (0.1, 0.1),
                (0.1, 1.0),
                (0.1, 10.0),
                (1.0, 0.1),
                (1.0, 1.0),
                (1.0, 10.0),
                (10.0, 0.1),
                (10.0, 1.0),
                (10.0, 10.0),
            ]
        } else {
            &[(1.0, 1.0), (0.1, 1.0), (1.0, 10.0)]
        };
        for &(q, lam) in grid {
            let r = check_laplace_hq(model, q, lam)?;
            rows.push(IdentityRow::new(model, "laplace-hq", q, lam, r.residual, lap_tol));
        }
    }
    if brownian {
        for &(t, x) in &[(1.0, 0.1), (1.0, 1.0), (4.0, 2.0)] {
            let r = check_convolution_identity(model, t, x)?;
            rows.push(IdentityRow::new(model, "convolution", t, x, r.residual, tol.convolution));
        }
        for &(q, x) in &[(0.01, 0.5), (1.0, 0.5), (1.0, 2.0)] {
            let r = check_exp_sup_law(model, q, x)?;
            rows.push(IdentityRow::new(model, "exp-sup-law", q, x, r.residual, tol.laplace_brownian));
        }
        for &t in &[50.0, 100.0] {
            for &x in &[0.25, 0.5, 1.0] {
                let r = sup_density_ratio_residual(model, t, x)?;
                rows.push(IdentityRow::new(model, "sm-conv", t, x, r, tol.sm_conv));
            }
        }
    }
    for &q in &[0.01, 1.0, 25.0] {
        let r = check_n_tail_laplace(model, q)?;
        rows.push(IdentityRow::new(model, "n-tail-laplace", q, 0.0, r.residual, lap_tol));
    }
    let qs: Vec<f64> = (0..=6).map(|k| 10f64.powi(-k)).collect();
    let mut prev = f64::INFINITY;
    for (k, &q) in qs.iter().enumerate() {
        let v = q_over_kappa(model, q)?;
        let last = k + 1 == qs.len();
        // The final-value bound is calibrated for q^{1/2} decay.
        let tolerance = if last && (brownian || cauchy) {
            tol.q_over_kappa
        } else {
            f64::INFINITY
        };
        let mut row = IdentityRow::new(model, "q-over-kappa", q, 0.0, v, tolerance);
        row.pass &= v < prev;
        prev = v;
        rows.push(row);
    }
    if brownian || cauchy {
        let r = check_hq_monotone(model, &qs, &[0.1, 0.5, 1.0, 3.0])?;
        rows.push(IdentityRow::new(model, "hq-monotone", 0.0, 0.0, r, tol.hq_monotone));
    }
    Ok(rows)
}

struct Ctx<'a> {
    config: &'a RunConfig,
    model: &'a LevyModel,
    f: &'a WeightFn,
    functional: FunctionalSpec,
    mc: McConfig,
}

impl Ctx<'_> {
    fn row(&self, experiment: &str, clock_param: f64, estimate: f64, std_err: f64, target: f64, pass: bool) -> ReportRow {
        ReportRow {
            experiment: experiment.into(),
            model: self.model.to_string(),
            weight: self.f.to_string(),
            functional: self.functional.to_string(),
            clock_param,
            estimate,
            std_err,
            target,
            abs_err: (estimate - target).abs(),
            n_paths: self.mc.n_paths,
            dt: self.mc.dt,
            seed: self.mc.seed,
            pass,
        }
    }

    fn clock_rows(&self, exponential: bool) -> Result<Vec<ReportRow>> {
        let tol = &self.config.tolerance;
        let t = self.config.t;
        let target = penalized_target(self.f, self.model, self.functional, t, &self.mc)?;
        let mut rows = Vec::new();
        let mut prev_gap = f64::INFINITY;
        let last = self.config.clocks.len() - 1;
        for (i, &c) in self.config.clocks.iter().enumerate() {
            let (name, est) = if exponential {
                ("exp-clock", exp_clock_ratio(self.f, self.model, self.functional, c, t, &self.mc)?)
            } else {
                ("const-clock", const_clock_ratio(self.f, self.model, self.functional, c, t, &self.mc)?)
            };
            let se = combined_se(&est, &target);
            let gap = (est.value - target.value).abs();
            // Gaps must shrink along the grid; the bias budget applies at its end.
            let pass = gap <= prev_gap + tol.sigmas * se && (i < last || gap <= tol.ratio_bias + tol.sigmas * se);
            prev_gap = gap;
            rows.push(self.row(name, c, est.value, se, target.value, pass));
        }
        Ok(rows)
    }

    fn mass_rows(&self) -> Result<Vec<ReportRow>> {
        let tol = &self.config.tolerance;
        let mut rows = Vec::new();
        for &c in &self.config.clocks {
            let (clock, bias) = match self.config.clock_kind {
                ClockKind::Exp => (ClockSpec::exponential(c)?, tol.mass_bias_exp),
                ClockKind::Const => (ClockSpec::constant(c)?, tol.mass_bias_const),
            };
            let m = normalized_mass(self.f, self.model, clock, &self.mc)?;
            let target = m.exact.unwrap_or(m.limit);
            let e = m.estimate;
            let pass = (e.value - target).abs() <= tol.sigmas * e.std_err + bias;
            rows.push(self.row("mass", c, e.value, e.std_err, target, pass));
            if let (ClockKind::Const, Some(exact)) = (self.config.clock_kind, m.exact) {
                let pass = (exact - m.limit).abs() <= 1.0 / (6.0 * c) + tol.mass_limit;
                rows.push(self.row("mass-limit", c, exact, 0.0, m.limit, pass));
            }
        }
        Ok(rows)
    }

    fn limit_sup_cdf(&self) -> Result<impl Fn(f64) -> f64 + '_> {
        let m0 = m0(self.f, self.model)?;
        Ok(move |x: f64| {
            if x <= 0.0 {
                0.0
            } else {
                1.0 - weight_tail_integral(self.f, self.model, x, 0.0).unwrap_or(f64::NAN) / m0
            }
        })
    }

    fn penalized_rows(&self) -> Result<Vec<ReportRow>> {
        let tol = &self.config.tolerance;
        let t = self.config.t;
        let ws = importance_sample_penalized(self.f, self.model, t, &self.mc)?;
        let mw = ws.mean_weight;
        let mut rows = vec![self.row(
            "mean-weight",
            t,
            mw.value,
            mw.std_err,
            1.0,
            (mw.value - 1.0).abs() <= tol.sigmas * mw.std_err,
        )];
        let ks = ks_weighted_against_cdf(&ws.sup_ecdf()?, self.limit_sup_cdf()?);
        let ks_tol = if self.model.is_brownian() {
            tol.ks_penalized
        } else {
            tol.ks_penalized_stable
        };
        rows.push(self.row("sup-law-ks", t, ks, f64::NAN, 0.0, ks <= ks_tol));
        let frac = ws.ess / ws.weights.len() as f64;
        rows.push(self.row("ess-fraction", t, frac, f64::NAN, 1.0, !ws.low_ess));
        Ok(rows)
    }

    fn decompose_rows(&self) -> Result<Vec<ReportRow>> {
        if !self.model.is_brownian() {
            return Err(Error::unsupported("decompose", self.model));
        }
        let tol = &self.config.tolerance;
        let u = self.config.horizon;
        let study = decomposition_study(
            self.f,
            u,
            self.mc.dt,
            self.config.t,
            self.mc.n_paths,
            self.mc.seed,
            self.mc.runtime,
        )?;
        let ks = ks_against_cdf(&study.s_inf, self.limit_sup_cdf()?)?;
        let mut rows = vec![self.row("s-inf-ks", 0.0, ks, f64::NAN, 0.0, ks <= tol.ks_s_inf)];
        let (g, probe): (Vec<f64>, Vec<f64>) = study.g_and_probe.iter().copied().unzip();
        let ks = ks_against_cdf(&probe, |r| chi3_cdf(r, u))?;
        rows.push(self.row("bessel-ks", u, ks, f64::NAN, 0.0, ks <= tol.ks_bessel));
        let (r, se) = correlation(&g, &probe)?;
        rows.push(self.row("g-post-corr", u, r, se, 0.0, r.abs() <= tol.sigmas * se));
        Ok(rows)
    }

    fn crosscheck_rows(&self) -> Result<Vec<ReportRow>> {
        let tol = &self.config.tolerance;
        let t = self.config.t;
        let cc = crosscheck_samplers(self.f, self.model, t, &self.mc)?;
        Ok(vec![
            self.row("crosscheck-ks", t, cc.ks, f64::NAN, 0.0, cc.ks <= tol.ks_crosscheck && !cc.inconclusive),
            self.row("censored-fraction", t, cc.censored_fraction, f64::NAN, 0.0, !cc.inconclusive),
        ])
    }
}

/// Everything needed to reproduce a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: RunConfig,
    pub seed: u64,
    pub build_id: String,
    pub wall_time_s: f64,
}

pub fn emit_manifest(config: &RunConfig, build_id: &str, wall_time_s: f64) -> Result<String> {
    let m = Manifest {
        config: config.clone(),
        seed: config.seed,
        build_id: build_id.into(),
        wall_time_s,
    };
    Ok(serde_json::to_string_pretty(&m)?)
}

pub fn parse_manifest(text: &str) -> Result<Manifest> {
    Ok(serde_json::from_str(text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(suite: Suite) -> RunConfig {
        RunConfig {
            suite,
            n_paths: 400,
            dt: 1e-2,
            ..RunConfig::default()
        }
    }

    #[test]
    fn config_text_round_trip() {
        let mut cfg = quick(Suite::Mass);
        cfg.clocks = vec![4.0, 16.0, 64.0];
        cfg.clock_kind = ClockKind::Const;
        cfg.refine = false;
        cfg.tolerance.ks_bessel = 0.02;
        let back = RunConfig::from_config_str(&cfg.to_config_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn config_sections_and_comments() {
        let cfg = RunConfig::from_config_str(
            "# experiment\n[run]\nsuite = exp-clock\nclocks = 1, 0.1\npaths=500 # short\n\n[tolerance]\nsigmas = 4\n",
        )
        .unwrap();
        assert_eq!(cfg.suite, Suite::ExpClock);
        assert_eq!(cfg.clocks, vec![1.0, 0.1]);
        assert_eq!(cfg.n_paths, 500);
        assert_eq!(cfg.tolerance.sigmas, 4.0);
        assert_eq!(cfg.dt, RunConfig::default().dt);
    }

    #[test]
    fn config_errors_are_usage_errors() {
        for text in ["[oops]\n", "bogus = 1\n", "t 3\n", "[tolerance]\nnope = 1\n", "refine = maybe\n", "t = abc\n"] {
            assert!(matches!(RunConfig::from_config_str(text), Err(Error::Usage(_))), "{text}");
        }
    }

    #[test]
    fn validation() {
        let mut cfg = quick(Suite::ExpClock);
        cfg.clocks.clear();
        let e = cfg.validate().unwrap_err();
        assert!(matches!(e, Error::Usage(ref m) if m.contains("clock grid")));
        cfg.clocks = vec![1.0, 0.01, 0.1];
        assert!(matches!(cfg.validate(), Err(Error::Usage(_))));
        cfg.clocks = vec![0.01, 0.1, 1.0];
        cfg.validate().unwrap();
        cfg.dt = -1.0;
        assert!(matches!(cfg.validate(), Err(Error::Usage(_))));
        let mut cfg = quick(Suite::ExpClock);
        cfg.model = "stable:alpha=3,rho=0.5".into();
        assert!(cfg.validate().is_err());
        cfg.model = "levy".into();
        let e = cfg.validate().unwrap_err();
        assert!(matches!(e, Error::Usage(ref m) if m.contains("`levy`")), "{e}");
    }

    #[test]
    fn float_formatting_round_trips() {
        for v in [0.0, 1e-8, 0.25, 1.0 / 3.0, 12345.678, 1e20, -2.5e-7] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_f64(1e-8), "1e-8");
        assert_eq!(fmt_f64(0.001), "0.001");
    }

    #[test]
    fn identities_pass_for_brownian_and_cauchy() {
        let tol = Tolerances::default();
        for m in [LevyModel::brownian(), LevyModel::cauchy()] {
            let rows = identity_rows(&m, &tol).unwrap();
            assert!(rows.iter().all(|r| r.pass), "{m}: {:?}", rows.iter().find(|r| !r.pass));
        }
        let rows = identity_rows(&LevyModel::stable(1.5, 0.6).unwrap(), &tol).unwrap();
        assert!(rows.iter().all(|r| r.pass));
        assert!(rows.iter().all(|r| r.check != "laplace-hq"));
    }

    #[test]
    fn experiment_suites_are_deterministic() {
        for suite in [Suite::ExpClock, Suite::Mass, Suite::PenalizedSample] {
            let cfg = quick(suite);
            let a = compute_report(&cfg, Runtime::Parallel).unwrap().to_csv().unwrap();
            let b = compute_report(&cfg, Runtime::Sequential).unwrap().to_csv().unwrap();
            assert_eq!(a, b, "{suite}");
            let text = String::from_utf8(a).unwrap();
            assert!(text.starts_with(&EXPERIMENT_HEADER.join(",")));
            assert_eq!(text.lines().count(), 1 + compute_report(&cfg, Runtime::Sequential).unwrap().len());
        }
    }

    #[test]
    fn const_clock_rejects_stable() {
        let mut cfg = quick(Suite::ConstClock);
        cfg.model = "stable:alpha=1,rho=0.5".into();
        cfg.clocks = vec![4.0];
        assert!(matches!(compute_report(&cfg, Runtime::Sequential), Err(Error::Unsupported { .. })));
    }

    #[test]
    fn manifest_round_trip() {
        let mut cfg = quick(Suite::Decompose);
        cfg.dt = 0.1 + 0.2;
        cfg.seed = u64::MAX;
        let text = emit_manifest(&cfg, "v0-test", 1.5).unwrap();
        let m = parse_manifest(&text).unwrap();
        assert_eq!(m.config, cfg);
        assert_eq!(m.seed, u64::MAX);
        assert_eq!(m.build_id, "v0-test");
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert!(v.get("seed").is_some());
    }

    #[test]
    fn run_suite_creates_output_directory() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = quick(Suite::Identities);
        cfg.out = dir.path().join("nested/deeper/ids.csv");
        let out = run_suite(&cfg, Runtime::Sequential).unwrap();
        assert_eq!(out.exit_code, 0);
        let csv = fs::read_to_string(&cfg.out).unwrap();
        assert!(csv.starts_with("model,check,param_q,param_lambda_or_x,residual,tolerance,pass\n"));
        let m = parse_manifest(&fs::read_to_string(cfg.manifest_path()).unwrap()).unwrap();
        assert_eq!(m.config, cfg);
    }
}
