//! Flat `section.key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key is optional
//! and falls back to [`RunConfig::default`]; unknown or repeated keys are
//! errors. [`RunConfig::emit`] writes every key, and parsing the emitted text
//! gives back an identical config.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use mspec_core::geometry::DomainSpec;
use mspec_core::stieltjes::Precision;

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pipeline {
    Moments,
    Spectrum,
    Invert,
    Heat,
    Mc,
    Verify,
    Perturb,
    All,
}

impl Pipeline {
    pub const ALL: [Pipeline; 8] = [
        Pipeline::Moments,
        Pipeline::Spectrum,
        Pipeline::Invert,
        Pipeline::Heat,
        Pipeline::Mc,
        Pipeline::Verify,
        Pipeline::Perturb,
        Pipeline::All,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Moments => "moments",
            Pipeline::Spectrum => "spectrum",
            Pipeline::Invert => "invert",
            Pipeline::Heat => "heat",
            Pipeline::Mc => "mc",
            Pipeline::Verify => "verify",
            Pipeline::Perturb => "perturb",
            Pipeline::All => "all",
        }
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pipeline {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Pipeline::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown pipeline `{s}` (expected one of moments, spectrum, invert, heat, mc, verify, perturb, all)"))
    }
}

/// Where moments come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MomentSource {
    Pde,
    Analytic,
}

/// Where the reference spectrum comes from. `Auto` uses the closed form when
/// the domain has one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpectrumSource {
    Auto,
    Analytic,
    Numeric,
}

macro_rules! keyword_enum {
    ($ty:ty { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(Self::$variant => $text),+ })
            }
        }
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($text => Ok(Self::$variant),)+
                    _ => Err(format!("unknown value `{s}` (expected one of {})", [$($text),+].join(", "))),
                }
            }
        }
    };
}

keyword_enum!(MomentSource { Pde => "pde", Analytic => "analytic" });
keyword_enum!(SpectrumSource { Auto => "auto", Analytic => "analytic", Numeric => "numeric" });

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub pipeline: Pipeline,
    pub out: PathBuf,
    pub precision: Precision,
    pub strict: bool,

    pub domain_kind: String,
    pub domain_params: Vec<f64>,

    pub h: f64,
    /// Disks only: use the rotationally reduced grid.
    pub radial: bool,

    pub moments_n_max: usize,
    pub moments_tol: f64,
    pub moments_source: MomentSource,
    /// Optional `n,A_n,mu_n` CSV used instead of computing moments.
    pub moments_input: Option<PathBuf>,

    pub spectrum_m: usize,
    pub spectrum_tol: f64,
    pub spectrum_source: SpectrumSource,
    pub zero_tol: f64,

    pub invert_p: usize,
    /// Noise floor assumed for moments read from `moments.input`.
    pub invert_noise: f64,

    pub heat_t_min: f64,
    pub heat_t_max: f64,
    pub heat_samples: usize,
    pub heat_dt: f64,
    pub heat_fit_terms: usize,

    pub mc_paths: usize,
    pub mc_dt: f64,
    pub mc_seed: u64,
    pub mc_workers: usize,
    pub mc_x0: Vec<f64>,
    pub mc_n_max: usize,
    pub mc_t: f64,
    pub mc_s: f64,

    pub perturb_eps: f64,
    pub perturb_f: Vec<f64>,

    pub verify_n_max: usize,
    pub verify_m: usize,
    pub verify_tol: f64,

    pub compare_tol: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            pipeline: Pipeline::All,
            out: PathBuf::from("out"),
            precision: Precision::Extended,
            strict: false,
            domain_kind: "interval".into(),
            domain_params: vec![0.0, 1.0],
            h: 1.0 / 512.0,
            radial: true,
            moments_n_max: 9,
            moments_tol: 1e-12,
            moments_source: MomentSource::Pde,
            moments_input: None,
            spectrum_m: 20,
            spectrum_tol: 1e-9,
            spectrum_source: SpectrumSource::Auto,
            zero_tol: mspec_core::spectral::ZERO_TOL,
            invert_p: 5,
            invert_noise: 1e-12,
            heat_t_min: 0.05,
            heat_t_max: 1.0,
            heat_samples: 20,
            heat_dt: 1e-3,
            heat_fit_terms: 3,
            mc_paths: 10_000,
            mc_dt: 1e-4,
            mc_seed: 1,
            mc_workers: 1,
            mc_x0: vec![0.5, 0.0],
            mc_n_max: 2,
            mc_t: 0.5,
            mc_s: 1.0,
            perturb_eps: 0.0,
            perturb_f: vec![1.0, 0.3, -0.5, 0.2],
            verify_n_max: 6,
            verify_m: 50,
            verify_tol: 1e-4,
            compare_tol: 1e-3,
        }
    }
}

/// Every key in emission order.
pub const KEYS: &[&str] = &[
    "run.pipeline",
    "run.out",
    "run.precision",
    "run.strict",
    "domain.kind",
    "domain.params",
    "grid.h",
    "grid.radial",
    "moments.n_max",
    "moments.tol",
    "moments.source",
    "moments.input",
    "spectrum.m",
    "spectrum.tol",
    "spectrum.source",
    "spectrum.zero_tol",
    "invert.p",
    "invert.noise",
    "heat.t_min",
    "heat.t_max",
    "heat.samples",
    "heat.dt",
    "heat.fit_terms",
    "mc.paths",
    "mc.dt",
    "mc.seed",
    "mc.workers",
    "mc.x0",
    "mc.n_max",
    "mc.t",
    "mc.s",
    "perturb.eps",
    "perturb.f",
    "verify.n_max",
    "verify.m",
    "verify.tol",
    "compare.tol",
];

/// Floats in config files: anything `f64::from_str` takes, plus `a/b`.
fn parse_f64(s: &str) -> Result<f64, String> {
    let v = match s.split_once('/') {
        Some((a, b)) => {
            let (a, b): (f64, f64) = (
                a.trim().parse().map_err(|_| format!("bad number `{s}`"))?,
                b.trim().parse().map_err(|_| format!("bad number `{s}`"))?,
            );
            a / b
        }
        None => s.parse().map_err(|_| format!("bad number `{s}`"))?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(|p| parse_f64(p.trim())).collect()
}

fn parse_parsed<T: FromStr>(s: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    s.parse().map_err(|e: T::Err| format!("bad value `{s}`: {e}"))
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got `{s}`")),
    }
}

// `{:?}` is the shortest representation that parses back to the same f64
fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(", ")
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        let mut seen: Vec<(String, usize)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.trim();
            if body.is_empty() || body.starts_with('#') {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or_else(|| CliError::ConfigLine {
                line,
                msg: format!("expected `section.key = value`, got `{body}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if let Some((_, first)) = seen.iter().find(|(k, _)| k == key) {
                return Err(CliError::ConfigLine {
                    line,
                    msg: format!("duplicate key `{key}` (first set on line {first})"),
                });
            }
            cfg.set(key, value)
                .map_err(|msg| CliError::ConfigLine { line, msg: format!("{key}: {msg}") })?;
            seen.push((key.to_string(), line));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every key with its current value, one per line.
    pub fn emit(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            out.push_str(key);
            out.push_str(" = ");
            out.push_str(&self.get(key));
            out.push('\n');
        }
        out
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "run.pipeline" => self.pipeline = parse_parsed(v)?,
            "run.out" => self.out = PathBuf::from(v),
            "run.precision" => self.precision = parse_parsed(v)?,
            "run.strict" => self.strict = parse_bool(v)?,
            "domain.kind" => self.domain_kind = v.to_string(),
            "domain.params" => self.domain_params = parse_list(v)?,
            "grid.h" => self.h = parse_f64(v)?,
            "grid.radial" => self.radial = parse_bool(v)?,
            "moments.n_max" => self.moments_n_max = parse_parsed(v)?,
            "moments.tol" => self.moments_tol = parse_f64(v)?,
            "moments.source" => self.moments_source = parse_parsed(v)?,
            "moments.input" => self.moments_input = (!v.is_empty()).then(|| PathBuf::from(v)),
            "spectrum.m" => self.spectrum_m = parse_parsed(v)?,
            "spectrum.tol" => self.spectrum_tol = parse_f64(v)?,
            "spectrum.source" => self.spectrum_source = parse_parsed(v)?,
            "spectrum.zero_tol" => self.zero_tol = parse_f64(v)?,
            "invert.p" => self.invert_p = parse_parsed(v)?,
            "invert.noise" => self.invert_noise = parse_f64(v)?,
            "heat.t_min" => self.heat_t_min = parse_f64(v)?,
            "heat.t_max" => self.heat_t_max = parse_f64(v)?,
            "heat.samples" => self.heat_samples = parse_parsed(v)?,
            "heat.dt" => self.heat_dt = parse_f64(v)?,
            "heat.fit_terms" => self.heat_fit_terms = parse_parsed(v)?,
            "mc.paths" => self.mc_paths = parse_parsed(v)?,
            "mc.dt" => self.mc_dt = parse_f64(v)?,
            "mc.seed" => self.mc_seed = parse_parsed(v)?,
            "mc.workers" => self.mc_workers = parse_parsed(v)?,
            "mc.x0" => self.mc_x0 = parse_list(v)?,
            "mc.n_max" => self.mc_n_max = parse_parsed(v)?,
            "mc.t" => self.mc_t = parse_f64(v)?,
            "mc.s" => self.mc_s = parse_f64(v)?,
            "perturb.eps" => self.perturb_eps = parse_f64(v)?,
            "perturb.f" => self.perturb_f = parse_list(v)?,
            "verify.n_max" => self.verify_n_max = parse_parsed(v)?,
            "verify.m" => self.verify_m = parse_parsed(v)?,
            "verify.tol" => self.verify_tol = parse_f64(v)?,
            "compare.tol" => self.compare_tol = parse_f64(v)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> String {
        match key {
            "run.pipeline" => self.pipeline.to_string(),
            "run.out" => self.out.display().to_string(),
            "run.precision" => self.precision.to_string(),
            "run.strict" => self.strict.to_string(),
            "domain.kind" => self.domain_kind.clone(),
            "domain.params" => fmt_list(&self.domain_params),
            "grid.h" => fmt_f64(self.h),
            "grid.radial" => self.radial.to_string(),
            "moments.n_max" => self.moments_n_max.to_string(),
            "moments.tol" => fmt_f64(self.moments_tol),
            "moments.source" => self.moments_source.to_string(),
            "moments.input" => self
                .moments_input
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
            "spectrum.m" => self.spectrum_m.to_string(),
            "spectrum.tol" => fmt_f64(self.spectrum_tol),
            "spectrum.source" => self.spectrum_source.to_string(),
            "spectrum.zero_tol" => fmt_f64(self.zero_tol),
            "invert.p" => self.invert_p.to_string(),
            "invert.noise" => fmt_f64(self.invert_noise),
            "heat.t_min" => fmt_f64(self.heat_t_min),
            "heat.t_max" => fmt_f64(self.heat_t_max),
            "heat.samples" => self.heat_samples.to_string(),
            "heat.dt" => fmt_f64(self.heat_dt),
            "heat.fit_terms" => self.heat_fit_terms.to_string(),
            "mc.paths" => self.mc_paths.to_string(),
            "mc.dt" => fmt_f64(self.mc_dt),
            "mc.seed" => self.mc_seed.to_string(),
            "mc.workers" => self.mc_workers.to_string(),
            "mc.x0" => fmt_list(&self.mc_x0),
            "mc.n_max" => self.mc_n_max.to_string(),
            "mc.t" => fmt_f64(self.mc_t),
            "mc.s" => fmt_f64(self.mc_s),
            "perturb.eps" => fmt_f64(self.perturb_eps),
            "perturb.f" => fmt_list(&self.perturb_f),
            "verify.n_max" => self.verify_n_max.to_string(),
            "verify.m" => self.verify_m.to_string(),
            "verify.tol" => fmt_f64(self.verify_tol),
            "compare.tol" => fmt_f64(self.compare_tol),
            _ => panic!("get called with unknown key `{key}`"),
        }
    }

    pub fn domain(&self) -> Result<DomainSpec, CliError> {
        DomainSpec::from_params(&self.domain_kind, &self.domain_params).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Cross-key checks that do not belong to a single line.
    pub fn validate(&self) -> Result<(), CliError> {
        self.domain()?;
        let bad = |msg: String| Err(CliError::Config(msg));
        if !(self.h > 0.0) {
            return bad(format!("grid.h must be positive (got {})", self.h));
        }
        if self.mc_x0.len() != 2 {
            return bad(format!("mc.x0 takes two coordinates (got {})", self.mc_x0.len()));
        }
        if !(self.heat_t_min > 0.0 && self.heat_t_max > self.heat_t_min) {
            return bad("heat.t_min must be positive and below heat.t_max".into());
        }
        if self.heat_samples < 2 {
            return bad("heat.samples must be at least 2".into());
        }
        if self.invert_p == 0 || self.moments_n_max == 0 || self.verify_n_max == 0 {
            return bad("invert.p, moments.n_max and verify.n_max must be positive".into());
        }
        Ok(())
    }
}
