//! Brownian exit times by Euler stepping: moments, survival probabilities
//! and Laplace transforms as an independent check on the PDE routes.
//!
//! Path `i` draws from `ChaCha8Rng::seed_from_u64(seed)` on stream `i`, so
//! every path is reproducible on its own and results do not depend on how
//! paths are spread over workers. Reductions run in path-index order.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{volume, DomainSpec};
use crate::moments::{MomentSequence, Provenance};
use crate::numeric::sum::CompensatedSum;

pub const DEFAULT_STEP_CAP: u64 = 100_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub domain: DomainSpec,
    /// Start point; the second coordinate is ignored on intervals.
    pub x0: [f64; 2],
    pub paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub workers: usize,
    pub step_cap: u64,
}

impl SimConfig {
    pub fn new(domain: DomainSpec, x0: [f64; 2], paths: usize, dt: f64, seed: u64) -> Self {
        Self {
            domain,
            x0,
            paths,
            dt,
            seed,
            workers: 1,
            step_cap: DEFAULT_STEP_CAP,
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        if !(self.dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive (got {})", self.dt)));
        }
        if self.paths == 0 || self.workers == 0 || self.step_cap == 0 {
            return Err(Error::InvalidArgument("paths, workers and step_cap must be at least 1".into()));
        }
        if !(self.domain.signed_distance(self.x0) > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "start point {:?} is not strictly inside the domain",
                self.x0
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExitSamples {
    /// `(path_index, τ)` in path order; capped paths are left out.
    pub samples: Vec<(usize, f64)>,
    pub excluded: usize,
    pub dt: f64,
    pub seed: u64,
}

impl ExitSamples {
    pub fn taus(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.1)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Writes `path_index,tau` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["path_index", "tau"])?;
        for (i, t) in &self.samples {
            w.write_record([i.to_string(), t.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub estimator: String,
}

fn path_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Steps `x ← x + √dt·N(0, I)` until the walk leaves the domain; returns the
/// number of steps taken, or `None` past the cap.
fn walk(domain: &DomainSpec, x0: [f64; 2], sdt: f64, cap: u64, rng: &mut ChaCha8Rng) -> Option<u64> {
    let mut steps = 0u64;
    match *domain {
        DomainSpec::Interval { a, b } => {
            let mut x = x0[0];
            while steps < cap {
                let z: f64 = rng.sample(StandardNormal);
                x += sdt * z;
                steps += 1;
                if x <= a || x >= b {
                    return Some(steps);
                }
            }
        }
        DomainSpec::Disk { r } => {
            let (mut x, mut y) = (x0[0], x0[1]);
            let r2 = r * r;
            while steps < cap {
                let zx: f64 = rng.sample(StandardNormal);
                let zy: f64 = rng.sample(StandardNormal);
                x += sdt * zx;
                y += sdt * zy;
                steps += 1;
                if x * x + y * y >= r2 {
                    return Some(steps);
                }
            }
        }
        _ => {
            let mut p = x0;
            while steps < cap {
                let zx: f64 = rng.sample(StandardNormal);
                let zy: f64 = rng.sample(StandardNormal);
                p[0] += sdt * zx;
                p[1] += sdt * zy;
                steps += 1;
                if !domain.contains(p) {
                    return Some(steps);
                }
            }
        }
    }
    None
}

fn run_paths<F>(workers: usize, paths: usize, f: F) -> Result<Vec<Option<f64>>>
where
    F: Fn(usize) -> Option<f64> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("could not start {workers} workers: {e}")))?;
    // indexed collect keeps path order whatever the scheduling
    Ok(pool.install(|| (0..paths).into_par_iter().map(&f).collect()))
}

fn collect_samples(raw: Vec<Option<f64>>, dt: f64, seed: u64) -> ExitSamples {
    let excluded = raw.iter().filter(|t| t.is_none()).count();
    ExitSamples {
        samples: raw.into_iter().enumerate().filter_map(|(i, t)| t.map(|t| (i, t))).collect(),
        excluded,
        dt,
        seed,
    }
}

/// One exit time per path, recorded at the first step outside the domain
/// (no crossing interpolation, so `τ` carries an `O(√dt)` positive bias).
pub fn simulate_exit_times(cfg: &SimConfig) -> Result<ExitSamples> {
    cfg.validate()?;
    let sdt = cfg.dt.sqrt();
    let raw = run_paths(cfg.workers, cfg.paths, |i| {
        let mut rng = path_rng(cfg.seed, i);
        walk(&cfg.domain, cfg.x0, sdt, cfg.step_cap, &mut rng).map(|n| n as f64 * cfg.dt)
    })?;
    Ok(collect_samples(raw, cfg.dt, cfg.seed))
}

fn bounding_box(domain: &DomainSpec) -> [[f64; 2]; 2] {
    match domain {
        DomainSpec::Interval { a, b } => [[*a, 0.0], [*b, 0.0]],
        DomainSpec::Rectangle { lx, ly } => [[0.0, 0.0], [*lx, *ly]],
        DomainSpec::Disk { r } => [[-r, -r], [*r, *r]],
        DomainSpec::Polygon { vertices } => {
            let mut lo = [f64::INFINITY; 2];
            let mut hi = [f64::NEG_INFINITY; 2];
            for v in vertices {
                for k in 0..2 {
                    lo[k] = lo[k].min(v[k]);
                    hi[k] = hi[k].max(v[k]);
                }
            }
            [lo, hi]
        }
    }
}

/// Exit times from start points drawn uniformly in the domain (rejection
/// from the bounding box, using the path's own stream).
pub fn simulate_uniform_starts(
    domain: &DomainSpec,
    paths: usize,
    dt: f64,
    seed: u64,
    workers: usize,
) -> Result<ExitSamples> {
    domain.validate()?;
    let [lo, hi] = bounding_box(domain);
    let dim = domain.dim();
    if !(dt > 0.0) || paths == 0 || workers == 0 {
        return Err(Error::InvalidArgument("need dt > 0 and at least one path and worker".into()));
    }
    let sdt = dt.sqrt();
    let raw = run_paths(workers, paths, |i| {
        let mut rng = path_rng(seed, i);
        let x0 = loop {
            let u: f64 = rng.random();
            let v: f64 = if dim == 2 { rng.random() } else { 0.0 };
            let p = [lo[0] + u * (hi[0] - lo[0]), lo[1] + v * (hi[1] - lo[1])];
            if domain.signed_distance(p) > 0.0 {
                break p;
            }
        };
        walk(domain, x0, sdt, DEFAULT_STEP_CAP, &mut rng).map(|n| n as f64 * dt)
    })?;
    Ok(collect_samples(raw, dt, seed))
}

fn mean_and_stderr(values: impl Iterator<Item = f64>) -> (f64, f64, usize) {
    let values: Vec<f64> = values.collect();
    let n = values.len();
    let mut s = CompensatedSum::new();
    for &v in &values {
        s.add(v);
    }
    let mean = s.value() / n as f64;
    let mut ss = CompensatedSum::new();
    for v in values {
        ss.add((v - mean).powi(2));
    }
    let var = if n > 1 { ss.value() / (n - 1) as f64 } else { 0.0 };
    (mean, (var / n as f64).sqrt(), n)
}

/// Largest moment order the estimators accept.
pub const MC_MAX_ORDER: usize = 4;

/// `E[τⁿ]` for `n = 0..=n_max` at the start point of the samples.
pub fn mc_moments(samples: &ExitSamples, n_max: usize) -> Result<Vec<McEstimate>> {
    if n_max > MC_MAX_ORDER {
        return Err(Error::InvalidArgument(format!("n_max must be at most {MC_MAX_ORDER}")));
    }
    if samples.is_empty() {
        return Err(Error::InsufficientCoverage("no completed paths".into()));
    }
    (0..=n_max)
        .map(|n| {
            let (mean, se, paths) = mean_and_stderr(samples.taus().map(move |t| t.powi(n as i32)));
            if n > 0 && se > 0.2 * mean {
                return Err(Error::InsufficientCoverage(format!(
                    "relative standard error of E[τ^{n}] is {:.0}% with {paths} paths",
                    100.0 * se / mean
                )));
            }
            Ok(McEstimate {
                estimate: mean,
                stderr: se,
                paths,
                dt: samples.dt,
                seed: samples.seed,
                estimator: format!("mean_tau_pow_{n}"),
            })
        })
        .collect()
}

/// `Â_n = vol·mean(τⁿ)` from uniform start points, as estimates and as a
/// moment sequence whose noise floor is the largest relative standard error.
pub fn mc_domain_moments(
    domain: &DomainSpec,
    samples: &ExitSamples,
    n_max: usize,
) -> Result<(Vec<McEstimate>, MomentSequence)> {
    let vol = volume(domain)?;
    let per_point = mc_moments(samples, n_max)?;
    let est: Vec<McEstimate> = per_point
        .into_iter()
        .enumerate()
        .map(|(n, e)| McEstimate {
            estimate: if n == 0 { vol } else { vol * e.estimate },
            stderr: if n == 0 { 0.0 } else { vol * e.stderr },
            estimator: format!("domain_A_{n}"),
            ..e
        })
        .collect();
    let noise = est.iter().map(|e| e.stderr / e.estimate).fold(0.0, f64::max);
    let ms = MomentSequence::from_a(est.iter().map(|e| e.estimate).collect(), Provenance::MonteCarlo, noise)?;
    Ok((est, ms))
}

/// Fraction of the samples still inside at time `t`, with binomial error.
pub fn survival_from_samples(samples: &ExitSamples, t: f64) -> Result<McEstimate> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("t must be positive (got {t})")));
    }
    // capped paths are alive at any t below the cap
    let total = samples.len() + samples.excluded;
    let alive = samples.taus().filter(|&tau| tau > t).count() + samples.excluded;
    let p = alive as f64 / total as f64;
    Ok(McEstimate {
        estimate: p,
        stderr: (p * (1.0 - p) / total as f64).sqrt(),
        paths: total,
        dt: samples.dt,
        seed: samples.seed,
        estimator: "survival".into(),
    })
}

/// Sample mean of `e^{−sτ}`.
pub fn laplace_from_samples(samples: &ExitSamples, s: f64) -> Result<McEstimate> {
    if !(s >= 0.0) {
        return Err(Error::InvalidArgument(format!("s must be non-negative (got {s})")));
    }
    if samples.is_empty() {
        return Err(Error::InsufficientCoverage("no completed paths".into()));
    }
    let (mean, se, paths) = if s == 0.0 {
        (1.0, 0.0, samples.len())
    } else {
        mean_and_stderr(samples.taus().map(move |t| (-s * t).exp()))
    };
    Ok(McEstimate {
        estimate: mean,
        stderr: se,
        paths,
        dt: samples.dt,
        seed: samples.seed,
        estimator: "laplace".into(),
    })
}

/// `P^{x0}(τ > t)`.
pub fn mc_survival(cfg: &SimConfig, t: f64) -> Result<McEstimate> {
    survival_from_samples(&simulate_exit_times(cfg)?, t)
}

/// `E^{x0}[e^{−sτ}]`.
pub fn mc_laplace(cfg: &SimConfig, s: f64) -> Result<McEstimate> {
    laplace_from_samples(&simulate_exit_times(cfg)?, s)
}
