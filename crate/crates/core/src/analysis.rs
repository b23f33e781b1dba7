//! Heat content `q(t)` by spectral summation and by time stepping, the zeta
//! function `ζ_D(s) = Σ a²(2/λ)^s`, small-time asymptotics and the
//! Mellin/zeta identities.

use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::discrete_ops::{assemble_half_laplacian, integrate, Field};
use crate::error::{Error, Result};
use crate::geometry::Grid;
use crate::moments::MomentSequence;
use crate::numeric::dense::{cholesky, least_squares, Matrix};
use crate::numeric::special::{gamma, upper_incomplete_gamma};
use crate::numeric::sum::CompensatedSum;
use crate::spectral::SpectralData;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveProvenance {
    SpectralSum,
    Timestep,
    Reconstructed,
}

impl fmt::Display for CurveProvenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CurveProvenance::SpectralSum => "spectral_sum",
            CurveProvenance::Timestep => "timestep",
            CurveProvenance::Reconstructed => "reconstructed",
        })
    }
}

/// Sampled heat content.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HeatContentCurve {
    times: Vec<f64>,
    q: Vec<f64>,
    provenance: CurveProvenance,
    /// Bound on the truncation error, when the route provides one.
    tail_bound: Option<f64>,
}

pub(crate) fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::InvalidArgument("no sample times".into()));
    }
    if !(times[0] > 0.0) || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("times must be positive and strictly increasing".into()));
    }
    Ok(())
}

impl HeatContentCurve {
    pub fn new(times: Vec<f64>, q: Vec<f64>, provenance: CurveProvenance) -> Result<Self> {
        check_times(&times)?;
        if q.len() != times.len() {
            return Err(Error::LengthMismatch {
                expected: times.len(),
                got: q.len(),
            });
        }
        Ok(Self {
            times,
            q,
            provenance,
            tail_bound: None,
        })
    }

    pub fn with_tail_bound(mut self, bound: f64) -> Self {
        self.tail_bound = Some(bound);
        self
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }
    pub fn q(&self) -> &[f64] {
        &self.q
    }
    pub fn provenance(&self) -> CurveProvenance {
        self.provenance
    }
    pub fn tail_bound(&self) -> Option<f64> {
        self.tail_bound
    }
    pub fn len(&self) -> usize {
        self.times.len()
    }
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            q: self.q.iter().map(|v| v * c).collect(),
            ..self.clone()
        }
    }

    /// Samples with `t_min ≤ t ≤ t_max`.
    pub fn window(&self, t_min: f64, t_max: f64) -> Result<Self> {
        let (times, q): (Vec<f64>, Vec<f64>) = self
            .times
            .iter()
            .zip(&self.q)
            .filter(|(t, _)| **t >= t_min && **t <= t_max)
            .map(|(t, q)| (*t, *q))
            .unzip();
        Ok(Self {
            tail_bound: self.tail_bound,
            ..Self::new(times, q, self.provenance)?
        })
    }

    /// Largest `|q_a(t) − q_b(t)|` over shared sample times (matched to 1e−12 relative).
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        let mut worst: f64 = 0.0;
        let mut shared = 0;
        let mut j = 0;
        for (t, qa) in self.times.iter().zip(&self.q) {
            while j < other.times.len() && other.times[j] < t * (1.0 - 1e-12) {
                j += 1;
            }
            if j < other.times.len() && (other.times[j] - t).abs() <= 1e-12 * t {
                worst = worst.max((qa - other.q[j]).abs());
                shared += 1;
            }
        }
        if shared == 0 {
            return Err(Error::InvalidArgument("curves share no sample times".into()));
        }
        Ok(worst)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "q"])?;
        for (t, q) in self.times.iter().zip(&self.q) {
            w.write_record([t.to_string(), q.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, provenance: CurveProvenance) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        if rdr.headers()?.iter().collect::<Vec<_>>() != ["t", "q"] {
            return Err(Error::Csv("expected header t,q".into()));
        }
        let mut times = Vec::new();
        let mut q = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec.get(i)
                    .ok_or_else(|| Error::Csv(format!("row {}: missing column", line + 2)))?
                    .parse()
                    .map_err(|e| Error::Csv(format!("row {}: {e}", line + 2)))
            };
            times.push(parse(0)?);
            q.push(parse(1)?);
        }
        Self::new(times, q, provenance).map_err(|e| Error::Csv(e.to_string()))
    }
}

/// `n` log-spaced times from `t_min` to `t_max` inclusive.
pub fn log_times(t_min: f64, t_max: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2 && t_min > 0.0 && t_max > t_min);
    let (a, b) = (t_min.ln(), t_max.ln());
    (0..n)
        .map(|i| {
            if i == n - 1 {
                t_max
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

/// `n` evenly spaced times from `t_min` to `t_max` inclusive.
pub fn linear_times(t_min: f64, t_max: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2 && t_max > t_min);
    (0..n)
        .map(|i| t_min + (t_max - t_min) * i as f64 / (n - 1) as f64)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ZetaValue {
    pub value: f64,
    /// `(volume − Σa²)·(2/λ_max)^s`.
    pub tail_bound: f64,
}

/// `ζ_D(s) = Σ a²(2/λ)^s` over the listed clusters.
pub fn zeta(sd: &SpectralData, s: f64) -> Result<ZetaValue> {
    if sd.is_empty() {
        return Err(Error::InvalidArgument("empty spectral data".into()));
    }
    if !(s >= 0.0) {
        return Err(Error::InvalidArgument(format!("s must be non-negative (got {s})")));
    }
    let mut acc = CompensatedSum::new();
    for e in sd.entries().iter().rev() {
        acc.add(e.a2 * (2.0 / e.lambda).powf(s));
    }
    let lmax = sd.entries().last().map(|e| e.lambda).unwrap_or(f64::INFINITY);
    Ok(ZetaValue {
        value: acc.value(),
        tail_bound: sd.weight_deficit() * (2.0 / lmax).powf(s),
    })
}

/// `q(t) = Σ a² e^{−λt/2}`; the tail bound is `(volume − Σa²)·e^{−λ_max t_min/2}`.
pub fn heat_content_spectral(sd: &SpectralData, times: &[f64]) -> Result<HeatContentCurve> {
    check_times(times)?;
    let q = times
        .iter()
        .map(|&t| {
            let mut acc = CompensatedSum::new();
            for e in sd.entries().iter().rev() {
                acc.add(e.a2 * (-0.5 * e.lambda * t).exp());
            }
            acc.value()
        })
        .collect();
    let lmax = sd.entries().last().map(|e| e.lambda).unwrap_or(0.0);
    let tail = sd.weight_deficit() * (-0.5 * lmax * times[0]).exp();
    Ok(HeatContentCurve::new(times.to_vec(), q, CurveProvenance::SpectralSum)?.with_tail_bound(tail))
}

/// Time-stepping output with the extreme nodal values seen along the way.
#[derive(Clone, Debug)]
pub struct TimestepRun {
    pub curve: HeatContentCurve,
    pub min_u: f64,
    pub max_u: f64,
    pub steps: usize,
}

const TIMESTEP_TOL: f64 = 1e-11;

/// Crank–Nicolson for `∂u/∂t = (1/2)Δu`, `u(·,0) = 1`, zero boundary values,
/// started with two implicit-Euler half steps. Steps are shortened to land
/// exactly on each requested time.
pub fn heat_content_timestep(grid: Arc<Grid>, times: &[f64], dt: f64) -> Result<HeatContentCurve> {
    heat_content_timestep_run(grid, times, dt).map(|r| r.curve)
}

pub fn heat_content_timestep_run(grid: Arc<Grid>, times: &[f64], dt: f64) -> Result<TimestepRun> {
    check_times(times)?;
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive (got {dt})")));
    }
    let op = assemble_half_laplacian(grid.clone());
    let n = op.len();
    let mass = op.mass().to_vec();
    let cap = op.default_iteration_cap();
    let mut u = vec![1.0; n];
    let mut ku = vec![0.0; n];
    let mut b = vec![0.0; n];
    let (mut min_u, mut max_u) = (1.0f64, 1.0f64);
    let mut t = 0.0;
    let mut steps = 0usize;

    // (M + kK) u⁺ = M u
    let implicit_euler = |u: &mut Vec<f64>, b: &mut Vec<f64>, k: f64| -> Result<()> {
        for i in 0..n {
            b[i] = mass[i] * u[i];
        }
        let mut x = u.clone();
        op.solve_combination(k, 1.0, b, &mut x, TIMESTEP_TOL, cap)?;
        *u = x;
        Ok(())
    };

    let startup = dt.min(times[0]);
    for _ in 0..2 {
        implicit_euler(&mut u, &mut b, 0.5 * startup)?;
        steps += 1;
        for &v in &u {
            min_u = min_u.min(v);
            max_u = max_u.max(v);
        }
    }
    t += startup;

    let mut q = Vec::with_capacity(times.len());
    for &target in times {
        while target - t > 1e-12 * target {
            let k = dt.min(target - t);
            // (M + k/2 K) u⁺ = (M − k/2 K) u
            op.stiffness().matvec(&u, &mut ku);
            for i in 0..n {
                b[i] = mass[i] * u[i] - 0.5 * k * ku[i];
            }
            let mut x = u.clone();
            op.solve_combination(0.5 * k, 1.0, &b, &mut x, TIMESTEP_TOL, cap)?;
            u = x;
            t += k;
            steps += 1;
            for &v in &u {
                min_u = min_u.min(v);
                max_u = max_u.max(v);
            }
        }
        q.push(integrate(&Field::new(grid.clone(), u.clone())?));
    }
    Ok(TimestepRun {
        curve: HeatContentCurve::new(times.to_vec(), q, CurveProvenance::Timestep)?,
        min_u,
        max_u,
        steps,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct AsymptoticFit {
    /// Coefficients of `t^{n/2}`, `n = 0..terms`.
    pub coefficients: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
    pub window: (f64, f64),
}

impl AsymptoticFit {
    /// Writes `n,q_n,stderr` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "q_n", "stderr"])?;
        for (n, (c, e)) in self.coefficients.iter().zip(&self.stderr).enumerate() {
            w.write_record([n.to_string(), c.to_string(), e.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Default fit window `[4h², 0.02·(vol/|∂D|)²·2π]`.
pub fn default_fit_window(h: f64, volume: f64, boundary: f64) -> (f64, f64) {
    (4.0 * h * h, 0.02 * (volume / boundary).powi(2) * 2.0 * std::f64::consts::PI)
}

/// Least-squares fit of `q(t) ≈ Σ_{n<terms} q_n t^{n/2}` over all samples of
/// the curve (window it first).
pub fn asymptotic_fit(curve: &HeatContentCurve, terms: usize) -> Result<AsymptoticFit> {
    if terms == 0 {
        return Err(Error::InvalidArgument("need at least one basis term".into()));
    }
    let m = curve.len();
    if m < terms + 1 {
        return Err(Error::IllConditioned(format!("{m} samples cannot fit {terms} terms with a residual")));
    }
    let t_max = *curve.times().last().unwrap();
    // basis in the scaled variable τ = t/t_max keeps the columns O(1)
    let design = Matrix::from_fn(m, terms, |i, j| (curve.times()[i] / t_max).powf(0.5 * j as f64));
    let normal = design.transpose().matmul(&design);
    let l = cholesky(&normal).map_err(|_| Error::IllConditioned("normal matrix is singular on this window".into()))?;
    let diag: Vec<f64> = (0..terms).map(|i| l[(i, i)]).collect();
    let (dmax, dmin) = diag.iter().fold((0.0f64, f64::INFINITY), |(a, b), &d| (a.max(d), b.min(d)));
    if (dmax / dmin).powi(2) > 1e12 {
        return Err(Error::IllConditioned(format!(
            "basis condition estimate {:.1e} on window [{:.3e}, {:.3e}]",
            (dmax / dmin).powi(2),
            curve.times()[0],
            t_max
        )));
    }
    let scaled = least_squares(&design, curve.q()).ok_or_else(|| Error::IllConditioned("rank-deficient basis".into()))?;
    let mut rss = CompensatedSum::new();
    for i in 0..m {
        let fit: f64 = (0..terms).map(|j| scaled[j] * design[(i, j)]).sum();
        rss.add((curve.q()[i] - fit).powi(2));
    }
    let rss = rss.value();
    let sigma2 = rss / (m - terms) as f64;
    let inv = invert_spd(&l);
    let stderr: Vec<f64> = (0..terms).map(|j| (sigma2 * inv[(j, j)]).sqrt()).collect();
    let unscale = |j: usize| t_max.powf(-0.5 * j as f64);
    Ok(AsymptoticFit {
        coefficients: scaled.iter().enumerate().map(|(j, c)| c * unscale(j)).collect(),
        stderr: stderr.iter().enumerate().map(|(j, s)| s * unscale(j)).collect(),
        residual: (rss / m as f64).sqrt(),
        window: (curve.times()[0], t_max),
    })
}

/// `(LLᵀ)⁻¹` from the Cholesky factor.
fn invert_spd(l: &Matrix<f64>) -> Matrix<f64> {
    let n = l.rows();
    let linv = crate::numeric::dense::forward_substitute(l, &Matrix::identity(n));
    linv.transpose().matmul(&linv)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct MellinValue {
    pub value: f64,
    /// Bound on the `[0, t_min]` contribution, `vol·t_min^s/s`.
    pub small_t_bound: f64,
    /// Single-mode contribution beyond the last sample.
    pub tail: f64,
}

/// `∫_0^∞ q(t) t^{s−1} dt` from samples: trapezoid rule in `log t` over the
/// sampled range, a single-mode tail `a₁²(2/λ₁)^s Γ(s, λ₁T/2)` with `a₁²`
/// matched at the last sample, and `q(t_min)·t_min^s/s` for `[0, t_min]`.
pub fn mellin_numeric(curve: &HeatContentCurve, s: f64, lambda1: f64, volume: f64) -> Result<MellinValue> {
    if !(s > 0.0) || !(lambda1 > 0.0) {
        return Err(Error::InvalidArgument("need s > 0 and λ₁ > 0".into()));
    }
    if curve.len() < 3 {
        return Err(Error::InsufficientCoverage("need at least three samples".into()));
    }
    let t = curve.times();
    let q = curve.q();
    let g: Vec<f64> = t.iter().zip(q).map(|(t, q)| q * t.powf(s)).collect();
    let mut acc = CompensatedSum::new();
    for i in 1..t.len() {
        acc.add(0.5 * (g[i] + g[i - 1]) * (t[i] / t[i - 1]).ln());
    }
    let t0 = t[0];
    let tend = *t.last().unwrap();
    let small = q[0] * t0.powf(s) / s;
    let a1 = q.last().unwrap() * (0.5 * lambda1 * tend).exp();
    let tail = a1 * (2.0 / lambda1).powf(s) * upper_incomplete_gamma(s, 0.5 * lambda1 * tend);
    let value = acc.value() + small + tail;
    let small_t_bound = volume * t0.powf(s) / s;
    if small_t_bound > 0.1 * value.abs() {
        return Err(Error::InsufficientCoverage(format!(
            "samples start at t = {t0:e}; the unresolved [0, t_min] part may reach {small_t_bound:e} of {value:e}"
        )));
    }
    Ok(MellinValue {
        value,
        small_t_bound,
        tail,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct IdentityRow {
    pub n: usize,
    /// `Γ(N)·ζ_D(N)`.
    pub lhs: f64,
    /// `A_N/N`.
    pub rhs: f64,
    pub rel_err: f64,
    /// `Γ(N)` times the zeta tail bound, relative to `A_N/N`.
    pub rel_tail_bound: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct IdentityReport {
    pub rows: Vec<IdentityRow>,
    pub max_rel_err: f64,
}

/// `Γ(N)ζ_D(N)` against `A_N/N` for `N = 1..=n_max`.
pub fn verify_identities(ms: &MomentSequence, sd: &SpectralData, n_max: usize) -> Result<IdentityReport> {
    if n_max == 0 || n_max > ms.n_max() {
        return Err(Error::InvalidArgument(format!(
            "n_max must be in 1..={} (got {n_max})",
            ms.n_max()
        )));
    }
    let mut rows = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let z = zeta(sd, n as f64)?;
        let g = gamma(n as f64);
        let lhs = g * z.value;
        let rhs = ms.a()[n] / n as f64;
        rows.push(IdentityRow {
            n,
            lhs,
            rhs,
            rel_err: ((lhs - rhs) / rhs).abs(),
            rel_tail_bound: g * z.tail_bound / rhs.abs(),
        });
    }
    let max_rel_err = rows.iter().map(|r| r.rel_err).fold(0.0, f64::max);
    Ok(IdentityReport { rows, max_rel_err })
}
