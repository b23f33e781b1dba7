//! Exit-time moments `u_k(x) = E^x[τ^k]` by recursive Poisson solves, their
//! integrals `A_n`, the normalized moments `μ_n = A_n/n!`, and the Laplace
//! transform `h(x, s) = E^x[e^{−sτ}]`.

use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::discrete_ops::{assemble_half_laplacian, integrate, Field};
use crate::error::{Error, Result};
use crate::geometry::{volume, DomainSpec, Grid};
use crate::numeric::dd::DoubleDouble;
use crate::numeric::special::bessel_j0_zero;
use crate::numeric::sum::weighted_dot;

/// π as a double-double.
const PI_DD: DoubleDouble = DoubleDouble {
    hi: std::f64::consts::PI,
    lo: 1.224_646_799_147_353_2e-16,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Pde,
    Analytic,
    MonteCarlo,
    /// Read from an external CSV.
    External,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Pde => "pde",
            Provenance::Analytic => "analytic",
            Provenance::MonteCarlo => "montecarlo",
            Provenance::External => "external",
        })
    }
}

/// The invariants `A_0..A_{n_max}` and `μ_n = A_n/n!`.
///
/// `mu_ext` carries the normalized moments in double-double; for sequences
/// computed in f64 its low parts are zero. `noise_floor` is the estimated
/// relative error of the moments and drives the atom-count cap of the
/// moment inversion.
#[derive(Clone, Debug)]
pub struct MomentSequence {
    provenance: Provenance,
    a: Vec<f64>,
    mu: Vec<f64>,
    mu_ext: Vec<DoubleDouble>,
    lambda1: Option<f64>,
    noise_floor: f64,
}

impl MomentSequence {
    /// Builds a sequence from `A_n` values.
    pub fn from_a(a: Vec<f64>, provenance: Provenance, noise_floor: f64) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::InvalidMoments("empty moment sequence".into()));
        }
        let mut fact = DoubleDouble::ONE;
        let mut mu_ext = Vec::with_capacity(a.len());
        for (n, an) in a.iter().enumerate() {
            if n > 0 {
                fact = fact * n as f64;
            }
            mu_ext.push(DoubleDouble::from_f64(*an) / fact);
        }
        Ok(Self::assemble(a, mu_ext, provenance, noise_floor))
    }

    /// Builds a sequence from extended-precision normalized moments.
    pub fn from_mu_ext(mu_ext: Vec<DoubleDouble>, provenance: Provenance, noise_floor: f64) -> Result<Self> {
        if mu_ext.is_empty() {
            return Err(Error::InvalidMoments("empty moment sequence".into()));
        }
        let mut fact = DoubleDouble::ONE;
        let a = mu_ext
            .iter()
            .enumerate()
            .map(|(n, m)| {
                if n > 0 {
                    fact = fact * n as f64;
                }
                (*m * fact).to_f64()
            })
            .collect();
        Ok(Self::assemble(a, mu_ext, provenance, noise_floor))
    }

    fn assemble(a: Vec<f64>, mu_ext: Vec<DoubleDouble>, provenance: Provenance, noise_floor: f64) -> Self {
        let mu = mu_ext.iter().map(|m| m.to_f64()).collect();
        let mut ms = Self {
            provenance,
            a,
            mu,
            mu_ext,
            lambda1: None,
            noise_floor,
        };
        ms.lambda1 = ms.ratio_lambda1();
        ms
    }

    /// `2 μ_{n−1}/μ_n` at the top of the sequence. The ratios `μ_n/μ_{n−1}`
    /// increase to `2/λ₁`, so this approaches `λ₁` from above.
    fn ratio_lambda1(&self) -> Option<f64> {
        let n = self.n_max();
        if n >= 1 && self.mu[n] > 0.0 && self.mu[n - 1] > 0.0 {
            Some(2.0 * self.mu[n - 1] / self.mu[n])
        } else {
            None
        }
    }

    pub fn with_lambda1(mut self, lambda1: f64) -> Self {
        self.lambda1 = Some(lambda1);
        self
    }

    pub fn with_noise_floor(mut self, noise_floor: f64) -> Self {
        self.noise_floor = noise_floor;
        self
    }

    pub fn n_max(&self) -> usize {
        self.a.len() - 1
    }
    pub fn a(&self) -> &[f64] {
        &self.a
    }
    pub fn mu(&self) -> &[f64] {
        &self.mu
    }
    pub fn mu_ext(&self) -> &[DoubleDouble] {
        &self.mu_ext
    }
    pub fn provenance(&self) -> Provenance {
        self.provenance
    }
    pub fn lambda1(&self) -> Option<f64> {
        self.lambda1
    }
    pub fn noise_floor(&self) -> f64 {
        self.noise_floor
    }

    /// Keeps `A_0..A_n`.
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.n_max());
        Self {
            provenance: self.provenance,
            a: self.a[..=n].to_vec(),
            mu: self.mu[..=n].to_vec(),
            mu_ext: self.mu_ext[..=n].to_vec(),
            lambda1: self.lambda1,
            noise_floor: self.noise_floor,
        }
    }

    /// Largest violation of `μ_{n+1}² ≤ μ_n μ_{n+2}`, relative to `μ_n μ_{n+2}`
    /// (non-positive for a log-convex sequence).
    pub fn log_convexity_defect(&self) -> f64 {
        self.mu
            .windows(3)
            .map(|w| (w[1] * w[1] - w[0] * w[2]) / (w[0] * w[2]))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Writes `n,A_n,mu_n` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "A_n", "mu_n"])?;
        for (n, (a, mu)) in self.a.iter().zip(&self.mu).enumerate() {
            w.write_record([n.to_string(), a.to_string(), mu.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads `n,A_n,mu_n` rows (any provenance). Rows must start at `n = 0`
    /// and be consecutive; `mu_n` must agree with `A_n/n!`.
    pub fn read_csv<R: Read>(input: R, provenance: Provenance, noise_floor: f64) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["n", "A_n", "mu_n"] {
            return Err(Error::Csv(format!("expected header n,A_n,mu_n, got {}", headers.iter().collect::<Vec<_>>().join(","))));
        }
        let mut a = Vec::new();
        let mut mu = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec.get(i)
                    .ok_or_else(|| Error::Csv(format!("row {}: missing column {i}", line + 2)))?
                    .parse::<f64>()
                    .map_err(|e| Error::Csv(format!("row {}: {e}", line + 2)))
            };
            let n = parse(0)?;
            if n != a.len() as f64 {
                return Err(Error::Csv(format!("row {}: expected n = {}, got {n}", line + 2, a.len())));
            }
            a.push(parse(1)?);
            mu.push(parse(2)?);
        }
        let ms = Self::from_a(a, provenance, noise_floor)?;
        for (n, (m_file, m_calc)) in mu.iter().zip(&ms.mu).enumerate() {
            if (m_file - m_calc).abs() > 1e-12 * m_calc.abs().max(f64::MIN_POSITIVE) {
                return Err(Error::Csv(format!("mu_{n} = {m_file} disagrees with A_{n}/{n}! = {m_calc}")));
            }
        }
        Ok(ms)
    }
}

/// Smallest relative residual requested from CG. Double precision stalls
/// around 1e−11 on fine 2D lattices.
pub const SOLVER_FLOOR: f64 = 1e-10;

const REFINE_SWEEPS: usize = 2;

/// Solves `(1/2)Δu_1 = −1`, `(1/2)Δu_k = −k·u_{k−1}` with zero boundary
/// values and returns `u_1..u_{n_max}`. Radial disk grids give the
/// rotationally reduced recursion.
///
/// Each level is solved to relative residual `max(tol, SOLVER_FLOOR·max(1, ‖f‖)/‖f‖)`
/// with `f` the right-hand side in the quadrature norm, then refined in
/// extended precision.
pub fn exit_moment_fields(grid: Arc<Grid>, n_max: usize, tol: f64) -> Result<Vec<Field>> {
    if n_max == 0 {
        return Err(Error::InvalidArgument("n_max must be at least 1".into()));
    }
    let op = assemble_half_laplacian(grid.clone());
    let mut fields: Vec<Field> = Vec::with_capacity(n_max);
    let mut prev = Field::constant(grid.clone(), 1.0);
    for k in 1..=n_max {
        let rhs = prev.scaled(k as f64);
        let level_tol = level_tolerance(&rhs, tol);
        let u = crate::discrete_ops::solve_poisson_refined(&op, &rhs, level_tol, REFINE_SWEEPS).map_err(|e| Error::MomentLevel {
            level: k,
            source: Box::new(e),
        })?;
        fields.push(u.clone());
        prev = u;
    }
    Ok(fields)
}

fn level_tolerance(rhs: &Field, tol: f64) -> f64 {
    let norm = weighted_dot(rhs.grid().weights(), rhs.values(), rhs.values()).sqrt();
    if norm == 0.0 {
        return tol;
    }
    tol.max(SOLVER_FLOOR * norm.max(1.0) / norm)
}

/// `A_0 = ∫1`, `A_n = ∫u_n` from the fields of [`exit_moment_fields`].
/// `solver_tol` sets the noise-floor estimate (`10·solver_tol`).
pub fn moment_sequence(grid: &Arc<Grid>, fields: &[Field], solver_tol: f64) -> Result<MomentSequence> {
    let mut a = Vec::with_capacity(fields.len() + 1);
    a.push(integrate(&Field::constant(grid.clone(), 1.0)));
    for f in fields {
        if f.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: f.len(),
            });
        }
        a.push(integrate(f));
    }
    MomentSequence::from_a(a, Provenance::Pde, 10.0 * solver_tol.max(SOLVER_FLOOR))
}

/// Convenience: fields and sequence in one call.
pub fn pde_moments(grid: Arc<Grid>, n_max: usize, tol: f64) -> Result<MomentSequence> {
    let fields = exit_moment_fields(grid.clone(), n_max, tol)?;
    moment_sequence(&grid, &fields, tol)
}

type Poly = Vec<BigRational>;

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Exact `∫_0^1 u_n dx` on the unit interval for `n = 0..=n_max`.
fn unit_interval_moments(n_max: usize) -> Vec<BigRational> {
    let mut out = vec![BigRational::one()];
    let mut u: Poly = vec![BigRational::one()];
    for k in 1..=n_max {
        // u_k'' = −2k u_{k−1}: integrate twice, then fix u_k(1) = 0
        let mut next: Poly = vec![BigRational::zero(); u.len() + 2];
        for (p, c) in u.iter().enumerate() {
            let denom = ((p + 1) * (p + 2)) as i64;
            next[p + 2] = -(c * rat(2 * k as i64, denom));
        }
        let at_one: BigRational = next.iter().sum();
        next[1] = -at_one;
        let integral: BigRational = next.iter().enumerate().map(|(p, c)| c / rat((p + 1) as i64, 1)).sum();
        out.push(integral);
        u = next;
    }
    out
}

/// Exact `∫_{|x|<1} u_n / π` on the unit disk for `n = 0..=n_max`, with
/// `u_n` a polynomial in `r²`.
fn unit_disk_moments_over_pi(n_max: usize) -> Vec<BigRational> {
    let mut out = vec![BigRational::one()];
    let mut u: Poly = vec![BigRational::one()];
    for k in 1..=n_max {
        // Δ r^{2m} = (2m)² r^{2m−2}; (1/2)Δu_k = −k u_{k−1}
        let mut next: Poly = vec![BigRational::zero(); u.len() + 1];
        for (m, c) in u.iter().enumerate() {
            let m1 = (m + 1) as i64;
            next[m + 1] = -(c * rat(2 * k as i64, 4 * m1 * m1));
        }
        let at_one: BigRational = next.iter().sum();
        next[0] = -at_one;
        // ∫ u dA / π = 2 Σ c_m ∫_0^1 r^{2m+1} dr = Σ c_m/(m+1)
        let integral: BigRational = next.iter().enumerate().map(|(m, c)| c / rat((m + 1) as i64, 1)).sum();
        out.push(integral);
        u = next;
    }
    out
}

/// Closed-form moments of the continuum domain.
///
/// Intervals and disks are exact (rational polynomial recursion, carried in
/// double-double). Rectangles sum the double sine series to a relative
/// accuracy of about 1e−9.
pub fn analytic_moments(spec: &DomainSpec, n_max: usize) -> Result<MomentSequence> {
    spec.validate()?;
    let mut fact = BigInt::one();
    let factorials: Vec<BigInt> = (0..=n_max)
        .map(|n| {
            if n > 0 {
                fact *= n;
            }
            fact.clone()
        })
        .collect();
    match spec {
        DomainSpec::Interval { a, b } => {
            let len = DoubleDouble::from_f64(b - a);
            let mu = unit_interval_moments(n_max)
                .iter()
                .zip(&factorials)
                .enumerate()
                .map(|(n, (an, f))| {
                    DoubleDouble::from_rational(&(an / BigRational::from_integer(f.clone()))) * len.powi(2 * n as u32 + 1)
                })
                .collect();
            let l = b - a;
            Ok(MomentSequence::from_mu_ext(mu, Provenance::Analytic, 1e-30)?
                .with_lambda1((std::f64::consts::PI / l).powi(2)))
        }
        DomainSpec::Disk { r } => {
            let rr = DoubleDouble::from_f64(*r);
            let mu = unit_disk_moments_over_pi(n_max)
                .iter()
                .zip(&factorials)
                .enumerate()
                .map(|(n, (an, f))| {
                    PI_DD * DoubleDouble::from_rational(&(an / BigRational::from_integer(f.clone()))) * rr.powi(2 * n as u32 + 2)
                })
                .collect();
            Ok(MomentSequence::from_mu_ext(mu, Provenance::Analytic, 1e-30)?
                .with_lambda1((bessel_j0_zero(1) / r).powi(2)))
        }
        DomainSpec::Rectangle { lx, ly } => {
            let vol = volume(spec)?;
            let pi2 = std::f64::consts::PI.powi(2);
            let terms = 3000usize;
            let mut mu = vec![DoubleDouble::from_f64(vol)];
            for n in 1..=n_max {
                let mut acc = crate::numeric::sum::CompensatedSum::new();
                // sum in decreasing-index order so small terms accumulate first
                for j in (1..=terms).rev().step_by(1).filter(|j| j % 2 == 1) {
                    for k in (1..=terms).rev().filter(|k| k % 2 == 1) {
                        let (jf, kf) = (j as f64, k as f64);
                        let lam = pi2 * (jf * jf / (lx * lx) + kf * kf / (ly * ly));
                        let a2 = 64.0 * lx * ly / (pi2 * pi2 * jf * jf * kf * kf);
                        acc.add(a2 * (2.0 / lam).powi(n as i32));
                    }
                }
                mu.push(DoubleDouble::from_f64(acc.value()));
            }
            Ok(MomentSequence::from_mu_ext(mu, Provenance::Analytic, 1e-9)?
                .with_lambda1(pi2 * (1.0 / (lx * lx) + 1.0 / (ly * ly))))
        }
        DomainSpec::Polygon { .. } => Err(Error::Unsupported("no closed-form moments for polygons".into())),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CarlemanReport {
    pub holds: bool,
    pub lambda1: f64,
    /// `(n, margin)` with margin `μ_{2n}^{−1/(2n)} / ((λ₁/2)·A_0^{−1/(2n)}) − 1`.
    pub margins: Vec<(usize, f64)>,
}

/// Default slack for the Carleman margins.
pub const CARLEMAN_EPS: f64 = 1e-9;

/// Checks the chain `μ_{2n} ≤ (2/λ₁)^{2n} A_0` behind Carleman's condition
/// `Σ μ_{2n}^{−1/(2n)} = ∞` for every even index available.
pub fn carleman_diagnostic(ms: &MomentSequence, eps: f64) -> Result<CarlemanReport> {
    let lambda1 = ms
        .lambda1()
        .ok_or_else(|| Error::InvalidMoments("no λ₁ estimate attached to the sequence".into()))?;
    if let Some((n, v)) = ms.mu().iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::InvalidMoments(format!("μ_{n} = {v} is not positive")));
    }
    let a0 = ms.a()[0];
    let margins: Vec<(usize, f64)> = (1..=ms.n_max() / 2)
        .map(|n| {
            let e = 1.0 / (2 * n) as f64;
            let lhs = ms.mu()[2 * n].powf(-e);
            let rhs = 0.5 * lambda1 * a0.powf(-e);
            (n, lhs / rhs - 1.0)
        })
        .collect();
    let holds = margins.iter().all(|(_, m)| *m >= -eps);
    Ok(CarlemanReport {
        holds,
        lambda1,
        margins,
    })
}

/// `h(x, s) = E^x[e^{−sτ}]`: solves `(1/2)Δh = s·h`, `h = 1` on the boundary,
/// through `w = 1 − h` with `(−(1/2)Δ + s) w = s`. The relative residual
/// target is floored at [`SOLVER_FLOOR`].
pub fn laplace_transform(grid: Arc<Grid>, s: f64, tol: f64) -> Result<Field> {
    if !(s >= 0.0) {
        return Err(Error::InvalidArgument(format!("s must be non-negative (got {s})")));
    }
    if s == 0.0 {
        return Ok(Field::constant(grid, 1.0));
    }
    let op = assemble_half_laplacian(grid.clone());
    let b: Vec<f64> = op.mass().iter().map(|m| s * m).collect();
    let mut w = vec![0.0; op.len()];
    op.solve_combination(1.0, s, &b, &mut w, tol.max(SOLVER_FLOOR), op.default_iteration_cap())?;
    Field::new(grid, w.into_iter().map(|v| 1.0 - v).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, build_radial_grid};
    use std::f64::consts::PI;

    fn interval_grid(h: f64) -> Arc<Grid> {
        Arc::new(build_grid(&DomainSpec::interval(0.0, 1.0).unwrap(), h).unwrap())
    }

    /// Truncated eigen-series oracle for the interval: μ_n = Σ_odd 8/(kπ)² (2/(kπ)²)^n.
    fn interval_mu_series(n: usize) -> f64 {
        let mut s = 0.0;
        for k in (1..200_000).step_by(2).rev() {
            let l = (k as f64 * PI).powi(2);
            s += 8.0 / l * (2.0 / l).powi(n as i32);
        }
        s
    }

    #[test]
    fn interval_fields_match_closed_forms() {
        let fields = exit_moment_fields(interval_grid(1.0 / 512.0), 2, 1e-12).unwrap();
        assert!((fields[0].at([0.5, 0.0]) - 0.25).abs() < 1e-6);
        assert!((fields[1].at([0.5, 0.0]) - 5.0 / 48.0).abs() < 1e-5);
        for f in &fields {
            assert!(f.values().iter().all(|&v| v >= -1e-10));
            let imax = f.values().iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
            assert!(imax > 0 && imax < f.len() - 1);
        }
    }

    #[test]
    fn interval_moment_values() {
        let ms = pde_moments(interval_grid(1.0 / 512.0), 8, 1e-12).unwrap();
        assert_eq!(ms.a()[0], 511.0 / 512.0);
        assert!((ms.a()[1] - 1.0 / 6.0).abs() < 1e-5);
        assert!((ms.a()[2] - 1.0 / 15.0).abs() < 1e-5);
        let ratio = ms.a()[8] / (8.0 * ms.a()[7]);
        assert!((ratio - 2.0 / (PI * PI)).abs() < 0.01 * 2.0 / (PI * PI));
        assert!(ms.log_convexity_defect() <= 1e-10);
    }

    #[test]
    fn moment_ratios_increase_to_the_ground_state() {
        let g = interval_grid(1.0 / 256.0);
        let ms = pde_moments(g.clone(), 10, 1e-12).unwrap();
        let ratios: Vec<f64> = ms.mu().windows(2).map(|w| w[1] / w[0]).collect();
        for w in ratios.windows(2) {
            assert!(w[1] >= w[0] * (1.0 - 1e-9), "{ratios:?}");
        }
        // discrete ground state of the three-point stencil
        let h = g.h();
        let lam_h = 4.0 / (h * h) * (PI * h / 2.0).sin().powi(2);
        assert!(*ratios.last().unwrap() <= 2.0 / lam_h * (1.0 + 1e-9));
        assert!(ms.lambda1().unwrap() >= lam_h * (1.0 - 1e-9));
    }

    #[test]
    fn disk_radial_route() {
        let g = Arc::new(build_radial_grid(&DomainSpec::disk(1.0).unwrap(), 1.0 / 512.0).unwrap());
        let fields = exit_moment_fields(g.clone(), 1, 1e-12).unwrap();
        assert!((fields[0].values()[0] - 0.5).abs() < 1e-6);
        let ms = moment_sequence(&g, &fields, 1e-12).unwrap();
        assert!((ms.a()[1] - PI / 4.0).abs() < 1e-4);
    }

    #[test]
    fn analytic_interval_moments_are_exact() {
        let ms = analytic_moments(&DomainSpec::interval(0.0, 1.0).unwrap(), 12).unwrap();
        assert_eq!(ms.a()[0], 1.0);
        assert!((ms.a()[1] - 1.0 / 6.0).abs() < 1e-16);
        assert!((ms.a()[2] - 1.0 / 15.0).abs() < 1e-16);
        for n in 1..=12 {
            let series = interval_mu_series(n);
            assert!((ms.mu()[n] - series).abs() < 1e-13 * series, "n = {n}");
        }
        // shifting and scaling: (2, 5) has length 3
        let scaled = analytic_moments(&DomainSpec::interval(2.0, 5.0).unwrap(), 3).unwrap();
        assert!((scaled.a()[1] - 3f64.powi(3) / 6.0).abs() < 1e-13);
    }

    #[test]
    fn analytic_disk_moments() {
        let ms = analytic_moments(&DomainSpec::disk(1.0).unwrap(), 6).unwrap();
        assert!((ms.a()[0] - PI).abs() < 1e-15);
        assert!((ms.a()[1] - PI / 4.0).abs() < 1e-15);
        // Bessel series oracle: μ_n = Σ 4π/j² (2/j²)^n
        for n in 1..=6usize {
            let s: f64 = (1..=4000)
                .rev()
                .map(|k| {
                    let j2 = bessel_j0_zero(k).powi(2);
                    4.0 * PI / j2 * (2.0 / j2).powi(n as i32)
                })
                .sum();
            assert!((ms.mu()[n] - s).abs() < 1e-9 * s, "n = {n}: {} vs {s}", ms.mu()[n]);
        }
    }

    #[test]
    fn analytic_rectangle_moment() {
        let ms = analytic_moments(&DomainSpec::rectangle(1.0, 1.0).unwrap(), 2).unwrap();
        // Poisson torsion of the unit square: ∫u_1 = 0.0351442... under (1/2)Δ (twice the Δ value)
        assert!((ms.a()[1] - 2.0 * 0.035_144_253_345_6).abs() < 1e-9);
    }

    #[test]
    fn carleman_holds_on_interval() {
        let ms = analytic_moments(&DomainSpec::interval(0.0, 1.0).unwrap(), 10).unwrap();
        let rep = carleman_diagnostic(&ms, CARLEMAN_EPS).unwrap();
        assert!(rep.holds);
        assert_eq!(rep.margins.len(), 5);
        assert!(rep.margins.iter().all(|(_, m)| *m > 0.0));
    }

    #[test]
    fn carleman_saturated_and_invalid() {
        let lambda1: f64 = 3.0;
        let a: Vec<f64> = (0..7)
            .map(|n: i32| 2.0 * (2.0 / lambda1).powi(n) * (1..=n).product::<i32>().max(1) as f64)
            .collect();
        let ms = MomentSequence::from_a(a, Provenance::Analytic, 1e-16).unwrap().with_lambda1(lambda1);
        let rep = carleman_diagnostic(&ms, CARLEMAN_EPS).unwrap();
        assert!(rep.holds);
        assert!(rep.margins.iter().all(|(_, m)| m.abs() < 1e-12));

        let bad = MomentSequence::from_a(vec![1.0, 0.5, -0.1], Provenance::External, 1e-16)
            .unwrap()
            .with_lambda1(1.0);
        assert!(matches!(carleman_diagnostic(&bad, CARLEMAN_EPS), Err(Error::InvalidMoments(_))));
    }

    #[test]
    fn laplace_transform_closed_form() {
        let g = interval_grid(1.0 / 512.0);
        let ones = laplace_transform(g.clone(), 0.0, 1e-10).unwrap();
        assert!(ones.values().iter().all(|&v| v == 1.0));
        let h = laplace_transform(g.clone(), 1.0, 1e-12).unwrap();
        let exact = 1.0 / (2f64.sqrt() / 2.0).cosh();
        assert!((h.at([0.5, 0.0]) - exact).abs() < 1e-5);
        assert!(h.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
        let h2 = laplace_transform(g, 2.0, 1e-12).unwrap();
        assert!(h.values().iter().zip(h2.values()).all(|(a, b)| b <= a));
    }

    #[test]
    fn laplace_series_consistency() {
        let g = interval_grid(1.0 / 512.0);
        let s: f64 = 0.5;
        let fields = exit_moment_fields(g.clone(), 6, 1e-12).unwrap();
        let mut series = 1.0;
        let mut fact = 1.0;
        for (k, u) in fields.iter().enumerate() {
            fact *= (k + 1) as f64;
            series += (-s).powi(k as i32 + 1) * u.at([0.5, 0.0]) / fact;
        }
        let h = laplace_transform(g, s, 1e-12).unwrap().at([0.5, 0.0]);
        // next term of the alternating series bounds the truncation error
        assert!((series - h).abs() < 1e-4);
    }

    #[test]
    fn csv_round_trip_and_validation() {
        let ms = analytic_moments(&DomainSpec::interval(0.0, 1.0).unwrap(), 5).unwrap();
        let mut buf = Vec::new();
        ms.write_csv(&mut buf).unwrap();
        let back = MomentSequence::read_csv(buf.as_slice(), Provenance::External, 1e-15).unwrap();
        assert_eq!(back.a(), ms.a());
        let bad = "n,A_n,mu_n\n0,1,1\n2,0.1,0.05\n";
        assert!(MomentSequence::read_csv(bad.as_bytes(), Provenance::External, 1e-15).is_err());
        let inconsistent = "n,A_n,mu_n\n0,1,1\n1,0.2,0.3\n";
        assert!(MomentSequence::read_csv(inconsistent.as_bytes(), Provenance::External, 1e-15).is_err());
    }
}
