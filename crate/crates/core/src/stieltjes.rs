//! Recovery of the atomic measure `ψ` with `∫xⁿ dψ = μ_n` from finitely many
//! moments: Hankel positivity checks, Gauss-quadrature nodes from the
//! generalized eigenproblem `H₁v = x H₀v`, and the derived spectrum and
//! heat content.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analysis::{check_times, CurveProvenance, HeatContentCurve};
use crate::error::{Error, Result};
use crate::moments::MomentSequence;
use crate::numeric::dd::{DoubleDouble, Real};
use crate::numeric::dense::{cholesky, forward_substitute, least_squares, symmetric_eigen, Matrix};
use crate::spectral::{SpectralData, SpectralEntry, SpectralSource};

/// Atoms lighter than this fraction of `μ_0` are dropped as spurious.
pub const SPURIOUS_WEIGHT: f64 = 1e-10;

/// The atom count is capped where `σ_p(H₀)/σ_1(H₀)` falls to this multiple of the noise floor.
pub const CAP_FACTOR: f64 = 1e3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Standard,
    Extended,
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precision::Standard => "standard",
            Precision::Extended => "extended",
        })
    }
}

impl FromStr for Precision {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Precision::Standard),
            "extended" => Ok(Precision::Extended),
            other => Err(Error::InvalidArgument(format!(
                "precision must be standard or extended (got {other})"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub x: f64,
    pub w: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InversionDiagnostics {
    pub precision: Precision,
    pub p_requested: usize,
    pub p_used: usize,
    pub noise_floor: f64,
    /// Eigenvalues of the scaled `H₀` (descending) relative to the largest.
    pub relative_singular_values: Vec<f64>,
    /// `σ_1/σ_p` of the scaled `H₀` actually inverted.
    pub condition: f64,
    /// `|Σ w xⁿ − μ_n|/μ_n` for `n < 2·p_used`, before dropping spurious atoms.
    pub moment_residuals: Vec<f64>,
    pub discarded: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AtomicMeasure {
    atoms: Vec<Atom>,
    diagnostics: Option<InversionDiagnostics>,
}

impl AtomicMeasure {
    /// Atoms must be positive; they are stored with `x` decreasing.
    pub fn new(mut atoms: Vec<Atom>) -> Result<Self> {
        if let Some(a) = atoms.iter().find(|a| !(a.x > 0.0) || !(a.w > 0.0)) {
            return Err(Error::InvalidArgument(format!("atom ({}, {}) is not positive", a.x, a.w)));
        }
        atoms.sort_by(|a, b| b.x.total_cmp(&a.x));
        if atoms.windows(2).any(|w| w[0].x == w[1].x) {
            return Err(Error::InvalidArgument("repeated atom location".into()));
        }
        Ok(Self {
            atoms,
            diagnostics: None,
        })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }
    pub fn diagnostics(&self) -> Option<&InversionDiagnostics> {
        self.diagnostics.as_ref()
    }
    pub fn len(&self) -> usize {
        self.atoms.len()
    }
    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.w).sum()
    }

    /// `Σ w xⁿ`.
    pub fn moment(&self, n: usize) -> f64 {
        self.atoms.iter().map(|a| a.w * a.x.powi(n as i32)).sum()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "w"])?;
        for a in &self.atoms {
            w.write_record([a.x.to_string(), a.w.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        if rdr.headers()?.iter().collect::<Vec<_>>() != ["x", "w"] {
            return Err(Error::Csv("expected header x,w".into()));
        }
        let mut atoms = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec.get(i)
                    .ok_or_else(|| Error::Csv(format!("row {}: missing column", line + 2)))?
                    .parse()
                    .map_err(|e| Error::Csv(format!("row {}: {e}", line + 2)))
            };
            atoms.push(Atom { x: parse(0)?, w: parse(1)? });
        }
        Self::new(atoms).map_err(|e| Error::Csv(e.to_string()))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HankelReport {
    pub p: usize,
    /// Size of the shifted section that the available moments allow.
    pub shifted_size: usize,
    /// Smallest eigenvalue of `H₀ = [μ_{i+j}]` relative to its trace.
    pub min_eig_h0: f64,
    /// Smallest eigenvalue of `H₁ = [μ_{i+j+1}]` relative to its trace.
    pub min_eig_h1: f64,
    pub eps_psd: f64,
    pub pass: bool,
    pub failure: Option<String>,
}

/// `c = μ_1/μ_0`: the sections are built from `μ_n/(μ_0 cⁿ)`, a diagonal
/// congruence that keeps positivity and balances the entries.
fn scale_of(ms: &MomentSequence) -> f64 {
    let mu = ms.mu();
    if mu.len() > 1 && mu[0] > 0.0 && mu[1] > 0.0 {
        mu[1] / mu[0]
    } else {
        1.0
    }
}

fn normalized<T: Real>(raw: &[T], scale: f64) -> Vec<T> {
    let mut pw = T::one();
    let base = raw[0].abs();
    let base = if base > T::zero() { base } else { T::one() };
    raw.iter()
        .map(|m| {
            let v = *m / (base * pw);
            pw = pw * T::from_f64(scale);
            v
        })
        .collect()
}

fn hankel<T: Real>(nu: &[T], size: usize, shift: usize) -> Matrix<T> {
    Matrix::from_fn(size, size, |i, j| nu[i + j + shift])
}

/// Positivity of `H₀ = [μ_{i+j}]_{i,j<p}` and of the largest shifted section
/// `[μ_{i+j+1}]` the moments allow (at most `p×p`). Passes when both smallest
/// eigenvalues are `≥ −ε_psd·trace` with `ε_psd = 10·noise_floor`.
pub fn hankel_psd_check(ms: &MomentSequence, p: usize) -> Result<HankelReport> {
    if p == 0 || 2 * p - 2 > ms.n_max() {
        return Err(Error::InvalidArgument(format!(
            "H₀ of size {p} needs μ_0..μ_{} but only μ_0..μ_{} are available",
            2 * p.max(1) - 2,
            ms.n_max()
        )));
    }
    let nu = normalized(ms.mu_ext(), scale_of(ms));
    let shifted_size = p.min(ms.n_max().div_ceil(2));
    let eps_psd = 10.0 * ms.noise_floor().max(1e-30);
    let rel_min = |h: &Matrix<DoubleDouble>| -> f64 {
        let (vals, _) = symmetric_eigen(h);
        let tr = h.trace().to_f64();
        if tr == 0.0 {
            return vals[0].to_f64();
        }
        vals[0].to_f64() / tr.abs()
    };
    let min_eig_h0 = rel_min(&hankel(&nu, p, 0));
    let min_eig_h1 = if shifted_size > 0 { rel_min(&hankel(&nu, shifted_size, 1)) } else { 0.0 };
    let mut failure = None;
    if min_eig_h0 < -eps_psd {
        failure = Some(format!(
            "H0 = [mu_(i+j)] of size {p} is not positive semidefinite: smallest eigenvalue {min_eig_h0:.3e}·trace < -{eps_psd:.1e}·trace"
        ));
    } else if min_eig_h1 < -eps_psd {
        failure = Some(format!(
            "shifted H1 = [mu_(i+j+1)] of size {shifted_size} is not positive semidefinite: smallest eigenvalue {min_eig_h1:.3e}·trace < -{eps_psd:.1e}·trace"
        ));
    }
    Ok(HankelReport {
        p,
        shifted_size,
        min_eig_h0,
        min_eig_h1,
        eps_psd,
        pass: failure.is_none(),
        failure,
    })
}

struct RawInversion {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    relative_singular_values: Vec<f64>,
    condition: f64,
    moment_residuals: Vec<f64>,
}

fn invert_scaled<T: Real>(nu: &[T], p: usize, noise: f64) -> Result<RawInversion> {
    let (vals, _) = symmetric_eigen(&hankel(nu, p, 0));
    let mut sv: Vec<f64> = vals.iter().map(|v| v.to_f64().abs()).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let relative_singular_values: Vec<f64> = sv.iter().map(|s| s / sv[0]).collect();
    let q = relative_singular_values
        .iter()
        .take_while(|s| **s > CAP_FACTOR * noise)
        .count()
        .max(1);

    let h0 = hankel(nu, q, 0);
    let h1 = hankel(nu, q, 1);
    let l = cholesky(&h0).map_err(|j| Error::RankDeficient {
        size: q,
        detail: format!("Cholesky pivot {j} of H0 is not positive"),
    })?;
    let linv = forward_substitute(&l, &Matrix::identity(q));
    let c = linv.matmul(&h1).matmul(&linv.transpose());
    let half = T::from_f64(0.5);
    let c = Matrix::from_fn(q, q, |i, j| (c[(i, j)] + c[(j, i)]) * half);
    let (nodes, _) = symmetric_eigen(&c);

    // Σ_j w_j y_jⁿ = ν_n for n < 2q, each row scaled by 1/ν_n
    let rows = 2 * q;
    let v = Matrix::from_fn(rows, q, |n, j| {
        let mut pw = T::one();
        for _ in 0..n {
            pw = pw * nodes[j];
        }
        pw / nu[n]
    });
    let ones = vec![T::one(); rows];
    let weights = least_squares(&v, &ones).ok_or_else(|| Error::RankDeficient {
        size: q,
        detail: "Vandermonde system for the weights is rank deficient".into(),
    })?;
    let moment_residuals = (0..rows)
        .map(|n| {
            let mut s = T::zero();
            for j in 0..q {
                s = s + v[(n, j)] * weights[j];
            }
            (s - T::one()).abs().to_f64()
        })
        .collect();
    Ok(RawInversion {
        nodes: nodes.iter().map(|x| x.to_f64()).collect(),
        weights: weights.iter().map(|w| w.to_f64()).collect(),
        condition: sv[0] / sv[q - 1],
        relative_singular_values,
        moment_residuals,
    })
}

/// Gauss quadrature from the moments: nodes from `H₁v = x H₀v` on `q×q`
/// sections, weights from the Vandermonde system over `μ_0..μ_{2q−1}`.
/// `q ≤ p` is the automatic cap: the number of leading singular values of
/// `H₀` above [`CAP_FACTOR`] times the noise floor.
pub fn invert_moments(ms: &MomentSequence, p: usize, precision: Precision) -> Result<AtomicMeasure> {
    if p == 0 || 2 * p > ms.n_max() + 1 {
        return Err(Error::InvalidArgument(format!(
            "p = {p} atoms need μ_0..μ_{} but only μ_0..μ_{} are available",
            2 * p.max(1) - 1,
            ms.n_max()
        )));
    }
    let report = hankel_psd_check(ms, p)?;
    if let Some(f) = report.failure {
        return Err(Error::HankelNotPsd(f));
    }
    let scale = scale_of(ms);
    let mu0 = ms.mu()[0];
    let (raw, noise) = match precision {
        Precision::Standard => {
            let noise = ms.noise_floor().max(16.0 * f64::EPSILON);
            let nu = normalized(ms.mu(), scale);
            (invert_scaled::<f64>(&nu, p, noise)?, noise)
        }
        Precision::Extended => {
            let noise = ms.noise_floor().max(16.0 * DoubleDouble::epsilon());
            let nu = normalized(ms.mu_ext(), scale);
            (invert_scaled::<DoubleDouble>(&nu, p, noise)?, noise)
        }
    };

    let mut atoms = Vec::with_capacity(raw.nodes.len());
    let mut discarded = 0;
    for (y, w) in raw.nodes.iter().zip(&raw.weights) {
        if w.abs() < SPURIOUS_WEIGHT {
            discarded += 1;
            continue;
        }
        if *w < 0.0 {
            return Err(Error::NegativeWeight {
                node: y * scale,
                weight: w * mu0,
            });
        }
        if !(*y > 0.0) {
            return Err(Error::InvalidMoments(format!(
                "recovered node {} with weight {} lies outside (0, ∞)",
                y * scale,
                w * mu0
            )));
        }
        atoms.push(Atom {
            x: y * scale,
            w: w * mu0,
        });
    }
    let mut am = AtomicMeasure::new(atoms)?;
    am.diagnostics = Some(InversionDiagnostics {
        precision,
        p_requested: p,
        p_used: raw.nodes.len(),
        noise_floor: noise,
        relative_singular_values: raw.relative_singular_values,
        condition: raw.condition,
        moment_residuals: raw.moment_residuals,
        discarded,
    });
    Ok(am)
}

/// Node `x` becomes eigenvalue `λ = 2/x` with `a² = w`; multiplicities are
/// unknown (0) and the volume is the total mass.
pub fn measure_to_spectrum(am: &AtomicMeasure) -> Result<SpectralData> {
    let entries = am
        .atoms()
        .iter()
        .map(|a| SpectralEntry {
            lambda: 2.0 / a.x,
            multiplicity: 0,
            a2: a.w,
        })
        .collect();
    SpectralData::new(entries, am.total_mass(), SpectralSource::Inverted)
}

/// `q(t) = Σ w e^{−t/x}`.
pub fn reconstruct_heat_content(am: &AtomicMeasure, times: &[f64]) -> Result<HeatContentCurve> {
    check_times(times)?;
    let q = times
        .iter()
        .map(|&t| am.atoms().iter().rev().map(|a| a.w * (-t / a.x).exp()).sum())
        .collect();
    HeatContentCurve::new(times.to_vec(), q, CurveProvenance::Reconstructed)
}
