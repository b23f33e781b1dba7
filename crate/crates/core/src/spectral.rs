//! Dirichlet eigenvalues with their volume-partition weights `a_λ²` (squared
//! norm of the projection of the constant function onto the eigenspace).

use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::discrete_ops::{assemble_half_laplacian, integrate, lowest_eigenpairs, DiscreteOperator, EigenPair, Field};
use crate::error::{Error, Result};
use crate::geometry::{volume, DomainSpec, Grid};
use crate::numeric::special::bessel_j0_zero;

/// Default threshold, relative to the volume, below which a weight counts as zero.
pub const ZERO_TOL: f64 = 1e-6;

/// Relative gap below which numeric eigenvalues are merged into one cluster.
pub const CLUSTER_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectralSource {
    Analytic,
    Numeric,
    Inverted,
}

impl fmt::Display for SpectralSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SpectralSource::Analytic => "analytic",
            SpectralSource::Numeric => "numeric",
            SpectralSource::Inverted => "inverted",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralEntry {
    pub lambda: f64,
    /// 0 when unknown (inverted spectra).
    pub multiplicity: usize,
    pub a2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectralData {
    entries: Vec<SpectralEntry>,
    volume: f64,
    source: SpectralSource,
}

impl SpectralData {
    /// Entries must have strictly increasing `λ > 0` and `a2 ≥ 0`.
    pub fn new(entries: Vec<SpectralEntry>, volume: f64, source: SpectralSource) -> Result<Self> {
        for (i, e) in entries.iter().enumerate() {
            if !(e.lambda > 0.0) || !(e.a2 >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "entry {i}: need λ > 0 and a² ≥ 0 (got λ = {}, a² = {})",
                    e.lambda, e.a2
                )));
            }
            if i > 0 && !(e.lambda > entries[i - 1].lambda) {
                return Err(Error::InvalidArgument(format!("entry {i}: λ not strictly increasing")));
            }
        }
        Ok(Self { entries, volume, source })
    }

    pub fn entries(&self) -> &[SpectralEntry] {
        &self.entries
    }
    pub fn len(&self) -> usize {
        self.entries.len()
    }
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
    pub fn volume(&self) -> f64 {
        self.volume
    }
    pub fn source(&self) -> SpectralSource {
        self.source
    }

    pub fn truncated(&self, m: usize) -> Self {
        Self {
            entries: self.entries[..m.min(self.len())].to_vec(),
            volume: self.volume,
            source: self.source,
        }
    }

    pub fn total_weight(&self) -> f64 {
        crate::numeric::sum::sum(self.entries.iter().map(|e| e.a2))
    }

    /// `volume − Σa²`, clamped at zero.
    pub fn weight_deficit(&self) -> f64 {
        (self.volume - self.total_weight()).max(0.0)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["lambda", "multiplicity", "a2"])?;
        for e in &self.entries {
            w.write_record([e.lambda.to_string(), e.multiplicity.to_string(), e.a2.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads `lambda,multiplicity,a2` rows. Without a volume the total
    /// weight stands in for it.
    pub fn read_csv<R: Read>(input: R, source: SpectralSource, volume: Option<f64>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["lambda", "multiplicity", "a2"] {
            return Err(Error::Csv(format!(
                "expected header lambda,multiplicity,a2, got {}",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut entries = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = line + 2;
            if rec.len() != 3 {
                return Err(Error::Csv(format!("row {row}: expected 3 columns, got {}", rec.len())));
            }
            let num = |i: usize| rec[i].parse::<f64>().map_err(|e| Error::Csv(format!("row {row}: {e}")));
            let multiplicity = rec[1].parse::<usize>().map_err(|e| Error::Csv(format!("row {row}: {e}")))?;
            entries.push(SpectralEntry {
                lambda: num(0)?,
                multiplicity,
                a2: num(2)?,
            });
        }
        let vol = volume.unwrap_or_else(|| entries.iter().map(|e| e.a2).sum());
        Self::new(entries, vol, source).map_err(|e| Error::Csv(e.to_string()))
    }
}

fn interval_weight(len: f64, k: usize) -> f64 {
    if k % 2 == 1 {
        8.0 * len / (k as f64 * std::f64::consts::PI).powi(2)
    } else {
        0.0
    }
}

/// Closed-form spectrum of an interval, rectangle or disk: the first `m`
/// eigenvalue clusters. Disks list the radial modes only (the others carry
/// no weight).
pub fn analytic_spectrum(spec: &DomainSpec, m: usize) -> Result<SpectralData> {
    spec.validate()?;
    let pi = std::f64::consts::PI;
    let vol = volume(spec)?;
    let entries = match spec {
        DomainSpec::Interval { a, b } => {
            let l = b - a;
            (1..=m)
                .map(|k| SpectralEntry {
                    lambda: (k as f64 * pi / l).powi(2),
                    multiplicity: 1,
                    a2: interval_weight(l, k),
                })
                .collect()
        }
        DomainSpec::Rectangle { lx, ly } => rectangle_clusters(*lx, *ly, m),
        DomainSpec::Disk { r } => (1..=m)
            .map(|n| {
                let j = bessel_j0_zero(n);
                SpectralEntry {
                    lambda: (j / r).powi(2),
                    multiplicity: 1,
                    a2: 4.0 * pi * r * r / (j * j),
                }
            })
            .collect(),
        DomainSpec::Polygon { .. } => {
            return Err(Error::Unsupported("no closed-form spectrum for polygons".into()));
        }
    };
    SpectralData::new(entries, vol, SpectralSource::Analytic)
}

fn rectangle_clusters(lx: f64, ly: f64, m: usize) -> Vec<SpectralEntry> {
    let pi2 = std::f64::consts::PI.powi(2);
    let lam = |j: usize, k: usize| pi2 * ((j * j) as f64 / (lx * lx) + (k * k) as f64 / (ly * ly));
    let mut bound = m + 2;
    loop {
        let mut modes: Vec<(f64, f64)> = Vec::with_capacity(bound * bound);
        for j in 1..=bound {
            for k in 1..=bound {
                modes.push((lam(j, k), interval_weight(lx, j) * interval_weight(ly, k)));
            }
        }
        modes.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut clusters: Vec<SpectralEntry> = Vec::new();
        for (l, w) in modes {
            match clusters.last_mut() {
                Some(c) if (l - c.lambda).abs() <= 1e-12 * l => {
                    c.multiplicity += 1;
                    c.a2 += w;
                }
                _ => clusters.push(SpectralEntry {
                    lambda: l,
                    multiplicity: 1,
                    a2: w,
                }),
            }
        }
        // any mode outside the enumerated box lies above this level
        let safe = pi2 * ((bound + 1) * (bound + 1)) as f64 / (lx * lx).max(ly * ly);
        if clusters.len() >= m && clusters[m - 1].lambda < safe * (1.0 - 1e-12) {
            clusters.truncate(m);
            return clusters;
        }
        bound *= 2;
    }
}

/// Clusters eigenpairs (ascending) whose eigenvalues agree within
/// [`CLUSTER_TOL`] and sums `(∫φ)²` over each cluster.
pub fn cluster_pairs(pairs: &[EigenPair]) -> Vec<SpectralEntry> {
    let mut out: Vec<(SpectralEntry, f64)> = Vec::new();
    for p in pairs {
        let c = integrate(&p.phi);
        match out.last_mut() {
            Some((e, first)) if (p.lambda - *first).abs() <= CLUSTER_TOL * *first => {
                // cluster eigenvalue reported as the member mean
                let k = e.multiplicity as f64;
                e.lambda = (e.lambda * k + p.lambda) / (k + 1.0);
                e.multiplicity += 1;
                e.a2 += c * c;
            }
            _ => out.push((
                SpectralEntry {
                    lambda: p.lambda,
                    multiplicity: 1,
                    a2: c * c,
                },
                p.lambda,
            )),
        }
    }
    out.into_iter().map(|(e, _)| e).collect()
}

/// Numeric spectrum together with the eigenpairs it was built from.
pub fn numeric_spectrum_with_pairs(grid: Arc<Grid>, m: usize, tol: f64) -> Result<(SpectralData, Vec<EigenPair>)> {
    if m == 0 {
        return Err(Error::InvalidArgument("m must be at least 1".into()));
    }
    let op = assemble_half_laplacian(grid.clone());
    let vol = integrate(&Field::constant(grid, 1.0));
    let max_pairs = 32.min(op.len());
    let mut want = (m + 2).min(max_pairs);
    loop {
        let pairs = lowest_eigenpairs(&op, want, tol)?;
        let clusters = cluster_pairs(&pairs);
        // the top cluster may be missing members beyond the computed block
        let complete = if want == op.len() { clusters.len() } else { clusters.len().saturating_sub(1) };
        if complete >= m {
            let kept_pairs: usize = clusters[..m].iter().map(|c| c.multiplicity).sum();
            let sd = SpectralData::new(clusters[..m].to_vec(), vol, SpectralSource::Numeric)?;
            return Ok((sd, pairs[..kept_pairs].to_vec()));
        }
        if want == max_pairs {
            return Err(Error::Unsupported(format!(
                "only {complete} complete clusters within {max_pairs} eigenpairs (asked for {m})"
            )));
        }
        want = (want + m).min(max_pairs);
    }
}

/// The first `m` eigenvalue clusters of `−(1/2)Δ_h` on the grid, reported in
/// the positive-Laplacian convention, with `a² = Σ (∫φ_i)²` over each cluster.
pub fn numeric_spectrum(grid: Arc<Grid>, m: usize, tol: f64) -> Result<SpectralData> {
    numeric_spectrum_with_pairs(grid, m, tol).map(|(sd, _)| sd)
}

#[derive(Clone, Debug, Serialize)]
pub struct EssentialSpectrum {
    pub lambdas: Vec<f64>,
    pub weights: Vec<f64>,
    /// True when no entry survives the threshold.
    pub degenerate: bool,
}

/// Entries with `a² > zero_tol·volume`.
pub fn essential_spectrum(sd: &SpectralData, zero_tol: f64) -> EssentialSpectrum {
    let cut = zero_tol * sd.volume();
    let (lambdas, weights): (Vec<f64>, Vec<f64>) =
        sd.entries().iter().filter(|e| e.a2 > cut).map(|e| (e.lambda, e.a2)).unzip();
    EssentialSpectrum {
        degenerate: lambdas.is_empty(),
        lambdas,
        weights,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PropertyMReport {
    pub holds: bool,
    pub clusters: usize,
    pub violating: Vec<f64>,
    /// Smallest `a²/volume` over the clusters.
    pub min_relative_weight: f64,
}

/// Property M on the listed clusters: every one carries weight above `zero_tol·volume`.
pub fn property_m_report(sd: &SpectralData, zero_tol: f64) -> PropertyMReport {
    let cut = zero_tol * sd.volume();
    let violating: Vec<f64> = sd.entries().iter().filter(|e| !(e.a2 > cut)).map(|e| e.lambda).collect();
    PropertyMReport {
        holds: violating.is_empty(),
        clusters: sd.len(),
        violating,
        min_relative_weight: sd
            .entries()
            .iter()
            .map(|e| e.a2 / sd.volume())
            .fold(f64::INFINITY, f64::min),
    }
}

/// Relative defects of `⟨u_k, φ⟩ = (2/λ)·k·⟨u_{k−1}, φ⟩` for `k = 1..fields.len()`
/// (`u_0 = 1`), with `λ/2` the Rayleigh quotient of `φ` for the discrete operator.
pub fn pairing_recursion_defects(op: &DiscreteOperator, fields: &[Field], phi: &Field) -> Vec<f64> {
    let half_lambda = op.rayleigh_quotient(phi);
    let mut prev = integrate(phi);
    fields
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let cur = u.pair(phi);
            let predicted = (i + 1) as f64 * prev / half_lambda;
            prev = cur;
            ((cur - predicted) / predicted).abs()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, build_radial_grid};
    use std::f64::consts::PI;

    #[test]
    fn interval_closed_forms() {
        let sd = analytic_spectrum(&DomainSpec::interval(0.0, 1.0).unwrap(), 3).unwrap();
        let e = sd.entries();
        assert!((e[0].lambda - PI * PI).abs() < 1e-12);
        assert!((e[0].a2 - 8.0 / (PI * PI)).abs() < 1e-15);
        assert_eq!(e[1].a2, 0.0);
        assert!((e[2].a2 - 8.0 / (9.0 * PI * PI)).abs() < 1e-15);
    }

    #[test]
    fn interval_partial_sums() {
        let spec = DomainSpec::interval(0.0, 1.0).unwrap();
        let s50 = analytic_spectrum(&spec, 50).unwrap();
        let s100 = analytic_spectrum(&spec, 100).unwrap();
        assert!((s50.total_weight() - 0.9919).abs() < 1e-4);
        assert!(s100.weight_deficit() < s50.weight_deficit());
        assert!(s100.total_weight() <= 1.0);
    }

    #[test]
    fn square_clusters_and_parity() {
        let sd = analytic_spectrum(&DomainSpec::rectangle(1.0, 1.0).unwrap(), 7).unwrap();
        let lam: Vec<f64> = sd.entries().iter().map(|e| e.lambda / (PI * PI)).collect();
        for (got, want) in lam.iter().zip([2.0, 5.0, 8.0, 10.0, 13.0, 17.0, 18.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert_eq!(sd.entries()[1].multiplicity, 2);
        assert_eq!(sd.entries()[1].a2, 0.0);
        let ess = essential_spectrum(&sd, ZERO_TOL);
        assert_eq!(ess.lambdas.len(), 3);
        assert!((ess.lambdas[1] / (PI * PI) - 10.0).abs() < 1e-12);
        let rep = property_m_report(&sd, ZERO_TOL);
        assert!(!rep.holds);
        assert_eq!(rep.violating.len(), 4);
    }

    #[test]
    fn rectangle_with_unequal_sides() {
        let sd = analytic_spectrum(&DomainSpec::rectangle(2.0, 1.0).unwrap(), 12).unwrap();
        // brute-force oracle over a large index box
        let mut all: Vec<f64> = (1..60)
            .flat_map(|j| (1..60).map(move |k| PI * PI * ((j * j) as f64 / 4.0 + (k * k) as f64)))
            .collect();
        all.sort_by(f64::total_cmp);
        all.dedup_by(|a, b| (*a - *b).abs() < 1e-9 * *a);
        for (e, want) in sd.entries().iter().zip(&all) {
            assert!((e.lambda - want).abs() < 1e-9 * want);
        }
    }

    #[test]
    fn disk_weights_sum_to_area() {
        let sd = analytic_spectrum(&DomainSpec::disk(1.0).unwrap(), 2000).unwrap();
        assert!((sd.entries()[0].a2 - 4.0 * PI / 2.404_825_557_695_773f64.powi(2)).abs() < 1e-12);
        // tail Σ_{n>N} 4π/j² ≈ 4/(π N)
        assert!((sd.total_weight() + 4.0 / (PI * 2000.0) - PI).abs() < 1e-5);
        assert!(analytic_spectrum(&DomainSpec::rectangle_polygon(1.0, 1.0).unwrap(), 3).is_err());
    }

    #[test]
    fn numeric_interval_matches_analytic() {
        let g = Arc::new(build_grid(&DomainSpec::interval(0.0, 1.0).unwrap(), 1.0 / 512.0).unwrap());
        let sd = numeric_spectrum(g, 4, 1e-10).unwrap();
        let want = [8.0 / (PI * PI), 0.0, 8.0 / (9.0 * PI * PI), 0.0];
        assert_eq!(sd.len(), 4);
        for (e, w) in sd.entries().iter().zip(want) {
            assert!((e.a2 - w).abs() < 1e-4, "{} vs {w}", e.a2);
        }
    }

    #[test]
    fn numeric_square_degenerate_cluster() {
        let g = Arc::new(build_grid(&DomainSpec::rectangle(1.0, 1.0).unwrap(), 1.0 / 64.0).unwrap());
        let (sd, pairs) = numeric_spectrum_with_pairs(g, 3, 1e-10).unwrap();
        assert_eq!(sd.entries()[1].multiplicity, 2);
        assert!(sd.entries()[1].a2 <= 1e-8);
        // rotating the degenerate pair leaves the cluster weight unchanged
        let (c, s) = (0.6f64, 0.8f64);
        let p1 = &pairs[1].phi;
        let p2 = &pairs[2].phi;
        let r1: Vec<f64> = p1.values().iter().zip(p2.values()).map(|(a, b)| c * a + s * b).collect();
        let r2: Vec<f64> = p1.values().iter().zip(p2.values()).map(|(a, b)| -s * a + c * b).collect();
        let w_rot = integrate(&Field::new(p1.grid().clone(), r1).unwrap()).powi(2)
            + integrate(&Field::new(p1.grid().clone(), r2).unwrap()).powi(2);
        assert!((w_rot - sd.entries()[1].a2).abs() < 1e-10);
    }

    #[test]
    fn numeric_disk_radial() {
        let g = Arc::new(build_radial_grid(&DomainSpec::disk(1.0).unwrap(), 1.0 / 256.0).unwrap());
        let sd = numeric_spectrum(g, 2, 1e-8).unwrap();
        let an = analytic_spectrum(&DomainSpec::disk(1.0).unwrap(), 2).unwrap();
        for (a, b) in sd.entries().iter().zip(an.entries()) {
            assert!((a.lambda - b.lambda).abs() < 2e-3 * b.lambda);
            assert!((a.a2 - b.a2).abs() < 5e-3 * b.a2);
        }
    }

    #[test]
    fn csv_round_trip() {
        let sd = analytic_spectrum(&DomainSpec::rectangle(1.0, 1.0).unwrap(), 7).unwrap();
        let mut buf = Vec::new();
        sd.write_csv(&mut buf).unwrap();
        let back = SpectralData::read_csv(buf.as_slice(), SpectralSource::Analytic, Some(1.0)).unwrap();
        assert_eq!(back, sd);
        assert!(SpectralData::read_csv("lambda,multiplicity,a2\n1,x,0\n".as_bytes(), SpectralSource::Numeric, None).is_err());
        assert!(SpectralData::read_csv("lambda,multiplicity,a2\n2,1,0\n1,1,0\n".as_bytes(), SpectralSource::Numeric, None).is_err());
    }

    #[test]
    fn essential_spectrum_of_weightless_input() {
        let sd = SpectralData::new(
            vec![SpectralEntry {
                lambda: 1.0,
                multiplicity: 1,
                a2: 0.0,
            }],
            1.0,
            SpectralSource::Numeric,
        )
        .unwrap();
        assert!(essential_spectrum(&sd, ZERO_TOL).degenerate);
    }
}
