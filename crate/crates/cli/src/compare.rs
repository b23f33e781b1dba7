//! Tolerance-aware comparison of two `(λ, a²)` tables.

use serde::Serialize;

use mspec_core::spectral::SpectralData;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MatchedPair {
    pub lambda_a: f64,
    pub lambda_b: f64,
    pub rel_lambda: f64,
    pub a2_a: f64,
    pub a2_b: f64,
    pub rel_a2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareReport {
    pub tol: f64,
    pub matched: Vec<MatchedPair>,
    pub unmatched_a: Vec<f64>,
    pub unmatched_b: Vec<f64>,
    pub max_rel_lambda: f64,
    pub max_rel_a2: f64,
    /// Every entry matched with identical values.
    pub exact: bool,
}

impl CompareReport {
    /// No unmatched entries and every matched weight within `tol`.
    pub fn passes(&self) -> bool {
        self.unmatched_a.is_empty() && self.unmatched_b.is_empty() && self.max_rel_a2 <= self.tol
    }
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Pairs each entry of `a`, in order, with the closest unused entry of `b`
/// whose eigenvalue agrees to relative `tol`.
pub fn compare_spectra(a: &SpectralData, b: &SpectralData, tol: f64) -> CompareReport {
    let mut used = vec![false; b.len()];
    let mut matched = Vec::new();
    let mut unmatched_a = Vec::new();
    for ea in a.entries() {
        let best = b
            .entries()
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, eb)| (j, rel(ea.lambda, eb.lambda)))
            .filter(|(_, r)| *r <= tol)
            .min_by(|x, y| x.1.total_cmp(&y.1));
        match best {
            Some((j, r)) => {
                used[j] = true;
                let eb = &b.entries()[j];
                matched.push(MatchedPair {
                    lambda_a: ea.lambda,
                    lambda_b: eb.lambda,
                    rel_lambda: r,
                    a2_a: ea.a2,
                    a2_b: eb.a2,
                    rel_a2: rel(ea.a2, eb.a2),
                });
            }
            None => unmatched_a.push(ea.lambda),
        }
    }
    let unmatched_b: Vec<f64> = b
        .entries()
        .iter()
        .zip(&used)
        .filter(|(_, u)| !**u)
        .map(|(e, _)| e.lambda)
        .collect();
    let max_rel_lambda = matched.iter().map(|m| m.rel_lambda).fold(0.0, f64::max);
    let max_rel_a2 = matched.iter().map(|m| m.rel_a2).fold(0.0, f64::max);
    let exact = unmatched_a.is_empty() && unmatched_b.is_empty() && max_rel_lambda == 0.0 && max_rel_a2 == 0.0;
    CompareReport {
        tol,
        matched,
        unmatched_a,
        unmatched_b,
        max_rel_lambda,
        max_rel_a2,
        exact,
    }
}
