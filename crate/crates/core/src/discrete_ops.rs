//! The discrete Dirichlet generator `(1/2)Δ`, linear solves and low eigenpairs.
//!
//! Every operator is stored as a symmetric positive definite stiffness matrix
//! `K` and a diagonal mass `M` (the quadrature weights), with
//! `−(1/2)Δ_h = M⁻¹K`. On lattice grids `M = h^d·I`, so `M⁻¹K` is the usual
//! 3-point / 5-point stencil scaled by `1/(2h²)`. On radial disk grids `K` is
//! the finite-volume form of `−(1/2)(u″ + u′/r)` and the reduction is
//! self-adjoint in the `M` inner product.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{Grid, GridKind};
use crate::numeric::dd::{two_prod, DoubleDouble};
use crate::numeric::dense::{symmetric_eigen, Matrix};
use crate::numeric::sum::{dot, norm2, sum as ksum, CompensatedSum};

/// Compressed sparse row matrix.
#[derive(Clone, Debug)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            for (c, v) in row {
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *yi = acc;
        }
    }
}

/// A grid function: one value per interior node.
#[derive(Clone, Debug)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![0.0; n],
        }
    }

    pub fn constant(grid: Arc<Grid>, c: f64) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![c; n],
        }
    }

    /// Samples `f` at the node coordinates (radial grids pass `(r, 0)`).
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = grid.nodes().iter().map(|&p| f(p)).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value at the node nearest to `p`.
    pub fn at(&self, p: [f64; 2]) -> f64 {
        self.values[self.grid.nearest_node(p)]
    }

    pub fn scaled(&self, c: f64) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    /// Quadrature pairing `⟨f, g⟩ = Σ w f g`.
    pub fn pair(&self, other: &Field) -> f64 {
        crate::numeric::sum::weighted_dot(self.grid.weights(), &self.values, &other.values)
    }
}

/// Quadrature `Σ f(node)·weight(node)`.
pub fn integrate(f: &Field) -> f64 {
    ksum(f.values.iter().zip(f.grid.weights()).map(|(v, w)| v * w))
}

/// `−(1/2)Δ_h` with Dirichlet rows eliminated.
#[derive(Clone, Debug)]
pub struct DiscreteOperator {
    grid: Arc<Grid>,
    stiffness: CsrMatrix,
    mass: Vec<f64>,
}

pub fn assemble_half_laplacian(grid: Arc<Grid>) -> DiscreteOperator {
    let stiffness = match grid.kind() {
        GridKind::Lattice => assemble_lattice(&grid),
        GridKind::Radial => assemble_radial(&grid),
    };
    let mass = grid.weights().to_vec();
    DiscreteOperator {
        grid,
        stiffness,
        mass,
    }
}

fn assemble_lattice(grid: &Grid) -> CsrMatrix {
    let h = grid.h();
    let dim = grid.dim();
    let w = grid.weights().first().copied().unwrap_or(0.0);
    let off = -w / (2.0 * h * h);
    let diag = w * dim as f64 / (h * h);
    let steps: &[[i64; 2]] = if dim == 1 {
        &[[-1, 0], [1, 0]]
    } else {
        &[[-1, 0], [1, 0], [0, -1], [0, 1]]
    };
    let rows = grid
        .lattice_coords()
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let mut row = vec![(k, diag)];
            for s in steps {
                if let Some(nb) = grid.node_at(c[0] + s[0], c[1] + s[1]) {
                    row.push((nb, off));
                }
            }
            row
        })
        .collect();
    CsrMatrix::from_rows(rows)
}

fn assemble_radial(grid: &Grid) -> CsrMatrix {
    let h = grid.h();
    let n = grid.len();
    let r = |i: usize| grid.nodes()[i][0];
    // flux coefficient (1/2)·2π·r_face/dist between neighbouring nodes
    let inner = |i: usize| PI * (r(i) + 0.5 * h) / h;
    let boundary = PI * (r(n - 1) + 0.5 * grid.outer_gap()) / grid.outer_gap();
    let rows = (0..n)
        .map(|i| {
            let mut row = Vec::with_capacity(3);
            let mut d = 0.0;
            if i > 0 {
                let c = inner(i - 1);
                row.push((i - 1, -c));
                d += c;
            }
            if i + 1 < n {
                let c = inner(i);
                row.push((i + 1, -c));
                d += c;
            } else {
                d += boundary;
            }
            row.push((i, d));
            row
        })
        .collect();
    CsrMatrix::from_rows(rows)
}

impl DiscreteOperator {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Entry `(i, j)` of `−(1/2)Δ_h = M⁻¹K`.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.stiffness.get(i, j) / self.mass[i]
    }

    /// `y = −(1/2)Δ_h x`.
    pub fn apply(&self, x: &Field) -> Field {
        let mut y = vec![0.0; self.len()];
        self.stiffness.matvec(&x.values, &mut y);
        for (yi, m) in y.iter_mut().zip(&self.mass) {
            *yi /= m;
        }
        Field {
            grid: self.grid.clone(),
            values: y,
        }
    }

    /// Rayleigh quotient `⟨x, −(1/2)Δ_h x⟩ / ⟨x, x⟩` in the quadrature inner product.
    pub fn rayleigh_quotient(&self, x: &Field) -> f64 {
        let mut kx = vec![0.0; self.len()];
        self.stiffness.matvec(&x.values, &mut kx);
        dot(&x.values, &kx) / crate::numeric::sum::weighted_dot(&self.mass, &x.values, &x.values)
    }

    /// Default CG iteration cap.
    pub fn default_iteration_cap(&self) -> usize {
        let n = self.len() as f64;
        ((20.0 * n.sqrt()).ceil() as usize).max(2 * self.grid.longest_line())
    }

    /// Solves `(αK + βM) x = b` with Jacobi-preconditioned CG starting from `x`.
    /// `b` is a raw vector (already mass-weighted by the caller).
    pub(crate) fn solve_combination(
        &self,
        alpha: f64,
        beta: f64,
        b: &[f64],
        x: &mut [f64],
        tol: f64,
        cap: usize,
    ) -> Result<usize> {
        let n = self.len();
        let diag: Vec<f64> = self
            .stiffness
            .diagonal()
            .iter()
            .zip(&self.mass)
            .map(|(k, m)| alpha * k + beta * m)
            .collect();
        let apply = |v: &[f64], out: &mut [f64]| {
            self.stiffness.matvec(v, out);
            for i in 0..n {
                out[i] = alpha * out[i] + beta * self.mass[i] * v[i];
            }
        };
        pcg(apply, &diag, b, x, tol, cap)
    }

    /// Writes `row col value` lines of `−(1/2)Δ_h` (0-based indices).
    pub fn write_coo<W: Write>(&self, mut out: W) -> Result<()> {
        for i in 0..self.len() {
            for (j, v) in self.stiffness.row(i) {
                writeln!(out, "{i} {j} {:e}", v / self.mass[i])?;
            }
        }
        Ok(())
    }
}

/// Preconditioned conjugate gradients on an SPD operator. Convergence is
/// declared on the true residual `‖b − Ax‖ ≤ tol·‖b‖`; when the recursive
/// residual drifts from the true one, the iteration restarts from the
/// current iterate.
fn pcg(
    apply: impl Fn(&[f64], &mut [f64]),
    diag: &[f64],
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    cap: usize,
) -> Result<usize> {
    let n = b.len();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(0);
    }
    let target = tol * bnorm;
    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut iterations = 0;
    let mut last_true = f64::INFINITY;

    loop {
        apply(x, &mut q);
        for i in 0..n {
            r[i] = b[i] - q[i];
        }
        let true_res = norm2(&r);
        if true_res <= target {
            return Ok(iterations);
        }
        // a restart that does not halve the true residual means we are at the
        // attainable accuracy floor
        if iterations >= cap || true_res > 0.5 * last_true {
            return Err(Error::NotConverged {
                iterations,
                residual: true_res / bnorm,
                tol,
            });
        }
        last_true = true_res;

        for i in 0..n {
            z[i] = r[i] / diag[i];
            p[i] = z[i];
        }
        let mut rz = dot(&r, &z);
        while iterations < cap {
            iterations += 1;
            apply(&p, &mut q);
            let pq = dot(&p, &q);
            if pq <= 0.0 {
                return Err(Error::NotConverged {
                    iterations,
                    residual: norm2(&r) / bnorm,
                    tol,
                });
            }
            let alpha = rz / pq;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * q[i];
            }
            if norm2(&r) <= 0.5 * target {
                break;
            }
            for i in 0..n {
                z[i] = r[i] / diag[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
    }
}

/// Solves `−(1/2)Δ_h x = rhs` to relative residual `tol` (measured on the
/// symmetric system `Kx = M·rhs`).
pub fn solve_poisson(op: &DiscreteOperator, rhs: &Field, tol: f64) -> Result<Field> {
    solve_poisson_with_cap(op, rhs, tol, op.default_iteration_cap())
}

pub fn solve_poisson_with_cap(op: &DiscreteOperator, rhs: &Field, tol: f64, cap: usize) -> Result<Field> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive (got {tol})")));
    }
    if rhs.len() != op.len() {
        return Err(Error::LengthMismatch {
            expected: op.len(),
            got: rhs.len(),
        });
    }
    let b: Vec<f64> = rhs.values.iter().zip(&op.mass).map(|(v, m)| v * m).collect();
    let mut x = vec![0.0; op.len()];
    op.solve_combination(1.0, 0.0, &b, &mut x, tol, cap)?;
    Ok(Field {
        grid: op.grid.clone(),
        values: x,
    })
}

/// Relative tolerance of the correction solves in [`solve_poisson_refined`].
const REFINE_TOL: f64 = 1e-6;

/// [`solve_poisson`] followed by up to `sweeps` rounds of iterative
/// refinement. The residual `M·rhs − Kx` is accumulated row by row in
/// double-double with exact products, so the result is accurate well past the
/// f64 floor of plain CG. Stops early once a correction no longer changes `x`.
pub fn solve_poisson_refined(op: &DiscreteOperator, rhs: &Field, tol: f64, sweeps: usize) -> Result<Field> {
    let mut sol = solve_poisson(op, rhs, tol)?;
    let b: Vec<f64> = rhs.values.iter().zip(&op.mass).map(|(v, m)| v * m).collect();
    let cap = op.default_iteration_cap();
    for _ in 0..sweeps {
        let r = residual_dd(&op.stiffness, &b, &sol.values);
        if norm2(&r) == 0.0 {
            break;
        }
        let mut d = vec![0.0; op.len()];
        op.solve_combination(1.0, 0.0, &r, &mut d, REFINE_TOL, cap)?;
        let mut changed = false;
        for (x, dx) in sol.values.iter_mut().zip(&d) {
            let next = *x + dx;
            changed |= next != *x;
            *x = next;
        }
        if !changed {
            break;
        }
    }
    Ok(sol)
}

/// `b − Ax`, each row summed in double-double and rounded once.
fn residual_dd(a: &CsrMatrix, b: &[f64], x: &[f64]) -> Vec<f64> {
    (0..a.dim())
        .map(|i| {
            let mut acc = DoubleDouble::new(b[i], 0.0);
            for (j, v) in a.row(i) {
                acc -= two_prod(v, x[j]);
            }
            acc.to_f64()
        })
        .collect()
}

/// One eigenpair of the Dirichlet Laplacian: `λ` in the positive-Laplacian
/// convention (the matrix eigenvalue of `−(1/2)Δ_h` is `λ/2`) and an
/// eigenfunction normalized in the grid quadrature.
#[derive(Clone, Debug)]
pub struct EigenPair {
    pub lambda: f64,
    pub phi: Field,
    /// `‖(−(1/2)Δ_h − λ/2)φ‖` in the quadrature norm.
    pub residual: f64,
}

const MAX_EIGENPAIRS: usize = 32;

/// The `m` lowest eigenpairs by block inverse iteration: each sweep applies
/// `(−(1/2)Δ_h)⁻¹` to the block with CG, re-orthonormalizes it by
/// Gram–Schmidt in the quadrature inner product and rotates it onto Ritz
/// vectors. Converged when every requested pair has residual
/// `≤ tol·max(1, λ/2)`.
pub fn lowest_eigenpairs(op: &DiscreteOperator, m: usize, tol: f64) -> Result<Vec<EigenPair>> {
    let n = op.len();
    if m == 0 || m > MAX_EIGENPAIRS || m >= n {
        return Err(Error::InvalidArgument(format!(
            "eigenpair count must be in 1..={} and below the node count {n} (got {m})",
            MAX_EIGENPAIRS.min(n.saturating_sub(1))
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive (got {tol})")));
    }
    let block = (m + (m / 2).max(4)).min(n);
    let mass = &op.mass;
    let cap = op.default_iteration_cap();

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_e16e);
    let mut x: Vec<Vec<f64>> = (0..block)
        .map(|_| (0..n).map(|_| rng.random::<f64>() - 0.5).collect())
        .collect();
    m_orthonormalize(&mut x, mass);
    let mut theta = vec![0.0; block];
    let mut have_ritz = false;
    let max_sweeps = 2000;
    // stop early once the residual has not improved by 10% in 100 sweeps
    let (mut best, mut best_sweep) = (f64::INFINITY, 0usize);
    let inner_tol = (tol * 1e-2).clamp(1e-10, 1e-6);

    for sweep in 0..max_sweeps {
        // Y = A⁻¹ X, warm-started from X Θ⁻¹
        let mut y = Vec::with_capacity(block);
        for (j, xj) in x.iter().enumerate() {
            let b: Vec<f64> = xj.iter().zip(mass).map(|(v, m)| v * m).collect();
            let mut yj: Vec<f64> = if have_ritz && theta[j] > 0.0 {
                xj.iter().map(|v| v / theta[j]).collect()
            } else {
                vec![0.0; n]
            };
            match op.solve_combination(1.0, 0.0, &b, &mut yj, inner_tol, cap) {
                Ok(_) => {}
                // inexact inner solves only slow the outer iteration down
                Err(Error::NotConverged { residual, .. }) if residual <= 100.0 * inner_tol => {}
                Err(e) => return Err(e),
            }
            y.push(yj);
        }
        m_orthonormalize(&mut y, mass);

        // Rayleigh–Ritz on span(Y)
        let ky: Vec<Vec<f64>> = y
            .iter()
            .map(|v| {
                let mut out = vec![0.0; n];
                op.stiffness.matvec(v, &mut out);
                out
            })
            .collect();
        let h = Matrix::from_fn(block, block, |i, j| 0.5 * (dot(&y[i], &ky[j]) + dot(&y[j], &ky[i])));
        let (vals, vecs) = symmetric_eigen(&h);
        let combine = |basis: &[Vec<f64>], c: usize| {
            let mut out = vec![0.0; n];
            for (k, b) in basis.iter().enumerate() {
                let coef = vecs[(k, c)];
                for (o, v) in out.iter_mut().zip(b) {
                    *o += coef * v;
                }
            }
            out
        };
        x = (0..block).map(|c| combine(&y, c)).collect();
        let kx: Vec<Vec<f64>> = (0..block).map(|c| combine(&ky, c)).collect();
        theta = vals;
        have_ritz = true;

        let mut worst: f64 = 0.0;
        let mut residuals = Vec::with_capacity(m);
        for j in 0..m {
            let res = {
                let mut acc = CompensatedSum::new();
                for i in 0..n {
                    let r = kx[j][i] - theta[j] * mass[i] * x[j][i];
                    acc.add(r * r / mass[i]);
                }
                acc.value().max(0.0).sqrt()
            };
            worst = worst.max(res / theta[j].max(1.0));
            residuals.push(res);
        }
        if worst <= tol {
            let grid = op.grid.clone();
            return Ok((0..m)
                .map(|j| {
                    let mut phi = x[j].clone();
                    // deterministic sign: positive quadrature integral, else positive first entry
                    let integral = ksum(phi.iter().zip(mass).map(|(v, w)| v * w));
                    let flip = if integral.abs() > 1e-10 {
                        integral < 0.0
                    } else {
                        phi.iter().find(|v| v.abs() > 1e-8).is_some_and(|v| *v < 0.0)
                    };
                    if flip {
                        phi.iter_mut().for_each(|v| *v = -*v);
                    }
                    EigenPair {
                        lambda: 2.0 * theta[j],
                        phi: Field {
                            grid: grid.clone(),
                            values: phi,
                        },
                        residual: residuals[j],
                    }
                })
                .collect());
        }
        if worst < 0.9 * best {
            best = worst;
            best_sweep = sweep;
        }
        if sweep + 1 == max_sweeps || sweep - best_sweep >= 100 {
            return Err(Error::EigenNotConverged {
                iterations: sweep + 1,
                residual: worst,
            });
        }
    }
    unreachable!("the sweep loop returns")
}

/// Modified Gram–Schmidt (two passes) in the `M` inner product.
fn m_orthonormalize(vs: &mut [Vec<f64>], mass: &[f64]) {
    use crate::numeric::sum::weighted_dot;
    for j in 0..vs.len() {
        for _pass in 0..2 {
            for k in 0..j {
                let (head, tail) = vs.split_at_mut(j);
                let c = weighted_dot(mass, &head[k], &tail[0]);
                for (t, h) in tail[0].iter_mut().zip(&head[k]) {
                    *t -= c * h;
                }
            }
        }
        let nrm = weighted_dot(mass, &vs[j], &vs[j]).sqrt();
        vs[j].iter_mut().for_each(|v| *v /= nrm);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, build_radial_grid, DomainSpec};

    fn interval_op(h: f64) -> DiscreteOperator {
        let g = Arc::new(build_grid(&DomainSpec::interval(0.0, 1.0).unwrap(), h).unwrap());
        assemble_half_laplacian(g)
    }

    #[test]
    fn interval_stencil() {
        let op = interval_op(0.25);
        let s = 1.0 / (2.0 * 0.0625);
        assert_eq!(op.entry(1, 1), 2.0 * s);
        assert_eq!(op.entry(1, 0), -s);
        assert_eq!(op.entry(0, 2), 0.0);
        assert_eq!(op.stiffness().nnz(), 7);
    }

    #[test]
    fn constants_annihilated_away_from_boundary() {
        let g = Arc::new(build_grid(&DomainSpec::rectangle(1.0, 1.0).unwrap(), 0.125).unwrap());
        let op = assemble_half_laplacian(g.clone());
        let y = op.apply(&Field::constant(g.clone(), 1.0));
        let center = g.node_at(4, 4).unwrap();
        assert_eq!(y.values()[center], 0.0);
    }

    #[test]
    fn operator_is_symmetric_and_diagonally_dominant() {
        let poly = DomainSpec::polygon(vec![[0.0, 0.0], [1.0, 0.1], [0.8, 0.9], [0.1, 0.7]]).unwrap();
        let op = assemble_half_laplacian(Arc::new(build_grid(&poly, 1.0 / 16.0).unwrap()));
        let k = op.stiffness();
        for i in 0..op.len() {
            let mut off = 0.0;
            for (j, v) in k.row(i) {
                assert_eq!(v, k.get(j, i));
                if j != i {
                    off += v.abs();
                }
            }
            assert!(k.get(i, i) > 0.0 && k.get(i, i) >= off);
        }
    }

    #[test]
    fn ground_mode_rayleigh_quotient() {
        let h = 1.0 / 128.0;
        let op = interval_op(h);
        let phi = Field::from_fn(op.grid().clone(), |p| (PI * p[0]).sin());
        let rq = op.rayleigh_quotient(&phi);
        // closed form: eigenvalue of −(1/2)Δ_h is (2/h²) sin²(πh/2)
        let closed = 2.0 / (h * h) * (PI * h / 2.0).sin().powi(2);
        assert!((rq - closed).abs() < 1e-10 * closed);
        assert!((rq - PI * PI / 2.0).abs() < 1e-3 * PI * PI / 2.0);
    }

    #[test]
    fn poisson_on_interval() {
        let op = interval_op(1.0 / 512.0);
        let one = Field::constant(op.grid().clone(), 1.0);
        let u = solve_poisson(&op, &one, 1e-10).unwrap();
        assert!((u.at([0.5, 0.0]) - 0.25).abs() < 1e-6);
        let zero = solve_poisson(&op, &Field::zeros(op.grid().clone()), 1e-10).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unreachable_tolerance_fails() {
        let op = interval_op(1.0 / 512.0);
        let one = Field::constant(op.grid().clone(), 1.0);
        let err = solve_poisson_with_cap(&op, &one, 1e-30, 10).unwrap_err();
        assert!(matches!(err, Error::NotConverged { .. }));
    }

    #[test]
    fn radial_poisson_is_exact_for_quadratic() {
        let g = Arc::new(build_radial_grid(&DomainSpec::disk(1.0).unwrap(), 1.0 / 64.0).unwrap());
        let op = assemble_half_laplacian(g.clone());
        let u = solve_poisson(&op, &Field::constant(g, 1.0), 1e-12).unwrap();
        for (p, v) in u.grid().nodes().iter().zip(u.values()) {
            assert!((v - (1.0 - p[0] * p[0]) / 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn interval_eigenvalues() {
        let op = interval_op(1.0 / 512.0);
        let pairs = lowest_eigenpairs(&op, 3, 1e-9).unwrap();
        for (k, p) in pairs.iter().enumerate() {
            let exact = ((k + 1) as f64 * PI).powi(2);
            assert!((p.lambda - exact).abs() < 5e-4 * exact, "λ{} = {}", k + 1, p.lambda);
        }
        for a in &pairs {
            for b in &pairs {
                let g = a.phi.pair(&b.phi);
                let want = if std::ptr::eq(a, b) { 1.0 } else { 0.0 };
                assert!((g - want).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn square_ground_state() {
        let g = Arc::new(build_grid(&DomainSpec::rectangle(1.0, 1.0).unwrap(), 1.0 / 128.0).unwrap());
        let pairs = lowest_eigenpairs(&assemble_half_laplacian(g), 1, 1e-8).unwrap();
        let exact = 2.0 * PI * PI;
        assert!((pairs[0].lambda - exact).abs() < 2e-3 * exact);
    }

    #[test]
    fn second_order_convergence() {
        let err = |h: f64| {
            let p = lowest_eigenpairs(&interval_op(h), 1, 1e-10).unwrap();
            (p[0].lambda - PI * PI).abs()
        };
        let ratio = err(1.0 / 64.0) / err(1.0 / 128.0);
        assert!((ratio - 4.0).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn integrate_basics() {
        let g = Arc::new(build_grid(&DomainSpec::interval(0.0, 1.0).unwrap(), 1.0 / 512.0).unwrap());
        assert!((integrate(&Field::constant(g.clone(), 1.0)) - 511.0 / 512.0).abs() < 1e-15);
        let f = Field::from_fn(g.clone(), |p| p[0] * (1.0 - p[0]));
        assert!((integrate(&f) - 1.0 / 6.0).abs() < 1e-5);
        assert_eq!(integrate(&Field::zeros(g)), 0.0);
    }

    #[test]
    fn coo_dump() {
        let op = interval_op(0.25);
        let mut buf = Vec::new();
        op.write_coo(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 7);
        assert_eq!(text.lines().next(), Some("0 0 1.6e1"));
    }
}
