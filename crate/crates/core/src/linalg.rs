//! Sparse storage and constrained nonsymmetric solves.
//!
//! A constrained system is the saddle-point problem
//!
//! ```text
//! [ M  Cᵀ ] [x]   [f]
//! [ C  0  ] [μ] = [τ]
//! ```
//!
//! with a few dense constraint rows `C`. Handing the bordered matrix to a
//! sparse LU produces heavy fill, so the direct path factors
//! `M̂ = M + s Σ e_p e_pᵀ` instead (one pinned dof per constraint), solves
//! the bordered system for `M̂` by block elimination, and removes the pin
//! with a Sherman–Morrison–Woodbury correction. Iterative refinement against
//! the true system follows. Restarted GMRES with Jacobi preconditioning is
//! the fallback.

use std::time::Instant;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::error::{FpkError, Result};

/// Default relative residual tolerance.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` triplets, summing duplicates
    /// in input order.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            counts[r + 1] += 1;
        }
        for r in 0..nrows {
            counts[r + 1] += counts[r];
        }
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        let mut next = counts.clone();
        for &(r, c, v) in triplets {
            cols[next[r]] = c;
            vals[next[r]] = v;
            next[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for r in 0..nrows {
            scratch.clear();
            scratch.extend((counts[r]..counts[r + 1]).map(|k| (cols[k], vals[k])));
            scratch.sort_by_key(|&(c, _)| c);
            for &(c, v) in &scratch {
                if col_idx.len() > row_ptr[r] && *col_idx.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Entries `(col, value)` of row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn max_row_nnz(&self) -> usize {
        (0..self.nrows)
            .map(|r| self.row_ptr[r + 1] - self.row_ptr[r])
            .max()
            .unwrap_or(0)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[range.clone()].binary_search(&c) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|r| self.get(r, r)).collect()
    }

    /// `y = M x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.nrows)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    /// `vᵀ M u`: the form with trial `u` (columns) and test `v` (rows).
    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> f64 {
        (0..self.nrows)
            .map(|r| v[r] * self.row(r).map(|(c, a)| a * u[c]).sum::<f64>())
            .sum()
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut trip = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                trip.push((c, r, v));
            }
        }
        CsrMatrix::from_triplets(self.ncols, self.nrows, &trip)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] = v;
            }
        }
        out
    }

    /// Frobenius norm of `(M − Mᵀ)/2`.
    pub fn skew_norm(&self) -> f64 {
        let t = self.transpose();
        let mut acc = 0.0;
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                let d = 0.5 * (v - t.get(r, c));
                acc += d * d;
            }
            for (c, v) in t.row(r) {
                if self.get(r, c) == 0.0 {
                    acc += 0.25 * v * v;
                }
            }
        }
        acc.sqrt()
    }

    fn to_faer(&self, pins: &[(usize, f64)]) -> Result<SparseColMat<usize, f64>> {
        let mut trip = Vec::with_capacity(self.nnz() + pins.len());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                trip.push(Triplet::new(r, c, v));
            }
        }
        for &(p, s) in pins {
            trip.push(Triplet::new(p, p, s));
        }
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &trip).map_err(|e| {
            FpkError::SolveFailure {
                reason: format!("sparse matrix construction failed: {e:?}"),
                residual: f64::NAN,
            }
        })
    }
}

/// A dense constraint row `c · x = target`.
#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub target: f64,
}

/// `M x + Cᵀ μ = rhs`, `C x = τ`.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

impl SparseSystem {
    pub fn new(matrix: CsrMatrix, rhs: Vec<f64>) -> Self {
        SparseSystem {
            matrix,
            rhs,
            constraints: Vec::new(),
        }
    }

    pub fn with_constraint(mut self, coeffs: Vec<f64>, target: f64) -> Self {
        self.constraints.push(Constraint { coeffs, target });
        self
    }

    pub fn dimension(&self) -> usize {
        self.matrix.nrows()
    }

    fn check(&self) -> Result<()> {
        let n = self.matrix.nrows();
        if self.matrix.ncols() != n {
            return Err(FpkError::config("system matrix must be square"));
        }
        if self.rhs.len() != n || self.constraints.iter().any(|c| c.coeffs.len() != n) {
            return Err(FpkError::config("system dimensions are inconsistent"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveMethod {
    DirectLu,
    Iterative,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum MethodChoice {
    /// Direct LU, falling back to GMRES when the residual check fails.
    #[default]
    Auto,
    Direct,
    Iterative,
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub method: SolveMethod,
    pub relative_residual: f64,
    /// `max_i |c_i · x − τ_i| / (1 + |τ_i|)`.
    pub constraint_violation: f64,
    pub iterations: usize,
    /// Seconds.
    pub wall_time: f64,
}

impl SolveReport {
    /// Equality of everything except the wall time.
    pub fn same_outcome(&self, other: &SolveReport) -> bool {
        self.method == other.method
            && self.relative_residual.to_bits() == other.relative_residual.to_bits()
            && self.constraint_violation.to_bits() == other.constraint_violation.to_bits()
            && self.iterations == other.iterations
    }
}

#[derive(Clone, Debug)]
pub struct SolverOptions {
    pub tol: f64,
    pub method: MethodChoice,
    pub gmres_restart: usize,
    pub gmres_max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: DEFAULT_TOL,
            method: MethodChoice::Auto,
            gmres_restart: 60,
            gmres_max_iterations: 3000,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        SolverOptions {
            tol,
            ..Default::default()
        }
    }
}

/// Solution with the discarded multipliers kept for diagnostics.
#[derive(Clone, Debug)]
pub struct Solution {
    pub x: Vec<f64>,
    pub multipliers: Vec<f64>,
    pub report: SolveReport,
}

/// Solves `system` to relative residual `tol`, returning `x` only.
pub fn solve(system: &SparseSystem, tol: f64) -> Result<(Vec<f64>, SolveReport)> {
    let sol = solve_with(system, &SolverOptions::with_tol(tol))?;
    Ok((sol.x, sol.report))
}

pub fn solve_with(system: &SparseSystem, opts: &SolverOptions) -> Result<Solution> {
    let targets: Vec<f64> = system.constraints.iter().map(|c| c.target).collect();
    let rows: Vec<Vec<f64>> = system.constraints.iter().map(|c| c.coeffs.clone()).collect();
    system.check()?;
    let solver = ConstrainedSolver::new(&system.matrix, rows, opts.clone())?;
    let mut out = solver.solve_many(std::slice::from_ref(&system.rhs), &[targets])?;
    Ok(out.remove(0))
}

/// Euclidean relative residual of the augmented system at `(x, μ)`.
///
/// The denominator is `‖(rhs, τ)‖`; when that vanishes the absolute residual
/// is returned.
pub fn residual(system: &SparseSystem, x: &[f64], multipliers: &[f64]) -> f64 {
    let rows: Vec<&[f64]> = system.constraints.iter().map(|c| c.coeffs.as_slice()).collect();
    let targets: Vec<f64> = system.constraints.iter().map(|c| c.target).collect();
    augmented_residual(&system.matrix, &rows, &system.rhs, &targets, x, multipliers).0
}

/// `(relative residual, constraint violation)`.
fn augmented_residual(
    m: &CsrMatrix,
    rows: &[&[f64]],
    rhs: &[f64],
    targets: &[f64],
    x: &[f64],
    mu: &[f64],
) -> (f64, f64) {
    let (top, bot) = augmented_defect(m, rows, rhs, targets, x, mu);
    let num = top.iter().chain(bot.iter()).map(|v| v * v).sum::<f64>().sqrt();
    let den = rhs.iter().chain(targets.iter()).map(|v| v * v).sum::<f64>().sqrt();
    let violation = bot
        .iter()
        .zip(targets)
        .map(|(d, t)| d.abs() / (1.0 + t.abs()))
        .fold(0.0, f64::max);
    let rel = if den > 0.0 { num / den } else { num };
    (if rel.is_finite() { rel } else { f64::INFINITY }, violation)
}

/// `(f − M x − Cᵀμ, τ − C x)`.
fn augmented_defect(
    m: &CsrMatrix,
    rows: &[&[f64]],
    rhs: &[f64],
    targets: &[f64],
    x: &[f64],
    mu: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let mx = m.matvec(x);
    let mut top: Vec<f64> = rhs.iter().zip(&mx).map(|(f, a)| f - a).collect();
    for (row, &mu_i) in rows.iter().zip(mu) {
        for (t, c) in top.iter_mut().zip(row.iter()) {
            *t -= c * mu_i;
        }
    }
    let bot = rows
        .iter()
        .zip(targets)
        .map(|(row, t)| t - dot(row, x))
        .collect();
    (top, bot)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Small dense LU with partial pivoting.
#[derive(Clone, Debug)]
struct DenseLu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl DenseLu {
    fn new(n: usize, mut a: Vec<f64>) -> Option<Self> {
        let scale = a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if !(scale > 0.0 && scale.is_finite()) {
            return if n == 0 { Some(DenseLu { n, lu: a, perm: vec![] }) } else { None };
        }
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| a[i * n + k].abs().total_cmp(&a[j * n + k].abs()))
                .unwrap();
            if a[p * n + k].abs() <= 1e-13 * scale {
                return None;
            }
            if p != k {
                for c in 0..n {
                    a.swap(k * n + c, p * n + c);
                }
                perm.swap(k, p);
            }
            for i in k + 1..n {
                let f = a[i * n + k] / a[k * n + k];
                a[i * n + k] = f;
                for c in k + 1..n {
                    a[i * n + c] -= f * a[k * n + c];
                }
            }
        }
        Some(DenseLu { n, lu: a, perm })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for k in 0..i {
                x[i] -= self.lu[i * n + k] * x[k];
            }
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                x[i] -= self.lu[i * n + k] * x[k];
            }
            x[i] /= self.lu[i * n + i];
        }
        x
    }
}

/// The pinned-and-corrected direct factorization of a constrained system.
struct DirectFactor {
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
    pins: Vec<usize>,
    /// `M̂⁻¹ cᵢ`.
    z: Vec<Vec<f64>>,
    schur: DenseLu,
    /// `K̂⁻¹ [e_pᵢ; 0]`, split into primal and multiplier parts.
    w: Vec<(Vec<f64>, Vec<f64>)>,
    woodbury: Option<DenseLu>,
}

/// Factor once, solve for many right-hand sides.
pub struct ConstrainedSolver<'a> {
    matrix: &'a CsrMatrix,
    rows: Vec<Vec<f64>>,
    opts: SolverOptions,
    direct: Option<DirectFactor>,
    factor_error: Option<String>,
    factor_time: f64,
}

impl<'a> ConstrainedSolver<'a> {
    pub fn new(matrix: &'a CsrMatrix, rows: Vec<Vec<f64>>, opts: SolverOptions) -> Result<Self> {
        if !(opts.tol > 0.0) {
            return Err(FpkError::config(format!("solver tolerance must be positive, got {}", opts.tol)));
        }
        let start = Instant::now();
        let mut solver = ConstrainedSolver {
            matrix,
            rows,
            opts,
            direct: None,
            factor_error: None,
            factor_time: 0.0,
        };
        if solver.opts.method != MethodChoice::Iterative {
            match solver.factor() {
                Ok(f) => solver.direct = Some(f),
                Err(reason) => {
                    log::debug!("direct factorization unavailable: {reason}");
                    solver.factor_error = Some(reason);
                }
            }
        }
        solver.factor_time = start.elapsed().as_secs_f64();
        Ok(solver)
    }

    fn factor(&self) -> std::result::Result<DirectFactor, String> {
        faer::set_global_parallelism(faer::Par::Seq);
        let n = self.matrix.nrows();
        let m = self.rows.len();
        let scale = self
            .matrix
            .diagonal()
            .iter()
            .fold(0.0_f64, |a, v| a.max(v.abs()));
        let s = if scale > 0.0 { scale } else { 1.0 };
        let mut pins: Vec<usize> = Vec::with_capacity(m);
        for row in &self.rows {
            let best = row
                .iter()
                .enumerate()
                .filter(|(k, _)| !pins.contains(k))
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .map(|(k, _)| k)
                .ok_or("constraint row has no free support")?;
            pins.push(best);
        }
        let pinned: Vec<(usize, f64)> = pins.iter().map(|&p| (p, s)).collect();
        let mat = self.matrix.to_faer(&pinned).map_err(|e| e.to_string())?;
        let lu = mat.sp_lu().map_err(|e| format!("sparse LU failed: {e:?}"))?;

        let z = lu_solve_cols(&lu, n, &self.rows);
        let mut s_mat = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                s_mat[i * m + j] = dot(&self.rows[i], &z[j]);
            }
        }
        let schur = DenseLu::new(m, s_mat).ok_or("constraint Schur complement is singular")?;
        let mut factor = DirectFactor {
            lu,
            pins,
            z,
            schur,
            w: Vec::new(),
            woodbury: None,
        };
        if m > 0 {
            let unit: Vec<Vec<f64>> = factor
                .pins
                .iter()
                .map(|&p| {
                    let mut e = vec![0.0; n];
                    e[p] = 1.0;
                    e
                })
                .collect();
            let zeros = vec![vec![0.0; m]; m];
            factor.w = self.pinned_solve(&factor, &unit, &zeros);
            let mut g = vec![0.0; m * m];
            for i in 0..m {
                for j in 0..m {
                    let ident = if i == j { 1.0 / s } else { 0.0 };
                    g[i * m + j] = ident - factor.w[j].0[factor.pins[i]];
                }
            }
            factor.woodbury = Some(DenseLu::new(m, g).ok_or("pin correction is singular")?);
        }
        Ok(factor)
    }

    /// Solves the bordered system for the pinned matrix `M̂`.
    fn pinned_solve(
        &self,
        f: &DirectFactor,
        tops: &[Vec<f64>],
        bots: &[Vec<f64>],
    ) -> Vec<(Vec<f64>, Vec<f64>)> {
        let n = self.matrix.nrows();
        let ys = lu_solve_cols(&f.lu, n, tops);
        ys.into_iter()
            .zip(bots)
            .map(|(mut y, bot)| {
                let defect: Vec<f64> = self
                    .rows
                    .iter()
                    .zip(bot)
                    .map(|(c, t)| dot(c, &y) - t)
                    .collect();
                let mu = f.schur.solve(&defect);
                for (zj, &mj) in f.z.iter().zip(&mu) {
                    for (yi, zi) in y.iter_mut().zip(zj) {
                        *yi -= zi * mj;
                    }
                }
                (y, mu)
            })
            .collect()
    }

    /// Applies the direct approximation of the inverse of the true system.
    fn direct_apply(
        &self,
        f: &DirectFactor,
        tops: &[Vec<f64>],
        bots: &[Vec<f64>],
    ) -> Vec<(Vec<f64>, Vec<f64>)> {
        let mut out = self.pinned_solve(f, tops, bots);
        if let Some(g) = &f.woodbury {
            for (x, mu) in out.iter_mut() {
                let ut: Vec<f64> = f.pins.iter().map(|&p| x[p]).collect();
                let coef = g.solve(&ut);
                for ((wx, wm), c) in f.w.iter().zip(&coef) {
                    for (xi, wi) in x.iter_mut().zip(wx) {
                        *xi += wi * c;
                    }
                    for (mi, wi) in mu.iter_mut().zip(wm) {
                        *mi += wi * c;
                    }
                }
            }
        }
        out
    }

    pub fn dimension(&self) -> usize {
        self.matrix.nrows()
    }

    /// Solves for several right-hand sides sharing the factorization.
    pub fn solve_many(&self, rhs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<Vec<Solution>> {
        let n = self.matrix.nrows();
        let m = self.rows.len();
        if rhs.len() != targets.len()
            || rhs.iter().any(|r| r.len() != n)
            || targets.iter().any(|t| t.len() != m)
        {
            return Err(FpkError::config("right-hand side dimensions are inconsistent"));
        }
        let rows: Vec<&[f64]> = self.rows.iter().map(|r| r.as_slice()).collect();
        let tol = self.opts.tol;
        let mut results = Vec::with_capacity(rhs.len());
        let mut direct_out = None;
        if let Some(f) = &self.direct {
            let start = Instant::now();
            let mut sols = self.direct_apply(f, rhs, targets);
            // iterative refinement against the unpinned system
            for _ in 0..4 {
                let mut worst = 0.0_f64;
                let mut defects_top = Vec::with_capacity(sols.len());
                let mut defects_bot = Vec::with_capacity(sols.len());
                for ((x, mu), (f_rhs, tau)) in sols.iter().zip(rhs.iter().zip(targets)) {
                    let (rel, _) = augmented_residual(self.matrix, &rows, f_rhs, tau, x, mu);
                    worst = worst.max(rel);
                    let (t, b) = augmented_defect(self.matrix, &rows, f_rhs, tau, x, mu);
                    defects_top.push(t);
                    defects_bot.push(b);
                }
                if !worst.is_finite() || worst <= 1e-3 * tol {
                    break;
                }
                let corr = self.direct_apply(f, &defects_top, &defects_bot);
                for ((x, mu), (dx, dmu)) in sols.iter_mut().zip(corr) {
                    for (a, b) in x.iter_mut().zip(dx) {
                        *a += b;
                    }
                    for (a, b) in mu.iter_mut().zip(dmu) {
                        *a += b;
                    }
                }
            }
            let elapsed = start.elapsed().as_secs_f64() + self.factor_time;
            direct_out = Some((sols, elapsed));
        }
        for (k, (f_rhs, tau)) in rhs.iter().zip(targets).enumerate() {
            let mut best: Option<Solution> = None;
            if let Some((sols, elapsed)) = &direct_out {
                let (x, mu) = &sols[k];
                let (rel, viol) = augmented_residual(self.matrix, &rows, f_rhs, tau, x, mu);
                let finite = x.iter().chain(mu.iter()).all(|v| v.is_finite());
                let sol = Solution {
                    x: x.clone(),
                    multipliers: mu.clone(),
                    report: SolveReport {
                        method: SolveMethod::DirectLu,
                        relative_residual: rel,
                        constraint_violation: viol,
                        iterations: 0,
                        wall_time: *elapsed,
                    },
                };
                if finite && rel <= tol && viol <= tol {
                    results.push(sol);
                    continue;
                }
                if finite {
                    best = Some(sol);
                }
            }
            if self.opts.method != MethodChoice::Direct {
                let start = Instant::now();
                let (x, mu, iters) = gmres(self.matrix, &rows, f_rhs, tau, &self.opts);
                let (rel, viol) = augmented_residual(self.matrix, &rows, f_rhs, tau, &x, &mu);
                let sol = Solution {
                    x,
                    multipliers: mu,
                    report: SolveReport {
                        method: SolveMethod::Iterative,
                        relative_residual: rel,
                        constraint_violation: viol,
                        iterations: iters,
                        wall_time: start.elapsed().as_secs_f64(),
                    },
                };
                if rel <= tol && viol <= tol {
                    results.push(sol);
                    continue;
                }
                if best
                    .as_ref()
                    .is_none_or(|b| sol.report.relative_residual < b.report.relative_residual)
                {
                    best = Some(sol);
                }
            }
            let residual = best
                .as_ref()
                .map_or(f64::INFINITY, |b| b.report.relative_residual.max(b.report.constraint_violation));
            let reason = match &self.factor_error {
                Some(e) if self.opts.method != MethodChoice::Iterative => {
                    format!("singular or near-singular system ({e})")
                }
                _ => "singular or near-singular system: residual tolerance not met".to_string(),
            };
            return Err(FpkError::SolveFailure { reason, residual });
        }
        Ok(results)
    }
}

fn lu_solve_cols(
    lu: &faer::sparse::linalg::solvers::Lu<usize, f64>,
    n: usize,
    cols: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    if cols.is_empty() {
        return Vec::new();
    }
    let b = Mat::<f64>::from_fn(n, cols.len(), |i, j| cols[j][i]);
    let x = lu.solve(&b);
    (0..cols.len())
        .map(|j| (0..n).map(|i| x[(i, j)]).collect())
        .collect()
}

/// Right-preconditioned restarted GMRES on the augmented system.
fn gmres(
    m: &CsrMatrix,
    rows: &[&[f64]],
    rhs: &[f64],
    targets: &[f64],
    opts: &SolverOptions,
) -> (Vec<f64>, Vec<f64>, usize) {
    let n = m.nrows();
    let k = rows.len();
    let dim = n + k;
    let diag = m.diagonal();
    let inv_diag: Vec<f64> = (0..dim)
        .map(|i| {
            let d = if i < n { diag[i] } else { 0.0 };
            if d != 0.0 && d.is_finite() {
                1.0 / d
            } else {
                1.0
            }
        })
        .collect();
    let apply = |v: &[f64]| -> Vec<f64> {
        let (x, mu) = v.split_at(n);
        let mut out = m.matvec(x);
        for (row, &mi) in rows.iter().zip(mu) {
            for (o, c) in out.iter_mut().zip(row.iter()) {
                *o += c * mi;
            }
        }
        out.extend(rows.iter().map(|row| dot(row, x)));
        out
    };
    let b: Vec<f64> = rhs.iter().chain(targets.iter()).copied().collect();
    let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut sol = vec![0.0; dim];
    if b_norm == 0.0 {
        return (vec![0.0; n], vec![0.0; k], 0);
    }
    let restart = opts.gmres_restart.max(1);
    let target = 0.1 * opts.tol * b_norm;
    let mut iters = 0;
    while iters < opts.gmres_max_iterations {
        let ax = apply(&sol);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if beta <= target || !beta.is_finite() {
            break;
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut hess: Vec<Vec<f64>> = Vec::new();
        let mut cs: Vec<f64> = Vec::new();
        let mut sn: Vec<f64> = Vec::new();
        let mut g = vec![beta];
        let mut steps = 0;
        for j in 0..restart {
            let z: Vec<f64> = basis[j].iter().zip(&inv_diag).map(|(v, d)| v * d).collect();
            let mut w = apply(&z);
            let mut h = vec![0.0; j + 2];
            for (i, bi) in basis.iter().enumerate() {
                h[i] = dot(&w, bi);
                for (wv, bv) in w.iter_mut().zip(bi) {
                    *wv -= h[i] * bv;
                }
            }
            h[j + 1] = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            for i in 0..j {
                let t = cs[i] * h[i] + sn[i] * h[i + 1];
                h[i + 1] = -sn[i] * h[i] + cs[i] * h[i + 1];
                h[i] = t;
            }
            let denom = h[j].hypot(h[j + 1]);
            let (c, s) = if denom == 0.0 { (1.0, 0.0) } else { (h[j] / denom, h[j + 1] / denom) };
            let next_norm = h[j + 1];
            h[j] = c * h[j] + s * h[j + 1];
            h[j + 1] = 0.0;
            cs.push(c);
            sn.push(s);
            g.push(-s * g[j]);
            g[j] *= c;
            hess.push(h);
            steps = j + 1;
            iters += 1;
            if g[j + 1].abs() <= target || next_norm <= 1e-300 || iters >= opts.gmres_max_iterations {
                break;
            }
            basis.push(w.iter().map(|v| v / next_norm).collect());
        }
        let mut y = vec![0.0; steps];
        for i in (0..steps).rev() {
            let mut acc = g[i];
            for l in i + 1..steps {
                acc -= hess[l][i] * y[l];
            }
            y[i] = if hess[i][i] != 0.0 { acc / hess[i][i] } else { 0.0 };
        }
        for (i, yi) in y.iter().enumerate() {
            for (s, (bv, d)) in sol.iter_mut().zip(basis[i].iter().zip(&inv_diag)) {
                *s += yi * bv * d;
            }
        }
        if g[steps].abs() <= target {
            break;
        }
    }
    let mu = sol.split_off(n);
    (sol, mu, iters)
}
