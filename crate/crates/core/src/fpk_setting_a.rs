//! Invariant measure and nonhomogeneous problem for coefficients with a
//! weak divergence `div(A)`.
//!
//! The bilinear form is
//! `a(u, v) = ∫ A∇u·∇v + ∫ u (div(A) − b)·∇v`
//! with trial `u` indexing columns and test `v` indexing rows.

use std::sync::Arc;

use crate::assembly::{assemble, dot2, matvec2, Local, SolveSettings};
use crate::coefficients::{CoefficientField, Point, Vec2};
use crate::error::{FpkError, Result};
use crate::fem::{build_periodic_mesh, build_space, ElementQuadrature, FeFunction, FeSpace, Rank};
use crate::linalg::{solve_with, CsrMatrix, SolveReport, SparseSystem};

/// `r_h = 1 + r̂_h` with `∫ r̂_h = 0`.
#[derive(Clone, Debug)]
pub struct InvariantMeasureA {
    pub r_h: FeFunction,
    pub r_hat_h: FeFunction,
    pub report: SolveReport,
    /// Smallest nodal value of `r_h`.
    pub min_vertex_value: f64,
}

impl InvariantMeasureA {
    pub fn is_positive(&self) -> bool {
        self.min_vertex_value > 0.0
    }

    pub fn mass(&self) -> f64 {
        self.r_h.integral(0)
    }
}

fn require_div_a(field: &CoefficientField) -> Result<()> {
    if !field.has_div_a() {
        return Err(FpkError::config(format!(
            "problem '{}' has no div(A) and cannot be solved in setting A",
            field.name()
        )));
    }
    Ok(())
}

fn scalar_space(n: usize) -> Result<FeSpace> {
    Ok(build_space(Arc::new(build_periodic_mesh(n)?), Rank::Scalar, true))
}

/// Matrix and the invariant-measure load `∫ (b − div(A))·∇v`.
fn assemble_a_with_load(
    field: &CoefficientField,
    space: &FeSpace,
    quad: &ElementQuadrature,
) -> Result<(CsrMatrix, Vec<f64>)> {
    require_div_a(field)?;
    let mesh = space.mesh();
    let (m, mut rhs) = assemble::<3, 1, _>(space, quad, field.discontinuity_lines(), |t, pts| {
        let g = mesh.basis_gradients(t);
        let mut ia = [[0.0; 2]; 2];
        let mut iv = [[0.0; 2]; 3];
        for q in pts {
            let a = field.a(q.x);
            let d = field.div_a(q.x).expect("checked above");
            let b = field.b(q.x);
            let c = [d[0] - b[0], d[1] - b[1]];
            crate::assembly::add_scaled_mat(&mut ia, &a, q.weight);
            for (acc, phi) in iv.iter_mut().zip(q.bary) {
                acc[0] += q.weight * phi * c[0];
                acc[1] += q.weight * phi * c[1];
            }
        }
        let total = [iv[0][0] + iv[1][0] + iv[2][0], iv[0][1] + iv[1][1] + iv[2][1]];
        let mut loc = Local::<3, 1>::zero();
        for l in 0..3 {
            for k in 0..3 {
                loc.mat[l][k] = dot2(&matvec2(&ia, &g[k]), &g[l]) + dot2(&iv[k], &g[l]);
            }
            loc.rhs[0][l] = -dot2(&total, &g[l]);
        }
        Ok(loc)
    })?;
    Ok((m, rhs.remove(0)))
}

/// Matrix of `a(·,·)` on a scalar space.
pub fn assemble_form_a(
    field: &CoefficientField,
    space: &FeSpace,
    quad: &ElementQuadrature,
) -> Result<CsrMatrix> {
    assemble_a_with_load(field, space, quad).map(|(m, _)| m)
}

/// The constrained system for `r̂_h`: `a(r̂_h, v) = ∫ (b − div(A))·∇v`, `∫ r̂_h = 0`.
pub fn invariant_system_a(
    field: &CoefficientField,
    space: &FeSpace,
    quad: &ElementQuadrature,
) -> Result<SparseSystem> {
    let (m, rhs) = assemble_a_with_load(field, space, quad)?;
    let mut sys = SparseSystem::new(m, rhs);
    for row in space.mean_constraints() {
        sys = sys.with_constraint(row, 0.0);
    }
    Ok(sys)
}

fn coarse_mesh_failure(err: FpkError, n: usize) -> FpkError {
    match err {
        FpkError::SolveFailure { reason, residual } => FpkError::SolveFailure {
            reason: format!("h = 1/{n} may be too coarse for the uniqueness regime: {reason}"),
            residual,
        },
        other => other,
    }
}

pub fn solve_invariant_a(
    field: &CoefficientField,
    n: usize,
    settings: &SolveSettings,
) -> Result<InvariantMeasureA> {
    let space = scalar_space(n)?;
    let sys = invariant_system_a(field, &space, &settings.quad)?;
    let sol = solve_with(&sys, &settings.solver).map_err(|e| coarse_mesh_failure(e, n))?;
    let mut r_hat_h = space.function(sol.x)?;
    r_hat_h.project_mean_zero();
    let r_space = build_space(space.mesh_arc().clone(), Rank::Scalar, false);
    let r_h = r_space.function(r_hat_h.coeffs().iter().map(|v| 1.0 + v).collect())?;
    let min_vertex_value = r_h.min_coeff();
    if min_vertex_value <= 0.0 {
        log::warn!("setting A invariant measure has non-positive nodal value {min_vertex_value} at N = {n}");
    }
    Ok(InvariantMeasureA {
        r_h,
        r_hat_h,
        report: sol.report,
        min_vertex_value,
    })
}

/// The constrained system `a(u_h, v) = −∫ F·∇v`, `∫ u_h = 0`.
pub fn nonhomogeneous_system_a(
    field: &CoefficientField,
    forcing: &(dyn Fn(Point) -> Vec2 + Sync),
    space: &FeSpace,
    quad: &ElementQuadrature,
) -> Result<SparseSystem> {
    let m = assemble_form_a(field, space, quad)?;
    let mesh = space.mesh();
    let (_, mut rhs) = assemble::<3, 1, _>(space, quad, field.discontinuity_lines(), |t, pts| {
        let g = mesh.basis_gradients(t);
        let mut integral = [0.0; 2];
        for q in pts {
            let f = forcing(q.x);
            integral[0] += q.weight * f[0];
            integral[1] += q.weight * f[1];
        }
        let mut loc = Local::<3, 1>::zero();
        for l in 0..3 {
            loc.rhs[0][l] = -dot2(&integral, &g[l]);
        }
        Ok(loc)
    })?;
    let mut sys = SparseSystem::new(m, rhs.remove(0));
    for row in space.mean_constraints() {
        sys = sys.with_constraint(row, 0.0);
    }
    Ok(sys)
}

/// Mean-zero discrete solution of `−D²:(Au) + ∇·(bu) = ∇·F`.
pub fn solve_nonhomogeneous_a(
    field: &CoefficientField,
    forcing: &(dyn Fn(Point) -> Vec2 + Sync),
    n: usize,
    settings: &SolveSettings,
) -> Result<(FeFunction, SolveReport)> {
    let space = scalar_space(n)?;
    let sys = nonhomogeneous_system_a(field, forcing, &space, &settings.quad)?;
    let sol = solve_with(&sys, &settings.solver).map_err(|e| coarse_mesh_failure(e, n))?;
    let mut u = space.function(sol.x)?;
    u.project_mean_zero();
    Ok((u, sol.report))
}
