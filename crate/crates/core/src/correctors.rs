//! Periodic correctors `χ_j` of `−A:D²χ_j − b·∇χ_j = b_j` and the centering
//! check `⟨b⟩ = ∫ b r = 0`.

use std::sync::Arc;

use crate::assembly::{add_scaled_mat, assemble, dot2, matvec2, Local, SolveSettings};
use crate::coefficients::{CoefficientField, Point, RenormalizedField, Vec2};
use crate::error::{FpkError, Result};
use crate::fem::{build_periodic_mesh, build_space, map_elements, ElementQuadrature, FeFunction, FeSpace, Rank};
use crate::fpk_setting_b::element_moments;
use crate::linalg::{ConstrainedSolver, CsrMatrix, SolveReport};

/// Default tolerance above which the centering check logs a warning.
pub const CENTERING_TOL: f64 = 1e-8;

/// `⟨b⟩ = ∫_Y b r` with the element quadrature on an `n_quad × n_quad` mesh.
pub fn check_centering(
    field: &CoefficientField,
    invariant: &(dyn Fn(Point) -> f64 + Sync),
    quad: &ElementQuadrature,
    n_quad: usize,
) -> Result<Vec2> {
    let mesh = build_periodic_mesh(n_quad)?;
    let parts = map_elements(&mesh, quad, field.discontinuity_lines(), |_, pts| {
        let mut acc = [0.0; 2];
        for q in pts {
            let b = field.b(q.x);
            let r = invariant(q.x);
            acc[0] += q.weight * b[0] * r;
            acc[1] += q.weight * b[1] * r;
        }
        acc
    });
    let mut total = [0.0; 2];
    for p in parts {
        total[0] += p[0];
        total[1] += p[1];
    }
    if total[0].hypot(total[1]) > CENTERING_TOL {
        log::warn!(
            "centering condition fails for '{}': <b> = ({:e}, {:e})",
            field.name(),
            total[0],
            total[1]
        );
    }
    Ok(total)
}

/// Scalar correctors `χ_{1,h}, χ_{2,h}`.
#[derive(Clone, Debug)]
pub struct CorrectorA {
    pub chi_h: [FeFunction; 2],
    pub reports: [SolveReport; 2],
}

/// Gradient correctors `ξ_{1,h}, ξ_{2,h}` approximating `∇χ_j`.
#[derive(Clone, Debug)]
pub struct CorrectorB {
    pub xi_h: [FeFunction; 2],
    pub reports: [SolveReport; 2],
}

/// Matrix of
/// `∫ r_h A∇χ·∇v − ∫ v β_h·∇χ` with `β_h = r_h b − (r_h div(A) + A∇r_h)`
/// and the loads `∫ r_h b_j v`, `j = 1, 2`.
pub fn corrector_system_a(
    field: &CoefficientField,
    r_h: &FeFunction,
    quad: &ElementQuadrature,
) -> Result<(CsrMatrix, [Vec<f64>; 2])> {
    if !field.has_div_a() {
        return Err(FpkError::config(format!(
            "problem '{}' has no div(A) and cannot be solved in setting A",
            field.name()
        )));
    }
    let space = build_space(r_h.space().mesh_arc().clone(), Rank::Scalar, true);
    let mesh = space.mesh();
    let (m, rhs) = assemble::<3, 2, _>(&space, quad, field.discontinuity_lines(), |t, pts| {
        let g = mesh.basis_gradients(t);
        let grad_r = r_h.grad_on_element(t);
        let mut ira = [[0.0; 2]; 2];
        let mut ibeta = [[0.0; 2]; 3];
        let mut irb = [[0.0; 2]; 3];
        for q in pts {
            let a = field.a(q.x);
            let b = field.b(q.x);
            let d = field.div_a(q.x).expect("checked above");
            let r = r_h.eval_in(t, &q.bary, 0);
            let a_grad_r = matvec2(&a, &grad_r);
            let beta = [
                r * b[0] - (r * d[0] + a_grad_r[0]),
                r * b[1] - (r * d[1] + a_grad_r[1]),
            ];
            add_scaled_mat(&mut ira, &a, q.weight * r);
            for l in 0..3 {
                let w = q.weight * q.bary[l];
                ibeta[l][0] += w * beta[0];
                ibeta[l][1] += w * beta[1];
                irb[l][0] += w * r * b[0];
                irb[l][1] += w * r * b[1];
            }
        }
        let mut loc = Local::<3, 2>::zero();
        for l in 0..3 {
            for k in 0..3 {
                loc.mat[l][k] = dot2(&matvec2(&ira, &g[k]), &g[l]) - dot2(&ibeta[l], &g[k]);
            }
            loc.rhs[0][l] = irb[l][0];
            loc.rhs[1][l] = irb[l][1];
        }
        Ok(loc)
    })?;
    let mut rhs = rhs.into_iter();
    Ok((m, [rhs.next().unwrap(), rhs.next().unwrap()]))
}

fn solve_pair(
    space: &FeSpace,
    matrix: &CsrMatrix,
    rhs: [Vec<f64>; 2],
    settings: &SolveSettings,
    context: &str,
) -> Result<([FeFunction; 2], [SolveReport; 2])> {
    let rows = space.mean_constraints();
    let zero = vec![0.0; rows.len()];
    let solver = ConstrainedSolver::new(matrix, rows, settings.solver.clone())?;
    let sols = solver
        .solve_many(&rhs, &[zero.clone(), zero])
        .map_err(|e| match e {
            FpkError::SolveFailure { reason, residual } => FpkError::SolveFailure {
                reason: format!("{context}: {reason}"),
                residual,
            },
            other => other,
        })?;
    let mut funcs = Vec::with_capacity(2);
    let mut reports = Vec::with_capacity(2);
    for s in sols {
        let mut f = space.function(s.x)?;
        f.project_mean_zero();
        funcs.push(f);
        reports.push(s.report);
    }
    let funcs: [FeFunction; 2] = funcs.try_into().expect("two solutions");
    let reports: [SolveReport; 2] = reports.try_into().expect("two reports");
    Ok((funcs, reports))
}

/// Solves for both scalar correctors with one factorization.
pub fn solve_correctors_a(
    field: &CoefficientField,
    r_h: &FeFunction,
    settings: &SolveSettings,
) -> Result<CorrectorA> {
    let (m, rhs) = corrector_system_a(field, r_h, &settings.quad)?;
    let space = build_space(r_h.space().mesh_arc().clone(), Rank::Scalar, true);
    let n = space.mesh().n_side();
    let (chi_h, reports) = solve_pair(
        &space,
        &m,
        rhs,
        settings,
        &format!("h = 1/{n} may be too coarse for the corrector problem"),
    )?;
    Ok(CorrectorA { chi_h, reports })
}

/// Corrector `χ_{j,h}` for `j ∈ {1, 2}`.
pub fn solve_corrector_a(
    field: &CoefficientField,
    r_h: &FeFunction,
    j: usize,
    settings: &SolveSettings,
) -> Result<(FeFunction, SolveReport)> {
    let idx = component_index(j)?;
    let c = solve_correctors_a(field, r_h, settings)?;
    let [f0, f1] = c.chi_h;
    let [r0, r1] = c.reports;
    Ok(if idx == 0 { (f0, r0) } else { (f1, r1) })
}

fn component_index(j: usize) -> Result<usize> {
    match j {
        1 | 2 => Ok(j - 1),
        _ => Err(FpkError::config(format!("corrector index must be 1 or 2, got {j}"))),
    }
}

/// Transpose of the `B₂` matrix and the loads `−∫ b̃_j ∇·w`.
pub fn corrector_system_b(
    ren: &RenormalizedField,
    space: &FeSpace,
    quad: &ElementQuadrature,
) -> Result<(CsrMatrix, [Vec<f64>; 2])> {
    let b2 = crate::fpk_setting_b::assemble_b2(ren, space, quad)?;
    let moments = element_moments(ren, space, quad)?;
    let mesh = space.mesh();
    let n = space.dof_count();
    let mut rhs = [vec![0.0; n], vec![0.0; n]];
    for (t, m) in moments.iter().enumerate() {
        let g = mesh.basis_gradients(t);
        let tri = mesh.triangle(t);
        let b_int = [
            m.b_psi[0][0] + m.b_psi[1][0] + m.b_psi[2][0],
            m.b_psi[0][1] + m.b_psi[1][1] + m.b_psi[2][1],
        ];
        for (j, load) in rhs.iter_mut().enumerate() {
            for l in 0..3 {
                for d in 0..2 {
                    load[2 * tri[l] + d] -= b_int[j] * g[l][d];
                }
            }
        }
    }
    Ok((b2.transpose(), rhs))
}

pub fn solve_correctors_b(ren: &RenormalizedField, n: usize, settings: &SolveSettings) -> Result<CorrectorB> {
    let space = build_space(Arc::new(build_periodic_mesh(n)?), Rank::Vector2, true);
    let (m, rhs) = corrector_system_b(ren, &space, &settings.quad)?;
    let (xi_h, reports) = solve_pair(&space, &m, rhs, settings, "gradient corrector")?;
    Ok(CorrectorB { xi_h, reports })
}

/// Gradient corrector `ξ_{j,h}` for `j ∈ {1, 2}`.
pub fn solve_corrector_b(
    ren: &RenormalizedField,
    j: usize,
    n: usize,
    settings: &SolveSettings,
) -> Result<(FeFunction, SolveReport)> {
    let idx = component_index(j)?;
    let c = solve_correctors_b(ren, n, settings)?;
    let [f0, f1] = c.xi_h;
    let [r0, r1] = c.reports;
    Ok(if idx == 0 { (f0, r0) } else { (f1, r1) })
}

/// `∫ |Dv − Dvᵀ|²` of a vector function.
pub fn skew_jacobian_norm_sq(v: &FeFunction) -> f64 {
    let mesh = v.mesh();
    (0..mesh.triangle_count())
        .map(|t| {
            let j = v.jacobian_on_element(t);
            2.0 * mesh.area(t) * (j[0][1] - j[1][0]).powi(2)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{renormalize, BuiltinProblem, CoefficientField};
    use crate::fpk_setting_a::solve_invariant_a;
    use crate::fpk_setting_b::assemble_b2;

    #[test]
    fn zero_drift_gives_zero_correctors() {
        let f = BuiltinProblem::ConstDiag(1.0, 3.0).field();
        let s = SolveSettings::default();
        let inv = solve_invariant_a(&f, 8, &s).unwrap();
        let c = solve_correctors_a(&f, &inv.r_h, &s).unwrap();
        assert!(c.chi_h.iter().all(|x| x.max_abs() < 1e-12));
        let ren = renormalize(&f).unwrap();
        let cb = solve_correctors_b(&ren, 8, &s).unwrap();
        assert!(cb.xi_h.iter().all(|x| x.max_abs() < 1e-12));
    }

    #[test]
    fn paper_a_correctors_coincide() {
        let f = BuiltinProblem::SettingAPaper.field();
        let s = SolveSettings::default();
        let inv = solve_invariant_a(&f, 16, &s).unwrap();
        let c = solve_correctors_a(&f, &inv.r_h, &s).unwrap();
        let diff = c.chi_h[0]
            .coeffs()
            .iter()
            .zip(c.chi_h[1].coeffs())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(diff < 1e-10);
        assert!(c.chi_h[0].max_abs() > 1e-3);
        assert!(c.chi_h[0].integral(0).abs() < 1e-13);
    }

    #[test]
    fn corrector_b_matrix_is_exact_transpose() {
        let ren = renormalize(&BuiltinProblem::SettingBPaper.field()).unwrap();
        let space = build_space(Arc::new(build_periodic_mesh(5).unwrap()), Rank::Vector2, true);
        let q = ElementQuadrature::default();
        let b2 = assemble_b2(&ren, &space, &q).unwrap();
        let (m, _) = corrector_system_b(&ren, &space, &q).unwrap();
        for r in 0..b2.nrows() {
            for (c, v) in b2.row(r) {
                assert_eq!(m.get(c, r).to_bits(), v.to_bits());
            }
        }
        assert_eq!(m.nnz(), b2.nnz());
    }

    #[test]
    fn centering_vanishes_for_zero_drift() {
        let f = BuiltinProblem::Identity.field();
        let c = check_centering(&f, &|_| 1.0, &ElementQuadrature::default(), 4).unwrap();
        assert_eq!(c, [0.0, 0.0]);
    }

    #[test]
    fn bad_index_is_config_error() {
        let f = BuiltinProblem::Identity.field();
        let s = SolveSettings::default();
        let inv = solve_invariant_a(&f, 4, &s).unwrap();
        assert!(solve_corrector_a(&f, &inv.r_h, 3, &s).unwrap_err().is_config());
    }

    #[test]
    fn gradient_corrector_becomes_curl_free() {
        // divergence-free smooth drift, so r = 1 and χ_j is genuinely 2D
        let field = CoefficientField::new(
            "smooth-drift",
            |_| [[1.0, 0.0], [0.0, 1.0]],
            |y| {
                let tau = 2.0 * std::f64::consts::PI;
                [0.4 * (tau * y[1]).sin(), 0.4 * (tau * y[0]).sin()]
            },
        );
        let ren = renormalize(&field).unwrap();
        let s = SolveSettings::default();
        let mut prev = f64::INFINITY;
        for n in [8, 16, 32] {
            let c = solve_correctors_b(&ren, n, &s).unwrap();
            let skew = skew_jacobian_norm_sq(&c.xi_h[0]);
            assert!(skew < prev, "{skew} vs {prev}");
            prev = skew;
        }
    }
}
