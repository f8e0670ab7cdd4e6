//! Invariant measure and nonhomogeneous problem for bounded coefficients
//! satisfying the drift-augmented Cordes condition.
//!
//! With `Ã = γA`, `b̃ = γb` the vector form is
//!
//! ```text
//! B₂(v, w) = ∫ (∇·v)(Ã:Dw + b̃·w) + ½ ∫ (Dv − Dvᵀ):(Dw − Dwᵀ)
//! ```
//!
//! with trial `v` indexing columns. The discrete `ρ_h` solves
//! `B₂(ρ_h, w) = ∫ Ã:Dw + b̃·w`, and `r̃_h = 1 − ∇·ρ_h` is constant per element.

use std::sync::Arc;

use crate::assembly::{add_scaled_mat, assemble, dot2, matvec2, Local, SolveSettings};
use crate::coefficients::{renormalize, CoefficientField, Mat2, Point, RenormalizedField, Vec2};
use crate::error::{FpkError, Result};
use crate::fem::{
    build_periodic_mesh, build_space, map_elements, ElementQuadrature, FeFunction, FeSpace,
    PiecewiseConstant, QPoint, Rank,
};
use crate::linalg::{solve_with, CsrMatrix, SolveReport, SparseSystem};

/// Per-element integrals of the renormalized coefficients.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct ElementMoments {
    /// `∫_T Ã`.
    pub a_tilde: Mat2,
    /// `∫_T b̃ ψ_a` for the three local hats.
    pub b_psi: [Vec2; 3],
    /// `∫_T γ`.
    pub gamma: f64,
}

fn moments_at(ren: &RenormalizedField, pts: &[QPoint]) -> Result<ElementMoments> {
    let mut m = ElementMoments::default();
    for q in pts {
        let (g, at, bt) = ren.eval(q.x)?;
        add_scaled_mat(&mut m.a_tilde, &at, q.weight);
        m.gamma += q.weight * g;
        for (acc, psi) in m.b_psi.iter_mut().zip(q.bary) {
            acc[0] += q.weight * psi * bt[0];
            acc[1] += q.weight * psi * bt[1];
        }
    }
    Ok(m)
}

pub(crate) fn element_moments(
    ren: &RenormalizedField,
    space: &FeSpace,
    quad: &ElementQuadrature,
) -> Result<Vec<ElementMoments>> {
    map_elements(space.mesh(), quad, ren.base().discontinuity_lines(), |_, pts| {
        moments_at(ren, pts)
    })
    .into_iter()
    .collect()
}

/// Element matrix of `B₂` from its moments; rows are tests `(l, d)`,
/// columns trials `(k, c)`, local index `2a + c`.
fn b2_local(g: &[Vec2; 3], area: f64, m: &ElementMoments) -> [[f64; 6]; 6] {
    let mut out = [[0.0; 6]; 6];
    for l in 0..3 {
        let a_grad = matvec2(&m.a_tilde, &g[l]);
        for d in 0..2 {
            let test_part = a_grad[d] + m.b_psi[l][d];
            for k in 0..3 {
                let gg = dot2(&g[k], &g[l]);
                for c in 0..2 {
                    let curl = if c == d { gg } else { 0.0 } - g[k][d] * g[l][c];
                    out[2 * l + d][2 * k + c] = g[k][c] * test_part + area * curl;
                }
            }
        }
    }
    out
}

fn vector_space(n: usize) -> Result<FeSpace> {
    Ok(build_space(Arc::new(build_periodic_mesh(n)?), Rank::Vector2, true))
}

fn assemble_from_moments(
    space: &FeSpace,
    moments: &[ElementMoments],
    load: impl Fn(usize, &[Vec2; 3], &ElementMoments) -> [f64; 6] + Sync,
) -> Result<(CsrMatrix, Vec<f64>)> {
    let mesh = space.mesh();
    // moments are precomputed, so the quadrature here only drives the loop
    let trivial = ElementQuadrature::new(2, 1, 1)?;
    let (m, mut rhs) = assemble::<6, 1, _>(space, &trivial, &[], |t, _| {
        let g = mesh.basis_gradients(t);
        Ok(Local {
            mat: b2_local(&g, mesh.area(t), &moments[t]),
            rhs: [load(t, &g, &moments[t])],
        })
    })?;
    Ok((m, rhs.remove(0)))
}

/// Matrix of `B₂` on a vector space (entry `B₂(w_col, w_row)`).
pub fn assemble_b2(ren: &RenormalizedField, space: &FeSpace, quad: &ElementQuadrature) -> Result<CsrMatrix> {
    let moments = element_moments(ren, space, quad)?;
    assemble_from_moments(space, &moments, |_, _, _| [0.0; 6]).map(|(m, _)| m)
}

fn invariant_load(g: &[Vec2; 3], m: &ElementMoments) -> [f64; 6] {
    let mut out = [0.0; 6];
    for l in 0..3 {
        let a_grad = matvec2(&m.a_tilde, &g[l]);
        for d in 0..2 {
            out[2 * l + d] = a_grad[d] + m.b_psi[l][d];
        }
    }
    out
}

fn constrained(space: &FeSpace, matrix: CsrMatrix, rhs: Vec<f64>) -> SparseSystem {
    let mut sys = SparseSystem::new(matrix, rhs);
    for row in space.mean_constraints() {
        sys = sys.with_constraint(row, 0.0);
    }
    sys
}

/// The constrained system `B₂(ρ_h, w) = ∫ Ã:Dw + b̃·w`, `∫ ρ_h = 0`.
pub fn invariant_system_b(ren: &RenormalizedField, space: &FeSpace, quad: &ElementQuadrature) -> Result<SparseSystem> {
    let moments = element_moments(ren, space, quad)?;
    let (m, rhs) = assemble_from_moments(space, &moments, |_, g, mo| invariant_load(g, mo))?;
    Ok(constrained(space, m, rhs))
}

/// Discrete invariant measure `r_h = γ r̃_h / ∫ γ r̃_h`.
#[derive(Clone, Debug)]
pub struct InvariantMeasureB {
    pub rho_h: FeFunction,
    /// `1 − ∇·ρ_h`.
    pub rtilde_h: PiecewiseConstant,
    /// `∫ γ r̃_h`.
    pub mass_gamma: f64,
    pub report: SolveReport,
    /// Elements with `r̃_h < 0` and the most negative value found.
    pub negative_elements: usize,
    pub min_rtilde: f64,
    ren: RenormalizedField,
    gamma_integrals: Vec<f64>,
}

impl InvariantMeasureB {
    pub fn renormalized(&self) -> &RenormalizedField {
        &self.ren
    }

    /// `r_h(y) = γ(y) r̃_h(y) / mass_gamma`.
    pub fn r_h_eval(&self, y: Point) -> Result<f64> {
        Ok(self.ren.gamma(y)? * self.rtilde_h.eval(y) / self.mass_gamma)
    }

    /// `r_h` at a point known to lie in element `t`.
    pub fn r_h_in(&self, t: usize, y: Point) -> Result<f64> {
        Ok(self.ren.gamma(y)? * self.rtilde_h.on_element(t) / self.mass_gamma)
    }

    pub fn rtilde_integral(&self) -> f64 {
        self.rtilde_h.integral()
    }

    /// `∫ r_h` with the assembly quadrature.
    pub fn r_h_integral(&self) -> f64 {
        let mut total = 0.0;
        for (t, g) in self.gamma_integrals.iter().enumerate() {
            total += g * self.rtilde_h.on_element(t);
        }
        total / self.mass_gamma
    }

    /// `∫ r_h` with an independent quadrature.
    pub fn r_h_integral_with(&self, quad: &ElementQuadrature) -> Result<f64> {
        let mesh = self.rtilde_h.mesh();
        let parts: Vec<Result<f64>> = map_elements(mesh, quad, self.ren.base().discontinuity_lines(), |t, pts| {
            let mut acc = 0.0;
            for q in pts {
                acc += q.weight * self.r_h_in(t, q.x)?;
            }
            Ok(acc)
        });
        parts.into_iter().sum()
    }
}

fn check_admissible(field: &CoefficientField) -> Result<RenormalizedField> {
    let report = crate::coefficients::check_cordes(field, crate::coefficients::DEFAULT_SAMPLE_GRID)?;
    if !report.admissible() {
        log::warn!(
            "'{}' fails the sampled Cordes condition (delta_max = {}); continuing",
            field.name(),
            report.delta_max
        );
    }
    renormalize(field)
}

pub fn solve_invariant_b(field: &CoefficientField, n: usize, settings: &SolveSettings) -> Result<InvariantMeasureB> {
    let ren = check_admissible(field)?;
    solve_invariant_b_with(&ren, n, settings)
}

pub fn solve_invariant_b_with(ren: &RenormalizedField, n: usize, settings: &SolveSettings) -> Result<InvariantMeasureB> {
    let space = vector_space(n)?;
    let moments = element_moments(ren, &space, &settings.quad)?;
    let (m, rhs) = assemble_from_moments(&space, &moments, |_, g, mo| invariant_load(g, mo))?;
    let sys = constrained(&space, m, rhs);
    let sol = solve_with(&sys, &settings.solver)?;
    let mut rho_h = space.function(sol.x)?;
    rho_h.project_mean_zero();
    let mesh = space.mesh();
    let values: Vec<f64> = (0..mesh.triangle_count())
        .map(|t| 1.0 - rho_h.divergence_on_element(t))
        .collect();
    let gamma_integrals: Vec<f64> = moments.iter().map(|m| m.gamma).collect();
    let mass_gamma: f64 = values.iter().zip(&gamma_integrals).map(|(r, g)| r * g).sum();
    if !(mass_gamma > 0.0) {
        return Err(FpkError::InvalidInvariant(format!(
            "∫ γ r̃_h = {mass_gamma} is not positive at N = {n}"
        )));
    }
    let negative_elements = values.iter().filter(|v| **v < 0.0).count();
    let min_rtilde = values.iter().copied().fold(f64::INFINITY, f64::min);
    if negative_elements > 0 {
        log::info!("r̃_h is negative on {negative_elements} elements (min {min_rtilde}) at N = {n}");
    }
    Ok(InvariantMeasureB {
        rtilde_h: PiecewiseConstant::new(space.mesh_arc().clone(), values)?,
        rho_h,
        mass_gamma,
        report: sol.report,
        negative_elements,
        min_rtilde,
        ren: ren.clone(),
        gamma_integrals,
    })
}

/// Discrete `ũ_h = −∇·ρ̃_h` of the nonhomogeneous problem together with `ρ̃_h`.
#[derive(Clone, Debug)]
pub struct NonhomogeneousB {
    pub u_h: PiecewiseConstant,
    pub rho_h: FeFunction,
    pub report: SolveReport,
}

/// The constrained system `B₂(ρ̃_h, w) = −∫ F·w`, `∫ ρ̃_h = 0`.
pub fn nonhomogeneous_system_b(
    ren: &RenormalizedField,
    forcing: &(dyn Fn(Point) -> Vec2 + Sync),
    space: &FeSpace,
    quad: &ElementQuadrature,
) -> Result<SparseSystem> {
    let moments = element_moments(ren, space, quad)?;
    let lines = ren.base().discontinuity_lines();
    let f_psi: Vec<[Vec2; 3]> = map_elements(space.mesh(), quad, lines, |_, pts| {
        let mut acc = [[0.0; 2]; 3];
        for q in pts {
            let f = forcing(q.x);
            for (a, psi) in acc.iter_mut().zip(q.bary) {
                a[0] += q.weight * psi * f[0];
                a[1] += q.weight * psi * f[1];
            }
        }
        acc
    });
    let (m, rhs) = assemble_from_moments(space, &moments, |t, _, _| {
        let mut out = [0.0; 6];
        for l in 0..3 {
            for d in 0..2 {
                out[2 * l + d] = -f_psi[t][l][d];
            }
        }
        out
    })?;
    Ok(constrained(space, m, rhs))
}

pub fn solve_nonhomogeneous_b(
    field: &CoefficientField,
    forcing: &(dyn Fn(Point) -> Vec2 + Sync),
    n: usize,
    settings: &SolveSettings,
) -> Result<NonhomogeneousB> {
    let ren = check_admissible(field)?;
    let space = vector_space(n)?;
    let sys = nonhomogeneous_system_b(&ren, forcing, &space, &settings.quad)?;
    let sol = solve_with(&sys, &settings.solver)?;
    let mut rho_h = space.function(sol.x)?;
    rho_h.project_mean_zero();
    let mesh = space.mesh();
    let values = (0..mesh.triangle_count())
        .map(|t| -rho_h.divergence_on_element(t))
        .collect();
    Ok(NonhomogeneousB {
        u_h: PiecewiseConstant::new(space.mesh_arc().clone(), values)?,
        rho_h,
        report: sol.report,
    })
}
