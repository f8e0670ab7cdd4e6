//! Continuous piecewise-affine periodic spaces and discrete functions.

use std::sync::Arc;

use crate::coefficients::{Mat2, Point, Vec2};
use crate::error::{FpkError, Result};
use crate::fem::mesh::PeriodicMesh;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rank {
    Scalar,
    /// Two components; dof `2v + c` is component `c` at vertex `v`.
    Vector2,
}

impl Rank {
    pub fn components(self) -> usize {
        match self {
            Rank::Scalar => 1,
            Rank::Vector2 => 2,
        }
    }
}

/// P1 space on a periodic mesh. `mean_zero` is enforced by the solvers
/// through constraint rows, not by the basis.
#[derive(Clone, Debug, PartialEq)]
pub struct FeSpace {
    mesh: Arc<PeriodicMesh>,
    rank: Rank,
    mean_zero: bool,
}

pub fn build_space(mesh: Arc<PeriodicMesh>, rank: Rank, mean_zero: bool) -> FeSpace {
    FeSpace {
        mesh,
        rank,
        mean_zero,
    }
}

impl FeSpace {
    pub fn mesh(&self) -> &PeriodicMesh {
        &self.mesh
    }

    pub fn mesh_arc(&self) -> &Arc<PeriodicMesh> {
        &self.mesh
    }

    pub fn rank(&self) -> Rank {
        self.rank
    }

    pub fn mean_zero(&self) -> bool {
        self.mean_zero
    }

    pub fn dof_count(&self) -> usize {
        self.mesh.vertex_count() * self.rank.components()
    }

    #[inline]
    pub fn dof(&self, vertex: usize, component: usize) -> usize {
        vertex * self.rank.components() + component
    }

    /// `∫_Y φ_v` for every vertex hat function.
    pub fn hat_integrals(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.mesh.vertex_count()];
        for t in 0..self.mesh.triangle_count() {
            let third = self.mesh.area(t) / 3.0;
            for v in self.mesh.triangle(t) {
                out[v] += third;
            }
        }
        out
    }

    /// Rows `c` with `c · x = ∫_Y x_component`, one per component.
    pub fn mean_constraints(&self) -> Vec<Vec<f64>> {
        let hats = self.hat_integrals();
        let k = self.rank.components();
        (0..k)
            .map(|c| {
                let mut row = vec![0.0; self.dof_count()];
                for (v, w) in hats.iter().enumerate() {
                    row[v * k + c] = *w;
                }
                row
            })
            .collect()
    }

    pub fn zero(&self) -> FeFunction {
        FeFunction {
            space: self.clone(),
            coeffs: vec![0.0; self.dof_count()],
        }
    }

    /// Nodal interpolant of a scalar function (component 0 of a vector space
    /// is filled from `f`, others zero).
    pub fn interpolate(&self, f: impl Fn(Point) -> f64) -> FeFunction {
        self.interpolate_vector(|y| [f(y), 0.0])
    }

    pub fn interpolate_vector(&self, f: impl Fn(Point) -> Vec2) -> FeFunction {
        let k = self.rank.components();
        let mut coeffs = vec![0.0; self.dof_count()];
        for v in 0..self.mesh.vertex_count() {
            let val = f(self.mesh.vertex(v));
            for c in 0..k {
                coeffs[v * k + c] = val[c];
            }
        }
        FeFunction {
            space: self.clone(),
            coeffs,
        }
    }

    pub fn function(&self, coeffs: Vec<f64>) -> Result<FeFunction> {
        if coeffs.len() != self.dof_count() {
            return Err(FpkError::MeshMismatch(format!(
                "expected {} coefficients, got {}",
                self.dof_count(),
                coeffs.len()
            )));
        }
        Ok(FeFunction {
            space: self.clone(),
            coeffs,
        })
    }
}

/// A coefficient vector over an [`FeSpace`].
#[derive(Clone, Debug, PartialEq)]
pub struct FeFunction {
    space: FeSpace,
    coeffs: Vec<f64>,
}

impl FeFunction {
    pub fn space(&self) -> &FeSpace {
        &self.space
    }

    pub fn mesh(&self) -> &PeriodicMesh {
        self.space.mesh()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    #[inline]
    fn ncomp(&self) -> usize {
        self.space.rank.components()
    }

    /// Value of `component` at barycentric coordinates inside triangle `t`.
    #[inline]
    pub fn eval_in(&self, t: usize, bary: &[f64; 3], component: usize) -> f64 {
        let k = self.ncomp();
        let tri = self.mesh().triangle(t);
        (0..3).map(|a| bary[a] * self.coeffs[tri[a] * k + component]).sum()
    }

    /// Point value of a scalar function (component 0), wrapping `y`.
    pub fn eval(&self, y: Point) -> f64 {
        self.eval_component(y, 0)
    }

    pub fn eval_component(&self, y: Point, component: usize) -> f64 {
        let loc = self.mesh().locate(y);
        self.eval_in(loc.triangle, &loc.bary, component)
    }

    pub fn eval_vector(&self, y: Point) -> Vec2 {
        let loc = self.mesh().locate(y);
        [
            self.eval_in(loc.triangle, &loc.bary, 0),
            if self.ncomp() > 1 {
                self.eval_in(loc.triangle, &loc.bary, 1)
            } else {
                0.0
            },
        ]
    }

    /// Constant gradient of `component` on triangle `t`.
    #[inline]
    pub fn grad_component(&self, t: usize, component: usize) -> Vec2 {
        let k = self.ncomp();
        let mesh = self.mesh();
        let tri = mesh.triangle(t);
        let g = mesh.basis_gradients(t);
        let mut out = [0.0; 2];
        for a in 0..3 {
            let c = self.coeffs[tri[a] * k + component];
            out[0] += c * g[a][0];
            out[1] += c * g[a][1];
        }
        out
    }

    pub fn grad_on_element(&self, t: usize) -> Vec2 {
        self.grad_component(t, 0)
    }

    /// Jacobian with entries `∂_k v_c` at `[c][k]` on triangle `t`.
    pub fn jacobian_on_element(&self, t: usize) -> Mat2 {
        if self.ncomp() == 1 {
            return [self.grad_component(t, 0), [0.0, 0.0]];
        }
        [self.grad_component(t, 0), self.grad_component(t, 1)]
    }

    /// `∇·v` on triangle `t` for a vector function.
    pub fn divergence_on_element(&self, t: usize) -> f64 {
        let j = self.jacobian_on_element(t);
        j[0][0] + j[1][1]
    }

    /// `∫_Y v_component`.
    pub fn integral(&self, component: usize) -> f64 {
        let k = self.ncomp();
        self.space
            .hat_integrals()
            .iter()
            .enumerate()
            .map(|(v, w)| w * self.coeffs[v * k + component])
            .sum()
    }

    /// Subtracts the mean of every component.
    pub fn project_mean_zero(&mut self) {
        let k = self.ncomp();
        for c in 0..k {
            let mean = self.integral(c);
            for v in 0..self.mesh().vertex_count() {
                self.coeffs[v * k + c] -= mean;
            }
        }
    }

    /// Exact `‖v‖²_{L²}` of one component (P1 mass matrix).
    pub fn l2_norm_sq(&self, component: usize) -> f64 {
        let k = self.ncomp();
        let mesh = self.mesh();
        let mut total = 0.0;
        for t in 0..mesh.triangle_count() {
            let tri = mesh.triangle(t);
            let c: [f64; 3] = std::array::from_fn(|a| self.coeffs[tri[a] * k + component]);
            let sum = c[0] + c[1] + c[2];
            let sq = c[0] * c[0] + c[1] * c[1] + c[2] * c[2];
            total += mesh.area(t) * (sq + sum * sum) / 12.0;
        }
        total
    }

    /// `‖Dv‖²_{L²}` summed over components.
    pub fn grad_norm_sq(&self) -> f64 {
        let mesh = self.mesh();
        let mut total = 0.0;
        for t in 0..mesh.triangle_count() {
            for c in 0..self.ncomp() {
                let g = self.grad_component(t, c);
                total += mesh.area(t) * (g[0] * g[0] + g[1] * g[1]);
            }
        }
        total
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn min_coeff(&self) -> f64 {
        self.coeffs.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub(crate) fn same_space(&self, other: &FeSpace) -> Result<()> {
        if self.mesh().n_side() != other.mesh().n_side() {
            return Err(FpkError::MeshMismatch(format!(
                "functions live on meshes N = {} and N = {}",
                self.mesh().n_side(),
                other.mesh().n_side()
            )));
        }
        Ok(())
    }
}

/// A function that is constant on every triangle.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseConstant {
    mesh: Arc<PeriodicMesh>,
    values: Vec<f64>,
}

impl PiecewiseConstant {
    pub fn new(mesh: Arc<PeriodicMesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.triangle_count() {
            return Err(FpkError::MeshMismatch(format!(
                "expected {} element values, got {}",
                mesh.triangle_count(),
                values.len()
            )));
        }
        Ok(PiecewiseConstant { mesh, values })
    }

    pub fn mesh(&self) -> &PeriodicMesh {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn on_element(&self, t: usize) -> f64 {
        self.values[t]
    }

    pub fn eval(&self, y: Point) -> f64 {
        self.values[self.mesh.locate(y).triangle]
    }

    pub fn integral(&self) -> f64 {
        let mut total = 0.0;
        for (t, v) in self.values.iter().enumerate() {
            total += self.mesh.area(t) * v;
        }
        total
    }
}
