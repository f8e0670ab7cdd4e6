//! Element-by-element assembly into CSR with a deterministic merge.

use crate::error::Result;
use crate::fem::{map_elements, ElementQuadrature, FeSpace, QPoint, Rank};
use crate::linalg::{CsrMatrix, DEFAULT_TOL, SolverOptions};

/// Quadrature and solver settings shared by every discrete problem.
#[derive(Clone, Debug, Default)]
pub struct SolveSettings {
    pub quad: ElementQuadrature,
    pub solver: SolverOptions,
}


impl SolveSettings {
    pub fn with_quad(quad: ElementQuadrature) -> Self {
        SolveSettings {
            quad,
            solver: SolverOptions::default(),
        }
    }

    pub fn tol(&self) -> f64 {
        if self.solver.tol > 0.0 {
            self.solver.tol
        } else {
            DEFAULT_TOL
        }
    }
}

/// Element matrix (`[test][trial]`) and `R` element load vectors over the
/// `D` local dofs. For vector spaces local dof `2a + c` is component `c`
/// at local vertex `a`.
pub(crate) struct Local<const D: usize, const R: usize> {
    pub mat: [[f64; D]; D],
    pub rhs: [[f64; D]; R],
}

impl<const D: usize, const R: usize> Local<D, R> {
    pub fn zero() -> Self {
        Local {
            mat: [[0.0; D]; D],
            rhs: [[0.0; D]; R],
        }
    }
}

pub(crate) fn assemble<const D: usize, const R: usize, F>(
    space: &FeSpace,
    quad: &ElementQuadrature,
    lines: &[f64],
    local: F,
) -> Result<(CsrMatrix, Vec<Vec<f64>>)>
where
    F: Fn(usize, &[QPoint]) -> Result<Local<D, R>> + Sync,
{
    let mesh = space.mesh();
    let k = space.rank().components();
    debug_assert_eq!(D, 3 * k);
    debug_assert!(space.rank() == Rank::Scalar || D == 6);
    let locals = map_elements(mesh, quad, lines, |t, pts| local(t, pts));
    let n = space.dof_count();
    let mut trip = Vec::with_capacity(locals.len() * D * D);
    let mut rhs = vec![vec![0.0; n]; R];
    for (t, loc) in locals.into_iter().enumerate() {
        let loc = loc?;
        let tri = mesh.triangle(t);
        let global: [usize; D] = std::array::from_fn(|a| tri[a / k] * k + a % k);
        for (a, row) in loc.mat.iter().enumerate() {
            for (b, v) in row.iter().enumerate() {
                trip.push((global[a], global[b], *v));
            }
        }
        for (r, vec) in loc.rhs.iter().enumerate() {
            for (a, v) in vec.iter().enumerate() {
                rhs[r][global[a]] += v;
            }
        }
    }
    Ok((CsrMatrix::from_triplets(n, n, &trip), rhs))
}

#[inline]
pub(crate) fn dot2(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub(crate) fn matvec2(m: &[[f64; 2]; 2], v: &[f64; 2]) -> [f64; 2] {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

#[inline]
pub(crate) fn add_scaled_mat(acc: &mut [[f64; 2]; 2], m: &[[f64; 2]; 2], w: f64) {
    for i in 0..2 {
        for j in 0..2 {
            acc[i][j] += w * m[i][j];
        }
    }
}
