//! Periodic P1 finite elements on the unit cell.

pub mod mesh;
pub mod norms;
pub mod quadrature;
pub mod space;

use rayon::prelude::*;

pub use mesh::{build_periodic_mesh, Location, PeriodicMesh};
pub use norms::{error_norm, error_norm_vector, error_norm_with, ErrorSample, FnReference, Norm, ScalarReference};
pub use quadrature::{quadrature, ElementQuadrature, QPoint, QuadratureRule};
pub use space::{build_space, FeFunction, FeSpace, PiecewiseConstant, Rank};

const CHUNK: usize = 256;

/// Evaluates `f` on every element with its quadrature points, in parallel,
/// returning results in element order.
pub fn map_elements<R, F>(mesh: &PeriodicMesh, quad: &ElementQuadrature, lines: &[f64], f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize, &[QPoint]) -> R + Sync,
{
    let count = mesh.triangle_count();
    let chunks: Vec<Vec<R>> = (0..count.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut buf = Vec::new();
            let end = ((c + 1) * CHUNK).min(count);
            (c * CHUNK..end)
                .map(|t| {
                    quad.element_points(mesh, t, lines, &mut buf);
                    f(t, &buf)
                })
                .collect()
        })
        .collect();
    chunks.into_iter().flatten().collect()
}

/// `Σ_T f(T)` with a summation order independent of the thread count.
pub fn sum_over_elements<F>(mesh: &PeriodicMesh, quad: &ElementQuadrature, lines: &[f64], f: F) -> f64
where
    F: Fn(usize, &[QPoint]) -> f64 + Sync,
{
    map_elements(mesh, quad, lines, f).into_iter().sum()
}
