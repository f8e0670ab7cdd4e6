//! Structured periodic triangulation of the unit cell.
//!
//! Cell `(i, j)` covers `[i/N, (i+1)/N] × [j/N, (j+1)/N]` and is split along
//! its main diagonal into
//!
//! * kind 0: `(i, j), (i+1, j), (i+1, j+1)` (below the diagonal)
//! * kind 1: `(i, j), (i+1, j+1), (i, j+1)` (above the diagonal)
//!
//! Triangle `2 (j N + i) + kind` stores unwrapped coordinates in `[0, 1]²`;
//! vertex indices are taken modulo `N`, which realizes the periodic
//! identification of boundary copies.

use crate::coefficients::{wrap, Point, Vec2};
use crate::error::{FpkError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicMesh {
    n: usize,
    h: f64,
}

/// Location of a point inside the mesh.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Location {
    pub triangle: usize,
    pub bary: [f64; 3],
}

/// Builds the `N × N` periodic mesh with `2N²` triangles.
pub fn build_periodic_mesh(n: usize) -> Result<PeriodicMesh> {
    if n < 2 {
        return Err(FpkError::config(format!("mesh size N must be at least 2, got {n}")));
    }
    Ok(PeriodicMesh { n, h: 1.0 / n as f64 })
}

impl PeriodicMesh {
    pub fn n_side(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn vertex_count(&self) -> usize {
        self.n * self.n
    }

    pub fn triangle_count(&self) -> usize {
        2 * self.n * self.n
    }

    /// Index of vertex `(i, j)` after periodic reduction.
    #[inline]
    pub fn vertex_index(&self, i: i64, j: i64) -> usize {
        let n = self.n as i64;
        (j.rem_euclid(n) * n + i.rem_euclid(n)) as usize
    }

    /// Coordinates `(i/N, j/N)` of a vertex in `[0, 1)²`.
    pub fn vertex(&self, v: usize) -> Point {
        let (i, j) = (v % self.n, v / self.n);
        [self.coord(i), self.coord(j)]
    }

    #[inline]
    fn coord(&self, i: usize) -> f64 {
        i as f64 / self.n as f64
    }

    /// `(i, j, kind)` of a triangle.
    #[inline]
    pub fn cell_of(&self, t: usize) -> (usize, usize, usize) {
        let cell = t / 2;
        (cell % self.n, cell / self.n, t % 2)
    }

    /// Global vertex indices, counter-clockwise.
    #[inline]
    pub fn triangle(&self, t: usize) -> [usize; 3] {
        let (i, j, kind) = self.cell_of(t);
        let (i, j) = (i as i64, j as i64);
        if kind == 0 {
            [
                self.vertex_index(i, j),
                self.vertex_index(i + 1, j),
                self.vertex_index(i + 1, j + 1),
            ]
        } else {
            [
                self.vertex_index(i, j),
                self.vertex_index(i + 1, j + 1),
                self.vertex_index(i, j + 1),
            ]
        }
    }

    /// Unwrapped vertex coordinates, counter-clockwise.
    #[inline]
    pub fn triangle_coords(&self, t: usize) -> [Point; 3] {
        let (i, j, kind) = self.cell_of(t);
        let (x0, x1) = (self.coord(i), self.coord(i + 1));
        let (y0, y1) = (self.coord(j), self.coord(j + 1));
        if kind == 0 {
            [[x0, y0], [x1, y0], [x1, y1]]
        } else {
            [[x0, y0], [x1, y1], [x0, y1]]
        }
    }

    /// Signed area; `1/(2N²)` for every triangle.
    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_coords(t);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    #[inline]
    pub fn area(&self, _t: usize) -> f64 {
        0.5 * self.h * self.h
    }

    /// Constant gradients of the three local hat functions.
    #[inline]
    pub fn basis_gradients(&self, t: usize) -> [Vec2; 3] {
        let inv = self.n as f64;
        if t.is_multiple_of(2) {
            [[-inv, 0.0], [inv, -inv], [0.0, inv]]
        } else {
            [[0.0, -inv], [inv, 0.0], [-inv, inv]]
        }
    }

    /// Barycentric coordinates of an unwrapped point with respect to triangle `t`.
    #[inline]
    pub fn barycentric(&self, t: usize, x: Point) -> [f64; 3] {
        let (i, j, kind) = self.cell_of(t);
        let n = self.n as f64;
        let u = x[0] * n - i as f64;
        let v = x[1] * n - j as f64;
        if kind == 0 {
            [1.0 - u, u - v, v]
        } else {
            [1.0 - v, u, v - u]
        }
    }

    /// Finds the triangle containing `y` (wrapped into the unit cell).
    pub fn locate(&self, y: Point) -> Location {
        let y = wrap(y);
        let n = self.n as f64;
        let i = ((y[0] * n).floor() as usize).min(self.n - 1);
        let j = ((y[1] * n).floor() as usize).min(self.n - 1);
        let u = y[0] * n - i as f64;
        let v = y[1] * n - j as f64;
        let kind = usize::from(u < v);
        let triangle = 2 * (j * self.n + i) + kind;
        let bary = if kind == 0 {
            [1.0 - u, u - v, v]
        } else {
            [1.0 - v, u, v - u]
        };
        Location { triangle, bary }
    }

    /// `x`-extent of a triangle.
    #[inline]
    pub fn x_range(&self, t: usize) -> (f64, f64) {
        let (i, _, _) = self.cell_of(t);
        (self.coord(i), self.coord(i + 1))
    }

    /// Whether the interior of triangle `t` meets one of the lines `{y₁ = c}`.
    pub fn is_cut(&self, t: usize, lines: &[f64]) -> bool {
        let (lo, hi) = self.x_range(t);
        lines.iter().any(|&c| {
            let c = c - c.floor();
            lo < c && c < hi
        })
    }

    /// Whether every line `{y₁ = c}` lies on mesh edges.
    pub fn aligned_with(&self, lines: &[f64]) -> bool {
        (0..self.n).all(|i| !self.is_cut(2 * i, lines))
    }
}
