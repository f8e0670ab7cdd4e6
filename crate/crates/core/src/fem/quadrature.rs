//! Symmetric triangle quadrature, composite subdivision and exact clipping of
//! elements cut by vertical discontinuity lines.

use crate::coefficients::Point;
use crate::error::{FpkError, Result};
use crate::fem::mesh::PeriodicMesh;

/// A point of a rule on the reference triangle `{ξ, η ≥ 0, ξ + η ≤ 1}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefPoint {
    pub xi: f64,
    pub eta: f64,
    pub weight: f64,
}

/// A quadrature rule on the reference triangle, composited over `s²`
/// congruent subtriangles. Weights sum to the reference area `½`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    order: usize,
    subdivision: usize,
    points: Vec<RefPoint>,
}

/// Base rule as barycentric triples with weights normalized to sum 1.
fn base_rule(order: usize) -> Result<Vec<([f64; 3], f64)>> {
    match order {
        2 => {
            let (a, b) = (1.0 / 6.0, 2.0 / 3.0);
            Ok(vec![([b, a, a], 1.0 / 3.0), ([a, b, a], 1.0 / 3.0), ([a, a, b], 1.0 / 3.0)])
        }
        5 => {
            let s15 = 15f64.sqrt();
            let a1 = (6.0 - s15) / 21.0;
            let a2 = (6.0 + s15) / 21.0;
            let w1 = (155.0 - s15) / 1200.0;
            let w2 = (155.0 + s15) / 1200.0;
            let third = 1.0 / 3.0;
            let mut pts = vec![([third, third, third], 0.225)];
            for (a, w) in [(a1, w1), (a2, w2)] {
                let b = 1.0 - 2.0 * a;
                pts.push(([a, a, b], w));
                pts.push(([a, b, a], w));
                pts.push(([b, a, a], w));
            }
            Ok(pts)
        }
        other => Err(FpkError::config(format!(
            "unsupported quadrature order {other} (supported: 2, 5)"
        ))),
    }
}

/// Builds the composite rule of the given order on `subdivision²` subtriangles.
pub fn quadrature(order: usize, subdivision: usize) -> Result<QuadratureRule> {
    QuadratureRule::new(order, subdivision)
}

impl QuadratureRule {
    pub fn new(order: usize, subdivision: usize) -> Result<Self> {
        if subdivision == 0 {
            return Err(FpkError::config("quadrature subdivision must be at least 1"));
        }
        let base = base_rule(order)?;
        let s = subdivision;
        let inv = 1.0 / s as f64;
        let mut points = Vec::with_capacity(base.len() * s * s);
        let mut push_sub = |p0: [f64; 2], p1: [f64; 2], p2: [f64; 2]| {
            for (l, w) in &base {
                points.push(RefPoint {
                    xi: l[0] * p0[0] + l[1] * p1[0] + l[2] * p2[0],
                    eta: l[0] * p0[1] + l[1] * p1[1] + l[2] * p2[1],
                    weight: 0.5 * w * inv * inv,
                });
            }
        };
        for j in 0..s {
            for i in 0..s - j {
                let (x0, y0) = (i as f64 * inv, j as f64 * inv);
                let (x1, y1) = (x0 + inv, y0 + inv);
                push_sub([x0, y0], [x1, y0], [x0, y1]);
                if i + j + 1 < s {
                    push_sub([x1, y0], [x1, y1], [x0, y1]);
                }
            }
        }
        Ok(QuadratureRule {
            order,
            subdivision,
            points,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn subdivision(&self) -> usize {
        self.subdivision
    }

    pub fn points(&self) -> &[RefPoint] {
        &self.points
    }

    /// Applies the rule on the triangle `p`, returning physical points and weights.
    pub fn map_to(&self, p: &[Point; 3], mut sink: impl FnMut(Point, f64)) {
        let e1 = [p[1][0] - p[0][0], p[1][1] - p[0][1]];
        let e2 = [p[2][0] - p[0][0], p[2][1] - p[0][1]];
        let jac = (e1[0] * e2[1] - e1[1] * e2[0]).abs();
        for q in &self.points {
            sink(
                [
                    p[0][0] + q.xi * e1[0] + q.eta * e2[0],
                    p[0][1] + q.xi * e1[1] + q.eta * e2[1],
                ],
                q.weight * jac,
            );
        }
    }
}

/// A quadrature point on a mesh element.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QPoint {
    /// Unwrapped physical position inside the element.
    pub x: Point,
    pub weight: f64,
    /// Barycentric coordinates with respect to the element.
    pub bary: [f64; 3],
}

/// Element quadrature policy: one rule for regular elements, one for
/// elements whose interior meets a discontinuity line. Cut elements are
/// clipped along the line and the cut rule is applied to each smooth piece.
#[derive(Clone, Debug, PartialEq)]
pub struct ElementQuadrature {
    pub regular: QuadratureRule,
    pub cut: QuadratureRule,
    /// Split cut elements exactly at the lines before applying `cut`;
    /// otherwise `cut` is applied to the whole element.
    pub clip: bool,
}

impl Default for ElementQuadrature {
    fn default() -> Self {
        ElementQuadrature::new(5, 1, 8).expect("default quadrature is valid")
    }
}

impl ElementQuadrature {
    pub fn new(order: usize, subdivision: usize, cut_subdivision: usize) -> Result<Self> {
        Ok(ElementQuadrature {
            regular: QuadratureRule::new(order, subdivision)?,
            cut: QuadratureRule::new(order, cut_subdivision)?,
            clip: true,
        })
    }

    /// Same rules without clipping: cut elements only get the finer composite rule.
    pub fn unclipped(self) -> Self {
        ElementQuadrature { clip: false, ..self }
    }

    /// Appends the quadrature points of triangle `t` to `out`.
    pub fn element_points(&self, mesh: &PeriodicMesh, t: usize, lines: &[f64], out: &mut Vec<QPoint>) {
        out.clear();
        let tri = mesh.triangle_coords(t);
        let mut push = |x: Point, weight: f64| {
            out.push(QPoint {
                x,
                weight,
                bary: mesh.barycentric(t, x),
            })
        };
        if !mesh.is_cut(t, lines) {
            self.regular.map_to(&tri, &mut push);
            return;
        }
        if !self.clip {
            self.cut.map_to(&tri, &mut push);
            return;
        }
        for piece in clip_pieces(&tri, lines) {
            self.cut.map_to(&piece, &mut push);
        }
    }
}

/// Splits a triangle along every vertical line that crosses its interior
/// and fan-triangulates the convex pieces.
pub fn clip_pieces(tri: &[Point; 3], lines: &[f64]) -> Vec<[Point; 3]> {
    let mut polys: Vec<Vec<Point>> = vec![tri.to_vec()];
    for &line in lines {
        let c = line - line.floor();
        let mut next = Vec::with_capacity(polys.len() * 2);
        for poly in polys {
            let lo = poly.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
            let hi = poly.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
            if !(lo < c && c < hi) {
                next.push(poly);
                continue;
            }
            next.push(clip_half(&poly, c, true));
            next.push(clip_half(&poly, c, false));
        }
        polys = next;
    }
    let mut out = Vec::new();
    for poly in polys {
        for k in 1..poly.len().saturating_sub(1) {
            let piece = [poly[0], poly[k], poly[k + 1]];
            let area = 0.5
                * ((piece[1][0] - piece[0][0]) * (piece[2][1] - piece[0][1])
                    - (piece[2][0] - piece[0][0]) * (piece[1][1] - piece[0][1]));
            if area.abs() > 1e-300 {
                out.push(piece);
            }
        }
    }
    out
}

/// Sutherland–Hodgman clip of a convex polygon against `x ≤ c` (or `x ≥ c`).
fn clip_half(poly: &[Point], c: f64, left: bool) -> Vec<Point> {
    let inside = |p: &Point| if left { p[0] <= c } else { p[0] >= c };
    let mut out = Vec::with_capacity(poly.len() + 1);
    for k in 0..poly.len() {
        let cur = poly[k];
        let nxt = poly[(k + 1) % poly.len()];
        let (ci, ni) = (inside(&cur), inside(&nxt));
        if ci {
            out.push(cur);
        }
        if ci != ni && cur[0] != c && nxt[0] != c {
            let s = (c - cur[0]) / (nxt[0] - cur[0]);
            out.push([c, cur[1] + s * (nxt[1] - cur[1])]);
        }
    }
    out
}
