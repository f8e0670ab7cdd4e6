//! Error norms against analytic references, integrated with the element
//! quadrature (clipped at the reference's breakpoints).

use std::fmt;
use std::str::FromStr;

use crate::coefficients::{Point, Vec2};
use crate::error::{FpkError, Result};
use crate::fem::mesh::PeriodicMesh;
use crate::fem::quadrature::{ElementQuadrature, QPoint};
use crate::fem::space::FeFunction;
use crate::fem::sum_over_elements;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Norm {
    Lp(f64),
    /// `(‖e‖_p^p + ‖∇e‖_p^p)^{1/p}`.
    W1p(f64),
    H1Semi,
}

impl Norm {
    fn exponent(&self) -> f64 {
        match self {
            Norm::Lp(p) | Norm::W1p(p) => *p,
            Norm::H1Semi => 2.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let p = self.exponent();
        if !(p >= 1.0 && p.is_finite()) {
            return Err(FpkError::config(format!("norm exponent must be in [1, ∞), got {p}")));
        }
        Ok(())
    }
}

impl FromStr for Norm {
    type Err = FpkError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "L2" => Ok(Norm::Lp(2.0)),
            "L3" => Ok(Norm::Lp(3.0)),
            "H1" => Ok(Norm::W1p(2.0)),
            "W13" => Ok(Norm::W1p(3.0)),
            "H1semi" => Ok(Norm::H1Semi),
            other => Err(FpkError::config(format!(
                "unknown norm '{other}' (expected L2, L3, H1, W13 or H1semi)"
            ))),
        }
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Norm::Lp(p) => write!(f, "L{p}"),
            Norm::W1p(p) if *p == 2.0 => write!(f, "H1"),
            Norm::W1p(p) => write!(f, "W1{p}"),
            Norm::H1Semi => write!(f, "H1semi"),
        }
    }
}

/// A scalar reference function with its gradient.
pub trait ScalarReference: Sync {
    fn value(&self, y: Point) -> f64;
    fn gradient(&self, y: Point) -> Vec2;
}

/// Adapts a pair of closures into a [`ScalarReference`].
pub struct FnReference<F, G> {
    pub value: F,
    pub gradient: G,
}

impl<F, G> ScalarReference for FnReference<F, G>
where
    F: Fn(Point) -> f64 + Sync,
    G: Fn(Point) -> Vec2 + Sync,
{
    fn value(&self, y: Point) -> f64 {
        (self.value)(y)
    }
    fn gradient(&self, y: Point) -> Vec2 {
        (self.gradient)(y)
    }
}

/// Pointwise error magnitudes: `|e|` and the Frobenius norm of `∇e`.
#[derive(Clone, Copy, Debug, Default)]
pub struct ErrorSample {
    pub value: f64,
    pub grad: f64,
}

/// Integrates an error density given per quadrature point.
pub fn error_norm_with<F>(
    mesh: &PeriodicMesh,
    quad: &ElementQuadrature,
    lines: &[f64],
    norm: Norm,
    sample: F,
) -> Result<f64>
where
    F: Fn(usize, &QPoint) -> ErrorSample + Sync,
{
    norm.validate()?;
    let p = norm.exponent();
    let pow = |x: f64| if p == 2.0 { x * x } else { x.abs().powf(p) };
    let total = sum_over_elements(mesh, quad, lines, |t, pts| {
        let mut acc = 0.0;
        for q in pts {
            let e = sample(t, q);
            acc += q.weight
                * match norm {
                    Norm::Lp(_) => pow(e.value),
                    Norm::W1p(_) => pow(e.value) + pow(e.grad),
                    Norm::H1Semi => pow(e.grad),
                };
        }
        acc
    });
    Ok(total.max(0.0).powf(1.0 / p))
}

/// Norm of `f_h − f_ref` for a scalar discrete function.
pub fn error_norm(
    f_h: &FeFunction,
    reference: &dyn ScalarReference,
    norm: Norm,
    quad: &ElementQuadrature,
    lines: &[f64],
) -> Result<f64> {
    error_norm_with(f_h.mesh(), quad, lines, norm, |t, q| {
        let g = f_h.grad_component(t, 0);
        let rg = reference.gradient(q.x);
        ErrorSample {
            value: f_h.eval_in(t, &q.bary, 0) - reference.value(q.x),
            grad: (g[0] - rg[0]).hypot(g[1] - rg[1]),
        }
    })
}

/// Norm of `v_h − v_ref` for a two-component discrete function.
pub fn error_norm_vector(
    f_h: &FeFunction,
    reference: [&dyn ScalarReference; 2],
    norm: Norm,
    quad: &ElementQuadrature,
    lines: &[f64],
) -> Result<f64> {
    error_norm_with(f_h.mesh(), quad, lines, norm, |t, q| {
        let mut v2 = 0.0;
        let mut g2 = 0.0;
        for (c, r) in reference.iter().enumerate() {
            let e = f_h.eval_in(t, &q.bary, c) - r.value(q.x);
            let g = f_h.grad_component(t, c);
            let rg = r.gradient(q.x);
            v2 += e * e;
            g2 += (g[0] - rg[0]).powi(2) + (g[1] - rg[1]).powi(2);
        }
        ErrorSample {
            value: v2.sqrt(),
            grad: g2.sqrt(),
        }
    })
}
