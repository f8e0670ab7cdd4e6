//! Built-in right-hand sides `F` for the nonhomogeneous problem `∇·F`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::coefficients::{Point, Vec2};
use crate::error::{FpkError, Result};

type ScalarFn = fn(Point) -> f64;
type GradFn = fn(Point) -> Vec2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BuiltinForcing {
    Zero,
    Constant(f64, f64),
    /// `F = −(2π)⁻¹ (cos 2πy₁, 0)`.
    CosMode,
}

impl BuiltinForcing {
    pub fn eval(&self, y: Point) -> Vec2 {
        match *self {
            BuiltinForcing::Zero => [0.0, 0.0],
            BuiltinForcing::Constant(a, b) => [a, b],
            BuiltinForcing::CosMode => [-(2.0 * PI * y[0]).cos() / (2.0 * PI), 0.0],
        }
    }

    /// Mean-zero exact solution of `−Δu = ∇·F` (identity coefficients) with
    /// its gradient, when known.
    pub fn identity_solution(&self) -> Option<(ScalarFn, GradFn)> {
        fn zero(_: Point) -> f64 {
            0.0
        }
        fn zero_grad(_: Point) -> Vec2 {
            [0.0, 0.0]
        }
        fn cos_mode(y: Point) -> f64 {
            (2.0 * PI * y[0]).sin() / (4.0 * PI * PI)
        }
        fn cos_mode_grad(y: Point) -> Vec2 {
            [(2.0 * PI * y[0]).cos() / (2.0 * PI), 0.0]
        }
        match self {
            BuiltinForcing::Zero | BuiltinForcing::Constant(..) => Some((zero, zero_grad)),
            BuiltinForcing::CosMode => Some((cos_mode, cos_mode_grad)),
        }
    }
}

impl FromStr for BuiltinForcing {
    type Err = FpkError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(BuiltinForcing::Zero),
            "cos-mode" => Ok(BuiltinForcing::CosMode),
            other => {
                let args = other
                    .strip_prefix("constant:")
                    .ok_or_else(|| FpkError::config(format!("unknown right-hand side '{other}'")))?;
                let vals: Vec<f64> = args
                    .split(',')
                    .map(|p| p.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| FpkError::config(format!("bad constant forcing '{other}': {e}")))?;
                match vals[..] {
                    [a, b] if a.is_finite() && b.is_finite() => Ok(BuiltinForcing::Constant(a, b)),
                    _ => Err(FpkError::config(format!(
                        "constant forcing expects 'constant:f1,f2', got '{other}'"
                    ))),
                }
            }
        }
    }
}

impl fmt::Display for BuiltinForcing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BuiltinForcing::Zero => write!(f, "zero"),
            BuiltinForcing::Constant(a, b) => write!(f, "constant:{a},{b}"),
            BuiltinForcing::CosMode => write!(f, "cos-mode"),
        }
    }
}
