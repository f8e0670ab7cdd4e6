//! Effective diffusion matrix `Ā_h = ∫ r_h (I + Dχ_h) A (I + Dχ_h)ᵀ`.
//!
//! Rows of `Dχ_h` are the corrector gradients: `(Dχ_h)_{jk} = ∂_k χ_{j,h}` in
//! setting A and `(ξ_{j,h})_k` in setting B.
//!
//! The matrix is assembled for any admissible field. Reading it as the
//! homogenized coefficient additionally needs the centering condition
//! `∫ r b = 0` and, in setting B, a bounded `r̃` in dimension at most 4; neither
//! is enforced here.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::coefficients::{sym_eigenvalues, CoefficientField, Mat2};
use crate::correctors::{CorrectorA, CorrectorB};
use crate::error::{FpkError, Result};
use crate::fem::{map_elements, ElementQuadrature, FeFunction};
use crate::fpk_setting_b::InvariantMeasureB;

/// Which discretization produced a result.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    A,
    B,
}

impl FromStr for Setting {
    type Err = FpkError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(Setting::A),
            "b" => Ok(Setting::B),
            other => Err(FpkError::config(format!("setting must be 'a' or 'b', got '{other}'"))),
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setting::A => "a",
            Setting::B => "b",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveMatrix {
    pub value: Mat2,
    pub setting: Setting,
    pub mesh_n: usize,
    /// `|Ā_h − Ā_hᵀ|` from entrywise quadrature.
    pub asymmetry: f64,
    /// Smallest eigenvalue of the symmetric part.
    pub spd_check: f64,
}

impl EffectiveMatrix {
    fn from_parts(parts: Vec<Result<Mat2>>, setting: Setting, mesh_n: usize) -> Result<Self> {
        let mut value = [[0.0; 2]; 2];
        for p in parts {
            let p = p?;
            for i in 0..2 {
                for j in 0..2 {
                    value[i][j] += p[i][j];
                }
            }
        }
        let asymmetry = (value[0][1] - value[1][0]).abs();
        let (spd_check, _) = sym_eigenvalues(&value);
        if !(spd_check > 0.0) {
            log::warn!("effective matrix at N = {mesh_n} is not positive definite (λ_min = {spd_check})");
        }
        Ok(EffectiveMatrix {
            value,
            setting,
            mesh_n,
            asymmetry,
            spd_check,
        })
    }

    /// Largest entrywise deviation from `other`.
    pub fn max_abs_diff(&self, other: &Mat2) -> f64 {
        let mut m = 0.0_f64;
        for i in 0..2 {
            for j in 0..2 {
                m = m.max((self.value[i][j] - other[i][j]).abs());
            }
        }
        m
    }
}

impl fmt::Display for EffectiveMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = &self.value;
        writeln!(f, "[{:>22.15e} {:>22.15e}]", v[0][0], v[0][1])?;
        write!(f, "[{:>22.15e} {:>22.15e}]", v[1][0], v[1][1])
    }
}

/// `M A Mᵀ` accumulated with weight `w`.
#[inline]
fn add_sandwich(acc: &mut Mat2, m: &Mat2, a: &Mat2, w: f64) {
    for i in 0..2 {
        for j in 0..2 {
            let mut s = 0.0;
            for k in 0..2 {
                for l in 0..2 {
                    s += m[i][k] * a[k][l] * m[j][l];
                }
            }
            acc[i][j] += w * s;
        }
    }
}

fn check_mesh(f: &FeFunction, n: usize, what: &str) -> Result<()> {
    if f.mesh().n_side() != n {
        return Err(FpkError::MeshMismatch(format!(
            "{what} lives on N = {}, expected N = {n}",
            f.mesh().n_side()
        )));
    }
    Ok(())
}

/// `Ā_h` in setting A: `Dχ_h` constant per element, `r_h` piecewise linear.
pub fn effective_matrix_a(
    field: &CoefficientField,
    r_h: &FeFunction,
    chi: &CorrectorA,
    quad: &ElementQuadrature,
) -> Result<EffectiveMatrix> {
    let mesh = r_h.mesh();
    let n = mesh.n_side();
    for c in &chi.chi_h {
        c.same_space(r_h.space())?;
    }
    let parts = map_elements(mesh, quad, field.discontinuity_lines(), |t, pts| {
        let g1 = chi.chi_h[0].grad_on_element(t);
        let g2 = chi.chi_h[1].grad_on_element(t);
        let m = [[1.0 + g1[0], g1[1]], [g2[0], 1.0 + g2[1]]];
        let mut acc = [[0.0; 2]; 2];
        for q in pts {
            let r = r_h.eval_in(t, &q.bary, 0);
            add_sandwich(&mut acc, &m, &field.a(q.x), q.weight * r);
        }
        Ok(acc)
    });
    EffectiveMatrix::from_parts(parts, Setting::A, n)
}

/// `Ā_h` in setting B with `r_h = γ r̃_h / ∫ γ r̃_h` and piecewise linear `ξ_h`.
pub fn effective_matrix_b(
    field: &CoefficientField,
    inv: &InvariantMeasureB,
    xi: &CorrectorB,
    quad: &ElementQuadrature,
) -> Result<EffectiveMatrix> {
    if !(inv.mass_gamma > 0.0) {
        return Err(FpkError::InvalidInvariant(format!(
            "∫ γ r̃_h = {} is not positive",
            inv.mass_gamma
        )));
    }
    let mesh = inv.rtilde_h.mesh();
    let n = mesh.n_side();
    check_mesh(&xi.xi_h[0], n, "ξ₁")?;
    check_mesh(&xi.xi_h[1], n, "ξ₂")?;
    let parts = map_elements(mesh, quad, field.discontinuity_lines(), |t, pts| {
        let mut acc = [[0.0; 2]; 2];
        for q in pts {
            let (x1, x2) = (&xi.xi_h[0], &xi.xi_h[1]);
            let m = [
                [1.0 + x1.eval_in(t, &q.bary, 0), x1.eval_in(t, &q.bary, 1)],
                [x2.eval_in(t, &q.bary, 0), 1.0 + x2.eval_in(t, &q.bary, 1)],
            ];
            let r = inv.r_h_in(t, q.x)?;
            add_sandwich(&mut acc, &m, &field.a(q.x), q.weight * r);
        }
        Ok(acc)
    });
    EffectiveMatrix::from_parts(parts, Setting::B, n)
}
