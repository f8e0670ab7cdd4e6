//! Semi-analytic reference solutions for fields that depend on `y₁` only and
//! have `b₁ = b₂`.
//!
//! With `K(t) = ∫₀ᵗ b₁/a₁₁` the invariant measure and the (identical)
//! correctors are
//!
//! ```text
//! r(y)  = e^{K(y₁)} / (a₁₁(y₁) C₁),            C₁ = ∫₀¹ e^K / a₁₁
//! χ(y)  = C₂⁻¹ ∫₀^{y₁} e^{−K} − y₁ + c,         C₂ = ∫₀¹ e^{−K}
//! ```
//!
//! with `c` fixed by `∫ χ = 0`. `K` and `E(t) = ∫₀ᵗ e^{−K}` are tabulated on
//! `2¹⁴` cells per smooth piece and evaluated by cubic Hermite interpolation
//! with exact nodal derivatives.

use crate::coefficients::{BuiltinProblem, CoefficientField, Mat2, Point, Vec2};
use crate::error::{FpkError, Result};
use crate::fem::norms::ScalarReference;

/// Cells per smooth piece of the `K` and `E` tables.
pub const TABLE_CELLS: usize = 1 << 14;
/// Default oracle tolerance.
pub const DEFAULT_ORACLE_TOL: f64 = 1e-10;
const MAX_DEPTH: u32 = 22;
const GL_ORDER: usize = 10;

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

fn gl_cache() -> &'static [(f64, f64)] {
    use std::sync::OnceLock;
    static NODES: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    NODES.get_or_init(|| gauss_legendre(GL_ORDER))
}

fn gl5() -> &'static [(f64, f64)] {
    use std::sync::OnceLock;
    static NODES: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    NODES.get_or_init(|| gauss_legendre(5))
}

/// Sorted, deduplicated breakpoints clamped to `[0, 1]`, always containing 0 and 1.
fn normalize_breakpoints(breakpoints: &[f64]) -> Vec<f64> {
    let mut pts: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|p| p.is_finite())
        .map(|p| p.clamp(0.0, 1.0))
        .chain([0.0, 1.0])
        .collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

fn composite_gl(f: &dyn Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        let mut acc = 0.0;
        for &(x, w) in gl_cache() {
            acc += w * f(mid + 0.5 * h * x);
        }
        total += 0.5 * h * acc;
    }
    total
}

/// `∫₀¹ f` for an integrand that is smooth between `breakpoints`. Each piece
/// is refined dyadically until successive composite Gauss–Legendre estimates
/// differ by less than `tol` times the piece length.
pub fn quad1d(f: &dyn Fn(f64) -> f64, breakpoints: &[f64], tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(FpkError::config(format!("quadrature tolerance must be positive, got {tol}")));
    }
    let pts = normalize_breakpoints(breakpoints);
    let mut total = 0.0;
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let piece_tol = tol * (b - a);
        let mut prev = composite_gl(f, a, b, 1);
        let mut converged = false;
        for depth in 1..=MAX_DEPTH {
            let next = composite_gl(f, a, b, 1 << depth);
            let diff = (next - prev).abs();
            prev = next;
            if diff <= piece_tol {
                converged = true;
                break;
            }
            if depth == MAX_DEPTH {
                return Err(FpkError::QuadratureNonConvergence {
                    estimate: total + next,
                    difference: diff,
                });
            }
        }
        debug_assert!(converged);
        total += prev;
    }
    Ok(total)
}

/// Piecewise cubic Hermite table of a cumulative integral.
#[derive(Clone, Debug)]
struct HermiteTable {
    pieces: Vec<TablePiece>,
}

#[derive(Clone, Debug)]
struct TablePiece {
    a: f64,
    b: f64,
    h: f64,
    values: Vec<f64>,
    derivs: Vec<f64>,
}

impl HermiteTable {
    /// Tabulates `F(t) = ∫₀ᵗ g` where `g_piece(k, t)` evaluates the integrand
    /// on piece `k` (so one-sided limits are available at the piece ends).
    fn cumulative(breaks: &[f64], g_piece: &dyn Fn(usize, f64) -> f64) -> Self {
        let mut pieces = Vec::with_capacity(breaks.len() - 1);
        let mut start = 0.0;
        for (k, w) in breaks.windows(2).enumerate() {
            let (a, b) = (w[0], w[1]);
            let h = (b - a) / TABLE_CELLS as f64;
            let mut values = Vec::with_capacity(TABLE_CELLS + 1);
            let mut derivs = Vec::with_capacity(TABLE_CELLS + 1);
            values.push(start);
            let mut acc = start;
            for i in 0..TABLE_CELLS {
                let lo = a + i as f64 * h;
                let mid = lo + 0.5 * h;
                let mut cell = 0.0;
                for &(x, wt) in gl5() {
                    cell += wt * g_piece(k, mid + 0.5 * h * x);
                }
                acc += 0.5 * h * cell;
                values.push(acc);
            }
            for i in 0..=TABLE_CELLS {
                derivs.push(g_piece(k, a + i as f64 * h));
            }
            start = acc;
            pieces.push(TablePiece {
                a,
                b,
                h,
                values,
                derivs,
            });
        }
        HermiteTable { pieces }
    }

    fn piece_of(&self, t: f64) -> usize {
        self.pieces
            .iter()
            .position(|p| t < p.b)
            .unwrap_or(self.pieces.len() - 1)
    }

    /// `(F(t), F'(t))` for `t ∈ [0, 1]`.
    fn eval(&self, t: f64) -> (f64, f64) {
        let p = &self.pieces[self.piece_of(t)];
        let s = ((t - p.a) / p.h).clamp(0.0, TABLE_CELLS as f64);
        let i = (s.floor() as usize).min(TABLE_CELLS - 1);
        let u = s - i as f64;
        let (y0, y1) = (p.values[i], p.values[i + 1]);
        let (d0, d1) = (p.derivs[i] * p.h, p.derivs[i + 1] * p.h);
        let u2 = u * u;
        let u3 = u2 * u;
        let val = (2.0 * u3 - 3.0 * u2 + 1.0) * y0
            + (u3 - 2.0 * u2 + u) * d0
            + (-2.0 * u3 + 3.0 * u2) * y1
            + (u3 - u2) * d1;
        let der = ((6.0 * u2 - 6.0 * u) * y0
            + (3.0 * u2 - 4.0 * u + 1.0) * d0
            + (-6.0 * u2 + 6.0 * u) * y1
            + (3.0 * u2 - 2.0 * u) * d1)
            / p.h;
        (val, der)
    }

    fn end_value(&self) -> f64 {
        *self.pieces.last().unwrap().values.last().unwrap()
    }
}

/// Semi-analytic reference for a built-in problem.
#[derive(Clone, Debug)]
pub struct ReferenceSolution {
    problem: BuiltinProblem,
    field: CoefficientField,
    breakpoints: Vec<f64>,
    tol: f64,
    k_table: HermiteTable,
    e_table: HermiteTable,
    /// `K(1)`; zero exactly when the centering condition holds.
    pub k_end: f64,
    pub c1: f64,
    pub c2: f64,
    /// Additive constant of `χ` enforcing `∫ χ = 0`.
    pub c: f64,
    abar: Mat2,
}

/// Breakpoints used for each built-in problem.
pub fn breakpoints_for(problem: BuiltinProblem) -> Vec<f64> {
    match problem {
        BuiltinProblem::SettingAPaper => vec![0.0, 0.5, 1.0],
        BuiltinProblem::SettingBPaper => vec![0.0, 0.25, 0.5, 0.75, 1.0],
        BuiltinProblem::Identity | BuiltinProblem::ConstDiag(..) => vec![0.0, 1.0],
    }
}

/// Evaluates `t` on piece `[a, b]`, nudging endpoints inward so that
/// coefficients with jumps at the breakpoints return their one-sided limits.
#[inline]
fn inside(t: f64, a: f64, b: f64) -> f64 {
    let eps = 1e-13 * (b - a);
    t.clamp(a + eps, b - eps)
}

#[inline]
fn wrap1(t: f64) -> f64 {
    if (0.0..=1.0).contains(&t) {
        t
    } else {
        t - t.floor()
    }
}

impl ReferenceSolution {
    pub fn problem(&self) -> BuiltinProblem {
        self.problem
    }

    pub fn field(&self) -> &CoefficientField {
        &self.field
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    fn a11(&self, t: f64) -> f64 {
        self.field.a([t, 0.0])[0][0]
    }

    /// `K(t)` with `t` wrapped into `[0, 1]`.
    pub fn k(&self, t: f64) -> f64 {
        self.k_table.eval(wrap1(t)).0
    }

    /// `K'(t) = b₁/a₁₁`.
    pub fn k_prime(&self, t: f64) -> f64 {
        let t = wrap1(t);
        self.field.b([t, 0.0])[0] / self.a11(t)
    }

    pub fn r(&self, t: f64) -> f64 {
        let t = wrap1(t);
        self.k(t).exp() / (self.a11(t) * self.c1)
    }

    /// `r' = r (K' − a₁₁'/a₁₁)`, available when the field carries `div(A)`
    /// (for a field of `y₁` alone `(div A)₁ = a₁₁'`).
    pub fn r_prime(&self, t: f64) -> Option<f64> {
        let t = wrap1(t);
        let d = self.field.div_a([t, 0.0])?;
        Some(self.r(t) * (self.k_prime(t) - d[0] / self.a11(t)))
    }

    pub fn chi(&self, t: f64) -> f64 {
        let t = wrap1(t);
        self.e_table.eval(t).0 / self.c2 - t + self.c
    }

    pub fn chi_prime(&self, t: f64) -> f64 {
        (-self.k(t)).exp() / self.c2 - 1.0
    }

    /// `χ'' = −K' e^{−K} / C₂`.
    pub fn chi_second(&self, t: f64) -> f64 {
        -self.k_prime(t) * (-self.k(t)).exp() / self.c2
    }

    pub fn abar(&self) -> Mat2 {
        self.abar
    }

    /// `r` as a function on the unit cell.
    pub fn r_reference(&self) -> OracleFn<'_> {
        OracleFn {
            oracle: self,
            kind: OracleKind::R,
        }
    }

    /// `χ_j` (identical for `j = 1, 2`).
    pub fn chi_reference(&self) -> OracleFn<'_> {
        OracleFn {
            oracle: self,
            kind: OracleKind::Chi,
        }
    }

    /// Components of `∇χ_j = (χ', 0)`.
    pub fn grad_chi_reference(&self) -> [OracleFn<'_>; 2] {
        [
            OracleFn {
                oracle: self,
                kind: OracleKind::ChiPrime,
            },
            OracleFn {
                oracle: self,
                kind: OracleKind::Zero,
            },
        ]
    }
}

#[derive(Clone, Copy, Debug)]
enum OracleKind {
    R,
    Chi,
    ChiPrime,
    Zero,
}

/// A reference function of `y₁` exposed on the unit cell.
#[derive(Clone, Copy, Debug)]
pub struct OracleFn<'a> {
    oracle: &'a ReferenceSolution,
    kind: OracleKind,
}

impl ScalarReference for OracleFn<'_> {
    fn value(&self, y: Point) -> f64 {
        let o = self.oracle;
        match self.kind {
            OracleKind::R => o.r(y[0]),
            OracleKind::Chi => o.chi(y[0]),
            OracleKind::ChiPrime => o.chi_prime(y[0]),
            OracleKind::Zero => 0.0,
        }
    }

    fn gradient(&self, y: Point) -> Vec2 {
        let o = self.oracle;
        let d = match self.kind {
            OracleKind::R => o.r_prime(y[0]).unwrap_or(f64::NAN),
            OracleKind::Chi => o.chi_prime(y[0]),
            OracleKind::ChiPrime => o.chi_second(y[0]),
            OracleKind::Zero => 0.0,
        };
        [d, 0.0]
    }
}

fn check_one_dimensional(field: &CoefficientField) -> Result<()> {
    for i in 0..64 {
        let t = (i as f64 + 0.37) / 64.0;
        let a = field.a([t, 0.0]);
        let b = field.b([t, 0.0]);
        if b[0] != b[1] || field.a([t, 0.61]) != a || field.b([t, 0.61]) != b {
            return Err(FpkError::config(format!(
                "oracle needs coefficients of y₁ alone with b₁ = b₂; '{}' does not qualify",
                field.name()
            )));
        }
    }
    Ok(())
}

/// Builds the reference solution of a built-in problem at tolerance `tol`.
pub fn reference_solution(problem: BuiltinProblem, tol: f64) -> Result<ReferenceSolution> {
    if !(tol > 0.0) {
        return Err(FpkError::config(format!("oracle tolerance must be positive, got {tol}")));
    }
    let field = problem.field();
    check_one_dimensional(&field)?;
    let breakpoints = breakpoints_for(problem);
    let kp = |k: usize, t: f64| {
        let t = inside(t, breakpoints[k], breakpoints[k + 1]);
        field.b([t, 0.0])[0] / field.a([t, 0.0])[0][0]
    };
    let k_table = HermiteTable::cumulative(&breakpoints, &kp);
    let k_end = k_table.end_value();
    let e_integrand = |_: usize, t: f64| (-k_table.eval(t).0).exp();
    let e_table = HermiteTable::cumulative(&breakpoints, &e_integrand);

    let mut oracle = ReferenceSolution {
        problem,
        field: field.clone(),
        breakpoints: breakpoints.clone(),
        tol,
        k_table,
        e_table,
        k_end,
        c1: 1.0,
        c2: 1.0,
        c: 0.0,
        abar: [[0.0; 2]; 2],
    };
    let o = &oracle;
    let a11_in = |t: f64| field.a([t, 0.0])[0][0];
    let c1 = quad1d(&|t| o.k_table.eval(t).0.exp() / a11_in(t), &breakpoints, tol)?;
    let c2 = quad1d(&|t| (-o.k_table.eval(t).0).exp(), &breakpoints, tol)?;
    let e_mean = quad1d(&|t| o.e_table.eval(t).0, &breakpoints, tol)?;
    oracle.c1 = c1;
    oracle.c2 = c2;
    oracle.c = 0.5 - e_mean / c2;
    oracle.abar = reference_effective_matrix(&oracle)?;
    Ok(oracle)
}

/// `Ā = ∫₀¹ r M A Mᵀ` with `M = [[1 + χ', 0], [χ', 1]]`, entrywise by [`quad1d`].
pub fn reference_effective_matrix(oracle: &ReferenceSolution) -> Result<Mat2> {
    let entry = |i: usize, j: usize| -> Result<f64> {
        quad1d(
            &|t| {
                let a = oracle.field.a([t, 0.0]);
                let cp = oracle.chi_prime(t);
                let m = [[1.0 + cp, 0.0], [cp, 1.0]];
                let mut s = 0.0;
                for k in 0..2 {
                    for l in 0..2 {
                        s += m[i][k] * a[k][l] * m[j][l];
                    }
                }
                oracle.r(t) * s
            },
            &oracle.breakpoints,
            oracle.tol,
        )
    };
    let a11 = entry(0, 0)?;
    let a12 = entry(0, 1)?;
    let a22 = entry(1, 1)?;
    Ok([[a11, a12], [a12, a22]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::sign;
    use std::f64::consts::PI;

    /// Independent values from adaptive scipy quadrature of the closed forms,
    /// computed once before the build.
    const ABAR_A: Mat2 = [[1.496732248930331, 0.0], [0.0, 2.5852524786604474]];
    const C_A: (f64, f64) = (0.8113129714225615, 0.8235073206358154);
    const ABAR_B: Mat2 = [
        [1.7222999228830134, -0.10812346213907296],
        [-0.10812346213907296, 2.447533646251646],
    ];
    const C_B: (f64, f64) = (0.6366480005086935, 0.9119937003233236);

    fn max_diff(a: &Mat2, b: &Mat2) -> f64 {
        let mut m = 0.0_f64;
        for i in 0..2 {
            for j in 0..2 {
                m = m.max((a[i][j] - b[i][j]).abs());
            }
        }
        m
    }

    #[test]
    fn quad1d_basics() {
        assert!((quad1d(&|_| 1.0, &[], 1e-12).unwrap() - 1.0).abs() < 1e-15);
        let v = quad1d(&|x| sign((2.0 * PI * x).sin()), &[0.5], 1e-12).unwrap();
        assert!(v.abs() < 1e-14);
        let v = quad1d(&|x| sign((PI * x).cos()) * (PI * x).sin(), &[0.5], 1e-12).unwrap();
        assert!(v.abs() < 1e-12);
        let dup = quad1d(&|x| x.exp(), &[0.3, 0.3, 0.0, 1.0, 0.3], 1e-12).unwrap();
        let plain = quad1d(&|x| x.exp(), &[0.3], 1e-12).unwrap();
        assert_eq!(dup, plain);
        assert!(quad1d(&|_| 1.0, &[], 0.0).unwrap_err().is_config());
    }

    #[test]
    fn quad1d_reports_nonconvergence() {
        // unresolved jump at an undeclared breakpoint
        let err = quad1d(&|x| if x < 1.0 / 3.0 { 0.0 } else { 1.0 }, &[], 1e-15).unwrap_err();
        assert!(matches!(err, FpkError::QuadratureNonConvergence { .. }));
    }

    #[test]
    fn gauss_legendre_is_exact() {
        let nodes = gauss_legendre(10);
        let sum: f64 = nodes.iter().map(|(_, w)| w).sum();
        assert!((sum - 2.0).abs() < 1e-14);
        let x18: f64 = nodes.iter().map(|(x, w)| w * x.powi(18)).sum();
        assert!((x18 - 2.0 / 19.0).abs() < 1e-14);
    }

    #[test]
    fn setting_a_oracle() {
        let o = reference_solution(BuiltinProblem::SettingAPaper, 1e-10).unwrap();
        assert!(o.k(0.0).abs() < 1e-15);
        assert!(o.k_end.abs() < 1e-10);
        assert!((o.c1 - C_A.0).abs() < 1e-9 && (o.c2 - C_A.1).abs() < 1e-9);
        assert!(max_diff(&o.abar(), &ABAR_A) < 1e-8);
        assert!((o.abar[0][0] - 1.0 / (o.c1 * o.c2)).abs() < 1e-9);
        for i in 0..=1000 {
            assert!(o.r(i as f64 / 1000.0) > 0.0);
        }
    }

    #[test]
    fn setting_b_oracle() {
        let o = reference_solution(BuiltinProblem::SettingBPaper, 1e-10).unwrap();
        assert!(o.k_end.abs() < 1e-10);
        assert!((o.c1 - C_B.0).abs() < 1e-9 && (o.c2 - C_B.1).abs() < 1e-9);
        assert!(max_diff(&o.abar(), &ABAR_B) < 1e-8);
    }

    #[test]
    fn oracle_integrals() {
        for p in [BuiltinProblem::SettingAPaper, BuiltinProblem::SettingBPaper] {
            let o = reference_solution(p, 1e-10).unwrap();
            let bp = o.breakpoints().to_vec();
            let mass = quad1d(&|t| o.r(t), &bp, 1e-12).unwrap();
            let mean = quad1d(&|t| o.chi(t), &bp, 1e-12).unwrap();
            assert!((mass - 1.0).abs() < 1e-10, "{p}: {mass}");
            assert!(mean.abs() < 1e-10, "{p}: {mean}");
            let a = o.abar();
            assert_eq!(a[0][1], a[1][0]);
            let (lo, _) = crate::coefficients::sym_eigenvalues(&a);
            assert!(lo > 0.0);
        }
    }

    #[test]
    fn tolerance_halving_is_stable() {
        for p in [BuiltinProblem::SettingAPaper, BuiltinProblem::SettingBPaper] {
            let coarse = reference_solution(p, 1e-8).unwrap();
            let fine = reference_solution(p, 5e-9).unwrap();
            assert!(max_diff(&coarse.abar(), &fine.abar()) < 1e-8);
            assert!((coarse.c1 - fine.c1).abs() < 1e-8);
            assert!((coarse.c - fine.c).abs() < 1e-8);
        }
        let a = reference_solution(BuiltinProblem::SettingAPaper, 1e-10).unwrap();
        let b = reference_solution(BuiltinProblem::SettingAPaper, 1e-12).unwrap();
        assert!(max_diff(&a.abar(), &b.abar()) < 1e-8);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let o = reference_solution(BuiltinProblem::SettingAPaper, 1e-10).unwrap();
        let h = 1e-6;
        for &t in &[0.1, 0.3, 0.7, 0.9] {
            let fd = (o.chi(t + h) - o.chi(t - h)) / (2.0 * h);
            assert!((fd - o.chi_prime(t)).abs() < 1e-7);
            let fd = (o.chi_prime(t + h) - o.chi_prime(t - h)) / (2.0 * h);
            assert!((fd - o.chi_second(t)).abs() < 1e-6);
            let fd = (o.r(t + h) - o.r(t - h)) / (2.0 * h);
            assert!((fd - o.r_prime(t).unwrap()).abs() < 1e-6);
        }
    }

    #[test]
    fn trivial_fields() {
        let o = reference_solution(BuiltinProblem::Identity, 1e-10).unwrap();
        assert!(max_diff(&o.abar(), &[[1.0, 0.0], [0.0, 1.0]]) < 1e-14);
        assert!(o.chi(0.3).abs() < 1e-14);
        let o = reference_solution(BuiltinProblem::ConstDiag(1.0, 3.0), 1e-10).unwrap();
        assert!(max_diff(&o.abar(), &[[1.0, 0.0], [0.0, 3.0]]) < 1e-13);
        assert!((o.r(0.8) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn custom_two_dimensional_field_is_rejected() {
        let f = CoefficientField::new("2d", |y| [[1.0 + 0.1 * y[1], 0.0], [0.0, 1.0]], |_| [0.0, 0.0]);
        assert!(check_one_dimensional(&f).is_err());
    }
}
