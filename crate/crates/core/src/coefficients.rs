//! Periodic coefficient fields `(A, b)`, the built-in test problems, the
//! renormalization `γ = tr(A) / (|A|² + |b|²)` and grid-sampled checks of
//! uniform ellipticity and of the drift-augmented Cordes condition.
//!
//! Essential suprema and infima are approximated on a `grid_n × grid_n`
//! sample grid offset by half a cell, so samples never land on the
//! axis-aligned jump lines of the built-in problems. A report only certifies
//! the condition on its grid; refine `grid_n` for a sharper estimate.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{FpkError, Result};

/// A point of the unit cell (or of ℝ², wrapped periodically on evaluation).
pub type Point = [f64; 2];
pub type Vec2 = [f64; 2];
/// Row-major 2×2 matrix.
pub type Mat2 = [[f64; 2]; 2];

/// Spatial dimension of every field in this crate.
pub const DIM: usize = 2;

/// Default resolution of the sample grid used when a report is needed internally.
pub const DEFAULT_SAMPLE_GRID: usize = 256;

type MatrixFn = dyn Fn(Point) -> Mat2 + Send + Sync;
type VectorFn = dyn Fn(Point) -> Vec2 + Send + Sync;

/// Maps a point to its representative in `[0, 1)²`.
#[inline]
pub fn wrap(y: Point) -> Point {
    [y[0] - y[0].floor(), y[1] - y[1].floor()]
}

/// `sign`, with `sign(0) = 0`.
#[inline]
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `sign(sin(2π t))` for `t` in `[0, 1)`, exact at the zeros `t ∈ {0, ½}`.
#[inline]
fn sign_sin_2pi(t: f64) -> f64 {
    if t == 0.0 || t == 0.5 {
        0.0
    } else if t < 0.5 {
        1.0
    } else {
        -1.0
    }
}

/// `sign(cos(π t))` for `t` in `[0, 1)`, exact at `t = ½`.
#[inline]
fn sign_cos_pi(t: f64) -> f64 {
    if t < 0.5 {
        1.0
    } else if t > 0.5 {
        -1.0
    } else {
        0.0
    }
}

/// Which solution settings a field is declared fit for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SettingFlags {
    /// `A ∈ W^{1,p}` with an available row-wise divergence `div(A)`.
    pub supports_setting_a: bool,
    /// Intended for the Cordes-type (merely bounded) setting.
    pub supports_setting_b: bool,
}

/// A 1-periodic coefficient pair `(A, b)` on ℝ², optionally with `div(A)`.
///
/// All evaluators wrap their argument into `[0, 1)²` first.
#[derive(Clone)]
pub struct CoefficientField {
    name: String,
    diffusion: Arc<MatrixFn>,
    drift: Arc<VectorFn>,
    div_diffusion: Option<Arc<VectorFn>>,
    discontinuity_lines: Vec<f64>,
    flags: SettingFlags,
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientField")
            .field("name", &self.name)
            .field("has_div_a", &self.div_diffusion.is_some())
            .field("discontinuity_lines", &self.discontinuity_lines)
            .field("flags", &self.flags)
            .finish()
    }
}

impl CoefficientField {
    /// A custom field. It supports Setting B only until `with_div_a` is called.
    pub fn new(
        name: impl Into<String>,
        diffusion: impl Fn(Point) -> Mat2 + Send + Sync + 'static,
        drift: impl Fn(Point) -> Vec2 + Send + Sync + 'static,
    ) -> Self {
        CoefficientField {
            name: name.into(),
            diffusion: Arc::new(diffusion),
            drift: Arc::new(drift),
            div_diffusion: None,
            discontinuity_lines: Vec::new(),
            flags: SettingFlags {
                supports_setting_a: false,
                supports_setting_b: true,
            },
        }
    }

    /// Attaches the row-wise divergence of `A`, enabling Setting A.
    pub fn with_div_a(mut self, div_a: impl Fn(Point) -> Vec2 + Send + Sync + 'static) -> Self {
        self.div_diffusion = Some(Arc::new(div_a));
        self.flags.supports_setting_a = true;
        self
    }

    /// Declares the lines `{y₁ = c}` across which `A` or `b` may jump.
    pub fn with_discontinuities(mut self, lines: Vec<f64>) -> Self {
        self.discontinuity_lines = lines;
        self
    }

    pub fn with_setting_b_support(mut self, supported: bool) -> Self {
        self.flags.supports_setting_b = supported;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        DIM
    }

    pub fn flags(&self) -> SettingFlags {
        self.flags
    }

    pub fn discontinuity_lines(&self) -> &[f64] {
        &self.discontinuity_lines
    }

    #[inline]
    pub fn a(&self, y: Point) -> Mat2 {
        (self.diffusion)(wrap(y))
    }

    #[inline]
    pub fn b(&self, y: Point) -> Vec2 {
        (self.drift)(wrap(y))
    }

    /// Row-wise divergence `(div A)_i = Σ_j ∂_j A_ij`, if available.
    #[inline]
    pub fn div_a(&self, y: Point) -> Option<Vec2> {
        self.div_diffusion.as_ref().map(|f| f(wrap(y)))
    }

    pub fn has_div_a(&self) -> bool {
        self.div_diffusion.is_some()
    }
}

/// The built-in problems addressable from the command line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BuiltinProblem {
    /// Lipschitz `A` with a jumping drift; admits a divergence-form rewrite.
    SettingAPaper,
    /// Discontinuous `A` and `b` satisfying the drift-augmented Cordes condition.
    SettingBPaper,
    Identity,
    /// `A = diag(a₁, a₂)`, `b = 0`.
    ConstDiag(f64, f64),
}

impl FromStr for BuiltinProblem {
    type Err = FpkError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "setting-a-paper" | "setting_a_paper" => Ok(BuiltinProblem::SettingAPaper),
            "setting-b-paper" | "setting_b_paper" => Ok(BuiltinProblem::SettingBPaper),
            "identity" => Ok(BuiltinProblem::Identity),
            other => {
                let args = other
                    .strip_prefix("const-diag:")
                    .or_else(|| other.strip_prefix("const_diag:"))
                    .ok_or_else(|| FpkError::config(format!("unknown problem '{other}'")))?;
                let parts: Vec<&str> = args.split(',').collect();
                if parts.len() != 2 {
                    return Err(FpkError::config(format!(
                        "const-diag expects two values 'const-diag:a1,a2', got '{other}'"
                    )));
                }
                let parse = |p: &str| {
                    p.trim()
                        .parse::<f64>()
                        .map_err(|e| FpkError::config(format!("bad const-diag entry '{p}': {e}")))
                };
                let (a1, a2) = (parse(parts[0])?, parse(parts[1])?);
                if !(a1 > 0.0 && a2 > 0.0 && a1.is_finite() && a2.is_finite()) {
                    return Err(FpkError::config(
                        "const-diag entries must be positive and finite",
                    ));
                }
                Ok(BuiltinProblem::ConstDiag(a1, a2))
            }
        }
    }
}

impl fmt::Display for BuiltinProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BuiltinProblem::SettingAPaper => write!(f, "setting-a-paper"),
            BuiltinProblem::SettingBPaper => write!(f, "setting-b-paper"),
            BuiltinProblem::Identity => write!(f, "identity"),
            BuiltinProblem::ConstDiag(a1, a2) => write!(f, "const-diag:{a1},{a2}"),
        }
    }
}

impl BuiltinProblem {
    pub fn field(&self) -> CoefficientField {
        make_builtin_problem(*self)
    }
}

/// Builds the exact coefficient field of a built-in problem.
pub fn make_builtin_problem(problem: BuiltinProblem) -> CoefficientField {
    let name = problem.to_string();
    match problem {
        BuiltinProblem::SettingAPaper => CoefficientField::new(
            name,
            |y| {
                let (s, t) = (PI * y[0]).sin_cos();
                let a12 = 0.5 * (2.0 * PI * y[0]).sin();
                [[1.0 + (s * s).asin(), a12], [a12, 2.0 + t * t]]
            },
            |y| {
                let s = sign_sin_2pi(y[0]);
                [s, s]
            },
        )
        // d/dy asin(sin²(πy)) = 2π sin(πy) sign(cos(πy)) / √(1 + sin²(πy)),
        // written without the cancellation in √(1 − sin⁴(πy)) near y = ½.
        .with_div_a(|y| {
            let s = (PI * y[0]).sin();
            [
                2.0 * PI * s * sign_cos_pi(y[0]) / (1.0 + s * s).sqrt(),
                PI * (2.0 * PI * y[0]).cos(),
            ]
        })
        .with_discontinuities(vec![0.5]),
        BuiltinProblem::SettingBPaper => CoefficientField::new(
            name,
            |y| {
                let (s, c) = (PI * y[0]).sin_cos();
                let a12 = 0.5 * (2.0 * PI * y[0]).sin();
                [[2.0 + sign_cos_pi(y[0]) * s, a12], [a12, 2.0 + c * c]]
            },
            |y| {
                let v = 0.25 + 0.75 * sign_sin_2pi(y[0]);
                [v, v]
            },
        )
        .with_discontinuities(vec![0.5]),
        BuiltinProblem::Identity => {
            CoefficientField::new(name, |_| [[1.0, 0.0], [0.0, 1.0]], |_| [0.0, 0.0])
                .with_div_a(|_| [0.0, 0.0])
        }
        BuiltinProblem::ConstDiag(a1, a2) => {
            CoefficientField::new(name, move |_| [[a1, 0.0], [0.0, a2]], |_| [0.0, 0.0])
                .with_div_a(|_| [0.0, 0.0])
        }
    }
}

#[inline]
pub(crate) fn frobenius_sq(a: &Mat2) -> f64 {
    a[0][0] * a[0][0] + a[0][1] * a[0][1] + a[1][0] * a[1][0] + a[1][1] * a[1][1]
}

#[inline]
pub(crate) fn trace(a: &Mat2) -> f64 {
    a[0][0] + a[1][1]
}

/// Eigenvalues `(min, max)` of the symmetric part of a 2×2 matrix.
#[inline]
pub fn sym_eigenvalues(a: &Mat2) -> (f64, f64) {
    let off = 0.5 * (a[0][1] + a[1][0]);
    let mean = 0.5 * (a[0][0] + a[1][1]);
    let half_gap = (0.25 * (a[0][0] - a[1][1]).powi(2) + off * off).sqrt();
    (mean - half_gap, mean + half_gap)
}

fn sample_points(grid_n: usize) -> impl Iterator<Item = Point> {
    let inv = 1.0 / grid_n as f64;
    (0..grid_n).flat_map(move |j| {
        (0..grid_n).map(move |i| [(i as f64 + 0.5) * inv, (j as f64 + 0.5) * inv])
    })
}

fn check_grid(grid_n: usize) -> Result<()> {
    if grid_n < 2 {
        return Err(FpkError::config(format!("sample grid must be at least 2, got {grid_n}")));
    }
    Ok(())
}

/// Sampled ellipticity bounds `λ I ≤ A ≤ Λ I`.
#[derive(Clone, Debug, PartialEq)]
pub struct EllipticityReport {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Largest sampled Euclidean norm of `b`.
    pub b_sup: f64,
    pub sample_grid: usize,
}

impl EllipticityReport {
    pub fn uniformly_elliptic(&self) -> bool {
        self.lambda_min > 0.0
    }
}

/// Eigenvalue extremes of `A` over the half-cell-offset sample grid.
///
/// A non-positive `lambda_min` is reported through
/// [`EllipticityReport::uniformly_elliptic`], not as an error.
pub fn check_ellipticity(field: &CoefficientField, grid_n: usize) -> Result<EllipticityReport> {
    check_grid(grid_n)?;
    let mut lambda_min = f64::INFINITY;
    let mut lambda_max = f64::NEG_INFINITY;
    let mut b_sup = 0.0_f64;
    for y in sample_points(grid_n) {
        let (lo, hi) = sym_eigenvalues(&field.a(y));
        lambda_min = lambda_min.min(lo);
        lambda_max = lambda_max.max(hi);
        let b = field.b(y);
        b_sup = b_sup.max((b[0] * b[0] + b[1] * b[1]).sqrt());
    }
    Ok(EllipticityReport {
        lambda_min,
        lambda_max,
        b_sup,
        sample_grid: grid_n,
    })
}

/// Sampled drift-augmented Cordes condition
/// `(|A|² + |b|²) / tr(A)² ≤ 1 / (n − 1 + δ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CordesReport {
    pub ratio_max: f64,
    /// `1 / ratio_max − (n − 1)`, the largest admissible `δ` on the grid.
    pub delta_max: f64,
    /// `delta_max > n / (n + π²)`.
    pub admissible_b: bool,
    /// Drift vanishes on every sample and `delta_max > 0`.
    pub admissible_classical: bool,
    pub drift_free: bool,
    pub kappa: f64,
    pub sample_grid: usize,
}

impl CordesReport {
    pub fn admissible(&self) -> bool {
        self.admissible_b || self.admissible_classical
    }

    /// `1 − √(1 − κ)`, the coercivity constant of the vector form `B₂`.
    pub fn coercivity_constant(&self) -> f64 {
        1.0 - (1.0 - self.kappa.clamp(0.0, 1.0)).sqrt()
    }
}

/// `n / (n + π²)`, the lower end of the admissible `δ` range.
pub fn cordes_threshold() -> f64 {
    let n = DIM as f64;
    n / (n + PI * PI)
}

pub fn check_cordes(field: &CoefficientField, grid_n: usize) -> Result<CordesReport> {
    check_grid(grid_n)?;
    let n = DIM as f64;
    let mut ratio_max = 0.0_f64;
    let mut drift_free = true;
    for y in sample_points(grid_n) {
        let a = field.a(y);
        let b = field.b(y);
        let tr = trace(&a);
        if !(tr > 0.0) {
            return Err(FpkError::InvalidCoefficient(format!(
                "tr(A) = {tr} is not positive at ({}, {})",
                y[0], y[1]
            )));
        }
        let b_sq = b[0] * b[0] + b[1] * b[1];
        drift_free &= b_sq == 0.0;
        ratio_max = ratio_max.max((frobenius_sq(&a) + b_sq) / (tr * tr));
    }
    let delta_max = 1.0 / ratio_max - (n - 1.0);
    let threshold = cordes_threshold();
    let kappa = if drift_free {
        delta_max
    } else {
        (delta_max - threshold) * (n + PI * PI) / (PI * PI)
    };
    Ok(CordesReport {
        ratio_max,
        delta_max,
        admissible_b: delta_max > threshold,
        admissible_classical: drift_free && delta_max > 0.0,
        drift_free,
        kappa,
        sample_grid: grid_n,
    })
}

/// The renormalized pair `Ã = γA`, `b̃ = γb` with `γ = tr(A) / (|A|² + |b|²)`.
#[derive(Clone, Debug)]
pub struct RenormalizedField {
    base: CoefficientField,
    /// `nλ / (nΛ² + ‖b‖²_∞)` from the sampled ellipticity report.
    pub gamma_lower: f64,
    /// `Λ / λ²` from the sampled ellipticity report.
    pub gamma_upper: f64,
    pub ellipticity: EllipticityReport,
}

impl RenormalizedField {
    pub fn base(&self) -> &CoefficientField {
        &self.base
    }

    pub fn gamma(&self, y: Point) -> Result<f64> {
        let a = self.base.a(y);
        let b = self.base.b(y);
        gamma_of(&a, &b).ok_or_else(|| FpkError::Evaluation {
            x: y[0],
            y: y[1],
            reason: "|A|² + |b|² vanishes".into(),
        })
    }

    /// `(γ, Ã, b̃)` at `y`.
    pub fn eval(&self, y: Point) -> Result<(f64, Mat2, Vec2)> {
        let a = self.base.a(y);
        let b = self.base.b(y);
        let g = gamma_of(&a, &b).ok_or_else(|| FpkError::Evaluation {
            x: y[0],
            y: y[1],
            reason: "|A|² + |b|² vanishes".into(),
        })?;
        Ok((
            g,
            [[g * a[0][0], g * a[0][1]], [g * a[1][0], g * a[1][1]]],
            [g * b[0], g * b[1]],
        ))
    }

    pub fn a_tilde(&self, y: Point) -> Result<Mat2> {
        self.eval(y).map(|(_, a, _)| a)
    }

    pub fn b_tilde(&self, y: Point) -> Result<Vec2> {
        self.eval(y).map(|(_, _, b)| b)
    }
}

#[inline]
fn gamma_of(a: &Mat2, b: &Vec2) -> Option<f64> {
    let denom = frobenius_sq(a) + b[0] * b[0] + b[1] * b[1];
    (denom > 0.0).then(|| trace(a) / denom)
}

/// Renormalizes `field`, filling the `γ` bounds from a sampled ellipticity
/// report on the default grid.
pub fn renormalize(field: &CoefficientField) -> Result<RenormalizedField> {
    renormalize_on_grid(field, DEFAULT_SAMPLE_GRID)
}

pub fn renormalize_on_grid(field: &CoefficientField, grid_n: usize) -> Result<RenormalizedField> {
    let ell = check_ellipticity(field, grid_n)?;
    if !ell.uniformly_elliptic() {
        return Err(FpkError::InvalidCoefficient(format!(
            "A is not uniformly elliptic on the sample grid (lambda_min = {})",
            ell.lambda_min
        )));
    }
    let n = DIM as f64;
    let (lam, cap) = (ell.lambda_min, ell.lambda_max);
    Ok(RenormalizedField {
        base: field.clone(),
        gamma_lower: n * lam / (n * cap * cap + ell.b_sup * ell.b_sup),
        gamma_upper: cap / (lam * lam),
        ellipticity: ell,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn identity_values() {
        let f = make_builtin_problem(BuiltinProblem::Identity);
        assert_eq!(f.a([0.3, 0.7]), [[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(f.b([0.3, 0.7]), [0.0, 0.0]);
        assert_eq!(f.div_a([0.3, 0.7]), Some([0.0, 0.0]));
    }

    #[test]
    fn setting_a_drift_sign() {
        let f = make_builtin_problem(BuiltinProblem::SettingAPaper);
        assert_eq!(f.b([0.25, 0.9]), [1.0, 1.0]);
        assert_eq!(f.b([0.75, 0.9]), [-1.0, -1.0]);
        assert_eq!(f.b([0.5, 0.1]), [0.0, 0.0]);
        assert!(f.flags().supports_setting_a);
        assert_eq!(f.discontinuity_lines(), &[0.5]);
    }

    #[test]
    fn setting_b_drift_values() {
        let f = make_builtin_problem(BuiltinProblem::SettingBPaper);
        assert_eq!(f.b([0.25, 0.0]), [1.0, 1.0]);
        assert_eq!(f.b([0.75, 0.0]), [-0.5, -0.5]);
        assert!(!f.flags().supports_setting_a);
        assert_eq!(f.discontinuity_lines(), &[0.5]);
    }

    #[test]
    fn setting_a_divergence_matches_finite_differences() {
        let f = make_builtin_problem(BuiltinProblem::SettingAPaper);
        let step = 1e-6;
        for &t in &[0.05, 0.2, 0.31, 0.49, 0.51, 0.7, 0.93] {
            let d11 = (f.a([t + step, 0.0])[0][0] - f.a([t - step, 0.0])[0][0]) / (2.0 * step);
            let d12 = (f.a([t + step, 0.0])[0][1] - f.a([t - step, 0.0])[0][1]) / (2.0 * step);
            let div = f.div_a([t, 0.3]).unwrap();
            assert!(close(div[0], d11, 1e-5), "t={t}: {} vs {d11}", div[0]);
            assert!(close(div[1], d12, 1e-5));
        }
        // one-sided limits at the kink are ±√2·π
        let left = f.div_a([0.5 - 1e-12, 0.0]).unwrap()[0];
        let right = f.div_a([0.5 + 1e-12, 0.0]).unwrap()[0];
        assert!(close(left, 2f64.sqrt() * PI, 1e-9));
        assert!(close(right, -(2f64.sqrt()) * PI, 1e-9));
    }

    #[test]
    fn builtin_periodicity_is_exact_on_dyadic_points() {
        for p in [
            BuiltinProblem::SettingAPaper,
            BuiltinProblem::SettingBPaper,
            BuiltinProblem::Identity,
            BuiltinProblem::ConstDiag(1.0, 3.0),
        ] {
            let f = p.field();
            for i in 0..64 {
                for j in [0.0, 0.375, 0.8125] {
                    let y = [i as f64 / 64.0, j];
                    for shift in [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]] {
                        let z = [y[0] + shift[0], y[1] + shift[1]];
                        assert_eq!(f.a(y), f.a(z));
                        assert_eq!(f.b(y), f.b(z));
                        assert_eq!(f.div_a(y), f.div_a(z));
                    }
                }
            }
        }
    }

    #[test]
    fn builtin_a_is_symmetric() {
        for p in [BuiltinProblem::SettingAPaper, BuiltinProblem::SettingBPaper] {
            let f = p.field();
            for i in 0..100 {
                let a = f.a([i as f64 * 0.0137, 0.4]);
                assert_eq!(a[0][1], a[1][0]);
            }
        }
    }

    #[test]
    fn problem_names_round_trip() {
        for s in ["setting-a-paper", "setting-b-paper", "identity", "const-diag:1,3"] {
            let p: BuiltinProblem = s.parse().unwrap();
            assert_eq!(p.to_string(), s);
        }
        assert_eq!(
            "const-diag:1.5,2".parse::<BuiltinProblem>().unwrap(),
            BuiltinProblem::ConstDiag(1.5, 2.0)
        );
        for bad in ["nope", "const-diag:1", "const-diag:1,-2", "const-diag:a,b"] {
            let err = bad.parse::<BuiltinProblem>().unwrap_err();
            assert!(err.is_config());
        }
    }

    #[test]
    fn ellipticity_trivial_cases() {
        let r = check_ellipticity(&BuiltinProblem::Identity.field(), 16).unwrap();
        assert_eq!((r.lambda_min, r.lambda_max), (1.0, 1.0));
        let r = check_ellipticity(&BuiltinProblem::ConstDiag(1.0, 3.0).field(), 16).unwrap();
        assert_eq!((r.lambda_min, r.lambda_max), (1.0, 3.0));
        assert!(r.uniformly_elliptic());
        assert!(check_ellipticity(&BuiltinProblem::Identity.field(), 1).unwrap_err().is_config());
    }

    #[test]
    fn ellipticity_non_elliptic_is_flagged() {
        let f = CoefficientField::new("degenerate", |_| [[1.0, 0.0], [0.0, -0.5]], |_| [0.0, 0.0]);
        let r = check_ellipticity(&f, 4).unwrap();
        assert!(!r.uniformly_elliptic());
    }

    #[test]
    fn setting_b_lambda_min_matches_dense_scan() {
        // Dense scan with 10⁶ samples in y₁ (A does not depend on y₂),
        // computed once offline: min eigenvalue = 0.969732...
        const DENSE_LAMBDA_MIN: f64 = 0.969_732_3;
        let r = check_ellipticity(&BuiltinProblem::SettingBPaper.field(), 256).unwrap();
        assert!(r.lambda_min > 0.0);
        assert!(r.lambda_min >= DENSE_LAMBDA_MIN - 1e-6);
        assert!(close(r.lambda_min, DENSE_LAMBDA_MIN, 1e-4));
    }

    #[test]
    fn cordes_identity_saturates() {
        let r = check_cordes(&BuiltinProblem::Identity.field(), 16).unwrap();
        assert_eq!(r.ratio_max, 0.5);
        assert_eq!(r.delta_max, 1.0);
        assert!(close(r.kappa, 1.0, 1e-15));
        assert!(r.admissible_b && r.admissible_classical && r.drift_free);
    }

    #[test]
    fn cordes_const_diag() {
        let r = check_cordes(&BuiltinProblem::ConstDiag(1.0, 3.0).field(), 8).unwrap();
        assert!(close(r.ratio_max, 5.0 / 8.0, 1e-15));
        assert!(close(r.delta_max, 3.0 / 5.0, 1e-15));
        assert!(r.admissible_classical);
        assert!(close(r.kappa, 3.0 / 5.0, 1e-15));
    }

    #[test]
    fn cordes_setting_b_admissible() {
        let r = check_cordes(&BuiltinProblem::SettingBPaper.field(), 256).unwrap();
        assert!(r.admissible_b);
        assert!(!r.drift_free);
        assert!(r.delta_max >= 0.25);
        assert!(r.kappa > 0.0 && r.kappa <= 1.0);
    }

    #[test]
    fn cordes_rejects_nonpositive_trace() {
        let f = CoefficientField::new("bad", |_| [[-1.0, 0.0], [0.0, 0.5]], |_| [0.0, 0.0]);
        assert!(matches!(check_cordes(&f, 4), Err(FpkError::InvalidCoefficient(_))));
    }

    #[test]
    fn renormalize_closed_forms() {
        let ren = renormalize(&BuiltinProblem::Identity.field()).unwrap();
        let (g, at, bt) = ren.eval([0.2, 0.9]).unwrap();
        assert_eq!(g, 1.0);
        assert_eq!(at, [[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(bt, [0.0, 0.0]);

        let ren = renormalize(&BuiltinProblem::ConstDiag(1.0, 3.0).field()).unwrap();
        let (g, at, _) = ren.eval([0.6, 0.1]).unwrap();
        assert!(close(g, 0.4, 1e-15));
        assert!(close(at[0][0], 0.4, 1e-15) && close(at[1][1], 1.2, 1e-15));

        // A(¼) = [[2 + sin(π/4), ½], [½, 2 + cos²(π/4)]], b = (1, 1);
        // independent scalar evaluation gives γ = 0.323856726829475.
        let ren = renormalize(&BuiltinProblem::SettingBPaper.field()).unwrap();
        assert!(close(ren.gamma([0.25, 0.0]).unwrap(), 0.323_856_726_829_475, 1e-14));
    }

    #[test]
    fn renormalize_zero_coefficients_is_evaluation_error() {
        let f = CoefficientField::new(
            "vanishing",
            |y| if y[0] < 0.5 { [[1.0, 0.0], [0.0, 1.0]] } else { [[0.0, 0.0], [0.0, 0.0]] },
            |_| [0.0, 0.0],
        );
        let ren = RenormalizedField {
            base: f,
            gamma_lower: 0.0,
            gamma_upper: 1.0,
            ellipticity: EllipticityReport {
                lambda_min: 0.0,
                lambda_max: 1.0,
                b_sup: 0.0,
                sample_grid: 2,
            },
        };
        assert!(ren.gamma([0.25, 0.0]).is_ok());
        assert!(matches!(ren.gamma([0.75, 0.0]), Err(FpkError::Evaluation { .. })));
    }

    #[test]
    fn renormalized_bounds_hold_on_samples() {
        for p in [BuiltinProblem::SettingBPaper, BuiltinProblem::SettingAPaper] {
            let f = p.field();
            let grid = 128;
            let ren = renormalize_on_grid(&f, grid).unwrap();
            let cordes = check_cordes(&f, grid).unwrap();
            for y in sample_points(grid) {
                let (g, at, bt) = ren.eval(y).unwrap();
                assert!(g >= ren.gamma_lower - 1e-12 && g <= ren.gamma_upper + 1e-12);
                let dev = (at[0][0] - 1.0).powi(2)
                    + at[0][1].powi(2)
                    + at[1][0].powi(2)
                    + (at[1][1] - 1.0).powi(2)
                    + bt[0] * bt[0]
                    + bt[1] * bt[1];
                assert!(dev <= 1.0 - cordes.delta_max + 1e-12);
            }
        }
    }
}
