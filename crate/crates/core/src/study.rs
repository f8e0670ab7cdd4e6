//! Mesh-refinement studies against the oracle: per-mesh solves, error
//! metrics, least-squares rates and CSV output.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::SolveSettings;
use crate::coefficients::{BuiltinProblem, CoefficientField, Mat2};
use crate::correctors::{solve_correctors_a, solve_correctors_b};
use crate::effective::{effective_matrix_a, effective_matrix_b, Setting};
use crate::error::{FpkError, Result};
use crate::fem::norms::{error_norm, error_norm_vector, error_norm_with, ErrorSample, Norm, ScalarReference};
use crate::fem::ElementQuadrature;
use crate::fpk_setting_a::solve_invariant_a;
use crate::fpk_setting_b::solve_invariant_b;
use crate::oracle::{reference_solution, ReferenceSolution, DEFAULT_ORACLE_TOL};

/// Default base meshes; with a parity split they yield `{8, …, 128}` and `{9, …, 129}`.
pub const DEFAULT_MESHES: [usize; 5] = [8, 16, 32, 64, 128];
/// Environment variable capping the number of mesh rows solved at once.
pub const THREADS_ENV: &str = "FPKHOM_THREADS";
pub const CSV_HEADER: &str = "N,h,norm,value,parity";

/// A quantity measured on every mesh of a study.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Metric {
    /// Error of the invariant measure in the given norm.
    Measure(Norm),
    /// Corrector error for `j ∈ {1, 2}`: `|χ_j − χ_{j,h}|_{H¹}` in setting A,
    /// `‖∇χ_j − ξ_{j,h}‖_{H¹}` in setting B.
    Corrector(usize),
    /// `max_{ij} |Ā − Ā_h|_{ij}`.
    Abar,
}

impl FromStr for Metric {
    type Err = FpkError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chi1" => Ok(Metric::Corrector(1)),
            "chi2" => Ok(Metric::Corrector(2)),
            "abar" => Ok(Metric::Abar),
            other => other.parse().map(Metric::Measure),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Measure(n) => write!(f, "{n}"),
            Metric::Corrector(j) => write!(f, "chi{j}"),
            Metric::Abar => write!(f, "abar"),
        }
    }
}

impl TryFrom<String> for Metric {
    type Error = FpkError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Metric> for String {
    fn from(m: Metric) -> String {
        m.to_string()
    }
}

/// Mesh family of a row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
    All,
}

impl fmt::Display for Parity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Parity::Even => "even",
            Parity::Odd => "odd",
            Parity::All => "all",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Svg,
}

fn default_true() -> bool {
    true
}
fn default_order() -> usize {
    5
}
fn default_sub() -> usize {
    1
}
fn default_cut_sub() -> usize {
    8
}
fn default_oracle_tol() -> f64 {
    DEFAULT_ORACLE_TOL
}
fn default_output_dir() -> PathBuf {
    PathBuf::from(".")
}
fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Csv, OutputFormat::Svg]
}

/// JSON study description.
///
/// With `parity_split` every listed `N` contributes the even mesh `2⌊N/2⌋`
/// and the odd mesh `2⌊N/2⌋ + 1`; otherwise the list is used as given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub problem: String,
    pub setting: Setting,
    #[serde(default)]
    pub mesh_list: Option<Vec<usize>>,
    #[serde(default = "default_true")]
    pub parity_split: bool,
    pub norms: Vec<Metric>,
    #[serde(default = "default_order")]
    pub quad_order: usize,
    #[serde(default = "default_sub")]
    pub quad_subdivision: usize,
    #[serde(default = "default_cut_sub")]
    pub cut_subdivision: usize,
    #[serde(default = "default_true")]
    pub clip_cut_elements: bool,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_oracle_tol")]
    pub oracle_tol: f64,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
}

impl StudyConfig {
    pub fn new(problem: BuiltinProblem, setting: Setting, norms: Vec<Metric>) -> Self {
        StudyConfig {
            problem: problem.to_string(),
            setting,
            mesh_list: None,
            parity_split: true,
            norms,
            quad_order: default_order(),
            quad_subdivision: default_sub(),
            cut_subdivision: default_cut_sub(),
            clip_cut_elements: true,
            output_dir: default_output_dir(),
            oracle_tol: DEFAULT_ORACLE_TOL,
            formats: default_formats(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| FpkError::config(format!("invalid study config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| FpkError::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn builtin_problem(&self) -> Result<BuiltinProblem> {
        self.problem.parse()
    }

    pub fn quadrature(&self) -> Result<ElementQuadrature> {
        let q = ElementQuadrature::new(self.quad_order, self.quad_subdivision, self.cut_subdivision)?;
        Ok(if self.clip_cut_elements { q } else { q.unclipped() })
    }

    pub fn base_meshes(&self) -> Vec<usize> {
        self.mesh_list.clone().unwrap_or_else(|| DEFAULT_MESHES.to_vec())
    }

    /// `(N, parity)` for every row, grouped by family and increasing in `N`.
    pub fn meshes(&self) -> Vec<(usize, Parity)> {
        let base = self.base_meshes();
        if !self.parity_split {
            return base.into_iter().map(|n| (n, Parity::All)).collect();
        }
        let even = base.iter().map(|&n| (2 * (n / 2), Parity::Even));
        let odd = base.iter().map(|&n| (2 * (n / 2) + 1, Parity::Odd));
        even.chain(odd).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let problem = self.builtin_problem()?;
        self.quadrature()?;
        let base = self.base_meshes();
        if base.len() < 3 {
            return Err(FpkError::config(format!(
                "rate fitting needs at least 3 meshes, got {}",
                base.len()
            )));
        }
        if base.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FpkError::config("mesh_list must be strictly increasing"));
        }
        let meshes = self.meshes();
        if meshes.iter().any(|&(n, _)| n < 2) {
            return Err(FpkError::config("every mesh needs N ≥ 2"));
        }
        if self.parity_split && base.windows(2).any(|w| w[0] / 2 == w[1] / 2) {
            return Err(FpkError::config("mesh_list entries collapse onto the same parity pair"));
        }
        if self.norms.is_empty() {
            return Err(FpkError::config("norms must not be empty"));
        }
        if !(self.oracle_tol > 0.0) {
            return Err(FpkError::config("oracle_tol must be positive"));
        }
        if self.setting == Setting::A && !problem.field().has_div_a() {
            return Err(FpkError::config(format!("'{problem}' cannot be solved in setting A")));
        }
        for m in &self.norms {
            match (self.setting, m) {
                (Setting::B, Metric::Measure(Norm::Lp(_))) => {}
                (Setting::B, Metric::Measure(n)) => {
                    return Err(FpkError::config(format!(
                        "setting B measures are only piecewise smooth; '{n}' is not available"
                    )));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// One mesh of a study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub n: usize,
    pub h: f64,
    pub parity: Parity,
    /// Values in the order of `StudyConfig::norms`.
    pub values: Vec<(Metric, f64)>,
    pub abar_h: Mat2,
    /// `∫ r̃_h` and `∫ r_h` (setting B only).
    pub mass_rtilde: Option<f64>,
    pub mass_r: Option<f64>,
    pub seconds: f64,
}

/// A row that could not be computed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailedRow {
    pub n: usize,
    pub parity: Parity,
    pub reason: String,
}

/// Least-squares rate of one metric within one mesh family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub metric: Metric,
    pub parity: Parity,
    pub slope: Option<f64>,
    /// `log(e_i / e_{i+1}) / log(h_i / h_{i+1})` for consecutive meshes.
    pub pairwise: Vec<f64>,
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub problem: String,
    pub setting: Setting,
    pub metrics: Vec<Metric>,
    pub rows: Vec<StudyRow>,
    pub failures: Vec<FailedRow>,
    pub fitted_rates: Vec<RateFit>,
    pub abar_reference: Mat2,
}

impl StudyResult {
    pub fn rate(&self, metric: Metric, parity: Parity) -> Option<f64> {
        self.fitted_rates
            .iter()
            .find(|r| r.metric == metric && r.parity == parity)
            .and_then(|r| r.slope)
    }

    pub fn value(&self, n: usize, metric: Metric) -> Option<f64> {
        let row = self.rows.iter().find(|r| r.n == n)?;
        row.values.iter().find(|(m, _)| *m == metric).map(|(_, v)| *v)
    }
}

/// OLS slope of `log e` against `log h`; non-positive errors are dropped
/// (they mark exactly reproduced solutions).
pub fn fit_rates(points: &[(f64, f64)]) -> (Option<f64>, Vec<f64>, Option<String>) {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|&(h, e)| h > 0.0 && e > 0.0 && e.is_finite())
        .collect();
    let pairwise = usable
        .windows(2)
        .map(|w| (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln())
        .collect();
    let dropped = points.len() - usable.len();
    if usable.len() < 3 {
        let note = if dropped > 0 {
            format!("{dropped} exact or degenerate errors; fewer than 3 usable points")
        } else {
            "fewer than 3 points".to_string()
        };
        return (None, pairwise, Some(note));
    }
    let k = usable.len() as f64;
    let xs: Vec<f64> = usable.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = usable.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let note = (dropped > 0).then(|| format!("{dropped} exact or degenerate errors dropped"));
    (Some(sxy / sxx), pairwise, note)
}

struct StudyContext<'a> {
    field: CoefficientField,
    oracle: &'a ReferenceSolution,
    settings: SolveSettings,
    lines: Vec<f64>,
    metrics: &'a [Metric],
}

fn abar_error(a: &Mat2, b: &Mat2) -> f64 {
    let mut m = 0.0_f64;
    for i in 0..2 {
        for j in 0..2 {
            m = m.max((a[i][j] - b[i][j]).abs());
        }
    }
    m
}

type RowOutput = (Vec<(Metric, f64)>, Mat2, Option<f64>, Option<f64>);

fn row_a(ctx: &StudyContext<'_>, n: usize) -> Result<RowOutput> {
    let s = &ctx.settings;
    let inv = solve_invariant_a(&ctx.field, n, s)?;
    let chi = solve_correctors_a(&ctx.field, &inv.r_h, s)?;
    let eff = effective_matrix_a(&ctx.field, &inv.r_h, &chi, &s.quad)?;
    let r_ref = ctx.oracle.r_reference();
    let chi_ref = ctx.oracle.chi_reference();
    let mut values = Vec::with_capacity(ctx.metrics.len());
    for &m in ctx.metrics {
        let v = match m {
            Metric::Measure(norm) => error_norm(&inv.r_h, &r_ref, norm, &s.quad, &ctx.lines)?,
            Metric::Corrector(j) => error_norm(&chi.chi_h[j - 1], &chi_ref, Norm::H1Semi, &s.quad, &ctx.lines)?,
            Metric::Abar => abar_error(&eff.value, &ctx.oracle.abar()),
        };
        values.push((m, v));
    }
    Ok((values, eff.value, None, None))
}

fn row_b(ctx: &StudyContext<'_>, n: usize) -> Result<RowOutput> {
    let s = &ctx.settings;
    let inv = solve_invariant_b(&ctx.field, n, s)?;
    let xi = solve_correctors_b(inv.renormalized(), n, s)?;
    let eff = effective_matrix_b(&ctx.field, &inv, &xi, &s.quad)?;
    let mesh = inv.rtilde_h.mesh();
    let [g1, g2] = ctx.oracle.grad_chi_reference();
    let mut values = Vec::with_capacity(ctx.metrics.len());
    for &m in ctx.metrics {
        let v = match m {
            Metric::Measure(norm) => {
                let bad = std::sync::atomic::AtomicBool::new(false);
                let v = error_norm_with(mesh, &s.quad, &ctx.lines, norm, |t, q| {
                    let rh = inv.r_h_in(t, q.x).unwrap_or_else(|_| {
                        bad.store(true, std::sync::atomic::Ordering::Relaxed);
                        f64::NAN
                    });
                    ErrorSample {
                        value: rh - ctx.oracle.r(q.x[0]),
                        grad: 0.0,
                    }
                })?;
                if bad.into_inner() {
                    return Err(FpkError::Evaluation {
                        x: f64::NAN,
                        y: f64::NAN,
                        reason: "renormalization failed inside the error quadrature".into(),
                    });
                }
                v
            }
            Metric::Corrector(j) => {
                let refs: [&dyn ScalarReference; 2] = [&g1, &g2];
                error_norm_vector(&xi.xi_h[j - 1], refs, Norm::W1p(2.0), &s.quad, &ctx.lines)?
            }
            Metric::Abar => abar_error(&eff.value, &ctx.oracle.abar()),
        };
        values.push((m, v));
    }
    Ok((values, eff.value, Some(inv.rtilde_integral()), Some(inv.r_h_integral())))
}

/// Worker count from `FPKHOM_THREADS`, if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Runs every mesh of the study, fits rates per family.
pub fn run_convergence(config: &StudyConfig) -> Result<StudyResult> {
    config.validate()?;
    let problem = config.builtin_problem()?;
    let oracle = reference_solution(problem, config.oracle_tol)?;
    let field = problem.field();
    let mut lines: Vec<f64> = field.discontinuity_lines().to_vec();
    lines.extend(oracle.breakpoints().iter().copied().filter(|&p| p > 0.0 && p < 1.0));
    lines.sort_by(f64::total_cmp);
    lines.dedup();
    let ctx = StudyContext {
        field,
        oracle: &oracle,
        settings: SolveSettings::with_quad(config.quadrature()?),
        lines,
        metrics: &config.norms,
    };
    let meshes = config.meshes();
    let run_one = |&(n, parity): &(usize, Parity)| {
        let start = Instant::now();
        let out = match config.setting {
            Setting::A => row_a(&ctx, n),
            Setting::B => row_b(&ctx, n),
        };
        let seconds = start.elapsed().as_secs_f64();
        log::info!("{} N = {n} ({parity}) finished in {seconds:.2} s", config.setting);
        out.map(|(values, abar_h, mass_rtilde, mass_r)| StudyRow {
            n,
            h: 1.0 / n as f64,
            parity,
            values,
            abar_h,
            mass_rtilde,
            mass_r,
            seconds,
        })
        .map_err(|e| FailedRow {
            n,
            parity,
            reason: e.to_string(),
        })
    };
    let outcomes: Vec<std::result::Result<StudyRow, FailedRow>> = match thread_cap() {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| FpkError::config(format!("cannot build thread pool: {e}")))?
            .install(|| meshes.par_iter().map(run_one).collect()),
        None => meshes.par_iter().map(run_one).collect(),
    };
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => rows.push(r),
            Err(f) => {
                log::warn!("N = {} ({}) failed: {}", f.n, f.parity, f.reason);
                failures.push(f);
            }
        }
    }
    let mut families: Vec<Parity> = meshes.iter().map(|m| m.1).collect();
    families.dedup();
    let mut fitted_rates = Vec::new();
    for &metric in &config.norms {
        for &parity in &families {
            let pts: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.parity == parity)
                .filter_map(|r| r.values.iter().find(|(m, _)| *m == metric).map(|(_, v)| (r.h, *v)))
                .collect();
            let (slope, pairwise, note) = fit_rates(&pts);
            fitted_rates.push(RateFit {
                metric,
                parity,
                slope,
                pairwise,
                note,
            });
        }
    }
    Ok(StudyResult {
        problem: problem.to_string(),
        setting: config.setting,
        metrics: config.norms.clone(),
        rows,
        failures,
        fitted_rates,
        abar_reference: oracle.abar(),
    })
}

/// CSV text with `N,h,norm,value,parity` and 17 significant digits.
pub fn to_csv(result: &StudyResult) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in &result.rows {
        for (m, v) in &row.values {
            out.push_str(&format!("{},{:.16e},{},{:.16e},{}\n", row.n, row.h, m, v, row.parity));
        }
    }
    out
}

/// Writes the requested formats into `dir`; returns the files written.
/// An empty result produces the CSV header and no plot.
pub fn emit(result: &StudyResult, dir: &Path, formats: &[OutputFormat]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    if formats.contains(&OutputFormat::Csv) {
        let path = dir.join("convergence.csv");
        fs::write(&path, to_csv(result))?;
        written.push(path);
    }
    if formats.contains(&OutputFormat::Svg) && !result.rows.is_empty() {
        let path = dir.join("convergence.svg");
        fs::write(&path, crate::plot::convergence_svg(result))?;
        written.push(path);
    }
    Ok(written)
}
