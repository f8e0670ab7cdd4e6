//! Finite element approximation of periodic Fokker–Planck–Kolmogorov
//! invariant measures, correctors and effective diffusion matrices for
//! nondivergence-form operators `−A:D² − b·∇` on the unit torus.

mod assembly;
pub mod coefficients;
pub mod correctors;
pub mod effective;
pub mod error;
pub mod fem;
pub mod forcing;
pub mod fpk_setting_a;
pub mod fpk_setting_b;
pub mod linalg;
pub mod oracle;
pub mod plot;
pub mod study;

pub use assembly::SolveSettings;
pub use coefficients::{
    check_cordes, check_ellipticity, make_builtin_problem, renormalize, BuiltinProblem, CoefficientField,
    CordesReport, EllipticityReport, Mat2, Point, RenormalizedField, Vec2,
};
pub use correctors::{check_centering, solve_correctors_a, solve_correctors_b, CorrectorA, CorrectorB};
pub use effective::{effective_matrix_a, effective_matrix_b, EffectiveMatrix, Setting};
pub use error::{FpkError, Result};
pub use fem::{build_periodic_mesh, build_space, ElementQuadrature, FeFunction, FeSpace, Norm, PeriodicMesh, Rank};
pub use forcing::BuiltinForcing;
pub use fpk_setting_a::{solve_invariant_a, solve_nonhomogeneous_a, InvariantMeasureA};
pub use fpk_setting_b::{solve_invariant_b, solve_nonhomogeneous_b, InvariantMeasureB, NonhomogeneousB};
pub use linalg::{MethodChoice, SolveMethod, SolveReport, SolverOptions};
pub use oracle::{quad1d, reference_effective_matrix, reference_solution, ReferenceSolution};
pub use study::{fit_rates, run_convergence, Metric, Parity, StudyConfig, StudyResult};
