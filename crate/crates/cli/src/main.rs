use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fpkhom::coefficients::DEFAULT_SAMPLE_GRID;
use fpkhom::fem::norms::{error_norm, error_norm_with, ErrorSample, FnReference, Norm};
use fpkhom::study::{emit, OutputFormat};
use fpkhom::{
    check_cordes, check_ellipticity, effective_matrix_a, effective_matrix_b, run_convergence, solve_correctors_a,
    solve_correctors_b, solve_invariant_a, solve_invariant_b, solve_nonhomogeneous_a, solve_nonhomogeneous_b,
    BuiltinForcing, BuiltinProblem, ElementQuadrature, FpkError, Setting, SolveReport, SolveSettings, StudyConfig,
};

#[derive(Parser, Debug)]
#[command(name = "fpkhom", version, about = "Periodic FPK invariant measures, correctors and effective matrices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct MeshArgs {
    /// Built-in problem: setting-a-paper, setting-b-paper, identity, const-diag:a1,a2
    problem: BuiltinProblem,
    #[arg(long, value_parser = parse_setting)]
    setting: Setting,
    /// Vertices per side of the periodic mesh.
    #[arg(long)]
    mesh: usize,
    #[arg(long, default_value_t = 5)]
    quad_order: usize,
    #[arg(long, default_value_t = 1)]
    quad_sub: usize,
    #[arg(long, default_value_t = 8)]
    cut_sub: usize,
}

impl MeshArgs {
    fn settings(&self) -> Result<SolveSettings, FpkError> {
        Ok(SolveSettings::with_quad(ElementQuadrature::new(
            self.quad_order,
            self.quad_sub,
            self.cut_sub,
        )?))
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sampled ellipticity and Cordes constants.
    CheckCordes {
        problem: BuiltinProblem,
        #[arg(long, default_value_t = DEFAULT_SAMPLE_GRID)]
        grid: usize,
    },
    /// Discrete invariant measure.
    Invariant(MeshArgs),
    /// Corrector `χ_j` (setting a) or gradient corrector `ξ_j` (setting b).
    Corrector {
        #[command(flatten)]
        mesh: MeshArgs,
        #[arg(short = 'j', value_parser = clap::value_parser!(u8).range(1..=2))]
        j: u8,
    },
    /// Effective diffusion matrix.
    EffectiveMatrix(MeshArgs),
    /// Mesh-refinement study from a JSON config.
    Convergence {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir` of the config.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Solution of the nonhomogeneous problem with right-hand side `∇·F`.
    Nonhomogeneous {
        #[command(flatten)]
        mesh: MeshArgs,
        /// zero, constant:f1,f2 or cos-mode
        #[arg(long)]
        rhs: BuiltinForcing,
    },
}

fn parse_setting(s: &str) -> Result<Setting, String> {
    s.parse().map_err(|e: FpkError| e.to_string())
}

fn print_report(what: &str, r: &SolveReport) {
    println!(
        "{what}: {:?}, relative residual {:.3e}, constraint violation {:.3e}, iterations {}",
        r.method, r.relative_residual, r.constraint_violation, r.iterations
    );
}

fn check_cordes_cmd(problem: BuiltinProblem, grid: usize) -> Result<(), FpkError> {
    let field = problem.field();
    let e = check_ellipticity(&field, grid)?;
    let c = check_cordes(&field, grid)?;
    println!("problem              {problem}");
    println!("sample_grid          {grid}");
    println!("lambda_min           {:.12}", e.lambda_min);
    println!("lambda_max           {:.12}", e.lambda_max);
    println!("b_sup                {:.12}", e.b_sup);
    println!("ratio_max            {:.12}", c.ratio_max);
    println!("delta_max            {:.12}", c.delta_max);
    println!("kappa                {:.12}", c.kappa);
    println!("coercivity_constant  {:.12}", c.coercivity_constant());
    println!("drift_free           {}", c.drift_free);
    println!("admissible_b         {}", c.admissible_b);
    println!("admissible_classical {}", c.admissible_classical);
    println!("{}", if c.admissible() { "admissible" } else { "not admissible" });
    Ok(())
}

fn invariant_cmd(args: &MeshArgs) -> Result<(), FpkError> {
    let field = args.problem.field();
    let s = args.settings()?;
    match args.setting {
        Setting::A => {
            let inv = solve_invariant_a(&field, args.mesh, &s)?;
            println!("mass                 {:.15}", inv.mass());
            println!("min_vertex_value     {:.15}", inv.min_vertex_value);
            println!("max_vertex_value     {:.15}", inv.r_h.max_abs());
            if !inv.is_positive() {
                println!("warning: r_h has nonpositive vertex values; the mesh may be too coarse");
            }
            print_report("solve", &inv.report);
        }
        Setting::B => {
            let inv = solve_invariant_b(&field, args.mesh, &s)?;
            println!("integral_rtilde      {:.15}", inv.rtilde_integral());
            println!("integral_r           {:.15}", inv.r_h_integral());
            println!("mass_gamma           {:.15}", inv.mass_gamma);
            println!("min_rtilde           {:.15}", inv.min_rtilde);
            println!("negative_elements    {}", inv.negative_elements);
            print_report("solve", &inv.report);
        }
    }
    Ok(())
}

fn corrector_cmd(args: &MeshArgs, j: usize) -> Result<(), FpkError> {
    let field = args.problem.field();
    let s = args.settings()?;
    match args.setting {
        Setting::A => {
            let inv = solve_invariant_a(&field, args.mesh, &s)?;
            let c = solve_correctors_a(&field, &inv.r_h, &s)?;
            let chi = &c.chi_h[j - 1];
            println!("corrector            chi{j}");
            println!("max_abs              {:.15e}", chi.max_abs());
            println!("grad_l2              {:.15e}", chi.grad_norm_sq().sqrt());
            println!("mean                 {:.3e}", chi.integral(0));
            print_report("solve", &c.reports[j - 1]);
        }
        Setting::B => {
            let inv = solve_invariant_b(&field, args.mesh, &s)?;
            let c = solve_correctors_b(inv.renormalized(), args.mesh, &s)?;
            let xi = &c.xi_h[j - 1];
            println!("corrector            xi{j}");
            println!("max_abs              {:.15e}", xi.max_abs());
            println!("l2                   {:.15e}", (xi.l2_norm_sq(0) + xi.l2_norm_sq(1)).sqrt());
            println!("curl_l2              {:.15e}", fpkhom::correctors::skew_jacobian_norm_sq(xi).sqrt());
            print_report("solve", &c.reports[j - 1]);
        }
    }
    Ok(())
}

fn effective_cmd(args: &MeshArgs) -> Result<(), FpkError> {
    let field = args.problem.field();
    let s = args.settings()?;
    let eff = match args.setting {
        Setting::A => {
            let inv = solve_invariant_a(&field, args.mesh, &s)?;
            let c = solve_correctors_a(&field, &inv.r_h, &s)?;
            effective_matrix_a(&field, &inv.r_h, &c, &s.quad)?
        }
        Setting::B => {
            let inv = solve_invariant_b(&field, args.mesh, &s)?;
            let c = solve_correctors_b(inv.renormalized(), args.mesh, &s)?;
            effective_matrix_b(&field, &inv, &c, &s.quad)?
        }
    };
    println!("{eff}");
    println!("asymmetry            {:.3e}", eff.asymmetry);
    println!("smallest_eigenvalue  {:.15}", eff.spd_check);
    Ok(())
}

fn convergence_cmd(config: &Path, output_dir: Option<PathBuf>) -> Result<bool, FpkError> {
    let mut cfg = StudyConfig::load(config)?;
    if let Some(dir) = output_dir {
        cfg.output_dir = dir;
    }
    let result = run_convergence(&cfg)?;
    let files = emit(&result, &cfg.output_dir, &cfg.formats)?;
    for f in &files {
        println!("wrote {}", f.display());
    }
    if !cfg.formats.contains(&OutputFormat::Csv) {
        print!("{}", fpkhom::study::to_csv(&result));
    }
    for fit in &result.fitted_rates {
        let slope = fit.slope.map(|s| format!("{s:.3}")).unwrap_or_else(|| "n/a".into());
        let pairs: Vec<String> = fit.pairwise.iter().map(|p| format!("{p:.3}")).collect();
        print!("rate {:<7} {:<5} {:>7}   pairwise [{}]", fit.metric, fit.parity, slope, pairs.join(", "));
        match &fit.note {
            Some(n) => println!("   ({n})"),
            None => println!(),
        }
    }
    for f in &result.failures {
        eprintln!("N = {} ({}) failed: {}", f.n, f.parity, f.reason);
    }
    Ok(result.failures.is_empty())
}

fn nonhomogeneous_cmd(args: &MeshArgs, rhs: BuiltinForcing) -> Result<(), FpkError> {
    let field = args.problem.field();
    let s = args.settings()?;
    let forcing = move |y| rhs.eval(y);
    let exact = (args.problem == BuiltinProblem::Identity)
        .then(|| rhs.identity_solution())
        .flatten();
    match args.setting {
        Setting::A => {
            let (u, report) = solve_nonhomogeneous_a(&field, &forcing, args.mesh, &s)?;
            println!("l2                   {:.15e}", u.l2_norm_sq(0).sqrt());
            println!("max_abs              {:.15e}", u.max_abs());
            if let Some((value, gradient)) = exact {
                let r = FnReference { value, gradient };
                let e = error_norm(&u, &r, Norm::Lp(2.0), &s.quad, &[])?;
                println!("l2_error             {e:.15e}");
            }
            print_report("solve", &report);
        }
        Setting::B => {
            let sol = solve_nonhomogeneous_b(&field, &forcing, args.mesh, &s)?;
            let mesh = sol.u_h.mesh();
            let l2 = error_norm_with(mesh, &s.quad, &[], Norm::Lp(2.0), |t, _| ErrorSample {
                value: sol.u_h.on_element(t),
                grad: 0.0,
            })?;
            println!("l2                   {l2:.15e}");
            if let Some((value, _)) = exact {
                let e = error_norm_with(mesh, &s.quad, &[], Norm::Lp(2.0), |t, q| ErrorSample {
                    value: sol.u_h.on_element(t) - value(q.x),
                    grad: 0.0,
                })?;
                println!("l2_error             {e:.15e}");
            }
            print_report("solve", &sol.report);
        }
    }
    Ok(())
}

fn exit_code(e: &FpkError) -> u8 {
    match e {
        FpkError::SolveFailure { .. }
        | FpkError::InvalidInvariant(_)
        | FpkError::QuadratureNonConvergence { .. }
        | FpkError::Evaluation { .. } => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::CheckCordes { problem, grid } => check_cordes_cmd(*problem, *grid).map(|_| true),
        Command::Invariant(args) => invariant_cmd(args).map(|_| true),
        Command::Corrector { mesh, j } => corrector_cmd(mesh, *j as usize).map(|_| true),
        Command::EffectiveMatrix(args) => effective_cmd(args).map(|_| true),
        Command::Convergence { config, output_dir } => convergence_cmd(config, output_dir.clone()),
        Command::Nonhomogeneous { mesh, rhs } => nonhomogeneous_cmd(mesh, *rhs).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
