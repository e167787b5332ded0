mod input;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use spca_core::harness::{
    population_psi, resolve_threads, run_sim1, run_sim2, with_threads, write_sim1_csv, write_sim2_csv, Sim1Config,
    Sim1Variant, Sim2Config, Sim2Method,
};
use spca_core::sampling::Radial;
use spca_core::{
    ascov_pca, ascov_spca, asymptotics, harness, lambda_star, solve, tau, tau_closed, tau_quadrature, EllipticalSpec,
    MarginModel, SolverConfig, SpcaError, Status,
};

#[derive(Parser)]
#[command(name = "spca", version, about = "Robust leading principal direction: fitting, thresholds and simulations")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Base seed for every random stream.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to every available core.
    #[arg(long, global = true, env = "THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one data set read from CSV.
    Solve(SolveArgs),
    /// Leading eigenvalue of the population sign covariance.
    Tau(TauArgs),
    /// Identifiability threshold for one dimension or a range.
    LambdaStar(LambdaStarArgs),
    /// Norm of the population minimizer.
    Psi(ModelArgs),
    /// Plug-in asymptotic covariances for one model.
    Ascov(AscovArgs),
    /// Independent-margin study: fitted components across a grid of spreads.
    Sim1(Sim1Args),
    /// Elliptical study: direction covariances of the robust fit and of PCA.
    Sim2(Sim2Args),
}

#[derive(Args)]
struct SolveArgs {
    /// CSV file with one observation per line; `-` reads stdin.
    input: PathBuf,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Objective-decrease stopping threshold.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Skip the final line search along the fitted direction.
    #[arg(long)]
    no_polish: bool,
}

#[derive(Args)]
struct TauArgs {
    #[arg(long, allow_negative_numbers = true)]
    lambda: f64,
    #[arg(long)]
    p: usize,
    /// Closed form (p in 2..=4 only).
    #[arg(long, conflicts_with = "quad")]
    closed: bool,
    /// Numerical quadrature.
    #[arg(long)]
    quad: bool,
}

#[derive(Args)]
struct LambdaStarArgs {
    #[arg(long, conflicts_with = "p_range", required_unless_present = "p_range")]
    p: Option<usize>,
    /// Inclusive range `lo:hi`.
    #[arg(long, value_parser = parse_range)]
    p_range: Option<(usize, usize)>,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    p: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Degrees of freedom of the t radial law; `inf` for Gaussian.
    #[arg(long, default_value = "inf", value_parser = parse_radial)]
    nu: Radial,
    /// Sample size of the large fit that supplies the norm for t laws.
    #[arg(long, default_value_t = 100_000)]
    psi_sample: usize,
}

#[derive(Args)]
struct AscovArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = asymptotics::DEFAULT_MC_DRAWS)]
    mc_draws: usize,
    /// Use this norm instead of computing it.
    #[arg(long)]
    psi: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    /// Covariance diag(θ², 1, 1).
    Equal,
    /// Covariance diag(θ², θ, 1).
    SqrtTheta,
}

#[derive(Args)]
struct Sim1Args {
    #[arg(long, value_enum, default_value = "equal")]
    variant: VariantArg,
    #[arg(long, value_delimiter = ',', default_value = "normal,uniform,bernoulli", value_parser = parse_model)]
    models: Vec<MarginModel>,
    #[arg(long, value_delimiter = ',', default_value = "100,200,400,800")]
    n_list: Vec<usize>,
    /// Explicit θ values; overrides the regular grid.
    #[arg(long, value_delimiter = ',')]
    theta_grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1.0)]
    theta_min: f64,
    #[arg(long, default_value_t = 3.0)]
    theta_max: f64,
    #[arg(long, default_value_t = 20)]
    theta_count: usize,
    #[arg(long, default_value_t = 200)]
    replicates: usize,
}

#[derive(Args)]
struct Sim2Args {
    #[arg(long, value_delimiter = ',', default_value = "3,5")]
    p_list: Vec<usize>,
    /// Degrees of freedom; `inf` for Gaussian.
    #[arg(long, value_delimiter = ',', default_value = "3,5,10", value_parser = parse_radial)]
    nu: Vec<Radial>,
    #[arg(long, value_delimiter = ',', default_value = "2,5,10,20,40")]
    lambda_grid: Vec<f64>,
    #[arg(long, default_value_t = asymptotics::DEFAULT_MC_DRAWS)]
    mc_draws: usize,
    #[arg(long, default_value_t = 100_000)]
    psi_sample: usize,
    /// Replicated fits instead of the plug-in formulas.
    #[arg(long)]
    empirical: bool,
    /// Sample size of each replicated fit.
    #[arg(long, default_value_t = 1000, requires = "empirical")]
    n: usize,
    /// Number of replicated fits.
    #[arg(long, default_value_t = 200, requires = "empirical")]
    replicates: usize,
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (lo, hi) = s.split_once(':').ok_or("expected lo:hi")?;
    let lo: usize = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: usize = hi.trim().parse().map_err(|e| format!("{e}"))?;
    if lo > hi {
        return Err(format!("empty range {lo}:{hi}"));
    }
    Ok((lo, hi))
}

fn parse_radial(s: &str) -> Result<Radial, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "inf" | "gaussian" | "normal" => Ok(Radial::Gaussian),
        t => t
            .parse::<u32>()
            .ok()
            .filter(|&nu| nu >= 1)
            .map(Radial::StudentT)
            .ok_or_else(|| format!("expected a positive integer or `inf`, got `{s}`")),
    }
}

fn parse_model(s: &str) -> Result<MarginModel, String> {
    MarginModel::parse(s.trim()).ok_or_else(|| format!("unknown model `{s}` (normal, uniform, bernoulli)"))
}

/// Failure classes mapped onto the exit-code contract.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Degenerate(String),
    Numeric(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Degenerate(_) => 3,
            Failure::Numeric(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Degenerate(m) | Failure::Numeric(m) => m,
        }
    }
}

impl From<SpcaError> for Failure {
    fn from(e: SpcaError) -> Self {
        let msg = e.to_string();
        match e {
            SpcaError::AllZeroData
            | SpcaError::DegenerateData
            | SpcaError::UndefinedScale
            | SpcaError::ZeroVector
            | SpcaError::SamplePointHit { .. }
            | SpcaError::DirectionAtSamplePoint { .. } => Failure::Degenerate(msg),
            SpcaError::BacktrackExhausted { .. }
            | SpcaError::QuadratureNonConvergence { .. }
            | SpcaError::RadiusViolation { .. } => Failure::Numeric(msg),
            _ => Failure::Usage(msg),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(format!("i/o error: {e}"))
    }
}

type Outcome = Result<(), Failure>;

fn open_out(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Failure::Usage(format!("cannot create {}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(f64::to_string).collect::<Vec<_>>().join(" ")
}

fn cmd_solve(args: &SolveArgs, common: &Common) -> Outcome {
    let data = if args.input.as_os_str() == "-" {
        input::parse_data(io::stdin().lock())
    } else {
        let f = File::open(&args.input)
            .map_err(|e| Failure::Usage(format!("cannot open {}: {e}", args.input.display())))?;
        input::parse_data(f)
    }
    .map_err(Failure::Usage)?;

    let mut cfg = SolverConfig {
        tolerance: args.tolerance,
        polish: !args.no_polish,
        ..SolverConfig::default()
    };
    if let Some(m) = args.max_iter {
        cfg.max_iter = m;
    }
    let fit = solve(&data, &cfg, None)?;

    let mut report = io::stdout().lock();
    writeln!(report, "n: {}", data.n())?;
    writeln!(report, "p: {}", data.p())?;
    match &fit.direction {
        Some(d) => writeln!(report, "direction: {}", join(d))?,
        None => writeln!(report, "direction: undefined (zero fit)")?,
    }
    writeln!(report, "norm: {}", fit.norm)?;
    writeln!(report, "v: {}", join(&fit.v))?;
    writeln!(report, "objective: {}", fit.objective)?;
    writeln!(report, "iterations: {}", fit.iterations)?;
    writeln!(report, "escape_steps: {}", fit.escape_steps_taken)?;
    writeln!(report, "radius_bound: {}", fit.radius.h)?;
    writeln!(report, "within_radius: {}", fit.within_radius())?;
    writeln!(report, "polished: {}", fit.polished)?;
    if let Some((k, s)) = fit.ended_at_sample_point {
        writeln!(report, "ended_at_sample_point: {s}X_{}", k + 1)?;
    }
    writeln!(report, "sign_convention: largest-magnitude coordinate is nonnegative")?;
    writeln!(report, "status: {:?}", fit.status)?;
    report.flush()?;

    if common.out.is_some() {
        let mut out = open_out(&common.out)?;
        let p = data.p();
        let mut header = vec!["norm".to_string(), "objective".into(), "iterations".into(), "escape_steps".into()];
        header.extend((1..=p).map(|j| format!("v{j}")));
        header.extend((1..=p).map(|j| format!("d{j}")));
        writeln!(out, "{}", header.join(","))?;
        let dir = fit.direction.clone().unwrap_or_else(|| vec![f64::NAN; p]);
        let mut row = vec![
            fit.norm.to_string(),
            fit.objective.to_string(),
            fit.iterations.to_string(),
            fit.escape_steps_taken.to_string(),
        ];
        row.extend(fit.v.iter().chain(&dir).map(f64::to_string));
        writeln!(out, "{}", row.join(","))?;
        out.flush()?;
    }
    match fit.status {
        Status::Converged => Ok(()),
        Status::MaxIterReached => Err(Failure::Numeric(format!(
            "no convergence within {} iterations",
            cfg.max_iter
        ))),
    }
}

fn cmd_tau(args: &TauArgs, common: &Common) -> Outcome {
    let t = if args.closed {
        tau_closed(args.lambda, args.p)?
    } else if args.quad {
        tau_quadrature(args.lambda, args.p)?
    } else {
        tau(args.lambda, args.p)?
    };
    let mut out = open_out(&common.out)?;
    writeln!(out, "lambda,p,tau,tau0,method,abs_err,status")?;
    writeln!(
        out,
        "{},{},{},{},{},{:e},{}",
        t.lambda,
        t.p,
        t.tau,
        t.tau0,
        t.method.as_str(),
        t.abs_err_estimate,
        if t.identifiable() { "identifiable" } else { "not identifiable" }
    )?;
    out.flush()?;
    Ok(())
}

fn cmd_lambda_star(args: &LambdaStarArgs, common: &Common) -> Outcome {
    let (lo, hi) = match (args.p, args.p_range) {
        (Some(p), _) => (p, p),
        (None, Some(r)) => r,
        (None, None) => return Err(Failure::Usage("give --p or --p-range".into())),
    };
    let mut out = open_out(&common.out)?;
    writeln!(out, "p,lambda_star")?;
    for p in lo..=hi {
        writeln!(out, "{p},{}", lambda_star(p)?)?;
    }
    out.flush()?;
    Ok(())
}

fn model_spec(m: &ModelArgs) -> Result<EllipticalSpec, Failure> {
    Ok(EllipticalSpec::axis_aligned(m.p, m.lambda, m.sigma, m.nu)?)
}

fn model_psi(m: &ModelArgs, spec: &EllipticalSpec, seed: u64) -> Result<f64, Failure> {
    Ok(population_psi(spec, m.psi_sample, seed)?)
}

fn psi_method(r: Radial) -> &'static str {
    match r {
        Radial::Gaussian => "quadrature",
        Radial::StudentT(_) => "large-sample",
    }
}

fn cmd_psi(args: &ModelArgs, common: &Common) -> Outcome {
    let spec = model_spec(args)?;
    let t = tau(args.lambda, args.p)?;
    let psi = model_psi(args, &spec, common.seed)?;
    let mut out = open_out(&common.out)?;
    writeln!(out, "lambda,p,sigma,nu,tau,psi,method,seed")?;
    writeln!(
        out,
        "{},{},{},{},{},{},{},{}",
        args.lambda,
        args.p,
        args.sigma,
        args.nu.label(),
        t.tau,
        psi,
        psi_method(args.nu),
        common.seed
    )?;
    out.flush()?;
    Ok(())
}

fn cmd_ascov(args: &AscovArgs, common: &Common) -> Outcome {
    let m = &args.model;
    let spec = model_spec(m)?;
    let psi = match args.psi {
        Some(v) => v,
        None => model_psi(m, &spec, common.seed)?,
    };
    let spca = if psi > 0.0 {
        Some(ascov_spca(&spec, psi, args.mc_draws, common.seed)?)
    } else {
        None
    };
    let pca = ascov_pca(&spec, args.mc_draws, harness::cell_seed(common.seed, &[1]))?;
    let nan = f64::NAN;
    let (q1, q1_se, q2, q2_se, dir, dir_se) = spca.as_ref().map_or((nan, nan, nan, nan, nan, nan), |e| {
        (
            e.q1,
            e.q1_se,
            e.q2,
            e.q2_se,
            e.direction_spectral_norm(),
            e.direction_spectral_norm_se(),
        )
    });
    let mut out = open_out(&common.out)?;
    writeln!(
        out,
        "lambda,p,sigma,nu,psi,q1,q1_se,q2,q2_se,spca_direction_norm,spca_direction_se,pca_direction_norm,pca_direction_se,pca_moment_warning,mc_draws,seed"
    )?;
    writeln!(
        out,
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        m.lambda,
        m.p,
        m.sigma,
        m.nu.label(),
        psi,
        q1,
        q1_se,
        q2,
        q2_se,
        dir,
        dir_se,
        pca.direction_spectral_norm(),
        pca.direction_spectral_norm_se(),
        pca.moment_warning,
        args.mc_draws,
        common.seed
    )?;
    out.flush()?;
    if psi == 0.0 {
        eprintln!("note: the model is not identifiable (psi = 0); robust columns are NaN");
    }
    Ok(())
}

fn cmd_sim1(args: &Sim1Args, common: &Common) -> Outcome {
    let theta_grid = match &args.theta_grid {
        Some(g) => g.clone(),
        None => harness::linear_grid(args.theta_min, args.theta_max, args.theta_count),
    };
    let cfg = Sim1Config {
        models: args.models.clone(),
        n_list: args.n_list.clone(),
        theta_grid,
        replicates: args.replicates,
        seed: common.seed,
        variant: match args.variant {
            VariantArg::Equal => Sim1Variant::Equal,
            VariantArg::SqrtTheta => Sim1Variant::SqrtSecond,
        },
    };
    let rows = with_threads(resolve_threads(common.threads), || run_sim1(&cfg))??;
    let mut out = open_out(&common.out)?;
    write_sim1_csv(&rows, &mut out)?;
    out.flush()?;
    Ok(())
}

fn cmd_sim2(args: &Sim2Args, common: &Common) -> Outcome {
    let cfg = Sim2Config {
        p_list: args.p_list.clone(),
        radials: args.nu.clone(),
        lambda_grid: args.lambda_grid.clone(),
        mc_draws: args.mc_draws,
        psi_sample: args.psi_sample,
        seed: common.seed,
        method: if args.empirical {
            Sim2Method::Empirical {
                n: args.n,
                replicates: args.replicates,
            }
        } else {
            Sim2Method::Plugin
        },
    };
    let rows = with_threads(resolve_threads(common.threads), || run_sim2(&cfg))??;
    let mut out = open_out(&common.out)?;
    write_sim2_csv(&rows, &mut out)?;
    out.flush()?;
    Ok(())
}

fn run(cli: &Cli) -> Outcome {
    let common = &cli.common;
    let threads = resolve_threads(common.threads);
    match &cli.command {
        Command::Solve(a) => cmd_solve(a, common),
        Command::Tau(a) => cmd_tau(a, common),
        Command::LambdaStar(a) => cmd_lambda_star(a, common),
        Command::Psi(a) => with_threads(threads, || cmd_psi(a, common))?,
        Command::Ascov(a) => with_threads(threads, || cmd_ascov(a, common))?,
        Command::Sim1(a) => cmd_sim1(a, common),
        Command::Sim2(a) => cmd_sim2(a, common),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
