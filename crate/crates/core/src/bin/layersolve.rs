use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use layersolve::analysis::{
    convergence_study, render_table, temporal_order_study, ManufacturedProblem, StudyConfig,
};
use layersolve::mesh::{layer_params, SpatialMesh, ThetaVariant, TimeGrid};
use layersolve::problem::{derive_regime, validate, PerturbationParams, DEFAULT_SAMPLE_DENSITY};
use layersolve::{march, registry, CheckPolicy, Error, ProblemSpec};

#[derive(Parser)]
#[command(name = "layersolve", version, about = "Layer-adapted Crank-Nicolson solver for singularly perturbed parabolic problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// March one problem and write the solution CSV.
    Solve(Common),
    /// Double-mesh convergence study; writes one report per mu and prints the table.
    Converge(Common),
    /// Time-step refinement on a manufactured smooth problem.
    Temporal(Common),
    /// Print the layer-adapted mesh.
    DumpMesh(Common),
    /// March one problem and print the solution CSV.
    DumpSolution(Common),
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long, default_value = "example1")]
    example: String,
    /// Diffusion parameter; defaults to the example's value (1 for `temporal`).
    #[arg(long, value_parser = parse_real)]
    epsilon: Option<f64>,
    /// Convection parameter; defaults to the example's value (1 for `temporal`).
    #[arg(long, value_parser = parse_real)]
    mu: Option<f64>,
    /// Comma-separated list of mu values (converge only).
    #[arg(long = "mu-list", value_parser = parse_real, value_delimiter = ',')]
    mu_list: Vec<f64>,
    /// Spatial intervals, a multiple of 8 [default: 64, or 2048 for `temporal`].
    #[arg(long = "N", value_parser = parse_count)]
    n: Option<usize>,
    /// Time steps [default: N, or 4 for `temporal`].
    #[arg(long = "M", value_parser = parse_count)]
    m: Option<usize>,
    /// Error rows for `converge`; number of doubled M values for `temporal`.
    #[arg(long, value_parser = parse_count, default_value = "4")]
    levels: usize,
    /// Layer rates: section4, section2 or case2-experimental.
    #[arg(long = "theta-variant", default_value = "section4")]
    theta_variant: ThetaVariant,
    /// Per-step checks: strict, warn or off.
    #[arg(long, default_value = "warn")]
    checks: CheckPolicy,
    /// Output file, or output directory for `converge`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write `x u` blocks per time level instead of CSV.
    #[arg(long = "plot-data")]
    plot_data: bool,
}

fn parse_real(s: &str) -> Result<f64, String> {
    s.parse::<f64>().map_err(|e| format!("`{s}`: {e}"))
}

/// Integers may be written in scientific notation (`1e3`).
fn parse_count(s: &str) -> Result<usize, String> {
    if let Ok(v) = s.parse::<usize>() {
        return Ok(v);
    }
    let v = parse_real(s)?;
    if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(format!("`{s}` is not a non-negative integer"))
    }
}

struct Fail {
    code: u8,
    error: Error,
}

impl From<Error> for Fail {
    fn from(error: Error) -> Self {
        Fail { code: 1, error }
    }
}

fn config_error(msg: impl Into<String>) -> Fail {
    Fail { code: 2, error: Error::InvalidArgument(msg.into()) }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(threads) = std::env::var("LAYERSOLVE_THREADS") {
        match threads.parse::<usize>() {
            Ok(k) if k > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
            }
            _ => {
                eprintln!("error: InvalidArgument: LAYERSOLVE_THREADS must be a positive integer, got `{threads}`");
                return ExitCode::from(2);
            }
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail { code, error }) => {
            let msg = error.to_string().replace('\n', " ");
            eprintln!("error: {}: {msg}", error.kind());
            ExitCode::from(code)
        }
    }
}

fn run(command: Command) -> Result<(), Fail> {
    match command {
        Command::Solve(c) => solve(&c, false),
        Command::DumpSolution(c) => solve(&c, true),
        Command::Converge(c) => converge(&c),
        Command::Temporal(c) => temporal(&c),
        Command::DumpMesh(c) => dump_mesh(&c),
    }
}

fn check_n(n: usize) -> Result<usize, Fail> {
    if n < 16 || !n.is_multiple_of(8) {
        return Err(config_error(format!("N must be a multiple of 8 and at least 16, got {n}")));
    }
    Ok(n)
}

fn check_m(m: usize) -> Result<usize, Fail> {
    if m == 0 {
        return Err(config_error("M must be positive"));
    }
    Ok(m)
}

fn params_for(spec: &ProblemSpec, c: &Common, mu: Option<f64>) -> Result<PerturbationParams, Fail> {
    let epsilon = c.epsilon.unwrap_or(spec.params.epsilon);
    let mu = mu.or(c.mu).unwrap_or(spec.params.mu);
    PerturbationParams::new(epsilon, mu).map_err(|e| Fail { code: 2, error: e })
}

/// Looks up the example and applies the parameter flags; fails before any
/// numerical work is done.
fn configured_spec(c: &Common) -> Result<ProblemSpec, Fail> {
    let base = registry::lookup(&c.example).map_err(|e| Fail { code: 2, error: e })?;
    let params = params_for(&base, c, None)?;
    let spec = base.with_params(params);
    validate(&spec, DEFAULT_SAMPLE_DENSITY)?.check()?;
    Ok(spec)
}

fn layer_mesh(spec: &ProblemSpec, c: &Common, n: usize) -> Result<SpatialMesh, Fail> {
    let regime = derive_regime(spec, DEFAULT_SAMPLE_DENSITY)?;
    let layer = layer_params(&regime, spec.params, c.theta_variant)?;
    Ok(SpatialMesh::layer_adapted(&layer, n, spec.d)?)
}

fn emit(out: Option<&Path>, contents: &str) -> Result<(), Fail> {
    match out {
        Some(path) => write_atomic(path, contents),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(contents.as_bytes())
                .map_err(|e| Fail::from(Error::InvalidArgument(format!("stdout: {e}"))))
        }
    }
}

/// Write to a sibling temporary file, then rename over the target.
fn write_atomic(path: &Path, contents: &str) -> Result<(), Fail> {
    let io = |e: std::io::Error| Fail::from(Error::InvalidArgument(format!("{}: {e}", path.display())));
    let file_name = path
        .file_name()
        .ok_or_else(|| config_error(format!("`{}` is not a file path", path.display())))?;
    let mut tmp_name = file_name.to_os_string();
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, contents).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

fn solve(c: &Common, dump: bool) -> Result<(), Fail> {
    let n = check_n(c.n.unwrap_or(64))?;
    let m = check_m(c.m.unwrap_or(n))?;
    let spec = configured_spec(c)?;
    let mesh = layer_mesh(&spec, c, n)?;
    let grid = TimeGrid::new(spec.t_final, m)?;
    let sol = march(&spec, &mesh, &grid, c.checks)?;
    let body = if c.plot_data { sol.render_plot_data() } else { sol.render_csv() };

    if dump {
        return emit(c.out.as_deref(), &body);
    }
    let out = c.out.clone().unwrap_or_else(|| PathBuf::from("solution.csv"));
    write_atomic(&out, &body)?;
    let d = &sol.diagnostics;
    println!("N={n} M={m} eps={:e} mu={:e}", spec.params.epsilon, spec.params.mu);
    println!("max |U| = {}", sol.max_abs());
    if let Some(audit) = &d.audit {
        println!("stability bound {} (margin {})", audit.bound, audit.margin);
    }
    println!(
        "M-matrix failures: {}, residual failures: {}, max relative residual {:e}",
        d.m_matrix_failures.len(),
        d.residual_failures,
        d.max_relative_residual
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn converge(c: &Common) -> Result<(), Fail> {
    let n = check_n(c.n.unwrap_or(64))?;
    let m = check_m(c.m.unwrap_or(n))?;
    if c.levels < 2 {
        return Err(config_error(format!("levels must be at least 2, got {}", c.levels)));
    }
    let base = configured_spec(c)?;
    let mus: Vec<Option<f64>> =
        if c.mu_list.is_empty() { vec![None] } else { c.mu_list.iter().copied().map(Some).collect() };
    let specs = mus
        .iter()
        .map(|&mu| Ok(base.with_params(params_for(&base, c, mu)?)))
        .collect::<Result<Vec<_>, Fail>>()?;

    let config = StudyConfig { base_n: n, base_m: m, levels: c.levels, variant: c.theta_variant, checks: c.checks };
    let reports = specs
        .par_iter()
        .map(|spec| convergence_study(spec, &config))
        .collect::<Result<Vec<_>, Error>>()?;

    let dir = c.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)
        .map_err(|e| Fail::from(Error::InvalidArgument(format!("{}: {e}", dir.display()))))?;
    for report in &reports {
        write_atomic(&dir.join(report.file_name()), &report.render_csv())?;
    }
    let table = render_table(&reports);
    let table_name = format!("table_eps{:e}.txt", base.params.epsilon);
    write_atomic(&dir.join(table_name), &table)?;
    print!("{table}");
    Ok(())
}

fn temporal(c: &Common) -> Result<(), Fail> {
    let n = check_n(c.n.unwrap_or(2048))?;
    let m0 = check_m(c.m.unwrap_or(4))?;
    if c.levels < 2 {
        return Err(config_error(format!("levels must be at least 2, got {}", c.levels)));
    }
    let params = PerturbationParams::new(c.epsilon.unwrap_or(1.0), c.mu.unwrap_or(1.0))
        .map_err(|e| Fail { code: 2, error: e })?;
    let problem = ManufacturedProblem::sine_decay(params);
    let m_list: Vec<usize> = (0..c.levels).map(|k| m0 << k).collect();
    let report = temporal_order_study(&problem, n, &m_list, c.checks)?;
    let csv = report.render_csv();
    match &c.out {
        Some(path) => write_atomic(path, &csv)?,
        None => print!("{csv}"),
    }
    eprintln!(
        "N={} reference M={} spatial floor {:e}{}",
        report.n,
        report.m_reference,
        report.spatial_floor,
        if report.uniform_fallback { " (piecewise-uniform mesh)" } else { "" }
    );
    Ok(())
}

fn dump_mesh(c: &Common) -> Result<(), Fail> {
    let n = check_n(c.n.unwrap_or(64))?;
    let spec = configured_spec(c)?;
    let mesh = layer_mesh(&spec, c, n)?;
    emit(c.out.as_deref(), &mesh.render_dump())
}
