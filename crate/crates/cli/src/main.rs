//! `cbp`: command-line front end for the convex belief propagation engine.
//!
//! Exit codes: 0 success, 2 certified failure (extraction tier `Failed`, or
//! counting numbers that cannot be certified convex), 3 input error, 4 a
//! budget or iteration limit was exceeded.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use convex_bp::anneal::{AnnealSchedule, ANNEAL_STAGE_ITERATIONS, ANNEAL_TIE_TOL};
use convex_bp::beliefs::DEFAULT_TIE_TOL;
use convex_bp::harness::contour::{emit_contour, ContourGrid, ContourMode};
use convex_bp::harness::ldpc::{parse_alist, regular_code};
use convex_bp::harness::report::{to_csv, to_jsonl};
use convex_bp::harness::spinglass::{generate_spin_glass, SpinGlassSpec};
use convex_bp::harness::study::{run_ldpc_curve, run_regime_study, StudyConfig};
use convex_bp::harness::uai::{parse_uai, write_uai};
use convex_bp::oracle::brute_force_map;
use convex_bp::*;
use serde_json::json;

#[derive(Parser)]
#[command(name = "cbp", version, about = "Convex belief propagation for discrete factor graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run max- or sum-product on one model and extract a certified MAP.
    Solve(SolveArgs),
    /// Anneal sum-product toward zero temperature to solve the MAP LP relaxation.
    Anneal(AnnealArgs),
    /// Print a preset's counting numbers and search for a convexity certificate.
    Certify(CertifyArgs),
    /// Regime study over random grid spin glasses.
    SpinglassStudy(StudyArgs),
    /// Decoding success rate against BSC crossover probability.
    LdpcCurve(LdpcArgs),
    /// Free-energy landscape of the symmetric two-state torus model.
    Contour(ContourArgs),
    /// Read a model and write it back out as UAI.
    Convert(ConvertArgs),
}

/// Where the model comes from: a UAI file (`-` for stdin) or a generated spin glass.
#[derive(Args, Clone)]
struct ModelArgs {
    /// UAI MARKOV file, `-` for stdin.
    #[arg(required_unless_present = "spin_glass")]
    model: Option<PathBuf>,
    /// Generate a ROWSxCOLS spin glass instead of reading a file.
    #[arg(long, value_name = "ROWSxCOLS", conflicts_with = "model", value_parser = parse_dims)]
    spin_glass: Option<(usize, usize)>,
    #[arg(long, default_value_t = 0.4)]
    sigma_field: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma_coupling: f64,
    /// Spin-glass seed.
    #[arg(long, default_value_t = 0)]
    model_seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum SemiringArg {
    Max,
    Sum,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScheduleArg {
    Async,
    Sync,
}

#[derive(Args, Clone)]
struct EngineArgs {
    /// Weight of the previous message in the log-domain average.
    #[arg(long, default_value_t = 0.5)]
    damping: f64,
    #[arg(long, default_value_t = 1e-8)]
    convergence_tol: f64,
    #[arg(long, value_enum, default_value_t = ScheduleArg::Async)]
    schedule: ScheduleArg,
    /// Seed of the asynchronous update order.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl EngineArgs {
    fn config(&self, semiring: Semiring, temperature: f64, max_iterations: usize) -> Config {
        Config {
            semiring,
            temperature,
            damping: self.damping,
            max_iterations,
            convergence_tol: self.convergence_tol,
            schedule: match self.schedule {
                ScheduleArg::Async => Schedule::Asynchronous { seed: self.seed },
                ScheduleArg::Sync => Schedule::Synchronous,
            },
        }
    }
}

#[derive(Args, Clone)]
struct ExtractArgs {
    /// Relative tie tolerance on max-product beliefs.
    #[arg(long, default_value_t = DEFAULT_TIE_TOL)]
    tie_tol: f64,
    /// Node budget of the maximizer search.
    #[arg(long, default_value_t = 1_000_000)]
    search_limit: usize,
    /// Largest joint state space searched per tied component.
    #[arg(long, default_value_t = 1 << 20)]
    component_cap: u64,
}

impl ExtractArgs {
    fn config(&self, convergence_tol: f64) -> ExtractConfig<f64> {
        ExtractConfig {
            tie_tol: self.tie_tol,
            search_limit: self.search_limit,
            component_cap: self.component_cap,
            convergence_tol,
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Counting numbers: bethe, trbp[-RHO], default, trivial.
    #[arg(long, default_value = "default")]
    preset: Preset,
    #[arg(long, value_enum, default_value_t = SemiringArg::Max)]
    semiring: SemiringArg,
    /// Sum-product temperature.
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iterations: usize,
    #[command(flatten)]
    engine: EngineArgs,
    #[command(flatten)]
    extract: ExtractArgs,
    /// Skip the extraction cascade (implied by --semiring sum).
    #[arg(long)]
    no_extract: bool,
    /// Compare against exhaustive enumeration.
    #[arg(long)]
    oracle: bool,
    #[arg(long, default_value_t = 1 << 22)]
    max_joint_states: u128,
}

#[derive(Args)]
struct AnnealArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value = "default")]
    preset: Preset,
    #[arg(long, default_value_t = 1.0)]
    t_start: f64,
    #[arg(long, default_value_t = 1e-4)]
    t_end: f64,
    #[arg(long, default_value_t = 0.5)]
    ratio: f64,
    /// Sweep budget per stage attempt.
    #[arg(long, default_value_t = ANNEAL_STAGE_ITERATIONS)]
    stage_iterations: usize,
    #[command(flatten)]
    engine: EngineArgs,
    /// Relative tie tolerance for classifying the final beliefs.
    #[arg(long, default_value_t = ANNEAL_TIE_TOL)]
    tie_tol: f64,
    /// Accept an unsettled final stage whose beliefs marginalize this well.
    #[arg(long, default_value_t = 1e-3)]
    final_marginalization_tol: f64,
    /// Fail on any stage that does not converge.
    #[arg(long)]
    strict_stages: bool,
    /// Include the per-stage trace.
    #[arg(long)]
    trace: bool,
}

#[derive(Args)]
struct CertifyArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value = "default")]
    preset: Preset,
}

#[derive(Args)]
struct ReportArgs {
    /// Output prefix: writes PREFIX.jsonl (records) and PREFIX.csv (aggregate).
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct StudyArgs {
    #[arg(long, default_value_t = 100)]
    count: usize,
    #[arg(long, default_value_t = 3)]
    rows: usize,
    #[arg(long, default_value_t = 3)]
    cols: usize,
    #[arg(long, default_value_t = 0.4)]
    sigma_field: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma_coupling: f64,
    /// Instance k uses seed + k.
    #[arg(long, default_value_t = 0)]
    study_seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "trbp-0.5,default,trivial")]
    presets: Vec<Preset>,
    #[arg(long, default_value_t = 10_000)]
    max_iterations: usize,
    #[command(flatten)]
    engine: EngineArgs,
    #[command(flatten)]
    extract: ExtractArgs,
    #[arg(long, default_value_t = 1.0)]
    t_start: f64,
    #[arg(long, default_value_t = 1e-4)]
    t_end: f64,
    #[arg(long, default_value_t = 0.5)]
    ratio: f64,
    #[arg(long, default_value_t = ANNEAL_STAGE_ITERATIONS)]
    stage_iterations: usize,
    #[arg(long, default_value_t = ANNEAL_TIE_TOL)]
    anneal_tie_tol: f64,
    #[arg(long, default_value_t = 1e-3)]
    final_marginalization_tol: f64,
    /// Skip annealing; regimes are then unclassified.
    #[arg(long)]
    no_anneal: bool,
    #[arg(long, default_value_t = 1 << 22)]
    max_joint_states: u128,
    #[command(flatten)]
    report: ReportArgs,
}

#[derive(Args)]
struct LdpcArgs {
    /// Parity-check matrix in alist format. Without it a random regular code is built.
    #[arg(long)]
    alist: Option<PathBuf>,
    #[arg(long, default_value_t = 24)]
    n: usize,
    /// Bit degree of the random code.
    #[arg(long, default_value_t = 3)]
    dv: usize,
    /// Check degree of the random code.
    #[arg(long, default_value_t = 6)]
    dc: usize,
    #[arg(long, default_value_t = 1)]
    code_seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "0.02,0.04,0.06,0.08,0.1,0.12")]
    crossovers: Vec<f64>,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value = "default")]
    preset: Preset,
    #[arg(long, default_value_t = 0)]
    trial_seed: u64,
    #[arg(long, default_value_t = 10_000)]
    max_iterations: usize,
    #[command(flatten)]
    engine: EngineArgs,
    #[command(flatten)]
    extract: ExtractArgs,
    /// Joint-state budget of the exhaustive ML decoder.
    #[arg(long, default_value_t = 1 << 22)]
    max_joint_states: u128,
    #[command(flatten)]
    report: ReportArgs,
}

#[derive(Args)]
struct ContourArgs {
    /// Symmetric 2x2 potential, row-major.
    #[arg(long, value_delimiter = ',', num_args = 4, default_value = "3,1,1,2")]
    psi: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1,0.3,0.1,0.03")]
    temperatures: Vec<f64>,
    /// bethe or convex.
    #[arg(long, default_value = "convex")]
    mode: ContourMode,
    #[arg(long, default_value_t = 200)]
    resolution: usize,
    /// Extra grid points 10^-k and 1 - 10^-k for k up to this value.
    #[arg(long, default_value_t = 300)]
    refine_decades: usize,
    /// Half-width of the window used to test for a local minimum.
    #[arg(long, default_value_t = 4)]
    stencil_radius: usize,
    /// CSV destination; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConvertArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Destination; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

fn parse_dims(s: &str) -> Result<(usize, usize), String> {
    let (r, c) = s.split_once(['x', 'X']).ok_or("expected ROWSxCOLS")?;
    Ok((r.trim().parse().map_err(|_| "bad row count")?, c.trim().parse().map_err(|_| "bad column count")?))
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

fn input(e: impl std::fmt::Display) -> Failure {
    Failure { code: 3, message: e.to_string() }
}

fn limit(e: impl std::fmt::Display) -> Failure {
    Failure { code: 4, message: e.to_string() }
}

fn engine_failure(e: EngineError) -> Failure {
    match e {
        EngineError::NumericalOverflow(_) => Failure { code: 1, message: e.to_string() },
        _ => input(e),
    }
}

fn anneal_failure(e: AnnealError) -> Failure {
    match e {
        AnnealError::StageDiverged { .. } => limit(e),
        AnnealError::Engine(e) => engine_failure(e),
        _ => input(e),
    }
}

fn oracle_failure(e: OracleError) -> Failure {
    match e {
        OracleError::BudgetExceeded { .. } => limit(e),
        _ => input(e),
    }
}

fn load(args: &ModelArgs) -> Result<Graph, Failure> {
    if let Some((rows, cols)) = args.spin_glass {
        let spec = SpinGlassSpec {
            rows,
            cols,
            sigma_field: args.sigma_field,
            sigma_coupling: args.sigma_coupling,
            seed: args.model_seed,
        };
        return generate_spin_glass(&spec).map_err(input);
    }
    let path = args.model.as_deref().expect("clap requires a model");
    parse_uai(&read_text(path)?).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    let mut text = String::new();
    if path == Path::new("-") {
        io::stdin().read_to_string(&mut text).map_err(input)?;
    } else {
        text = fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
    }
    Ok(text)
}

fn write_text(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| input(format!("{}: {e}", p.display()))),
        None => io::stdout().write_all(text.as_bytes()).map_err(input),
    }
}

fn print_json(value: &serde_json::Value) {
    // a closed pipe downstream is not an error worth reporting
    let _ = writeln!(io::stdout(), "{}", serde_json::to_string_pretty(value).expect("json values serialize"));
}

fn counts_for(graph: &Graph, preset: Preset) -> Result<(Counts, Option<Certificate>), Failure> {
    preset.counts(graph).map_err(input)
}

fn certificate_json(cert: &Certificate) -> serde_json::Value {
    json!({ "c_i_alpha": cert.c_i_alpha, "d_alpha": cert.d_alpha, "d_i": cert.d_i })
}

fn solve(args: SolveArgs) -> Result<u8, Failure> {
    let graph = load(&args.model)?;
    let (counts, cert) = counts_for(&graph, args.preset)?;
    let semiring = match args.semiring {
        SemiringArg::Max => Semiring::Max,
        SemiringArg::Sum => Semiring::Sum,
    };
    let config = args.engine.config(semiring, args.temperature, args.max_iterations);
    let result = run(&graph, &counts, &config, None).map_err(engine_failure)?;
    let (state, beliefs) = &result;
    let mut out = json!({
        "preset": args.preset.name(),
        "certified_convex": cert.is_some(),
        "converged": state.converged,
        "sweeps": state.iterations_run,
        "final_delta": state.final_delta,
        "variable_beliefs": beliefs.variables,
    });
    let mut code = if state.converged { 0 } else { 4 };
    if semiring == Semiring::Max && !args.no_extract {
        let certificate = extract(
            &ExtractInput::from_run(&graph, &result, &counts, cert.as_ref()),
            &args.extract.config(args.engine.convergence_tol),
        );
        out["tier"] = json!(certificate.tier);
        out["assignment"] = json!(certificate.assignment);
        out["residuals"] = json!(certificate.residuals);
        out["detail"] = json!(certificate.detail);
        if let Some(x) = certificate.complete_assignment() {
            out["energy"] = json!(graph.total_energy(&x).map_err(input)?);
        }
        if certificate.tier == Tier::Failed && code == 0 {
            code = 2;
        }
    }
    if args.oracle {
        let budget = OracleBudget { max_joint_states: args.max_joint_states };
        let (x, e) = brute_force_map(&graph, budget).map_err(oracle_failure)?;
        out["oracle_assignment"] = json!(x.0);
        out["oracle_energy"] = json!(e);
    }
    print_json(&out);
    Ok(code)
}

fn anneal(args: AnnealArgs) -> Result<u8, Failure> {
    let graph = load(&args.model)?;
    let (counts, cert) = counts_for(&graph, args.preset)?;
    let schedule = AnnealSchedule {
        t_start: args.t_start,
        t_end: args.t_end,
        ratio: args.ratio,
        stage_config: args.engine.config(Semiring::Sum, 1.0, args.stage_iterations),
        tie_tol: args.tie_tol,
        strict_stages: args.strict_stages,
        final_marginalization_tol: args.final_marginalization_tol,
    };
    let lp = solve_lp(&graph, &counts, cert.as_ref(), &schedule).map_err(anneal_failure)?;
    let mut out = json!({
        "preset": args.preset.name(),
        "objective": lp.objective,
        "regime": lp.integrality,
        "fractional_vars": lp.fractional_vars,
        "temperature": lp.temperature,
        "total_sweeps": lp.total_iterations(),
        "rounded_assignment": lp.beliefs.argmax_assignment(),
        "variable_beliefs": lp.beliefs.variables,
    });
    if args.trace {
        out["stages"] = json!(lp.stage_trace);
    }
    print_json(&out);
    Ok(0)
}

fn certify(args: CertifyArgs) -> Result<u8, Failure> {
    let graph = load(&args.model)?;
    let (counts, _) = counts_for(&graph, args.preset)?;
    let found = certify_convexity(&graph, &counts);
    let mut out = json!({
        "preset": args.preset.name(),
        "c_alpha": counts.c_alpha,
        "c_i": counts.c_i,
        "certified": found.is_ok(),
    });
    match &found {
        Ok(cert) => {
            out["certificate"] = certificate_json(cert);
            out["identity_error"] = json!(cert.identity_error(&graph, &counts));
        }
        Err(reason) => out["reason"] = json!(format!("{reason:?}")),
    }
    print_json(&out);
    Ok(if found.is_ok() { 0 } else { 2 })
}

fn write_report<R: serde::Serialize, A: serde::Serialize>(prefix: &Path, records: &[R], rows: &[A]) -> Result<(), Failure> {
    let jsonl = to_jsonl(records).map_err(input)?;
    let csv = to_csv(rows).map_err(input)?;
    write_text(Some(&prefix.with_extension("jsonl")), &jsonl)?;
    write_text(Some(&prefix.with_extension("csv")), &csv)
}

fn study_config(
    engine: &EngineArgs,
    extract: &ExtractArgs,
    max_iterations: usize,
    max_joint_states: u128,
) -> StudyConfig {
    StudyConfig {
        engine: engine.config(Semiring::Max, 1.0, max_iterations),
        extract: extract.config(engine.convergence_tol),
        budget: OracleBudget { max_joint_states },
        ..StudyConfig::default()
    }
}

fn spinglass_study(args: StudyArgs) -> Result<u8, Failure> {
    let joint = 1u128.checked_shl((args.rows * args.cols) as u32).unwrap_or(u128::MAX);
    if joint > args.max_joint_states {
        return Err(limit(format!(
            "a {}x{} grid has {joint} joint states, over the oracle budget of {}",
            args.rows, args.cols, args.max_joint_states
        )));
    }
    let mut config = study_config(&args.engine, &args.extract, args.max_iterations, args.max_joint_states);
    config.anneal = !args.no_anneal;
    config.schedule = AnnealSchedule {
        t_start: args.t_start,
        t_end: args.t_end,
        ratio: args.ratio,
        stage_config: args.engine.config(Semiring::Sum, 1.0, args.stage_iterations),
        tie_tol: args.anneal_tie_tol,
        strict_stages: false,
        final_marginalization_tol: args.final_marginalization_tol,
    };
    let template = SpinGlassSpec {
        rows: args.rows,
        cols: args.cols,
        sigma_field: args.sigma_field,
        sigma_coupling: args.sigma_coupling,
        seed: args.study_seed,
    };
    let report = run_regime_study(args.count, &template, &args.presets, args.study_seed, &config).map_err(input)?;
    write_report(&args.report.out, &report.records, &report.aggregate.rows())?;
    let a = &report.aggregate;
    eprintln!(
        "{} instances: {} easy, {} hard, {} intermediate, {} unclassified",
        a.instances, a.easy, a.hard, a.intermediate, a.unclassified
    );
    Ok(0)
}

fn ldpc_curve(args: LdpcArgs) -> Result<u8, Failure> {
    let code = match &args.alist {
        Some(path) => parse_alist(&read_text(path)?).map_err(|e| input(format!("{}: {e}", path.display())))?,
        None => regular_code(args.n, args.dv, args.dc, args.code_seed).map_err(input)?,
    };
    let config = StudyConfig {
        anneal: false,
        ..study_config(&args.engine, &args.extract, args.max_iterations, args.max_joint_states)
    };
    let report =
        run_ldpc_curve(&code, &args.crossovers, args.trials, args.preset, args.trial_seed, &config).map_err(input)?;
    write_report(&args.report.out, &report.records, &report.aggregate)?;
    for row in &report.aggregate {
        eprintln!("p = {}: {}/{} certified, {} LP-integral", row.p, row.certified, row.trials, row.lp_integral);
    }
    Ok(0)
}

fn contour(args: ContourArgs) -> Result<u8, Failure> {
    let psi = [[args.psi[0], args.psi[1]], [args.psi[2], args.psi[3]]];
    let grid = ContourGrid {
        resolution: args.resolution,
        refine_decades: args.refine_decades,
        stencil_radius: args.stencil_radius,
    };
    let table = emit_contour(psi, &args.temperatures, grid, args.mode).map_err(input)?;
    write_text(args.out.as_deref(), &table.to_csv())?;
    for (k, t) in table.temperatures().iter().enumerate() {
        let m = table.minimizer(k);
        eprintln!("T = {t}: {} basin(s), minimum at (x, y) = ({}, {})", table.basin_count(k), m.x, m.y);
    }
    Ok(0)
}

fn convert(args: ConvertArgs) -> Result<u8, Failure> {
    let graph = load(&args.model)?;
    write_text(args.out.as_deref(), &write_uai(&graph))?;
    Ok(0)
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors, which is taken by certified failure
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Solve(a) => solve(a),
        Command::Anneal(a) => anneal(a),
        Command::Certify(a) => certify(a),
        Command::SpinglassStudy(a) => spinglass_study(a),
        Command::LdpcCurve(a) => ldpc_curve(a),
        Command::Contour(a) => contour(a),
        Command::Convert(a) => convert(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("cbp: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
