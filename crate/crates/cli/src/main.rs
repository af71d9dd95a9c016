//! Command-line front end: line-of-sight checks, single-scenario
//! optimization, Monte Carlo benchmarks, terrain fitting, and report
//! regeneration from stored run records.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use terradeploy::formats;
use terradeploy::harness;
use terradeploy_core::los::{los_dense_oracle, LosQuery};
use terradeploy_core::optimizer::{optimize, OptimizeOutcome};
use terradeploy_core::terrain::{fit_gaussians, model_rmse, FitConfig};
use terradeploy_core::{los_query, Point3, Scenario, TerrainContext};

/// Exit code 1: the inputs are wrong. Exit code 2: the inputs were
/// fine but execution failed.
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

trait Classify<T> {
    fn config(self) -> Result<T, Failure>;
    fn runtime(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn config(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Config(e.into()))
    }
    fn runtime(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

#[derive(Parser)]
#[command(name = "terradeploy", version, about = "UAV spectrum-sensing deployment optimizer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check line of sight between two points over a terrain model.
    LosCheck(LosCheckArgs),
    /// Optimize one scenario and write the deployment and its trace.
    Optimize(OptimizeArgs),
    /// Run a Monte Carlo experiment plan and write reports.
    Benchmark(BenchmarkArgs),
    /// Fit a Gaussian-mixture terrain model to a raster height grid.
    FitTerrain(FitTerrainArgs),
    /// Recompute reports from a stored runs.csv.
    Report(ReportArgs),
}

#[derive(Args)]
struct LosCheckArgs {
    /// Terrain model JSON.
    #[arg(long)]
    terrain: PathBuf,
    /// Segment start, metres: x,y,z
    #[arg(long, value_parser = parse_point)]
    from: Point3,
    /// Segment end, metres: x,y,z
    #[arg(long, value_parser = parse_point)]
    to: Point3,
    /// Bisection tolerance on the segment parameter.
    #[arg(long, default_value_t = 1e-5)]
    epsilon: f64,
    /// Also run the dense-sampling oracle at this parameter step.
    #[arg(long)]
    oracle_step: Option<f64>,
    /// Component bounding-box half-width, in sigmas.
    #[arg(long)]
    ko: Option<f64>,
}

#[derive(Args)]
struct OptimizeArgs {
    /// Scenario JSON.
    #[arg(long)]
    scenario: PathBuf,
    /// Optimizer configuration JSON; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root RNG seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for deployment.json, report.json, trace.csv.
    #[arg(long)]
    out: PathBuf,
    /// Overwrite existing output files.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Experiment plan JSON.
    #[arg(long)]
    plan: PathBuf,
    /// Output directory for runs.csv, summary.json, curves.csv.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; defaults to TERRADEPLOY_WORKERS or all cores.
    #[arg(long)]
    workers: Option<usize>,
    /// Overwrite existing output files.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct FitTerrainArgs {
    /// Raster height grid (.asc/.txt ESRI ASCII, .csv rows).
    #[arg(long)]
    grid: PathBuf,
    /// Number of Gaussian components to fit.
    #[arg(long)]
    components: usize,
    /// Output terrain model JSON.
    #[arg(long)]
    out: PathBuf,
    /// RNG seed for restart perturbations.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Extra randomly perturbed fits; the best result wins.
    #[arg(long, default_value_t = 0)]
    restarts: u32,
    /// Overwrite an existing output file.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory holding runs.csv.
    #[arg(long = "in")]
    in_dir: PathBuf,
    /// csv emits curves.csv, json emits summary.json.
    #[arg(long)]
    format: ReportFormat,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ReportFormat {
    Csv,
    Json,
}

fn parse_point(s: &str) -> Result<Point3, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected x,y,z, got {s:?}"));
    }
    let mut v = [0.0; 3];
    for (slot, part) in v.iter_mut().zip(&parts) {
        *slot = part.trim().parse::<f64>().map_err(|e| format!("{part:?}: {e}"))?;
    }
    Ok(Point3::new(v[0], v[1], v[2]))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::LosCheck(args) => los_check(args),
        Command::Optimize(args) => run_optimize(args),
        Command::Benchmark(args) => run_benchmark(args),
        Command::FitTerrain(args) => fit_terrain(args),
        Command::Report(args) => run_report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn warn_marginal_closed_forms(scenario: &Scenario) {
    if scenario.ebd.closed_form_marginal() {
        eprintln!(
            "warning: K={} is below 10*L={}; the closed-form detector statistics are asymptotic and will be rough at this size",
            scenario.ebd.samples,
            10 * scenario.ebd.elements
        );
    }
}

/// Refuses to clobber existing outputs unless forced; checked before
/// any long computation starts.
fn ensure_absent(paths: &[PathBuf], force: bool) -> Result<(), Failure> {
    if force {
        return Ok(());
    }
    for p in paths {
        if p.exists() {
            return Err(Failure::Config(anyhow!(
                "{} already exists; pass --force to overwrite",
                p.display()
            )));
        }
    }
    Ok(())
}

fn los_check(args: LosCheckArgs) -> Result<(), Failure> {
    let terrain = formats::load_terrain(&args.terrain).config()?;
    let mut los = terradeploy_core::scenario::LosParams::default();
    if let Some(ko) = args.ko {
        if !(ko > 0.0 && ko.is_finite()) {
            return Err(Failure::Config(anyhow!("--ko must be positive and finite")));
        }
        los.box_sigmas = ko;
    }
    los.epsilon = args.epsilon;
    let tc = TerrainContext::new(&terrain, &los);
    let query = LosQuery::new(args.from, args.to, args.epsilon)
        .map_err(|e| anyhow!("invalid query: {e}"))
        .config()?;
    let outcome = los_query(&tc.bvh, &terrain, &query);
    println!("{}", if outcome.visible { 1 } else { 0 });
    println!("query_evals {}", outcome.terrain_evals);
    if let Some(step) = args.oracle_step {
        let oracle = los_dense_oracle(&terrain, args.from, args.to, step)
            .map_err(|e| anyhow!("invalid oracle step: {e}"))
            .config()?;
        println!("oracle {}", if oracle.visible { 1 } else { 0 });
        println!("oracle_evals {}", oracle.terrain_evals);
    }
    Ok(())
}

#[derive(Serialize)]
struct UavFile {
    pos: [f64; 3],
    azimuth_rad: f64,
    elevation_rad: f64,
    band: [f64; 2],
}

#[derive(Serialize)]
struct DeploymentFile {
    uavs: Vec<UavFile>,
}

#[derive(Serialize)]
struct ViolationsFile {
    region: f64,
    target_separation: f64,
    uav_separation: f64,
    orientation: f64,
    altitude: f64,
}

#[derive(Serialize)]
struct ReportFile {
    seed: u64,
    fitness: f64,
    p_sum: f64,
    e_avg_ex: f64,
    feasible: bool,
    violations: ViolationsFile,
}

fn outcome_files(outcome: &OptimizeOutcome, seed: u64) -> (String, String, String) {
    let deployment = DeploymentFile {
        uavs: outcome
            .deployment
            .uavs
            .iter()
            .map(|u| UavFile {
                pos: [u.position.x, u.position.y, u.position.z],
                azimuth_rad: u.azimuth,
                elevation_rad: u.elevation,
                band: [u.band.min_mhz, u.band.max_mhz],
            })
            .collect(),
    };
    let v = &outcome.report.violations;
    let report = ReportFile {
        seed,
        fitness: outcome.report.fitness,
        p_sum: outcome.report.p_sum,
        e_avg_ex: outcome.report.avg_excess_energy,
        feasible: v.is_feasible(),
        violations: ViolationsFile {
            region: v.region,
            target_separation: v.target_separation,
            uav_separation: v.uav_separation,
            orientation: v.orientation,
            altitude: v.altitude,
        },
    };
    let mut trace = String::from("stage,step,best_fitness\n");
    for (i, f) in outcome.ga_trace.iter().enumerate() {
        let _ = writeln!(trace, "ga,{i},{f:.16e}");
    }
    for (i, f) in outcome.pso_trace.iter().enumerate() {
        let _ = writeln!(trace, "pso,{i},{f:.16e}");
    }
    let mut dj = serde_json::to_string_pretty(&deployment).expect("serializable");
    dj.push('\n');
    let mut rj = serde_json::to_string_pretty(&report).expect("serializable");
    rj.push('\n');
    (dj, rj, trace)
}

fn run_optimize(args: OptimizeArgs) -> Result<(), Failure> {
    let loaded = formats::load_scenario(&args.scenario).config()?;
    warn_marginal_closed_forms(&loaded.scenario);
    let (ga, pso) = formats::load_opt_config(args.config.as_deref()).config()?;
    let files = ["deployment.json", "report.json", "trace.csv"]
        .map(|n| args.out.join(n));
    ensure_absent(&files, args.force)?;

    let tc = TerrainContext::new(&loaded.terrain, &loaded.scenario.los);
    let started = Instant::now();
    let outcome = optimize(&loaded.scenario, &tc, &ga, &pso, args.seed)
        .map_err(|e| anyhow!("optimization failed: {e}"))
        .runtime()?;
    eprintln!("optimized in {:.1}s", started.elapsed().as_secs_f64());

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))
        .runtime()?;
    let (deployment, report, trace) = outcome_files(&outcome, args.seed);
    for (path, content) in files.iter().zip([deployment, report, trace]) {
        fs::write(path, content)
            .with_context(|| format!("writing {}", path.display()))
            .runtime()?;
    }
    println!(
        "fitness {:.6} p_sum {:.6} e_avg_ex {:.3} feasible {}",
        outcome.report.fitness,
        outcome.report.p_sum,
        outcome.report.avg_excess_energy,
        outcome.report.violations.is_feasible()
    );
    println!("wrote {}", args.out.join("deployment.json").display());
    Ok(())
}

fn resolve_workers(flag: Option<usize>) -> Result<usize, Failure> {
    let n = if let Some(n) = flag {
        n
    } else if let Ok(text) = std::env::var("TERRADEPLOY_WORKERS") {
        text.parse::<usize>()
            .with_context(|| format!("TERRADEPLOY_WORKERS={text:?} is not a worker count"))
            .config()?
    } else {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    };
    if n == 0 {
        return Err(Failure::Config(anyhow!("worker count must be positive")));
    }
    Ok(n)
}

fn run_benchmark(args: BenchmarkArgs) -> Result<(), Failure> {
    let plan = harness::load_plan(&args.plan).config()?;
    warn_marginal_closed_forms(&plan.scenario.scenario);
    let workers = resolve_workers(args.workers)?;
    let files =
        ["runs.csv", "summary.json", "curves.csv"].map(|n| args.out.join(n));
    ensure_absent(&files, args.force)?;

    let cells = plan.schemes.len() * plan.uav_counts.len() * plan.runs;
    eprintln!("running {cells} jobs on {workers} workers");
    let started = Instant::now();
    let records = harness::run_experiment(&plan, workers).runtime()?;
    eprintln!("finished in {:.1}s", started.elapsed().as_secs_f64());

    harness::emit_report(&records, &args.out, true).runtime()?;
    let failed = records.iter().filter(|r| !r.ok()).count();
    println!("wrote {} records to {}", records.len(), args.out.display());
    if failed > 0 {
        println!("{failed} runs failed; see the error column in runs.csv");
    }
    Ok(())
}

fn fit_terrain(args: FitTerrainArgs) -> Result<(), Failure> {
    if args.components == 0 {
        return Err(Failure::Config(anyhow!("--components must be positive")));
    }
    let grid = formats::load_grid(&args.grid).config()?;
    ensure_absent(std::slice::from_ref(&args.out), args.force)?;
    let cfg = FitConfig { restarts: args.restarts, ..FitConfig::default() };
    let started = Instant::now();
    let (model, rmse) = fit_gaussians(&grid, args.components, &cfg, args.seed);
    eprintln!("fitted in {:.1}s", started.elapsed().as_secs_f64());
    debug_assert!((model_rmse(&model, &grid) - rmse).abs() < 1e-9);
    fs::write(&args.out, formats::terrain_to_json(&model))
        .with_context(|| format!("writing {}", args.out.display()))
        .runtime()?;
    println!(
        "fitted {} components to a {}x{} grid, rmse {:.6} m",
        model.components.len(),
        grid.n_rows(),
        grid.n_cols(),
        rmse
    );
    println!("wrote {}", args.out.display());
    Ok(())
}

fn run_report(args: ReportArgs) -> Result<(), Failure> {
    let path = args.in_dir.join("runs.csv");
    let text = fs::read_to_string(&path)
        .with_context(|| format!("reading {}", path.display()))
        .config()?;
    let records = harness::parse_runs_csv(&text)
        .with_context(|| format!("in {}", path.display()))
        .config()?;
    if records.is_empty() {
        return Err(Failure::Config(anyhow!("{} holds no records", path.display())));
    }
    let out = match args.format {
        ReportFormat::Json => harness::summary_json(&records).runtime()?,
        ReportFormat::Csv => harness::curves_csv(&records).runtime()?,
    };
    print!("{out}");
    Ok(())
}
