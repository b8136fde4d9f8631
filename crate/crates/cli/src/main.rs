use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rsrp::discretization::Discretization;
use rsrp::flow::{export_lp, FlowModel, DEFAULT_BACKEND};
use rsrp::gen::{generate, DegradationProfile, GenConfig};
use rsrp::graph::{build_ceeg, build_seeg, export_dot, DEFAULT_CEEG_CAP};
use rsrp::health::{HealthFamily, RegionSet};
use rsrp::instance::{load_instance, load_solution, save_instance, save_solution};
use rsrp::refine::{run_with, IterationRecord, RefineConfig, RefineMode, RefinementReport, RunStatus};

const EXIT_INFEASIBLE: u8 = 2;
const EXIT_NO_RESULT: u8 = 3;

/// Rolling stock rotation planning with predictive maintenance.
#[derive(Parser)]
#[command(name = "rsrp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Iteratively refine and solve; writes solution.json and report.json.
    Solve {
        instance: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, env = "RSRP_MODE", value_enum, default_value_t = Mode::Dual)]
        mode: Mode,
    },
    /// Compute a sequence of LP lower bounds; writes report.json.
    Lowerbound {
        instance: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Build one event-graph and write graph.dot and graph_stats.json without solving.
    Graph {
        instance: PathBuf,
        /// Refinement level of the grid.
        #[arg(long, default_value_t = 0)]
        level: u32,
        #[arg(long, env = "RSRP_K", default_value_t = 2)]
        k: u32,
        /// Use every exactly reachable parameter instead of a grid.
        #[arg(long)]
        ceeg: bool,
        /// Also write the integer program as model.lp.
        #[arg(long)]
        lp: bool,
        #[arg(long, env = "RSRP_OUT", default_value = ".")]
        out: PathBuf,
    },
    /// Check an instance file and optionally a solution against it.
    Validate {
        instance: PathBuf,
        #[arg(long)]
        solution: Option<PathBuf>,
    },
    /// Write a random valid instance.
    Gen {
        #[arg(long, env = "RSRP_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Family::Normal)]
        family: Family,
        #[arg(long, default_value_t = 3)]
        locations: usize,
        #[arg(long, default_value_t = 5)]
        trips: usize,
        #[arg(long, default_value_t = 2)]
        vehicles: usize,
        #[arg(long)]
        no_maintenance: bool,
        /// Put all reachable parameters on the grid of this level.
        #[arg(long)]
        grid_level: Option<u32>,
        #[arg(long, env = "RSRP_K", default_value_t = 2)]
        k: u32,
        /// Output file; standard output when omitted.
        #[arg(long, env = "RSRP_OUT")]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, env = "RSRP_K", default_value_t = 2)]
    k: u32,
    #[arg(long = "max-iter", env = "RSRP_MAX_ITER", default_value_t = 6)]
    max_iter: u32,
    /// Seconds.
    #[arg(long = "time-limit", env = "RSRP_TIME_LIMIT", default_value_t = 3600.0)]
    time_limit: f64,
    #[arg(long, env = "RSRP_SOLVER", default_value = DEFAULT_BACKEND)]
    solver: String,
    #[arg(long, env = "RSRP_SEED", default_value_t = 0)]
    seed: u64,
    /// Level of the first grid.
    #[arg(long = "start-level", env = "RSRP_START_LEVEL", default_value_t = 0)]
    start_level: u32,
    /// Output directory.
    #[arg(long, env = "RSRP_OUT", default_value = ".")]
    out: PathBuf,
    /// Print the report JSON on standard output.
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Dual,
    Lp,
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Normal,
    Weibull,
    Gamma,
}

impl From<Family> for HealthFamily {
    fn from(f: Family) -> Self {
        match f {
            Family::Normal => HealthFamily::Normal,
            Family::Weibull => HealthFamily::Weibull,
            Family::Gamma => HealthFamily::Gamma,
        }
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.9}"))
}

fn progress(r: &IterationRecord) {
    eprintln!(
        "level {} |D|={} nodes={} arcs={} status={:?} lb={} ub_iter={} ub={} clamped={} time={:.3}s",
        r.level,
        r.states,
        r.nodes,
        r.arcs,
        r.solve_status,
        fmt_opt(r.lb),
        fmt_opt(r.ub_iteration),
        fmt_opt(r.ub),
        r.clamped,
        r.wall_time
    );
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn refine(instance_path: &Path, run: &RunArgs, mode: RefineMode) -> Result<(rsrp::instance::Instance, RefinementReport)> {
    let instance = load_instance(instance_path)?;
    let config = RefineConfig {
        k: run.k,
        start_level: run.start_level,
        max_iterations: run.max_iter,
        time_limit: run.time_limit,
        mode,
        solver: run.solver.clone(),
        seed: run.seed,
        ..RefineConfig::default()
    };
    let report = run_with(&instance, &config, progress)?;
    create_dir(&run.out)?;
    let path = run.out.join("report.json");
    fs::write(&path, report.to_json()? + "\n").with_context(|| format!("cannot write {}", path.display()))?;
    if run.json {
        println!("{}", report.to_json()?);
    }
    Ok((instance, report))
}

fn solve(instance_path: &Path, run: &RunArgs, mode: Mode) -> Result<u8> {
    let mode = match mode {
        Mode::Dual => RefineMode::Dual,
        Mode::Lp => RefineMode::LpLb,
    };
    let (instance, report) = refine(instance_path, run, mode)?;
    println!(
        "status {:?} lb {} ub {} gap {}",
        report.status,
        fmt_opt(report.lb),
        fmt_opt(report.ub),
        fmt_opt(report.gap())
    );
    if let Some(plan) = &report.best_plan {
        save_solution(plan, &instance, run.out.join("solution.json"))?;
    }
    Ok(match report.status {
        RunStatus::Infeasible => EXIT_INFEASIBLE,
        _ if mode == RefineMode::Dual && report.best_plan.is_none() => EXIT_NO_RESULT,
        _ if report.lb.is_none() => EXIT_NO_RESULT,
        _ => 0,
    })
}

fn lowerbound(instance_path: &Path, run: &RunArgs) -> Result<u8> {
    let (_, report) = refine(instance_path, run, RefineMode::LpLb)?;
    for r in &report.iterations {
        println!("level {} lb {}", r.level, fmt_opt(r.lb));
    }
    println!("status {:?} lb {}", report.status, fmt_opt(report.lb));
    Ok(match report.status {
        RunStatus::Infeasible => EXIT_INFEASIBLE,
        _ if report.lb.is_none() => EXIT_NO_RESULT,
        _ => 0,
    })
}

fn graph(instance_path: &Path, level: u32, k: u32, ceeg: bool, lp: bool, out: &Path) -> Result<u8> {
    let instance = load_instance(instance_path)?;
    let seeg = if ceeg {
        build_ceeg(&instance, DEFAULT_CEEG_CAP)?
    } else {
        let regions = RegionSet::for_instance(&instance);
        let grid = Discretization::for_regions(level, k, &instance.parameter_space, &regions)?;
        build_seeg(&instance, &grid)?
    };
    create_dir(out)?;
    export_dot(&seeg, &instance, out.join("graph.dot"))?;
    let stats = serde_json::to_string_pretty(&seeg.stats)?;
    fs::write(out.join("graph_stats.json"), stats.clone() + "\n")?;
    if lp {
        export_lp(&FlowModel::build(&seeg, &instance), false, out.join("model.lp"))?;
    }
    println!("{stats}");
    Ok(0)
}

fn validate(instance_path: &Path, solution: Option<&Path>) -> Result<u8> {
    let instance = load_instance(instance_path)?;
    println!(
        "instance ok: {} locations, {} trips, {} vehicles",
        instance.n_locations(),
        instance.trips.len(),
        instance.vehicles.len()
    );
    if let Some(path) = solution {
        let plan = load_solution(path)?;
        plan.validate(&instance)?;
        println!("solution ok: {} rotations, objective {:.9}", plan.rotations.len(), plan.objective);
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve { instance, run, mode } => solve(instance, run, *mode),
        Command::Lowerbound { instance, run } => lowerbound(instance, run),
        Command::Graph {
            instance,
            level,
            k,
            ceeg,
            lp,
            out,
        } => graph(instance, *level, *k, *ceeg, *lp, out),
        Command::Validate { instance, solution } => validate(instance, solution.as_deref()),
        Command::Gen {
            seed,
            family,
            locations,
            trips,
            vehicles,
            no_maintenance,
            grid_level,
            k,
            out,
        } => {
            let config = GenConfig {
                family: (*family).into(),
                locations: *locations,
                trips: *trips,
                vehicles: *vehicles,
                maintenance: !no_maintenance,
                profile: grid_level.map_or(DegradationProfile::Random, |level| DegradationProfile::GridAligned { level }),
                k: *k,
                seed: *seed,
            };
            generate(&config).and_then(|inst| match out {
                Some(path) => save_instance(&inst, path).map(|_| 0),
                None => inst.to_json().map(|s| {
                    println!("{s}");
                    0
                }),
            })
            .map_err(Into::into)
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
