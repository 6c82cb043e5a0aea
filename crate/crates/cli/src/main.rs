use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cashband::{
    run_sweep, simulate_cost, solve_band, verify, write_csv, BandSolution, Error, ModelParams,
    Overlay, SimConfig, SolverConfig, SweepParam, SweepSpec, Tolerances, DEFAULT_GRID_POINTS,
};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

/// Control band solver for cash reserves under drift ambiguity.
#[derive(Parser)]
#[command(name = "cashband", version)]
struct Cli {
    /// Worker threads for simulations and sweeps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the optimal band and write it as JSON.
    Solve {
        #[command(flatten)]
        io: Io,
        /// Override the solver tolerance.
        #[arg(long)]
        tol: Option<f64>,
        /// Also write J, J' and J'' on a grid around the band as CSV.
        #[arg(long)]
        grid_csv: Option<PathBuf>,
    },
    /// Check a solution against the optimality conditions.
    Verify {
        /// Optional config; its model section must match the solution.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        solution: PathBuf,
        /// Write the report as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Verification tolerance for every condition.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Monte Carlo estimate of the cost of the band from `x0`.
    Simulate {
        #[command(flatten)]
        io: Io,
        /// Use this solution instead of solving the config's model.
        #[arg(long)]
        solution: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Solve along a parameter grid and write the bands as CSV.
    Sweep {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        tol: Option<f64>,
    },
}

#[derive(Args)]
struct Io {
    #[arg(long)]
    config: PathBuf,
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    model: Option<ModelParams>,
    solver: Option<SolverConfig>,
    simulation: Option<SimConfig>,
    sweep: Option<SweepSection>,
}

/// The sweep spec without its base, which is the `model` section.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSection {
    axis: SweepParam,
    grid: Grid,
    #[serde(default)]
    overlays: Vec<Overlay>,
    #[serde(default)]
    probes: Option<Vec<f64>>,
    #[serde(default = "yes")]
    warm_start: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Grid {
    Values(Vec<f64>),
    Linspace(Linspace),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Linspace {
    from: f64,
    to: f64,
    points: usize,
}

#[derive(Serialize)]
struct SimulationReport {
    x0: f64,
    estimate: cashband::SimEstimate,
    analytic: f64,
    z_score: f64,
}

enum Failure {
    Usage(String),
    Model(Error),
    Verification,
    MonteCarlo,
    PartialSweep,
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Verification | Failure::MonteCarlo => 1,
            Failure::PartialSweep => 5,
            Failure::Model(e) => match e {
                Error::Infeasible(_) => 3,
                Error::InvalidParameter { .. }
                | Error::InvalidConfig(_)
                | Error::UnsupportedDiffusion(_)
                | Error::IntervalExcludesZero { .. } => 2,
                _ => 4,
            },
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Model(e)
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot set up {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Solve { io, tol, grid_csv } => cmd_solve(&io, tol, grid_csv.as_deref()),
        Command::Verify {
            config,
            solution,
            out,
            tol,
        } => cmd_verify(config.as_deref(), &solution, out.as_deref(), tol),
        Command::Simulate {
            io,
            solution,
            seed,
            tol,
        } => cmd_simulate(&io, solution.as_deref(), seed, tol),
        Command::Sweep { io, tol } => cmd_sweep(&io, tol),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(msg) => eprintln!("error: {msg}"),
                Failure::Model(e) => eprintln!("error: {e}"),
                Failure::Verification => eprintln!("verification failed"),
                Failure::MonteCarlo => eprintln!("estimate is more than 3 standard errors off"),
                Failure::PartialSweep => eprintln!("some sweep rows did not converge"),
            }
            ExitCode::from(f.code())
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))
}

fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    serde_json::from_str(&read(path)?)
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn load_solution(path: &Path) -> Result<BandSolution, Failure> {
    serde_json::from_str(&read(path)?)
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn section<T>(value: Option<T>, name: &str) -> Result<T, Failure> {
    value.ok_or_else(|| Failure::Usage(format!("config has no `{name}` section")))
}

fn solver_config(cfg: &RunConfig, tol: Option<f64>) -> Result<SolverConfig, Failure> {
    let mut solver = cfg.solver.unwrap_or_default();
    if let Some(t) = tol {
        solver.newton_tol = t;
    }
    solver.validate()?;
    Ok(solver)
}

/// Writes to `path`, or stdout when there is none.
fn emit(path: Option<&Path>, write: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Outcome {
    let result = match path {
        Some(p) => fs::File::create(p).and_then(|f| {
            let mut w = io::BufWriter::new(f);
            write(&mut w)?;
            w.flush()
        }),
        None => write(&mut io::stdout().lock()),
    };
    result.map_err(|e| Failure::Usage(format!("cannot write output: {e}")))
}

fn emit_json<T: Serialize>(path: Option<&Path>, value: &T) -> Outcome {
    emit(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)
    })
}

fn cmd_solve(io: &Io, tol: Option<f64>, grid_csv: Option<&Path>) -> Outcome {
    let cfg = load_config(&io.config)?;
    let params = section(cfg.model, "model")?;
    let solution = solve_band(&params, &solver_config(&cfg, tol)?)?;
    emit_json(io.out.as_deref(), &solution)?;
    if let Some(path) = grid_csv {
        let [l, _, u] = solution.barriers();
        let (lo, hi) = (l - 0.25 * (u - l), u + 0.25 * (u - l));
        emit(Some(path), |w| {
            writeln!(w, "x,J,dJ,d2J")?;
            for k in 0..=400 {
                let x = lo + (hi - lo) * k as f64 / 400.0;
                let d = solution.evaluate(x);
                writeln!(w, "{x:.8e},{:.8e},{:.8e},{:.8e}", d.value, d.d1, d.d2)?;
            }
            Ok(())
        })?;
    }
    Ok(())
}

fn cmd_verify(
    config: Option<&Path>,
    solution: &Path,
    out: Option<&Path>,
    tol: Option<f64>,
) -> Outcome {
    let s = load_solution(solution)?;
    if let Some(path) = config {
        if let Some(model) = load_config(path)?.model {
            if &model != s.params() {
                return Err(Failure::Usage(format!(
                    "the model in {} differs from the solution's parameters",
                    path.display()
                )));
            }
        }
    }
    let tolerances = tol.map(Tolerances::uniform).unwrap_or_default();
    let report = verify(&s, DEFAULT_GRID_POINTS, &tolerances);
    print!("{}", report.to_text());
    if out.is_some() {
        emit_json(out, &report)?;
    }
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Verification)
    }
}

fn cmd_simulate(io: &Io, solution: Option<&Path>, seed: Option<u64>, tol: Option<f64>) -> Outcome {
    let cfg = load_config(&io.config)?;
    let mut sim = section(cfg.simulation, "simulation")?;
    if let Some(seed) = seed {
        sim.seed = seed;
    }
    let s = match solution {
        Some(path) => load_solution(path)?,
        None => solve_band(&section(cfg.model, "model")?, &solver_config(&cfg, tol)?)?,
    };
    let estimate = simulate_cost(&s, &sim)?;
    let analytic = s.evaluate(sim.x0).value;
    let z = estimate.z_score(analytic);
    println!(
        "estimate   {:.6} ± {:.6}",
        estimate.mean_cost, estimate.std_error
    );
    println!("J*(x0)     {analytic:.6}  (x0 = {})", sim.x0);
    println!("z          {z:+.3}");
    if io.out.is_some() {
        let report = SimulationReport {
            x0: sim.x0,
            estimate,
            analytic,
            z_score: z,
        };
        emit_json(io.out.as_deref(), &report)?;
    }
    if z.abs() <= 3.0 {
        Ok(())
    } else {
        Err(Failure::MonteCarlo)
    }
}

fn cmd_sweep(io: &Io, tol: Option<f64>) -> Outcome {
    let cfg = load_config(&io.config)?;
    let solver = solver_config(&cfg, tol)?;
    let base = section(cfg.model, "model")?;
    let sec = section(cfg.sweep, "sweep")?;
    let grid = match sec.grid {
        Grid::Values(v) => v,
        Grid::Linspace(l) => SweepSpec::linspace(l.from, l.to, l.points),
    };
    let spec = SweepSpec {
        base,
        axis: sec.axis,
        grid,
        overlays: sec.overlays,
        probes: sec.probes,
        warm_start: sec.warm_start,
    };
    let rows = run_sweep(&spec, &solver)?;
    for r in &rows {
        let overlay = r
            .overlay
            .map(|o| format!(" {}={}", o.param, o.value))
            .unwrap_or_default();
        match &r.error {
            None => eprintln!(
                "{}={}{overlay}: x_L={:.6} x*={:.6} x_U={:.6}",
                spec.axis, r.axis_value, r.x_lower, r.x_star, r.x_upper
            ),
            Some(e) => eprintln!("{}={}{overlay}: failed: {e}", spec.axis, r.axis_value),
        }
    }
    emit(io.out.as_deref(), |w| write_csv(&spec, &rows, w))?;
    if rows.iter().all(|r| r.converged) {
        Ok(())
    } else {
        Err(Failure::PartialSweep)
    }
}
