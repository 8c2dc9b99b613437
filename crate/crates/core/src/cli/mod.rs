//! Command-line experiment runner.
//!
//! `solve` runs one adaptive or uniform study and writes its artifacts to an
//! output directory; `report` merges several `run.json` files.

pub mod svg;
pub mod table;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::adaptive::{adaptive_solve, AdaptConfig, AdaptiveRun, RunRecord};
use crate::error::{Error, Result};
use crate::estimator::Eta5Form;
use crate::problems::{by_name, manufactured, Manufactured, ProblemSpec};
use crate::vi_solver::SolverConfig;
use table::Table;

/// Environment variable capping the linear-algebra thread count.
pub const THREADS_ENV: &str = "MORLEY_OCP_THREADS";
pub const RUN_FORMAT: &str = "morley-ocp-run";
pub const RUN_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "morley-ocp", version, about = "Adaptive Morley-bubble FEM for state- and control-constrained optimal control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one adaptive (or uniform) refinement study.
    Solve(SolveArgs),
    /// Merge run.json files into one table and overlay plot.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemName {
    Ex1,
    Ex2,
    Ex3,
    Ex4,
    Manufactured,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    Inactive,
    StateActive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Eta5Arg {
    Weighted,
    PointValue,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long, value_enum)]
    problem: ProblemName,
    /// Dörfler bulk parameter on squared indicators.
    #[arg(long, default_value_t = 0.3)]
    theta: f64,
    #[arg(long, default_value_t = 50_000)]
    max_dofs: usize,
    #[arg(long, default_value_t = 100)]
    max_iterations: usize,
    /// Refine every element each iteration.
    #[arg(long)]
    uniform: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also write convergence.svg and efficiency.svg.
    #[arg(long)]
    svg: bool,
    /// Seed of the manufactured problem.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "inactive")]
    variant: VariantArg,
    /// Cells per side of the initial criss-cross mesh.
    #[arg(long, default_value_t = 2)]
    initial_subdivisions: usize,
    #[arg(long, value_enum, default_value = "weighted")]
    eta5: Eta5Arg,
    #[arg(long, default_value_t = 1e-12)]
    linear_tolerance: f64,
    #[arg(long, default_value_t = 50)]
    pdas_max_iterations: usize,
    #[arg(long, default_value_t = 1.0)]
    pdas_c: f64,
    #[arg(long, default_value_t = 1e-9)]
    complementarity_tolerance: f64,
    /// Fill the wall_ms column (makes the CSV run-dependent).
    #[arg(long)]
    record_timing: bool,
    /// Series name used by `report`; defaults to problem and mode.
    #[arg(long)]
    label: Option<String>,
    /// Suppress per-iteration progress on stderr.
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// run.json files to merge.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    #[arg(long, default_value = "report")]
    out: PathBuf,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub problem: ProblemName,
    pub seed: Option<u64>,
    pub variant: Option<Manufactured>,
    pub adapt: AdaptConfig,
    pub solver: SolverConfig,
    pub record_timing: bool,
}

impl RunConfig {
    pub fn build_problem(&self) -> Result<ProblemSpec> {
        match self.problem {
            ProblemName::Ex1 => by_name("ex1"),
            ProblemName::Ex2 => by_name("ex2"),
            ProblemName::Ex3 => by_name("ex3"),
            ProblemName::Ex4 => by_name("ex4"),
            ProblemName::Manufactured => Ok(manufactured(self.seed.unwrap_or(0), self.variant.unwrap_or(Manufactured::Inactive)).0),
        }
    }

    pub fn default_label(&self) -> String {
        let name = match self.problem {
            ProblemName::Ex1 => "ex1".to_string(),
            ProblemName::Ex2 => "ex2".to_string(),
            ProblemName::Ex3 => "ex3".to_string(),
            ProblemName::Ex4 => "ex4".to_string(),
            ProblemName::Manufactured => format!("manufactured{}", self.seed.unwrap_or(0)),
        };
        format!("{name}-{}", if self.adapt.uniform { "uniform" } else { "adaptive" })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalMesh {
    pub vertices: usize,
    pub elements: usize,
    pub dofs: usize,
    pub min_angle: f64,
}

/// Contents of `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFile {
    pub format: String,
    pub version: u32,
    pub label: String,
    pub config: RunConfig,
    pub records: Vec<RunRecord>,
    pub final_mesh: FinalMesh,
}

impl RunFile {
    pub fn table(&self) -> Table {
        Table::from_records(&self.records, self.config.record_timing)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let schema = |message: String| Error::Schema {
            path: path.display().to_string(),
            message,
        };
        let text = fs::read_to_string(path).map_err(|e| schema(e.to_string()))?;
        let run: RunFile = serde_json::from_str(&text).map_err(|e| schema(e.to_string()))?;
        if run.format != RUN_FORMAT || run.version != RUN_VERSION {
            return Err(schema(format!("unsupported format {} v{}", run.format, run.version)));
        }
        Ok(run)
    }
}

/// Applies `MORLEY_OCP_THREADS`: unset, 0 or 1 run sequentially.
pub fn configure_threads() {
    let n = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()).unwrap_or(0);
    if n <= 1 {
        faer::set_global_parallelism(faer::Par::Seq);
    } else {
        faer::set_global_parallelism(faer::Par::rayon(n));
    }
}

/// Runs the study described by `config`, calling `observer` per iteration.
pub fn execute(config: &RunConfig, observer: impl FnMut(&RunRecord)) -> Result<AdaptiveRun> {
    let problem = config.build_problem()?;
    adaptive_solve(&problem, &config.adapt, &config.solver, observer)
}

/// Writes every artifact of a finished run into `out`.
pub fn write_artifacts(out: &Path, label: &str, config: &RunConfig, run: &AdaptiveRun, svg: bool) -> Result<()> {
    fs::create_dir_all(out)?;
    let file = RunFile {
        format: RUN_FORMAT.into(),
        version: RUN_VERSION,
        label: label.into(),
        config: config.clone(),
        records: run.records.clone(),
        final_mesh: FinalMesh {
            vertices: run.space.mesh.vertices.len(),
            elements: run.space.mesh.num_elements(),
            dofs: run.space.num_dofs(),
            min_angle: run.space.mesh.min_angle(),
        },
    };
    let csv = file.table().to_csv();
    fs::write(out.join("convergence.csv"), &csv)?;
    fs::write(out.join("run.json"), serde_json::to_string_pretty(&file)? + "\n")?;
    fs::write(out.join("mesh_final.txt"), run.space.mesh.to_text())?;
    fs::write(out.join("indicators_final.csv"), run.estimator.to_csv())?;
    if svg {
        // plots are derived from the CSV text alone
        let table = Table::parse(&csv)?;
        fs::write(out.join("convergence.svg"), svg::render(&svg::convergence_plot(&table, label)))?;
        fs::write(out.join("efficiency.svg"), svg::render(&svg::efficiency_plot(&table, label)))?;
    }
    Ok(())
}

/// Merged table: a leading `run` column, rows ordered by DOFs then label.
pub fn merge_tables(runs: &[(String, Table)]) -> Table {
    let mut header = vec!["run".to_string()];
    header.extend(table::HEADER.iter().map(|s| s.to_string()));
    let mut rows: Vec<(usize, usize, Vec<String>)> = Vec::new();
    for (k, (label, t)) in runs.iter().enumerate() {
        let dofs = t.column("dofs");
        for row in &t.rows {
            let d = dofs.and_then(|c| row.get(c)).and_then(|s| s.parse().ok()).unwrap_or(0);
            let mut r = vec![label.clone()];
            r.extend(row.iter().cloned());
            rows.push((d, k, r));
        }
    }
    rows.sort_by_key(|(d, k, _)| (*d, *k));
    Table {
        header,
        rows: rows.into_iter().map(|(_, _, r)| r).collect(),
    }
}

fn solve_command(args: SolveArgs) -> Result<i32> {
    let config = RunConfig {
        problem: args.problem,
        seed: (args.problem == ProblemName::Manufactured).then_some(args.seed),
        variant: (args.problem == ProblemName::Manufactured).then_some(match args.variant {
            VariantArg::Inactive => Manufactured::Inactive,
            VariantArg::StateActive => Manufactured::StateActive,
        }),
        adapt: AdaptConfig {
            theta: args.theta,
            max_dofs: args.max_dofs,
            max_iterations: args.max_iterations,
            uniform: args.uniform,
            initial_subdivisions: args.initial_subdivisions,
            eta5_form: match args.eta5 {
                Eta5Arg::Weighted => Eta5Form::Weighted,
                Eta5Arg::PointValue => Eta5Form::PointValue,
            },
        },
        solver: SolverConfig {
            linear_tolerance: args.linear_tolerance,
            pdas_max_iterations: args.pdas_max_iterations,
            pdas_c: args.pdas_c,
            complementarity_tolerance: args.complementarity_tolerance,
            ..SolverConfig::default()
        },
        record_timing: args.record_timing,
    };
    let invalid = config
        .adapt
        .validate()
        .and_then(|_| config.solver.validate())
        .and_then(|_| config.build_problem()?.validate());
    if let Err(e) = invalid {
        eprintln!("error: {e}");
        return Ok(EXIT_USAGE);
    }
    let label = args.label.unwrap_or_else(|| config.default_label());
    let quiet = args.quiet;
    let run = match execute(&config, |r| {
        if !quiet {
            let err = r.error.map_or("-".to_string(), |e| format!("{:.4e}", e.energy_error));
            eprintln!("iter {:3}  dofs {:7}  eta {:.4e}  error {err}  mu {:.4e}", r.iteration, r.dofs, r.eta, r.mu);
        }
    }) {
        Ok(run) => run,
        Err(e) => {
            eprintln!("error: solver failure: {e}");
            return Ok(EXIT_SOLVER);
        }
    };
    write_artifacts(&args.out, &label, &config, &run, args.svg)?;
    if !quiet {
        eprintln!("wrote {}", args.out.display());
    }
    Ok(EXIT_OK)
}

fn report_command(args: ReportArgs) -> Result<i32> {
    let mut runs: Vec<(String, Table)> = Vec::new();
    for path in &args.runs {
        let run = match RunFile::read(path) {
            Ok(run) => run,
            Err(e) => {
                eprintln!("error: {e}");
                return Ok(EXIT_USAGE);
            }
        };
        let mut label = run.label.clone();
        let mut k = 2;
        while runs.iter().any(|(l, _)| *l == label) {
            label = format!("{}#{k}", run.label);
            k += 1;
        }
        let table = run.table();
        runs.push((label, table));
    }
    fs::create_dir_all(&args.out)?;
    let merged = merge_tables(&runs);
    fs::write(args.out.join("report.csv"), merged.to_csv())?;
    fs::write(args.out.join("report.svg"), svg::render(&svg::overlay_plot(&runs)))?;
    Ok(EXIT_OK)
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    configure_threads();
    let result = match cli.command {
        Command::Solve(a) => solve_command(a),
        Command::Report(a) => report_command(a),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        EXIT_IO
    })
}
