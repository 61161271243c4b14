use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use mttsp::generate::{generate_instance, GeneratorParams, GridSpec};
use mttsp::instance::parse_instance;
use mttsp::oracle::oracle_solve;
use mttsp::orchestrator::{solve_with_report, validate_solution, Solution, SolveOptions};
use mttsp::solution_file::SolutionFile;
use serde::Serialize;
use serde_json::json;

#[derive(Parser)]
#[command(name = "mttsp", version, about = "Moving-target TSP with obstacles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an instance and write the solution file.
    Solve {
        instance: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        w: f64,
        /// Wall-clock limit in seconds.
        #[arg(long)]
        time_limit: Option<f64>,
        #[arg(long)]
        max_expansions: Option<u64>,
        /// Print every focal-search pop as a JSON line.
        #[arg(long)]
        trace: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Write a random instance.
    Generate {
        #[command(flatten)]
        params: GenerateArgs,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Check a solution against its instance; exits 1 on any violation, 2 on other errors.
    Validate { instance: PathBuf, solution: PathBuf },
    /// Brute-force optimum by enumerating every tour.
    Oracle {
        instance: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        space_res: f64,
        #[arg(long, default_value_t = 1e-3)]
        time_res: f64,
        /// Also print the per-tour table.
        #[arg(long)]
        tours: bool,
    },
    /// Solve every `*.json` instance in a directory and write a CSV summary.
    Bench {
        dir: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        w: f64,
        #[arg(long)]
        time_limit: Option<f64>,
        /// Instances solved concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    targets: usize,
    #[arg(long, default_value_t = 2)]
    windows: usize,
    /// Total window length per target, in seconds.
    #[arg(long, default_value_t = 6.0)]
    sum_window_len: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [10, 10, 10])]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 1.0)]
    cell_size: f64,
    #[arg(long, default_value_t = 1)]
    blocks: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [4, 4, 4])]
    max_block: Vec<usize>,
    #[arg(long, default_value_t = 1.0)]
    v_max: f64,
    #[arg(long, default_value_t = 0.5)]
    speed_frac: f64,
    #[arg(long, default_value_t = 10.0)]
    max_gap: f64,
}

impl GenerateArgs {
    fn params(&self) -> GeneratorParams {
        GeneratorParams {
            seed: self.seed,
            n_targets: self.targets,
            windows_per_target: self.windows,
            sum_window_len: self.sum_window_len,
            grid: GridSpec {
                dims: [self.dims[0], self.dims[1], self.dims[2]],
                cell_size: self.cell_size,
                obstacle_blocks: self.blocks,
                max_block: [self.max_block[0], self.max_block[1], self.max_block[2]],
            },
            v_max: self.v_max,
            speed_frac: self.speed_frac,
            max_gap: self.max_gap,
        }
    }
}

/// A failure reported as one JSON object on stderr.
struct Failure {
    kind: &'static str,
    message: String,
    details: serde_json::Value,
}

fn fail(kind: &'static str, message: impl ToString) -> Failure {
    Failure { kind, message: message.to_string(), details: serde_json::Value::Null }
}

type Outcome = Result<(), Failure>;

fn write(path: &Path, text: &str) -> Outcome {
    fs::write(path, text).map_err(|e| fail("io", format!("{}: {e}", path.display())))
}

fn limit(seconds: Option<f64>) -> Result<Option<Duration>, Failure> {
    seconds
        .map(|s| Duration::try_from_secs_f64(s).map_err(|e| fail("usage", format!("--time-limit: {e}"))))
        .transpose()
}

/// Finite times as numbers; infinities as the strings the solution file uses.
fn time(t: f64) -> serde_json::Value {
    if t.is_finite() {
        json!(t)
    } else {
        json!(if t > 0.0 { "inf" } else { "-inf" })
    }
}

fn print_json(value: &impl Serialize) {
    println!("{}", serde_json::to_string(value).expect("values serialize"));
}

fn solve(instance: &Path, opts: SolveOptions, output: &Path) -> Outcome {
    let inst = parse_instance(instance).map_err(|e| fail("instance", e))?;
    let report = solve_with_report(&inst, &opts).map_err(|e| fail("solve", e))?;
    for e in &report.trace {
        print_json(&json!({"f": e.f, "g": e.g, "unv": e.unv, "node": e.node.0, "f_min": e.f_min}));
    }
    let file = SolutionFile::from(&report.solution);
    write(output, &file.to_json())?;
    print_json(&json!({"status": file.status, "t_f": time(file.t_f), "lb": time(file.lb)}));
    Ok(())
}

fn validate(instance: &Path, solution: &Path) -> Result<ExitCode, Failure> {
    let inst = parse_instance(instance).map_err(|e| fail("instance", e))?;
    let text = fs::read_to_string(solution).map_err(|e| fail("io", format!("{}: {e}", solution.display())))?;
    let file = SolutionFile::from_json(&text).map_err(|e| fail("solution", e))?;
    let violations = validate_solution(&Solution::from(&file), &inst);
    if violations.is_empty() {
        print_json(&json!({"valid": true}));
        return Ok(ExitCode::SUCCESS);
    }
    let names: Vec<String> = violations.iter().map(ToString::to_string).collect();
    Err(Failure {
        kind: "invalid_solution",
        message: format!("{} violation(s)", names.len()),
        details: json!({ "violations": names }),
    })
}

fn oracle(instance: &Path, space_res: f64, time_res: f64, tours: bool) -> Outcome {
    let inst = parse_instance(instance).map_err(|e| fail("instance", e))?;
    let r = oracle_solve(&inst, space_res, time_res).map_err(|e| fail("oracle", e))?;
    let mut out = json!({"t_f": time(r.t_f), "step": r.step});
    if tours {
        out["tours"] = r
            .tours
            .iter()
            .map(|t| json!({"windows": t.windows.iter().map(|w| w.0).collect::<Vec<_>>(), "t_f": time(t.t_f)}))
            .collect();
    }
    print_json(&out);
    Ok(())
}

#[derive(Serialize)]
struct BenchRow {
    instance: String,
    status: String,
    t_f: f64,
    lb: f64,
    w: f64,
    wall_ms: f64,
    tours_emitted: usize,
    fmc_calls: usize,
    paths_expanded: u64,
}

fn bench_one(path: &Path, opts: &SolveOptions) -> Result<BenchRow, Failure> {
    let inst = parse_instance(path).map_err(|e| fail("instance", format!("{}: {e}", path.display())))?;
    let s = solve_with_report(&inst, opts).map_err(|e| fail("solve", format!("{}: {e}", path.display())))?.solution;
    Ok(BenchRow {
        instance: path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned()),
        status: serde_json::to_value(s.status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
        t_f: s.t_f,
        lb: s.lb_at_termination,
        w: s.w,
        wall_ms: s.stats.wall_ms,
        tours_emitted: s.stats.tours_emitted,
        fmc_calls: s.stats.fmc_calls,
        paths_expanded: s.stats.paths_expanded,
    })
}

fn bench(dir: &Path, opts: SolveOptions, jobs: usize, output: &Path) -> Outcome {
    let entries = fs::read_dir(dir).map_err(|e| fail("io", format!("{}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> =
        entries.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.extension().is_some_and(|x| x == "json")).collect();
    paths.sort();
    let chunk = paths.len().div_ceil(jobs.max(1)).max(1);
    let mut rows: Vec<Option<Result<BenchRow, Failure>>> = (0..paths.len()).map(|_| None).collect();
    // One solver state per instance; threads share nothing mutable.
    std::thread::scope(|scope| {
        for (chunk_paths, chunk_rows) in paths.chunks(chunk).zip(rows.chunks_mut(chunk)) {
            let opts = &opts;
            scope.spawn(move || {
                for (p, slot) in chunk_paths.iter().zip(chunk_rows) {
                    *slot = Some(bench_one(p, opts));
                }
            });
        }
    });
    let mut writer = csv::Writer::from_path(output).map_err(|e| fail("io", e))?;
    for row in rows.into_iter().flatten() {
        writer.serialize(row?).map_err(|e| fail("io", e))?;
    }
    writer.flush().map_err(|e| fail("io", e))?;
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode, Failure> {
    match cli.command {
        Command::Solve { instance, w, time_limit, max_expansions, trace, output } => {
            let opts = SolveOptions { w, max_expansions, time_limit: limit(time_limit)?, trace, audit: false };
            solve(&instance, opts, &output)?;
        }
        Command::Generate { params, output } => {
            if params.dims.len() != 3 || params.max_block.len() != 3 {
                return Err(fail("usage", "--dims and --max-block take three comma-separated values"));
            }
            let file = generate_instance(&params.params()).map_err(|e| fail("generate", e))?;
            write(&output, &file.to_json())?;
        }
        Command::Validate { instance, solution } => return validate(&instance, &solution),
        Command::Oracle { instance, space_res, time_res, tours } => oracle(&instance, space_res, time_res, tours)?,
        Command::Bench { dir, w, time_limit, jobs, output } => {
            let opts = SolveOptions { w, time_limit: limit(time_limit)?, ..SolveOptions::default() };
            bench(&dir, opts, jobs, &output)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(f) => {
            let mut body = json!({"error": f.kind, "message": f.message});
            if !f.details.is_null() {
                body["details"] = f.details;
            }
            eprintln!("{body}");
            ExitCode::from(if f.kind == "invalid_solution" { 1 } else { 2 })
        }
    }
}
