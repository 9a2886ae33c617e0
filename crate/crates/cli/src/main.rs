use std::path::PathBuf;
use std::process::ExitCode;

use ampforge::io::{self, IoError, Task};
use clap::{Parser, ValueEnum};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TaskArg {
    Feasibility,
    Synthesize,
    Classify,
    Theorem,
    GainProbability,
    Homodyne,
    Channel,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Task {
        match t {
            TaskArg::Feasibility => Task::Feasibility,
            TaskArg::Synthesize => Task::Synthesize,
            TaskArg::Classify => Task::Classify,
            TaskArg::Theorem => Task::Theorem,
            TaskArg::GainProbability => Task::GainProbability,
            TaskArg::Homodyne => Task::Homodyne,
            TaskArg::Channel => Task::Channel,
        }
    }
}

/// Amplification feasibility, Kraus synthesis and phase-space analysis.
///
/// Infeasible verdicts are results: the exit code is 0 whenever the task
/// ran. Errors print a JSON diagnostic on stderr and exit with 1.
#[derive(Debug, Parser)]
#[command(name = "ampforge", version)]
struct Cli {
    /// Task to run; must match the `task` field of the problem file.
    task: TaskArg,
    /// Problem file (JSON).
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    /// Report destination; standard output when absent.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Write the task's table as CSV.
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
    /// Overrides `params.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `params.tol`.
    #[arg(long)]
    tol: Option<f64>,
}

fn run(cli: &Cli) -> Result<(), IoError> {
    let text = std::fs::read_to_string(&cli.input)
        .map_err(|e| IoError::File(format!("cannot read {}: {e}", cli.input.display())))?;
    let mut problem = io::parse_problem(&text)?;
    let task = Task::from(cli.task);
    if problem.task != task {
        return Err(IoError::Schema {
            path: "task".into(),
            expected: format!(
                "{} (as given on the command line), found {}",
                task.name(),
                problem.task.name()
            ),
        });
    }
    if let Some(seed) = cli.seed {
        problem.params.seed = seed;
    }
    if let Some(tol) = cli.tol {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(IoError::Schema {
                path: "--tol".into(),
                expected: "positive number".into(),
            });
        }
        problem.params.tol = tol;
    }
    let report = io::run_task(&problem)?;
    if let Some(path) = &cli.csv {
        let table = report.to_csv()?;
        std::fs::write(path, table)
            .map_err(|e| IoError::File(format!("cannot write {}: {e}", path.display())))?;
    }
    let json = report.to_json();
    match &cli.out {
        Some(path) => std::fs::write(path, json)
            .map_err(|e| IoError::File(format!("cannot write {}: {e}", path.display())))?,
        None => print!("{json}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
