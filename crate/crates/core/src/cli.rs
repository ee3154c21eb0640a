//! Command-line front end. [`dispatch`] returns the process exit code: 0 on success, 1 on
//! usage errors, 2 when the command itself fails.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

use crate::config::{read_config_file, Profile, RunConfig};
use crate::curriculum::{
    self, eval_csv, evaluate, iteration_count, iteration_dir, load_grammar, load_library, load_run, run_curriculum,
    with_jobs, EvalSeeds, SolvedFile,
};
use crate::data::{collect_oracle_rollouts, export_prompts, rollouts_from_json, rollouts_to_json, slice, TaskSet};
use crate::dsl::parse_program;
use crate::envs::EnvTag;
use crate::error::Error;
use crate::explain::{write_bundle, Format};
use crate::library::library_report;

#[derive(Parser, Debug)]
#[command(name = "gridsynth", version, about = "Program synthesis with library learning for imitating grid-world agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Record oracle episodes, optionally sliced into tasks of one length.
    Collect(CollectArgs),
    /// Run the curriculum loop.
    ///
    /// The sequence length starts at 3 and grows by one whenever at least 10% of the
    /// tasks are imitated. Two failed checks in a row at the same length stop the run.
    Run(RunArgs),
    /// Accuracy per sequence length with a run's final grammar, written as CSV.
    Eval(EvalArgs),
    /// Print the learned library with expansions and a function count.
    Library(LibraryArgs),
    /// Render a step-by-step explanation bundle for one solved task.
    Explain(ExplainArgs),
    /// Write text prompts (one per task) for external synthesizers.
    ExportPrompts(ExportArgs),
    /// List the environments with their actions, objects and program type.
    Envs,
}

#[derive(Args, Debug)]
struct CollectArgs {
    #[arg(long, value_parser = parse_env)]
    env: EnvTag,
    #[arg(long, default_value_t = 20)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Truncate episodes to this many steps.
    #[arg(long)]
    max_len: Option<usize>,
    /// Slice the episodes into tasks of this length and write a task set instead.
    #[arg(long)]
    length: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long, value_parser = parse_env)]
    env: EnvTag,
    #[arg(long, value_enum, default_value_t = ProfileArg::Desk)]
    profile: ProfileArg,
    /// `key = value` lines using the long flag names below; flags win over the file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; results are the same for any value.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    timeout: Option<f64>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    max_candidates: Option<String>,
    #[arg(long)]
    corpus_size: Option<usize>,
    #[arg(long)]
    max_tasks: Option<String>,
    #[arg(long)]
    max_iterations: Option<String>,
    #[arg(long)]
    oracle_episodes: Option<usize>,
    #[arg(long)]
    d_max: Option<usize>,
    #[arg(long)]
    t_min: Option<usize>,
    #[arg(long)]
    t_max: Option<usize>,
    /// Programs kept per task in the solved memory.
    #[arg(long)]
    programs_per_task: Option<usize>,
    #[arg(long)]
    max_arity: Option<usize>,
    #[arg(long)]
    warmup_max: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ProfileArg {
    Desk,
    Paper,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SeedsArg {
    Fresh,
    Train,
}

#[derive(Args, Debug)]
struct EvalArgs {
    run: PathBuf,
    #[arg(long, value_enum, default_value_t = SeedsArg::Fresh)]
    seeds: SeedsArg,
    /// Comma-separated lengths; defaults to the lengths the run visited.
    #[arg(long, value_delimiter = ',')]
    lengths: Option<Vec<usize>>,
    /// Defaults to `<run>/eval-<seeds>.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args, Debug)]
struct LibraryArgs {
    run: PathBuf,
    /// Print library.json instead of the report.
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Svg,
    Ascii,
}

#[derive(Args, Debug)]
struct ExplainArgs {
    run: PathBuf,
    #[arg(long)]
    task: String,
    /// Iteration to take the task from; defaults to the latest one that solved it.
    #[arg(long)]
    iter: Option<usize>,
    #[arg(long, value_enum, default_value_t = FormatArg::Svg)]
    format: FormatArg,
    /// Defaults to `<run>/explain/<task>`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExportArgs {
    /// A task set, a rollout file (with --length) or a run directory.
    input: PathBuf,
    #[arg(long)]
    length: Option<usize>,
    /// Iteration of a run directory; defaults to the last one.
    #[arg(long)]
    iter: Option<usize>,
    /// Defaults to standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_env(s: &str) -> Result<EnvTag, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

enum Failure {
    Usage(&'static str, String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

/// Parses `argv` (including the program name) and runs the command.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(Failure::Usage(sub, msg)) => {
            eprintln!("error: {msg}\n");
            let mut cmd = Cli::command();
            if let Some(sc) = cmd.find_subcommand_mut(sub) {
                eprintln!("{}", sc.render_help());
            }
            1
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn execute(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Collect(a) => collect(a),
        Command::Run(a) => run(a),
        Command::Eval(a) => eval(a),
        Command::Library(a) => library(a),
        Command::Explain(a) => explain(a),
        Command::ExportPrompts(a) => export(a),
        Command::Envs => {
            for env in EnvTag::ALL {
                let s = env.spec();
                let actions: Vec<&str> = s.actions.iter().map(|a| a.word()).collect();
                let objects: Vec<String> = s.objects.iter().map(|(c, n)| format!("{c}={n}")).collect();
                println!("{}: {}x{} grid, program type {}", env.name(), s.width, s.height, s.request);
                println!("  actions: {}", actions.join(" "));
                println!("  objects: {}", objects.join(" "));
            }
            Ok(())
        }
    }
}

fn collect(a: CollectArgs) -> Result<(), Failure> {
    let trajs = collect_oracle_rollouts(a.env, a.episodes, a.seed, a.max_len);
    let text = match a.length {
        Some(0) => return Err(Failure::Usage("collect", "--length must be positive".into())),
        Some(l) => slice(&trajs, l).to_json(),
        None => rollouts_to_json(a.env, &trajs),
    };
    write_out(&a.out, &text)?;
    Ok(())
}

fn write_out(path: &Path, text: &str) -> Result<(), Error> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn run_config(a: &RunArgs) -> Result<RunConfig, Failure> {
    let usage = |e: Error| Failure::Usage("run", e.to_string());
    let profile = match a.profile {
        ProfileArg::Desk => Profile::Desk,
        ProfileArg::Paper => Profile::Paper,
    };
    let mut c = RunConfig::new(a.env, profile);
    if let Some(path) = &a.config {
        for (k, v) in read_config_file(path)? {
            c.set(&k, &v).map_err(usage)?;
        }
    }
    let flags: [(&str, Option<String>); 16] = [
        ("seed", a.seed.map(|v| v.to_string())),
        ("out", a.out.as_ref().map(|v| v.display().to_string())),
        ("jobs", a.jobs.map(|v| v.to_string())),
        ("timeout", a.timeout.map(|v| v.to_string())),
        ("top-k", a.top_k.map(|v| v.to_string())),
        ("max-candidates", a.max_candidates.clone()),
        ("corpus-size", a.corpus_size.map(|v| v.to_string())),
        ("max-tasks", a.max_tasks.clone()),
        ("max-iterations", a.max_iterations.clone()),
        ("oracle-episodes", a.oracle_episodes.map(|v| v.to_string())),
        ("d-max", a.d_max.map(|v| v.to_string())),
        ("t-min", a.t_min.map(|v| v.to_string())),
        ("t-max", a.t_max.map(|v| v.to_string())),
        ("programs-per-task", a.programs_per_task.map(|v| v.to_string())),
        ("max-arity", a.max_arity.map(|v| v.to_string())),
        ("warmup-max", a.warmup_max.map(|v| v.to_string())),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            c.set(k, &v).map_err(usage)?;
        }
    }
    c.validate().map_err(usage)?;
    Ok(c)
}

fn run(a: RunArgs) -> Result<(), Failure> {
    let c = run_config(&a)?;
    let out = c.out.clone();
    let r = run_curriculum(c, |rep| {
        eprintln!(
            "iter {} L={} solved {}/{} ({:.1}%) library {} (+{})",
            rep.iteration,
            rep.length,
            rep.solved_tasks,
            rep.n_tasks,
            100.0 * rep.solve_rate,
            rep.library_size,
            rep.new_abstractions.len()
        );
    })?;
    println!(
        "finished after {} iterations at L={} ({:?}); outputs in {}",
        r.state.iteration,
        r.state.length,
        r.stop_reason,
        out.display()
    );
    Ok(())
}

fn eval(a: EvalArgs) -> Result<(), Failure> {
    let seeds = match a.seeds {
        SeedsArg::Fresh => EvalSeeds::Fresh,
        SeedsArg::Train => EvalSeeds::Train,
    };
    let rows = with_jobs(a.jobs, || evaluate(&a.run, seeds, a.lengths.clone()))?;
    let csv = eval_csv(&rows);
    let name = match a.seeds {
        SeedsArg::Fresh => "eval-fresh.csv",
        SeedsArg::Train => "eval-train.csv",
    };
    write_out(&a.out.unwrap_or_else(|| a.run.join(name)), &csv)?;
    print!("{csv}");
    Ok(())
}

fn library(a: LibraryArgs) -> Result<(), Failure> {
    let rec = load_run(&a.run)?;
    if a.json {
        let n = iteration_count(&a.run);
        if n == 0 {
            return Err(Error::Invalid("the run has no completed iteration".into()).into());
        }
        print!("{}", fs::read_to_string(iteration_dir(&a.run, n - 1).join("library.json"))?);
        return Ok(());
    }
    print!("{}", library_report(&load_library(&a.run, rec.config.env)?));
    Ok(())
}

fn explain(a: ExplainArgs) -> Result<(), Failure> {
    let rec = load_run(&a.run)?;
    let env = rec.config.env;
    let n = iteration_count(&a.run);
    let candidates: Vec<usize> = match a.iter {
        Some(k) if k < n => vec![k],
        Some(k) => return Err(Failure::Usage("explain", format!("iteration {k} does not exist"))),
        None => (0..n).rev().collect(),
    };
    let mut found = None;
    for k in candidates {
        let dir = iteration_dir(&a.run, k);
        let solved = SolvedFile::from_json(&fs::read_to_string(dir.join("solved.json"))?)?;
        if let Some(r) = solved.tasks.iter().find(|r| r.task_id == a.task && !r.programs.is_empty()) {
            found = Some((k, r.programs[0].clone()));
            break;
        }
    }
    let Some((k, text)) = found else {
        return Err(Error::UnknownTaskId(format!("{} (no solved program)", a.task)).into());
    };
    let tasks = TaskSet::from_json(&fs::read_to_string(iteration_dir(&a.run, k).join("tasks.json"))?)?;
    let task = tasks.get(&a.task).ok_or_else(|| Error::UnknownTaskId(a.task.clone()))?;
    let grammar = load_grammar(&a.run)?;
    let program = parse_program(&text, &grammar.prims())?;
    let lib = load_library(&a.run, env)?;
    let out = a.out.unwrap_or_else(|| a.run.join("explain").join(a.task.replace(['/', '@'], "_")));
    let format = match a.format {
        FormatArg::Svg => Format::Svg,
        FormatArg::Ascii => Format::Ascii,
    };
    let m = write_bundle(&out, &a.task, env, &program, &lib, &task.steps, format)?;
    println!("{} panels written to {}", m.panels.len(), out.display());
    Ok(())
}

fn export(a: ExportArgs) -> Result<(), Failure> {
    let tasks = if a.input.is_dir() {
        let n = iteration_count(&a.input);
        let k = match a.iter {
            Some(k) => k,
            None if n > 0 => n - 1,
            None => return Err(Error::Invalid("the run has no completed iteration".into()).into()),
        };
        TaskSet::from_json(&fs::read_to_string(curriculum::iteration_dir(&a.input, k).join("tasks.json"))?)?
    } else {
        let text = fs::read_to_string(&a.input).map_err(Error::from)?;
        match (TaskSet::from_json(&text), a.length) {
            (Ok(t), _) => t,
            (Err(_), Some(l)) if l > 0 => slice(&rollouts_from_json(&text)?.1, l),
            (Err(e), _) => {
                if rollouts_from_json(&text).is_ok() {
                    return Err(Failure::Usage("export-prompts", "a rollout file needs --length".into()));
                }
                return Err(e.into());
            }
        }
    };
    let text = export_prompts(&tasks)?;
    match a.out {
        Some(p) => write_out(&p, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}
