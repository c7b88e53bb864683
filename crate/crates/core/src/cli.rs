//! Command-line front end.
//!
//! Every file written embeds the tool name, version, the full run
//! configuration (defaults included) and the seed. Wall-clock data goes to a
//! separate `.meta.json` file so primary outputs are byte-identical across
//! reruns.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::extinction::{
    estimate_q_mc, solve_q, solve_q_precise, QVector, SolveOptions, DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use crate::kernels::{Model, ModelConfig, TypeId};
use crate::simulate::{
    map_replicates, BatchSummary, SimConfig, DEFAULT_CAP, DEFAULT_SNAPSHOT_DEPTH,
};
use crate::stream::replicate_stream;
use crate::tilt::{acceptance_rate, TiltedModel};
use crate::verify::{run_suite, suite_passed, Suite, SuiteOptions, TestReport};

pub const TOOL: &str = "condbranch";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(
    name = "condbranch",
    version,
    about = "Branching processes conditioned on extinction"
)]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extinction probabilities as the minimal fixed point of the offspring PGF.
    SolveQ(SolveQArgs),
    /// Monte Carlo extinction frequency with a Wilson 95% interval.
    EstimateQ(EstimateQArgs),
    /// Writes the kernel conditioned on extinction.
    Tilt(TiltArgs),
    /// Simulates populations; one JSON line per run.
    Simulate(SimulateArgs),
    /// Runs a verification suite and writes a JSON report.
    Verify(VerifyArgs),
}

#[derive(Debug, Args, Serialize)]
struct SolveQArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    max_iter: usize,
    /// Write the record here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct EstimateQArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    runs: u64,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_CAP)]
    cap: u64,
    #[arg(long)]
    horizon: Option<f64>,
    /// Type of the ancestor.
    #[arg(long = "type", default_value_t = 0)]
    root_type: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct TiltArgs {
    #[arg(long)]
    model: PathBuf,
    /// Extinction probabilities: a JSON file, or `auto` to solve for them at
    /// tolerance 1e-15.
    #[arg(long, default_value = "auto")]
    q: String,
    /// Seed for the acceptance-rate estimate of rejection-sampled kernels.
    #[arg(long)]
    seed: Option<u64>,
    /// Accepted careers per type in the acceptance-rate estimate.
    #[arg(long, default_value_t = 10_000)]
    acceptance_draws: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Simulate the process conditioned on extinction.
    #[arg(long)]
    tilted: bool,
    /// Extinction probabilities for `--tilted`: a JSON file or `auto`.
    #[arg(long, default_value = "auto")]
    q: String,
    #[arg(long)]
    runs: u64,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_CAP)]
    cap: u64,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_SNAPSHOT_DEPTH)]
    snapshot_depth: usize,
    #[arg(long = "type", default_value_t = 0)]
    root_type: usize,
    /// Line-delimited JSON output.
    #[arg(long)]
    out: PathBuf,
    /// Summary CSV (default: the output path with `.summary.csv` appended).
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct VerifyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "all", value_parser = parse_suite)]
    #[serde(serialize_with = "serialize_display")]
    suite: Suite,
    #[arg(long, default_value_t = 10_000)]
    runs: u64,
    #[arg(long)]
    seed: u64,
    /// Individual cap for unconditioned runs.
    #[arg(long, default_value_t = 1_000)]
    cap: u64,
    #[arg(long = "type", default_value_t = 0)]
    root_type: usize,
    #[arg(long)]
    report: Option<PathBuf>,
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    s.parse()
}

fn serialize_display<S: serde::Serializer>(v: &Suite, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },
    #[error("{0}")]
    Run(String),
}

impl CliError {
    fn run(e: impl std::fmt::Display) -> Self {
        CliError::Run(e.to_string())
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(io_err(path))
}

fn load_model(path: &Path) -> Result<Model, CliError> {
    Model::from_json_str(&read(path)?).map_err(|e| CliError::Input {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// `auto`, or a file holding either a JSON array or an object with a `q` array.
fn load_q(arg: &str, model: &Model) -> Result<QVector, CliError> {
    let q = if arg == "auto" {
        solve_q_precise(model).map_err(CliError::run)?.0.q
    } else {
        let path = Path::new(arg);
        let bad = |message: String| CliError::Input {
            path: path.to_path_buf(),
            message,
        };
        let value: serde_json::Value =
            serde_json::from_str(&read(path)?).map_err(|e| bad(e.to_string()))?;
        let array = value.get("q").cloned().unwrap_or(value);
        let entries: Vec<f64> = serde_json::from_value(array)
            .map_err(|e| bad(format!("expected an array of probabilities: {e}")))?;
        QVector::new(entries).map_err(|e| bad(e.to_string()))?
    };
    if q.len() != model.types() {
        return Err(CliError::Run(format!(
            "q has {} entries but the model has {} types",
            q.len(),
            model.types()
        )));
    }
    Ok(q)
}

fn check_type(model: &Model, t: usize) -> Result<TypeId, CliError> {
    if t < model.types() {
        Ok(TypeId(t))
    } else {
        Err(CliError::Run(format!(
            "type {t} does not exist; the model has {} types",
            model.types()
        )))
    }
}

#[derive(Serialize)]
struct Echo<'a, A: Serialize> {
    tool: &'static str,
    version: &'static str,
    seed: Option<u64>,
    config: &'a A,
    model: &'a ModelConfig,
}

fn echo<'a, A: Serialize>(args: &'a A, seed: Option<u64>, model: &'a Model) -> Echo<'a, A> {
    Echo {
        tool: TOOL,
        version: VERSION,
        seed,
        config: args,
        model: model.config(),
    }
}

/// `echo` fields followed by `record`'s fields, in one JSON object.
fn merge<A: Serialize, R: Serialize>(echo: &Echo<A>, record: &R) -> serde_json::Value {
    let mut value = serde_json::to_value(echo).expect("serialisable");
    if let (Some(map), serde_json::Value::Object(extra)) = (
        value.as_object_mut(),
        serde_json::to_value(record).expect("serialisable"),
    ) {
        map.extend(extra);
    }
    value
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("serialisable");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

fn emit(out: Option<&Path>, value: &serde_json::Value, summary: &str) -> Result<(), CliError> {
    match out {
        Some(path) => {
            write_json(path, value)?;
            println!("{summary}");
            println!("wrote {}", path.display());
        }
        None => println!(
            "{}",
            serde_json::to_string_pretty(value).expect("serialisable")
        ),
    }
    Ok(())
}

fn meta_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

fn write_meta(path: &Path, started: Instant, extra: serde_json::Value) -> Result<(), CliError> {
    let finished = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    let meta = json!({
        "tool": TOOL,
        "version": VERSION,
        "finished_unix_seconds": finished,
        "elapsed_seconds": started.elapsed().as_secs_f64(),
        "threads": rayon::current_num_threads(),
        "details": extra,
    });
    write_json(&meta_path(path), &meta)
}

fn solve_q_cmd(args: &SolveQArgs) -> Result<i32, CliError> {
    let model = load_model(&args.model)?;
    let opts = SolveOptions {
        tol: args.tol,
        max_iter: args.max_iter,
    };
    let sol = solve_q(&model, opts).map_err(CliError::run)?;
    let record = merge(&echo(args, None, &model), &sol);
    emit(
        args.out.as_deref(),
        &record,
        &format!(
            "q = {:?} (residual {:e}, {} iterations)",
            sol.q.as_slice(),
            sol.residual,
            sol.iterations
        ),
    )?;
    Ok(0)
}

fn estimate_q_cmd(args: &EstimateQArgs) -> Result<i32, CliError> {
    let model = load_model(&args.model)?;
    let root = check_type(&model, args.root_type)?;
    let est = estimate_q_mc(&model, root, args.runs, args.cap, args.horizon, args.seed)
        .map_err(CliError::run)?;
    let record = merge(&echo(args, Some(args.seed), &model), &est);
    emit(
        args.out.as_deref(),
        &record,
        &format!(
            "estimate {} (95% CI [{}, {}]), censored {}",
            est.estimate, est.ci_low, est.ci_high, est.censored
        ),
    )?;
    Ok(0)
}

fn tilt_cmd(args: &TiltArgs) -> Result<i32, CliError> {
    let model = load_model(&args.model)?;
    let q = load_q(&args.q, &model)?;
    let tilted = TiltedModel::new(model.clone(), q.clone()).map_err(CliError::run)?;
    let mut acceptance = Vec::new();
    if let Some(sampler) = tilted.rejection() {
        let seed = args.seed.ok_or_else(|| {
            CliError::Run(format!(
                "{} kernels are sampled by rejection; pass --seed for the acceptance-rate estimate",
                model.variant_name()
            ))
        })?;
        for s in (0..model.types()).filter(|&s| q.get(TypeId(s)) > 0.0) {
            let mut rng = replicate_stream(seed, s as u64);
            acceptance.push(
                acceptance_rate(sampler, TypeId(s), args.acceptance_draws, &mut rng)
                    .map_err(CliError::run)?,
            );
        }
    }
    let doc = tilted.document(acceptance).map_err(CliError::run)?;
    let record = merge(&echo(args, args.seed, &model), &doc);
    emit(
        args.out.as_deref(),
        &record,
        &format!(
            "{} kernel conditioned on extinction with q = {:?}",
            doc.kernel,
            q.as_slice()
        ),
    )?;
    Ok(0)
}

fn simulate_cmd(args: &SimulateArgs) -> Result<i32, CliError> {
    let started = Instant::now();
    let model = load_model(&args.model)?;
    let root = check_type(&model, args.root_type)?;
    let config = SimConfig {
        cap: args.cap,
        horizon: args.horizon,
        snapshot_depth: args.snapshot_depth,
        stop_line: None,
    };
    let to_line = |r: u64, o: crate::simulate::PopulationOutcome| {
        let mut line = serde_json::to_string(&json!({"replicate": r})).expect("serialisable");
        let body = serde_json::to_string(&o).expect("serialisable");
        // Splice the outcome's fields after the replicate index.
        line.pop();
        line.push(',');
        line.push_str(&body[1..]);
        (line, o)
    };
    let runs = if args.tilted {
        let q = load_q(&args.q, &model)?;
        if q.get(root) == 0.0 {
            return Err(CliError::Run(format!(
                "{root} cannot die out, so conditioning on extinction is undefined"
            )));
        }
        let tilted = TiltedModel::new(model.clone(), q).map_err(CliError::run)?;
        map_replicates(&tilted, root, args.runs, &config, args.seed, to_line)
    } else {
        map_replicates(&model, root, args.runs, &config, args.seed, to_line)
    }
    .map_err(CliError::run)?;

    let file = fs::File::create(&args.out).map_err(io_err(&args.out))?;
    let mut w = BufWriter::new(file);
    let header = json!({ "header": echo(args, Some(args.seed), &model) });
    writeln!(w, "{header}").map_err(io_err(&args.out))?;
    for (line, _) in &runs {
        writeln!(w, "{line}").map_err(io_err(&args.out))?;
    }
    w.flush().map_err(io_err(&args.out))?;

    let outcomes: Vec<_> = runs.into_iter().map(|(_, o)| o).collect();
    let summary = BatchSummary::from_outcomes(&outcomes, model.types());
    let summary_path = args.summary.clone().unwrap_or_else(|| {
        let mut name = args.out.as_os_str().to_owned();
        name.push(".summary.csv");
        PathBuf::from(name)
    });
    let config_echo =
        serde_json::to_string(&echo(args, Some(args.seed), &model)).expect("serialisable");
    let meta = [
        ("tool", TOOL.to_string()),
        ("version", VERSION.to_string()),
        ("seed", args.seed.to_string()),
        ("config", config_echo),
    ];
    let file = fs::File::create(&summary_path).map_err(io_err(&summary_path))?;
    summary
        .write_csv(BufWriter::new(file), &meta)
        .map_err(|e| CliError::Run(format!("{}: {e}", summary_path.display())))?;
    write_meta(&args.out, started, json!({}))?;

    println!(
        "{} runs: extinct fraction {}, censored fraction {}",
        summary.runs, summary.extinct_fraction, summary.censored_fraction
    );
    println!(
        "wrote {} and {}",
        args.out.display(),
        summary_path.display()
    );
    Ok(0)
}

#[derive(Serialize)]
struct ReportRecord<'a, A: Serialize> {
    #[serde(flatten)]
    echo: &'a Echo<'a, A>,
    #[serde(flatten)]
    report: &'a TestReport,
}

fn verify_cmd(args: &VerifyArgs) -> Result<i32, CliError> {
    let started = Instant::now();
    let model = load_model(&args.model)?;
    let root = check_type(&model, args.root_type)?;
    let opts = SuiteOptions {
        runs: args.runs,
        seed: args.seed,
        root,
        cap: args.cap,
        ..SuiteOptions::default()
    };
    let reports = run_suite(&model, args.suite, &opts).map_err(CliError::run)?;
    let e = echo(args, Some(args.seed), &model);
    let records: Vec<ReportRecord<_>> = reports
        .iter()
        .map(|report| ReportRecord { echo: &e, report })
        .collect();
    for r in &reports {
        println!("{:<40} {:?}", r.name, r.verdict);
    }
    let passed = suite_passed(&reports);
    println!(
        "suite {}: {}",
        args.suite,
        if passed { "passed" } else { "FAILED" }
    );
    if let Some(path) = &args.report {
        write_json(path, &records)?;
        let runtimes: Vec<_> = reports
            .iter()
            .map(|r| json!({"name": r.name, "seconds": r.runtime.map(|d| d.as_secs_f64())}))
            .collect();
        write_meta(path, started, json!({ "checks": runtimes }))?;
        println!("wrote {}", path.display());
    }
    Ok(if passed { 0 } else { 1 })
}

fn dispatch(command: &Command) -> Result<i32, CliError> {
    match command {
        Command::SolveQ(a) => solve_q_cmd(a),
        Command::EstimateQ(a) => estimate_q_cmd(a),
        Command::Tilt(a) => tilt_cmd(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Verify(a) => verify_cmd(a),
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code: 0 on success, 1 if a verify suite failed, 2 on bad
/// input.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli.command)),
            Err(e) => Err(CliError::run(e)),
        },
        None => dispatch(&cli.command),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
