//! The `evalkit` command line.
//!
//! Exit codes: 0 success, 1 user error, 2 internal error, 3 validation
//! violations found. Results go to stdout, as aligned plain text or as JSON
//! with `--json`; diagnostics go to stderr.

mod output;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use evalkit_core::{ColumnType, ModuleKind, ModuleResult, ParamValue, Params};
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::Error;
use crate::evaluator::{self, CiOptions, Dataset, EvalOptions, SubprocessProvider, TaskSpec};
use crate::module::{ComputeOptions, Evaluate};
use crate::registry::scaffold::create_scaffold;
use crate::registry::validate::{validate, ValidationReport};
use crate::registry::{validate_builtin, Registry, RegistryRoot};
use crate::service::{
    self, Decision, DatasetPin, JobSpec, JobState, LeaderboardQuery, OwnerTable, SelfReported, Service, ServiceError,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USER: i32 = 1;
pub const EXIT_INTERNAL: i32 = 2;
pub const EXIT_VIOLATIONS: i32 = 3;

/// Owner tokens are read from this file in the service directory when present.
pub const OWNERS_FILE: &str = "owners.toml";

#[derive(Debug, Parser)]
#[command(name = "evalkit", version, about = "Evaluate models, compare them, and measure datasets")]
struct Cli {
    /// Extra registry root searched before the defaults: a directory, `git+URL#REV` or `builtin`.
    #[arg(long = "registry", global = true, value_name = "ROOT")]
    registry: Vec<String>,
    /// Print JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Create a new module directory with a manifest, card, stub and smoke test.
    Create(CreateArgs),
    /// Check module directories or built-in module ids.
    Validate(ValidateArgs),
    /// Evaluate a provider on a dataset.
    Run(RunArgs),
    /// Test whether two models' predictions differ significantly.
    Compare(CompareArgs),
    /// Describe a dataset with measurements.
    Measure(MeasureArgs),
    /// Serve the HTTP API with background workers.
    Serve(ServeArgs),
    /// Work with the job queue and result proposals.
    #[command(subcommand)]
    Jobs(JobsCommand),
    /// Show a ranked leaderboard.
    Leaderboard(LeaderboardArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Kind {
    Metric,
    Comparison,
    Measurement,
}

impl From<Kind> for ModuleKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Metric => ModuleKind::Metric,
            Kind::Comparison => ModuleKind::Comparison,
            Kind::Measurement => ModuleKind::Measurement,
        }
    }
}

#[derive(Debug, Args)]
struct CreateArgs {
    /// Human-readable module name, for example "My awesome metric".
    name: String,
    #[arg(long, value_enum, default_value = "metric")]
    kind: Kind,
    /// Target directory; defaults to the module id under the current directory.
    #[arg(long)]
    dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// Module directories or built-in module ids.
    #[arg(required = true)]
    modules: Vec<String>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    task: String,
    #[arg(long)]
    dataset: PathBuf,
    /// Provider command line, split like a POSIX shell would.
    #[arg(long)]
    provider_cmd: String,
    /// Comma-separated metric ids; defaults to the task's metrics.
    #[arg(long, value_delimiter = ',')]
    metrics: Vec<String>,
    /// Metric parameter as METRIC.NAME=VALUE; VALUE is parsed as JSON when possible.
    #[arg(long = "param", value_name = "METRIC.NAME=VALUE")]
    params: Vec<String>,
    /// Compute bootstrap confidence intervals.
    #[arg(long)]
    ci: bool,
    #[arg(long, default_value_t = evalkit_core::stats::DEFAULT_LEVEL)]
    ci_level: f64,
    #[arg(long, default_value_t = evalkit_core::stats::DEFAULT_ITERATIONS)]
    ci_iterations: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = evaluator::DEFAULT_BATCH_SIZE)]
    batch_size: usize,
    /// Batches sent before waiting for the oldest one.
    #[arg(long, default_value_t = 1)]
    in_flight: usize,
    /// Longest wait for a batch, in milliseconds.
    #[arg(long, default_value_t = 30_000)]
    timeout_ms: u64,
    /// Comma-separated input columns overriding the task default.
    #[arg(long, value_delimiter = ',')]
    input_columns: Vec<String>,
    #[arg(long)]
    reference_column: Option<String>,
    /// Directory for the predictions artifact.
    #[arg(long, default_value = "evalkit-run")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TestKind {
    Mcnemar,
    Bootstrap,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// JSON-lines file with integer `predictions_a`, `predictions_b` and `references` columns.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long = "test", value_enum, default_value = "mcnemar")]
    test: TestKind,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Bootstrap resamples.
    #[arg(long, default_value_t = evalkit_core::stats::DEFAULT_ITERATIONS)]
    iterations: usize,
    /// Metric compared by the bootstrap test.
    #[arg(long, default_value = "accuracy")]
    metric: String,
}

#[derive(Debug, Args)]
struct MeasureArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Comma-separated measurement ids, run in the given order.
    #[arg(long, value_delimiter = ',', required = true)]
    measurements: Vec<String>,
    /// Column to measure. Defaults to `data`, else `label` for integer
    /// measurements and `text` for string measurements.
    #[arg(long)]
    column: Option<String>,
    /// Measurement parameter as MEASUREMENT.NAME=VALUE.
    #[arg(long = "param", value_name = "MEASUREMENT.NAME=VALUE")]
    params: Vec<String>,
}

#[derive(Debug, Args)]
struct StoreArgs {
    /// Service data directory.
    #[arg(long, env = service::ENV_SERVICE_DIR, default_value = "evalkit-service")]
    dir: PathBuf,
    /// Owner table file with `[[owner]]` prefix/token entries; defaults to owners.toml in the data directory.
    #[arg(long)]
    owners: Option<PathBuf>,
    /// Owner entry PREFIX=TOKEN, added to the table.
    #[arg(long = "owner", value_name = "PREFIX=TOKEN")]
    owner: Vec<String>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[command(flatten)]
    store: StoreArgs,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Debug, Subcommand)]
enum JobsCommand {
    /// Queue a job from a JSON spec file.
    Submit {
        spec: PathBuf,
        /// Queue a new job even if an identical one exists.
        #[arg(long)]
        force: bool,
        #[command(flatten)]
        store: StoreArgs,
    },
    /// Show one job.
    Show {
        id: String,
        #[command(flatten)]
        store: StoreArgs,
    },
    /// List jobs in submission order.
    List {
        #[arg(long)]
        state: Option<String>,
        #[command(flatten)]
        store: StoreArgs,
    },
    /// Run queued jobs until none is left.
    Work {
        #[command(flatten)]
        store: StoreArgs,
    },
    /// Show one result proposal with its report.
    Proposal {
        id: String,
        #[command(flatten)]
        store: StoreArgs,
    },
    /// Approve or close a result proposal as the model owner.
    Review {
        proposal: String,
        #[arg(long, value_enum)]
        decision: DecisionArg,
        #[arg(long, env = "EVALKIT_OWNER_TOKEN")]
        token: String,
        #[command(flatten)]
        store: StoreArgs,
    },
    /// Import a self-reported result as an unverified proposal.
    Import {
        #[arg(long)]
        model: String,
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        dataset_sha256: Option<String>,
        #[arg(long)]
        task: Option<String>,
        #[arg(long)]
        metric: String,
        /// Value; non-finite values are rejected.
        #[arg(long, allow_hyphen_values = true)]
        value: String,
        #[arg(long)]
        source: Option<String>,
        #[command(flatten)]
        store: StoreArgs,
    },
    /// Print model-card metadata for a model's approved results.
    Card {
        model: String,
        #[command(flatten)]
        store: StoreArgs,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DecisionArg {
    Approve,
    Close,
}

#[derive(Debug, Args)]
struct LeaderboardArgs {
    /// Dataset path or content hash.
    #[arg(long)]
    dataset: String,
    #[arg(long)]
    metric: String,
    #[arg(long)]
    task: Option<String>,
    /// Keep only verified (true) or only self-reported (false) entries.
    #[arg(long)]
    verified: Option<bool>,
    /// Include closed proposals.
    #[arg(long)]
    include_closed: bool,
    #[command(flatten)]
    store: StoreArgs,
}

/// Any failure a command can end with.
#[derive(Debug)]
pub enum Failure {
    Core(Error),
    Service(ServiceError),
    Usage(String),
    /// Validation reported error-severity violations; already printed.
    Violations,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<ServiceError> for Failure {
    fn from(e: ServiceError) -> Self {
        Failure::Service(e)
    }
}

impl From<evalkit_core::CoreError> for Failure {
    fn from(e: evalkit_core::CoreError) -> Self {
        Failure::Core(e.into())
    }
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Core(e) if e.is_user_error() => EXIT_USER,
            Failure::Service(e) if e.is_user_error() => EXIT_USER,
            Failure::Service(ServiceError::Internal(e)) if e.is_user_error() => EXIT_USER,
            Failure::Usage(_) => EXIT_USER,
            Failure::Violations => EXIT_VIOLATIONS,
            _ => EXIT_INTERNAL,
        }
    }

    fn message(&self) -> Option<String> {
        match self {
            Failure::Core(e) => Some(e.to_string()),
            Failure::Service(e) => Some(e.to_string()),
            Failure::Usage(m) => Some(m.clone()),
            Failure::Violations => None,
        }
    }
}

type CmdResult = Result<(), Failure>;

struct Ctx<'a> {
    json: bool,
    registry: Registry,
    out: &'a mut dyn Write,
}

impl Ctx<'_> {
    fn emit_json<T: Serialize>(&mut self, v: &T) -> CmdResult {
        let text = serde_json::to_string_pretty(v).map_err(|e| Error::json("output", e))?;
        self.line(&text)
    }

    fn line(&mut self, s: &str) -> CmdResult {
        writeln!(self.out, "{s}").map_err(|e| Error::io("cannot write to stdout", e).into())
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    EXIT_USER
                }
            };
        }
    };
    let mut roots: Vec<RegistryRoot> = cli.registry.iter().map(|r| RegistryRoot::parse(r)).collect();
    for r in Registry::from_env().roots() {
        if !roots.contains(r) {
            roots.push(r.clone());
        }
    }
    let mut ctx = Ctx { json: cli.json, registry: Registry::new(roots), out };
    let result = match cli.command {
        Command::Create(a) => cmd_create(&mut ctx, a),
        Command::Validate(a) => cmd_validate(&mut ctx, a),
        Command::Run(a) => cmd_run(&mut ctx, a),
        Command::Compare(a) => cmd_compare(&mut ctx, a),
        Command::Measure(a) => cmd_measure(&mut ctx, a),
        Command::Serve(a) => cmd_serve(&mut ctx, a),
        Command::Jobs(c) => cmd_jobs(&mut ctx, c),
        Command::Leaderboard(a) => cmd_leaderboard(&mut ctx, a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            if let Some(m) = f.message() {
                let _ = writeln!(err, "error: {m}");
            }
            f.exit_code()
        }
    }
}

fn cmd_create(ctx: &mut Ctx, a: CreateArgs) -> CmdResult {
    let id = crate::registry::scaffold::module_id(&a.name)?;
    let target = a.dir.unwrap_or_else(|| PathBuf::from(&id));
    let report = create_scaffold(&a.name, a.kind.into(), &target)?;
    if ctx.json {
        return ctx.emit_json(&report);
    }
    let mut rows = vec![
        vec!["id".to_string(), report.id.clone()],
        vec!["path".to_string(), report.path.display().to_string()],
    ];
    rows.push(vec!["commit".to_string(), report.commit.clone()]);
    for f in &report.files {
        rows.push(vec!["file".to_string(), f.display().to_string()]);
    }
    ctx.line(&output::table(&rows))
}

fn cmd_validate(ctx: &mut Ctx, a: ValidateArgs) -> CmdResult {
    let mut reports: Vec<ValidationReport> = Vec::new();
    for m in &a.modules {
        let path = Path::new(m);
        let report = if path.is_dir() {
            validate(path)?
        } else if let Some(r) = validate_builtin(m) {
            r
        } else {
            return Err(Failure::Usage(format!("`{m}` is neither a module directory nor a built-in module id")));
        };
        reports.push(report);
    }
    if ctx.json {
        ctx.emit_json(&reports)?;
    } else {
        for r in &reports {
            let status = if r.has_errors() {
                "invalid"
            } else if r.is_clean() {
                "ok"
            } else {
                "ok (warnings)"
            };
            ctx.line(&format!("{}: {status}", r.module))?;
            for v in &r.violations {
                ctx.line(&format!("  {v}"))?;
            }
        }
    }
    if reports.iter().any(ValidationReport::has_errors) {
        return Err(Failure::Violations);
    }
    Ok(())
}

/// Parses `PREFIX.NAME=VALUE`; VALUE is JSON when it parses, else a string.
fn parse_param(spec: &str) -> Result<(String, String, ParamValue), Failure> {
    let bad = || Failure::Usage(format!("parameter `{spec}` is not of the form MODULE.NAME=VALUE"));
    let (lhs, raw) = spec.split_once('=').ok_or_else(bad)?;
    let (module, name) = lhs.split_once('.').ok_or_else(bad)?;
    if module.is_empty() || name.is_empty() {
        return Err(bad());
    }
    let value = match serde_json::from_str::<Value>(raw) {
        Ok(Value::Bool(b)) => ParamValue::Bool(b),
        Ok(Value::Number(n)) if n.is_i64() => ParamValue::Int(n.as_i64().unwrap()),
        Ok(Value::Number(n)) => ParamValue::Float(n.as_f64().unwrap_or(f64::NAN)),
        Ok(Value::String(s)) => ParamValue::Str(s),
        _ => ParamValue::Str(raw.to_string()),
    };
    Ok((module.to_string(), name.to_string(), value))
}

fn grouped_params(specs: &[String]) -> Result<BTreeMap<String, Params>, Failure> {
    let mut out: BTreeMap<String, Params> = BTreeMap::new();
    for s in specs {
        let (m, k, v) = parse_param(s)?;
        out.entry(m).or_default().insert(k, v);
    }
    Ok(out)
}

fn cmd_run(ctx: &mut Ctx, a: RunArgs) -> CmdResult {
    let command = shlex::split(&a.provider_cmd)
        .filter(|c| !c.is_empty())
        .ok_or_else(|| Failure::Usage(format!("cannot parse provider command `{}`", a.provider_cmd)))?;
    let mut task = TaskSpec::by_id(&a.task)?;
    if !a.input_columns.is_empty() {
        task.input_columns = a.input_columns.clone();
    }
    if let Some(r) = &a.reference_column {
        task.reference_column = r.clone();
    }
    let metrics = if a.metrics.is_empty() { task.default_metrics.clone() } else { a.metrics.clone() };
    // Resolve names before starting the provider so typos fail fast.
    evaluator::resolve_metrics(&ctx.registry, task.kind, &metrics)?;
    let mut opts = EvalOptions::new(&a.out)
        .batch_size(a.batch_size)
        .in_flight(a.in_flight)
        .timeout(Duration::from_millis(a.timeout_ms));
    opts.metric_params = grouped_params(&a.params)?;
    if a.ci {
        opts = opts.ci(CiOptions { level: a.ci_level, iterations: a.ci_iterations, seed: a.seed });
    }
    let mut provider = SubprocessProvider::spawn(&command)?;
    let report = evaluator::evaluate_task(&ctx.registry, &task, &a.dataset, &mut provider, &metrics, &opts)?;
    if ctx.json {
        return ctx.emit_json(&report);
    }
    ctx.line(&output::report(&report))
}

/// Reads JSON-lines rows and keeps the given columns, renamed.
fn project_rows(data: &Dataset, columns: &[(&str, &str)]) -> Result<Vec<Map<String, Value>>, Failure> {
    let from: Vec<&str> = columns.iter().map(|c| c.0).collect();
    data.require_columns(&from)?;
    Ok(data
        .rows
        .iter()
        .map(|row| columns.iter().map(|(src, dst)| (dst.to_string(), row[*src].clone())).collect())
        .collect())
}

#[derive(Serialize)]
struct Comparison {
    test: &'static str,
    dataset: evaluator::DatasetRef,
    result: ModuleResult,
    convention: &'static str,
}

const MCNEMAR_CONVENTION: &str = "n01 counts rows where A is wrong and B is right, n10 the reverse; \
p_value is the exact two-sided binomial test on the n01 + n10 discordant rows, and 1 when there are none";
const BOOTSTRAP_CONVENTION: &str = "delta = metric(A) - metric(B); p_value is twice the fraction of \
resamples whose delta is zero or has the opposite sign to the full-data delta, capped at 1";

fn cmd_compare(ctx: &mut Ctx, a: CompareArgs) -> CmdResult {
    let data = Dataset::read(&a.dataset)?;
    let rows = project_rows(
        &data,
        &[("predictions_a", "predictions_a"), ("predictions_b", "predictions_b"), ("references", "references")],
    )?;
    let (id, convention) = match a.test {
        TestKind::Mcnemar => ("mcnemar", MCNEMAR_CONVENTION),
        TestKind::Bootstrap => ("paired_bootstrap", BOOTSTRAP_CONVENTION),
    };
    let mut module = ctx.registry.load(id, None)?;
    let batch = crate::jsonio::batch_from_rows(&module.info().features, &rows)
        .map_err(|reason| Failure::Usage(format!("{}: {reason}", a.dataset.display())))?;
    let mut opts = ComputeOptions::new().batch(batch);
    if a.test == TestKind::Bootstrap {
        opts = opts
            .param("seed", ParamValue::Int(a.seed as i64))
            .param("iterations", ParamValue::Int(a.iterations as i64))
            .param("metric", ParamValue::Str(a.metric.clone()));
    }
    let result = module.compute(opts)?;
    let cmp = Comparison { test: id, dataset: data.reference.clone(), result, convention };
    if ctx.json {
        return ctx.emit_json(&cmp);
    }
    let mut rows = vec![vec!["test".to_string(), id.to_string()]];
    rows.extend(output::score_rows(&cmp.result));
    ctx.line(&output::table(&rows))?;
    ctx.line(&format!("convention: {convention}"))
}

#[derive(Serialize)]
struct Measurements {
    dataset: evaluator::DatasetRef,
    results: Vec<MeasurementBlock>,
}

#[derive(Serialize)]
struct MeasurementBlock {
    column: String,
    result: ModuleResult,
}

fn cmd_measure(ctx: &mut Ctx, a: MeasureArgs) -> CmdResult {
    let data = Dataset::read(&a.dataset)?;
    if data.is_empty() {
        return Err(evalkit_core::CoreError::EmptyInput.into());
    }
    let params = grouped_params(&a.params)?;
    let mut blocks = Vec::new();
    for id in &a.measurements {
        let mut module = ctx.registry.load(id, None)?;
        let info = module.info().clone();
        if info.kind != ModuleKind::Measurement {
            return Err(Failure::Usage(format!("`{id}` is a {} module, not a measurement", info.kind)));
        }
        let field = &info.features.fields()[0];
        let column = match &a.column {
            Some(c) => c.clone(),
            None => {
                let fallback = if field.ty == ColumnType::Int { "label" } else { "text" };
                let first = &data.rows[0];
                [field.name.as_str(), fallback]
                    .into_iter()
                    .find(|c| first.contains_key(*c))
                    .ok_or_else(|| {
                        Failure::Usage(format!("no `{}` or `{fallback}` column for `{id}`; pass --column", field.name))
                    })?
                    .to_string()
            }
        };
        let rows = project_rows(&data, &[(column.as_str(), field.name.as_str())])?;
        let batch = crate::jsonio::batch_from_rows(&info.features, &rows)
            .map_err(|reason| Failure::Usage(format!("column `{column}` cannot feed `{id}`: {reason}")))?;
        let mut opts = ComputeOptions::new().batch(batch);
        opts.params = params.get(id).cloned().unwrap_or_default();
        blocks.push(MeasurementBlock { column, result: module.compute(opts)? });
    }
    let m = Measurements { dataset: data.reference.clone(), results: blocks };
    if ctx.json {
        return ctx.emit_json(&m);
    }
    for (i, b) in m.results.iter().enumerate() {
        if i > 0 {
            ctx.line("")?;
        }
        let mut rows = vec![
            vec!["measurement".to_string(), b.result.module_id.clone()],
            vec!["column".to_string(), b.column.clone()],
        ];
        rows.extend(output::score_rows(&b.result));
        ctx.line(&output::table(&rows))?;
    }
    Ok(())
}

fn owners(store: &StoreArgs) -> Result<OwnerTable, Failure> {
    let default = store.dir.join(OWNERS_FILE);
    let mut table = match &store.owners {
        Some(p) => OwnerTable::read(p)?,
        None if default.is_file() => OwnerTable::read(&default)?,
        None => OwnerTable::default(),
    };
    for o in &store.owner {
        let (prefix, token) =
            o.split_once('=').ok_or_else(|| Failure::Usage(format!("owner `{o}` is not of the form PREFIX=TOKEN")))?;
        table.add(prefix, token);
    }
    Ok(table)
}

fn open_service(ctx: &Ctx, store: &StoreArgs) -> Result<Service, Failure> {
    Ok(Service::open(&store.dir, ctx.registry.clone(), owners(store)?)?)
}

fn cmd_serve(ctx: &mut Ctx, a: ServeArgs) -> CmdResult {
    let svc = Arc::new(open_service(ctx, &a.store)?);
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Error::io("cannot start the async runtime", e))?;
    let (listener, addr) =
        rt.block_on(service::api::bind(a.addr)).map_err(|e| Error::io(format!("cannot listen on {}", a.addr), e))?;
    let stop = Arc::new(AtomicBool::new(false));
    let workers = svc.spawn_workers(a.workers, Arc::clone(&stop))?;
    ctx.line(&format!("listening on http://{addr}"))?;
    let _ = ctx.out.flush();
    let served = rt.block_on(service::api::serve(Arc::clone(&svc), listener, shutdown_signal()));
    stop.store(true, Ordering::Relaxed);
    for w in workers {
        let _ = w.join();
    }
    served.map_err(|e| Error::io("server failed", e))?;
    Ok(())
}

async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        let mut term = signal(SignalKind::terminate()).expect("SIGTERM handler");
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    {
        let _ = tokio::signal::ctrl_c().await;
    }
}

fn cmd_jobs(ctx: &mut Ctx, c: JobsCommand) -> CmdResult {
    match c {
        JobsCommand::Submit { spec, force, store } => {
            let text = std::fs::read_to_string(&spec)
                .map_err(|e| Error::io(format!("cannot read job spec {}", spec.display()), e))?;
            let spec: JobSpec = serde_json::from_str(&text).map_err(|e| {
                ServiceError::InvalidSpec(vec![service::FieldError::new("spec", e.to_string())])
            })?;
            let svc = open_service(ctx, &store)?;
            let s = svc.submit(spec, force)?;
            if ctx.json {
                return ctx.emit_json(&s);
            }
            let verb = if s.created { "queued" } else { "already submitted as" };
            ctx.line(&format!("{verb} {} ({})", s.job.id, s.job.state.as_str()))
        }
        JobsCommand::Show { id, store } => {
            let job = open_service(ctx, &store)?.job(&id)?;
            if ctx.json {
                return ctx.emit_json(&job);
            }
            ctx.line(&output::job(&job))
        }
        JobsCommand::List { state, store } => {
            let state = match state {
                Some(s) => Some(JobState::parse(&s).ok_or_else(|| Failure::Usage(format!("unknown job state `{s}`")))?),
                None => None,
            };
            let jobs = open_service(ctx, &store)?.jobs(state)?;
            if ctx.json {
                return ctx.emit_json(&jobs);
            }
            let mut rows = vec![vec!["id".into(), "state".into(), "task".into(), "proposals".into(), "failure".into()]];
            for j in &jobs {
                rows.push(vec![
                    j.id.clone(),
                    j.state.as_str().into(),
                    j.spec.task.clone(),
                    j.proposals.len().to_string(),
                    j.failure.as_deref().map(output::first_line).unwrap_or_default(),
                ]);
            }
            ctx.line(&output::table(&rows))
        }
        JobsCommand::Work { store } => {
            let n = open_service(ctx, &store)?.run_until_idle()?;
            if ctx.json {
                return ctx.emit_json(&serde_json::json!({ "processed": n }));
            }
            ctx.line(&format!("processed {n} job(s)"))
        }
        JobsCommand::Proposal { id, store } => {
            let p = open_service(ctx, &store)?.proposal(&id)?;
            if ctx.json {
                return ctx.emit_json(&p);
            }
            ctx.line(&output::proposal(&p))
        }
        JobsCommand::Review { proposal, decision, token, store } => {
            let decision = match decision {
                DecisionArg::Approve => Decision::Approve,
                DecisionArg::Close => Decision::Close,
            };
            let p = open_service(ctx, &store)?.review(&proposal, decision, &token)?;
            if ctx.json {
                return ctx.emit_json(&p);
            }
            ctx.line(&format!("{} {}", p.id, p.state.as_str()))
        }
        JobsCommand::Import { model, dataset, dataset_sha256, task, metric, value, source, store } => {
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| ServiceError::InvalidValue(format!("`{value}` is not a number")))?;
            let r = SelfReported {
                model,
                dataset: DatasetPin { path: dataset, sha256: dataset_sha256 },
                task,
                metric,
                value,
                source,
            };
            let p = open_service(ctx, &store)?.import_self_reported(r)?;
            if ctx.json {
                return ctx.emit_json(&p);
            }
            ctx.line(&format!("imported {} ({}, self-reported)", p.id, p.state.as_str()))
        }
        JobsCommand::Card { model, store } => {
            let card = open_service(ctx, &store)?.model_card_metadata(&model)?;
            ctx.emit_json(&card)
        }
    }
}

fn cmd_leaderboard(ctx: &mut Ctx, a: LeaderboardArgs) -> CmdResult {
    let q = LeaderboardQuery {
        dataset: a.dataset,
        metric: a.metric,
        task: a.task,
        verified: a.verified,
        include_closed: a.include_closed,
    };
    let entries = open_service(ctx, &a.store)?.leaderboard(&q)?;
    if ctx.json {
        return ctx.emit_json(&entries);
    }
    ctx.line(&output::leaderboard(&entries))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_parse_json_or_string() {
        assert_eq!(parse_param("f1.average=macro").unwrap(), ("f1".into(), "average".into(), ParamValue::Str("macro".into())));
        assert_eq!(parse_param("bleu.max_order=3").unwrap().2, ParamValue::Int(3));
        assert_eq!(parse_param("x.y=0.5").unwrap().2, ParamValue::Float(0.5));
        assert_eq!(parse_param("x.y=true").unwrap().2, ParamValue::Bool(true));
        assert_eq!(parse_param("x.y=\"3\"").unwrap().2, ParamValue::Str("3".into()));
        for bad in ["noeq", "nodot=1", ".y=1", "x.=1"] {
            assert!(matches!(parse_param(bad), Err(Failure::Usage(_))), "{bad}");
        }
    }

    fn run_cli(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("evalkit").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn usage_errors_exit_one() {
        let (code, out, err) = run_cli(&["frobnicate"]);
        assert_eq!(code, EXIT_USER);
        assert!(out.is_empty());
        assert!(err.contains("frobnicate"));
        let (code, out, _) = run_cli(&["--help"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("leaderboard"));
    }

    #[test]
    fn validate_builtin_ids() {
        let (code, out, _) = run_cli(&["validate", "accuracy", "bleu"]);
        assert_eq!(code, EXIT_OK, "{out}");
        assert_eq!(out, "accuracy: ok\nbleu: ok\n");
        let (code, _, err) = run_cli(&["validate", "no_such_module_here"]);
        assert_eq!(code, EXIT_USER);
        assert!(err.contains("no_such_module_here"));
    }
}
