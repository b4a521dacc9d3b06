mod bench;
mod inputs;
mod remote;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use riskscope_core::api::{mechanism_from, parse_grid, OdometerView};
use riskscope_core::fixtures::{
    adult, adult_queries, adult_schema, patient_query, patient_schema, DEFAULT_FIXTURE_SEED, PATIENTS_CSV,
};
use riskscope_core::{
    analyze, AnswerConfig, Algorithm, Family, Odometer, PreparedQuery, PrivacyAmount, SearchOptions, Session,
};
use serde::Serialize;

use crate::inputs::{default_workers, parse_size, read_preference, Inputs, ScriptStep};

#[derive(Parser)]
#[command(name = "riskscope", version, about = "Per-instance privacy risk analysis and controlled release")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-ε RDR statistics for one query, as a JSON report.
    Analyze(AnalyzeArgs),
    /// Choose ε for one query and release a noisy answer.
    FindEps(FindEpsArgs),
    /// Apply a list of queries through one odometer.
    Session {
        #[command(subcommand)]
        command: SessionCommand,
    },
    /// Write the patient and census-style fixtures.
    Fixtures {
        #[command(subcommand)]
        command: FixturesCommand,
    },
    /// Time per-instance sensitivity and full searches, as CSV.
    Bench(bench::BenchArgs),
    /// Inspect an odometer journal.
    Odometer {
        #[command(subcommand)]
        command: OdometerCommand,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Talk to a running service.
    Remote(remote::RemoteArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Dataset CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Schema JSON.
    #[arg(long)]
    schema: PathBuf,
    /// Parallel workers for per-instance sensitivity.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct MechanismArgs {
    #[arg(long, value_parser = parse_family)]
    mechanism: Option<Family>,
    #[arg(long)]
    delta: Option<f64>,
    /// `default37` or a comma-separated descending list.
    #[arg(long, default_value = "default37")]
    grid: String,
    #[arg(long)]
    sensitivity_override: Option<f64>,
}

fn parse_family(s: &str) -> std::result::Result<Family, String> {
    s.parse().map_err(|e: riskscope_core::Error| e.to_string())
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Query JSON.
    #[arg(long)]
    query: PathBuf,
    #[command(flatten)]
    mechanism: MechanismArgs,
    /// Consumed budget; candidates at or below it are dropped.
    #[arg(long, default_value = "0")]
    eps_c: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FindEpsArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    query: PathBuf,
    #[command(flatten)]
    mechanism: MechanismArgs,
    #[arg(long, value_parser = parse_algorithm, default_value = "rdr")]
    algorithm: Algorithm,
    /// Preference as inline JSON or a JSON file path.
    #[arg(long, conflicts_with_all = ["tau_p", "tau_var"])]
    preference: Option<String>,
    #[arg(long)]
    tau_p: Option<f64>,
    #[arg(long)]
    tau_var: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = riskscope_core::session::DEFAULT_EPS_SVT)]
    eps_svt: f64,
    #[arg(long, default_value = "query")]
    query_id: String,
    /// Append the charge to this journal instead of a fresh in-memory odometer.
    #[arg(long)]
    journal: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    delta_g: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_algorithm(s: &str) -> std::result::Result<Algorithm, String> {
    s.parse().map_err(|e: riskscope_core::Error| e.to_string())
}

#[derive(Subcommand)]
enum SessionCommand {
    /// Answer each step of a JSON script in order and print the decisions.
    Replay {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        script: PathBuf,
        #[arg(long)]
        journal: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        delta_g: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum FixturesCommand {
    Gen {
        #[arg(long, default_value = "fixtures")]
        out_dir: PathBuf,
        /// Census sizes to write, e.g. `1k,10k,100k,1m`.
        #[arg(long, default_value = "1k", value_delimiter = ',', value_parser = parse_size)]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = DEFAULT_FIXTURE_SEED)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum OdometerCommand {
    Show {
        #[arg(long)]
        journal: PathBuf,
        #[arg(long)]
        dataset_id: Option<String>,
        #[arg(long, default_value_t = 0.0)]
        delta_g: f64,
    },
}

/// Errors whose cause is the caller's input rather than the program.
#[derive(Debug)]
struct DataError(anyhow::Error);

impl std::fmt::Display for DataError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for DataError {}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<DataError>() {
            return 3;
        }
        if let Some(core) = cause.downcast_ref::<riskscope_core::Error>() {
            return if core.is_input_error() { 3 } else { 4 };
        }
        if let Some(svc) = cause.downcast_ref::<riskscope_service::ServiceError>() {
            return match svc {
                riskscope_service::ServiceError::Config(_) => 3,
                riskscope_service::ServiceError::Core(c) if c.is_input_error() => 3,
                _ => 4,
            };
        }
        if let Some(riskscope_client::ClientError::Api { status, .. }) = cause.downcast_ref() {
            return if status.is_client_error() { 3 } else { 4 };
        }
    }
    4
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Analyze(args) => cmd_analyze(args),
        Command::FindEps(args) => cmd_find_eps(args),
        Command::Session {
            command:
                SessionCommand::Replay {
                    data,
                    script,
                    journal,
                    delta_g,
                    out,
                },
        } => cmd_replay(data, &script, journal, delta_g, out),
        Command::Fixtures {
            command: FixturesCommand::Gen { out_dir, sizes, seed },
        } => cmd_fixtures(&out_dir, &sizes, seed),
        Command::Bench(args) => bench::run(args),
        Command::Odometer {
            command:
                OdometerCommand::Show {
                    journal,
                    dataset_id,
                    delta_g,
                },
        } => {
            if !journal.is_file() {
                return Err(DataError(anyhow::anyhow!("journal {} not found", journal.display())).into());
            }
            let id = dataset_id.unwrap_or_else(|| stem(&journal));
            let odo = Odometer::open(&journal, id.as_str(), amount(delta_g)?)?;
            emit(&OdometerView::from(odo.state()), None)
        }
        Command::Serve { config } => {
            tracing_subscriber::fmt()
                .with_env_filter(
                    tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
                )
                .with_writer(std::io::stderr)
                .init();
            let cfg = riskscope_service::ServiceConfig::load(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            tokio::runtime::Runtime::new()?.block_on(riskscope_service::serve(cfg))?;
            Ok(())
        }
        Command::Remote(args) => remote::run(args),
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned())
}

fn amount(v: f64) -> Result<PrivacyAmount> {
    PrivacyAmount::from_f64(v).map_err(|e| DataError(e.into()).into())
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn options(data: &DataArgs, m: &MechanismArgs) -> SearchOptions {
    SearchOptions {
        workers: data.workers.unwrap_or_else(default_workers),
        sensitivity_override: m.sensitivity_override,
    }
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<()> {
    let inputs = Inputs::load(&args.data.data, &args.data.schema)?;
    let query = inputs.query(&args.query)?;
    let mechanism = mechanism_from(args.mechanism.mechanism, args.mechanism.delta)?;
    let grid = parse_grid(&args.mechanism.grid)?;
    let eps_c: PrivacyAmount = args.eps_c.parse()?;
    let prepared = PreparedQuery::prepare(
        &inputs.dataset,
        &query,
        mechanism,
        options(&args.data, &args.mechanism),
    )?;
    emit(&analyze(&prepared, &grid, eps_c)?, args.out.as_deref())
}

fn cmd_find_eps(args: FindEpsArgs) -> Result<()> {
    let inputs = Inputs::load(&args.data.data, &args.data.schema)?;
    let query = inputs.query(&args.query)?;
    let preference = read_preference(args.preference.as_deref(), args.tau_p, args.tau_var)?;
    let config = AnswerConfig {
        algorithm: args.algorithm,
        preference,
        mechanism: mechanism_from(args.mechanism.mechanism, args.mechanism.delta)?,
        grid: parse_grid(&args.mechanism.grid)?,
        seed: args.seed,
        eps_svt: args.eps_svt,
        options: options(&args.data, &args.mechanism),
    };
    let id = stem(&args.data.data);
    let delta_g = amount(args.delta_g)?;
    let odometer = match &args.journal {
        Some(path) => Odometer::open(path, id.as_str(), delta_g)?,
        None => Odometer::in_memory(id.as_str(), delta_g),
    };
    let mut session = Session::new(id, Arc::new(inputs.dataset), odometer);
    let record = session.answer_query(&args.query_id, &query, &config)?;
    emit(&record, args.out.as_deref())
}

#[derive(Serialize)]
struct ReplayOutput {
    decisions: Vec<riskscope_core::DecisionRecord>,
    odometer: OdometerView,
}

fn cmd_replay(data: DataArgs, script: &Path, journal: Option<PathBuf>, delta_g: f64, out: Option<PathBuf>) -> Result<()> {
    let inputs = Inputs::load(&data.data, &data.schema)?;
    let text = std::fs::read_to_string(script)
        .with_context(|| format!("reading {}", script.display()))
        .map_err(DataError)?;
    let steps: Vec<ScriptStep> = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", script.display()))
        .map_err(DataError)?;
    let id = stem(&data.data);
    let odometer = match &journal {
        Some(path) => Odometer::open(path, id.as_str(), amount(delta_g)?)?,
        None => Odometer::in_memory(id.as_str(), amount(delta_g)?),
    };
    let workers = data.workers.unwrap_or_else(default_workers);
    let mut session = Session::new(id, Arc::new(inputs.dataset), odometer);
    let mut decisions = Vec::with_capacity(steps.len());
    for (i, step) in steps.iter().enumerate() {
        let query_id = step.query_id.clone().unwrap_or_else(|| format!("q{}", i + 1));
        let config = step.config(workers)?;
        decisions.push(
            session
                .answer_query(&query_id, &step.query, &config)
                .with_context(|| format!("step {} (`{query_id}`)", i + 1))?,
        );
    }
    let odometer = OdometerView::from(session.odometer().state());
    emit(&ReplayOutput { decisions, odometer }, out.as_deref())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn size_label(n: usize) -> String {
    match n {
        n if n >= 1_000_000 && n % 1_000_000 == 0 => format!("{}m", n / 1_000_000),
        n if n >= 1_000 && n % 1_000 == 0 => format!("{}k", n / 1_000),
        n => n.to_string(),
    }
}

fn cmd_fixtures(dir: &Path, sizes: &[usize], seed: u64) -> Result<()> {
    std::fs::create_dir_all(dir.join("queries"))?;
    std::fs::write(dir.join("patients.csv"), PATIENTS_CSV)?;
    write_json(&dir.join("patients.schema.json"), &patient_schema())?;
    write_json(&dir.join("queries/patient_count.json"), &patient_query())?;
    write_json(&dir.join("adult.schema.json"), &adult_schema())?;
    for (name, q) in adult_queries() {
        write_json(&dir.join(format!("queries/{name}.json")), &q)?;
    }
    for &n in sizes {
        let path = dir.join(format!("adult_{}.csv", size_label(n)));
        let file = std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        adult(n, seed)?.write_csv(std::io::BufWriter::new(file))?;
        eprintln!("wrote {} ({n} rows)", path.display());
    }
    Ok(())
}
