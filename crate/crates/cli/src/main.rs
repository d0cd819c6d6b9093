//! `greenrunner`: headless zoo generation, experiment runs and baseline comparisons.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use greenrunner_core::bandit::{BanditError, DEFAULT_EPSILON, DEFAULT_UCB_C};
use greenrunner_core::baselines::BaselineError;
use greenrunner_core::comparison::{export_comparison, run_comparison, ComparisonError, ComparisonSettings};
use greenrunner_core::fixtures::{mirror_zoo, ZooParams};
use greenrunner_core::oracle::{HttpEvaluationClient, SyntheticSpecDocument};
use greenrunner_core::reasoning::DEFAULT_PARSE_RETRIES;
use greenrunner_core::{
    export_report, make_synthetic_zoo, run_experiment, suggest_weights, DatasetManifest, EvaluationBackend,
    ExperimentConfig, ExportFormat, MeteredOracle, OracleError, Reasoner, Repository, Strategy, WeightProfile,
};

const SUGGESTION_REPEATS: u32 = 5;

#[derive(Debug, Parser)]
#[command(name = "greenrunner", version, about = "Budgeted model selection from the command line")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic repository, matching latent-accuracy spec and manifest.
    ZooGenerate(ZooArgs),
    /// Run one bandit experiment and emit its report.
    Run(RunArgs),
    /// Compare benchmark, brute force and repeated bandit runs.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
struct ZooArgs {
    #[arg(long, default_value_t = 10)]
    n_models: usize,
    #[arg(long, value_parser = parse_range, default_value = "0.15,0.45")]
    accuracy_range: (f64, f64),
    #[arg(long, value_parser = parse_range, default_value = "22,2581")]
    size_range: (f64, f64),
    #[arg(long, value_parser = parse_range, default_value = "229,127750")]
    complexity_range: (f64, f64),
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Samples declared in the written manifest.
    #[arg(long, default_value_t = 100)]
    n_samples: usize,
    /// Write the fixed six-model mirror zoo instead of a random one.
    #[arg(long)]
    mirror: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StrategyArg {
    Epsilon,
    Ucb,
    Thompson,
    Greedy,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Epsilon => Strategy::EpsilonGreedy,
            StrategyArg::Ucb => Strategy::Ucb,
            StrategyArg::Thompson => Strategy::Thompson,
            StrategyArg::Greedy => Strategy::Greedy,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Doc,
    Table,
}

impl From<FormatArg> for ExportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Doc => ExportFormat::Document,
            FormatArg::Table => ExportFormat::Table,
        }
    }
}

#[derive(Debug, Args)]
struct CommonArgs {
    #[arg(long)]
    repo: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Latent accuracies for a simulated oracle. Without it the evaluation
    /// service in GREENRUNNER_EVAL_URL is used.
    #[arg(long)]
    synthetic: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "thompson")]
    strategy: StrategyArg,
    #[arg(long)]
    budget: u64,
    /// Explicit weights as accuracy,size,complexity.
    #[arg(long, value_parser = parse_weights, conflicts_with = "use_case", required_unless_present = "use_case")]
    weights: Option<WeightProfile>,
    /// Use-case text for suggested weights.
    #[arg(long)]
    use_case: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    #[arg(long, default_value_t = DEFAULT_UCB_C)]
    ucb_c: f64,
    #[arg(long, value_enum, default_value = "doc")]
    format: FormatArg,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Write the pull trace as JSON lines.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value_t = 1)]
    iterations: usize,
    /// Draw a fresh sample subset for every iteration.
    #[arg(long)]
    resample: bool,
    #[arg(long, default_value_t = 4)]
    threads: usize,
}

fn parse_pair(text: &str) -> Result<Vec<f64>, String> {
    text.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect()
}

fn parse_range(text: &str) -> Result<(f64, f64), String> {
    match parse_pair(text)?.as_slice() {
        &[lo, hi] => Ok((lo, hi)),
        _ => Err("expected lo,hi".into()),
    }
}

fn parse_weights(text: &str) -> Result<WeightProfile, String> {
    match parse_pair(text)?.as_slice() {
        &[a, s, c] => {
            let w = WeightProfile::new(a, s, c);
            w.validate().map_err(|e| e.to_string())?;
            Ok(w)
        }
        _ => Err("expected accuracy,size,complexity".into()),
    }
}

/// Failures split by exit code: 1 for bad input, 2 for everything that broke at runtime.
#[derive(Debug)]
enum Failure {
    Validation(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

impl From<OracleError> for Failure {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::Unavailable(_) => Failure::Runtime(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

impl From<BanditError> for Failure {
    fn from(e: BanditError) -> Self {
        match e {
            BanditError::Config(_) | BanditError::Reward(_) => Failure::Validation(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<ComparisonError> for Failure {
    fn from(e: ComparisonError) -> Self {
        match e {
            ComparisonError::NoIterations => Failure::Validation(e.to_string()),
            ComparisonError::Oracle(e) => e.into(),
            ComparisonError::Bandit(e) => e.into(),
            ComparisonError::Baseline(BaselineError::Oracle(e)) => e.into(),
            ComparisonError::Baseline(e) => Failure::Validation(e.to_string()),
            ComparisonError::Report(e) => Failure::Runtime(e.to_string()),
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn validation(e: impl std::fmt::Display) -> Failure {
    Failure::Validation(e.to_string())
}

struct Inputs {
    repo: Repository,
    manifest: DatasetManifest,
    synthetic: Option<SyntheticSpecDocument>,
    weights: WeightProfile,
    weights_source: String,
}

fn load_inputs(args: &CommonArgs) -> Result<Inputs, Failure> {
    let repo = Repository::from_path(&args.repo, true).map_err(validation)?;
    let manifest = DatasetManifest::from_path(&args.manifest)?;
    let synthetic = args.synthetic.as_ref().map(SyntheticSpecDocument::from_path).transpose()?;
    let (weights, weights_source) = match (&args.weights, &args.use_case) {
        (Some(w), _) => (w.clone(), "explicit".to_string()),
        (None, Some(use_case)) => {
            let reasoner = Reasoner::from_env().map_err(validation)?;
            let suggestion =
                suggest_weights(use_case, SUGGESTION_REPEATS, &reasoner, DEFAULT_PARSE_RETRIES).map_err(|e| match e {
                    greenrunner_core::reasoning::ReasoningError::EmptyUseCase => validation(e),
                    other => runtime(other),
                })?;
            eprintln!(
                "weights {} suggested by {}",
                suggestion.profile.label(),
                suggestion.source.as_str()
            );
            (suggestion.profile, suggestion.source.as_str().to_string())
        }
        (None, None) => return Err(Failure::Validation("one of --weights or --use-case is required".into())),
    };
    Ok(Inputs {
        repo,
        manifest,
        synthetic,
        weights,
        weights_source,
    })
}

fn build_oracle(
    repo: &Repository,
    synthetic: Option<&SyntheticSpecDocument>,
    manifest: &DatasetManifest,
) -> Result<Box<dyn EvaluationBackend>, OracleError> {
    match synthetic {
        Some(doc) => Ok(Box::new(make_synthetic_zoo(&doc.models, manifest)?)),
        None => {
            let client = HttpEvaluationClient::from_env().ok_or_else(|| {
                OracleError::InvalidSpec("no --synthetic spec and no evaluation service configured".into())
            })??;
            Ok(Box::new(MeteredOracle::for_repository(client, repo, manifest.n_samples)?))
        }
    }
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    match path {
        Some(p) => Ok(Box::new(io::BufWriter::new(
            fs::File::create(p).map_err(|e| runtime(format!("{}: {e}", p.display())))?,
        ))),
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn cmd_zoo_generate(args: &ZooArgs) -> Result<(), Failure> {
    let specs = if args.mirror {
        mirror_zoo()
    } else {
        let params = ZooParams {
            n_models: args.n_models,
            accuracy_range: args.accuracy_range,
            size_range: args.size_range,
            complexity_range: args.complexity_range,
            ..ZooParams::default()
        };
        params.generate(args.seed).map_err(Failure::Validation)?
    };
    let manifest = DatasetManifest::new("synthetic", args.n_samples, args.seed);
    manifest.validate()?;
    let doc = SyntheticSpecDocument::new(specs);
    let repo = doc.repository().map_err(validation)?;

    fs::create_dir_all(&args.out).map_err(|e| runtime(format!("{}: {e}", args.out.display())))?;
    let write = |name: &str, value: serde_json::Value| {
        let path = args.out.join(name);
        let mut text = serde_json::to_string_pretty(&value).map_err(runtime)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| runtime(format!("{}: {e}", path.display())))
    };
    write("repository.json", serde_json::to_value(repo.to_document()).map_err(runtime)?)?;
    write("synthetic.json", serde_json::to_value(&doc).map_err(runtime)?)?;
    write("manifest.json", serde_json::to_value(&manifest).map_err(runtime)?)?;
    eprintln!("wrote {} models to {}", repo.len(), args.out.display());
    Ok(())
}

fn cmd_run(args: &RunArgs) -> Result<(), Failure> {
    let common = &args.common;
    let inputs = load_inputs(common)?;
    let oracle = build_oracle(&inputs.repo, inputs.synthetic.as_ref(), &inputs.manifest)?;
    let mut config = ExperimentConfig::new(
        common.strategy.into(),
        common.budget,
        inputs.weights,
        common.seed,
        inputs.manifest,
    );
    config.epsilon = common.epsilon;
    config.ucb_c = common.ucb_c;
    config.trace_path = args.trace.clone();
    let mut report = run_experiment(&config, &inputs.repo, oracle.as_ref())?.report;
    report.weights_source = Some(inputs.weights_source);
    let mut out = open_out(common.out.as_deref())?;
    export_report(&report, common.format.into(), &mut out).map_err(runtime)?;
    out.flush().map_err(runtime)
}

fn cmd_compare(args: &CompareArgs) -> Result<(), Failure> {
    let common = &args.common;
    let inputs = load_inputs(common)?;
    if inputs.synthetic.is_none() && HttpEvaluationClient::from_env().is_none() {
        return Err(Failure::Validation(
            "no --synthetic spec and no evaluation service configured".into(),
        ));
    }
    let mut settings = ComparisonSettings::new(inputs.weights, common.budget, args.iterations, common.seed);
    settings.strategy = common.strategy.into();
    settings.epsilon = common.epsilon;
    settings.ucb_c = common.ucb_c;
    settings.resample = args.resample;
    settings.threads = args.threads.max(1);
    let repo = &inputs.repo;
    let synthetic = inputs.synthetic.as_ref();
    let factory = |m: &DatasetManifest| build_oracle(repo, synthetic, m);
    let comparison = run_comparison(repo, &inputs.manifest, &settings, &factory)?;
    let mut out = open_out(common.out.as_deref())?;
    export_comparison(&comparison, common.format.into(), &mut out).map_err(runtime)?;
    out.flush().map_err(runtime)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::ZooGenerate(args) => cmd_zoo_generate(args),
        Command::Run(args) => cmd_run(args),
        Command::Compare(args) => cmd_compare(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            match &failure {
                Failure::Validation(m) => eprintln!("error: {m}"),
                Failure::Runtime(m) => eprintln!("runtime error: {m}"),
            }
            ExitCode::from(failure.code())
        }
    }
}
