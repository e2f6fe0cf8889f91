mod commands;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "fairtarget", version, about = "Declared-target image generation and skin-tone audits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ask the provider for the demographic makeup of a prompt's concept.
    Retrieve(RetrieveArgs),
    /// Turn a prompt and a target into a generation plan.
    Plan(PlanArgs),
    /// Run a plan against an image backend.
    Generate(GenerateArgs),
    /// Classify the skin tone of every generated image.
    Audit(AuditArgs),
    /// Compare baseline and treated audits.
    Report(ReportArgs),
    /// Run a synthetic scenario end to end and check it against its expectation.
    Simulate(SimulateArgs),
}

#[derive(Args, Clone)]
struct ProviderArgs {
    /// Population the statistics should describe: us, global or free text.
    #[arg(long, default_value = "us")]
    scope: String,
    /// Canned provider responses (JSON object keyed by concept or concept@scope).
    #[arg(long)]
    fixture: Option<PathBuf>,
    /// Provider settings (TOML): endpoint, model, api_key_env, timeout_secs.
    #[arg(long)]
    provider_config: Option<PathBuf>,
    /// Chat model, overriding the provider config.
    #[arg(long)]
    model: Option<String>,
    #[arg(long, default_value = ".fairtarget/cache")]
    cache_dir: PathBuf,
    /// Always ask the provider.
    #[arg(long)]
    no_cache: bool,
    /// Minimum confidence for using retrieved statistics.
    #[arg(long, default_value_t = fairtarget::demographics::DEFAULT_CONFIDENCE_THRESHOLD)]
    threshold: f64,
    /// Use the fallback target whatever the provider says.
    #[arg(long)]
    fallback: bool,
}

#[derive(Args)]
struct RetrieveArgs {
    #[arg(long)]
    prompt: String,
    #[command(flatten)]
    provider: ProviderArgs,
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq, Debug)]
enum TargetKind {
    Uniform,
    Intermediate,
    Extreme,
    Fallback,
    Explicit,
    /// Base prompt only, no target.
    Baseline,
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq, Debug)]
enum SchemeArg {
    Bins3,
    Fitzpatrick,
    Monk,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    prompt: String,
    #[arg(long, value_enum, default_value = "uniform")]
    target: TargetKind,
    /// Images in total.
    #[arg(long, short = 'n')]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Skin-tone scheme for targets that are not retrieved.
    #[arg(long, value_enum, default_value = "bins3")]
    scheme: SchemeArg,
    /// Mixing weight for intermediate and extreme targets.
    #[arg(long)]
    alpha: Option<f64>,
    /// Focal category for extreme targets.
    #[arg(long)]
    focal: Option<String>,
    /// Comma-separated proportions for explicit targets, in scheme order.
    #[arg(long, value_delimiter = ',')]
    distribution: Option<Vec<f64>>,
    /// Plan over demographic groups retrieved from the provider.
    #[arg(long)]
    retrieve: bool,
    #[command(flatten)]
    provider: ProviderArgs,
    /// Run directory; plan.json is written here.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq, Debug)]
enum BackendKind {
    Synthetic,
    A1111,
    OpenaiImages,
}

#[derive(Args)]
struct GenerateArgs {
    /// Run directory holding plan.json.
    #[arg(long, default_value = ".")]
    run: PathBuf,
    #[arg(long, value_enum, default_value = "synthetic")]
    backend: BackendKind,
    /// Synthetic backend config (TOML or JSON).
    #[arg(long)]
    synthetic_config: Option<PathBuf>,
    /// Descriptor fidelity for the synthetic backend.
    #[arg(long)]
    fidelity: Option<f64>,
    /// Base URL of an AUTOMATIC1111-compatible server.
    #[arg(long, default_value = "http://127.0.0.1:7860")]
    url: String,
    /// Image model for the hosted backend.
    #[arg(long)]
    model: Option<String>,
    #[arg(long, default_value_t = 120)]
    timeout: u64,
    #[arg(long)]
    width: Option<u32>,
    #[arg(long)]
    height: Option<u32>,
    #[arg(long)]
    steps: Option<u32>,
    #[arg(long)]
    guidance: Option<f64>,
    #[arg(long, default_value_t = fairtarget::generation::DEFAULT_CONCURRENCY)]
    concurrency: usize,
    #[arg(long, default_value_t = 1)]
    retries: u32,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long, default_value = ".")]
    run: PathBuf,
    /// Face detector program; prints JSON boxes for the image path it is given.
    #[arg(long)]
    detector: Option<PathBuf>,
    #[arg(long = "detector-arg", allow_hyphen_values = true)]
    detector_args: Vec<String>,
    /// Use the centre crop even when the backend recorded a face box.
    #[arg(long)]
    ignore_sidecar_bbox: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Baseline run directory; pairs with the --treated at the same position.
    #[arg(long, required = true)]
    baseline: Vec<PathBuf>,
    #[arg(long, required = true)]
    treated: Vec<PathBuf>,
    /// Row labels; default is the concept of each base prompt.
    #[arg(long)]
    label: Vec<String>,
    #[arg(long, value_enum, default_value = "bins3")]
    scheme: SchemeArg,
    /// Occupation table CSV: occupation,status,siops,aliases.
    #[arg(long)]
    occupations: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Shipped scenario: high-status, moderate-status, low-status, smiling or occupations.
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    preset: Option<String>,
    /// Scenario file (TOML or JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Images per condition.
    #[arg(long, short = 'n')]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    fidelity: Option<f64>,
    #[arg(long, default_value = "sim-out")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Retrieve(a) => commands::retrieve(a),
        Command::Plan(a) => commands::plan(a),
        Command::Generate(a) => commands::generate(a),
        Command::Audit(a) => commands::audit(a),
        Command::Report(a) => commands::report(a),
        Command::Simulate(a) => commands::simulate(a),
    };
    match result {
        Ok(()) => ExitCode::from(exit::OK),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::code_for(&e))
        }
    }
}
