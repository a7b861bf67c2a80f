use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rwre_core::harness::{self, Experiment, ExperimentConfig};
use rwre_core::{EnvSpec, Error, Result};

#[derive(Parser)]
#[command(name = "rwre", version, about = "Random walk in random environment: simulation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cumulant profile, tail index and deviation window of an environment.
    AnalyzeEnv(AnalyzeArgs),
    /// Exact walk/branching identities and two-sample checks.
    Identities(RunArgs),
    /// Regenerative estimates of the tail constants.
    Constants(RunArgs),
    /// Lower deviations of the position in the ballistic regime.
    ThmMain1(RunArgs),
    /// Lower deviations of the position in the sub-ballistic regime.
    ThmMain2(RunArgs),
    /// Upper deviations of the total progeny.
    ThmWn(RunArgs),
    /// Precise large deviations of the product of multipliers.
    BahadurRao(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<u64>,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// JSON holding an environment, either bare or under an "env" key.
    #[arg(long)]
    config: PathBuf,
    /// Threshold for the deviation window.
    #[arg(long)]
    x: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::AnalyzeEnv(a) => analyze(a),
        Command::Identities(a) => run(Experiment::Identities, a),
        Command::Constants(a) => run(Experiment::Constants, a),
        Command::ThmMain1(a) => run(Experiment::ThmMain1, a),
        Command::ThmMain2(a) => run(Experiment::ThmMain2, a),
        Command::ThmWn(a) => run(Experiment::ThmWn, a),
        Command::BahadurRao(a) => run(Experiment::BahadurRao, a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn read_json(path: &Path) -> Result<serde_json::Value> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn load_config(experiment: Experiment, args: &RunArgs) -> Result<ExperimentConfig> {
    let mut doc = read_json(&args.config)?;
    let obj = doc
        .as_object_mut()
        .ok_or_else(|| Error::Config("configuration must be a JSON object".into()))?;
    let name = experiment.as_str();
    match obj.get("experiment") {
        None => {
            obj.insert("experiment".into(), name.into());
        }
        Some(v) if v.as_str() == Some(name) => {}
        Some(v) => return Err(Error::Config(format!("config is for experiment {v}, not {name}"))),
    }
    let mut cfg: ExperimentConfig = serde_json::from_value(doc)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(r) = args.replicas {
        cfg.replicas = r;
    }
    if let Some(o) = &args.out {
        cfg.output = Some(o.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(experiment: Experiment, args: RunArgs) -> Result<()> {
    let cfg = load_config(experiment, &args)?;
    let outcome = harness::run(&cfg, args.workers)?;
    match &cfg.output {
        Some(path) => {
            let mut buf = Vec::new();
            outcome.write_csv(&mut buf)?;
            std::fs::write(path, buf)?;
            let mut side = path.clone().into_os_string();
            side.push(".summary.json");
            std::fs::write(side, outcome.to_json()?)?;
        }
        None => outcome.write_csv(std::io::stdout().lock())?,
    }
    let mut err = std::io::stderr().lock();
    for n in outcome.notes() {
        writeln!(err, "note: {n}")?;
    }
    for (name, ok) in outcome.checks() {
        writeln!(err, "{} {name}", if *ok { "PASS" } else { "FAIL" })?;
    }
    Ok(())
}

fn analyze(args: AnalyzeArgs) -> Result<()> {
    let doc = read_json(&args.config)?;
    let env_doc = doc.get("env").cloned().unwrap_or(doc);
    let env: EnvSpec = serde_json::from_value(env_doc)?;
    let report = harness::analyze_env(&env, args.x, args.delta)?;
    let text = serde_json::to_string_pretty(&report)?;
    match args.out {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}
