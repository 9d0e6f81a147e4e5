//! Command-line entry point for the latent terrain prediction
//! pipeline: dataset generation, model training, latent-space and
//! navigation evaluation, and report assembly.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use latflow_cli::commands::{self, BaselineKind, BaselinePick, NavArgs};
use latflow_cli::config::RunConfig;
use latflow_core::nav::{MapSource, ScenarioKind};
use latflow_core::world::CropKind;

#[derive(Parser)]
#[command(name = "latflow", version = latflow_cli::VERSION, about = "Latent terrain prediction pipeline")]
struct Cli {
    /// TOML configuration file; defaults apply for anything omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the command's configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Collect latent training pairs from procedural worlds.
    GenData,
    /// Train a height-map VAE for one crop kind.
    TrainVae {
        #[arg(long, value_parser = parse_kind)]
        kind: CropKind,
    },
    /// Train the conditional velocity field (or its unconditional ablation).
    TrainFlow {
        #[arg(long)]
        unconditional: bool,
    },
    /// Train a baseline latent predictor.
    TrainBaseline {
        #[arg(long, value_parser = parse_baseline)]
        kind: BaselineKind,
    },
    /// Score every trained predictor on the held-out splits.
    EvalLatent,
    /// Run closed-loop navigation episodes over scenarios and map sources.
    EvalNav {
        /// One of maze_easy, maze_hard, hallway; all three when omitted.
        #[arg(long, value_parser = parse_scenario)]
        scenario: Option<ScenarioKind>,
        /// One of observed_only, ground_truth_extended, predicted; all when omitted.
        #[arg(long, value_parser = parse_source)]
        source: Option<MapSource>,
        /// Checkpoint behind the predicted source.
        #[arg(long, value_parser = parse_pick, default_value = "flow")]
        predictor: BaselinePick,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Assemble the metric CSVs into a markdown report.
    Report,
}

fn parse_kind(s: &str) -> Result<CropKind, String> {
    match s {
        "local" => Ok(CropKind::Local),
        "extended" => Ok(CropKind::Extended),
        _ => Err(format!("unknown crop kind {s:?} (expected local or extended)")),
    }
}

fn parse_baseline(s: &str) -> Result<BaselineKind, String> {
    match s {
        "mlp" => Ok(BaselineKind::Mlp),
        "diffusion" => Ok(BaselineKind::Diffusion),
        _ => Err(format!("unknown baseline {s:?} (expected mlp or diffusion)")),
    }
}

fn parse_pick(s: &str) -> Result<BaselinePick, String> {
    match s {
        "flow" => Ok(BaselinePick::Flow),
        "mlp" => Ok(BaselinePick::Mlp),
        "diffusion" => Ok(BaselinePick::Diffusion),
        _ => Err(format!(
            "unknown predictor {s:?} (expected flow, mlp, or diffusion)"
        )),
    }
}

fn parse_scenario(s: &str) -> Result<ScenarioKind, String> {
    ScenarioKind::parse(s).ok_or_else(|| {
        format!("unknown scenario {s:?} (expected maze_easy, maze_hard, or hallway)")
    })
}

fn parse_source(s: &str) -> Result<MapSource, String> {
    MapSource::parse(s).ok_or_else(|| {
        format!(
            "unknown map source {s:?} (expected observed_only, ground_truth_extended, or predicted)"
        )
    })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::GenData => commands::gen_data(&cfg, cli.seed),
        Command::TrainVae { kind } => commands::train_vae(&cfg, kind, cli.seed),
        Command::TrainFlow { unconditional } => {
            commands::train_flow(&cfg, !unconditional, cli.seed)
        }
        Command::TrainBaseline { kind } => commands::train_baseline(&cfg, kind, cli.seed),
        Command::EvalLatent => commands::eval_latent(&cfg, cli.seed),
        Command::EvalNav {
            scenario,
            source,
            predictor,
            episodes,
        } => commands::eval_nav(
            &cfg,
            NavArgs {
                scenario,
                source,
                predictor,
                episodes,
            },
            cli.seed,
        ),
        Command::Report => commands::report(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
