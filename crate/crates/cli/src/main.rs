use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use artiprior::config::{Config, PRESETS};
use artiprior::pipeline::{Run, Stage, StageStatus};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "artiprior", version, about = "Train and evaluate actionable priors for articulated objects")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file (applied on top of the preset).
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Starting configuration when no file is given.
    #[arg(long, global = true, default_value = "desk")]
    preset: String,
    /// Override a config key, e.g. `--set rl.epochs=20`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Run directory; defaults to `<data-root>/runs/<config hash prefix>`.
    #[arg(long, global = true, env = "ARTIPRIOR_RUN_DIR")]
    run_dir: Option<PathBuf>,
    #[arg(long, global = true, env = "ARTIPRIOR_DATA_ROOT", default_value = "artiprior-data")]
    data_root: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the procedural fleet and its splits.
    GenShapes,
    /// Pretrain the policy.
    TrainRl,
    /// Collect positive and negative interaction data with the policy.
    Collect,
    /// Train the perception heads on the collected data.
    TrainPerception,
    /// Alternate curiosity-driven policy and perception fine-tuning.
    Finetune,
    /// Scorer metrics and proposal coverage on held-out records.
    EvalPriors,
    /// Manipulation success on held-out shapes.
    EvalDownstream,
    /// Fine-tune with and without the curiosity term and compare.
    Ablate,
    /// Export heatmap, proposal and score-map files.
    Visualize {
        /// Bundle checkpoint; defaults to the newest one in the run.
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run all stages in order, skipping completed ones.
    Pipeline {
        /// Re-run this stage and every later one.
        #[arg(long)]
        from: Option<String>,
    },
    /// Print the resolved configuration and its hash.
    ShowConfig,
}

fn resolve_config(c: &Common) -> anyhow::Result<Config> {
    let base = match &c.config {
        Some(p) => Config::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => Config::preset(&c.preset).with_context(|| format!("presets: {PRESETS:?}"))?,
    };
    Ok(base.with_overrides(&c.overrides)?)
}

fn run_dir(c: &Common, cfg: &Config) -> PathBuf {
    c.run_dir.clone().unwrap_or_else(|| c.data_root.join("runs").join(&cfg.hash()[..12]))
}

fn print_json<T: serde::Serialize>(v: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn stage(run: &Run, st: Stage) -> anyhow::Result<()> {
    run.run_stage(st)?;
    println!("{st}: done ({})", run.root.display());
    Ok(())
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    let cfg = resolve_config(&cli.common)?;
    if let Command::ShowConfig = cli.command {
        println!("# config_hash = {}", cfg.hash());
        print!("{}", cfg.to_toml_string()?);
        return Ok(());
    }
    let dir = run_dir(&cli.common, &cfg);
    let run = Run::open(&dir, cfg)?;
    match cli.command {
        Command::GenShapes => stage(&run, Stage::GenShapes),
        Command::TrainRl => stage(&run, Stage::RlPretrain),
        Command::Collect => stage(&run, Stage::Collect),
        Command::TrainPerception => stage(&run, Stage::Perception),
        Command::Finetune => stage(&run, Stage::Finetune),
        Command::EvalPriors => print_json(&run.eval_priors()?),
        Command::EvalDownstream => print_json(&run.eval_downstream()?),
        Command::Ablate => {
            let cfg = run.config.finetune.clone();
            print_json(&run.curiosity_ablation(&cfg)?)
        }
        Command::Visualize { bundle, out } => {
            let out = out.unwrap_or_else(|| run.root.join("visuals"));
            let files = run.visualize(bundle.as_deref().map(Path::new), &out)?;
            println!("{}\n{}\n{}", files.actionability.display(), files.proposals.display(), files.scores.display());
            Ok(())
        }
        Command::Pipeline { from } => {
            let from = from.map(|s| s.parse::<Stage>()).transpose()?;
            for (st, status) in run.run_all(from)? {
                let word = if status == StageStatus::Ran { "ran" } else { "skipped" };
                println!("{st}: {word}");
            }
            Ok(())
        }
        Command::ShowConfig => bail!("handled above"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
