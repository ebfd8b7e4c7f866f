//! `crowdnav`: train, evaluate, replay and benchmark map-based crowd
//! navigation policies.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use crowdnav::app::{self, CheckpointEntry, Overrides, RunConfig};
use crowdnav::env::{ActionMode, ScenarioKind};
use crowdnav::pedestrians::Strategy;

#[derive(Parser, Debug)]
#[command(name = "crowdnav", version, about = "Map-based crowd navigation with PPO")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML run configuration; flags override its values
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// random, circular, ppo-circular or solo
    #[arg(long, global = true, value_name = "KIND")]
    scenario: Option<ScenarioKind>,
    /// Pedestrian model: orca, sfm or none
    #[arg(long, global = true)]
    strategy: Option<Strategy>,
    /// discrete or continuous
    #[arg(long, global = true)]
    mode: Option<ActionMode>,
    /// Zero the pedestrian-map channels (sensor-map-only ablation)
    #[arg(long, global = true)]
    no_ped_map: bool,
    /// Evaluation episodes per scenario
    #[arg(long, global = true, value_name = "N")]
    episodes: Option<usize>,
    /// Output directory [default: runs/<command>]
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a policy with PPO
    Train {
        #[arg(long, value_name = "N")]
        iterations: Option<u64>,
        #[arg(long, value_name = "N")]
        checkpoint_every: Option<u64>,
        /// Continue from this checkpoint
        #[arg(long, value_name = "PATH")]
        resume: Option<PathBuf>,
    },
    /// Compare the ORCA baseline and trained checkpoints
    Eval {
        /// Policy to evaluate, repeatable
        #[arg(long = "checkpoint", value_name = "NAME=PATH", value_parser = parse_checkpoint)]
        checkpoints: Vec<CheckpointEntry>,
        /// Skip the ORCA baseline
        #[arg(long)]
        no_baseline: bool,
        /// Trajectory files kept per method and scenario
        #[arg(long, value_name = "N")]
        trajectories: Option<usize>,
    },
    /// Render a trajectory file as SVG
    Replay {
        trajectory: PathBuf,
        /// Also dump each robot's observation maps per tick as PGM
        #[arg(long)]
        maps: bool,
    },
    /// Measure simulator, perception and inference throughput
    Bench,
}

fn parse_checkpoint(s: &str) -> Result<CheckpointEntry, String> {
    let (name, path) = s.split_once('=').ok_or("expected NAME=PATH")?;
    if name.is_empty() || path.is_empty() {
        return Err("expected NAME=PATH".into());
    }
    Ok(CheckpointEntry {
        name: name.to_string(),
        path: path.into(),
        use_pedestrian_map: true,
    })
}

fn resolve(common: &Common, extra: Overrides) -> Result<RunConfig> {
    let text = match &common.config {
        Some(p) => Some(std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?),
        None => None,
    };
    let o = Overrides {
        seed: common.seed,
        scenario: common.scenario,
        strategy: common.strategy,
        mode: common.mode,
        no_ped_map: common.no_ped_map,
        episodes: common.episodes,
        ..extra
    };
    Ok(RunConfig::resolve(text.as_deref(), &o)?)
}

fn run(cli: Cli) -> Result<()> {
    let out = |name: &str| cli.common.out.clone().unwrap_or_else(|| Path::new("runs").join(name));
    match cli.command {
        Command::Train {
            iterations,
            checkpoint_every,
            resume,
        } => {
            let cfg = resolve(
                &cli.common,
                Overrides {
                    iterations,
                    checkpoint_every,
                    resume,
                    ..Default::default()
                },
            )?;
            let dir = out("train");
            let s = app::cmd_train(&cfg, &dir)?;
            println!("trained to iteration {} in {}", s.final_iteration, dir.display());
        }
        Command::Eval {
            checkpoints,
            no_baseline,
            trajectories,
        } => {
            let cfg = resolve(
                &cli.common,
                Overrides {
                    checkpoints,
                    no_baseline,
                    trajectories,
                    ..Default::default()
                },
            )?;
            let dir = out("eval");
            let run = app::cmd_eval(&cfg, &dir)?;
            print!("{}", run.report.to_csv());
        }
        Command::Replay { trajectory, maps } => {
            let cfg = resolve(&cli.common, Overrides::default())?;
            let dir = out("replay");
            let ticks = app::cmd_replay(&cfg, &trajectory, &dir, maps)?;
            println!("rendered {ticks} ticks to {}", dir.display());
        }
        Command::Bench => {
            let episodes = cli.common.episodes.unwrap_or(5);
            let cfg = resolve(&cli.common, Overrides::default())?;
            let lines = app::cmd_bench(&cfg, episodes)?;
            let mut text = String::new();
            for l in &lines {
                text.push_str(&format!(
                    "{:<40} {:>8} {:<12} {:>9.3} s {:>12.1}/s\n",
                    l.name,
                    l.count,
                    l.unit,
                    l.seconds,
                    l.rate()
                ));
            }
            print!("{text}");
            if let Some(dir) = &cli.common.out {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join("config.toml"), cfg.to_toml()?)?;
                std::fs::write(dir.join("bench.txt"), text)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
