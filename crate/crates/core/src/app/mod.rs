//! Run orchestration behind the `crowdnav` binary: configuration, the
//! train / eval / replay / bench commands and their on-disk artifacts.
//!
//! Every command writes the resolved configuration as `config.toml` into its
//! output directory. Given the same configuration, seed and checkpoints, all
//! artifacts except bench timings are bit-identical across runs.

mod config;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use glam::DVec2;
use thiserror::Error;

use crate::env::Outcome;
use crate::error::ParseError;
use crate::eval::{records_to_jsonl, run_comparison, run_episode, EvalConfig, EvalError, Method, RunOutput};
use crate::io::{format_row, parse_log, render_curves, render_scene, Trajectory, LOG_HEADER};
use crate::net::{load_checkpoint, save_checkpoint, ActorCritic, Checkpoint, CheckpointError, NetError};
use crate::pedestrians::Pedestrian;
use crate::perception::build_observation;
use crate::ppo::{scenario_envs, IterationLog, PpoError, Trainer};
use crate::world::{AgentBody, AgentKind, Pose2D, WorldState};

pub use config::{scenario_selection, CheckpointEntry, EvalSettings, Overrides, RunConfig, TrainSettings};

#[derive(Debug, Error)]
pub enum AppError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Parse {
        path: PathBuf,
        #[source]
        source: ParseError,
    },
    #[error("checkpoint {}: {source}", path.display())]
    Checkpoint {
        path: PathBuf,
        #[source]
        source: CheckpointError,
    },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Ppo(#[from] PpoError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> AppError + '_ {
    move |source| AppError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), AppError> {
    fs::write(path, bytes).map_err(io_err(path))
}

fn create_dir(path: &Path) -> Result<(), AppError> {
    fs::create_dir_all(path).map_err(io_err(path))
}

fn write_config(cfg: &RunConfig, out: &Path) -> Result<(), AppError> {
    create_dir(out)?;
    write_file(&out.join("config.toml"), cfg.to_toml()?)
}

/// Reads and verifies a checkpoint against the configured architecture.
pub fn read_checkpoint(path: &Path, cfg: &RunConfig) -> Result<Checkpoint, AppError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    load_checkpoint(&bytes, Some(&cfg.policy)).map_err(|source| AppError::Checkpoint {
        path: path.to_path_buf(),
        source,
    })
}

pub fn checkpoint_name(iteration: u64) -> String {
    format!("iter_{iteration:06}.ckpt")
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    /// Every log row in `train_log.tsv`, including rows kept from before a
    /// resume.
    pub log: Vec<IterationLog>,
    pub final_iteration: u64,
}

/// Trains for `train.iterations` total iterations, resuming from
/// `train.resume` or from `checkpoints/latest.ckpt` in `out` if present.
///
/// Writes `config.toml`, `train_log.tsv`, `checkpoints/iter_NNNNNN.ckpt`
/// (the initial model and every `checkpoint_every` iterations),
/// `checkpoints/latest.ckpt`, `checkpoints/final.ckpt` and `curves.svg`.
pub fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<TrainSummary, AppError> {
    write_config(cfg, out)?;
    let ckpt_dir = out.join("checkpoints");
    create_dir(&ckpt_dir)?;
    let latest = ckpt_dir.join("latest.ckpt");
    let log_path = out.join("train_log.tsv");

    let pairs: Vec<_> = cfg.train.scenarios.iter().map(|s| (s.kind, s.strategy)).collect();
    let envs = scenario_envs(&cfg.env, &pairs, cfg.train.num_envs, cfg.seed);
    let resume = cfg.train.resume.clone().or_else(|| latest.exists().then(|| latest.clone()));

    let save = |trainer: &Trainer, name: &str| -> Result<(), AppError> {
        let bytes = save_checkpoint(&trainer.checkpoint());
        write_file(&ckpt_dir.join(name), &bytes)?;
        write_file(&latest, &bytes)
    };

    let (mut trainer, mut log) = match resume {
        Some(path) => {
            let ckpt = read_checkpoint(&path, cfg)?;
            log::info!("resuming from {} at iteration {}", path.display(), ckpt.iteration);
            let kept = match fs::read_to_string(&log_path) {
                Ok(text) => parse_log(&text).map_err(|source| AppError::Parse {
                    path: log_path.clone(),
                    source,
                })?,
                Err(_) => Vec::new(),
            };
            let kept = kept.into_iter().filter(|r| r.iteration < ckpt.iteration).collect();
            (Trainer::resume(ckpt, cfg.ppo.clone(), envs, cfg.seed)?, kept)
        }
        None => {
            let t = Trainer::new(cfg.policy.clone(), cfg.ppo.clone(), envs, cfg.seed)?;
            save(&t, &checkpoint_name(0))?;
            (t, Vec::new())
        }
    };

    let mut file = fs::File::create(&log_path).map_err(io_err(&log_path))?;
    let mut text = format!("{LOG_HEADER}\n");
    for r in &log {
        text.push_str(&format_row(r));
        text.push('\n');
    }
    file.write_all(text.as_bytes()).map_err(io_err(&log_path))?;

    while trainer.iteration() < cfg.train.iterations {
        let row = trainer.iterate()?;
        log::info!(
            "iteration {}: reward {:.2}, success {:.3}, kl {:.2e}{}",
            row.iteration,
            row.mean_reward,
            row.success_rate,
            row.approx_kl,
            if row.rolled_back { " (rolled back)" } else { "" }
        );
        writeln!(file, "{}", format_row(&row))
            .and_then(|_| file.flush())
            .map_err(io_err(&log_path))?;
        log.push(row);
        let every = cfg.train.checkpoint_every;
        if every > 0 && trainer.iteration() % every == 0 {
            save(&trainer, &checkpoint_name(trainer.iteration()))?;
        }
    }
    save(&trainer, "final.ckpt")?;
    write_file(&out.join("curves.svg"), render_curves(&log))?;
    Ok(TrainSummary {
        log,
        final_iteration: trainer.iteration(),
    })
}

/// Methods named in the configuration: the ORCA baseline (if enabled) and
/// one greedy policy per checkpoint.
pub fn eval_methods(cfg: &RunConfig) -> Result<Vec<Method>, AppError> {
    let mut methods = Vec::new();
    if cfg.eval.baseline {
        methods.push(Method::OrcaBaseline);
    }
    for entry in &cfg.eval.checkpoints {
        let ckpt = read_checkpoint(&entry.path, cfg)?;
        methods.push(Method::Policy {
            name: entry.name.clone(),
            model: ckpt.model,
            use_pedestrian_map: entry.use_pedestrian_map,
        });
    }
    if methods.is_empty() {
        return Err(AppError::Config("nothing to evaluate: baseline disabled and no checkpoints".into()));
    }
    Ok(methods)
}

pub fn eval_config(cfg: &RunConfig) -> EvalConfig {
    EvalConfig {
        episodes: cfg.eval.episodes,
        seed_base: cfg.seed,
        env: cfg.env.clone(),
        trajectories: cfg.eval.trajectories,
    }
}

/// Writes `config.toml`, `report.csv`, `report.json`, `records.jsonl` and
/// `trajectories/<method>_<scenario>_<episode>.traj`.
pub fn cmd_eval(cfg: &RunConfig, out: &Path) -> Result<RunOutput, AppError> {
    let methods = eval_methods(cfg)?;
    write_config(cfg, out)?;
    let run = run_comparison(&methods, &cfg.eval.scenarios, &eval_config(cfg))?;
    write_file(&out.join("report.csv"), run.report.to_csv())?;
    write_file(&out.join("report.json"), run.report.to_json())?;
    write_file(&out.join("records.jsonl"), records_to_jsonl(&run.records))?;
    let dir = out.join("trajectories");
    create_dir(&dir)?;
    for (method, scenario, ep, t) in &run.trajectories {
        write_file(&dir.join(format!("{method}_{scenario}_{ep:04}.traj")), t.to_string())?;
    }
    Ok(run)
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory, AppError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.parse().map_err(|source| AppError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

/// The world as recorded at `tick`. Pedestrian velocity is taken along the
/// recorded heading.
pub fn world_at(t: &Trajectory, tick: usize) -> WorldState {
    let mut world = WorldState::empty(t.bounds);
    world.obstacles = t.obstacles.clone();
    world.time = tick as f64 * t.dt;
    let mut robots: Vec<(usize, AgentBody)> = Vec::new();
    for r in t.records.iter().filter(|r| r.tick == tick) {
        let pose = Pose2D::new(r.x, r.y, r.theta);
        let velocity = DVec2::from_angle(r.theta) * r.v;
        match r.kind {
            AgentKind::Robot => robots.push((
                r.agent_id,
                AgentBody {
                    pose,
                    velocity,
                    radius: r.radius,
                    kind: AgentKind::Robot,
                },
            )),
            AgentKind::Pedestrian => {
                let mut p = Pedestrian::standing(pose.position(), r.radius);
                p.id = r.agent_id;
                p.body.pose = pose;
                p.body.velocity = velocity;
                p.gait.phase = r.phase.unwrap_or(0.0);
                world.pedestrians.push(p);
            }
        }
    }
    robots.sort_by_key(|(id, _)| *id);
    world.robots = robots.into_iter().map(|(_, b)| b).collect();
    world
}

/// Renders `scene.svg`; with `maps`, also writes each robot's sensor and
/// pedestrian maps for every tick as PGM images under `maps/`. Returns the
/// number of ticks.
pub fn cmd_replay(cfg: &RunConfig, trajectory: &Path, out: &Path, maps: bool) -> Result<usize, AppError> {
    let t = read_trajectory(trajectory)?;
    write_config(cfg, out)?;
    write_file(&out.join("scene.svg"), render_scene(&t))?;
    let ticks = t.last_tick().map_or(0, |k| k + 1);
    if maps {
        let dir = out.join("maps");
        create_dir(&dir)?;
        for tick in 0..ticks {
            let world = world_at(&t, tick);
            for &(i, goal) in &t.goals {
                let live = t.records.iter().any(|r| {
                    r.tick == tick && r.kind == AgentKind::Robot && r.agent_id == i && r.outcome == Some(Outcome::Running)
                });
                if i >= world.robots.len() || !(live || tick == 0) {
                    continue;
                }
                let obs = build_observation(&world, i, &goal, &cfg.env.lidar, cfg.env.use_pedestrian_map);
                let stem = format!("tick_{tick:04}_robot_{i}");
                write_file(&dir.join(format!("{stem}_sensor.pgm")), obs.sensor_map.to_pgm())?;
                write_file(&dir.join(format!("{stem}_pedestrians.pgm")), obs.pedestrian_map.to_pgm())?;
            }
        }
    }
    Ok(ticks)
}

#[derive(Clone, Debug)]
pub struct BenchLine {
    pub name: String,
    pub count: usize,
    pub unit: &'static str,
    pub seconds: f64,
}

impl BenchLine {
    pub fn rate(&self) -> f64 {
        self.count as f64 / self.seconds.max(1e-12)
    }
}

/// Throughput of the simulator under the baseline controller, of
/// observation building and of batched policy inference.
pub fn cmd_bench(cfg: &RunConfig, episodes: usize) -> Result<Vec<BenchLine>, AppError> {
    let mut lines = Vec::new();
    let ec = EvalConfig {
        episodes,
        trajectories: 0,
        ..eval_config(cfg)
    };
    for &scenario in &cfg.eval.scenarios {
        let start = Instant::now();
        let mut steps = 0;
        for ep in 0..episodes {
            let run = run_episode(&Method::OrcaBaseline, scenario, &ec, ep, false)?;
            steps += run
                .records
                .iter()
                .map(|r| (r.episode_time / cfg.env.dt).round() as usize)
                .max()
                .unwrap_or(0);
        }
        lines.push(BenchLine {
            name: format!("simulate {scenario}"),
            count: steps,
            unit: "steps",
            seconds: start.elapsed().as_secs_f64(),
        });
    }

    let scenario = cfg.eval.scenarios[0];
    let ec1 = EvalConfig {
        episodes: 1,
        trajectories: 1,
        ..eval_config(cfg)
    };
    let traj = run_episode(&Method::OrcaBaseline, scenario, &ec1, 0, true)?
        .trajectory
        .unwrap_or_default();
    let goal = traj.goals.first().map_or(Pose2D::new(0.0, 0.0, 0.0), |g| g.1);
    let worlds: Vec<WorldState> = (0..=traj.last_tick().unwrap_or(0)).map(|k| world_at(&traj, k)).collect();
    let start = Instant::now();
    let mut obs = Vec::new();
    for w in worlds.iter().filter(|w| !w.robots.is_empty()) {
        obs.push(build_observation(w, 0, &goal, &cfg.env.lidar, cfg.env.use_pedestrian_map));
    }
    lines.push(BenchLine {
        name: "build observation".into(),
        count: obs.len(),
        unit: "observations",
        seconds: start.elapsed().as_secs_f64(),
    });

    let model = ActorCritic::<f32>::new(cfg.policy.clone(), cfg.seed)?;
    let batch = obs.len().clamp(1, 32);
    let mut maps = Vec::new();
    let mut goals = Vec::new();
    for o in obs.iter().cycle().take(batch) {
        let (m, g) = o.to_tensor();
        maps.extend(m);
        goals.extend(g);
    }
    if obs.is_empty() {
        let a = &cfg.policy.arch;
        maps = vec![0.0; batch * a.input_channels * a.input_size * a.input_size];
        goals = vec![0.0; batch * a.goal_inputs];
    }
    let start = Instant::now();
    model.forward(&maps, &goals, batch)?;
    lines.push(BenchLine {
        name: format!("policy+value forward (batch {batch})"),
        count: batch,
        unit: "samples",
        seconds: start.elapsed().as_secs_f64(),
    });
    Ok(lines)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::ScenarioKind;
    use crate::eval::EvalScenario;
    use crate::pedestrians::Strategy;

    fn tiny() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.policy.arch.conv_filters = [2, 2, 2];
        cfg.policy.arch.flatten_units = 8;
        cfg.policy.arch.hidden_units = 8;
        cfg.ppo.buffer_size = 64;
        cfg.ppo.minibatch = 32;
        cfg.ppo.epochs = 1;
        cfg.eval.episodes = 2;
        cfg.eval.trajectories = 1;
        cfg.eval.scenarios = vec![EvalScenario {
            kind: ScenarioKind::Random,
            strategy: Strategy::Orca,
        }];
        cfg
    }

    #[test]
    fn dry_run_writes_empty_log_and_initial_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny();
        cfg.train.iterations = 0;
        let s = cmd_train(&cfg, dir.path()).unwrap();
        assert!(s.log.is_empty());
        let log = fs::read_to_string(dir.path().join("train_log.tsv")).unwrap();
        assert_eq!(log, format!("{LOG_HEADER}\n"));
        let ckpt = read_checkpoint(&dir.path().join("checkpoints").join(checkpoint_name(0)), &cfg).unwrap();
        assert_eq!(ckpt.iteration, 0);
        assert_eq!(ckpt.model, ActorCritic::new(cfg.policy.clone(), cfg.seed).unwrap());
        let dumped = fs::read_to_string(dir.path().join("config.toml")).unwrap();
        assert_eq!(RunConfig::from_toml(&dumped).unwrap(), cfg);
    }

    #[test]
    fn resume_continues_log_and_counter() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny();
        cfg.train.iterations = 2;
        cfg.train.checkpoint_every = 1;
        cmd_train(&cfg, dir.path()).unwrap();
        cfg.train.iterations = 3;
        let s = cmd_train(&cfg, dir.path()).unwrap();
        assert_eq!(s.final_iteration, 3);
        let iters: Vec<u64> = s.log.iter().map(|r| r.iteration).collect();
        assert_eq!(iters, [0, 1, 2]);
        let text = fs::read_to_string(dir.path().join("train_log.tsv")).unwrap();
        assert_eq!(text, crate::io::format_log(&s.log));
        assert_eq!(parse_log(&text).unwrap().len(), 3);
    }

    #[test]
    fn eval_refuses_mismatched_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny();
        cfg.train.iterations = 0;
        cmd_train(&cfg, dir.path()).unwrap();
        cfg.policy.arch.hidden_units = 9;
        cfg.eval.checkpoints.push(CheckpointEntry {
            name: "psd".into(),
            path: dir.path().join("checkpoints/final.ckpt"),
            use_pedestrian_map: true,
        });
        let err = cmd_eval(&cfg, &dir.path().join("eval")).unwrap_err();
        assert!(matches!(
            err,
            AppError::Checkpoint {
                source: CheckpointError::HashMismatch { .. },
                ..
            }
        ));
    }

    #[test]
    fn replay_world_matches_recorded_positions() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny();
        let run = cmd_eval(&cfg, dir.path()).unwrap();
        let (_, _, _, t) = &run.trajectories[0];
        let w = world_at(t, 0);
        assert_eq!(w.robots.len(), 2);
        assert_eq!(w.pedestrians.len(), 4);
        let r0 = t.records.iter().find(|r| r.tick == 0 && r.kind == AgentKind::Robot).unwrap();
        assert_eq!(w.robots[0].pose.x, r0.x);
        let path = dir.path().join("trajectories").join("orca_orca-random_0000.traj");
        let out = dir.path().join("replay");
        let ticks = cmd_replay(&cfg, &path, &out, true).unwrap();
        assert_eq!(ticks, t.last_tick().unwrap() + 1);
        assert!(out.join("maps/tick_0000_robot_0_sensor.pgm").exists());
    }
}
