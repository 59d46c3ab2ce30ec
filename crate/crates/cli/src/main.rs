//! Experiment orchestration CLI.
//!
//! Every subcommand consumes one TOML config (plus dotted-path `--set`
//! overrides) and writes its artifacts into a run directory named by the
//! config hash and a timestamp (or `--out` verbatim). Exit codes: 0 ok,
//! 2 config error, 3 dependency error, 4 runtime fault.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use keytrack_core::config::{ConfigError, ExperimentConfig};
use keytrack_core::envs::build_dataset;
use keytrack_core::eval::{
    evaluate_policy, phase_interval_trace, psi_grids, write_comparison, write_episode_dump,
    write_trajectory_dump, EvalError, PolicyMode, SweepReport,
};
use keytrack_core::motion::{save_motion, MotionError};
use keytrack_core::nets::checkpoint::Checkpoint;
use keytrack_core::policy::PolicyBundle;
use keytrack_core::trainer::{train_stage1, train_stage2, TrainError};

#[derive(Parser)]
#[command(name = "keytrack", version, about = "Adaptive keyframe motion tracking on a planar character")]
struct Cli {
    /// Experiment config (TOML). Defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Start from the named task's default config (far_jump, high_jump)
    /// instead of the built-in default; ignored when --config is given.
    #[arg(long, global = true)]
    task: Option<String>,
    /// Apply a named switch combination (two_stage, stage1_only,
    /// stage1_flex_phase, no_freeze, dense_edit_two_stage, no_adapt,
    /// rule_adapt, rule_adapt_flex_phase) before overrides.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Dotted-path override, repeatable: --set train.n_envs=64
    #[arg(long = "set", global = true, value_parser = parse_kv)]
    set: Vec<(String, String)>,
    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (used verbatim); default runs/<cmd>-<hash>-<time>.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the base reference motion and save it as JSON.
    GenMotion,
    /// Materialize the edited keyframe dataset over a psi grid.
    Edit {
        /// Number of psi grid points.
        #[arg(long, default_value_t = 9)]
        grid: usize,
    },
    /// Train the stage-1 base tracking policy.
    TrainStage1,
    /// Train the stage-2 adapters over a stage-1 checkpoint.
    TrainStage2 {
        /// Stage-1 checkpoint path.
        #[arg(long)]
        base: PathBuf,
    },
    /// Evaluate a checkpoint over the adaptation sweep.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, value_enum, default_value_t = Band::All)]
        band: Band,
        /// Oracle actuator mode: kinematic replay of the tracked reference.
        #[arg(long)]
        replay: bool,
    },
    /// Evaluate several checkpoints and emit the comparison table + plots.
    Compare {
        /// Repeatable label=checkpoint pair.
        #[arg(long = "method", value_parser = parse_kv, required = true)]
        methods: Vec<(String, String)>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Band {
    Easy,
    Hard,
    All,
}

fn parse_kv(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .ok_or_else(|| format!("expected key=value, got {s}"))
}

/// Error taxonomy mapped to exit codes.
enum CliError {
    Config(String),
    Dependency(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Dependency(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Dependency(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<MotionError> for CliError {
    fn from(e: MotionError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::WrongCheckpointKind(_) | TrainError::BaseHashMismatch { .. } => {
                CliError::Dependency(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::GridMismatch => CliError::Config(e.to_string()),
            EvalError::Incompatible(_) => CliError::Dependency(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut config = match &cli.config {
        Some(p) => {
            if !p.exists() {
                return Err(CliError::Config(format!("config file {p:?} not found")));
            }
            ExperimentConfig::load(p)?
        }
        None => match cli.task.as_deref() {
            None | Some("far_jump") => ExperimentConfig::default(),
            Some("high_jump") => {
                ExperimentConfig::for_task(keytrack_core::tasks::TaskId::HighJump)
            }
            Some(other) => {
                return Err(CliError::Config(format!(
                    "unknown task {other}; expected far_jump or high_jump"
                )))
            }
        },
    };
    if let Some(preset) = &cli.preset {
        config.apply_preset(preset)?;
    }
    config = config.with_overrides(&cli.set)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn run_dir(cli: &Cli, cmd: &str, config: &ExperimentConfig) -> Result<PathBuf, CliError> {
    let dir = match &cli.out {
        Some(p) => p.clone(),
        None => {
            let ts = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            PathBuf::from("runs").join(format!("{cmd}-{}-{ts}", config.hash()))
        }
    };
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Runtime(e.to_string()))?;
    // The resolved config (with overrides echoed) is the run's provenance.
    std::fs::write(dir.join("config.toml"), config.to_toml())
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(dir)
}

fn load_bundle(path: &Path) -> Result<PolicyBundle, CliError> {
    if !path.exists() {
        return Err(CliError::Dependency(format!("checkpoint {path:?} not found")));
    }
    let ckpt = Checkpoint::load(path).map_err(|e| CliError::Dependency(e.to_string()))?;
    PolicyBundle::from_checkpoint(&ckpt).map_err(|e| CliError::Dependency(e.to_string()))
}

fn apply_band(config: &mut ExperimentConfig, band: Band) {
    match band {
        Band::Easy => config.eval.psi_grid_hard = 0,
        Band::Hard => config.eval.psi_grid_easy = 0,
        Band::All => {}
    }
}

fn print_band(label: &str, s: &keytrack_core::eval::BandStats) {
    println!(
        "  {label:<8} success {:6.1}% ± {:4.1}  E_l {:7.2} mm  E_g {:8.2} mm  E_smth {:7.2} rad/s²  ({} episodes)",
        s.success * 100.0,
        s.success_std * 100.0,
        s.e_l_bpe_dense_mm,
        s.e_g_bpe_sparse_mm,
        s.e_smth,
        s.episodes
    );
}

fn summarize(report: &SweepReport) {
    println!("method {}:", report.label);
    print_band("easy", &report.easy);
    print_band("hard", &report.hard);
    print_band("overall", &report.overall);
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = load_config(&cli)?;
    match &cli.command {
        Command::GenMotion => {
            let dir = run_dir(&cli, "gen-motion", &config)?;
            let (_, dataset) =
                build_dataset(&config).map_err(|e| CliError::Runtime(e.to_string()))?;
            let path = dir.join("motion.json");
            save_motion(&dataset.base, &path)?;
            println!(
                "generated {} motion: {} frames at {} Hz, duration {:.2} s",
                config.task.task_id,
                dataset.base.frames.len(),
                dataset.base.frame_rate_hz,
                dataset.base.duration_s()
            );
            println!("keyframes: {:?}", dataset.plan.key_phases);
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Edit { grid } => {
            let dir = run_dir(&cli, "edit", &config)?;
            let (_, mut dataset) =
                build_dataset(&config).map_err(|e| CliError::Runtime(e.to_string()))?;
            dataset.materialize_grid(*grid)?;
            let records: Vec<serde_json::Value> = dataset
                .edits
                .iter()
                .map(|(spec, kfs)| {
                    serde_json::json!({
                        "psi": spec.psi,
                        "base_value": spec.base_value,
                        "keyframes": kfs,
                    })
                })
                .collect();
            let path = dir.join("edits.json");
            std::fs::write(
                &path,
                serde_json::to_string_pretty(&serde_json::json!({
                    "config_hash": config.hash(),
                    "task": config.task.task_id.to_string(),
                    "edits": records,
                }))
                .expect("serializes"),
            )
            .map_err(|e| CliError::Runtime(e.to_string()))?;
            // A rule-edited dense motion at the top of the easy band, for
            // inspection and replay.
            let rule = dataset.rule_motion(config.task.easy_band.1)?;
            save_motion(&rule, &dir.join("rule_motion.json"))?;
            println!("materialized {} edits over psi grid; wrote {}", grid, path.display());
            Ok(())
        }
        Command::TrainStage1 => {
            let dir = run_dir(&cli, "train-stage1", &config)?;
            let out = train_stage1(&config, &dir)?;
            println!(
                "stage-1 done: {} iterations, train success {:.1}%",
                out.iterations,
                out.final_success_rate * 100.0
            );
            println!("checkpoint {}", out.checkpoint_path.display());
            println!("metrics    {}", out.metrics_path.display());
            Ok(())
        }
        Command::TrainStage2 { base } => {
            if !base.exists() {
                return Err(CliError::Dependency(format!(
                    "stage-1 checkpoint {} not found; run train-stage1 first",
                    base.display()
                )));
            }
            let dir = run_dir(&cli, "train-stage2", &config)?;
            let out = train_stage2(&config, base, &dir)?;
            println!(
                "stage-2 done: {} iterations, train success {:.1}%",
                out.iterations,
                out.final_success_rate * 100.0
            );
            println!("checkpoint {}", out.checkpoint_path.display());
            Ok(())
        }
        Command::Eval { ckpt, band, replay } => {
            let mut config = config;
            apply_band(&mut config, *band);
            let dir = run_dir(&cli, "eval", &config)?;
            let bundle = load_bundle(ckpt)?;
            let mode = if *replay { PolicyMode::Replay } else if config.eval.stochastic {
                PolicyMode::Stochastic
            } else {
                PolicyMode::Deterministic
            };
            let label = ckpt.file_stem().and_then(|s| s.to_str()).unwrap_or("policy");
            let report = evaluate_policy(&config, &bundle, label, mode)?;
            summarize(&report);
            std::fs::write(
                dir.join("report.json"),
                serde_json::to_string_pretty(&serde_json::json!({
                    "config_hash": config.hash(),
                    "report": &report,
                }))
                .expect("serializes"),
            )
            .map_err(|e| CliError::Runtime(e.to_string()))?;
            write_episode_dump(&dir.join("episodes.jsonl"), &report)?;
            if config.eval.dump_trajectories {
                let (easy, hard) = psi_grids(&config);
                let psis: Vec<f64> = easy.into_iter().chain(hard).collect();
                write_trajectory_dump(&dir.join("trajectories.jsonl"), &config, &bundle, &psis)?;
            }
            println!("wrote {}", dir.join("report.json").display());
            Ok(())
        }
        Command::Compare { methods } => {
            let dir = run_dir(&cli, "compare", &config)?;
            let mut reports = Vec::new();
            let mut traces = Vec::new();
            for (label, path) in methods {
                let bundle = load_bundle(Path::new(path))?;
                let report = evaluate_policy(&config, &bundle, label, PolicyMode::Deterministic)?;
                summarize(&report);
                // Phase-interval traces for methods with a phase adapter, at
                // the two ends of the easy band.
                if bundle.phase.is_some() {
                    for psi in [config.task.easy_band.0, config.task.easy_band.1] {
                        let trace = phase_interval_trace(&config, &bundle, psi, 3, 24)?;
                        traces.push((format!("{label} psi={psi:.2}"), trace));
                    }
                }
                reports.push(report);
            }
            write_comparison(&dir, &reports, &traces)?;
            println!("wrote {}", dir.join("table.csv").display());
            Ok(())
        }
    }
}
