//! PPO training: stage 1 trains the base tracking policy on the edited
//! keyframe dataset with a fixed phase interval; stage 2 trains the phase
//! and tracking adapters over the frozen stage-1 policy. Both stages run
//! the same collect / GAE / update loop; every baseline and ablation is a
//! config switch over it.

pub mod buffer;
pub mod gae;
pub mod ppo;

pub use buffer::{LaneTargets, RolloutBuffer};
pub use gae::DoneTag;
pub use ppo::{ppo_update, PpoState, UpdateStats};

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::config::ExperimentConfig;
use crate::envs::{build_env_pool, EnvBuildError, EpisodeEnd, TrackingEnv};
use crate::nets::checkpoint::{Checkpoint, CheckpointKind};
use crate::nets::NetError;
use crate::policy::PolicyBundle;
use crate::rng::derive;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Env(#[from] EnvBuildError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("training diverged at iteration {iteration}; last good checkpoint at {checkpoint}")]
    Diverged { iteration: usize, checkpoint: PathBuf },
    #[error("stage-2 needs a stage-1 checkpoint, got {0}")]
    WrongCheckpointKind(String),
    #[error("base checkpoint hash mismatch: expected {expected}, got {got}")]
    BaseHashMismatch { expected: String, got: String },
}

/// One metrics line per iteration, written to `metrics.jsonl`.
#[derive(Debug, Clone, Serialize)]
pub struct IterationMetrics {
    pub iter: usize,
    pub mean_return_sparse: f64,
    pub mean_return_dense: f64,
    pub kl: f64,
    pub clip_frac: f64,
    pub lr: f64,
    pub success_rate_train: f64,
    pub episodes_ended: usize,
    pub wallclock: f64,
}

pub struct TrainOutcome {
    pub checkpoint_path: PathBuf,
    pub metrics_path: PathBuf,
    pub iterations: usize,
    pub final_success_rate: f64,
}

/// Collect one rollout: every env runs `n_steps` ticks independently in
/// parallel, each with its own RNG stream, writing its own trace.
pub fn collect_rollouts(
    envs: &mut [TrackingEnv],
    bundle: &PolicyBundle,
    n_steps: usize,
    relaxed: bool,
) -> RolloutBuffer {
    let lane_count = bundle.lane_kinds().len();
    let traces: Vec<buffer::EnvTrace> = envs
        .par_iter_mut()
        .map(|env| {
            let mut trace = buffer::EnvTrace {
                steps: Vec::with_capacity(n_steps),
                tail_boot: vec![(0.0, 0.0); lane_count],
            };
            for _ in 0..n_steps {
                let obs = env.observe(&bundle.norm);
                let dphi_base = env.dphi_base;
                let decision = bundle
                    .act(&obs.actor_stack, dphi_base, Some(&mut env.rng))
                    .expect("bundle dims match env");
                let lane_kinds = bundle.lane_kinds();
                let mut lanes: Vec<buffer::LaneStep> = decision
                    .lanes
                    .iter()
                    .zip(lane_kinds.iter())
                    .map(|(s, &k)| {
                        debug_assert_eq!(s.kind, k);
                        let (v_sparse, v_dense) =
                            bundle.critics(k).values(&obs.critic_in).expect("critic dims");
                        buffer::LaneStep {
                            action: s.action.clone(),
                            log_prob: s.log_prob,
                            v_sparse,
                            v_dense,
                            boot_sparse: 0.0,
                            boot_dense: 0.0,
                        }
                    })
                    .collect();

                let out = env.step(&decision.exec_action, decision.dphi_ada, relaxed);
                let done = match out.done {
                    None => DoneTag::Alive,
                    Some(EpisodeEnd::Truncated) => DoneTag::Truncated,
                    Some(_) => DoneTag::Terminal,
                };
                if done == DoneTag::Truncated {
                    // Bootstrap from the post-step (pre-reset) state.
                    let post = env.observe(&bundle.norm);
                    for (lane, &k) in lanes.iter_mut().zip(bundle.lane_kinds().iter()) {
                        let (bs, bd) =
                            bundle.critics(k).values(&post.critic_in).expect("critic dims");
                        lane.boot_sparse = bs;
                        lane.boot_dense = bd;
                    }
                }
                trace.steps.push(buffer::StepRecord {
                    actor_stack: obs.actor_stack,
                    critic_in: obs.critic_in,
                    raw_critic: obs.raw_critic,
                    dphi_ada_norm: decision.dphi_ada / dphi_base,
                    r_sparse: out.reward.sparse,
                    r_dense: out.reward.dense,
                    done,
                    phase: out.phi_next,
                    psi: env.psi,
                    lanes,
                });
                if out.done.is_some() {
                    env.reset_train();
                }
            }
            // Tail bootstrap for a rollout that ends mid-episode.
            let last_done = trace.steps.last().map(|s| s.done).unwrap_or(DoneTag::Alive);
            if last_done == DoneTag::Alive {
                let post = env.observe(&bundle.norm);
                for (slot, &k) in trace.tail_boot.iter_mut().zip(bundle.lane_kinds().iter()) {
                    *slot = bundle.critics(k).values(&post.critic_in).expect("critic dims");
                }
            }
            trace
        })
        .collect();
    RolloutBuffer { traces, n_steps }
}

/// Shared training loop over a prepared bundle.
#[allow(clippy::too_many_arguments)]
fn run_training(
    config: &ExperimentConfig,
    bundle: &mut PolicyBundle,
    envs: &mut [TrackingEnv],
    iterations: usize,
    kind: CheckpointKind,
    out_dir: &Path,
    pool: &rayon::ThreadPool,
) -> Result<TrainOutcome, TrainError> {
    std::fs::create_dir_all(out_dir)?;
    let metrics_path = out_dir.join("metrics.jsonl");
    let mut metrics_file = std::fs::File::create(&metrics_path)?;
    let checkpoint_path = out_dir.join(match kind {
        CheckpointKind::Stage1 => "stage1.ckpt",
        CheckpointKind::Stage2 => "stage2.ckpt",
    });

    let mut state = PpoState::new(bundle, &config.train.ppo);
    let mut update_rng = derive(config.seed, 0x5050_0001);
    let start = std::time::Instant::now();
    let lane_count = bundle.lane_kinds().len();
    let weights = config.reward.group_weights;
    let mut last_metrics = IterationMetrics {
        iter: 0,
        mean_return_sparse: 0.0,
        mean_return_dense: 0.0,
        kl: 0.0,
        clip_frac: 0.0,
        lr: state.lr,
        success_rate_train: 0.0,
        episodes_ended: 0,
        wallclock: 0.0,
    };
    let mut last_good: Option<PolicyBundle> = None;

    for env in envs.iter_mut() {
        env.reset_train();
        env.episode_records.clear();
    }

    let mut final_success = 0.0;
    for iter in 0..iterations {
        let relaxed = iter >= config.train.curriculum_switch_iter;
        let buffer =
            pool.install(|| collect_rollouts(envs, bundle, config.train.n_steps, relaxed));

        // Running-stat update from raw observations, fixed env-major order.
        if !bundle.norm.frozen {
            for trace in &buffer.traces {
                for step in &trace.steps {
                    bundle.norm.update(&step.raw_critic);
                }
            }
        }

        let targets: Vec<LaneTargets> = (0..lane_count)
            .map(|li| {
                buffer::lane_gae(
                    &buffer,
                    li,
                    config.train.ppo.gamma_sparse,
                    config.train.ppo.gamma_dense,
                    config.train.ppo.gae_lambda,
                    weights,
                )
            })
            .collect();

        let reg = ppo::LipschitzReg {
            coef: config.train.lipschitz_coef,
            delta: config.train.lipschitz_delta,
        };
        let stats = pool.install(|| {
            ppo_update(bundle, &buffer, &targets, &config.train.ppo, reg, &mut state, &mut update_rng)
        });

        // Episode statistics from episodes that ended this iteration.
        let mut ended = 0usize;
        let mut completed = 0usize;
        let mut ret_sparse = 0.0;
        let mut ret_dense = 0.0;
        for env in envs.iter_mut() {
            for rec in env.episode_records.drain(..) {
                ended += 1;
                if rec.end == EpisodeEnd::Complete {
                    completed += 1;
                }
                ret_sparse += rec.return_sparse;
                ret_dense += rec.return_dense;
            }
        }
        let m = IterationMetrics {
            iter,
            mean_return_sparse: if ended > 0 {
                ret_sparse / ended as f64
            } else {
                last_metrics.mean_return_sparse
            },
            mean_return_dense: if ended > 0 {
                ret_dense / ended as f64
            } else {
                last_metrics.mean_return_dense
            },
            kl: stats.kl,
            clip_frac: stats.clip_frac,
            lr: stats.lr,
            success_rate_train: if ended > 0 {
                completed as f64 / ended as f64
            } else {
                last_metrics.success_rate_train
            },
            episodes_ended: ended,
            wallclock: start.elapsed().as_secs_f64(),
        };
        writeln!(metrics_file, "{}", serde_json::to_string(&m).expect("metrics serialize"))?;
        final_success = m.success_rate_train;

        // Divergence guard: non-finite returns abort with the last good
        // checkpoint.
        if !m.mean_return_dense.is_finite() || !m.mean_return_sparse.is_finite() {
            if let Some(good) = last_good {
                good.to_checkpoint(kind).save(&checkpoint_path)?;
            }
            return Err(TrainError::Diverged { iteration: iter, checkpoint: checkpoint_path });
        }
        last_good = Some(bundle.clone());
        last_metrics = m;
    }

    bundle.to_checkpoint(kind).save(&checkpoint_path)?;
    Ok(TrainOutcome {
        checkpoint_path,
        metrics_path,
        iterations,
        final_success_rate: final_success,
    })
}

fn make_pool(n_workers: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n_workers)
        .build()
        .expect("thread pool")
}

/// Stage 1: train the base tracking policy with a fixed phase interval
/// (or jointly with a flexible one in the one-stage ablation).
pub fn train_stage1(config: &ExperimentConfig, out_dir: &Path) -> Result<TrainOutcome, TrainError> {
    let mut envs = build_env_pool(config, config.train.n_envs, config.seed, true)?;
    let dims = envs[0].dims();
    let mut bundle = PolicyBundle::new_stage1(config, dims, &mut derive(config.seed, 0x1157_0001));
    let pool = make_pool(config.train.n_workers);
    let out = run_training(
        config,
        &mut bundle,
        &mut envs,
        config.train.iterations_stage1,
        CheckpointKind::Stage1,
        out_dir,
        &pool,
    )?;
    Ok(out)
}

/// Load and validate a stage-1 checkpoint for stage-2 training.
pub fn load_stage1_bundle(
    config: &ExperimentConfig,
    path: &Path,
) -> Result<PolicyBundle, TrainError> {
    let ckpt = Checkpoint::load(path)?;
    if ckpt.kind != CheckpointKind::Stage1 {
        return Err(TrainError::WrongCheckpointKind(format!("{path:?} is not a stage-1 checkpoint")));
    }
    let bundle = PolicyBundle::from_checkpoint(&ckpt)?;
    if let Some(expected) = &config.train.expected_base_sha {
        let got = bundle.base_params_sha();
        if *expected != got {
            return Err(TrainError::BaseHashMismatch { expected: expected.clone(), got });
        }
    }
    Ok(bundle)
}

/// Stage 2: train the phase and tracking adapters on top of a stage-1
/// checkpoint. With `freeze_base` (default) the base is bit-frozen; the
/// no-freeze ablation also updates it.
pub fn train_stage2(
    config: &ExperimentConfig,
    stage1_checkpoint: &Path,
    out_dir: &Path,
) -> Result<TrainOutcome, TrainError> {
    let stage1 = load_stage1_bundle(config, stage1_checkpoint)?;
    let base_sha_before = stage1.base_params_sha();
    let mut envs = build_env_pool(config, config.train.n_envs, config.seed, true)?;
    let dims = envs[0].dims();
    let mut bundle = stage1.into_stage2(config, dims, &mut derive(config.seed, 0x1157_0002));
    bundle.base_sha = base_sha_before.clone();
    bundle.config_hash = config.hash();
    let pool = make_pool(config.train.n_workers);
    let out = run_training(
        config,
        &mut bundle,
        &mut envs,
        config.train.iterations_stage2,
        CheckpointKind::Stage2,
        out_dir,
        &pool,
    )?;
    if config.train.freeze_base {
        debug_assert_eq!(bundle.base_params_sha(), base_sha_before, "frozen base drifted");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::edit::DatasetMode;

    fn smoke_config() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.train.n_envs = 4;
        c.train.n_steps = 8;
        c.train.iterations_stage1 = 2;
        c.train.iterations_stage2 = 2;
        c.train.policy_hidden = vec![16];
        c.train.critic_hidden = vec![16];
        c.train.adapter_hidden = vec![8];
        c.train.ppo.minibatches = 2;
        c.train.ppo.epochs = 2;
        c.train.n_workers = 2;
        c
    }

    fn tmp_dir(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join("keytrack-trainer-tests").join(name);
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn rollout_buffer_shape_and_determinism() {
        let config = smoke_config();
        let collect = || {
            let mut envs = build_env_pool(&config, 2, config.seed, true).unwrap();
            for e in envs.iter_mut() {
                e.reset_train();
            }
            let dims = envs[0].dims();
            let bundle =
                PolicyBundle::new_stage1(&config, dims, &mut crate::rng::derive(config.seed, 1));
            collect_rollouts(&mut envs, &bundle, 3, false)
        };
        let a = collect();
        let b = collect();
        assert_eq!(a.n_envs(), 2);
        assert_eq!(a.len(), 6);
        assert!(a.is_rectangular());
        for (ta, tb) in a.traces.iter().zip(b.traces.iter()) {
            for (sa, sb) in ta.steps.iter().zip(tb.steps.iter()) {
                assert_eq!(sa.r_sparse.to_bits(), sb.r_sparse.to_bits());
                assert_eq!(sa.r_dense.to_bits(), sb.r_dense.to_bits());
                for (x, y) in sa.actor_stack.iter().zip(sb.actor_stack.iter()) {
                    assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        }
    }

    #[test]
    fn psi_sampling_stays_in_training_range() {
        let mut config = smoke_config();
        config.train.dataset = DatasetMode::KeyframeEdit;
        let mut envs = build_env_pool(&config, 8, 3, true).unwrap();
        let (lo, hi) = config.task.easy_band;
        for env in envs.iter_mut() {
            for _ in 0..10 {
                env.reset_train();
                assert!(env.psi >= lo && env.psi <= hi, "psi {} outside [{lo}, {hi}]", env.psi);
            }
        }
    }

    #[test]
    fn stage1_smoke_produces_artifacts() {
        let config = smoke_config();
        let dir = tmp_dir("stage1-smoke");
        let out = train_stage1(&config, &dir).unwrap();
        assert!(out.checkpoint_path.exists());
        let lines = std::fs::read_to_string(&out.metrics_path).unwrap();
        assert_eq!(lines.lines().count(), 2);
        let first: serde_json::Value = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
        for key in ["iter", "mean_return_sparse", "mean_return_dense", "kl", "clip_frac", "lr", "success_rate_train", "wallclock"] {
            assert!(first.get(key).is_some(), "missing {key}");
        }
    }

    #[test]
    fn stage2_requires_stage1_checkpoint_and_freezes_base() {
        let config = smoke_config();
        let dir = tmp_dir("stage2-smoke");
        let s1 = train_stage1(&config, &dir).unwrap();
        // Wrong-kind refusal.
        let s2_first = train_stage2(&config, &s1.checkpoint_path, &dir).unwrap();
        assert!(matches!(
            train_stage2(&config, &s2_first.checkpoint_path, &dir),
            Err(TrainError::WrongCheckpointKind(_))
        ));
        // Hash pinning.
        let loaded = load_stage1_bundle(&config, &s1.checkpoint_path).unwrap();
        let sha = loaded.base_params_sha();
        let mut pinned = config.clone();
        pinned.train.expected_base_sha = Some("deadbeef".into());
        assert!(matches!(
            train_stage2(&pinned, &s1.checkpoint_path, &dir),
            Err(TrainError::BaseHashMismatch { .. })
        ));
        pinned.train.expected_base_sha = Some(sha.clone());
        let out = train_stage2(&pinned, &s1.checkpoint_path, &tmp_dir("stage2-pinned")).unwrap();
        // The saved stage-2 checkpoint embeds the base sha and its base
        // section is bit-identical to stage 1's.
        let ckpt = Checkpoint::load(&out.checkpoint_path).unwrap();
        assert_eq!(ckpt.kind, CheckpointKind::Stage2);
        assert_eq!(ckpt.base_sha, sha);
        assert_eq!(ckpt.base_params_sha(), sha);
    }

    #[test]
    fn metrics_deterministic_across_worker_counts() {
        let strip_wallclock = |text: &str| -> String {
            text.lines()
                .map(|l| {
                    let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
                    v.as_object_mut().unwrap().remove("wallclock");
                    serde_json::to_string(&v).unwrap()
                })
                .collect::<Vec<_>>()
                .join("\n")
        };
        let run = |workers: usize, tag: &str| -> String {
            let mut config = smoke_config();
            config.train.n_workers = workers;
            let dir = tmp_dir(tag);
            let out = train_stage1(&config, &dir).unwrap();
            strip_wallclock(&std::fs::read_to_string(&out.metrics_path).unwrap())
        };
        let a = run(1, "workers1");
        let b = run(2, "workers2");
        assert_eq!(a, b);
    }
}
