//! The tracking environment: one simulated character following one edited
//! reference motion, producing observations and the two-group rewards.
//!
//! Each instance owns its RNG stream (keyed by env index) and all episode
//! state, so a pool of envs can run in parallel with bitwise-deterministic
//! results for any worker count.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ExperimentConfig, GlobalRewardMode};
use crate::motion::edit::{DatasetMode, EditedDataset, OffsetRamp};
use crate::motion::{phase_advance, Frame, ReferenceMotion};
use crate::policy::ObsDims;
use crate::rewards::{
    dense_local_reward, sparse_global_reward, DenseInputs, RewardConfig, RewardVector,
};
use crate::rng::env_stream;
use crate::sim::dynamics::FkResult;
use crate::sim::{
    sample_randomization, Morphology, PDCommand, RandomizationConfig, RandomizationDraw,
    SimConfig, SimWorld, Termination,
};

/// Why an episode ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeEnd {
    Fell,
    TrackingFailure,
    Complete,
    /// Simulation fault (non-finite state); aborted with the termination
    /// penalty and logged.
    Fault,
    /// Hit the tick cap; value bootstrapping applies.
    Truncated,
}

impl EpisodeEnd {
    pub fn is_truncation(self) -> bool {
        self == EpisodeEnd::Truncated
    }
}

/// One step's outputs.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub reward: RewardVector,
    pub done: Option<EpisodeEnd>,
    pub phi_next: f64,
    /// Keyframe indices whose phase was crossed this tick, with the
    /// world-frame mean body error at the crossing (metrics path).
    pub crossings: Vec<(usize, f64)>,
    /// Keyframe index the sparse reward matched this tick (reward path).
    pub matched_keyframe: Option<usize>,
}

/// Completed-episode statistics surfaced to the trainer.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeRecord {
    pub end: EpisodeEnd,
    pub return_sparse: f64,
    pub return_dense: f64,
    pub ticks: usize,
    pub psi: f64,
}

/// Normalized observation views for one tick.
#[derive(Debug, Clone)]
pub struct ObsPack {
    pub actor_stack: Vec<f64>,
    pub critic_in: Vec<f64>,
    /// Un-normalized single-frame critic vector for statistics updates.
    pub raw_critic: Vec<f64>,
}

pub struct TrackingEnv {
    pub world: SimWorld,
    dataset: Arc<EditedDataset>,
    reward_cfg: RewardConfig,
    global_mode: GlobalRewardMode,
    dims: ObsDims,
    pub rng: ChaCha8Rng,
    randomize: bool,
    randomization_cfg: RandomizationConfig,
    rsi: bool,
    action_scale: f64,
    default_pose: Vec<f64>,
    pub dphi_base: f64,
    keyframe_tol: f64,
    max_ticks: usize,
    // Episode state.
    pub phi: f64,
    pub psi: f64,
    start_root: [f64; 2],
    keyframe_rewarded: Vec<bool>,
    kf_targets: Vec<FkResult>,
    kf_scales: Vec<f64>,
    offset_ramp: OffsetRamp,
    tracked_motion: Option<ReferenceMotion>,
    prev_action: Vec<f64>,
    prev_prev_action: Vec<f64>,
    prev_joint_vels: Vec<f64>,
    delay_queue: VecDeque<Vec<f64>>,
    history: VecDeque<Vec<f64>>,
    pub ep_ticks: usize,
    ep_return_sparse: f64,
    ep_return_dense: f64,
    pub episode_records: Vec<EpisodeRecord>,
    pub fault_count: usize,
    /// Fill per-term reward breakdowns in step outcomes (tracing).
    pub trace_rewards: bool,
    /// Tracking-failure termination; evaluation disables it so metrics
    /// cover every keyframe (falls still terminate).
    pub tracking_termination: bool,
}

impl TrackingEnv {
    pub fn new(
        config: &ExperimentConfig,
        morphology: Morphology,
        sim_config: SimConfig,
        dataset: Arc<EditedDataset>,
        master_seed: u64,
        env_index: usize,
        randomize: bool,
    ) -> Self {
        let joints = morphology.joint_count();
        let dims = ObsDims::for_joints(joints, config.train.history_len);
        let world = SimWorld::new(morphology, sim_config);
        let dphi_base = dataset.base.dphi_for_control_dt(world.config.control_dt());
        let nominal_ticks = (1.0 / dphi_base).ceil() as usize;
        let max_ticks =
            ((nominal_ticks as f64) * config.train.max_episode_ticks_factor).ceil() as usize;
        let default_pose = dataset.base.frames[0].joint_angles.clone();
        let kf_count = dataset.plan.len();
        TrackingEnv {
            world,
            reward_cfg: config.reward.clone(),
            global_mode: config.train.global_reward,
            dims,
            rng: env_stream(master_seed, env_index),
            randomize,
            randomization_cfg: config.sim.randomization.clone(),
            rsi: config.train.rsi,
            action_scale: config.train.action_scale,
            default_pose,
            dphi_base,
            keyframe_tol: config.reward.keyframe_tol_factor * dphi_base,
            max_ticks,
            phi: 0.0,
            psi: dataset.task.base_value,
            start_root: [0.0, 0.0],
            keyframe_rewarded: vec![false; kf_count],
            kf_targets: Vec::new(),
            kf_scales: dataset.plan.reward_scale.clone(),
            offset_ramp: OffsetRamp::new(&[], &dataset.plan, &dataset.markers),
            tracked_motion: None,
            prev_action: vec![0.0; joints],
            prev_prev_action: vec![0.0; joints],
            prev_joint_vels: vec![0.0; joints],
            delay_queue: VecDeque::new(),
            history: VecDeque::new(),
            ep_ticks: 0,
            ep_return_sparse: 0.0,
            ep_return_dense: 0.0,
            episode_records: Vec::new(),
            fault_count: 0,
            trace_rewards: false,
            tracking_termination: true,
            dataset,
        }
    }

    pub fn dims(&self) -> ObsDims {
        self.dims
    }

    pub fn dataset(&self) -> &EditedDataset {
        &self.dataset
    }

    pub fn keyframe_phases(&self) -> &[f64] {
        &self.dataset.plan.key_phases
    }

    pub fn keyframe_target(&self, index: usize) -> &FkResult {
        &self.kf_targets[index]
    }

    pub fn max_ticks(&self) -> usize {
        self.max_ticks
    }

    /// Sample a fresh training episode: new task variable, randomization
    /// draw and reference-state-initialized start keyframe.
    pub fn reset_train(&mut self) {
        let (lo, hi) = self.dataset.task.easy_band;
        let psi = match self.dataset.mode {
            DatasetMode::Original => self.dataset.task.base_value,
            _ => self.rng.gen_range(lo..=hi),
        };
        let start_phase = if self.rsi {
            // Candidates: motion start plus every keyframe not too close to
            // the end (a start at phi ~ 1 is a trivial episode).
            let mut cands = vec![0.0];
            let cutoff = 1.0 - 5.0 * self.dphi_base;
            cands.extend(self.keyframe_phases().iter().copied().filter(|&p| p <= cutoff));
            let pick = self.rng.gen_range(0..cands.len());
            cands[pick]
        } else {
            0.0
        };
        self.begin_episode(psi, start_phase);
    }

    /// Deterministic evaluation episode at a given task variable.
    pub fn reset_eval(&mut self, psi: f64) {
        self.begin_episode(psi, 0.0);
    }

    fn begin_episode(&mut self, psi: f64, start_phase: f64) {
        self.psi = self.dataset.clamp_psi(psi);
        let keyframes =
            self.dataset.edited_keyframes(self.psi).expect("edit inside configured range");
        self.offset_ramp = OffsetRamp::new(&keyframes, &self.dataset.plan, &self.dataset.markers);
        // World-frame targets for the sparse reward and the metrics: edited
        // root pose, unedited locals, on the nominal model.
        self.kf_targets = keyframes
            .iter()
            .map(|kf| {
                let mut f = self.dataset.base.sample_at_phase(kf.phase).expect("keyframe phase");
                f.root_pos = [kf.root[0], kf.root[1]];
                f.root_pitch = kf.root[2];
                self.world.fk_of_frame(&f)
            })
            .collect();
        self.tracked_motion = match self.dataset.mode {
            DatasetMode::RuleEditDense => {
                Some(self.dataset.rule_motion(self.psi).expect("rule motion"))
            }
            _ => None,
        };

        let draw = if self.randomize {
            sample_randomization(&self.randomization_cfg, &mut self.rng)
        } else {
            RandomizationDraw::nominal()
        };

        // Start frame: base motion at the start phase, root overridden by the
        // edited keyframe pose when starting on a keyframe.
        let mut frame = self.dataset.base.sample_at_phase(start_phase).expect("start phase");
        if let Some(kf) = keyframes.iter().find(|kf| kf.phase == start_phase) {
            frame.root_pos = [kf.root[0], kf.root[1]];
            frame.root_pitch = kf.root[2];
        }
        self.world.reset_from_frame(&frame, &draw);
        self.phi = start_phase;
        self.start_root = [self.world.state.q[0], self.world.state.q[1]];
        for (i, &p) in self.dataset.plan.key_phases.iter().enumerate() {
            self.keyframe_rewarded[i] = p <= start_phase + 1e-12;
        }
        let joints = self.world.morphology.joint_count();
        self.prev_action = vec![0.0; joints];
        self.prev_prev_action = vec![0.0; joints];
        self.prev_joint_vels = self.world.state.joint_vels().to_vec();
        self.delay_queue.clear();
        let hold = self.world.state.joint_angles().to_vec();
        for _ in 0..self.world.model.control_delay_ticks {
            self.delay_queue.push_back(hold.clone());
        }
        self.history.clear();
        let frame_obs = self.actor_frame_obs();
        for _ in 0..self.dims.history {
            self.history.push_back(frame_obs.clone());
        }
        self.ep_ticks = 0;
        self.ep_return_sparse = 0.0;
        self.ep_return_dense = 0.0;
    }

    /// Raw single-frame actor observation.
    fn actor_frame_obs(&self) -> Vec<f64> {
        let s = &self.world.state;
        let pitch = s.q[2];
        let mut o = Vec::with_capacity(self.dims.actor_frame);
        o.push(s.qd[2]);
        // Gravity direction in the base frame.
        o.push(-pitch.sin());
        o.push(-pitch.cos());
        o.extend_from_slice(s.joint_angles());
        o.extend_from_slice(s.joint_vels());
        o.extend_from_slice(&self.prev_action);
        o.push(self.phi);
        o.push(self.psi);
        o.push(s.q[0] - self.start_root[0]);
        o.push(s.q[1] - self.start_root[1]);
        o
    }

    /// Critic-only extras: base linear velocity and reference joint angles
    /// at the current phase.
    fn critic_extras(&self) -> Vec<f64> {
        let s = &self.world.state;
        let ref_frame = self.dataset.base.sample_at_phase(self.phi).expect("phase in range");
        let mut o = Vec::with_capacity(self.dims.critic_extras);
        o.push(s.qd[0]);
        o.push(s.qd[1]);
        o.extend_from_slice(&ref_frame.joint_angles);
        o
    }

    /// Assemble normalized observations; does not mutate env state.
    pub fn observe(&self, norm: &crate::nets::RunningNorm) -> ObsPack {
        let extras = self.critic_extras();
        let latest = self.history.back().expect("episode started");
        let mut raw_critic = latest.clone();
        raw_critic.extend_from_slice(&extras);

        let mut actor_stack = Vec::with_capacity(self.dims.actor_stack());
        let mut scratch = Vec::new();
        for frame in &self.history {
            norm.normalize_into(frame, &mut scratch);
            actor_stack.extend_from_slice(&scratch);
        }
        let mut critic_in = actor_stack.clone();
        critic_in.extend(norm.normalize_range(&extras, self.dims.actor_frame));
        ObsPack { actor_stack, critic_in, raw_critic }
    }

    /// Advance one control tick under a composed action and phase interval.
    /// `relaxed` selects the relaxed termination curriculum.
    pub fn step(&mut self, exec_action: &[f64], dphi: f64, relaxed: bool) -> StepOutcome {
        let (phi_next, complete) = match phase_advance(self.phi, dphi) {
            Ok(x) => x,
            Err(_) => (self.phi, true),
        };

        // PD targets through the control-delay queue.
        let target: Vec<f64> = self
            .default_pose
            .iter()
            .zip(exec_action.iter())
            .map(|(d, a)| d + self.action_scale * a)
            .collect();
        self.delay_queue.push_back(target);
        let executed = self.delay_queue.pop_front().expect("queue primed");
        let fault = self.world.step(&PDCommand { targets: executed }).is_err();

        let mut reward = RewardVector::default();
        let mut matched = None;
        let mut crossings = Vec::new();
        let mut done: Option<EpisodeEnd>;

        if fault {
            self.fault_count += 1;
            reward.sparse += self.reward_cfg.termination;
            done = Some(EpisodeEnd::Fault);
        } else {
            let fk = self.world.fk();
            // Keyframe crossings (metrics): phi < p <= phi_next.
            for (i, &p) in self.dataset.plan.key_phases.iter().enumerate() {
                if self.phi + 1e-12 < p && p <= phi_next + 1e-12 {
                    crossings.push((i, fk.mean_body_distance(&self.kf_targets[i])));
                }
            }

            // Sparse group.
            match self.global_mode {
                GlobalRewardMode::KeyframeSparse => {
                    let mut best: Option<(usize, f64)> = None;
                    for (i, &p) in self.dataset.plan.key_phases.iter().enumerate() {
                        let d = (phi_next - p).abs();
                        if d <= self.keyframe_tol
                            && !self.keyframe_rewarded[i]
                            && best.map(|(_, bd)| d < bd).unwrap_or(true)
                        {
                            best = Some((i, d));
                        }
                    }
                    if let Some((i, _)) = best {
                        self.keyframe_rewarded[i] = true;
                        matched = Some(i);
                        let (r, terms) = sparse_global_reward(
                            &self.reward_cfg,
                            &fk,
                            &self.kf_targets[i],
                            self.kf_scales[i],
                        );
                        reward.sparse += r;
                        if self.trace_rewards {
                            reward.breakdown.push(("global_body_pos".into(), terms[0]));
                            reward.breakdown.push(("global_body_rot".into(), terms[1]));
                            reward.breakdown.push(("global_feet_pos".into(), terms[2]));
                        }
                    }
                }
                GlobalRewardMode::Dense => {
                    let guide = self.tracked_frame(phi_next);
                    let ref_fk = self.world.fk_of_frame(&guide);
                    let (r, terms) = sparse_global_reward(&self.reward_cfg, &fk, &ref_fk, 1.0);
                    reward.sparse += r;
                    if self.trace_rewards {
                        reward.breakdown.push(("global_body_pos".into(), terms[0]));
                        reward.breakdown.push(("global_body_rot".into(), terms[1]));
                        reward.breakdown.push(("global_feet_pos".into(), terms[2]));
                    }
                }
            }

            // Dense group always references the unedited base locals.
            let ref_frame = self.dataset.base.sample_at_phase(phi_next).expect("phase");
            let ref_fk = self.world.fk_of_frame(&ref_frame);
            let joint_angles = self.world.state.joint_angles().to_vec();
            let joint_vels = self.world.state.joint_vels().to_vec();
            let (dense, dense_terms) = dense_local_reward(
                &self.reward_cfg,
                &self.world.morphology,
                &DenseInputs {
                    fk: &fk,
                    ref_fk: &ref_fk,
                    joint_angles: &joint_angles,
                    ref_joint_angles: &ref_frame.joint_angles,
                    joint_vels: &joint_vels,
                    prev_joint_vels: &self.prev_joint_vels,
                    action: exec_action,
                    prev_action: &self.prev_action,
                    prev_prev_action: &self.prev_prev_action,
                    torques: &self.world.diag.applied_torques,
                    control_dt: self.world.config.control_dt(),
                },
            );
            reward.dense += dense;
            if self.trace_rewards {
                reward.breakdown.extend(dense_terms.pairs());
            }

            // Termination against the offset-ramped guide.
            let guide = self.tracked_frame(phi_next);
            let at_kf = matched.is_some() || !crossings.is_empty();
            let term = self.world.check_termination(&guide, relaxed, at_kf, complete);
            done = match term {
                Termination::Alive => None,
                Termination::Complete => Some(EpisodeEnd::Complete),
                Termination::Fell => Some(EpisodeEnd::Fell),
                Termination::TrackingFailure if self.tracking_termination => {
                    Some(EpisodeEnd::TrackingFailure)
                }
                Termination::TrackingFailure => None,
            };
            if matches!(done, Some(EpisodeEnd::Fell | EpisodeEnd::TrackingFailure)) {
                reward.sparse += self.reward_cfg.termination;
            }
            if done.is_none() && self.ep_ticks + 1 >= self.max_ticks {
                done = Some(EpisodeEnd::Truncated);
            }
        }

        // Bookkeeping.
        self.ep_ticks += 1;
        self.ep_return_sparse += reward.sparse;
        self.ep_return_dense += reward.dense;
        self.prev_prev_action = std::mem::take(&mut self.prev_action);
        self.prev_action = exec_action.to_vec();
        self.prev_joint_vels = self.world.state.joint_vels().to_vec();
        self.phi = phi_next;
        // Refresh the observation history with the post-step frame.
        if self.history.len() == self.dims.history {
            self.history.pop_front();
        }
        self.history.push_back(self.actor_frame_obs());

        if let Some(end) = done {
            self.episode_records.push(EpisodeRecord {
                end,
                return_sparse: self.ep_return_sparse,
                return_dense: self.ep_return_dense,
                ticks: self.ep_ticks,
                psi: self.psi,
            });
        }

        StepOutcome { reward, done, phi_next, crossings, matched_keyframe: matched }
    }

    /// The densely tracked reference at a phase: base motion with the
    /// rule-ramp offset applied (zero offset in `Original` mode).
    pub fn tracked_frame(&self, phi: f64) -> Frame {
        if let Some(m) = &self.tracked_motion {
            return m.sample_at_phase(phi).expect("phase");
        }
        let mut f = self.dataset.base.sample_at_phase(phi).expect("phase");
        if self.dataset.mode != DatasetMode::Original {
            let off = self.offset_ramp.offset_at(phi);
            f.root_pos[0] += off[0];
            f.root_pos[1] += off[1];
            f.root_pitch += off[2];
        }
        f
    }

    /// Kinematic replay: set the sim state directly from the tracked
    /// reference at the next phase (oracle actuator mode for eval checks).
    pub fn replay_step(&mut self) -> StepOutcome {
        let (phi_next, complete) = phase_advance(self.phi, self.dphi_base).expect("valid phase");
        let frame = self.tracked_frame(phi_next);
        self.world.set_state_from_frame(&frame);
        let fk = self.world.fk();
        let mut crossings = Vec::new();
        for (i, &p) in self.dataset.plan.key_phases.iter().enumerate() {
            if self.phi + 1e-12 < p && p <= phi_next + 1e-12 {
                crossings.push((i, fk.mean_body_distance(&self.kf_targets[i])));
            }
        }
        self.phi = phi_next;
        self.ep_ticks += 1;
        StepOutcome {
            reward: RewardVector::default(),
            done: complete.then_some(EpisodeEnd::Complete),
            phi_next,
            crossings,
            matched_keyframe: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EnvBuildError {
    #[error(transparent)]
    Motion(#[from] crate::motion::MotionError),
    #[error(transparent)]
    Sim(#[from] crate::sim::SimError),
}

/// Build the morphology and edited dataset a config describes. The base
/// motion is procedurally generated (deterministically) from the task block;
/// a `motion_path` overrides the frames while keeping the generated markers.
pub fn build_dataset(config: &ExperimentConfig) -> Result<(Morphology, EditedDataset), EnvBuildError> {
    let morphology = match &config.sim.morphology_path {
        Some(p) => crate::sim::load_morphology(std::path::Path::new(p))?,
        None => Morphology::default_biped(),
    };
    let dims = crate::motion::generate::CharacterDims::default();
    let generated = crate::motion::generate_reference(
        &config.task,
        &dims,
        config.motion.frame_rate_hz,
        &morphology.id,
    )?;
    let motion = match &config.motion.motion_path {
        Some(p) => crate::motion::load_motion(
            std::path::Path::new(p),
            Some((&morphology.id, morphology.joint_count())),
        )?,
        None => generated.motion,
    };
    let plan = crate::motion::edit::select_keyframes_scaled(
        &motion,
        &generated.markers,
        config.task.task_id,
        config.motion.n_uniform_keyframes,
        config.motion.semantic_reward_scale,
    );
    let dataset =
        EditedDataset::new(motion, plan, config.task.clone(), generated.markers, config.train.dataset);
    Ok((morphology, dataset))
}

/// Construct a pool of identical envs with per-index RNG streams.
pub fn build_env_pool(
    config: &ExperimentConfig,
    n_envs: usize,
    master_seed: u64,
    randomize: bool,
) -> Result<Vec<TrackingEnv>, EnvBuildError> {
    let (morphology, dataset) = build_dataset(config)?;
    let dataset = Arc::new(dataset);
    Ok((0..n_envs)
        .map(|i| {
            TrackingEnv::new(
                config,
                morphology.clone(),
                config.sim.config.clone(),
                Arc::clone(&dataset),
                master_seed,
                i,
                randomize,
            )
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::RunningNorm;

    fn test_config() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.train.history_len = 1;
        c
    }

    fn one_env(config: &ExperimentConfig) -> TrackingEnv {
        build_env_pool(config, 1, 42, false).unwrap().pop().unwrap()
    }

    #[test]
    fn observation_layout_and_episode_flow() {
        let config = test_config();
        let mut env = one_env(&config);
        env.reset_eval(0.4);
        let norm = RunningNorm::new(env.dims().raw_critic());
        let obs = env.observe(&norm);
        assert_eq!(obs.actor_stack.len(), env.dims().actor_stack());
        assert_eq!(obs.critic_in.len(), env.dims().critic_input());
        assert_eq!(obs.raw_critic.len(), env.dims().raw_critic());
        // Phase advances by the base interval and the episode eventually ends.
        let zeros = vec![0.0; 6];
        let mut done = None;
        for _ in 0..env.max_ticks() + 1 {
            let out = env.step(&zeros, env.dphi_base, true);
            if out.done.is_some() {
                done = out.done;
                break;
            }
        }
        assert!(done.is_some());
    }

    #[test]
    fn sparse_gate_fires_at_most_once_per_keyframe() {
        let config = test_config();
        let mut env = one_env(&config);
        env.reset_eval(0.4);
        let zeros = vec![0.0; 6];
        let mut matches = Vec::new();
        for _ in 0..env.max_ticks() {
            let out = env.step(&zeros, env.dphi_base, true);
            if let Some(i) = out.matched_keyframe {
                matches.push(i);
            }
            if out.done.is_some() {
                break;
            }
        }
        let n = matches.len();
        matches.sort_unstable();
        matches.dedup();
        assert_eq!(n, matches.len(), "a keyframe was rewarded twice");
        assert!(n <= env.keyframe_phases().len());
    }

    #[test]
    fn replay_tracks_reference_exactly() {
        let config = test_config();
        let mut env = one_env(&config);
        env.reset_eval(0.4);
        let mut worst: f64 = 0.0;
        loop {
            let out = env.replay_step();
            for (_, err) in &out.crossings {
                worst = worst.max(*err);
            }
            if out.done.is_some() {
                break;
            }
        }
        // Keyframe targets differ from the ramped replay only through the
        // edit offsets, which are zero at psi = base.
        assert!(worst < 1e-9, "replay keyframe error {worst}");
    }

    #[test]
    fn rsi_starts_at_keyframes_deterministically() {
        let config = test_config();
        let mut env = one_env(&config);
        let mut starts = Vec::new();
        for _ in 0..20 {
            env.reset_train();
            starts.push(env.phi);
        }
        // Deterministic per env stream.
        let mut env2 = one_env(&config);
        let mut starts2 = Vec::new();
        for _ in 0..20 {
            env2.reset_train();
            starts2.push(env2.phi);
        }
        assert_eq!(starts, starts2);
        // All starts are either 0 or a keyframe phase.
        for s in starts {
            assert!(s == 0.0 || env.keyframe_phases().contains(&s));
        }
    }

    #[test]
    fn tracked_frame_applies_ramp_offset() {
        let mut config = test_config();
        config.train.dataset = DatasetMode::KeyframeEdit;
        let mut env = one_env(&config);
        env.reset_eval(0.6); // +0.2 beyond the base 0.4
        let landing = env.dataset().plan.phase_of_label("landing").unwrap();
        let base = env.dataset().base.sample_at_phase(landing).unwrap();
        let tracked = env.tracked_frame(landing);
        assert!((tracked.root_pos[0] - base.root_pos[0] - 0.2).abs() < 1e-9);
        // Locals untouched.
        assert_eq!(tracked.joint_angles, base.joint_angles);
    }
}

