//! The policy bundle: base Gaussian tracking policy with double critics,
//! optional phase/tracking adapter heads each with their own double critics,
//! shared observation normalization, and checkpoint packing.

use rand_chacha::ChaCha8Rng;

use crate::adapters::{adapt_action, adapt_phase};
use crate::config::{ExperimentConfig, GlobalRewardMode};
use crate::nets::checkpoint::{Checkpoint, CheckpointKind};
use crate::nets::{GaussianHead, Mlp, NetError, RunningNorm};

/// One value function per reward group.
#[derive(Debug, Clone, PartialEq)]
pub struct DoubleCritic {
    pub sparse: Mlp,
    pub dense: Mlp,
}

impl DoubleCritic {
    pub fn new(input_dim: usize, hidden: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        DoubleCritic { sparse: Mlp::new(&sizes, 1.0, rng), dense: Mlp::new(&sizes, 1.0, rng) }
    }

    pub fn values(&self, critic_in: &[f64]) -> Result<(f64, f64), NetError> {
        Ok((self.sparse.forward(critic_in)?[0], self.dense.forward(critic_in)?[0]))
    }
}

/// Which head a buffered sample belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaneKind {
    Base,
    Phase,
    Track,
}

/// Per-tick stochastic sample of one trainable lane.
#[derive(Debug, Clone)]
pub struct LaneSample {
    pub kind: LaneKind,
    pub action: Vec<f64>,
    pub log_prob: f64,
}

/// The outcome of one policy evaluation at a tick.
#[derive(Debug, Clone)]
pub struct Decision {
    /// Composed action that drives the PD targets.
    pub exec_action: Vec<f64>,
    pub dphi_delta: f64,
    pub dphi_ada: f64,
    /// Samples for every trainable lane, in lane order.
    pub lanes: Vec<LaneSample>,
}

#[derive(Debug, Clone)]
pub struct PolicyBundle {
    /// Base tracking head; input is the actor stack plus the phase-interval
    /// feature.
    pub base_head: GaussianHead,
    pub base_critics: DoubleCritic,
    /// Phase adapter (1-D delta interval); input is the actor stack.
    pub phase: Option<GaussianHead>,
    pub phase_critics: Option<DoubleCritic>,
    /// Tracking adapter; input is the actor stack plus the adaptive interval.
    pub track: Option<GaussianHead>,
    pub track_critics: Option<DoubleCritic>,
    pub norm: RunningNorm,
    pub base_trainable: bool,
    pub dphi_lower: f64,
    pub dphi_upper: f64,
    /// Output gain applied to tracking-adapter samples before composition.
    pub track_gain: f64,
    pub config_hash: String,
    /// SHA of the frozen base section (stage 2 only).
    pub base_sha: String,
}

/// Observation geometry shared by the env and the bundle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObsDims {
    /// One actor frame (before history stacking).
    pub actor_frame: usize,
    pub critic_extras: usize,
    pub history: usize,
    pub action: usize,
}

impl ObsDims {
    pub fn for_joints(joints: usize, history: usize) -> Self {
        // [pitch_rate, gravity(2), q(J), qd(J), prev_action(J), phi, psi, odom(2)]
        ObsDims { actor_frame: 1 + 2 + 3 * joints + 2 + 2, critic_extras: 2 + joints, history, action: joints }
    }

    pub fn actor_stack(&self) -> usize {
        self.actor_frame * self.history
    }

    pub fn policy_input(&self) -> usize {
        self.actor_stack() + 1
    }

    pub fn critic_input(&self) -> usize {
        self.actor_stack() + self.critic_extras
    }

    pub fn raw_critic(&self) -> usize {
        self.actor_frame + self.critic_extras
    }
}

impl PolicyBundle {
    /// Fresh stage-1 bundle.
    pub fn new_stage1(config: &ExperimentConfig, dims: ObsDims, rng: &mut ChaCha8Rng) -> Self {
        let t = &config.train;
        let mut head_sizes = vec![dims.policy_input()];
        head_sizes.extend_from_slice(&t.policy_hidden);
        head_sizes.push(dims.action);
        let base_head = GaussianHead::new(&head_sizes, t.init_log_std, 0.01, rng);
        let base_critics = DoubleCritic::new(dims.critic_input(), &t.critic_hidden, rng);
        let (phase, phase_critics) = if t.adaptive_phase_stage1 {
            let mut sizes = vec![dims.actor_stack()];
            sizes.extend_from_slice(&t.adapter_hidden);
            sizes.push(1);
            let mut head = GaussianHead::new(&sizes, t.adapter_init_log_std, 0.01, rng);
            head.mean_net.zero_last_layer();
            (Some(head), Some(DoubleCritic::new(dims.critic_input(), &t.critic_hidden, rng)))
        } else {
            (None, None)
        };
        PolicyBundle {
            base_head,
            base_critics,
            phase,
            phase_critics,
            track: None,
            track_critics: None,
            norm: RunningNorm::new(dims.raw_critic()),
            base_trainable: true,
            dphi_lower: t.dphi_lower_factor,
            dphi_upper: t.dphi_upper_factor,
            track_gain: t.track_adapter_gain,
            config_hash: config.hash(),
            base_sha: String::new(),
        }
    }

    /// Stage-2 bundle over a trained stage-1 bundle: freezes (or not) the
    /// base, zero-initializes both adapter heads so the first iteration
    /// reproduces the stage-1 policy, and attaches fresh adapter critics.
    pub fn into_stage2(mut self, config: &ExperimentConfig, dims: ObsDims, rng: &mut ChaCha8Rng) -> Self {
        let t = &config.train;
        let mut phase_sizes = vec![dims.actor_stack()];
        phase_sizes.extend_from_slice(&t.adapter_hidden);
        phase_sizes.push(1);
        let mut phase = GaussianHead::new(&phase_sizes, t.adapter_init_log_std, 0.01, rng);
        phase.mean_net.zero_last_layer();
        let mut track_sizes = vec![dims.policy_input()];
        track_sizes.extend_from_slice(&t.adapter_hidden);
        track_sizes.push(dims.action);
        let mut track = GaussianHead::new(&track_sizes, t.adapter_init_log_std, 0.01, rng);
        track.mean_net.zero_last_layer();
        self.norm.freeze();
        PolicyBundle {
            phase: Some(phase),
            phase_critics: Some(DoubleCritic::new(dims.critic_input(), &t.critic_hidden, rng)),
            track: Some(track),
            track_critics: Some(DoubleCritic::new(dims.critic_input(), &t.critic_hidden, rng)),
            base_trainable: !t.freeze_base,
            track_gain: t.track_adapter_gain,
            ..self
        }
    }

    /// Lane layout in a fixed order: base (when trainable), phase, track.
    pub fn lane_kinds(&self) -> Vec<LaneKind> {
        let mut v = Vec::new();
        if self.base_trainable {
            v.push(LaneKind::Base);
        }
        if self.phase.is_some() {
            v.push(LaneKind::Phase);
        }
        if self.track.is_some() {
            v.push(LaneKind::Track);
        }
        v
    }

    pub fn head(&self, kind: LaneKind) -> &GaussianHead {
        match kind {
            LaneKind::Base => &self.base_head,
            LaneKind::Phase => self.phase.as_ref().expect("phase head"),
            LaneKind::Track => self.track.as_ref().expect("track head"),
        }
    }

    pub fn head_mut(&mut self, kind: LaneKind) -> &mut GaussianHead {
        match kind {
            LaneKind::Base => &mut self.base_head,
            LaneKind::Phase => self.phase.as_mut().expect("phase head"),
            LaneKind::Track => self.track.as_mut().expect("track head"),
        }
    }

    pub fn critics(&self, kind: LaneKind) -> &DoubleCritic {
        match kind {
            LaneKind::Base => &self.base_critics,
            LaneKind::Phase => self.phase_critics.as_ref().expect("phase critics"),
            LaneKind::Track => self.track_critics.as_ref().expect("track critics"),
        }
    }

    pub fn critics_mut(&mut self, kind: LaneKind) -> &mut DoubleCritic {
        match kind {
            LaneKind::Base => &mut self.base_critics,
            LaneKind::Phase => self.phase_critics.as_mut().expect("phase critics"),
            LaneKind::Track => self.track_critics.as_mut().expect("track critics"),
        }
    }

    /// Lane input vector for a head: the actor stack plus the interval
    /// feature the head is conditioned on.
    pub fn lane_input(&self, kind: LaneKind, actor_stack: &[f64], dphi_ada_norm: f64) -> Vec<f64> {
        match kind {
            LaneKind::Phase => actor_stack.to_vec(),
            LaneKind::Base => {
                let mut v = actor_stack.to_vec();
                v.push(self.base_dphi_feature(dphi_ada_norm));
                v
            }
            LaneKind::Track => {
                let mut v = actor_stack.to_vec();
                v.push(dphi_ada_norm);
                v
            }
        }
    }

    /// The base head sees the adaptive interval only in the one-stage
    /// flexible-phase configuration (no tracking adapter); with a tracking
    /// adapter present the frozen base keeps its fixed-interval semantics.
    fn base_dphi_feature(&self, dphi_ada_norm: f64) -> f64 {
        if self.phase.is_some() && self.track.is_none() {
            dphi_ada_norm
        } else {
            1.0
        }
    }

    /// Evaluate the policy at one tick. `rng` None means deterministic
    /// (mean) actions for every head.
    pub fn act(
        &self,
        actor_stack: &[f64],
        dphi_base: f64,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Decision, NetError> {
        let mut lanes = Vec::new();
        // Phase adapter first: downstream heads condition on its output.
        let (dphi_delta, dphi_ada) = if let Some(phase_head) = &self.phase {
            let raw = match rng.as_deref_mut() {
                Some(r) => {
                    let (a, lp) = phase_head.sample(actor_stack, r)?;
                    lanes.push(LaneSample { kind: LaneKind::Phase, action: a.clone(), log_prob: lp });
                    a[0]
                }
                None => phase_head.mean(actor_stack)?[0],
            };
            adapt_phase(raw, dphi_base, self.dphi_lower, self.dphi_upper)
        } else {
            (0.0, dphi_base)
        };
        let dphi_ada_norm = dphi_ada / dphi_base;

        let base_in = self.lane_input(LaneKind::Base, actor_stack, dphi_ada_norm);
        let base_action = if self.base_trainable {
            match rng.as_deref_mut() {
                Some(r) => {
                    let (a, lp) = self.base_head.sample(&base_in, r)?;
                    // Keep lane order fixed: base comes first.
                    lanes.insert(0, LaneSample { kind: LaneKind::Base, action: a.clone(), log_prob: lp });
                    a
                }
                None => self.base_head.mean(&base_in)?,
            }
        } else {
            self.base_head.mean(&base_in)?
        };

        let exec_action = if let Some(track_head) = &self.track {
            let track_in = self.lane_input(LaneKind::Track, actor_stack, dphi_ada_norm);
            let sample = match rng.as_deref_mut() {
                Some(r) => {
                    let (a, lp) = track_head.sample(&track_in, r)?;
                    lanes.push(LaneSample { kind: LaneKind::Track, action: a.clone(), log_prob: lp });
                    a
                }
                None => track_head.mean(&track_in)?,
            };
            let comp: Vec<f64> = sample.iter().map(|s| self.track_gain * s).collect();
            adapt_action(&base_action, dphi_delta, &comp)
        } else {
            base_action
        };

        Ok(Decision { exec_action, dphi_delta, dphi_ada, lanes })
    }

    /// SHA-256 of the base (policy + double critic) parameter section.
    pub fn base_params_sha(&self) -> String {
        self.to_checkpoint(CheckpointKind::Stage1).base_params_sha()
    }

    pub fn to_checkpoint(&self, kind: CheckpointKind) -> Checkpoint {
        let mut c = Checkpoint::new(kind, &self.config_hash);
        pack_head(&mut c, "base/head", &self.base_head);
        pack_mlp(&mut c, "base/critic_sparse", &self.base_critics.sparse);
        pack_mlp(&mut c, "base/critic_dense", &self.base_critics.dense);
        if let (Some(h), Some(cr)) = (&self.phase, &self.phase_critics) {
            pack_head(&mut c, "adapter/phase/head", h);
            pack_mlp(&mut c, "adapter/phase/critic_sparse", &cr.sparse);
            pack_mlp(&mut c, "adapter/phase/critic_dense", &cr.dense);
        }
        if let (Some(h), Some(cr)) = (&self.track, &self.track_critics) {
            pack_head(&mut c, "adapter/track/head", h);
            pack_mlp(&mut c, "adapter/track/critic_sparse", &cr.sparse);
            pack_mlp(&mut c, "adapter/track/critic_dense", &cr.dense);
        }
        c.push("norm/mean", vec![self.norm.mean.len()], self.norm.mean.clone());
        c.push("norm/m2", vec![self.norm.m2.len()], self.norm.m2.clone());
        c.push(
            "norm/meta",
            vec![3],
            vec![self.norm.count, if self.norm.frozen { 1.0 } else { 0.0 }, self.norm.clip],
        );
        c.push(
            "meta/flags",
            vec![4],
            vec![
                if self.base_trainable { 1.0 } else { 0.0 },
                self.dphi_lower,
                self.dphi_upper,
                self.track_gain,
            ],
        );
        c.base_sha = self.base_sha.clone();
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self, NetError> {
        let base_head = unpack_head(c, "base/head")?;
        let base_critics = DoubleCritic {
            sparse: unpack_mlp(c, "base/critic_sparse")?,
            dense: unpack_mlp(c, "base/critic_dense")?,
        };
        let (phase, phase_critics) = match unpack_head(c, "adapter/phase/head") {
            Ok(h) => (
                Some(h),
                Some(DoubleCritic {
                    sparse: unpack_mlp(c, "adapter/phase/critic_sparse")?,
                    dense: unpack_mlp(c, "adapter/phase/critic_dense")?,
                }),
            ),
            Err(_) => (None, None),
        };
        let (track, track_critics) = match unpack_head(c, "adapter/track/head") {
            Ok(h) => (
                Some(h),
                Some(DoubleCritic {
                    sparse: unpack_mlp(c, "adapter/track/critic_sparse")?,
                    dense: unpack_mlp(c, "adapter/track/critic_dense")?,
                }),
            ),
            Err(_) => (None, None),
        };
        let mean = c.get("norm/mean")?.data.clone();
        let m2 = c.get("norm/m2")?.data.clone();
        let meta = &c.get("norm/meta")?.data;
        let norm = RunningNorm { mean, m2, count: meta[0], frozen: meta[1] != 0.0, clip: meta[2] };
        let flags = &c.get("meta/flags")?.data;
        Ok(PolicyBundle {
            base_head,
            base_critics,
            phase,
            phase_critics,
            track,
            track_critics,
            norm,
            base_trainable: flags[0] != 0.0,
            dphi_lower: flags[1],
            dphi_upper: flags[2],
            track_gain: if flags.len() > 3 { flags[3] } else { 1.0 },
            config_hash: c.config_hash.clone(),
            base_sha: c.base_sha.clone(),
        })
    }
}

fn pack_mlp(c: &mut Checkpoint, prefix: &str, net: &Mlp) {
    for l in 0..net.weights.len() {
        c.push(
            &format!("{prefix}/w{l}"),
            vec![net.sizes[l + 1], net.sizes[l]],
            net.weights[l].clone(),
        );
        c.push(&format!("{prefix}/b{l}"), vec![net.sizes[l + 1]], net.biases[l].clone());
    }
}

fn unpack_mlp(c: &Checkpoint, prefix: &str) -> Result<Mlp, NetError> {
    let mut sizes = Vec::new();
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    let mut l = 0;
    loop {
        let (w, b) = match (c.get(&format!("{prefix}/w{l}")), c.get(&format!("{prefix}/b{l}"))) {
            (Ok(w), Ok(b)) => (w, b),
            _ if l == 0 => return Err(NetError::MissingTensor(format!("{prefix}/w0"))),
            _ => break,
        };
        if l == 0 {
            sizes.push(w.shape[1]);
        }
        sizes.push(w.shape[0]);
        weights.push(w.data.clone());
        biases.push(b.data.clone());
        l += 1;
    }
    Ok(Mlp { sizes, weights, biases })
}

fn pack_head(c: &mut Checkpoint, prefix: &str, head: &GaussianHead) {
    pack_mlp(c, &format!("{prefix}/mean"), &head.mean_net);
    c.push(&format!("{prefix}/log_std"), vec![head.log_std.len()], head.log_std.clone());
}

fn unpack_head(c: &Checkpoint, prefix: &str) -> Result<GaussianHead, NetError> {
    let mean_net = unpack_mlp(c, &format!("{prefix}/mean"))?;
    let log_std = c.get(&format!("{prefix}/log_std"))?.data.clone();
    Ok(GaussianHead { mean_net, log_std })
}

/// Per-reward-mode helper: whether the sparse group fires densely.
pub fn sparse_fires_every_tick(mode: GlobalRewardMode) -> bool {
    mode == GlobalRewardMode::Dense
}
