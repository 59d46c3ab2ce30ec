//! Two-group reward computation.
//!
//! The sparse group scores world-frame alignment and is gated to keyframe
//! ticks by the environment; the dense group scores root-frame pattern
//! consistency against the unedited base motion every tick, plus the
//! regularization penalties. Group scalarization never happens here; the
//! trainer mixes per-group advantages instead.

use serde::{Deserialize, Serialize};

use crate::sim::dynamics::FkResult;
use crate::sim::Morphology;

/// Per-term weights and kernel bandwidths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    // Sparse group.
    pub global_body_pos: f64,
    pub global_body_rot: f64,
    pub global_feet_pos: f64,
    pub termination: f64,
    // Dense tracking kernels.
    pub local_body_pos: f64,
    pub local_body_rot: f64,
    pub local_dof_pos: f64,
    // Dense penalties.
    pub feet_orientation: f64,
    pub dof_acceleration: f64,
    pub dof_velocity: f64,
    pub action_rate: f64,
    pub smoothness: f64,
    pub torques: f64,
    pub torque_limits: f64,
    pub dof_pos_limits: f64,
    pub dof_vel_limits: f64,
    // Kernel bandwidths.
    pub sigma_body_pos: f64,
    pub sigma_body_rot: f64,
    pub sigma_feet_pos: f64,
    pub sigma_dof_pos: f64,
    /// Group weights (sparse, dense); used only by the trainer's advantage
    /// aggregation and by evaluation summaries.
    pub group_weights: (f64, f64),
    /// Keyframe matching window as a fraction of the base phase interval.
    pub keyframe_tol_factor: f64,
    /// Fraction of the torque limit above which the limit penalty engages.
    pub torque_limit_margin: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            global_body_pos: 10.0,
            global_body_rot: 5.0,
            global_feet_pos: 10.0,
            termination: -200.0,
            local_body_pos: 0.75,
            local_body_rot: 0.5,
            local_dof_pos: 0.75,
            feet_orientation: -5e-2,
            dof_acceleration: -2.5e-7,
            dof_velocity: -5e-4,
            action_rate: -5e-1,
            smoothness: -1e-2,
            torques: -1e-6,
            torque_limits: 5.0,
            dof_pos_limits: -10.0,
            dof_vel_limits: -5.0,
            sigma_body_pos: 0.3,
            sigma_body_rot: 0.5,
            sigma_feet_pos: 0.2,
            sigma_dof_pos: 0.5,
            group_weights: (1.0, 0.5),
            keyframe_tol_factor: 0.5,
            torque_limit_margin: 0.95,
        }
    }
}

/// The per-tick reward pair plus a per-term breakdown for tracing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardVector {
    pub sparse: f64,
    pub dense: f64,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub breakdown: Vec<(String, f64)>,
}

#[inline]
fn kernel(err: f64, sigma: f64) -> f64 {
    (-err * err / (sigma * sigma)).exp()
}

#[inline]
fn wrap(a: f64) -> f64 {
    crate::motion::wrap_angle(a)
}

fn mean_rot_err(a: &FkResult, b: &FkResult) -> f64 {
    let n = a.links.len() as f64;
    a.links.iter().zip(b.links.iter()).map(|(x, y)| wrap(x.angle - y.angle).abs()).sum::<f64>() / n
}

fn mean_feet_err(a: &FkResult, b: &FkResult) -> f64 {
    let n = a.foot_points.len() as f64;
    a.foot_points
        .iter()
        .zip(b.foot_points.iter())
        .map(|(x, y)| ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt())
        .sum::<f64>()
        / n
}

/// Sparse global tracking terms against an (edited) keyframe pose. The
/// caller has already matched the phase to a keyframe and supplies that
/// keyframe's reward scale; outside keyframes the sparse reward is zero and
/// this function is simply not called.
pub fn sparse_global_reward(
    cfg: &RewardConfig,
    fk: &FkResult,
    ref_fk: &FkResult,
    reward_scale: f64,
) -> (f64, [f64; 3]) {
    let pos = cfg.global_body_pos * kernel(fk.mean_body_distance(ref_fk), cfg.sigma_body_pos);
    let rot = cfg.global_body_rot * kernel(mean_rot_err(fk, ref_fk), cfg.sigma_body_rot);
    let feet = cfg.global_feet_pos * kernel(mean_feet_err(fk, ref_fk), cfg.sigma_feet_pos);
    (reward_scale * (pos + rot + feet), [pos, rot, feet])
}

/// Everything the dense group needs from one control tick.
pub struct DenseInputs<'a> {
    pub fk: &'a FkResult,
    /// FK of the base (unedited) reference at the next phase.
    pub ref_fk: &'a FkResult,
    pub joint_angles: &'a [f64],
    pub ref_joint_angles: &'a [f64],
    pub joint_vels: &'a [f64],
    pub prev_joint_vels: &'a [f64],
    pub action: &'a [f64],
    pub prev_action: &'a [f64],
    pub prev_prev_action: &'a [f64],
    pub torques: &'a [f64],
    pub control_dt: f64,
}

/// Root-frame position of every link origin.
pub fn root_frame_positions(fk: &FkResult) -> Vec<[f64; 2]> {
    let root = fk.links[0];
    let (s, c) = (-root.angle).sin_cos();
    fk.links
        .iter()
        .map(|l| {
            let dx = l.origin[0] - root.origin[0];
            let dz = l.origin[1] - root.origin[1];
            [c * dx - s * dz, s * dx + c * dz]
        })
        .collect()
}

pub fn dense_local_reward(
    cfg: &RewardConfig,
    m: &Morphology,
    inp: &DenseInputs<'_>,
) -> (f64, DenseBreakdown) {
    let n_links = inp.fk.links.len() as f64;
    // Local body position: root-frame link positions vs the reference's.
    let cur_local = root_frame_positions(inp.fk);
    let ref_local = root_frame_positions(inp.ref_fk);
    let pos_err = cur_local
        .iter()
        .zip(ref_local.iter())
        .map(|(a, b)| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt())
        .sum::<f64>()
        / n_links;
    // Local body rotation: link angles relative to the root.
    let rot_err = inp
        .fk
        .links
        .iter()
        .zip(inp.ref_fk.links.iter())
        .map(|(a, b)| {
            wrap((a.angle - inp.fk.links[0].angle) - (b.angle - inp.ref_fk.links[0].angle)).abs()
        })
        .sum::<f64>()
        / n_links;
    let nj = inp.joint_angles.len() as f64;
    let dof_err = inp
        .joint_angles
        .iter()
        .zip(inp.ref_joint_angles.iter())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / nj;

    let mut b = DenseBreakdown {
        local_body_pos: cfg.local_body_pos * kernel(pos_err, cfg.sigma_body_pos),
        local_body_rot: cfg.local_body_rot * kernel(rot_err, cfg.sigma_body_rot),
        local_dof_pos: cfg.local_dof_pos * kernel(dof_err, cfg.sigma_dof_pos),
        ..Default::default()
    };

    // Feet orientation: deviation of foot links from flat.
    let mut feet_dev = 0.0;
    let mut seen = Vec::new();
    for fp in &m.foot_points {
        if !seen.contains(&fp.link) {
            seen.push(fp.link);
            feet_dev += wrap(inp.fk.links[fp.link].angle).abs();
        }
    }
    b.feet_orientation = cfg.feet_orientation * feet_dev;

    let accel: f64 = inp
        .joint_vels
        .iter()
        .zip(inp.prev_joint_vels.iter())
        .map(|(v, pv)| ((v - pv) / inp.control_dt).powi(2))
        .sum();
    b.dof_acceleration = cfg.dof_acceleration * accel;

    b.dof_velocity = cfg.dof_velocity * inp.joint_vels.iter().map(|v| v * v).sum::<f64>();

    b.action_rate = cfg.action_rate
        * inp.action.iter().zip(inp.prev_action.iter()).map(|(a, p)| (a - p).powi(2)).sum::<f64>();

    b.smoothness = cfg.smoothness
        * inp
            .action
            .iter()
            .zip(inp.prev_action.iter())
            .zip(inp.prev_prev_action.iter())
            .map(|((a, p), pp)| (a - 2.0 * p + pp).powi(2))
            .sum::<f64>();

    b.torques = cfg.torques * inp.torques.iter().map(|t| t * t).sum::<f64>();

    // Limit penalties: hinged at the limit (zero inside).
    let mut tl = 0.0;
    let mut pl = 0.0;
    let mut vl = 0.0;
    for (j, joint) in m.joints.iter().enumerate() {
        let margin = cfg.torque_limit_margin * joint.torque_limit;
        tl += (inp.torques[j].abs() - margin).max(0.0);
        pl += (inp.joint_angles[j] - joint.limits.1).max(0.0)
            + (joint.limits.0 - inp.joint_angles[j]).max(0.0);
        vl += (inp.joint_vels[j].abs() - joint.velocity_limit).max(0.0);
    }
    // Torque-limit term is a negative value scaled by a positive weight.
    b.torque_limits = cfg.torque_limits * (-tl);
    b.dof_pos_limits = cfg.dof_pos_limits * pl;
    b.dof_vel_limits = cfg.dof_vel_limits * vl;

    (b.total(), b)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DenseBreakdown {
    pub local_body_pos: f64,
    pub local_body_rot: f64,
    pub local_dof_pos: f64,
    pub feet_orientation: f64,
    pub dof_acceleration: f64,
    pub dof_velocity: f64,
    pub action_rate: f64,
    pub smoothness: f64,
    pub torques: f64,
    pub torque_limits: f64,
    pub dof_pos_limits: f64,
    pub dof_vel_limits: f64,
}

impl DenseBreakdown {
    pub fn total(&self) -> f64 {
        self.local_body_pos
            + self.local_body_rot
            + self.local_dof_pos
            + self.feet_orientation
            + self.dof_acceleration
            + self.dof_velocity
            + self.action_rate
            + self.smoothness
            + self.torques
            + self.torque_limits
            + self.dof_pos_limits
            + self.dof_vel_limits
    }

    pub fn pairs(&self) -> Vec<(String, f64)> {
        vec![
            ("local_body_pos".into(), self.local_body_pos),
            ("local_body_rot".into(), self.local_body_rot),
            ("local_dof_pos".into(), self.local_dof_pos),
            ("feet_orientation".into(), self.feet_orientation),
            ("dof_acceleration".into(), self.dof_acceleration),
            ("dof_velocity".into(), self.dof_velocity),
            ("action_rate".into(), self.action_rate),
            ("smoothness".into(), self.smoothness),
            ("torques".into(), self.torques),
            ("torque_limits".into(), self.torque_limits),
            ("dof_pos_limits".into(), self.dof_pos_limits),
            ("dof_vel_limits".into(), self.dof_vel_limits),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::Frame;
    use crate::sim::{forward_kinematics, Morphology};

    fn fk_of(m: &Morphology, frame: &Frame) -> FkResult {
        let mut q = vec![0.0; m.dof()];
        let mut qd = vec![0.0; m.dof()];
        q[0] = frame.root_pos[0];
        q[1] = frame.root_pos[1];
        q[2] = frame.root_pitch;
        q[3..].copy_from_slice(&frame.joint_angles);
        qd[3..].copy_from_slice(&frame.joint_vels);
        forward_kinematics(m, &q, &qd)
    }

    fn standing_frame() -> Frame {
        let mut f = Frame::zero(6);
        f.root_pos = [0.0, 0.55];
        f
    }

    #[test]
    fn perfect_match_gives_full_sparse_weights() {
        let cfg = RewardConfig::default();
        let m = Morphology::default_biped();
        let fk = fk_of(&m, &standing_frame());
        let (total, terms) = sparse_global_reward(&cfg, &fk, &fk, 1.0);
        assert!((total - 25.0).abs() < 1e-12);
        assert!((terms[0] - 10.0).abs() < 1e-12);
        assert!((terms[1] - 5.0).abs() < 1e-12);
        assert!((terms[2] - 10.0).abs() < 1e-12);
        // Reward scale is linear.
        let (scaled, _) = sparse_global_reward(&cfg, &fk, &fk, 2.0);
        assert!((scaled - 50.0).abs() < 1e-12);
    }

    #[test]
    fn sparse_kernels_monotone_in_error() {
        let cfg = RewardConfig::default();
        let m = Morphology::default_biped();
        let fk0 = fk_of(&m, &standing_frame());
        let mut prev = f64::INFINITY;
        for shift in [0.0, 0.1, 0.3, 0.6, 1.0] {
            let mut f = standing_frame();
            f.root_pos[0] = shift;
            let fk = fk_of(&m, &f);
            let (r, _) = sparse_global_reward(&cfg, &fk, &fk0, 1.0);
            assert!(r <= prev + 1e-12);
            assert!(r > 0.0 && r <= 25.0);
            prev = r;
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn dense_at(
        m: &Morphology,
        cfg: &RewardConfig,
        frame: &Frame,
        reference: &Frame,
        action: &[f64],
        prev_action: &[f64],
        prev_prev: &[f64],
        torques: &[f64],
    ) -> (f64, DenseBreakdown) {
        let fk = fk_of(m, frame);
        let ref_fk = fk_of(m, reference);
        dense_local_reward(
            cfg,
            m,
            &DenseInputs {
                fk: &fk,
                ref_fk: &ref_fk,
                joint_angles: &frame.joint_angles,
                ref_joint_angles: &reference.joint_angles,
                joint_vels: &frame.joint_vels,
                prev_joint_vels: &frame.joint_vels.clone(),
                action,
                prev_action,
                prev_prev_action: prev_prev,
                torques,
                control_dt: 0.02,
            },
        )
    }

    #[test]
    fn dense_optimum_hits_kernel_weights() {
        let cfg = RewardConfig::default();
        let m = Morphology::default_biped();
        let f = standing_frame();
        let zeros = vec![0.0; 6];
        let (total, b) = dense_at(&m, &cfg, &f, &f, &zeros, &zeros, &zeros, &zeros);
        assert!((b.local_body_pos - 0.75).abs() < 1e-12);
        assert!((b.local_body_rot - 0.5).abs() < 1e-12);
        assert!((b.local_dof_pos - 0.75).abs() < 1e-12);
        assert!((total - 2.0).abs() < 1e-12);
    }

    #[test]
    fn dense_is_root_frame_invariant() {
        // Translating current and reference by different world offsets
        // leaves the local terms unchanged.
        let cfg = RewardConfig::default();
        let m = Morphology::default_biped();
        let mut f = standing_frame();
        f.joint_angles = vec![0.2, -0.4, 0.1, 0.15, -0.3, 0.05];
        let mut r = standing_frame();
        r.joint_angles = vec![0.25, -0.35, 0.1, 0.1, -0.35, 0.0];
        let zeros = vec![0.0; 6];
        let (t0, _) = dense_at(&m, &cfg, &f, &r, &zeros, &zeros, &zeros, &zeros);
        let mut f2 = f.clone();
        f2.root_pos[0] += 3.0;
        let mut r2 = r.clone();
        r2.root_pos[0] -= 1.0;
        let (t1, _) = dense_at(&m, &cfg, &f2, &r2, &zeros, &zeros, &zeros, &zeros);
        assert!((t0 - t1).abs() < 1e-12);
    }

    #[test]
    fn action_rate_monotone() {
        let cfg = RewardConfig::default();
        let m = Morphology::default_biped();
        let f = standing_frame();
        let zeros = vec![0.0; 6];
        let step = vec![0.1; 6];
        let (_, constant) = dense_at(&m, &cfg, &f, &f, &zeros, &zeros, &zeros, &zeros);
        let (_, stepped) = dense_at(&m, &cfg, &f, &f, &step, &zeros, &zeros, &zeros);
        assert!(stepped.action_rate < constant.action_rate);
        assert_eq!(constant.action_rate, 0.0);
    }

    #[test]
    fn velocity_limit_hinge() {
        let cfg = RewardConfig::default();
        let m = Morphology::default_biped();
        let limit = m.joints[0].velocity_limit;
        let mut f = standing_frame();
        let zeros = vec![0.0; 6];
        f.joint_vels = vec![0.95 * limit; 6];
        let (_, below) = dense_at(&m, &cfg, &f, &standing_frame(), &zeros, &zeros, &zeros, &zeros);
        assert_eq!(below.dof_vel_limits, 0.0);
        f.joint_vels = vec![1.05 * limit; 6];
        let (_, above) = dense_at(&m, &cfg, &f, &standing_frame(), &zeros, &zeros, &zeros, &zeros);
        assert!(above.dof_vel_limits < 0.0);
    }

    #[test]
    fn penalties_nonpositive_kernels_bounded() {
        let cfg = RewardConfig::default();
        let m = Morphology::default_biped();
        let mut f = standing_frame();
        f.joint_angles = vec![1.9, -2.5, 1.1, 0.0, 0.0, 0.0]; // outside limits
        f.joint_vels = vec![25.0; 6];
        let action = vec![1.0; 6];
        let zeros = vec![0.0; 6];
        let torques = vec![89.0, -89.0, 44.0, 10.0, 0.0, 0.0];
        let (_, b) = dense_at(&m, &cfg, &f, &standing_frame(), &action, &zeros, &zeros, &torques);
        for (name, v) in [
            ("feet", b.feet_orientation),
            ("accel", b.dof_acceleration),
            ("vel", b.dof_velocity),
            ("rate", b.action_rate),
            ("smooth", b.smoothness),
            ("torque", b.torques),
            ("tlim", b.torque_limits),
            ("plim", b.dof_pos_limits),
            ("vlim", b.dof_vel_limits),
        ] {
            assert!(v <= 0.0, "{name} = {v}");
            assert!(v.is_finite());
        }
        for v in [b.local_body_pos, b.local_body_rot, b.local_dof_pos] {
            assert!(v > 0.0 && v <= 0.75 + 1e-12);
        }
        assert!(b.dof_pos_limits < 0.0);
        assert!(b.torque_limits < 0.0);
    }
}
