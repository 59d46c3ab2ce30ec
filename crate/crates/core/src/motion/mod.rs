//! Phase-parameterized reference motions.
//!
//! A [`ReferenceMotion`] is a uniformly sampled trajectory of global root
//! poses and local joint angles, indexed by a normalized phase `phi` in
//! `[0, 1]`. Keyframe selection and editing live in [`crate::motion::edit`],
//! procedural generation in [`crate::motion::generate`], file I/O in
//! [`crate::motion::io`].

pub mod edit;
pub mod generate;
pub mod io;

pub use edit::{edit_keyframes, rule_edit_dense, select_keyframes, EditedDataset, EditedKeyframe};
pub use generate::{generate_reference, GeneratedMotion, MotionMarkers};
pub use io::{load_motion, save_motion};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MotionError {
    #[error("phase {0} outside [0, 1]")]
    PhaseOutOfRange(f64),
    #[error("phase interval {dphi} from phase {phi} would move phase negative")]
    InvalidInterval { phi: f64, dphi: f64 },
    #[error("motion needs at least two frames, got {0}")]
    TooFewFrames(usize),
    #[error("frame {index} has {got} joints, expected {expected}")]
    JointCountMismatch { index: usize, got: usize, expected: usize },
    #[error("task variable {psi} outside configured range [{lo}, {hi}]")]
    PsiOutOfRange { psi: f64, lo: f64, hi: f64 },
    #[error("edit phase set is empty")]
    EmptyEditSet,
    #[error("infeasible motion parameters: {0}")]
    Infeasible(String),
    #[error("schema version {got} unsupported (expected {expected})")]
    SchemaVersion { got: u32, expected: u32 },
    #[error("morphology mismatch: file has {got:?} with {joints} joints, expected {expected:?} with {expected_joints}")]
    MorphologyMismatch { got: String, joints: usize, expected: String, expected_joints: usize },
    #[error("parse error at byte offset {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One sampled pose: global root pose plus local joint angles, with
/// finite-difference velocities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    /// Planar root position (x, z) in meters.
    pub root_pos: [f64; 2],
    /// Root pitch in radians, CCW positive.
    pub root_pitch: f64,
    /// Local joint angles in radians.
    pub joint_angles: Vec<f64>,
    /// Root linear velocity (m/s), from finite differences.
    pub root_vel: [f64; 2],
    /// Root pitch rate (rad/s).
    pub root_pitch_rate: f64,
    /// Joint velocities (rad/s).
    pub joint_vels: Vec<f64>,
}

impl Frame {
    pub fn zero(joint_count: usize) -> Self {
        Frame {
            root_pos: [0.0, 0.0],
            root_pitch: 0.0,
            joint_angles: vec![0.0; joint_count],
            root_vel: [0.0, 0.0],
            root_pitch_rate: 0.0,
            joint_vels: vec![0.0; joint_count],
        }
    }
}

/// A whole reference motion, uniformly sampled in time.
///
/// Phase 0 maps to frame 0 and phase 1 to the last frame, so
/// `duration_s = (frames.len() - 1) / frame_rate_hz`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceMotion {
    pub morphology_id: String,
    pub frame_rate_hz: f64,
    pub frames: Vec<Frame>,
}

impl ReferenceMotion {
    /// Build from position-level frames; velocities are recomputed by central
    /// finite differences so the stored motion always satisfies the velocity
    /// invariant.
    pub fn from_frames(
        morphology_id: &str,
        frame_rate_hz: f64,
        mut frames: Vec<Frame>,
    ) -> Result<Self, MotionError> {
        if frames.len() < 2 {
            return Err(MotionError::TooFewFrames(frames.len()));
        }
        let joints = frames[0].joint_angles.len();
        for (index, f) in frames.iter().enumerate() {
            if f.joint_angles.len() != joints {
                return Err(MotionError::JointCountMismatch {
                    index,
                    got: f.joint_angles.len(),
                    expected: joints,
                });
            }
        }
        recompute_velocities(&mut frames, frame_rate_hz);
        Ok(ReferenceMotion { morphology_id: morphology_id.to_string(), frame_rate_hz, frames })
    }

    pub fn joint_count(&self) -> usize {
        self.frames[0].joint_angles.len()
    }

    pub fn duration_s(&self) -> f64 {
        (self.frames.len() - 1) as f64 / self.frame_rate_hz
    }

    /// Nominal per-control-tick phase interval for a given control rate.
    pub fn dphi_for_control_dt(&self, control_dt: f64) -> f64 {
        control_dt / self.duration_s()
    }

    /// Sample the motion at a phase by linear interpolation between the
    /// bracketing frames. Angles interpolate along the shortest arc.
    pub fn sample_at_phase(&self, phi: f64) -> Result<Frame, MotionError> {
        if !(0.0..=1.0).contains(&phi) || phi.is_nan() {
            return Err(MotionError::PhaseOutOfRange(phi));
        }
        let last = self.frames.len() - 1;
        let x = phi * last as f64;
        let k = (x.floor() as usize).min(last - 1);
        let t = x - k as f64;
        let a = &self.frames[k];
        let b = &self.frames[k + 1];
        if t == 0.0 {
            return Ok(a.clone());
        }
        let mut out = Frame::zero(self.joint_count());
        out.root_pos = [lerp(a.root_pos[0], b.root_pos[0], t), lerp(a.root_pos[1], b.root_pos[1], t)];
        out.root_pitch = lerp_angle(a.root_pitch, b.root_pitch, t);
        for j in 0..self.joint_count() {
            out.joint_angles[j] = lerp_angle(a.joint_angles[j], b.joint_angles[j], t);
        }
        out.root_vel = [lerp(a.root_vel[0], b.root_vel[0], t), lerp(a.root_vel[1], b.root_vel[1], t)];
        out.root_pitch_rate = lerp(a.root_pitch_rate, b.root_pitch_rate, t);
        for j in 0..self.joint_count() {
            out.joint_vels[j] = lerp(a.joint_vels[j], b.joint_vels[j], t);
        }
        Ok(out)
    }

    /// Max deviation between stored velocities and a fresh finite-difference
    /// recomputation; used by validators and tests.
    pub fn velocity_residual(&self) -> f64 {
        let mut copy = self.frames.clone();
        recompute_velocities(&mut copy, self.frame_rate_hz);
        let mut worst: f64 = 0.0;
        for (a, b) in self.frames.iter().zip(copy.iter()) {
            worst = worst.max((a.root_vel[0] - b.root_vel[0]).abs());
            worst = worst.max((a.root_vel[1] - b.root_vel[1]).abs());
            worst = worst.max((a.root_pitch_rate - b.root_pitch_rate).abs());
            for j in 0..a.joint_vels.len() {
                worst = worst.max((a.joint_vels[j] - b.joint_vels[j]).abs());
            }
        }
        worst
    }
}

/// Central finite differences on the interior, one-sided at the endpoints.
pub fn recompute_velocities(frames: &mut [Frame], rate_hz: f64) {
    let n = frames.len();
    if n < 2 {
        return;
    }
    let joints = frames[0].joint_angles.len();
    for k in 0..n {
        let (prev, next, scale) = if k == 0 {
            (0, 1, rate_hz)
        } else if k == n - 1 {
            (n - 2, n - 1, rate_hz)
        } else {
            (k - 1, k + 1, rate_hz / 2.0)
        };
        let (pf, nf) = (frames[prev].clone(), frames[next].clone());
        let f = &mut frames[k];
        f.root_vel = [
            (nf.root_pos[0] - pf.root_pos[0]) * scale,
            (nf.root_pos[1] - pf.root_pos[1]) * scale,
        ];
        f.root_pitch_rate = (nf.root_pitch - pf.root_pitch) * scale;
        for j in 0..joints {
            f.joint_vels[j] = (nf.joint_angles[j] - pf.joint_angles[j]) * scale;
        }
    }
}

/// Advance the phase by one interval, clamping at the terminal boundary.
///
/// Returns the next phase and whether the motion completed this step.
pub fn phase_advance(phi: f64, dphi: f64) -> Result<(f64, bool), MotionError> {
    if !(0.0..=1.0).contains(&phi) || phi.is_nan() {
        return Err(MotionError::PhaseOutOfRange(phi));
    }
    if phi + dphi < 0.0 || dphi.is_nan() {
        return Err(MotionError::InvalidInterval { phi, dphi });
    }
    let complete = phi + dphi >= 1.0;
    Ok(((phi + dphi).min(1.0), complete))
}

/// Sparse keyframe schedule over a motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyframePlan {
    /// Sorted, strictly increasing keyframe phases in [0, 1].
    pub key_phases: Vec<f64>,
    /// Subset of `key_phases` whose global poses editing transforms.
    pub edit_phases: Vec<f64>,
    /// Semantic tag per keyframe ("takeoff", "landing", ...), empty if none.
    pub semantic_labels: Vec<String>,
    /// Reward multiplier per keyframe; >= 1 for semantic keyframes, 1 otherwise.
    pub reward_scale: Vec<f64>,
}

impl KeyframePlan {
    pub fn len(&self) -> usize {
        self.key_phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.key_phases.is_empty()
    }

    pub fn phase_of_label(&self, label: &str) -> Option<f64> {
        self.semantic_labels
            .iter()
            .position(|l| l == label)
            .map(|i| self.key_phases[i])
    }

    pub fn is_edit_phase(&self, phi: f64) -> bool {
        self.edit_phases.iter().any(|&p| p == phi)
    }

    /// Validate ordering, range and scale invariants.
    pub fn validate(&self) -> Result<(), MotionError> {
        for w in self.key_phases.windows(2) {
            if w[1] <= w[0] {
                return Err(MotionError::Infeasible(format!(
                    "keyframe phases not strictly increasing: {} then {}",
                    w[0], w[1]
                )));
            }
        }
        for &p in &self.key_phases {
            if !(0.0..=1.0).contains(&p) {
                return Err(MotionError::PhaseOutOfRange(p));
            }
        }
        for &p in &self.edit_phases {
            if !self.key_phases.contains(&p) {
                return Err(MotionError::Infeasible(format!(
                    "edit phase {p} is not a keyframe phase"
                )));
            }
        }
        for (i, &s) in self.reward_scale.iter().enumerate() {
            let semantic = !self.semantic_labels[i].is_empty();
            if semantic && s < 1.0 || !semantic && s != 1.0 {
                return Err(MotionError::Infeasible(format!(
                    "reward scale {s} invalid for keyframe {i}"
                )));
            }
        }
        Ok(())
    }
}

/// Task-variable specification for one edit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EditSpec {
    pub task_id: crate::tasks::TaskId,
    /// Task variable in meters (jump distance / apex height).
    pub psi: f64,
    /// The raw-data value of the same quantity (d0 / h0).
    pub base_value: f64,
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Shortest-arc angle interpolation.
fn lerp_angle(a: f64, b: f64, t: f64) -> f64 {
    a + wrap_angle(b - a) * t
}

/// Wrap an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut x = a % two_pi;
    if x > std::f64::consts::PI {
        x -= two_pi;
    } else if x <= -std::f64::consts::PI {
        x += two_pi;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_motion() -> ReferenceMotion {
        // 5 frames, joint 0 ramps 0.0 -> 0.4, root x ramps 0 -> 1.
        let frames: Vec<Frame> = (0..5)
            .map(|k| {
                let mut f = Frame::zero(2);
                f.root_pos = [k as f64 * 0.25, 0.5];
                f.joint_angles[0] = k as f64 * 0.1;
                f
            })
            .collect();
        ReferenceMotion::from_frames("test", 10.0, frames).unwrap()
    }

    #[test]
    fn phase_advance_basic() {
        assert_eq!(phase_advance(0.50, 0.02).unwrap(), (0.52, false));
        let (phi, done) = phase_advance(0.99, 0.02).unwrap();
        assert_eq!(phi, 1.0);
        assert!(done);
        // dphi = dt / T
        let dphi = 0.02_f64 / 2.0;
        assert_eq!(phase_advance(0.0, dphi).unwrap(), (0.01, false));
    }

    #[test]
    fn phase_advance_rejects_negative_result() {
        assert!(phase_advance(0.1, -0.2).is_err());
        assert!(phase_advance(-0.1, 0.2).is_err());
        // Negative interval that keeps phase nonnegative is accepted.
        let (phi, done) = phase_advance(0.3, -0.1).unwrap();
        assert!((phi - 0.2).abs() < 1e-12 && !done);
    }

    #[test]
    fn phase_monotone_reaches_one() {
        let mut phi = 0.0;
        let mut steps = 0;
        loop {
            let (next, done) = phase_advance(phi, 0.013).unwrap();
            assert!(next >= phi);
            phi = next;
            steps += 1;
            if done {
                break;
            }
            assert!(steps < 100);
        }
        assert_eq!(phi, 1.0);
    }

    #[test]
    fn sample_reproduces_nodes() {
        let m = ramp_motion();
        for k in 0..5 {
            let phi = k as f64 / 4.0;
            let f = m.sample_at_phase(phi).unwrap();
            assert_eq!(f, m.frames[k]);
        }
    }

    #[test]
    fn sample_linear_midpoint() {
        let m = ramp_motion();
        // Midway between frames 1 (0.1 rad) and 2 (0.2 rad) -> 0.15; the spec
        // midpoint example with angles 0.1 and 0.3 is frame 1..3 at phi=0.375? Use
        // a direct bracketing pair.
        let f = m.sample_at_phase(0.375).unwrap();
        assert!((f.joint_angles[0] - 0.15).abs() < 1e-12);
        assert!((f.root_pos[0] - 0.375).abs() < 1e-12);
    }

    #[test]
    fn sample_midpoint_matches_average_of_bracket() {
        // Joint angles 0.1 and 0.3 bracketing -> 0.2 at the midpoint.
        let mut f0 = Frame::zero(1);
        f0.joint_angles[0] = 0.1;
        let mut f1 = Frame::zero(1);
        f1.joint_angles[0] = 0.3;
        let m = ReferenceMotion::from_frames("t", 10.0, vec![f0, f1]).unwrap();
        let mid = m.sample_at_phase(0.5).unwrap();
        assert!((mid.joint_angles[0] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn sample_rejects_out_of_range() {
        let m = ramp_motion();
        assert!(m.sample_at_phase(-0.01).is_err());
        assert!(m.sample_at_phase(1.01).is_err());
    }

    #[test]
    fn shortest_arc_interpolation() {
        let mut f0 = Frame::zero(1);
        f0.root_pitch = 3.0;
        let mut f1 = Frame::zero(1);
        f1.root_pitch = -3.0;
        let m = ReferenceMotion::from_frames("t", 10.0, vec![f0, f1]).unwrap();
        let mid = m.sample_at_phase(0.5).unwrap();
        // Short way crosses pi, not zero.
        assert!(mid.root_pitch.abs() > 3.0 || (mid.root_pitch.abs() - std::f64::consts::PI).abs() < 0.2);
    }

    #[test]
    fn velocities_match_central_differences() {
        let m = ramp_motion();
        assert!(m.velocity_residual() < 1e-9);
        // Interior: central difference of the x-ramp = 0.25 * 10 / ... slope is
        // exactly 2.5 m/s at every interior frame.
        assert!((m.frames[2].root_vel[0] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn duration_from_frame_count() {
        let m = ramp_motion();
        assert!((m.duration_s() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn plan_validation() {
        let plan = KeyframePlan {
            key_phases: vec![0.2, 0.5, 1.0],
            edit_phases: vec![0.5],
            semantic_labels: vec![String::new(), "takeoff".into(), "end".into()],
            reward_scale: vec![1.0, 2.0, 2.0],
        };
        plan.validate().unwrap();
        let bad = KeyframePlan { edit_phases: vec![0.3], ..plan.clone() };
        assert!(bad.validate().is_err());
    }
}
