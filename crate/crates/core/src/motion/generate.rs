//! Procedural reference-motion generation.
//!
//! Builds kinematic jump motions for the planar biped: the root follows
//! C1 cubic segments on the ground and an exact ballistic parabola in
//! flight, while joint angles come from leg IK against a pinned ankle in
//! stance and a Hermite blend through an authored tuck pose in flight.

use super::{Frame, MotionError, ReferenceMotion};
use crate::tasks::{TaskId, TaskParams};

pub const GRAVITY: f64 = 9.81;

/// Leg geometry the generator needs; must match the simulated morphology.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharacterDims {
    pub thigh_len: f64,
    pub shank_len: f64,
    /// Ankle joint height above the sole.
    pub ankle_height: f64,
}

impl Default for CharacterDims {
    fn default() -> Self {
        CharacterDims { thigh_len: 0.25, shank_len: 0.25, ankle_height: 0.05 }
    }
}

/// Phases of the semantically meaningful instants of a generated motion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionMarkers {
    pub takeoff_phase: f64,
    pub apex_phase: f64,
    pub landing_phase: f64,
    /// True when the requested flight collapses to zero (degenerate motion).
    pub has_flight: bool,
}

/// A generated motion plus its markers and the underlying continuous curves
/// (kept around so tests can compare sampled frames against the source).
#[derive(Debug, Clone)]
pub struct GeneratedMotion {
    pub motion: ReferenceMotion,
    pub markers: MotionMarkers,
    pub curves: MotionCurves,
}

/// One cubic Hermite segment.
#[derive(Debug, Clone, Copy)]
struct Seg {
    t0: f64,
    t1: f64,
    p0: f64,
    p1: f64,
    m0: f64,
    m1: f64,
}

impl Seg {
    fn eval(&self, t: f64) -> f64 {
        let dt = self.t1 - self.t0;
        let s = ((t - self.t0) / dt).clamp(0.0, 1.0);
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * self.p0
            + (s3 - 2.0 * s2 + s) * dt * self.m0
            + (-2.0 * s3 + 3.0 * s2) * self.p1
            + (s3 - s2) * dt * self.m1
    }
}

/// Piecewise curve: Hermite segments, with an optional exact parabola window
/// (used for the flight arc of the root).
#[derive(Debug, Clone, Default)]
pub struct Curve {
    segs: Vec<Seg>,
    parabola: Option<Parabola>,
}

#[derive(Debug, Clone, Copy)]
struct Parabola {
    t0: f64,
    t1: f64,
    x0: f64,
    v0: f64,
    acc: f64,
}

impl Curve {
    fn from_knots(knots: &[(f64, f64, f64)]) -> Curve {
        let segs = knots
            .windows(2)
            .filter(|w| w[1].0 - w[0].0 > 1e-12)
            .map(|w| Seg { t0: w[0].0, t1: w[1].0, p0: w[0].1, p1: w[1].1, m0: w[0].2, m1: w[1].2 })
            .collect();
        Curve { segs, parabola: None }
    }

    pub fn eval(&self, t: f64) -> f64 {
        if let Some(p) = &self.parabola {
            if t >= p.t0 && t <= p.t1 {
                let u = t - p.t0;
                return p.x0 + p.v0 * u + 0.5 * p.acc * u * u;
            }
        }
        for seg in &self.segs {
            if t <= seg.t1 {
                return seg.eval(t);
            }
        }
        self.segs.last().map(|s| s.eval(t)).unwrap_or(0.0)
    }
}

/// Continuous root curves of a generated motion.
#[derive(Debug, Clone, Default)]
pub struct MotionCurves {
    pub root_x: Curve,
    pub root_z: Curve,
    pub pitch: Curve,
}

/// Two-link leg IK: hip at `hip`, ankle at `ankle`, knee bending backward.
///
/// Returns (hip_angle, knee_angle) as joint angles relative to the torso
/// hanging straight down; the caller folds in pitch and the flat-foot ankle.
fn leg_ik(hip: [f64; 2], ankle: [f64; 2], dims: &CharacterDims) -> (f64, f64) {
    let (l1, l2) = (dims.thigh_len, dims.shank_len);
    let dx = ankle[0] - hip[0];
    let dz = ankle[1] - hip[1];
    let r = (dx * dx + dz * dz).sqrt().clamp((l1 - l2).abs() + 1e-4, l1 + l2 - 1e-4);
    // Angle of the hip->ankle line measured from straight down, CCW positive.
    let phi_d = dx.atan2(-dz);
    let cos_b1 = ((l1 * l1 + r * r - l2 * l2) / (2.0 * l1 * r)).clamp(-1.0, 1.0);
    let cos_b2 = ((l2 * l2 + r * r - l1 * l1) / (2.0 * l2 * r)).clamp(-1.0, 1.0);
    let b1 = cos_b1.acos();
    let b2 = cos_b2.acos();
    // Knee forward of the hip-ankle line; knee joint angle is negative.
    (phi_d + b1, -(b1 + b2))
}

struct Timeline {
    t_crouch: f64,
    t_takeoff: f64,
    t_apex: f64,
    t_land: f64,
    t_absorb: f64,
    t_end: f64,
    flight_vx: f64,
    has_flight: bool,
}

const Z_STAND: f64 = 0.53;
const Z_CROUCH: f64 = 0.42;
const Z_TAKEOFF: f64 = 0.52;
const Z_LAND: f64 = 0.48;
const Z_ABSORB: f64 = 0.44;
const FAR_JUMP_APEX_GAIN: f64 = 0.12;

/// Generate a reference jump motion.
///
/// For `FarJump` the parameter is the root displacement d0; for `HighJump`
/// the apex height gain h0. The flight-phase root follows the exact
/// ballistic arc for the requested displacement.
pub fn generate_reference(
    task: &TaskParams,
    dims: &CharacterDims,
    frame_rate_hz: f64,
    morphology_id: &str,
) -> Result<GeneratedMotion, MotionError> {
    let p = task.base_value;
    match task.task_id {
        TaskId::FarJump => {
            if !(0.1..=1.0).contains(&p) {
                return Err(MotionError::Infeasible(format!(
                    "far-jump distance {p} outside [0.1, 1.0] m"
                )));
            }
        }
        TaskId::HighJump => {
            if !(0.0..=0.5).contains(&p) {
                return Err(MotionError::Infeasible(format!(
                    "high-jump apex gain {p} outside [0.0, 0.5] m"
                )));
            }
        }
    }

    let total = task.duration_s;
    let t_crouch = 0.30 * total;
    let t_takeoff = 0.42 * total;

    // Flight window from ballistics.
    let apex_gain = match task.task_id {
        TaskId::FarJump => FAR_JUMP_APEX_GAIN,
        TaskId::HighJump => p,
    };
    let vz = (2.0 * GRAVITY * apex_gain).sqrt();
    let t_up = vz / GRAVITY;
    let t_down = (2.0 * (apex_gain + (Z_TAKEOFF - Z_LAND)) / GRAVITY).sqrt();
    let min_flight = 2.0 / frame_rate_hz;
    let has_flight = t_up + t_down >= min_flight && apex_gain > 1e-9;
    let t_flight = if has_flight { t_up + t_down } else { 0.0 };
    let t_land = t_takeoff + t_flight;
    if t_land > 0.75 * total {
        return Err(MotionError::Infeasible(format!(
            "duration {total} s too short for {t_flight:.3} s of flight"
        )));
    }
    let t_absorb = t_land + 0.5 * (0.95 * total - t_land);
    let t_end = total;

    // Horizontal layout: a small pre-shift before takeoff, a settle slide
    // after landing, ballistic displacement in between; end x is exactly d0.
    let (x_takeoff, x_land, x_end) = match task.task_id {
        TaskId::FarJump => (0.125 * p, 0.85 * p, p),
        TaskId::HighJump => (0.0, 0.0, 0.0),
    };
    let flight_vx = if has_flight { (x_land - x_takeoff) / t_flight } else { 0.0 };
    let t_apex = if has_flight { t_takeoff + t_up } else { t_takeoff };

    let tl = Timeline { t_crouch, t_takeoff, t_apex, t_land, t_absorb, t_end, flight_vx, has_flight };

    let curves = build_root_curves(&tl, x_takeoff, x_land, x_end, vz, GRAVITY);

    // Sample frames off the curves + IK.
    let frame_count = (total * frame_rate_hz).round() as usize + 1;
    let joint_knots = flight_joint_knots(&tl, &curves, dims, task.task_id);
    let mut frames = Vec::with_capacity(frame_count);
    for k in 0..frame_count {
        let t = k as f64 / frame_rate_hz;
        let root = [curves.root_x.eval(t), curves.root_z.eval(t)];
        let pitch = curves.pitch.eval(t);
        let joints = joints_at(t, root, pitch, &tl, &curves, dims, &joint_knots);
        let mut f = Frame::zero(6);
        f.root_pos = root;
        f.root_pitch = pitch;
        f.joint_angles = joints;
        frames.push(f);
    }
    let motion = ReferenceMotion::from_frames(morphology_id, frame_rate_hz, frames)?;

    let markers = MotionMarkers {
        takeoff_phase: t_takeoff / total,
        apex_phase: t_apex / total,
        landing_phase: t_land / total,
        has_flight,
    };
    Ok(GeneratedMotion { motion, markers, curves })
}

fn build_root_curves(
    tl: &Timeline,
    x_takeoff: f64,
    x_land: f64,
    x_end: f64,
    vz: f64,
    g: f64,
) -> MotionCurves {
    let mut root_x = Curve::from_knots(&[
        (0.0, 0.0, 0.0),
        (tl.t_crouch, 0.0, 0.0),
        (tl.t_takeoff, x_takeoff, tl.flight_vx),
        (tl.t_land, x_land, tl.flight_vx),
        (tl.t_absorb, x_end, 0.0),
        (tl.t_end, x_end, 0.0),
    ]);
    if tl.has_flight {
        root_x.parabola = Some(Parabola {
            t0: tl.t_takeoff,
            t1: tl.t_land,
            x0: x_takeoff,
            v0: tl.flight_vx,
            acc: 0.0,
        });
    }

    let (z_peak, vz_land) = if tl.has_flight {
        (Z_TAKEOFF, -g * (tl.t_land - tl.t_apex))
    } else {
        (Z_TAKEOFF, 0.0)
    };
    let mut root_z = Curve::from_knots(&[
        (0.0, Z_STAND, 0.0),
        (tl.t_crouch, Z_CROUCH, 0.0),
        (tl.t_takeoff, z_peak, if tl.has_flight { vz } else { 0.0 }),
        (tl.t_land, if tl.has_flight { Z_LAND } else { z_peak }, vz_land),
        (tl.t_absorb, Z_ABSORB, 0.0),
        (tl.t_end, Z_STAND, 0.0),
    ]);
    if tl.has_flight {
        root_z.parabola = Some(Parabola {
            t0: tl.t_takeoff,
            t1: tl.t_land,
            x0: Z_TAKEOFF,
            v0: vz,
            acc: -g,
        });
    }

    let pitch = Curve::from_knots(&[
        (0.0, 0.0, 0.0),
        (tl.t_crouch, -0.12, 0.0),
        (tl.t_takeoff, -0.10, 0.0),
        (tl.t_land, -0.08, 0.0),
        (tl.t_absorb, -0.05, 0.0),
        (tl.t_end, 0.0, 0.0),
    ]);

    MotionCurves { root_x, root_z, pitch }
}

/// Per-leg joint angles (hip, knee, ankle) shared by both legs.
struct JointKnots {
    takeoff: [f64; 3],
    takeoff_slope: [f64; 3],
    tuck: [f64; 3],
    land: [f64; 3],
    land_slope: [f64; 3],
}

fn stance_leg(
    t: f64,
    root: [f64; 2],
    pitch: f64,
    anchor_x: f64,
    dims: &CharacterDims,
) -> [f64; 3] {
    let _ = t;
    let ankle = [anchor_x, dims.ankle_height];
    let (thigh_from_down, knee) = leg_ik(root, ankle, dims);
    let hip = thigh_from_down - pitch;
    // Flat foot: total world angle of the foot is zero.
    let ankle_joint = -(pitch + hip + knee);
    [hip, knee, ankle_joint]
}

fn flight_joint_knots(
    tl: &Timeline,
    curves: &MotionCurves,
    dims: &CharacterDims,
    task_id: TaskId,
) -> JointKnots {
    let eps = 1e-4;
    let eval = |t: f64, anchor: f64| {
        stance_leg(
            t,
            [curves.root_x.eval(t), curves.root_z.eval(t)],
            curves.pitch.eval(t),
            anchor,
            dims,
        )
    };
    let land_anchor = curves.root_x.eval(tl.t_land);
    let takeoff = eval(tl.t_takeoff, 0.0);
    let before = eval(tl.t_takeoff - eps, 0.0);
    let land = eval(tl.t_land, land_anchor);
    let after = eval(tl.t_land + eps, land_anchor);
    let mut takeoff_slope = [0.0; 3];
    let mut land_slope = [0.0; 3];
    for j in 0..3 {
        takeoff_slope[j] = (takeoff[j] - before[j]) / eps;
        land_slope[j] = (after[j] - land[j]) / eps;
    }
    let tuck = match task_id {
        TaskId::FarJump => [0.75, -1.3, 0.25],
        TaskId::HighJump => [0.9, -1.5, 0.3],
    };
    JointKnots { takeoff, takeoff_slope, tuck, land, land_slope }
}

fn joints_at(
    t: f64,
    root: [f64; 2],
    pitch: f64,
    tl: &Timeline,
    curves: &MotionCurves,
    dims: &CharacterDims,
    knots: &JointKnots,
) -> Vec<f64> {
    let leg = if !tl.has_flight || t <= tl.t_takeoff {
        stance_leg(t, root, pitch, 0.0, dims)
    } else if t >= tl.t_land {
        let anchor = curves.root_x.eval(tl.t_land);
        stance_leg(t, root, pitch, anchor, dims)
    } else {
        // Hermite through takeoff pose, tuck at apex, landing pose.
        let mut out = [0.0; 3];
        for j in 0..3 {
            let seg = if t <= tl.t_apex {
                Seg {
                    t0: tl.t_takeoff,
                    t1: tl.t_apex,
                    p0: knots.takeoff[j],
                    p1: knots.tuck[j],
                    m0: knots.takeoff_slope[j],
                    m1: 0.0,
                }
            } else {
                Seg {
                    t0: tl.t_apex,
                    t1: tl.t_land,
                    p0: knots.tuck[j],
                    p1: knots.land[j],
                    m0: 0.0,
                    m1: knots.land_slope[j],
                }
            };
            out[j] = seg.eval(t);
        }
        out
    };
    vec![leg[0], leg[1], leg[2], leg[0], leg[1], leg[2]]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gen(task: TaskParams) -> GeneratedMotion {
        generate_reference(&task, &CharacterDims::default(), 50.0, "biped6").unwrap()
    }

    #[test]
    fn far_jump_displacement_exact() {
        let g = gen(TaskParams::far_jump_default());
        let first = &g.motion.frames[0];
        let last = g.motion.frames.last().unwrap();
        assert!((last.root_pos[0] - first.root_pos[0] - 0.4).abs() < 1e-6);
    }

    #[test]
    fn flight_apex_matches_ballistics() {
        let g = gen(TaskParams::far_jump_default());
        let m = &g.motion;
        // Pick two interior flight frames; central differences of a parabola
        // are exact, so each frame predicts the same apex height.
        let rate = m.frame_rate_hz;
        let t0 = g.markers.takeoff_phase * m.duration_s();
        let t1 = g.markers.landing_phase * m.duration_s();
        let ks: Vec<usize> = (0..m.frames.len())
            .filter(|&k| {
                let t = k as f64 / rate;
                t > t0 + 2.0 / rate && t < t1 - 2.0 / rate
            })
            .collect();
        assert!(ks.len() >= 2, "flight window too short");
        let apex_pred: Vec<f64> = ks
            .iter()
            .map(|&k| {
                let f = &m.frames[k];
                f.root_pos[1] + f.root_vel[1] * f.root_vel[1] / (2.0 * GRAVITY)
            })
            .collect();
        for w in apex_pred.windows(2) {
            assert!((w[0] - w[1]).abs() < 1e-9, "apex predictions disagree: {w:?}");
        }
        // And the prediction matches the constructed arc.
        let expect = Z_TAKEOFF + FAR_JUMP_APEX_GAIN;
        assert!((apex_pred[0] - expect).abs() < 1e-9);
    }

    #[test]
    fn sample_matches_curve_at_node() {
        // phi = 0.5 lands exactly on a stored frame (even frame count step),
        // which itself was sampled from the continuous curves.
        let g = gen(TaskParams::far_jump_default());
        let m = &g.motion;
        let f = m.sample_at_phase(0.5).unwrap();
        let t = 0.5 * m.duration_s();
        assert!((f.root_pos[1] - g.curves.root_z.eval(t)).abs() < 1e-12);
        assert!((f.root_pos[0] - g.curves.root_x.eval(t)).abs() < 1e-12);
    }

    #[test]
    fn high_jump_zero_gain_degenerates() {
        let mut task = TaskParams::high_jump_default();
        task.base_value = 0.0;
        let g = gen(task);
        assert!(!g.markers.has_flight);
        for f in &g.motion.frames {
            assert!(f.root_pos[0].abs() < 1e-12);
        }
        // Root dips and recovers: a crouch-stand cycle.
        let min_z = g.motion.frames.iter().map(|f| f.root_pos[1]).fold(f64::INFINITY, f64::min);
        assert!(min_z < Z_CROUCH + 0.01);
    }

    #[test]
    fn infeasible_duration_rejected() {
        let mut task = TaskParams::high_jump_default();
        task.base_value = 0.5;
        task.duration_s = 0.8;
        let err = generate_reference(&task, &CharacterDims::default(), 50.0, "biped6");
        assert!(matches!(err, Err(MotionError::Infeasible(_))));
    }

    #[test]
    fn stance_feet_on_ground() {
        // During the initial stance, the IK pins the ankle at ankle_height:
        // reconstruct the ankle position from joint angles and check.
        let g = gen(TaskParams::far_jump_default());
        let dims = CharacterDims::default();
        let m = &g.motion;
        for (k, f) in m.frames.iter().enumerate() {
            let t = k as f64 / m.frame_rate_hz;
            if t > g.markers.takeoff_phase * m.duration_s() - 0.05 {
                break;
            }
            let thigh_dir = f.root_pitch + f.joint_angles[0];
            let shank_dir = thigh_dir + f.joint_angles[1];
            let knee = [
                f.root_pos[0] + dims.thigh_len * thigh_dir.sin(),
                f.root_pos[1] - dims.thigh_len * thigh_dir.cos(),
            ];
            let ankle = [
                knee[0] + dims.shank_len * shank_dir.sin(),
                knee[1] - dims.shank_len * shank_dir.cos(),
            ];
            assert!((ankle[1] - dims.ankle_height).abs() < 2e-3, "frame {k}: ankle z {}", ankle[1]);
            assert!(ankle[0].abs() < 2e-3, "frame {k}: ankle x {}", ankle[0]);
            // Flat foot in stance.
            let foot_dir = shank_dir + f.joint_angles[2];
            assert!(foot_dir.abs() < 1e-9);
        }
    }

    #[test]
    fn joint_limits_sane() {
        for task in [TaskParams::far_jump_default(), TaskParams::high_jump_default()] {
            let g = gen(task);
            for f in &g.motion.frames {
                for &a in &f.joint_angles {
                    assert!(a.abs() < 2.4, "joint angle {a} out of expected envelope");
                }
            }
        }
    }
}
