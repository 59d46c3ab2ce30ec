//! Deterministic planar articulated rigid-body simulation.
//!
//! A [`SimWorld`] owns one character instance: nominal morphology, the
//! randomized effective model, the generalized state and a command-delay
//! queue. Instances are independent, so rollout workers can each own one and
//! run in parallel with no shared mutable state.

pub mod dynamics;
pub mod random;

pub use dynamics::{forward_kinematics, ContactForce, FkResult};
pub use random::{sample_randomization, RandomizationConfig, RandomizationDraw};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::motion::Frame;
use dynamics::DynWorkspace;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("simulation diverged at substep {substep}: non-finite state")]
    Diverged { substep: usize },
    #[error("mass matrix not positive definite at substep {substep}")]
    Singular { substep: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("morphology invalid: {0}")]
    BadMorphology(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub name: String,
    /// None for the floating base.
    pub parent: Option<usize>,
    /// Joint position in the parent frame (zero for the base).
    pub joint_offset: [f64; 2],
    pub mass: f64,
    /// Rotational inertia about the CoM.
    pub inertia: f64,
    /// CoM position in the link frame.
    pub com_offset: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub name: String,
    /// (lower, upper) angle limits in radians.
    pub limits: (f64, f64),
    pub torque_limit: f64,
    pub velocity_limit: f64,
    pub kp: f64,
    pub kd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FootPoint {
    pub link: usize,
    pub offset: [f64; 2],
}

/// Kinematic tree rooted at a floating planar base. Link `i >= 1` is driven
/// by joint `i - 1`; parents precede children.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Morphology {
    pub id: String,
    pub links: Vec<Link>,
    pub joints: Vec<Joint>,
    pub foot_points: Vec<FootPoint>,
    /// Pins the floating base (test fixtures like pendulums).
    #[serde(default)]
    pub base_fixed: bool,
    /// Joints on the chain from base to each link; derived, not serialized.
    #[serde(skip)]
    pub chain_joints: Vec<Vec<usize>>,
    #[serde(skip)]
    pub chain_mask: Vec<Vec<bool>>,
}

impl Morphology {
    pub fn prepare(mut self) -> Result<Self, SimError> {
        if self.links.is_empty() {
            return Err(SimError::BadMorphology("no links".into()));
        }
        if self.joints.len() + 1 != self.links.len() {
            return Err(SimError::BadMorphology(format!(
                "{} joints for {} links; expected links - 1",
                self.joints.len(),
                self.links.len()
            )));
        }
        if self.links[0].parent.is_some() {
            return Err(SimError::BadMorphology("link 0 must be the base".into()));
        }
        for (i, l) in self.links.iter().enumerate() {
            if l.mass <= 0.0 || l.inertia <= 0.0 {
                return Err(SimError::BadMorphology(format!("link {i} has nonpositive mass/inertia")));
            }
            if i > 0 {
                match l.parent {
                    Some(p) if p < i => {}
                    _ => return Err(SimError::BadMorphology(format!("link {i} parent invalid"))),
                }
            }
        }
        for j in &self.joints {
            if !j.limits.0.is_finite() || !j.limits.1.is_finite() || j.limits.0 >= j.limits.1 {
                return Err(SimError::BadMorphology(format!("joint {} limits invalid", j.name)));
            }
        }
        let nl = self.links.len();
        self.chain_joints = vec![Vec::new(); nl];
        self.chain_mask = vec![vec![false; self.joints.len()]; nl];
        for i in 1..nl {
            let p = self.links[i].parent.unwrap();
            let mut chain = self.chain_joints[p].clone();
            chain.push(i - 1);
            for &j in &chain {
                self.chain_mask[i][j] = true;
            }
            self.chain_joints[i] = chain;
        }
        Ok(self)
    }

    pub fn dof(&self) -> usize {
        3 + self.joints.len()
    }

    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.links.iter().map(|l| l.mass).sum()
    }

    /// The default character: 1 m tall, 7 links, 6 actuated joints
    /// (hip/knee/ankle per leg), feet with heel and toe contact points.
    pub fn default_biped() -> Morphology {
        let leg = |side: &str, parent_of_thigh: usize| -> (Vec<Link>, Vec<Joint>) {
            let links = vec![
                Link {
                    name: format!("thigh_{side}"),
                    parent: Some(parent_of_thigh),
                    joint_offset: [0.0, 0.0],
                    mass: 2.2,
                    inertia: 0.012,
                    com_offset: [0.0, -0.125],
                },
                Link {
                    name: format!("shank_{side}"),
                    parent: None, // patched below
                    joint_offset: [0.0, -0.25],
                    mass: 1.4,
                    inertia: 0.008,
                    com_offset: [0.0, -0.125],
                },
                Link {
                    name: format!("foot_{side}"),
                    parent: None, // patched below
                    joint_offset: [0.0, -0.25],
                    mass: 0.4,
                    inertia: 0.001,
                    com_offset: [0.025, -0.025],
                },
            ];
            let joints = vec![
                Joint {
                    name: format!("hip_{side}"),
                    limits: (-1.8, 1.8),
                    torque_limit: 90.0,
                    velocity_limit: 20.0,
                    kp: 110.0,
                    kd: 6.0,
                },
                Joint {
                    name: format!("knee_{side}"),
                    limits: (-2.4, 0.05),
                    torque_limit: 90.0,
                    velocity_limit: 20.0,
                    kp: 110.0,
                    kd: 6.0,
                },
                Joint {
                    name: format!("ankle_{side}"),
                    limits: (-1.0, 1.0),
                    torque_limit: 45.0,
                    velocity_limit: 20.0,
                    kp: 50.0,
                    kd: 0.5,
                },
            ];
            (links, joints)
        };

        let mut links = vec![Link {
            name: "torso".into(),
            parent: None,
            joint_offset: [0.0, 0.0],
            mass: 8.0,
            inertia: 0.14,
            com_offset: [0.0, 0.22],
        }];
        let mut joints = Vec::new();
        for side in ["l", "r"] {
            let (mut ls, mut js) = leg(side, 0);
            let base = links.len();
            ls[1].parent = Some(base);
            ls[2].parent = Some(base + 1);
            links.append(&mut ls);
            joints.append(&mut js);
        }
        let foot_points = vec![
            FootPoint { link: 3, offset: [-0.05, -0.05] },
            FootPoint { link: 3, offset: [0.10, -0.05] },
            FootPoint { link: 6, offset: [-0.05, -0.05] },
            FootPoint { link: 6, offset: [0.10, -0.05] },
        ];
        Morphology {
            id: "biped6".into(),
            links,
            joints,
            foot_points,
            base_fixed: false,
            chain_joints: Vec::new(),
            chain_mask: Vec::new(),
        }
        .prepare()
        .expect("default biped is valid")
    }
}

pub fn load_morphology(path: &std::path::Path) -> Result<Morphology, SimError> {
    let text = std::fs::read_to_string(path)?;
    let m: Morphology = serde_json::from_str(&text)?;
    m.prepare()
}

pub fn save_morphology(m: &Morphology, path: &std::path::Path) -> Result<(), SimError> {
    std::fs::write(path, serde_json::to_string_pretty(m)?)?;
    Ok(())
}

/// Generalized state of the character.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    /// [root_x, root_z, root_pitch, joint angles...].
    pub q: Vec<f64>,
    pub qd: Vec<f64>,
    pub sim_time: f64,
    pub contact_flags: Vec<bool>,
}

impl SimState {
    pub fn zero(dof: usize, foot_points: usize) -> Self {
        SimState { q: vec![0.0; dof], qd: vec![0.0; dof], sim_time: 0.0, contact_flags: vec![false; foot_points] }
    }

    pub fn joint_angles(&self) -> &[f64] {
        &self.q[3..]
    }

    pub fn joint_vels(&self) -> &[f64] {
        &self.qd[3..]
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.qd.iter()).all(|v| v.is_finite())
    }
}

/// PD controller targets, one per actuated joint.
#[derive(Debug, Clone, PartialEq)]
pub struct PDCommand {
    pub targets: Vec<f64>,
}

impl PDCommand {
    pub fn hold(angles: &[f64]) -> Self {
        PDCommand { targets: angles.to_vec() }
    }
}

/// Per-link parameters after randomization.
#[derive(Debug, Clone)]
pub struct LinkParams {
    pub mass: f64,
    pub inertia: f64,
    pub com_offset: [f64; 2],
}

/// The randomized model actually simulated.
#[derive(Debug, Clone)]
pub struct EffectiveModel {
    pub links: Vec<LinkParams>,
    pub kp_scale: f64,
    pub kd_scale: f64,
    pub motor_scale: f64,
    pub friction: f64,
    pub restitution: f64,
    pub control_delay_ticks: usize,
}

impl EffectiveModel {
    pub fn nominal(m: &Morphology, default_friction: f64) -> Self {
        EffectiveModel {
            links: m
                .links
                .iter()
                .map(|l| LinkParams { mass: l.mass, inertia: l.inertia, com_offset: l.com_offset })
                .collect(),
            kp_scale: 1.0,
            kd_scale: 1.0,
            motor_scale: 1.0,
            friction: default_friction,
            restitution: 0.0,
            control_delay_ticks: 0,
        }
    }

    pub fn from_draw(m: &Morphology, draw: &RandomizationDraw) -> Self {
        let mut links: Vec<LinkParams> = m
            .links
            .iter()
            .map(|l| LinkParams {
                mass: l.mass * draw.link_mass_scale,
                inertia: l.inertia * draw.link_mass_scale,
                com_offset: l.com_offset,
            })
            .collect();
        links[0].mass += draw.trunk_mass_delta;
        links[0].com_offset[0] += draw.base_com_offset[0];
        links[0].com_offset[1] += draw.base_com_offset[1];
        EffectiveModel {
            links,
            kp_scale: draw.kp_scale,
            kd_scale: draw.kd_scale,
            motor_scale: draw.motor_strength_scale,
            friction: draw.friction,
            restitution: draw.restitution,
            control_delay_ticks: draw.control_delay_ticks,
        }
    }
}

/// Physics and termination configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub physics_hz: f64,
    pub control_hz: f64,
    pub gravity: f64,
    /// Contact normal stiffness (N/m) and damping (N s/m).
    pub contact_kn: f64,
    pub contact_kd: f64,
    /// Tangential viscous stiffness before the Coulomb clamp.
    pub contact_kt: f64,
    pub default_friction: f64,
    /// Termination thresholds.
    pub fell_root_z: f64,
    pub fell_pitch: f64,
    pub tracking_fail_strict_m: f64,
    pub tracking_fail_relaxed_m: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            physics_hz: 500.0,
            control_hz: 50.0,
            gravity: 9.81,
            contact_kn: 3.0e4,
            contact_kd: 300.0,
            contact_kt: 300.0,
            default_friction: 0.8,
            fell_root_z: 0.35,
            fell_pitch: 1.0,
            tracking_fail_strict_m: 0.5,
            tracking_fail_relaxed_m: 0.77,
        }
    }
}

impl SimConfig {
    pub fn substeps(&self) -> usize {
        (self.physics_hz / self.control_hz).round() as usize
    }

    pub fn control_dt(&self) -> f64 {
        1.0 / self.control_hz
    }
}

/// Episode status from the termination check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Alive,
    Fell,
    TrackingFailure,
    Complete,
}

impl Termination {
    pub fn is_failure(self) -> bool {
        matches!(self, Termination::Fell | Termination::TrackingFailure)
    }

    pub fn is_done(self) -> bool {
        self != Termination::Alive
    }
}

/// Last-step diagnostics exposed for rewards, metrics and tests.
#[derive(Debug, Clone, Default)]
pub struct StepDiagnostics {
    pub applied_torques: Vec<f64>,
    pub contact_forces: Vec<ContactForce>,
}

/// One simulated character.
pub struct SimWorld {
    pub morphology: Morphology,
    pub config: SimConfig,
    pub model: EffectiveModel,
    pub state: SimState,
    pub diag: StepDiagnostics,
    ws: DynWorkspace,
    q_ext: Vec<f64>,
}

impl SimWorld {
    pub fn new(morphology: Morphology, config: SimConfig) -> Self {
        let dof = morphology.dof();
        let nfp = morphology.foot_points.len();
        let model = EffectiveModel::nominal(&morphology, config.default_friction);
        SimWorld {
            state: SimState::zero(dof, nfp),
            diag: StepDiagnostics {
                applied_torques: vec![0.0; morphology.joint_count()],
                contact_forces: vec![ContactForce::default(); nfp],
            },
            ws: DynWorkspace::new(dof),
            q_ext: vec![0.0; dof],
            morphology,
            config,
            model,
        }
    }

    pub fn fk(&self) -> FkResult {
        dynamics::forward_kinematics_model(&self.morphology, Some(&self.model), &self.state.q, &self.state.qd)
    }

    /// FK of an arbitrary reference frame on the nominal model.
    pub fn fk_of_frame(&self, frame: &Frame) -> FkResult {
        let mut q = vec![0.0; self.morphology.dof()];
        let mut qd = vec![0.0; self.morphology.dof()];
        q[0] = frame.root_pos[0];
        q[1] = frame.root_pos[1];
        q[2] = frame.root_pitch;
        q[3..].copy_from_slice(&frame.joint_angles);
        qd[0] = frame.root_vel[0];
        qd[1] = frame.root_vel[1];
        qd[2] = frame.root_pitch_rate;
        qd[3..].copy_from_slice(&frame.joint_vels);
        dynamics::forward_kinematics(&self.morphology, &q, &qd)
    }

    /// Advance one control period: `substeps` semi-implicit Euler steps under
    /// a fixed PD command. Deterministic given (state, command, model).
    pub fn step(&mut self, command: &PDCommand) -> Result<(), SimError> {
        let nj = self.morphology.joint_count();
        if command.targets.len() != nj {
            return Err(SimError::DimensionMismatch { expected: nj, got: command.targets.len() });
        }
        let substeps = self.config.substeps();
        let dt = 1.0 / self.config.physics_hz;
        for sub in 0..substeps {
            self.substep(command, dt, sub)?;
        }
        // Contact flags for observers reflect the post-step state.
        let fk = self.fk();
        for (i, p) in fk.foot_points.iter().enumerate() {
            self.state.contact_flags[i] = p[1] < 1e-4;
        }
        Ok(())
    }

    fn substep(&mut self, command: &PDCommand, dt: f64, sub: usize) -> Result<(), SimError> {
        let m = &self.morphology;
        let fk = dynamics::forward_kinematics_model(m, Some(&self.model), &self.state.q, &self.state.qd);

        self.q_ext.fill(0.0);
        // PD torques, clipped to per-joint limits after the strength scale.
        for j in 0..m.joint_count() {
            let joint = &m.joints[j];
            let target = command.targets[j].clamp(joint.limits.0, joint.limits.1);
            let theta = self.state.q[3 + j];
            let theta_d = self.state.qd[3 + j];
            let pd = joint.kp * self.model.kp_scale * (target - theta)
                - joint.kd * self.model.kd_scale * theta_d;
            let tau = (self.model.motor_scale * pd).clamp(-joint.torque_limit, joint.torque_limit);
            self.diag.applied_torques[j] = tau;
            self.q_ext[3 + j] += tau;
        }

        dynamics::accumulate_contacts(
            m,
            &self.model,
            &fk,
            self.config.contact_kn,
            self.config.contact_kd,
            self.config.contact_kt,
            self.model.friction,
            self.model.restitution,
            dt,
            &mut self.ws,
            &mut self.q_ext,
            &mut self.diag.contact_forces,
        );

        dynamics::mass_matrix(m, &self.model, &fk, &mut self.ws);
        let mut bias = vec![0.0; m.dof()];
        dynamics::bias_forces(m, &self.model, &fk, self.config.gravity, &mut self.ws, &mut bias);
        for a in 0..m.dof() {
            self.ws.rhs[a] = self.q_ext[a] - bias[a];
        }
        if !dynamics::solve_spd(&mut self.ws, m.base_fixed) {
            return Err(SimError::Singular { substep: sub });
        }

        for a in 0..m.dof() {
            self.state.qd[a] += dt * self.ws.qdd[a];
        }
        if m.base_fixed {
            for a in 0..3 {
                self.state.qd[a] = 0.0;
            }
        }
        for a in 0..m.dof() {
            self.state.q[a] += dt * self.state.qd[a];
        }
        self.state.sim_time += dt;
        let runaway = self.state.qd.iter().any(|v| v.abs() > 1e7);
        if !self.state.is_finite() || runaway {
            return Err(SimError::Diverged { substep: sub });
        }
        Ok(())
    }

    /// Set the generalized state from a frame without touching the model or
    /// projecting out of the ground (kinematic replay).
    pub fn set_state_from_frame(&mut self, frame: &Frame) {
        let dof = self.morphology.dof();
        self.state.q = vec![0.0; dof];
        self.state.qd = vec![0.0; dof];
        self.state.q[0] = frame.root_pos[0];
        self.state.q[1] = frame.root_pos[1];
        self.state.q[2] = frame.root_pitch;
        self.state.q[3..].copy_from_slice(&frame.joint_angles);
        self.state.qd[0] = frame.root_vel[0];
        self.state.qd[1] = frame.root_vel[1];
        self.state.qd[2] = frame.root_pitch_rate;
        self.state.qd[3..].copy_from_slice(&frame.joint_vels);
    }

    /// Reset from a reference frame under a randomization draw. Frames that
    /// start inside the ground are projected up to the contact surface;
    /// returns the applied lift so callers can log it.
    pub fn reset_from_frame(&mut self, frame: &Frame, draw: &RandomizationDraw) -> f64 {
        self.model = EffectiveModel::from_draw(&self.morphology, draw);
        let dof = self.morphology.dof();
        self.state.q = vec![0.0; dof];
        self.state.qd = vec![0.0; dof];
        self.state.q[0] = frame.root_pos[0];
        self.state.q[1] = frame.root_pos[1];
        self.state.q[2] = frame.root_pitch;
        self.state.q[3..].copy_from_slice(&frame.joint_angles);
        self.state.qd[0] = frame.root_vel[0];
        self.state.qd[1] = frame.root_vel[1];
        self.state.qd[2] = frame.root_pitch_rate;
        self.state.qd[3..].copy_from_slice(&frame.joint_vels);
        self.state.sim_time = 0.0;

        let fk = self.fk();
        let min_z = fk.foot_points.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
        let lift = if min_z < -1e-9 { -min_z } else { 0.0 };
        self.state.q[1] += lift;
        let fk = self.fk();
        for (i, p) in fk.foot_points.iter().enumerate() {
            self.state.contact_flags[i] = p[1] < 1e-4;
        }
        lift
    }

    /// Termination logic. `ref_frame` is the current-phase tracking guide;
    /// `at_keyframe` gates the relaxed-mode tracking check.
    pub fn check_termination(
        &self,
        ref_frame: &Frame,
        relaxed: bool,
        at_keyframe: bool,
        motion_complete: bool,
    ) -> Termination {
        if motion_complete {
            return Termination::Complete;
        }
        if self.state.q[1] < self.config.fell_root_z
            || crate::motion::wrap_angle(self.state.q[2]).abs() > self.config.fell_pitch
        {
            return Termination::Fell;
        }
        let err = self.fk().mean_body_distance(&self.fk_of_frame(ref_frame));
        if relaxed {
            if at_keyframe && err > self.config.tracking_fail_relaxed_m {
                return Termination::TrackingFailure;
            }
        } else if err > self.config.tracking_fail_strict_m {
            return Termination::TrackingFailure;
        }
        Termination::Alive
    }
}
