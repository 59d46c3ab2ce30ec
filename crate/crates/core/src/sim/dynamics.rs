//! Planar articulated dynamics in generalized coordinates.
//!
//! Generalized coordinates are `q = [root_x, root_z, root_pitch, joints...]`.
//! The mass matrix is assembled from per-link CoM Jacobians, bias forces by
//! recursive propagation of the velocity-product accelerations (gravity
//! folded in), ground contact by a spring-damper penalty with a Coulomb
//! clamp on the tangential force. Everything is f64 and allocation-light so
//! trajectories are bitwise deterministic.

use super::{EffectiveModel, Morphology};

#[inline]
fn perp(v: [f64; 2]) -> [f64; 2] {
    [-v[1], v[0]]
}

#[inline]
fn rot(a: f64, v: [f64; 2]) -> [f64; 2] {
    let (s, c) = a.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

/// World-frame kinematics of one link.
#[derive(Debug, Clone, Copy, Default)]
pub struct LinkKin {
    /// Joint-frame origin of the link.
    pub origin: [f64; 2],
    pub angle: f64,
    pub com: [f64; 2],
    /// Velocity of the link origin.
    pub v_origin: [f64; 2],
    pub omega: f64,
    pub v_com: [f64; 2],
}

/// Full forward-kinematics result: all link frames plus foot contact points.
#[derive(Debug, Clone, Default)]
pub struct FkResult {
    pub links: Vec<LinkKin>,
    pub foot_points: Vec<[f64; 2]>,
    pub foot_vels: Vec<[f64; 2]>,
}

impl FkResult {
    /// Mean distance between this pose's link origins and another's.
    pub fn mean_body_distance(&self, other: &FkResult) -> f64 {
        let n = self.links.len() as f64;
        self.links
            .iter()
            .zip(other.links.iter())
            .map(|(a, b)| {
                let dx = a.origin[0] - b.origin[0];
                let dz = a.origin[1] - b.origin[1];
                (dx * dx + dz * dz).sqrt()
            })
            .sum::<f64>()
            / n
    }
}

/// Positions and velocities of every link frame, CoM and foot point.
pub fn forward_kinematics(m: &Morphology, q: &[f64], qd: &[f64]) -> FkResult {
    forward_kinematics_model(m, None, q, qd)
}

/// Same, but with randomized CoM offsets when an effective model is given.
pub fn forward_kinematics_model(
    m: &Morphology,
    model: Option<&EffectiveModel>,
    q: &[f64],
    qd: &[f64],
) -> FkResult {
    let nl = m.links.len();
    let mut links = vec![LinkKin::default(); nl];
    links[0].origin = [q[0], q[1]];
    links[0].angle = q[2];
    links[0].v_origin = [qd[0], qd[1]];
    links[0].omega = qd[2];
    for i in 1..nl {
        let p = m.links[i].parent.expect("non-base link has a parent");
        let joint = i - 1;
        let parent = links[p];
        let r = rot(parent.angle, m.links[i].joint_offset);
        let origin = [parent.origin[0] + r[0], parent.origin[1] + r[1]];
        let rel = [origin[0] - parent.origin[0], origin[1] - parent.origin[1]];
        let pr = perp(rel);
        links[i].origin = origin;
        links[i].angle = parent.angle + q[3 + joint];
        links[i].v_origin = [
            parent.v_origin[0] + parent.omega * pr[0],
            parent.v_origin[1] + parent.omega * pr[1],
        ];
        links[i].omega = parent.omega + qd[3 + joint];
    }
    for i in 0..nl {
        let com_off = model.map(|mm| mm.links[i].com_offset).unwrap_or(m.links[i].com_offset);
        let rc = rot(links[i].angle, com_off);
        links[i].com = [links[i].origin[0] + rc[0], links[i].origin[1] + rc[1]];
        let pr = perp(rc);
        links[i].v_com = [
            links[i].v_origin[0] + links[i].omega * pr[0],
            links[i].v_origin[1] + links[i].omega * pr[1],
        ];
    }
    let mut foot_points = Vec::with_capacity(m.foot_points.len());
    let mut foot_vels = Vec::with_capacity(m.foot_points.len());
    for fp in &m.foot_points {
        let l = &links[fp.link];
        let r = rot(l.angle, fp.offset);
        foot_points.push([l.origin[0] + r[0], l.origin[1] + r[1]]);
        let pr = perp(r);
        foot_vels.push([l.v_origin[0] + l.omega * pr[0], l.v_origin[1] + l.omega * pr[1]]);
    }
    FkResult { links, foot_points, foot_vels }
}

/// Jacobian (2 x n) of a point rigidly attached to `link`, written into `jx`
/// and `jz` rows.
fn point_jacobian(
    m: &Morphology,
    fk: &FkResult,
    link: usize,
    point: [f64; 2],
    jx: &mut [f64],
    jz: &mut [f64],
) {
    jx.fill(0.0);
    jz.fill(0.0);
    jx[0] = 1.0;
    jz[1] = 1.0;
    let r = [point[0] - fk.links[0].origin[0], point[1] - fk.links[0].origin[1]];
    let pr = perp(r);
    jx[2] = pr[0];
    jz[2] = pr[1];
    for &joint in &m.chain_joints[link] {
        let jo = fk.links[joint + 1].origin;
        let r = [point[0] - jo[0], point[1] - jo[1]];
        let pr = perp(r);
        jx[3 + joint] = pr[0];
        jz[3 + joint] = pr[1];
    }
}

/// Workspace reused across substeps to avoid per-step allocation.
pub struct DynWorkspace {
    n: usize,
    pub mass: Vec<f64>,
    pub rhs: Vec<f64>,
    pub qdd: Vec<f64>,
    jx: Vec<f64>,
    jz: Vec<f64>,
    chol: Vec<f64>,
}

impl DynWorkspace {
    pub fn new(n: usize) -> Self {
        DynWorkspace {
            n,
            mass: vec![0.0; n * n],
            rhs: vec![0.0; n],
            qdd: vec![0.0; n],
            jx: vec![0.0; n],
            jz: vec![0.0; n],
            chol: vec![0.0; n * n],
        }
    }
}

/// Assemble the joint-space mass matrix from CoM Jacobians:
/// `M = sum_i m_i J_ci^T J_ci + I_i jw_i jw_i^T`.
pub fn mass_matrix(m: &Morphology, model: &EffectiveModel, fk: &FkResult, ws: &mut DynWorkspace) {
    let n = ws.n;
    ws.mass.fill(0.0);
    for (i, link) in fk.links.iter().enumerate() {
        let mass = model.links[i].mass;
        let inertia = model.links[i].inertia;
        point_jacobian(m, fk, i, link.com, &mut ws.jx, &mut ws.jz);
        // Angular rows: 1 for pitch and every chain joint.
        for a in 0..n {
            let jxa = ws.jx[a];
            let jza = ws.jz[a];
            let jwa = angular_entry(m, i, a);
            if jxa == 0.0 && jza == 0.0 && jwa == 0.0 {
                continue;
            }
            for b in a..n {
                let v = mass * (jxa * ws.jx[b] + jza * ws.jz[b])
                    + inertia * jwa * angular_entry(m, i, b);
                ws.mass[a * n + b] += v;
            }
        }
    }
    // Mirror the upper triangle.
    for a in 0..n {
        for b in 0..a {
            ws.mass[a * n + b] = ws.mass[b * n + a];
        }
    }
}

#[inline]
fn angular_entry(m: &Morphology, link: usize, dof: usize) -> f64 {
    if dof == 2 {
        1.0
    } else if dof >= 3 && m.chain_mask[link][dof - 3] {
        1.0
    } else {
        0.0
    }
}

/// Bias forces: velocity-product accelerations propagated down the tree plus
/// gravity, projected through the CoM Jacobians. Computed with qdd = 0, so
/// planar angular acceleration vanishes and only centripetal terms remain.
pub fn bias_forces(
    m: &Morphology,
    model: &EffectiveModel,
    fk: &FkResult,
    gravity: f64,
    ws: &mut DynWorkspace,
    out: &mut [f64],
) {
    out.fill(0.0);
    let nl = m.links.len();
    // Velocity-product acceleration of each link origin.
    let mut a_origin = vec![[0.0_f64; 2]; nl];
    for i in 1..nl {
        let p = m.links[i].parent.unwrap();
        let r = [
            fk.links[i].origin[0] - fk.links[p].origin[0],
            fk.links[i].origin[1] - fk.links[p].origin[1],
        ];
        let w2 = fk.links[p].omega * fk.links[p].omega;
        a_origin[i] = [a_origin[p][0] - w2 * r[0], a_origin[p][1] - w2 * r[1]];
    }
    let g_vec = [0.0, -gravity];
    for i in 0..nl {
        let rc = [fk.links[i].com[0] - fk.links[i].origin[0], fk.links[i].com[1] - fk.links[i].origin[1]];
        let w2 = fk.links[i].omega * fk.links[i].omega;
        let a_com = [a_origin[i][0] - w2 * rc[0], a_origin[i][1] - w2 * rc[1]];
        let fx = model.links[i].mass * (a_com[0] - g_vec[0]);
        let fz = model.links[i].mass * (a_com[1] - g_vec[1]);
        point_jacobian(m, fk, i, fk.links[i].com, &mut ws.jx, &mut ws.jz);
        for a in 0..ws.n {
            out[a] += ws.jx[a] * fx + ws.jz[a] * fz;
        }
    }
}

/// One penalty contact evaluation.
#[derive(Debug, Clone, Copy, Default)]
pub struct ContactForce {
    pub active: bool,
    pub normal: f64,
    pub tangent: f64,
}

/// Spring-damper ground contact with a Coulomb friction clamp. Never pulls:
/// the normal force is clamped at zero, and there is no adhesion above z = 0.
///
/// Velocity-dependent force magnitudes are clamped so their impulse over one
/// substep cannot exceed the local momentum; explicit damping would
/// otherwise go unstable at high damping-to-mass ratios.
#[allow(clippy::too_many_arguments)]
pub fn accumulate_contacts(
    m: &Morphology,
    model: &super::EffectiveModel,
    fk: &FkResult,
    kn: f64,
    kd: f64,
    kt: f64,
    friction: f64,
    restitution: f64,
    dt: f64,
    ws: &mut DynWorkspace,
    q_ext: &mut [f64],
    forces: &mut [ContactForce],
) {
    for (idx, fp) in m.foot_points.iter().enumerate() {
        let p = fk.foot_points[idx];
        let v = fk.foot_vels[idx];
        forces[idx] = ContactForce::default();
        if p[1] >= 0.0 {
            continue;
        }
        let points_on_link = m.foot_points.iter().filter(|o| o.link == fp.link).count();
        let m_eff = model.links[fp.link].mass / points_on_link as f64;
        let impulse_cap = m_eff / dt;
        let damp = (kd * (1.0 - restitution) * (-v[1])).clamp(-impulse_cap * v[1].abs(), impulse_cap * v[1].abs());
        let f_normal = (kn * (-p[1]) + damp).max(0.0);
        let limit = friction * f_normal;
        let f_tangent = (-kt * v[0])
            .clamp(-impulse_cap * v[0].abs(), impulse_cap * v[0].abs())
            .clamp(-limit, limit);
        forces[idx] = ContactForce { active: true, normal: f_normal, tangent: f_tangent };
        point_jacobian(m, fk, fp.link, p, &mut ws.jx, &mut ws.jz);
        for a in 0..ws.n {
            q_ext[a] += ws.jx[a] * f_tangent + ws.jz[a] * f_normal;
        }
    }
}

/// Solve `M x = rhs` in place via Cholesky; `locked_base` zeroes the floating
/// dofs (used for pinned-base morphologies such as test pendulums).
pub fn solve_spd(ws: &mut DynWorkspace, locked_base: bool) -> bool {
    let n = ws.n;
    ws.chol.copy_from_slice(&ws.mass);
    if locked_base {
        for d in 0..3 {
            for k in 0..n {
                ws.chol[d * n + k] = 0.0;
                ws.chol[k * n + d] = 0.0;
            }
            ws.chol[d * n + d] = 1.0;
            ws.rhs[d] = 0.0;
        }
    }
    // Cholesky factorization.
    for i in 0..n {
        for j in 0..=i {
            let mut sum = ws.chol[i * n + j];
            for k in 0..j {
                sum -= ws.chol[i * n + k] * ws.chol[j * n + k];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return false;
                }
                ws.chol[i * n + j] = sum.sqrt();
            } else {
                ws.chol[i * n + j] = sum / ws.chol[j * n + j];
            }
        }
    }
    // Forward/back substitution.
    for i in 0..n {
        let mut sum = ws.rhs[i];
        for k in 0..i {
            sum -= ws.chol[i * n + k] * ws.qdd[k];
        }
        ws.qdd[i] = sum / ws.chol[i * n + i];
    }
    for i in (0..n).rev() {
        let mut sum = ws.qdd[i];
        for k in i + 1..n {
            sum -= ws.chol[k * n + i] * ws.qdd[k];
        }
        ws.qdd[i] = sum / ws.chol[i * n + i];
    }
    true
}
