//! Keyframe selection and parametric motion editing.
//!
//! Editing only ever transforms global root poses at selected keyframes;
//! local joint trajectories are shared bitwise with the base motion. The
//! rule-based dense variant linearly ramps a global offset across in-between
//! frames and exists as the classical editing baseline.

use serde::{Deserialize, Serialize};

use super::generate::MotionMarkers;
use super::{EditSpec, KeyframePlan, MotionError, ReferenceMotion};
use crate::tasks::{TaskId, TaskParams};

/// Global root pose of one edited keyframe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EditedKeyframe {
    pub phase: f64,
    /// (x, z, pitch) after the edit.
    pub root: [f64; 3],
    /// (x, z, pitch) offset relative to the base keyframe.
    pub offset: [f64; 3],
}

/// Which reference data the trainer tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetMode {
    /// Edited keyframes only; in-between frames are the policy's job.
    KeyframeEdit,
    /// Dense rule-edited motions (linear offset ramp) at every frame.
    RuleEditDense,
    /// The unedited base motion; the task variable stays at its base value.
    Original,
}

/// Default number of non-semantic keyframes.
pub const DEFAULT_UNIFORM_KEYFRAMES: usize = 5;

/// Default reward multiplier for semantic keyframes.
pub const SEMANTIC_REWARD_SCALE: f64 = 2.0;

/// Build the keyframe plan: semantic keyframes from the task markers plus
/// `n_uniform` uniformly spaced ones, merged and deduplicated (semantic
/// labels win). Keyframes are snapped to the frame grid — a keyframe is one
/// of the motion's frames. Uniform keyframes falling strictly inside the
/// flight window are skipped; mid-air keyframes carry no trackable global
/// target.
pub fn select_keyframes(
    motion: &ReferenceMotion,
    markers: &MotionMarkers,
    task_id: TaskId,
    n_uniform: usize,
) -> KeyframePlan {
    select_keyframes_scaled(motion, markers, task_id, n_uniform, SEMANTIC_REWARD_SCALE)
}

/// As [`select_keyframes`], with an explicit semantic reward multiplier.
pub fn select_keyframes_scaled(
    motion: &ReferenceMotion,
    markers: &MotionMarkers,
    task_id: TaskId,
    n_uniform: usize,
    semantic_scale: f64,
) -> KeyframePlan {
    let last = (motion.frames.len() - 1) as f64;
    let snap = |p: f64| (p * last).round() / last;
    let mut semantic: Vec<(String, f64)> = vec![
        ("takeoff".to_string(), snap(markers.takeoff_phase)),
        ("landing".to_string(), snap(markers.landing_phase)),
        ("end".to_string(), 1.0),
    ];
    if task_id == TaskId::HighJump && markers.has_flight {
        semantic.insert(1, ("apex".to_string(), snap(markers.apex_phase)));
    }

    let frame_period_phase = 1.0 / last;
    let mut entries: Vec<(f64, String)> = semantic.into_iter().map(|(l, p)| (p, l)).collect();
    for i in 1..=n_uniform {
        let p = snap(i as f64 / (n_uniform + 1) as f64);
        let in_flight =
            markers.has_flight && p > markers.takeoff_phase && p < markers.landing_phase;
        if !in_flight {
            entries.push((p, String::new()));
        }
    }
    entries.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    // Merge phases closer than one frame period; a semantic label wins.
    let mut merged: Vec<(f64, String)> = Vec::new();
    for (p, label) in entries {
        match merged.last_mut() {
            Some((lp, llabel)) if p - *lp < frame_period_phase => {
                if llabel.is_empty() && !label.is_empty() {
                    *llabel = label;
                } else if !llabel.is_empty() && !label.is_empty() {
                    llabel.push('+');
                    llabel.push_str(&label);
                }
            }
            _ => merged.push((p, label)),
        }
    }

    let key_phases: Vec<f64> = merged.iter().map(|(p, _)| *p).collect();
    let semantic_labels: Vec<String> = merged.iter().map(|(_, l)| l.clone()).collect();
    let reward_scale: Vec<f64> = semantic_labels
        .iter()
        .map(|l| if l.is_empty() { 1.0 } else { semantic_scale.max(1.0) })
        .collect();
    let edit_phases = edit_phase_set(&key_phases, &semantic_labels, task_id);
    KeyframePlan { key_phases, edit_phases, semantic_labels, reward_scale }
}

/// Which keyframes editing transforms: for the far jump, the landing keyframe
/// and everything after it; for the high jump, the apex keyframe.
fn edit_phase_set(phases: &[f64], labels: &[String], task_id: TaskId) -> Vec<f64> {
    match task_id {
        TaskId::FarJump => {
            let landing = labels
                .iter()
                .position(|l| l.contains("landing"))
                .map(|i| phases[i])
                .unwrap_or(1.0);
            phases.iter().copied().filter(|&p| p >= landing).collect()
        }
        TaskId::HighJump => labels
            .iter()
            .position(|l| l.contains("apex"))
            .map(|i| vec![phases[i]])
            .unwrap_or_default(),
    }
}

/// Apply the task edit to the keyframe set. Returns every keyframe's global
/// root pose; only phases in the edit set carry a nonzero offset, and local
/// joint angles are untouched by construction.
pub fn edit_keyframes(
    motion: &ReferenceMotion,
    plan: &KeyframePlan,
    spec: &EditSpec,
    task: &TaskParams,
) -> Result<Vec<EditedKeyframe>, MotionError> {
    if spec.task_id != task.task_id {
        return Err(MotionError::Infeasible(format!(
            "edit spec task {} does not match task {}",
            spec.task_id, task.task_id
        )));
    }
    if plan.edit_phases.is_empty() {
        return Err(MotionError::EmptyEditSet);
    }
    if !task.psi_in_range(spec.psi) {
        return Err(MotionError::PsiOutOfRange {
            psi: spec.psi,
            lo: task.psi_range.0,
            hi: task.psi_range.1,
        });
    }
    let delta = spec.psi - spec.base_value;
    let mut out = Vec::with_capacity(plan.len());
    for &phase in &plan.key_phases {
        let base = motion.sample_at_phase(phase)?;
        let offset = if plan.is_edit_phase(phase) {
            match spec.task_id {
                TaskId::FarJump => [delta, 0.0, 0.0],
                TaskId::HighJump => [0.0, delta, 0.0],
            }
        } else {
            [0.0; 3]
        };
        out.push(EditedKeyframe {
            phase,
            root: [
                base.root_pos[0] + offset[0],
                base.root_pos[1] + offset[1],
                base.root_pitch + offset[2],
            ],
            offset,
        });
    }
    Ok(out)
}

/// Rule-based dense editing: the keyframe offsets are linearly ramped across
/// in-between frames (zero before takeoff, constant after landing), local
/// poses unchanged. This materializes a full motion.
pub fn rule_edit_dense(
    motion: &ReferenceMotion,
    plan: &KeyframePlan,
    spec: &EditSpec,
    task: &TaskParams,
    markers: &MotionMarkers,
) -> Result<ReferenceMotion, MotionError> {
    let keyframes = edit_keyframes(motion, plan, spec, task)?;
    let ramp = OffsetRamp::new(&keyframes, plan, markers);
    let mut frames = motion.frames.clone();
    let last = frames.len() - 1;
    for (k, f) in frames.iter_mut().enumerate() {
        let phase = k as f64 / last as f64;
        let off = ramp.offset_at(phase);
        f.root_pos[0] += off[0];
        f.root_pos[1] += off[1];
        f.root_pitch += off[2];
    }
    ReferenceMotion::from_frames(&motion.morphology_id, motion.frame_rate_hz, frames)
}

/// Piecewise-linear global offset used by the rule-based edit and by the
/// training-time tracking guide: anchored at zero on the takeoff keyframe,
/// interpolating through edited keyframes, held constant after landing.
#[derive(Debug, Clone)]
pub struct OffsetRamp {
    anchors: Vec<(f64, [f64; 3])>,
}

impl OffsetRamp {
    pub fn new(keyframes: &[EditedKeyframe], plan: &KeyframePlan, markers: &MotionMarkers) -> Self {
        let takeoff = plan
            .semantic_labels
            .iter()
            .position(|l| l.contains("takeoff"))
            .map(|i| plan.key_phases[i])
            .unwrap_or(markers.takeoff_phase);
        let landing = plan
            .semantic_labels
            .iter()
            .position(|l| l.contains("landing"))
            .map(|i| plan.key_phases[i])
            .unwrap_or(markers.landing_phase);
        let mut anchors: Vec<(f64, [f64; 3])> = Vec::new();
        anchors.push((takeoff, [0.0; 3]));
        for kf in keyframes {
            let anchored = kf.offset != [0.0; 3] || (kf.phase - landing).abs() < 1e-12;
            if anchored && kf.phase > takeoff {
                anchors.push((kf.phase, kf.offset));
            }
        }
        anchors.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        anchors.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-12 && { b.1 = a.1; true });
        OffsetRamp { anchors }
    }

    pub fn offset_at(&self, phase: f64) -> [f64; 3] {
        let first = self.anchors.first().unwrap();
        if phase <= first.0 {
            return [0.0; 3];
        }
        for w in self.anchors.windows(2) {
            if phase <= w[1].0 {
                let t = (phase - w[0].0) / (w[1].0 - w[0].0);
                return [
                    w[0].1[0] + (w[1].1[0] - w[0].1[0]) * t,
                    w[0].1[1] + (w[1].1[1] - w[0].1[1]) * t,
                    w[0].1[2] + (w[1].1[2] - w[0].1[2]) * t,
                ];
            }
        }
        self.anchors.last().unwrap().1
    }
}

/// A family of edited motions over one base motion, indexed by the task
/// variable. Edits are materialized lazily per psi; the stored `edits` list
/// is the sampled family the edit command persists for inspection.
#[derive(Debug, Clone)]
pub struct EditedDataset {
    pub base: ReferenceMotion,
    pub plan: KeyframePlan,
    pub task: TaskParams,
    pub markers: MotionMarkers,
    pub mode: DatasetMode,
    pub edits: Vec<(EditSpec, Vec<EditedKeyframe>)>,
}

impl EditedDataset {
    pub fn new(
        base: ReferenceMotion,
        plan: KeyframePlan,
        task: TaskParams,
        markers: MotionMarkers,
        mode: DatasetMode,
    ) -> Self {
        EditedDataset { base, plan, task, markers, mode, edits: Vec::new() }
    }

    pub fn spec_for(&self, psi: f64) -> EditSpec {
        EditSpec { task_id: self.task.task_id, psi, base_value: self.task.base_value }
    }

    /// Effective task variable: in `Original` mode edits are disabled and the
    /// base value is used everywhere.
    pub fn clamp_psi(&self, psi: f64) -> f64 {
        match self.mode {
            DatasetMode::Original => self.task.base_value,
            _ => psi,
        }
    }

    pub fn edited_keyframes(&self, psi: f64) -> Result<Vec<EditedKeyframe>, MotionError> {
        let spec = self.spec_for(self.clamp_psi(psi));
        edit_keyframes(&self.base, &self.plan, &spec, &self.task)
    }

    pub fn rule_motion(&self, psi: f64) -> Result<ReferenceMotion, MotionError> {
        let spec = self.spec_for(self.clamp_psi(psi));
        rule_edit_dense(&self.base, &self.plan, &spec, &self.task, &self.markers)
    }

    /// Materialize a grid of edits (for the `edit` command artifact).
    pub fn materialize_grid(&mut self, count: usize) -> Result<(), MotionError> {
        self.edits.clear();
        let (lo, hi) = self.task.easy_band;
        for i in 0..count {
            let psi = if count == 1 {
                self.task.base_value
            } else {
                lo + (hi - lo) * i as f64 / (count - 1) as f64
            };
            let spec = self.spec_for(psi);
            let kfs = edit_keyframes(&self.base, &self.plan, &spec, &self.task)?;
            self.edits.push((spec, kfs));
        }
        Ok(())
    }
}
