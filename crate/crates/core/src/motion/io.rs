//! Motion file I/O.
//!
//! Schema: `{schema_version, morphology_id, frame_rate_hz, frames:[{root:[x,z,pitch], joints:[...]}]}`.
//! Velocities are never serialized; they are recomputed from positions on
//! load, so a save/load round trip is field-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Frame, MotionError, ReferenceMotion};

pub const MOTION_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct MotionFile {
    schema_version: u32,
    morphology_id: String,
    frame_rate_hz: f64,
    frames: Vec<FrameRecord>,
}

#[derive(Serialize, Deserialize)]
struct FrameRecord {
    root: [f64; 3],
    joints: Vec<f64>,
}

pub fn save_motion(motion: &ReferenceMotion, path: &Path) -> Result<(), MotionError> {
    let file = MotionFile {
        schema_version: MOTION_SCHEMA_VERSION,
        morphology_id: motion.morphology_id.clone(),
        frame_rate_hz: motion.frame_rate_hz,
        frames: motion
            .frames
            .iter()
            .map(|f| FrameRecord {
                root: [f.root_pos[0], f.root_pos[1], f.root_pitch],
                joints: f.joint_angles.clone(),
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&file).expect("motion serialization cannot fail");
    std::fs::write(path, json)?;
    Ok(())
}

/// Load a motion, checking schema version and (when provided) that the joint
/// layout matches the expected morphology.
pub fn load_motion(
    path: &Path,
    expect_morphology: Option<(&str, usize)>,
) -> Result<ReferenceMotion, MotionError> {
    let text = std::fs::read_to_string(path)?;
    let file: MotionFile = serde_json::from_str(&text).map_err(|e| MotionError::Parse {
        offset: byte_offset(&text, e.line(), e.column()),
        message: e.to_string(),
    })?;
    if file.schema_version != MOTION_SCHEMA_VERSION {
        return Err(MotionError::SchemaVersion {
            got: file.schema_version,
            expected: MOTION_SCHEMA_VERSION,
        });
    }
    let joints = file.frames.first().map(|f| f.joints.len()).unwrap_or(0);
    if let Some((id, expected_joints)) = expect_morphology {
        if file.morphology_id != id || joints != expected_joints {
            return Err(MotionError::MorphologyMismatch {
                got: file.morphology_id,
                joints,
                expected: id.to_string(),
                expected_joints,
            });
        }
    }
    let frames: Vec<Frame> = file
        .frames
        .into_iter()
        .map(|r| {
            let mut f = Frame::zero(r.joints.len());
            f.root_pos = [r.root[0], r.root[1]];
            f.root_pitch = r.root[2];
            f.joint_angles = r.joints;
            f
        })
        .collect();
    ReferenceMotion::from_frames(&file.morphology_id, file.frame_rate_hz, frames)
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let mut offset = 0;
    for (i, l) in text.lines().enumerate() {
        if i + 1 == line {
            return offset + column.saturating_sub(1);
        }
        offset += l.len() + 1;
    }
    offset
}
