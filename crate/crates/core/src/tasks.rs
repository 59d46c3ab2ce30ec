//! Task definitions: which quantity the task variable controls, its ranges,
//! and which keyframes carry semantics.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskId {
    /// Horizontal jump; the task variable is the jump distance in meters.
    FarJump,
    /// Vertical jump; the task variable is the apex height gain in meters.
    HighJump,
}

impl std::fmt::Display for TaskId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TaskId::FarJump => write!(f, "far_jump"),
            TaskId::HighJump => write!(f, "high_jump"),
        }
    }
}

/// Desk-scale task parameters. The generated base motion uses `base_value`;
/// edits move the task variable inside `psi_range`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskParams {
    pub task_id: TaskId,
    /// d0 for far jump, h0 for high jump (meters).
    pub base_value: f64,
    /// Motion duration in seconds.
    pub duration_s: f64,
    /// Full admissible range for the task variable (edits outside are errors).
    pub psi_range: (f64, f64),
    /// Training / easy-adaptation band.
    pub easy_band: (f64, f64),
    /// Hard-adaptation bands (extrapolation outside the easy band).
    pub hard_bands: Vec<(f64, f64)>,
}

impl TaskParams {
    pub fn far_jump_default() -> Self {
        TaskParams {
            task_id: TaskId::FarJump,
            base_value: 0.4,
            duration_s: 2.4,
            psi_range: (0.05, 0.9),
            easy_band: (0.25, 0.6),
            hard_bands: vec![(0.1, 0.25), (0.6, 0.8)],
        }
    }

    pub fn high_jump_default() -> Self {
        TaskParams {
            task_id: TaskId::HighJump,
            base_value: 0.2,
            duration_s: 2.4,
            psi_range: (0.0, 0.5),
            easy_band: (0.1, 0.3),
            hard_bands: vec![(0.05, 0.1), (0.3, 0.4)],
        }
    }

    pub fn defaults_for(task_id: TaskId) -> Self {
        match task_id {
            TaskId::FarJump => Self::far_jump_default(),
            TaskId::HighJump => Self::high_jump_default(),
        }
    }

    pub fn psi_in_range(&self, psi: f64) -> bool {
        psi >= self.psi_range.0 && psi <= self.psi_range.1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_bands_inside_range() {
        for t in [TaskParams::far_jump_default(), TaskParams::high_jump_default()] {
            assert!(t.psi_in_range(t.base_value));
            assert!(t.psi_in_range(t.easy_band.0) && t.psi_in_range(t.easy_band.1));
            for &(lo, hi) in &t.hard_bands {
                assert!(t.psi_in_range(lo) && t.psi_in_range(hi));
            }
        }
    }
}
