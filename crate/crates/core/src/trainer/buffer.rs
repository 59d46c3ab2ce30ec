//! Rollout storage: rectangular [n_envs x n_steps], one trace per env so
//! collection can run with one parallel task per env. Rewards are stored
//! unscaled; group mixing happens in advantage aggregation.

use super::gae::DoneTag;

/// Per-lane record of one step.
#[derive(Debug, Clone)]
pub struct LaneStep {
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub v_sparse: f64,
    pub v_dense: f64,
    /// Bootstrap values at truncation (post-step state), zero otherwise.
    pub boot_sparse: f64,
    pub boot_dense: f64,
}

#[derive(Debug, Clone)]
pub struct StepRecord {
    pub actor_stack: Vec<f64>,
    pub critic_in: Vec<f64>,
    pub raw_critic: Vec<f64>,
    pub dphi_ada_norm: f64,
    pub r_sparse: f64,
    pub r_dense: f64,
    pub done: DoneTag,
    pub phase: f64,
    pub psi: f64,
    pub lanes: Vec<LaneStep>,
}

#[derive(Debug, Clone, Default)]
pub struct EnvTrace {
    pub steps: Vec<StepRecord>,
    /// Bootstrap values per lane when the buffer ends mid-episode.
    pub tail_boot: Vec<(f64, f64)>,
}

#[derive(Debug, Default)]
pub struct RolloutBuffer {
    pub traces: Vec<EnvTrace>,
    pub n_steps: usize,
}

impl RolloutBuffer {
    pub fn n_envs(&self) -> usize {
        self.traces.len()
    }

    pub fn len(&self) -> usize {
        self.traces.iter().map(|t| t.steps.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat sample view in env-major order.
    pub fn step(&self, flat: usize) -> &StepRecord {
        let e = flat / self.n_steps;
        let t = flat % self.n_steps;
        &self.traces[e].steps[t]
    }

    pub fn is_rectangular(&self) -> bool {
        self.traces.iter().all(|t| t.steps.len() == self.n_steps)
    }
}

/// GAE outputs for one lane over the whole buffer (flat env-major order).
#[derive(Debug, Clone, Default)]
pub struct LaneTargets {
    pub adv_sparse: Vec<f64>,
    pub adv_dense: Vec<f64>,
    pub ret_sparse: Vec<f64>,
    pub ret_dense: Vec<f64>,
    /// Mixed, standardized advantage used by the surrogate.
    pub adv: Vec<f64>,
}

/// Run per-group GAE for one lane across every env trace.
pub fn lane_gae(
    buffer: &RolloutBuffer,
    lane: usize,
    gamma_sparse: f64,
    gamma_dense: f64,
    lambda: f64,
    weights: (f64, f64),
) -> LaneTargets {
    let total = buffer.len();
    let mut out = LaneTargets {
        adv_sparse: vec![0.0; total],
        adv_dense: vec![0.0; total],
        ret_sparse: vec![0.0; total],
        ret_dense: vec![0.0; total],
        adv: Vec::new(),
    };
    let mut offset = 0;
    for trace in &buffer.traces {
        let n = trace.steps.len();
        let r_sparse: Vec<f64> = trace.steps.iter().map(|s| s.r_sparse).collect();
        let r_dense: Vec<f64> = trace.steps.iter().map(|s| s.r_dense).collect();
        let done: Vec<DoneTag> = trace.steps.iter().map(|s| s.done).collect();
        let v_sparse: Vec<f64> = trace.steps.iter().map(|s| s.lanes[lane].v_sparse).collect();
        let v_dense: Vec<f64> = trace.steps.iter().map(|s| s.lanes[lane].v_dense).collect();
        let boot_sparse: Vec<f64> = trace.steps.iter().map(|s| s.lanes[lane].boot_sparse).collect();
        let boot_dense: Vec<f64> = trace.steps.iter().map(|s| s.lanes[lane].boot_dense).collect();
        let (tail_s, tail_d) = trace.tail_boot.get(lane).copied().unwrap_or((0.0, 0.0));
        super::gae::gae_scan(
            &r_sparse,
            &v_sparse,
            &done,
            &boot_sparse,
            tail_s,
            gamma_sparse,
            lambda,
            &mut out.adv_sparse[offset..offset + n],
            &mut out.ret_sparse[offset..offset + n],
        );
        super::gae::gae_scan(
            &r_dense,
            &v_dense,
            &done,
            &boot_dense,
            tail_d,
            gamma_dense,
            lambda,
            &mut out.adv_dense[offset..offset + n],
            &mut out.ret_dense[offset..offset + n],
        );
        offset += n;
    }
    out.adv = super::gae::aggregate_advantages(&out.adv_sparse, &out.adv_dense, weights);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dummy_step(r_sparse: f64, r_dense: f64, done: DoneTag) -> StepRecord {
        StepRecord {
            actor_stack: vec![],
            critic_in: vec![],
            raw_critic: vec![],
            dphi_ada_norm: 1.0,
            r_sparse,
            r_dense,
            done,
            phase: 0.0,
            psi: 0.0,
            lanes: vec![LaneStep {
                action: vec![],
                log_prob: 0.0,
                v_sparse: 0.1,
                v_dense: 0.2,
                boot_sparse: 0.0,
                boot_dense: 0.0,
            }],
        }
    }

    #[test]
    fn group_separation() {
        // Perturbing only sparse rewards leaves dense targets bitwise
        // unchanged, and vice versa.
        let make = |sparse_bump: f64, dense_bump: f64| -> LaneTargets {
            let steps: Vec<StepRecord> = (0..6)
                .map(|i| {
                    dummy_step(
                        i as f64 + sparse_bump,
                        -(i as f64) + dense_bump,
                        if i == 3 { DoneTag::Terminal } else { DoneTag::Alive },
                    )
                })
                .collect();
            let buffer = RolloutBuffer {
                traces: vec![EnvTrace { steps, tail_boot: vec![(0.5, 0.5)] }],
                n_steps: 6,
            };
            lane_gae(&buffer, 0, 1.0, 0.99, 0.95, (1.0, 0.5))
        };
        let a = make(0.0, 0.0);
        let b = make(1.0, 0.0);
        let c = make(0.0, 1.0);
        for t in 0..6 {
            assert_eq!(a.ret_dense[t].to_bits(), b.ret_dense[t].to_bits());
            assert_ne!(a.ret_sparse[t].to_bits(), b.ret_sparse[t].to_bits());
            assert_eq!(a.ret_sparse[t].to_bits(), c.ret_sparse[t].to_bits());
            assert_ne!(a.ret_dense[t].to_bits(), c.ret_dense[t].to_bits());
        }
    }

    #[test]
    fn buffer_shape() {
        let steps: Vec<StepRecord> =
            (0..3).map(|_| dummy_step(0.0, 0.0, DoneTag::Alive)).collect();
        let buffer = RolloutBuffer {
            traces: vec![
                EnvTrace { steps: steps.clone(), tail_boot: vec![(0.0, 0.0)] },
                EnvTrace { steps, tail_boot: vec![(0.0, 0.0)] },
            ],
            n_steps: 3,
        };
        assert_eq!(buffer.n_envs(), 2);
        assert_eq!(buffer.len(), 6);
        assert!(buffer.is_rectangular());
        assert_eq!(buffer.step(4).done, DoneTag::Alive);
    }
}
