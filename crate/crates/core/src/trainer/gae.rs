//! Generalized advantage estimation, computed independently per reward
//! group with that group's discount factor.

/// Step status inside a rollout buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DoneTag {
    Alive,
    /// True MDP terminal (fell, tracking failure, motion complete, fault).
    Terminal,
    /// Episode cut short (tick cap or buffer edge); bootstrap applies.
    Truncated,
}

/// Backward scan over one env's row. `boot[t]` holds the bootstrap value at
/// truncated steps; `tail_boot` bootstraps a rollout that ends mid-episode.
#[allow(clippy::too_many_arguments)]
pub fn gae_scan(
    rewards: &[f64],
    values: &[f64],
    done: &[DoneTag],
    boot: &[f64],
    tail_boot: f64,
    gamma: f64,
    lambda: f64,
    adv: &mut [f64],
    ret: &mut [f64],
) {
    let n = rewards.len();
    for t in (0..n).rev() {
        let (next_v, next_adv) = match done[t] {
            DoneTag::Terminal => (0.0, 0.0),
            DoneTag::Truncated => (boot[t], 0.0),
            DoneTag::Alive => {
                if t + 1 == n {
                    (tail_boot, 0.0)
                } else {
                    (values[t + 1], adv[t + 1])
                }
            }
        };
        let delta = rewards[t] + gamma * next_v - values[t];
        adv[t] = delta + gamma * lambda * next_adv;
        ret[t] = adv[t] + values[t];
    }
}

/// Standardize each advantage stream over the batch and mix with the group
/// weights. A zero-variance stream contributes nothing (guarded division).
pub fn aggregate_advantages(
    adv_sparse: &[f64],
    adv_dense: &[f64],
    weights: (f64, f64),
) -> Vec<f64> {
    let std_sparse = standardized(adv_sparse);
    let std_dense = standardized(adv_dense);
    std_sparse
        .iter()
        .zip(std_dense.iter())
        .map(|(s, d)| weights.0 * s + weights.1 * d)
        .collect()
}

fn standardized(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < 1e-8 {
        vec![0.0; x.len()]
    } else {
        x.iter().map(|v| (v - mean) / std).collect()
    }
}
