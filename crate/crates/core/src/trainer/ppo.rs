//! Clipped-surrogate PPO update over the lane structure, with per-critic
//! value losses and a KL-tracking adaptive learning rate.
//!
//! Determinism for any worker count: minibatch gradients are accumulated in
//! fixed-size chunks, the per-chunk partial sums are reduced in chunk order,
//! and every optimizer walks parameters in a fixed order.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::PpoConfig;
use crate::nets::gaussian::GaussianGrads;
use crate::nets::{Adam, Mlp, MlpCache, MlpGrads};
use crate::policy::{LaneKind, PolicyBundle};

use super::buffer::{LaneTargets, RolloutBuffer};

/// Optional output-Lipschitz regularization settings.
#[derive(Debug, Clone, Copy, Default)]
pub struct LipschitzReg {
    pub coef: f64,
    pub delta: f64,
}

/// Fixed accumulation chunk: chosen once, independent of worker count.
const GRAD_CHUNK: usize = 64;

/// Optimizer state for every trainable structure.
pub struct PpoState {
    pub lr: f64,
    head_adams: Vec<Adam>,
    critic_adams: Vec<(Adam, Adam)>,
    lane_kinds: Vec<LaneKind>,
}

impl PpoState {
    pub fn new(bundle: &PolicyBundle, config: &PpoConfig) -> Self {
        let lane_kinds = bundle.lane_kinds();
        let head_adams = lane_kinds
            .iter()
            .map(|&k| {
                let h = bundle.head(k);
                Adam::new(h.mean_net.param_count() + h.log_std.len())
            })
            .collect();
        let critic_adams = lane_kinds
            .iter()
            .map(|&k| {
                let c = bundle.critics(k);
                (Adam::new(c.sparse.param_count()), Adam::new(c.dense.param_count()))
            })
            .collect();
        PpoState { lr: config.lr_init, head_adams, critic_adams, lane_kinds }
    }
}

#[derive(Debug, Clone, Default)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub kl: f64,
    pub clip_frac: f64,
    pub lr: f64,
    pub skipped_minibatches: usize,
}

struct ChunkOut {
    grads: Vec<LaneGrads>,
    kl_sum: f64,
    clip_count: usize,
    policy_loss_sum: f64,
    value_loss_sum: f64,
    count: usize,
}

#[derive(Clone)]
struct LaneGrads {
    head: GaussianGrads,
    critic_sparse: MlpGrads,
    critic_dense: MlpGrads,
}

impl LaneGrads {
    fn zeros(bundle: &PolicyBundle, kind: LaneKind) -> Self {
        LaneGrads {
            head: GaussianGrads::zeros_like(bundle.head(kind)),
            critic_sparse: MlpGrads::zeros_like(&bundle.critics(kind).sparse),
            critic_dense: MlpGrads::zeros_like(&bundle.critics(kind).dense),
        }
    }

    fn add(&mut self, other: &LaneGrads) {
        self.head.add(&other.head);
        self.critic_sparse.add(&other.critic_sparse);
        self.critic_dense.add(&other.critic_dense);
    }

    fn is_finite(&self) -> bool {
        let mlp_ok = |g: &MlpGrads| {
            g.weights.iter().chain(g.biases.iter()).all(|v| v.iter().all(|x| x.is_finite()))
        };
        mlp_ok(&self.head.mean)
            && self.head.log_std.iter().all(|x| x.is_finite())
            && mlp_ok(&self.critic_sparse)
            && mlp_ok(&self.critic_dense)
    }
}

/// One PPO update over a collected buffer. Returns per-iteration statistics;
/// the learning rate inside `state` is adapted for the next iteration.
pub fn ppo_update(
    bundle: &mut PolicyBundle,
    buffer: &RolloutBuffer,
    targets: &[LaneTargets],
    config: &PpoConfig,
    reg: LipschitzReg,
    state: &mut PpoState,
    rng: &mut ChaCha8Rng,
) -> UpdateStats {
    let n = buffer.len();
    let lane_kinds = state.lane_kinds.clone();
    let mut indices: Vec<usize> = (0..n).collect();
    let mut stats = UpdateStats { lr: state.lr, ..Default::default() };
    let mut kl_acc = 0.0;
    let mut kl_batches = 0usize;

    for _epoch in 0..config.epochs {
        indices.shuffle(rng);
        let mb_size = n.div_ceil(config.minibatches);
        for mb in indices.chunks(mb_size) {
            let inv = 1.0 / mb.len() as f64;
            // Parallel accumulation over fixed-size chunks, reduced in order.
            let chunks: Vec<ChunkOut> = mb
                .par_chunks(GRAD_CHUNK)
                .map(|chunk| {
                    accumulate_chunk(bundle, buffer, targets, config, reg, &lane_kinds, chunk, inv)
                })
                .collect();
            let mut total: Vec<LaneGrads> =
                lane_kinds.iter().map(|&k| LaneGrads::zeros(bundle, k)).collect();
            let mut kl_sum = 0.0;
            let mut clip_count = 0usize;
            let mut ploss = 0.0;
            let mut vloss = 0.0;
            let mut count = 0usize;
            for c in &chunks {
                for (t, g) in total.iter_mut().zip(c.grads.iter()) {
                    t.add(g);
                }
                kl_sum += c.kl_sum;
                clip_count += c.clip_count;
                ploss += c.policy_loss_sum;
                vloss += c.value_loss_sum;
                count += c.count;
            }
            let finite = total.iter().all(|g| g.is_finite())
                && kl_sum.is_finite()
                && ploss.is_finite()
                && vloss.is_finite();
            if !finite {
                // Skip the apply, halve the learning rate, keep training.
                stats.skipped_minibatches += 1;
                state.lr = (state.lr * 0.5).max(config.lr_min);
                continue;
            }
            apply_grads(bundle, state, &lane_kinds, &total);
            kl_acc += kl_sum / count as f64;
            kl_batches += 1;
            stats.policy_loss += ploss / count as f64;
            stats.value_loss += vloss / count as f64;
            stats.clip_frac += clip_count as f64 / (count * lane_kinds.len().max(1)) as f64;
        }
    }

    let total_batches = (config.epochs * config.minibatches) as f64;
    stats.policy_loss /= total_batches;
    stats.value_loss /= total_batches;
    stats.clip_frac /= total_batches;
    stats.kl = if kl_batches > 0 { kl_acc / kl_batches as f64 } else { 0.0 };

    // Adaptive learning rate: halve above 2x the target KL, double below
    // half of it.
    if stats.kl > 2.0 * config.desired_kl {
        state.lr = (state.lr * 0.5).max(config.lr_min);
    } else if stats.kl < 0.5 * config.desired_kl && stats.kl > 0.0 {
        state.lr = (state.lr * 2.0).min(config.lr_max);
    }
    stats.lr = state.lr;
    stats
}

#[allow(clippy::too_many_arguments)]
fn accumulate_chunk(
    bundle: &PolicyBundle,
    buffer: &RolloutBuffer,
    targets: &[LaneTargets],
    config: &PpoConfig,
    reg: LipschitzReg,
    lane_kinds: &[LaneKind],
    chunk: &[usize],
    inv_batch: f64,
) -> ChunkOut {
    let mut grads: Vec<LaneGrads> = lane_kinds.iter().map(|&k| LaneGrads::zeros(bundle, k)).collect();
    let mut cache = MlpCache::default();
    let mut vcache = MlpCache::default();
    let mut kl_sum = 0.0;
    let mut clip_count = 0usize;
    let mut policy_loss_sum = 0.0;
    let mut value_loss_sum = 0.0;

    for &flat in chunk {
        let step = buffer.step(flat);
        for (li, &kind) in lane_kinds.iter().enumerate() {
            let lane = &step.lanes[li];
            let head = bundle.head(kind);
            let input = bundle.lane_input(kind, &step.actor_stack, step.dphi_ada_norm);
            let logp_new = head
                .log_prob_cached(&input, &lane.action, &mut cache)
                .expect("buffered input dims match");
            let ratio = (logp_new - lane.log_prob).exp();
            let adv = targets[li].adv[flat];
            let clipped_out = (adv >= 0.0 && ratio > 1.0 + config.clip)
                || (adv < 0.0 && ratio < 1.0 - config.clip);
            let surr = if clipped_out {
                ratio.clamp(1.0 - config.clip, 1.0 + config.clip) * adv
            } else {
                ratio * adv
            };
            policy_loss_sum -= surr;
            // d(-surr)/d logp = -ratio * adv when the unclipped branch is
            // active; the entropy bonus only reaches log_std.
            let coef = if clipped_out { 0.0 } else { -ratio * adv * inv_batch };
            head.backward_log_prob(
                &cache,
                &lane.action,
                coef,
                -config.entropy_coef * inv_batch,
                &mut grads[li].head,
            );
            if (ratio - 1.0).abs() > config.clip {
                clip_count += 1;
            }
            // k3 KL estimator, nonnegative.
            kl_sum += (ratio - 1.0) - ratio.ln();

            // Optional output-Lipschitz regularizer on the mean path.
            if reg.coef > 0.0 {
                lipschitz_term(head, &input, flat, reg, inv_batch, &mut grads[li].head);
            }

            // Value losses against each group's own returns.
            let critics = bundle.critics(kind);
            value_loss_for(
                &critics.sparse,
                &step.critic_in,
                targets[li].ret_sparse[flat],
                config.value_loss_coef,
                inv_batch,
                &mut vcache,
                &mut grads[li].critic_sparse,
                &mut value_loss_sum,
            );
            value_loss_for(
                &critics.dense,
                &step.critic_in,
                targets[li].ret_dense[flat],
                config.value_loss_coef,
                inv_batch,
                &mut vcache,
                &mut grads[li].critic_dense,
                &mut value_loss_sum,
            );
        }
    }
    // Average the per-lane KL contributions into per-sample units.
    let lane_div = lane_kinds.len().max(1) as f64;
    ChunkOut {
        grads,
        kl_sum: kl_sum / lane_div,
        clip_count,
        policy_loss_sum: policy_loss_sum / lane_div,
        value_loss_sum,
        count: chunk.len(),
    }
}

/// ||mu(x + d) - mu(x)||^2 with a deterministic per-sample jitter on the
/// observation part of the input; gradients flow through both evaluations.
fn lipschitz_term(
    head: &crate::nets::GaussianHead,
    input: &[f64],
    flat: usize,
    reg: LipschitzReg,
    inv_batch: f64,
    grads: &mut GaussianGrads,
) {
    let mut jrng = crate::rng::derive(0x11D5_11D5, flat as u64);
    let mut jittered = input.to_vec();
    for v in jittered.iter_mut() {
        *v += reg.delta * crate::nets::gauss(&mut jrng);
    }
    let mut cache_a = MlpCache::default();
    let mut cache_b = MlpCache::default();
    head.mean_net.forward_cached(input, &mut cache_a).expect("dims");
    head.mean_net.forward_cached(&jittered, &mut cache_b).expect("dims");
    let diff: Vec<f64> = cache_b
        .output()
        .iter()
        .zip(cache_a.output().iter())
        .map(|(b, a)| b - a)
        .collect();
    let scale = 2.0 * reg.coef * inv_batch;
    let dout_b: Vec<f64> = diff.iter().map(|d| scale * d).collect();
    let dout_a: Vec<f64> = diff.iter().map(|d| -scale * d).collect();
    head.mean_net.backward(&cache_b, &dout_b, &mut grads.mean, None);
    head.mean_net.backward(&cache_a, &dout_a, &mut grads.mean, None);
}

#[allow(clippy::too_many_arguments)]
fn value_loss_for(
    net: &Mlp,
    input: &[f64],
    target: f64,
    coef: f64,
    inv_batch: f64,
    cache: &mut MlpCache,
    grads: &mut MlpGrads,
    loss_sum: &mut f64,
) {
    net.forward_cached(input, cache).expect("critic dims");
    let v = cache.output()[0];
    let err = v - target;
    *loss_sum += coef * err * err;
    net.backward(cache, &[2.0 * coef * err * inv_batch], grads, None);
}

fn apply_grads(
    bundle: &mut PolicyBundle,
    state: &mut PpoState,
    lane_kinds: &[LaneKind],
    grads: &[LaneGrads],
) {
    let lr = state.lr;
    for (li, &kind) in lane_kinds.iter().enumerate() {
        // Heads.
        let mut flat = Vec::new();
        let mut g = grads[li].head.clone();
        g.visit_mut(&mut |v| flat.push(*v));
        {
            let head = bundle.head_mut(kind);
            let mut i = 0;
            state.head_adams[li].step(lr, |apply| {
                head.visit_params_mut(&mut |p| {
                    apply(p, flat[i]);
                    i += 1;
                });
            });
        }
        // Critics.
        for (which, gm) in [(0usize, &grads[li].critic_sparse), (1, &grads[li].critic_dense)] {
            let mut flat = Vec::new();
            let mut g = gm.clone();
            g.visit_mut(&mut |v| flat.push(*v));
            let critics = bundle.critics_mut(kind);
            let net = if which == 0 { &mut critics.sparse } else { &mut critics.dense };
            let adam = if which == 0 { &mut state.critic_adams[li].0 } else { &mut state.critic_adams[li].1 };
            let mut i = 0;
            adam.step(lr, |apply| {
                net.visit_params_mut(&mut |p| {
                    apply(p, flat[i]);
                    i += 1;
                });
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;
    use crate::policy::ObsDims;
    use crate::rng::seeded;
    use crate::trainer::buffer::{EnvTrace, LaneStep, StepRecord};
    use crate::trainer::gae::DoneTag;
    use rand::Rng;

    fn tiny_bundle() -> PolicyBundle {
        let mut config = ExperimentConfig::default();
        config.train.policy_hidden = vec![8];
        config.train.critic_hidden = vec![8];
        let dims = ObsDims::for_joints(2, 1);
        PolicyBundle::new_stage1(&config, dims, &mut seeded(5))
    }

    fn synthetic_buffer(bundle: &PolicyBundle, n_envs: usize, n_steps: usize, seed: u64) -> RolloutBuffer {
        let dims = ObsDims::for_joints(2, 1);
        let mut rng = seeded(seed);
        let traces = (0..n_envs)
            .map(|_| {
                let steps = (0..n_steps)
                    .map(|_| {
                        let actor_stack: Vec<f64> =
                            (0..dims.actor_stack()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                        let critic_in: Vec<f64> =
                            (0..dims.critic_input()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                        let input = bundle.lane_input(LaneKind::Base, &actor_stack, 1.0);
                        let (action, log_prob) = bundle.base_head.sample(&input, &mut rng).unwrap();
                        StepRecord {
                            actor_stack,
                            critic_in,
                            raw_critic: vec![],
                            dphi_ada_norm: 1.0,
                            r_sparse: rng.gen_range(-1.0..1.0),
                            r_dense: rng.gen_range(-1.0..1.0),
                            done: DoneTag::Alive,
                            phase: 0.0,
                            psi: 0.0,
                            lanes: vec![LaneStep {
                                action,
                                log_prob,
                                v_sparse: 0.0,
                                v_dense: 0.0,
                                boot_sparse: 0.0,
                                boot_dense: 0.0,
                            }],
                        }
                    })
                    .collect();
                EnvTrace { steps, tail_boot: vec![(0.0, 0.0)] }
            })
            .collect();
        RolloutBuffer { traces, n_steps }
    }

    #[test]
    fn zero_advantages_leave_policy_mean_fixed() {
        let mut bundle = tiny_bundle();
        let before = bundle.base_head.mean_net.clone();
        let buffer = synthetic_buffer(&bundle, 4, 8, 3);
        let n = buffer.len();
        let targets = vec![LaneTargets {
            adv: vec![0.0; n],
            adv_sparse: vec![0.0; n],
            adv_dense: vec![0.0; n],
            ret_sparse: vec![0.0; n],
            ret_dense: vec![0.0; n],
        }];
        let config = PpoConfig { epochs: 1, minibatches: 1, ..Default::default() };
        let mut state = PpoState::new(&bundle, &config);
        ppo_update(&mut bundle, &buffer, &targets, &config, LipschitzReg::default(), &mut state, &mut seeded(1));
        // The mean network is untouched (gradients were exactly zero); only
        // log_std moves through the entropy bonus.
        assert_eq!(bundle.base_head.mean_net, before);
        assert!(bundle.base_head.log_std[0] > -1.0);
    }

    #[test]
    fn lipschitz_reg_touches_mean_when_enabled() {
        let make = |coef: f64| -> Mlp {
            let mut bundle = tiny_bundle();
            let buffer = synthetic_buffer(&bundle, 2, 8, 21);
            let n = buffer.len();
            let targets = vec![LaneTargets {
                adv: vec![0.0; n],
                adv_sparse: vec![0.0; n],
                adv_dense: vec![0.0; n],
                ret_sparse: vec![0.0; n],
                ret_dense: vec![0.0; n],
            }];
            let config = PpoConfig { epochs: 1, minibatches: 1, ..Default::default() };
            let mut state = PpoState::new(&bundle, &config);
            let reg = LipschitzReg { coef, delta: 0.05 };
            ppo_update(&mut bundle, &buffer, &targets, &config, reg, &mut state, &mut seeded(1));
            bundle.base_head.mean_net.clone()
        };
        let before = tiny_bundle().base_head.mean_net;
        // Off: zero advantages leave the mean untouched.
        assert_eq!(make(0.0), before);
        // On: the smoothness penalty moves it.
        assert_ne!(make(0.5), before);
    }

    #[test]
    fn clip_boundary_objectives_agree() {
        // At ratio exactly 1 +/- clip the clipped and unclipped surrogates
        // coincide: surr = clamp(r) * adv = r * adv.
        let clip = 0.2;
        for (ratio, adv) in [(1.2, 1.0), (0.8, -1.0)] {
            let clipped_out: bool =
                (adv >= 0.0 && ratio > 1.0 + clip) || (adv < 0.0 && ratio < 1.0 - clip);
            let surr_unclipped = ratio * adv;
            let surr_clipped = f64::clamp(ratio, 1.0 - clip, 1.0 + clip) * adv;
            assert!(!clipped_out);
            assert!((surr_unclipped - surr_clipped).abs() < 1e-12);
        }
    }

    #[test]
    fn kl_above_threshold_halves_lr() {
        let mut bundle = tiny_bundle();
        let buffer = synthetic_buffer(&bundle, 8, 16, 9);
        let n = buffer.len();
        // Advantages correlated with the sampled action push the mean hard,
        // forcing a large KL.
        let adv: Vec<f64> = (0..n).map(|i| 50.0 * buffer.step(i).lanes[0].action[0]).collect();
        let targets = vec![LaneTargets {
            adv: adv.clone(),
            adv_sparse: adv.clone(),
            adv_dense: adv,
            ret_sparse: vec![0.0; n],
            ret_dense: vec![0.0; n],
        }];
        let config =
            PpoConfig { epochs: 8, minibatches: 2, lr_init: 2e-2, ..Default::default() };
        let mut state = PpoState::new(&bundle, &config);
        let lr0 = state.lr;
        let stats = ppo_update(&mut bundle, &buffer, &targets, &config, LipschitzReg::default(), &mut state, &mut seeded(1));
        assert!(stats.kl > 2.0 * config.desired_kl, "kl {}", stats.kl);
        assert!(state.lr <= lr0 * 0.5 + 1e-12);
    }

    #[test]
    fn update_is_deterministic_for_any_worker_count() {
        let run = |threads: usize| -> Vec<u64> {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                let mut bundle = tiny_bundle();
                let buffer = synthetic_buffer(&bundle, 8, 16, 7);
                let n = buffer.len();
                let mut rng = seeded(4);
                let adv: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let rets: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let targets = vec![LaneTargets {
                    adv: adv.clone(),
                    adv_sparse: adv.clone(),
                    adv_dense: adv,
                    ret_sparse: rets.clone(),
                    ret_dense: rets,
                }];
                let config = PpoConfig { epochs: 2, minibatches: 2, ..Default::default() };
                let mut state = PpoState::new(&bundle, &config);
                ppo_update(&mut bundle, &buffer, &targets, &config, LipschitzReg::default(), &mut state, &mut seeded(1));
                let mut bits = Vec::new();
                bundle.base_head.visit_params(&mut |v| bits.push(v.to_bits()));
                bundle.base_critics.sparse.visit_params(&mut |v| bits.push(v.to_bits()));
                bits
            })
        };
        assert_eq!(run(1), run(4));
    }
}
