//! Diagonal Gaussian policy head: an MLP mean plus per-dimension learned
//! log-std, state independent and clamped to keep the distribution sane.

use rand_chacha::ChaCha8Rng;

use super::{gauss, Mlp, MlpCache, MlpGrads, NetError};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 1.0;

const HALF_LN_TAU: f64 = 0.918_938_533_204_672_7; // 0.5 * ln(2*pi)

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianHead {
    pub mean_net: Mlp,
    pub log_std: Vec<f64>,
}

impl GaussianHead {
    pub fn new(sizes: &[usize], init_log_std: f64, last_gain: f64, rng: &mut ChaCha8Rng) -> Self {
        let mean_net = Mlp::new(sizes, last_gain, rng);
        let dim = mean_net.output_dim();
        GaussianHead { mean_net, log_std: vec![init_log_std.clamp(LOG_STD_MIN, LOG_STD_MAX); dim] }
    }

    pub fn action_dim(&self) -> usize {
        self.mean_net.output_dim()
    }

    pub fn std(&self) -> Vec<f64> {
        self.log_std.iter().map(|l| l.clamp(LOG_STD_MIN, LOG_STD_MAX).exp()).collect()
    }

    /// Deterministic action: the mean.
    pub fn mean(&self, obs: &[f64]) -> Result<Vec<f64>, NetError> {
        self.mean_net.forward(obs)
    }

    /// Sample an action and its log-probability.
    pub fn sample(&self, obs: &[f64], rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, f64), NetError> {
        let mean = self.mean_net.forward(obs)?;
        let std = self.std();
        let action: Vec<f64> =
            mean.iter().zip(std.iter()).map(|(m, s)| m + s * gauss(rng)).collect();
        let lp = log_prob_of(&mean, &std, &action);
        Ok((action, lp))
    }

    /// Log-probability of `action` under the current parameters, with the
    /// forward cache retained so the caller can backprop through the mean.
    pub fn log_prob_cached(
        &self,
        obs: &[f64],
        action: &[f64],
        cache: &mut MlpCache,
    ) -> Result<f64, NetError> {
        self.mean_net.forward_cached(obs, cache)?;
        Ok(log_prob_of(cache.output(), &self.std(), action))
    }

    /// Gradients of `coef * log_prob` into the mean net and log-std slots.
    /// The entropy bonus goes only to log-std (closed form), never the mean.
    pub fn backward_log_prob(
        &self,
        cache: &MlpCache,
        action: &[f64],
        coef: f64,
        entropy_coef: f64,
        grads: &mut GaussianGrads,
    ) {
        let mean = cache.output();
        let std = self.std();
        let dim = mean.len();
        let mut dmean = vec![0.0; dim];
        for j in 0..dim {
            let z = (action[j] - mean[j]) / std[j];
            // d log p / d mean = z / std; d log p / d log_std = z^2 - 1.
            dmean[j] = coef * z / std[j];
            let inside = self.log_std[j] > LOG_STD_MIN && self.log_std[j] < LOG_STD_MAX;
            if inside {
                grads.log_std[j] += coef * (z * z - 1.0) + entropy_coef;
            }
        }
        self.mean_net.backward(cache, &dmean, &mut grads.mean, None);
    }

    /// Entropy of the diagonal Gaussian: depends on log-std only.
    pub fn entropy(&self) -> f64 {
        self.log_std
            .iter()
            .map(|l| l.clamp(LOG_STD_MIN, LOG_STD_MAX) + HALF_LN_TAU + 0.5)
            .sum()
    }

    pub fn visit_params_mut(&mut self, f: &mut impl FnMut(&mut f64)) {
        self.mean_net.visit_params_mut(f);
        for l in self.log_std.iter_mut() {
            f(l);
        }
    }

    pub fn visit_params(&self, f: &mut impl FnMut(f64)) {
        self.mean_net.visit_params(f);
        for l in self.log_std.iter() {
            f(*l);
        }
    }
}

pub fn log_prob_of(mean: &[f64], std: &[f64], action: &[f64]) -> f64 {
    let mut lp = 0.0;
    for j in 0..mean.len() {
        let z = (action[j] - mean[j]) / std[j];
        lp += -std[j].ln() - HALF_LN_TAU - 0.5 * z * z;
    }
    lp
}

/// Gradient slots for one Gaussian head.
#[derive(Debug, Clone)]
pub struct GaussianGrads {
    pub mean: MlpGrads,
    pub log_std: Vec<f64>,
}

impl GaussianGrads {
    pub fn zeros_like(head: &GaussianHead) -> Self {
        GaussianGrads {
            mean: MlpGrads::zeros_like(&head.mean_net),
            log_std: vec![0.0; head.log_std.len()],
        }
    }

    pub fn reset(&mut self) {
        self.mean.reset();
        self.log_std.fill(0.0);
    }

    pub fn add(&mut self, other: &GaussianGrads) {
        self.mean.add(&other.mean);
        for (a, b) in self.log_std.iter_mut().zip(other.log_std.iter()) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.mean.scale(s);
        for g in self.log_std.iter_mut() {
            *g *= s;
        }
    }

    pub fn visit_mut(&mut self, f: &mut impl FnMut(&mut f64)) {
        self.mean.visit_mut(f);
        for g in self.log_std.iter_mut() {
            f(g);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn deterministic_mode_returns_mean() {
        let mut rng = seeded(0);
        let head = GaussianHead::new(&[3, 8, 2], -0.5, 0.01, &mut rng);
        let obs = [0.2, -0.1, 0.5];
        let mean = head.mean(&obs).unwrap();
        assert_eq!(mean, head.mean_net.forward(&obs).unwrap());
    }

    #[test]
    fn log_prob_at_mean_is_normalizer() {
        let mut rng = seeded(1);
        let head = GaussianHead::new(&[3, 8, 2], -0.7, 0.01, &mut rng);
        let obs = [0.2, -0.1, 0.5];
        let mean = head.mean(&obs).unwrap();
        let std = head.std();
        let lp = log_prob_of(&mean, &std, &mean);
        let expect: f64 = std.iter().map(|s| -s.ln() - HALF_LN_TAU).sum();
        assert!((lp - expect).abs() < 1e-12);
    }

    #[test]
    fn empirical_std_matches_parameter() {
        let mut rng = seeded(2);
        let head = GaussianHead::new(&[2, 4, 2], -0.3, 0.01, &mut rng);
        let obs = [0.1, 0.9];
        let n = 100_000;
        let mut sums = [0.0; 2];
        let mut sq = [0.0; 2];
        for _ in 0..n {
            let (a, _) = head.sample(&obs, &mut rng).unwrap();
            for j in 0..2 {
                sums[j] += a[j];
                sq[j] += a[j] * a[j];
            }
        }
        let std = head.std();
        for j in 0..2 {
            let mean = sums[j] / n as f64;
            let var = sq[j] / n as f64 - mean * mean;
            let rel = (var.sqrt() - std[j]).abs() / std[j];
            assert!(rel < 0.02, "dim {j}: empirical {} vs {}", var.sqrt(), std[j]);
        }
    }

    #[test]
    fn entropy_closed_form_and_mean_untouched() {
        let mut rng = seeded(3);
        let head = GaussianHead::new(&[3, 6, 2], -0.2, 0.01, &mut rng);
        let expect: f64 =
            head.log_std.iter().map(|l| l + 0.5 * (std::f64::consts::TAU).ln() + 0.5).sum();
        assert!((head.entropy() - expect).abs() < 1e-12);

        // Entropy-bonus gradient only reaches log_std: backprop with coef 0.
        let mut cache = MlpCache::default();
        let obs = [0.1, 0.2, 0.3];
        let action = head.mean(&obs).unwrap();
        head.log_prob_cached(&obs, &action, &mut cache).unwrap();
        let mut grads = GaussianGrads::zeros_like(&head);
        head.backward_log_prob(&cache, &action, 0.0, 0.01, &mut grads);
        grads.mean.visit_mut(&mut |g| assert_eq!(*g, 0.0));
        for g in &grads.log_std {
            assert_eq!(*g, 0.01);
        }
    }

    #[test]
    fn log_prob_gradient_matches_finite_differences() {
        let mut rng = seeded(4);
        let mut head = GaussianHead::new(&[3, 5, 2], -0.4, 1.0, &mut rng);
        let obs = [0.3, -0.6, 0.2];
        let (action, _) = head.sample(&obs, &mut rng).unwrap();
        let mut cache = MlpCache::default();
        head.log_prob_cached(&obs, &action, &mut cache).unwrap();
        let mut grads = GaussianGrads::zeros_like(&head);
        head.backward_log_prob(&cache, &action, 1.0, 0.0, &mut grads);

        let h = 1e-6;
        // Check a few mean-net weights and both log_std entries.
        for (l, k) in [(0usize, 0usize), (0, 7), (1, 3)] {
            let orig = head.mean_net.weights[l][k];
            head.mean_net.weights[l][k] = orig + h;
            let up = head.log_prob_cached(&obs, &action, &mut cache).unwrap();
            head.mean_net.weights[l][k] = orig - h;
            let dn = head.log_prob_cached(&obs, &action, &mut cache).unwrap();
            head.mean_net.weights[l][k] = orig;
            let fd = (up - dn) / (2.0 * h);
            let rel = (grads.mean.weights[l][k] - fd).abs() / fd.abs().max(1e-4);
            assert!(rel < 1e-4, "w[{l}][{k}]: {} vs {fd}", grads.mean.weights[l][k]);
        }
        head.log_prob_cached(&obs, &action, &mut cache).unwrap();
        for j in 0..2 {
            let orig = head.log_std[j];
            head.log_std[j] = orig + h;
            let up = head.log_prob_cached(&obs, &action, &mut cache).unwrap();
            head.log_std[j] = orig - h;
            let dn = head.log_prob_cached(&obs, &action, &mut cache).unwrap();
            head.log_std[j] = orig;
            let fd = (up - dn) / (2.0 * h);
            assert!((grads.log_std[j] - fd).abs() / fd.abs().max(1e-4) < 1e-4);
        }
    }
}
