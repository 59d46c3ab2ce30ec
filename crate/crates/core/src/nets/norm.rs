//! Running observation normalization (Welford), frozen after stage 1.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningNorm {
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
    pub count: f64,
    pub frozen: bool,
    pub clip: f64,
}

impl RunningNorm {
    pub fn new(dim: usize) -> Self {
        RunningNorm { mean: vec![0.0; dim], m2: vec![0.0; dim], count: 0.0, frozen: false, clip: 10.0 }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Welford update with one raw vector; no-op when frozen.
    pub fn update(&mut self, x: &[f64]) {
        if self.frozen {
            return;
        }
        self.count += 1.0;
        for i in 0..self.mean.len() {
            let d = x[i] - self.mean[i];
            self.mean[i] += d / self.count;
            self.m2[i] += d * (x[i] - self.mean[i]);
        }
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    fn std(&self, i: usize) -> f64 {
        if self.count < 2.0 {
            1.0
        } else {
            (self.m2[i] / self.count).sqrt().max(1e-6)
        }
    }

    /// Normalize the first `self.dim()` entries of `x` into `out`. `x` may be
    /// the full vector or a prefix-compatible shorter one.
    pub fn normalize_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for i in 0..x.len().min(self.dim()) {
            let v = (x[i] - self.mean[i]) / self.std(i);
            out.push(v.clamp(-self.clip, self.clip));
        }
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(x.len());
        self.normalize_into(x, &mut out);
        out
    }

    /// Normalize `x[i]` against the statistics at slot `offset + i`; used
    /// for sub-ranges of a composite vector (critic extras).
    pub fn normalize_range(&self, x: &[f64], offset: usize) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, v)| {
                let j = offset + i;
                ((v - self.mean[j]) / self.std(j)).clamp(-self.clip, self.clip)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tracks_mean_and_std() {
        let mut n = RunningNorm::new(1);
        for k in 0..1000 {
            n.update(&[(k % 10) as f64]);
        }
        assert!((n.mean[0] - 4.5).abs() < 1e-9);
        let z = n.normalize(&[4.5]);
        assert!(z[0].abs() < 1e-9);
    }

    #[test]
    fn frozen_is_stable_and_deterministic() {
        let mut n = RunningNorm::new(2);
        n.update(&[1.0, 2.0]);
        n.update(&[3.0, 4.0]);
        n.freeze();
        let before = n.clone();
        n.update(&[100.0, 100.0]);
        assert_eq!(n, before);
        let a = n.normalize(&[0.5, 0.7]);
        let b = before.normalize(&[0.5, 0.7]);
        assert_eq!(a, b);
    }

    #[test]
    fn unit_before_enough_samples() {
        let n = RunningNorm::new(1);
        assert_eq!(n.normalize(&[3.0]), vec![3.0]);
    }
}
