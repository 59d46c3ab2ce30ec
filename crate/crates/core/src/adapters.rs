//! Phase and tracking adapter composition.
//!
//! The phase adapter emits a delta phase interval, squashed into
//! `[-lower * dphi, +upper * dphi]` around zero so the neutral raw output
//! recovers the base interval exactly. The tracking adapter's compensation
//! is scaled by that delta, so a zero delta degenerates to the base action
//! to machine precision.

/// Map a raw (unbounded) head output to a bounded delta phase interval.
/// tanh-squashed, with separate negative/positive scales so that raw = 0
/// maps to exactly zero delta.
pub fn squash_dphi_delta(raw: f64, dphi_base: f64, lower_factor: f64, upper_factor: f64) -> f64 {
    let t = raw.tanh();
    if t < 0.0 {
        t * lower_factor * dphi_base
    } else {
        t * upper_factor * dphi_base
    }
}

/// Adaptive phase interval from the raw phase-adapter output.
/// Returns (dphi_delta, dphi_ada).
pub fn adapt_phase(
    raw: f64,
    dphi_base: f64,
    lower_factor: f64,
    upper_factor: f64,
) -> (f64, f64) {
    let delta = squash_dphi_delta(raw, dphi_base, lower_factor, upper_factor);
    (delta, dphi_base + delta)
}

/// Compose the executed action: base plus delta-scaled compensation.
pub fn adapt_action(base_action: &[f64], dphi_delta: f64, compensation: &[f64]) -> Vec<f64> {
    base_action
        .iter()
        .zip(compensation.iter())
        .map(|(a, c)| a + dphi_delta * c)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    #[test]
    fn clamp_bounds_match_contract() {
        let dphi = 0.02;
        // Saturated low: delta = -0.75 * dphi, ada = 0.25 * dphi.
        let (delta, ada) = adapt_phase(-50.0, dphi, 0.75, 1.0);
        assert!((delta - (-0.015)).abs() < 1e-9);
        assert!((ada - 0.005).abs() < 1e-9);
        // Neutral: raw 0 maps to the base interval exactly.
        let (delta, ada) = adapt_phase(0.0, dphi, 0.75, 1.0);
        assert_eq!(delta, 0.0);
        assert_eq!(ada, dphi);
        // Saturated high: ada = 2 * dphi.
        let (_, ada) = adapt_phase(50.0, dphi, 0.75, 1.0);
        assert!((ada - 0.04).abs() < 1e-9);
    }

    #[test]
    fn clamp_holds_over_a_million_draws() {
        let mut rng = seeded(3);
        let dphi = 0.008;
        for _ in 0..1_000_000 {
            let raw: f64 = rng.gen_range(-100.0..100.0);
            let (_, ada) = adapt_phase(raw, dphi, 0.75, 1.0);
            assert!(ada >= 0.25 * dphi - 1e-15 && ada <= 2.0 * dphi + 1e-15);
            assert!(ada > 0.0);
        }
    }

    #[test]
    fn zero_delta_degenerates_to_base() {
        let base = vec![0.3, -0.2, 0.9];
        let comp = vec![123.0, -55.0, 7.0];
        let out = adapt_action(&base, 0.0, &comp);
        for (a, b) in out.iter().zip(base.iter()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn composition_is_bilinear() {
        let base = vec![0.1, 0.2];
        let comp = vec![1.0, 1.0];
        let out = adapt_action(&base, 0.01, &comp);
        assert!((out[0] - 0.11).abs() < 1e-15);
        assert!((out[1] - 0.21).abs() < 1e-15);
        // Doubling the delta doubles the compensation term.
        let twice = adapt_action(&base, 0.02, &comp);
        for j in 0..2 {
            let c1 = out[j] - base[j];
            let c2 = twice[j] - base[j];
            assert!((c2 - 2.0 * c1).abs() < 1e-15);
        }
    }
}
