//! Domain randomization draws.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Uniform ranges for each randomized quantity, adapted to the planar
/// character. A collapsed range (lo == hi) pins that quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomizationConfig {
    pub trunk_mass_delta: (f64, f64),
    pub base_com_offset: (f64, f64),
    pub link_mass_scale: (f64, f64),
    pub friction: (f64, f64),
    pub restitution: (f64, f64),
    pub kp_scale: (f64, f64),
    pub kd_scale: (f64, f64),
    pub motor_strength_scale: (f64, f64),
    /// Control delay in control ticks (one tick is 20 ms at 50 Hz).
    pub control_delay_ticks: (usize, usize),
}

impl Default for RandomizationConfig {
    fn default() -> Self {
        RandomizationConfig {
            trunk_mass_delta: (-1.0, 2.5),
            base_com_offset: (-0.05, 0.05),
            link_mass_scale: (0.9, 1.1),
            friction: (0.1, 1.1),
            restitution: (0.0, 0.1),
            kp_scale: (0.85, 1.15),
            kd_scale: (0.85, 1.15),
            motor_strength_scale: (0.9, 1.1),
            control_delay_ticks: (0, 5),
        }
    }
}

impl RandomizationConfig {
    /// All ranges collapsed to the nominal model: no randomization.
    pub fn disabled() -> Self {
        RandomizationConfig {
            trunk_mass_delta: (0.0, 0.0),
            base_com_offset: (0.0, 0.0),
            link_mass_scale: (1.0, 1.0),
            friction: (0.8, 0.8),
            restitution: (0.0, 0.0),
            kp_scale: (1.0, 1.0),
            kd_scale: (1.0, 1.0),
            motor_strength_scale: (1.0, 1.0),
            control_delay_ticks: (0, 0),
        }
    }
}

/// One sampled randomization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomizationDraw {
    pub trunk_mass_delta: f64,
    pub base_com_offset: [f64; 2],
    pub link_mass_scale: f64,
    pub friction: f64,
    pub restitution: f64,
    pub kp_scale: f64,
    pub kd_scale: f64,
    pub motor_strength_scale: f64,
    pub control_delay_ticks: usize,
}

impl RandomizationDraw {
    pub fn nominal() -> Self {
        RandomizationDraw {
            trunk_mass_delta: 0.0,
            base_com_offset: [0.0, 0.0],
            link_mass_scale: 1.0,
            friction: 0.8,
            restitution: 0.0,
            kp_scale: 1.0,
            kd_scale: 1.0,
            motor_strength_scale: 1.0,
            control_delay_ticks: 0,
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    if range.0 == range.1 {
        range.0
    } else {
        rng.gen_range(range.0..=range.1)
    }
}

/// Draw one randomization; deterministic for a given RNG state.
pub fn sample_randomization(config: &RandomizationConfig, rng: &mut ChaCha8Rng) -> RandomizationDraw {
    let trunk_mass_delta = uniform(rng, config.trunk_mass_delta);
    let base_com_offset = [uniform(rng, config.base_com_offset), uniform(rng, config.base_com_offset)];
    let link_mass_scale = uniform(rng, config.link_mass_scale);
    let friction = uniform(rng, config.friction);
    let restitution = uniform(rng, config.restitution);
    let kp_scale = uniform(rng, config.kp_scale);
    let kd_scale = uniform(rng, config.kd_scale);
    let motor_strength_scale = uniform(rng, config.motor_strength_scale);
    let control_delay_ticks = if config.control_delay_ticks.0 == config.control_delay_ticks.1 {
        config.control_delay_ticks.0
    } else {
        rng.gen_range(config.control_delay_ticks.0..=config.control_delay_ticks.1)
    };
    RandomizationDraw {
        trunk_mass_delta,
        base_com_offset,
        link_mass_scale,
        friction,
        restitution,
        kp_scale,
        kd_scale,
        motor_strength_scale,
        control_delay_ticks,
    }
}
