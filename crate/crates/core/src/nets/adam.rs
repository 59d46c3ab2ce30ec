//! Adam with a flat state vector; parameters are visited in the fixed order
//! the nets define, so updates are deterministic.

#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(param_count: usize) -> Self {
        Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; param_count], v: vec![0.0; param_count], t: 0 }
    }

    /// Apply one step. `params` and `grads` walk the same fixed order; the
    /// closure contract is that both visit exactly `param_count` scalars.
    pub fn step(
        &mut self,
        lr: f64,
        visit: impl FnOnce(&mut dyn FnMut(&mut f64, f64)),
    ) {
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let (m, v) = (&mut self.m, &mut self.v);
        let mut idx = 0;
        visit(&mut |p: &mut f64, g: f64| {
            m[idx] = b1 * m[idx] + (1.0 - b1) * g;
            v[idx] = b2 * v[idx] + (1.0 - b2) * g * g;
            let mhat = m[idx] / b1t;
            let vhat = v[idx] / b2t;
            *p -= lr * mhat / (vhat.sqrt() + eps);
            idx += 1;
        });
        debug_assert_eq!(idx, self.m.len(), "visited {} of {} params", idx, self.m.len());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descends_a_quadratic() {
        // f(p) = (p - 3)^2, gradient 2(p - 3).
        let mut p = 0.0_f64;
        let mut adam = Adam::new(1);
        for _ in 0..2000 {
            let g = 2.0 * (p - 3.0);
            adam.step(0.05, |f| f(&mut p, g));
        }
        assert!((p - 3.0).abs() < 1e-3, "p = {p}");
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut p = [0.5_f64, -0.2];
            let mut adam = Adam::new(2);
            for k in 0..100 {
                let g0 = p[0] * 0.3 + k as f64 * 1e-3;
                let g1 = -p[1];
                adam.step(1e-2, |f| {
                    f(&mut p[0], g0);
                    f(&mut p[1], g1);
                });
            }
            [p[0].to_bits(), p[1].to_bits()]
        };
        assert_eq!(run(), run());
    }
}
