//! Small feed-forward function approximators with exact reverse-mode
//! gradients. No autodiff framework: the stack is one MLP shape (affine
//! layers, elu hidden activations, linear output), which keeps the backward
//! pass short and auditable.

pub mod adam;
pub mod checkpoint;
pub mod gaussian;
pub mod norm;

pub use adam::Adam;
pub use gaussian::GaussianHead;
pub use norm::RunningNorm;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("input dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("checkpoint format error: {0}")]
    Format(String),
    #[error("checkpoint tensor {0} missing")]
    MissingTensor(String),
    #[error("base checkpoint hash mismatch: expected {expected}, got {got}")]
    HashMismatch { expected: String, got: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[inline]
fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

#[inline]
fn elu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

/// Fully connected network; elu on hidden layers, linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    /// Row-major [out x in] per layer.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Mlp {
    /// Scaled-normal init; the final layer is scaled by `last_gain`
    /// (small for policy means, zero for adapter heads).
    pub fn new(sizes: &[usize], last_gain: f64, rng: &mut ChaCha8Rng) -> Self {
        assert!(sizes.len() >= 2, "need input and output sizes");
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..sizes.len() - 1 {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let gain = if l == sizes.len() - 2 { last_gain } else { 1.0 };
            let std = gain * (2.0 / (fan_in + fan_out) as f64).sqrt();
            let w: Vec<f64> = (0..fan_in * fan_out).map(|_| gauss(rng) * std).collect();
            weights.push(w);
            biases.push(vec![0.0; fan_out]);
        }
        Mlp { sizes: sizes.to_vec(), weights, biases }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    /// Plain forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NetError> {
        let mut cache = MlpCache::default();
        self.forward_cached(input, &mut cache)?;
        Ok(cache.output().to_vec())
    }

    /// Forward pass keeping every pre-activation for the backward pass.
    pub fn forward_cached(&self, input: &[f64], cache: &mut MlpCache) -> Result<(), NetError> {
        if input.len() != self.input_dim() {
            return Err(NetError::DimensionMismatch { expected: self.input_dim(), got: input.len() });
        }
        let layers = self.weights.len();
        cache.post.resize(layers + 1, Vec::new());
        cache.pre.resize(layers, Vec::new());
        cache.post[0].clear();
        cache.post[0].extend_from_slice(input);
        for l in 0..layers {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.weights[l];
            let b = &self.biases[l];
            let last = l == layers - 1;
            // Split borrows: read post[l], write pre[l] / post[l+1].
            let (head, tail) = cache.post.split_at_mut(l + 1);
            let x = &head[l];
            let pre = &mut cache.pre[l];
            pre.clear();
            for j in 0..fan_out {
                let row = &w[j * fan_in..(j + 1) * fan_in];
                let mut acc = b[j];
                for i in 0..fan_in {
                    acc += row[i] * x[i];
                }
                pre.push(acc);
            }
            let post = &mut tail[0];
            post.clear();
            if last {
                post.extend_from_slice(pre);
            } else {
                post.extend(pre.iter().map(|&z| elu(z)));
            }
        }
        Ok(())
    }

    /// Exact reverse-mode gradients for the cached forward pass. Accumulates
    /// into `grads` and optionally produces the input gradient.
    pub fn backward(
        &self,
        cache: &MlpCache,
        output_grad: &[f64],
        grads: &mut MlpGrads,
        input_grad: Option<&mut Vec<f64>>,
    ) {
        let layers = self.weights.len();
        debug_assert_eq!(cache.post.len(), layers + 1, "stale cache");
        let mut delta = output_grad.to_vec();
        for l in (0..layers).rev() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            if l != layers - 1 {
                for j in 0..fan_out {
                    delta[j] *= elu_grad(cache.pre[l][j]);
                }
            }
            let x = &cache.post[l];
            let gw = &mut grads.weights[l];
            let gb = &mut grads.biases[l];
            for j in 0..fan_out {
                gb[j] += delta[j];
                let row = &mut gw[j * fan_in..(j + 1) * fan_in];
                let dj = delta[j];
                for i in 0..fan_in {
                    row[i] += dj * x[i];
                }
            }
            if l > 0 || input_grad.is_some() {
                let w = &self.weights[l];
                let mut prev = vec![0.0; fan_in];
                for j in 0..fan_out {
                    let row = &w[j * fan_in..(j + 1) * fan_in];
                    let dj = delta[j];
                    for i in 0..fan_in {
                        prev[i] += dj * row[i];
                    }
                }
                delta = prev;
            }
        }
        if let Some(ig) = input_grad {
            ig.clear();
            ig.extend_from_slice(&delta);
        }
    }

    /// Visit all parameters mutably in a fixed order (optimizer contract).
    pub fn visit_params_mut(&mut self, f: &mut impl FnMut(&mut f64)) {
        for l in 0..self.weights.len() {
            for w in self.weights[l].iter_mut() {
                f(w);
            }
            for b in self.biases[l].iter_mut() {
                f(b);
            }
        }
    }

    pub fn visit_params(&self, f: &mut impl FnMut(f64)) {
        for l in 0..self.weights.len() {
            for w in self.weights[l].iter() {
                f(*w);
            }
            for b in self.biases[l].iter() {
                f(*b);
            }
        }
    }

    /// Zero the final layer (weights and bias), so the net outputs zero for
    /// every input; adapter heads start here.
    pub fn zero_last_layer(&mut self) {
        let l = self.weights.len() - 1;
        self.weights[l].fill(0.0);
        self.biases[l].fill(0.0);
    }
}

/// Standard normal via Box-Muller, driven by the deterministic stream.
pub fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Forward-pass cache: activations per layer.
#[derive(Debug, Clone, Default)]
pub struct MlpCache {
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.post.last().expect("forward_cached not called")
    }
}

/// Gradient accumulator matching an Mlp's layout.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpGrads {
    pub fn zeros_like(net: &Mlp) -> Self {
        MlpGrads {
            weights: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn reset(&mut self) {
        for w in &mut self.weights {
            w.fill(0.0);
        }
        for b in &mut self.biases {
            b.fill(0.0);
        }
    }

    pub fn add(&mut self, other: &MlpGrads) {
        for (a, b) in self.weights.iter_mut().zip(other.weights.iter()) {
            for (x, y) in a.iter_mut().zip(b.iter()) {
                *x += y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(other.biases.iter()) {
            for (x, y) in a.iter_mut().zip(b.iter()) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for w in &mut self.weights {
            for x in w.iter_mut() {
                *x *= s;
            }
        }
        for b in &mut self.biases {
            for x in b.iter_mut() {
                *x *= s;
            }
        }
    }

    pub fn visit_mut(&mut self, f: &mut impl FnMut(&mut f64)) {
        for l in 0..self.weights.len() {
            for w in self.weights[l].iter_mut() {
                f(w);
            }
            for b in self.biases[l].iter_mut() {
                f(b);
            }
        }
    }
}
