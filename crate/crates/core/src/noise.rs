//! Colored (1/f^α) noise by discrete fractional integration of white noise.
//!
//! Impulse response `h_0 = 1`, `h_m = h_{m-1} (α/2 + m - 1) / m`. For α = 2
//! every `h_m` is 1 and the generator is a random walk (-6 dB/octave).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::topology::{connectivity_layers, NodeId, Topology};

/// Streaming fractional integrator. Raw output is not standardized.
#[derive(Debug, Clone)]
pub struct ColoredNoiseGen {
    alpha: f64,
    coeffs: Vec<f64>,
    innovations: Vec<f64>,
    rng: ChaCha8Rng,
}

impl ColoredNoiseGen {
    pub fn new(alpha: f64, rng: ChaCha8Rng) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::invalid(format!("alpha must be non-negative, got {alpha}")));
        }
        Ok(ColoredNoiseGen { alpha, coeffs: vec![1.0], innovations: Vec::new(), rng })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Impulse response coefficient `h_m`, extending the table as needed.
    fn coeff(&mut self, m: usize) -> f64 {
        while self.coeffs.len() <= m {
            let j = self.coeffs.len() as f64;
            let prev = *self.coeffs.last().expect("h_0 present");
            self.coeffs.push(prev * (self.alpha / 2.0 + j - 1.0) / j);
        }
        self.coeffs[m]
    }

    pub fn next_raw(&mut self) -> f64 {
        let w: f64 = StandardNormal.sample(&mut self.rng);
        self.innovations.push(w);
        let n = self.innovations.len();
        self.coeff(n - 1);
        // x_n = sum_m h_m w_{n-m}
        self.coeffs[..n].iter().zip(self.innovations.iter().rev()).map(|(h, w)| h * w).sum()
    }
}

/// Rescales `xs` in place to sample mean 0 and population std 1.
pub fn standardize(xs: &mut [f64]) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    for x in xs.iter_mut() {
        *x = if sd > 0.0 { (*x - mean) / sd } else { 0.0 };
    }
}

/// `n` samples of standardized colored noise.
pub fn generate(n: usize, alpha: f64, seed: u64) -> Result<Vec<f64>> {
    generate_with(n, alpha, ChaCha8Rng::seed_from_u64(seed))
}

pub fn generate_with(n: usize, alpha: f64, rng: ChaCha8Rng) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::invalid("noise series needs at least 2 samples"));
    }
    let mut gen = ColoredNoiseGen::new(alpha, rng)?;
    let mut xs: Vec<f64> = (0..n).map(|_| gen.next_raw()).collect();
    standardize(&mut xs);
    Ok(xs)
}

/// The node farthest from the gateway; the smallest id wins ties.
pub fn malicious_node(topo: &Topology) -> Result<NodeId> {
    let layers = connectivity_layers(topo)?;
    let far = layers.max_layer();
    let id = layers.as_slice().iter().position(|&l| l == far).expect("max layer is attained");
    Ok(id as NodeId)
}
