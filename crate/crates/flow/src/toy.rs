//! Two-dimensional rectified flow on a mixture of eight Gaussians, used to
//! check the objective and sampler independently of audio.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use srflow_numerics::{sinusoidal_features, AdamWConfig, AdamWState, GradMap, Graph, ParamStore, Tensor};

use crate::error::{FlowError, Result};
use crate::sample::{euler_sample, gaussian};

/// The eight mixture components on a circle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EightGaussians {
    pub radius: f64,
    pub sigma: f64,
}

impl Default for EightGaussians {
    fn default() -> Self {
        Self {
            radius: 4.0,
            sigma: 0.25,
        }
    }
}

impl EightGaussians {
    pub fn centers(&self) -> [[f64; 2]; 8] {
        std::array::from_fn(|k| {
            let a = 2.0 * PI * k as f64 / 8.0;
            [self.radius * a.cos(), self.radius * a.sin()]
        })
    }

    /// `[n, 2]` samples with equally likely components.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Tensor {
        let c = self.centers();
        let mut data = Vec::with_capacity(2 * n);
        for _ in 0..n {
            let k = rng.random_range(0..8);
            for center in c[k] {
                let e: f64 = rng.sample(StandardNormal);
                data.push(center + self.sigma * e);
            }
        }
        Tensor::new(vec![n, 2], data).expect("n rows of two")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyConfig {
    pub hidden: usize,
    pub time_dim: usize,
    pub batch: usize,
    pub steps: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            time_dim: 16,
            batch: 256,
            steps: 3000,
            lr: 2e-3,
            seed: 0,
        }
    }
}

/// MLP velocity field `v(x, t)` on the plane.
#[derive(Debug, Clone)]
pub struct ToyFlow {
    pub config: ToyConfig,
    pub params: ParamStore,
}

const LAYERS: [&str; 3] = ["l1", "l2", "l3"];

impl ToyFlow {
    pub fn new(config: ToyConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new();
        let dims = [2 + config.time_dim, config.hidden, config.hidden, 2];
        for (i, name) in LAYERS.iter().enumerate() {
            let (fan_in, out) = (dims[i], dims[i + 1]);
            params.insert(format!("{name}.w"), Tensor::fan_in_uniform(&[fan_in, out], fan_in, &mut rng));
            params.insert(format!("{name}.b"), Tensor::zeros(&[out]));
        }
        Self { config, params }
    }

    fn inputs(&self, x: &Tensor, t: &[f64]) -> Result<Tensor> {
        let d = self.config.time_dim;
        let mut data = Vec::with_capacity(x.rows() * (2 + d));
        for (r, &ti) in t.iter().enumerate() {
            data.extend_from_slice(x.row(r));
            data.extend(sinusoidal_features(ti * 100.0, d, 1000.0));
        }
        Ok(Tensor::new(vec![x.rows(), 2 + d], data)?)
    }

    fn forward(&self, g: &mut Graph, p: &srflow_numerics::Bound, input: Tensor) -> Result<srflow_numerics::Var> {
        let mut h = g.constant(input);
        for (i, name) in LAYERS.iter().enumerate() {
            h = g.linear(h, p.var(&format!("{name}.w"))?, Some(p.var(&format!("{name}.b"))?))?;
            if i + 1 < LAYERS.len() {
                h = g.silu(h)?;
            }
        }
        Ok(h)
    }

    /// Velocity for every row of `x` at a shared time `t`.
    pub fn velocity(&self, x: &Tensor, t: f64) -> Result<Tensor> {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g);
        let input = self.inputs(x, &vec![t; x.rows()])?;
        let v = self.forward(&mut g, &p, input)?;
        Ok(g.value(v).clone())
    }

    /// Trains on fresh mixture samples; returns the loss of every step.
    pub fn train(&mut self, target: &EightGaussians) -> Result<Vec<f64>> {
        let c = self.config;
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed.wrapping_add(1));
        let mut opt = AdamWState::new(AdamWConfig {
            lr: c.lr,
            ..AdamWConfig::default()
        });
        let mut losses = Vec::with_capacity(c.steps);
        for step in 0..c.steps {
            let x1 = target.sample(c.batch, &mut rng);
            let x0 = gaussian(&[c.batch, 2], &mut rng);
            let t: Vec<f64> = (0..c.batch).map(|_| rng.random_range(0.0..=1.0)).collect();
            let mut xt = Vec::with_capacity(2 * c.batch);
            let mut vt = Vec::with_capacity(2 * c.batch);
            for r in 0..c.batch {
                for k in 0..2 {
                    let (a, b) = (x0.at2(r, k), x1.at2(r, k));
                    xt.push(t[r] * b + (1.0 - t[r]) * a);
                    vt.push(b - a);
                }
            }
            let xt = Tensor::new(vec![c.batch, 2], xt)?;
            let mut g = Graph::new();
            let p = self.params.bind(&mut g);
            let v = self.forward(&mut g, &p, self.inputs(&xt, &t)?)?;
            let target_v = g.constant(Tensor::new(vec![c.batch, 2], vt)?);
            let loss = g.mse(v, target_v)?;
            let value = g.value(loss).item();
            if !value.is_finite() {
                return Err(FlowError::NonFiniteLoss {
                    loss: value,
                    step: step as u64,
                    seed: c.seed,
                    items: vec!["eight-gaussians".into()],
                });
            }
            losses.push(value);
            let grads = g.backward(loss)?;
            let mut acc = GradMap::new();
            p.accumulate_into(&grads, &mut acc, 1.0);
            // Cosine decay to a tenth of the initial rate.
            let frac = step as f64 / c.steps as f64;
            let lr = c.lr * (0.1 + 0.9 * 0.5 * (1.0 + (PI * frac).cos()));
            opt.step(&mut self.params, &acc, Some(lr))?;
        }
        Ok(losses)
    }

    /// `n` samples integrated from Gaussian noise with `steps` Euler steps.
    pub fn sample(&self, n: usize, steps: usize, seed: u64) -> Result<Tensor> {
        let x0 = gaussian(&[n, 2], &mut ChaCha8Rng::seed_from_u64(seed));
        let mut field = |x: &Tensor, t: f64| self.velocity(x, t);
        euler_sample(&mut field, &x0, steps)
    }
}

/// Per-mode statistics of a sample set.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeReport {
    /// Fraction of samples within `3 sigma` of each centre.
    pub fractions: [f64; 8],
    /// Mean of the samples assigned to each centre minus the centre; `NaN`
    /// for a mode that captured nothing.
    pub mean_errors: [[f64; 2]; 8],
}

impl ModeReport {
    pub fn measure(target: &EightGaussians, samples: &Tensor) -> Self {
        let c = target.centers();
        let mut counts = [0usize; 8];
        let mut sums = [[0.0; 2]; 8];
        for r in 0..samples.rows() {
            let x = samples.row(r);
            for (k, ck) in c.iter().enumerate() {
                if ((x[0] - ck[0]).powi(2) + (x[1] - ck[1]).powi(2)).sqrt() <= 3.0 * target.sigma {
                    counts[k] += 1;
                    sums[k][0] += x[0];
                    sums[k][1] += x[1];
                }
            }
        }
        let n = samples.rows().max(1) as f64;
        Self {
            fractions: std::array::from_fn(|k| counts[k] as f64 / n),
            mean_errors: std::array::from_fn(|k| {
                let m = counts[k] as f64;
                [sums[k][0] / m - c[k][0], sums[k][1] / m - c[k][1]]
            }),
        }
    }

    pub fn min_fraction(&self) -> f64 {
        self.fractions.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest absolute coordinate error; infinite when a mode is empty.
    pub fn max_mean_error(&self) -> f64 {
        self.mean_errors
            .iter()
            .flatten()
            .map(|e| if e.is_finite() { e.abs() } else { f64::INFINITY })
            .fold(0.0, f64::max)
    }
}
