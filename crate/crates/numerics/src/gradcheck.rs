//! Central finite-difference verification of tape gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::graph::{Graph, OpKind, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Finite-difference step.
    pub step: f64,
    /// Coordinates sampled across all inputs (all of them when fewer exist).
    pub samples: usize,
    /// Denominator floor for the relative error, so near-zero gradients compare absolutely.
    pub abs_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            samples: 100,
            abs_floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CoordinateCheck {
    pub input: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub checked: usize,
    pub worst: Option<CoordinateCheck>,
    /// Set when `f` itself failed; the check then counts as failed.
    pub error: Option<String>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.max_rel_error <= self.tolerance
    }
}

fn evaluate<F>(f: &F, inputs: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    Ok(g.value(out).item())
}

fn analytic<F>(f: &F, inputs: &[Tensor]) -> Result<Vec<Tensor>>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let grads = g.backward(out)?;
    Ok(vars
        .iter()
        .map(|&v| grads.get(v).cloned().unwrap())
        .collect())
}

/// Compares tape gradients of scalar `f` at `inputs` with central differences.
pub fn grad_check<F>(f: F, inputs: &[Tensor], tolerance: f64, opts: GradCheckOptions) -> GradCheckReport
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        tolerance,
        checked: 0,
        worst: None,
        error: None,
    };
    let grads = match analytic(&f, inputs) {
        Ok(g) => g,
        Err(e) => {
            report.error = Some(e.to_string());
            return report;
        }
    };

    let total: usize = inputs.iter().map(Tensor::len).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut coords: Vec<usize> = if total <= opts.samples {
        (0..total).collect()
    } else {
        sample(&mut rng, total, opts.samples).into_vec()
    };
    coords.sort_unstable();

    let mut work = inputs.to_vec();
    for flat in coords {
        let (mut input, mut index) = (0, flat);
        while index >= work[input].len() {
            index -= work[input].len();
            input += 1;
        }
        let orig = work[input].data()[index];
        work[input].data_mut()[index] = orig + opts.step;
        let plus = evaluate(&f, &work);
        work[input].data_mut()[index] = orig - opts.step;
        let minus = evaluate(&f, &work);
        work[input].data_mut()[index] = orig;
        let (plus, minus) = match (plus, minus) {
            (Ok(p), Ok(m)) => (p, m),
            (Err(e), _) | (_, Err(e)) => {
                report.error = Some(e.to_string());
                return report;
            }
        };
        let numeric = (plus - minus) / (2.0 * opts.step);
        let a = grads[input].data()[index];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.abs_floor);
        report.checked += 1;
        if rel >= report.max_rel_error {
            report.max_rel_error = rel;
            report.worst = Some(CoordinateCheck {
                input,
                index,
                analytic: a,
                numeric,
                rel_error: rel,
            });
        }
    }
    report
}

/// Scalar function of graph inputs, as taken by [`grad_check`].
pub type LossFn = Box<dyn Fn(&mut Graph, &[Var]) -> Result<Var>>;

/// Builds a scalar loss exercising one registered op. Inputs are chosen so
/// every op sees generic values (positive for `Ln`).
pub fn op_case(kind: OpKind, rng: &mut ChaCha8Rng) -> (Vec<Tensor>, LossFn) {
    let a = Tensor::uniform(&[3, 4], -1.0, 1.0, rng);
    let b = Tensor::uniform(&[3, 4], -1.0, 1.0, rng);
    let w = Tensor::uniform(&[4, 5], -1.0, 1.0, rng);
    let row = Tensor::uniform(&[4], -1.0, 1.0, rng);
    // A fixed random projection makes every output coordinate matter.
    let probe = Tensor::uniform(&[3, 4], -1.0, 1.0, rng);
    let finish = move |g: &mut Graph, y: Var| -> Result<Var> {
        let shape = g.shape(y).to_vec();
        let n: usize = shape.iter().product();
        let p = Tensor::new(shape, probe.data().iter().cycle().take(n).copied().collect())?;
        let p = g.constant(p);
        let m = g.mul(y, p)?;
        g.sum(m)
    };
    match kind {
        OpKind::Add => (vec![a, row], Box::new(move |g, v| {
            let y = g.add(v[0], v[1])?;
            finish(g, y)
        })),
        OpKind::Sub => (vec![a, b], Box::new(move |g, v| {
            let y = g.sub(v[0], v[1])?;
            finish(g, y)
        })),
        OpKind::Mul => (vec![a, row], Box::new(move |g, v| {
            let y = g.mul(v[0], v[1])?;
            finish(g, y)
        })),
        OpKind::Scale => (vec![a], Box::new(move |g, v| {
            let y = g.scale(v[0], -1.7)?;
            finish(g, y)
        })),
        OpKind::MatMul => (vec![a, w], Box::new(move |g, v| {
            let y = g.matmul(v[0], v[1])?;
            finish(g, y)
        })),
        OpKind::Transpose => (vec![a], Box::new(move |g, v| {
            let y = g.transpose(v[0])?;
            finish(g, y)
        })),
        OpKind::Reshape => (vec![a], Box::new(move |g, v| {
            let y = g.reshape(v[0], &[2, 6])?;
            finish(g, y)
        })),
        OpKind::Concat => (vec![a, b], Box::new(move |g, v| {
            let r = g.concat(&[v[0], v[1]], 0)?;
            let c = g.concat(&[v[1], v[0]], 1)?;
            let x = finish(g, r)?;
            let y = finish(g, c)?;
            g.add(x, y)
        })),
        OpKind::Slice => (vec![a], Box::new(move |g, v| {
            let s = g.slice(v[0], 1, 1, 3)?;
            let t = g.slice(v[0], 0, 0, 2)?;
            let x = finish(g, s)?;
            let y = finish(g, t)?;
            g.add(x, y)
        })),
        OpKind::Softmax => (vec![a], Box::new(move |g, v| {
            let y = g.softmax(v[0])?;
            finish(g, y)
        })),
        OpKind::LayerNorm => (vec![a, row.clone(), row.map(|x| x * 0.5)], Box::new(move |g, v| {
            let y = g.layer_norm(v[0], Some(v[1]), Some(v[2]), 1e-5)?;
            finish(g, y)
        })),
        OpKind::Silu => (vec![a], Box::new(move |g, v| {
            let y = g.silu(v[0])?;
            finish(g, y)
        })),
        OpKind::Ln => (vec![a.map(|x| x.abs() + 0.5)], Box::new(move |g, v| {
            let y = g.ln(v[0])?;
            finish(g, y)
        })),
        OpKind::Embedding => (vec![Tensor::uniform(&[5, 4], -1.0, 1.0, rng)], Box::new(move |g, v| {
            let y = g.embedding(v[0], &[4, 0, 4])?;
            finish(g, y)
        })),
        OpKind::Sum => (vec![a], Box::new(move |g, v| {
            let sq = g.mul(v[0], v[0])?;
            g.sum(sq)
        })),
        OpKind::Mean => (vec![a], Box::new(move |g, v| {
            let sq = g.mul(v[0], v[0])?;
            g.mean(sq)
        })),
        OpKind::Mse => (vec![a, b], Box::new(move |g, v| g.mse(v[0], v[1]))),
    }
}

/// Runs [`grad_check`] on one case per registered op.
pub fn check_all_ops(seed: u64, tolerance: f64, opts: GradCheckOptions) -> Vec<(OpKind, GradCheckReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    OpKind::ALL
        .into_iter()
        .map(|kind| {
            let (inputs, f) = op_case(kind, &mut rng);
            (kind, grad_check(|g, v| f(g, v), &inputs, tolerance, opts))
        })
        .collect()
}
