//! Straight-line probability paths, the regression loss and the Euler sampler.

use rand::Rng;
use rand_distr::StandardNormal;
use srflow_numerics::Tensor;

use crate::error::{FlowError, Result};

/// One point on the straight path from noise `x0` to data `x1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSample {
    pub x0: Tensor,
    pub x1: Tensor,
    pub t: f64,
    pub xt: Tensor,
    pub target_velocity: Tensor,
}

impl FlowSample {
    /// Builds the sample for given endpoints and time.
    pub fn from_parts(x0: Tensor, x1: Tensor, t: f64) -> Result<Self> {
        if x0.shape() != x1.shape() {
            return Err(FlowError::FrameMismatch(format!(
                "noise shape {:?} vs target shape {:?}",
                x0.shape(),
                x1.shape()
            )));
        }
        let xt_data = x0
            .data()
            .iter()
            .zip(x1.data())
            .map(|(&a, &b)| t * b + (1.0 - t) * a)
            .collect();
        let v_data = x0.data().iter().zip(x1.data()).map(|(&a, &b)| b - a).collect();
        let shape = x1.shape().to_vec();
        Ok(Self {
            xt: Tensor::new(shape.clone(), xt_data)?,
            target_velocity: Tensor::new(shape, v_data)?,
            x0,
            x1,
            t,
        })
    }
}

/// Standard normal noise of the given shape.
pub fn gaussian<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape and length agree")
}

/// Fresh noise endpoint and uniform time for target `x1`.
pub fn make_flow_sample<R: Rng + ?Sized>(x1: &Tensor, rng: &mut R) -> FlowSample {
    let x0 = gaussian(x1.shape(), rng);
    let t = rng.random_range(0.0..=1.0);
    FlowSample::from_parts(x0, x1.clone(), t).expect("shapes agree")
}

/// Mean squared difference over all entries.
pub fn rf_loss(predicted: &Tensor, target: &Tensor) -> Result<f64> {
    if predicted.shape() != target.shape() {
        return Err(FlowError::FrameMismatch(format!(
            "predicted shape {:?} vs target shape {:?}",
            predicted.shape(),
            target.shape()
        )));
    }
    let sum: f64 = predicted
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / predicted.len() as f64)
}

/// A velocity `v(x, t)` over tensors of one shape.
pub trait VelocityField {
    fn velocity(&mut self, x: &Tensor, t: f64) -> Result<Tensor>;
}

impl<F> VelocityField for F
where
    F: FnMut(&Tensor, f64) -> Result<Tensor>,
{
    fn velocity(&mut self, x: &Tensor, t: f64) -> Result<Tensor> {
        self(x, t)
    }
}

/// Integrates `dx/dt = v(x, t)` from `t = 0` to `1` with `steps` forward
/// Euler steps at `t_i = i / steps`.
pub fn euler_sample<V: VelocityField + ?Sized>(field: &mut V, x0: &Tensor, steps: usize) -> Result<Tensor> {
    if steps == 0 {
        return Err(FlowError::Config("sampler needs at least one step".into()));
    }
    let dt = 1.0 / steps as f64;
    let mut x = x0.clone();
    for i in 0..steps {
        let v = field.velocity(&x, i as f64 / steps as f64)?;
        if v.shape() != x.shape() {
            return Err(FlowError::FrameMismatch(format!(
                "velocity shape {:?} vs state shape {:?}",
                v.shape(),
                x.shape()
            )));
        }
        for (a, b) in x.data_mut().iter_mut().zip(v.data()) {
            *a += dt * b;
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn endpoints_are_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x1 = gaussian(&[3, 4], &mut rng);
        let x0 = gaussian(&[3, 4], &mut rng);
        assert_eq!(FlowSample::from_parts(x0.clone(), x1.clone(), 1.0).unwrap().xt, x1);
        assert_eq!(FlowSample::from_parts(x0.clone(), x1.clone(), 0.0).unwrap().xt, x0);
    }

    #[test]
    fn loss_closed_forms() {
        let a = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(rf_loss(&a, &a).unwrap(), 0.0);
        assert_eq!(rf_loss(&a.map(|v| v + 1.0), &a).unwrap(), 1.0);
        assert!(rf_loss(&a, &Tensor::zeros(&[4])).is_err());
    }

    #[test]
    fn zero_steps_rejected() {
        let mut f = |x: &Tensor, _t: f64| Ok(x.clone());
        assert!(euler_sample(&mut f, &Tensor::zeros(&[1]), 0).is_err());
    }
}
