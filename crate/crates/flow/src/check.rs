//! Finite-difference check of the full training loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srflow_conditioning::{Ablation, CoTRecord, ConditioningConfig, ConditioningInputs, Gender, Vocab};
use srflow_dsp::{NormStats, PitchStats, SAMPLE_RATE};
use srflow_numerics::{grad_check, Bound, GradCheckOptions, GradCheckReport, Graph, NumericsError, Tensor, Var};

use crate::config::DiTConfig;
use crate::dit::{forward_graph, frame_positions};
use crate::error::Result;
use crate::sample::{gaussian, make_flow_sample};
use crate::state::{ModelState, OptimConfig};

/// Depth-two network small enough for exhaustive differencing.
pub fn check_config() -> DiTConfig {
    DiTConfig {
        depth: 2,
        model_dim: 8,
        num_heads: 2,
        latent_dim: 4,
        max_frames: 4,
        cond_width: 6,
        mlp_ratio: 2,
        time_embed_dim: 6,
        seed: 11,
    }
}

/// Compares the tape gradient of the rectified-flow loss of one random item
/// with central differences, over `samples` coordinates drawn from every
/// parameter. Parameters are moved off their initial values first so that
/// zero-initialised projections and unit norms are exercised too.
pub fn training_loss_grad_check(samples: usize, tolerance: f64, seed: u64) -> Result<GradCheckReport> {
    let dit = check_config();
    let cond = ConditioningConfig {
        width: dit.cond_width,
        fourier_k: 4,
    };
    let record = CoTRecord::new(
        Gender::Female,
        "calm",
        "pink noise",
        vec!["S1".into(), "S3".into()],
        vec!["low bandwidth".into()],
    );
    let vocab = Vocab::from_records([&record]);
    let stats = NormStats {
        id: "unit".into(),
        mean: vec![0.0; dit.latent_dim],
        std: vec![1.0; dit.latent_dim],
    };
    let state = ModelState::new(dit, cond, Ablation::default(), vocab, stats, OptimConfig::default(), seed)?;
    let pitch = PitchStats {
        median_f0_hz: 180.0,
        log_f0_std: 0.05,
        voiced_fraction: 0.8,
    };
    let inputs = ConditioningInputs::new(
        &record,
        &state.vocab,
        2000.0,
        SAMPLE_RATE,
        &pitch,
        &state.cond,
        &state.ablation,
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = state.params.names();
    let values: Vec<Tensor> = names
        .iter()
        .map(|n| {
            let t = state.params.get(n).expect("listed parameter exists");
            let data = t.data().iter().map(|v| v + rng.random_range(-0.3..0.3)).collect();
            Tensor::new(t.shape().to_vec(), data).expect("shape is unchanged")
        })
        .collect();
    let frames = 3;
    let shape = [frames, dit.latent_dim];
    let x1 = gaussian(&shape, &mut rng);
    let lr = gaussian(&shape, &mut rng);
    let frame_pos = frame_positions(frames, dit.latent_dim, frames * dit.latent_dim);
    let sample = make_flow_sample(&x1, &mut rng);

    let f = |g: &mut Graph, vars: &[Var]| {
        let p = Bound::from_vars(names.iter().cloned().zip(vars.iter().copied()));
        let xt = g.constant(sample.xt.clone());
        let lr = g.constant(lr.clone());
        let v = forward_graph(g, &p, &state.dit, &state.cond, xt, lr, sample.t, &frame_pos, &inputs)
            .map_err(|e| NumericsError::Optimizer(e.to_string()))?;
        let target = g.constant(sample.target_velocity.clone());
        g.mse(v, target)
    };
    let opts = GradCheckOptions {
        samples,
        seed,
        ..GradCheckOptions::default()
    };
    Ok(grad_check(f, &values, tolerance, opts))
}
