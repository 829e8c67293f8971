use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srflow_conditioning::{Ablation, CoTRecord, ConditioningConfig, ConditioningInputs, Gender, Vocab};
use srflow_dsp::{
    degrade, mdct_encode, synth_utterance, synth::BASE_FORMANTS, DegradationSpec, NoiseKind, NormStats,
    SyntheticUtteranceSpec, Waveform, SAMPLE_RATE,
};
use srflow_flow::dit::{forward_graph, frame_positions};
use srflow_flow::{
    batch_loss, dit_forward, euler_sample, gaussian, init_params, make_flow_sample, prepare_item, restore, rf_loss,
    train_step, train_step_on, DiTConfig, FlowError, FlowSample, ModelState, OptimConfig, Schedule, TrainItem,
};
use srflow_numerics::{grad_check, Bound, GradCheckOptions, Graph, ParamStore, Tensor};

fn tiny_config() -> DiTConfig {
    DiTConfig {
        depth: 2,
        model_dim: 16,
        num_heads: 2,
        latent_dim: 8,
        max_frames: 6,
        cond_width: 8,
        mlp_ratio: 2,
        time_embed_dim: 8,
        seed: 11,
    }
}

fn cond_config(width: usize) -> ConditioningConfig {
    ConditioningConfig { width, fourier_k: 4 }
}

fn record(content: &[&str]) -> CoTRecord {
    CoTRecord::new(
        Gender::Female,
        "calm",
        "street noise",
        content.iter().map(|s| s.to_string()).collect(),
        vec!["low bandwidth".into()],
    )
}

fn vocab() -> Vocab {
    Vocab::from_records([&record(&["S0", "S1", "S2", "S3"])])
}

fn unit_stats(dim: usize) -> NormStats {
    NormStats {
        id: "unit".into(),
        mean: vec![0.0; dim],
        std: vec![1.0; dim],
    }
}

fn tiny_state(dit: DiTConfig, stats: NormStats) -> ModelState {
    ModelState::new(
        dit,
        cond_config(dit.cond_width),
        Ablation::default(),
        vocab(),
        stats,
        OptimConfig {
            lr: 3e-3,
            ..OptimConfig::default()
        },
        5,
    )
    .unwrap()
}

fn inputs(state: &ModelState, r: &CoTRecord) -> ConditioningInputs {
    let pitch = srflow_dsp::PitchStats {
        median_f0_hz: 180.0,
        log_f0_std: 0.05,
        voiced_fraction: 0.8,
    };
    ConditioningInputs::new(r, &state.vocab, 2000.0, SAMPLE_RATE, &pitch, &state.cond, &state.ablation).unwrap()
}

fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
    gaussian(shape, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn item(state: &ModelState, frames: usize, seed: u64) -> TrainItem {
    let l = state.dit.latent_dim;
    TrainItem {
        id: format!("item{seed}"),
        x1: random_tensor(&[frames, l], seed),
        lr: random_tensor(&[frames, l], seed + 1000),
        frame_pos: frame_positions(frames, l, frames * l),
        inputs: inputs(state, &record(&["S1", "S3"])),
    }
}

proptest! {
    #[test]
    fn flow_sample_matches_interpolation_oracle(seed in 0u64..1000, rows in 1usize..5, cols in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x1 = gaussian(&[rows, cols], &mut rng);
        let s = make_flow_sample(&x1, &mut rng);
        prop_assert!((0.0..=1.0).contains(&s.t));
        prop_assert_eq!(&s.x1, &x1);
        for i in 0..x1.len() {
            let (a, b) = (s.x0.data()[i], x1.data()[i]);
            prop_assert_eq!(s.xt.data()[i], s.t * b + (1.0 - s.t) * a);
            prop_assert_eq!(s.target_velocity.data()[i], b - a);
        }
    }

    #[test]
    fn rf_loss_matches_two_pass_mean(seed in 0u64..1000, n in 1usize..40) {
        let a = random_tensor(&[n], seed);
        let b = random_tensor(&[n], seed + 1);
        let mut sq = Vec::new();
        for i in 0..n {
            sq.push((a.data()[i] - b.data()[i]).powi(2));
        }
        let mut total = 0.0;
        for v in &sq {
            total += v;
        }
        let oracle = total / n as f64;
        let got = rf_loss(&a, &b).unwrap();
        prop_assert!((got - oracle).abs() <= 1e-12);
        prop_assert!(got >= 0.0);
    }
}

#[test]
fn flow_sample_endpoints_are_bitwise() {
    let x0 = random_tensor(&[3, 2], 1);
    let x1 = random_tensor(&[3, 2], 2);
    assert_eq!(FlowSample::from_parts(x0.clone(), x1.clone(), 1.0).unwrap().xt, x1);
    assert_eq!(FlowSample::from_parts(x0.clone(), x1.clone(), 0.0).unwrap().xt, x0);
}

#[test]
fn euler_constant_field_is_exact() {
    let x0 = random_tensor(&[4, 3], 3);
    let x1 = random_tensor(&[4, 3], 4);
    let v: Vec<f64> = x1.data().iter().zip(x0.data()).map(|(b, a)| b - a).collect();
    let v = Tensor::new(vec![4, 3], v).unwrap();
    for steps in [1, 4, 32] {
        let mut field = |_x: &Tensor, _t: f64| Ok(v.clone());
        let out = euler_sample(&mut field, &x0, steps).unwrap();
        assert!(out.max_abs_diff(&x1) <= 1e-9, "steps {steps}");
    }
}

#[test]
fn euler_decay_matches_recurrence() {
    let x0 = random_tensor(&[5], 5);
    for steps in [1, 4, 32] {
        let mut field = |x: &Tensor, _t: f64| Ok(x.map(|v| -v));
        let out = euler_sample(&mut field, &x0, steps).unwrap();
        let factor = (1.0 - 1.0 / steps as f64).powi(steps as i32);
        assert!(out.max_abs_diff(&x0.map(|v| v * factor)) <= 1e-9);
    }
}

#[test]
fn euler_visits_uniform_times() {
    let mut seen = Vec::new();
    let mut field = |x: &Tensor, t: f64| {
        seen.push(t);
        Ok(Tensor::zeros(x.shape()))
    };
    euler_sample(&mut field, &Tensor::zeros(&[1]), 4).unwrap();
    assert_eq!(seen, vec![0.0, 0.25, 0.5, 0.75]);
}

#[test]
fn dit_output_shape_and_determinism() {
    let state = tiny_state(tiny_config(), unit_stats(8));
    let it = item(&state, 14, 1);
    let run = || {
        dit_forward(&state.params, &state.dit, &state.cond, &it.x1, 0.3, &it.lr, &it.frame_pos, &it.inputs).unwrap()
    };
    let a = run();
    assert_eq!(a.shape(), it.x1.shape());
    assert_eq!(a, run());
    assert!(a.all_finite());
}

#[test]
fn dit_rejects_misaligned_frames() {
    let state = tiny_state(tiny_config(), unit_stats(8));
    let it = item(&state, 5, 1);
    let short = random_tensor(&[4, 8], 9);
    let err = dit_forward(&state.params, &state.dit, &state.cond, &it.x1, 0.3, &short, &it.frame_pos, &it.inputs);
    assert!(matches!(err, Err(FlowError::FrameMismatch(_))));
    let err = dit_forward(&state.params, &state.dit, &state.cond, &it.x1, 0.3, &it.lr, &it.frame_pos[1..], &it.inputs);
    assert!(matches!(err, Err(FlowError::FrameMismatch(_))));
}

#[test]
fn zeroed_cross_attention_values_ignore_semantic_tokens() {
    let mut state = tiny_state(tiny_config(), unit_stats(8));
    let it = item(&state, 6, 2);
    let other = inputs(&state, &record(&["S0", "S2", "S2"]));
    let forward = |s: &ModelState, c: &ConditioningInputs| {
        dit_forward(&s.params, &s.dit, &s.cond, &it.x1, 0.6, &it.lr, &it.frame_pos, c).unwrap()
    };
    assert!(forward(&state, &it.inputs).max_abs_diff(&forward(&state, &other)) > 0.0);
    for i in 0..state.dit.depth {
        for suffix in ["w", "b"] {
            let t = state.params.get_mut(&format!("dit.block{i}.xattn.v.{suffix}")).unwrap();
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }
    assert_eq!(forward(&state, &it.inputs).max_abs_diff(&forward(&state, &other)), 0.0);
}

#[test]
fn batch_loss_ignores_item_order() {
    let state = tiny_state(tiny_config(), unit_stats(8));
    let items: Vec<TrainItem> = (0..3).map(|i| item(&state, 4 + i, i as u64)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let samples: Vec<FlowSample> = items.iter().map(|i| make_flow_sample(&i.x1, &mut rng)).collect();
    let fwd: Vec<_> = items.iter().zip(&samples).collect();
    let rev: Vec<_> = fwd.iter().rev().copied().collect();
    let a = batch_loss(&state, &fwd, None).unwrap();
    let b = batch_loss(&state, &rev, None).unwrap();
    assert!((a - b).abs() < 1e-12);
    // Each item's velocity is unaffected by its batch mates.
    let solo: f64 = fwd.iter().map(|p| batch_loss(&state, &[*p], None).unwrap()).sum::<f64>() / 3.0;
    assert!((a - solo).abs() < 1e-12);
}

/// The full training loss through a depth-two network, differentiated with
/// respect to every parameter at once.
#[test]
fn training_loss_gradient_passes_grad_check() {
    let dit = DiTConfig {
        model_dim: 8,
        latent_dim: 4,
        max_frames: 4,
        cond_width: 6,
        time_embed_dim: 6,
        ..tiny_config()
    };
    let state = tiny_state(dit, unit_stats(4));
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    // Move every parameter off its initial value so zero-initialised
    // projections and unit norms are exercised too.
    let names = state.params.names();
    let values: Vec<Tensor> = names
        .iter()
        .map(|n| {
            let t = state.params.get(n).unwrap();
            let data = t.data().iter().map(|v| v + rng.random_range(-0.3..0.3)).collect();
            Tensor::new(t.shape().to_vec(), data).unwrap()
        })
        .collect();
    let it = item(&state, 3, 4);
    let sample = make_flow_sample(&it.x1, &mut rng);
    let f = |g: &mut Graph, vars: &[srflow_numerics::Var]| {
        let p = Bound::from_vars(names.iter().cloned().zip(vars.iter().copied()));
        let xt = g.constant(sample.xt.clone());
        let lr = g.constant(it.lr.clone());
        let v = forward_graph(g, &p, &state.dit, &state.cond, xt, lr, sample.t, &it.frame_pos, &it.inputs)
            .map_err(|e| srflow_numerics::NumericsError::Optimizer(e.to_string()))?;
        let target = g.constant(sample.target_velocity.clone());
        g.mse(v, target)
    };
    let opts = GradCheckOptions {
        samples: 400,
        ..GradCheckOptions::default()
    };
    let report = grad_check(f, &values, 1e-4, opts);
    assert!(report.passed(), "{report:?}");
    assert_eq!(report.checked, 400);
}

#[test]
fn first_step_is_finite_and_seeded_runs_agree() {
    let run = || {
        let mut state = tiny_state(tiny_config(), unit_stats(8));
        let batch: Vec<TrainItem> = (0..2).map(|i| item(&state, 6, i)).collect();
        let schedule = Schedule {
            warmup_steps: 2,
            total_steps: 5,
            ..Schedule::default()
        };
        (0..5)
            .map(|_| train_step(&mut state, &batch, &schedule).unwrap().loss)
            .collect::<Vec<f64>>()
    };
    let a = run();
    assert!(a[0].is_finite());
    assert_eq!(a, run());
}

#[test]
fn fixed_sample_is_memorized() {
    let mut state = tiny_state(tiny_config(), unit_stats(8));
    let it = item(&state, 6, 3);
    let sample = make_flow_sample(&it.x1, &mut ChaCha8Rng::seed_from_u64(8));
    let schedule = Schedule {
        peak_lr: 3e-3,
        warmup_steps: 10,
        total_steps: 500,
        final_fraction: 0.1,
        grad_clip: 1.0,
    };
    let mut losses = Vec::new();
    for _ in 0..500 {
        losses.push(train_step_on(&mut state, &[(&it, &sample)], &schedule).unwrap().loss);
    }
    let last = batch_loss(&state, &[(&it, &sample)], None).unwrap();
    assert!(last < 0.1 * losses[0], "initial {} final {last}", losses[0]);
}

#[test]
fn non_finite_loss_reports_diagnostics() {
    let mut state = tiny_state(tiny_config(), unit_stats(8));
    let mut it = item(&state, 4, 1);
    it.x1.data_mut()[0] = f64::NAN;
    let err = train_step(&mut state, &[it], &Schedule::default()).unwrap_err();
    match err {
        FlowError::NonFiniteLoss { step, seed, items, .. } => {
            assert_eq!((step, seed), (0, 5));
            assert_eq!(items, vec!["item1".to_string()]);
        }
        other => panic!("unexpected {other}"),
    }
    assert!(matches!(train_step(&mut state, &[], &Schedule::default()), Err(FlowError::EmptyBatch)));
}

#[test]
fn checkpoint_round_trip_is_bitwise_and_resumes_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("model");
    let mut state = tiny_state(tiny_config(), unit_stats(8));
    let batch: Vec<TrainItem> = (0..2).map(|i| item(&state, 6, i)).collect();
    let schedule = Schedule {
        warmup_steps: 2,
        total_steps: 10,
        ..Schedule::default()
    };
    for _ in 0..3 {
        train_step(&mut state, &batch, &schedule).unwrap();
    }
    state.save(&stem).unwrap();
    let mut loaded = ModelState::load(&stem).unwrap();
    assert_eq!(loaded, state);
    let it = &batch[0];
    let out = |s: &ModelState| {
        dit_forward(&s.params, &s.dit, &s.cond, &it.x1, 0.4, &it.lr, &it.frame_pos, &it.inputs).unwrap()
    };
    assert_eq!(out(&state), out(&loaded));
    let a = train_step(&mut state, &batch, &schedule).unwrap();
    let b = train_step(&mut loaded, &batch, &schedule).unwrap();
    assert_eq!(a, b);
    assert_eq!(state.params, loaded.params);
}

#[test]
fn loading_rejects_wrong_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("model");
    let state = tiny_state(tiny_config(), unit_stats(8));
    state.save(&stem).unwrap();
    let mut broken = state.clone();
    broken.params.insert("dit.out.b", Tensor::zeros(&[3]));
    srflow_numerics::Checkpoint {
        seed: state.seed,
        params: broken.params,
    }
    .save(&ModelState::files(&stem)[0])
    .unwrap();
    assert!(matches!(ModelState::load(&stem), Err(FlowError::Checkpoint(_))));
}

#[test]
fn init_covers_conditioning_parameters() {
    let dit = tiny_config();
    let p: ParamStore = init_params(&dit, &cond_config(8), 20, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert!(p.get("cond.sem_table").is_some());
    assert_eq!(p.get("dit.out.w").unwrap().shape(), &[16, 8]);
}

fn utterance(seed: u64, duration_s: f64) -> Waveform {
    let spec = SyntheticUtteranceSpec {
        f0_hz: 140.0,
        vibrato_depth: 0.01,
        vibrato_rate_hz: 5.0,
        formants: BASE_FORMANTS.to_vec(),
        content_tokens: vec!["S1".into(), "S3".into()],
        duration_s,
        rng_seed: seed,
    };
    synth_utterance(&spec, SAMPLE_RATE).unwrap().0
}

#[test]
fn restoration_keeps_duration_and_is_deterministic() {
    let dit = DiTConfig {
        latent_dim: 64,
        max_frames: 16,
        ..tiny_config()
    };
    let clean = utterance(1, 0.7);
    let stats = NormStats::fit("s", [&mdct_encode(&clean, 64).unwrap()]).unwrap();
    let state = tiny_state(dit, stats);
    let d = DegradationSpec {
        cutoff_hz: 2000.0,
        snr_db: Some(10.0),
        noise_kind: NoiseKind::Pink,
        rng_seed: 3,
    };
    let lr = degrade(&clean, &d).unwrap().waveform;
    let r = record(&["S1", "S3"]);
    let a = restore(&lr, &r, &state, 4, 9).unwrap();
    assert!((a.waveform.len() as i64 - lr.len() as i64).abs() <= 64);
    assert_eq!(a.waveform.sample_rate, lr.sample_rate);
    let b = restore(&lr, &r, &state, 4, 9).unwrap();
    assert_eq!(a.waveform, b.waveform);
    assert!((a.cutoff_hz - 2000.0).abs() <= 250.0);
    let silent = Waveform::zeros(lr.len(), SAMPLE_RATE);
    assert!(restore(&silent, &r, &state, 4, 9).is_err());
}

#[test]
fn prepared_items_are_frame_aligned() {
    let dit = DiTConfig {
        latent_dim: 64,
        max_frames: 16,
        ..tiny_config()
    };
    let clean = utterance(2, 0.6);
    let stats = NormStats::fit("s", [&mdct_encode(&clean, 64).unwrap()]).unwrap();
    let state = tiny_state(dit, stats);
    let it = prepare_item(&state, "u", &clean, &record(&["S1", "S3"]), &DegradationSpec::clean(3000.0), None).unwrap();
    assert_eq!(it.x1.shape(), it.lr.shape());
    assert_eq!(it.frame_pos.len(), it.x1.rows());
    let crop = it.crop(16, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(crop.x1.rows(), 16);
    assert_eq!(crop.frame_pos.len(), 16);
}
