//! Acceptance suite: one PASS or FAIL line per criterion.
//!
//! Runs without the libtest harness so every verdict is printed in order.
//! Criteria can be selected by name, e.g.
//! `cargo test -p srflow-cli --test acceptance -- A1 A7`; with no names all
//! of them run. A criterion that cannot be evaluated (an error, not a
//! verdict) always makes the process exit non-zero. A measured FAIL is
//! printed and counted in the summary line; set `SRFLOW_ACCEPTANCE_STRICT=1`
//! to make it fail the process as well.

mod common;

use std::cell::OnceCell;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{ensure, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srflow_cli::ablate::VariantTiming;
use srflow_cli::artifact::read_json;
use srflow_cli::evaluate::REPORT_JSON;
use srflow_cli::manifest::{manifest_file, COT_CACHE_FILE};
use srflow_cli::train::LAST;
use srflow_cli::*;
use srflow_dsp::bandwidth::GRID_STEP_HZ;
use srflow_dsp::synth::token_name;
use srflow_dsp::waveform::mean_power;
use srflow_dsp::*;
use srflow_eval::{lsd, speaker_sim, wer, ConditionReport, MetricsReport};
use srflow_flow::toy::{EightGaussians, ModeReport, ToyConfig, ToyFlow};
use srflow_flow::{euler_sample, training_loss_grad_check};
use srflow_numerics::{check_all_ops, GradCheckOptions, Tensor};
use tempfile::TempDir;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Result<Verdict> {
    Ok(Verdict { pass, detail })
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::uniform(shape, -1.0, 1.0, rng)
}

// ---- A1 ----

fn a1() -> Result<Verdict> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let w = Waveform::new((0..SAMPLE_RATE).map(|_| rng.random_range(-1.0..1.0)).collect(), SAMPLE_RATE);
        for m in [64, 128, 256] {
            let back = mdct_decode(&mdct_encode(&w, m)?)?;
            ensure!(back.len() == w.len(), "length changed for frame length {m}");
            let err = back.samples.iter().zip(&w.samples).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            worst = worst.max(err);
        }
    }
    let t = start.elapsed();
    verdict(worst <= 1e-6 && t < Duration::from_secs(5), format!("max abs error {worst:.2e}, {:.2} s", secs(t)))
}

// ---- A2 ----

fn a2() -> Result<Verdict> {
    let start = Instant::now();
    let tol = 1e-4;
    let opts = GradCheckOptions::default();
    let ops = check_all_ops(0, tol, opts);
    let failed: Vec<String> = ops.iter().filter(|(_, r)| !r.passed()).map(|(k, _)| format!("{k:?}")).collect();
    let op_worst = ops.iter().map(|(_, r)| r.max_rel_error).fold(0.0, f64::max);
    // Every coordinate of every parameter of the depth-two network.
    let loss = training_loss_grad_check(usize::MAX, tol, 0)?;
    let t = start.elapsed();
    let pass = failed.is_empty() && loss.passed() && opts.step == 1e-5 && t < Duration::from_secs(120);
    verdict(
        pass,
        format!(
            "{} ops, worst op rel error {op_worst:.2e}{}; training loss {} coords, rel error {:.2e}; {:.1} s",
            ops.len(),
            if failed.is_empty() { String::new() } else { format!(" (failed: {})", failed.join(", ")) },
            loss.checked,
            loss.max_rel_error,
            secs(t)
        ),
    )
}

// ---- A3 ----

fn a3() -> Result<Verdict> {
    let target = EightGaussians::default();
    let start = Instant::now();
    let mut flow = ToyFlow::new(ToyConfig::default());
    flow.train(&target)?;
    let train = start.elapsed();
    let samples = flow.sample(4096, 32, 17)?;
    let r = ModeReport::measure(&target, &samples);
    let pass = r.min_fraction() >= 0.02 && r.max_mean_error() <= 0.15 && train <= Duration::from_secs(300);
    verdict(
        pass,
        format!(
            "smallest mode {:.1}% of samples, largest mean error {:.3}; trained in {:.0} s",
            100.0 * r.min_fraction(),
            r.max_mean_error(),
            secs(train)
        ),
    )
}

// ---- A4 to A6: one ablation run on the smoke configuration ----

struct SmokeRun {
    _dir: TempDir,
    table: AblationTable,
    full: MetricsReport,
    timings: Vec<VariantTiming>,
    test_size: usize,
}

fn smoke_run() -> Result<SmokeRun> {
    let cfg = common::smoke();
    let dir = TempDir::new()?;
    let data = dir.path().join("data");
    let out = dir.path().join("ablate");
    eprintln!("smoke run: synthesizing the corpus and training four variants");
    cmd_synth_data(&cfg, &data)?;
    let (table, timings) = cmd_ablate_timed(&cfg, &data, &out)?;
    let full_dir = &table.rows.first().context("empty ablation table")?.run_dir;
    let full: MetricsReport = read_json(&out.join(full_dir).join(REPORT_JSON))?;
    let test_size = read_manifest(&data.join(manifest_file("test")))?.len();
    Ok(SmokeRun {
        _dir: dir,
        table,
        full,
        timings,
        test_size,
    })
}

fn first_condition(run: &SmokeRun) -> Result<&ConditionReport> {
    run.full.conditions.first().context("report has no conditions")
}

fn a4(run: &SmokeRun) -> Result<Verdict> {
    let c = first_condition(run)?;
    ensure!(c.cutoff_hz == 0.25 * SAMPLE_RATE as f64 / 2.0, "first condition is not the quarter-Nyquist tier");
    let t = &run.timings[0];
    let ratio = c.means.lsd / c.means.lsd_input;
    let budget = t.train < Duration::from_secs(30 * 60) && t.evaluate < Duration::from_secs(5 * 60);
    let snr = c.snr_db.map_or("clean".to_string(), |s| format!("{s:.0} dB"));
    verdict(
        ratio <= 0.7 && c.n == run.test_size && budget,
        format!(
            "{:.0} Hz / {snr}: lsd {:.3} vs input {:.3} (ratio {ratio:.3}), {} of {} utterances; train {:.0} s, eval {:.0} s",
            c.cutoff_hz,
            c.means.lsd,
            c.means.lsd_input,
            c.n,
            run.test_size,
            secs(t.train),
            secs(t.evaluate)
        ),
    )
}

fn a5(run: &SmokeRun) -> Result<Verdict> {
    let row = |name: &str| run.table.rows.iter().find(|r| r.variant == name).context("missing ablation row");
    let (full, no_cot, transcript, no_priors) = (row("Full")?, row("w/o CoT")?, row("transcript-only")?, row("w/o priors")?);
    let c1 = full.content_error < no_cot.content_error;
    let c2 = full.content_error <= transcript.content_error + 0.02;
    let c3 = full.sim > no_priors.sim;
    verdict(
        c1 && c2 && c3 && run.table.data_order_identical,
        format!(
            "content error full {:.3} vs w/o CoT {:.3} [{}], vs transcript-only {:.3} [{}]; sim full {:.3} vs w/o priors {:.3} [{}]",
            full.content_error,
            no_cot.content_error,
            if c1 { "ok" } else { "no" },
            transcript.content_error,
            if c2 { "ok" } else { "no" },
            full.sim,
            no_priors.sim,
            if c3 { "ok" } else { "no" }
        ),
    )
}

fn a6(run: &SmokeRun) -> Result<Verdict> {
    let c = first_condition(run)?;
    let within = c
        .per_utterance
        .iter()
        .filter(|u| (u.f0_restored_hz - u.f0_ref_hz).abs() <= 0.05 * u.f0_ref_hz)
        .count();
    // Failed utterances count against the criterion.
    let frac = within as f64 / run.test_size as f64;
    verdict(frac >= 0.8, format!("{within} of {} utterances within 5% ({:.0}%)", run.test_size, 100.0 * frac))
}

// ---- A7 ----

fn a7() -> Result<Verdict> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let w = Waveform::new((0..8000).map(|_| rng.random_range(-0.5..0.5)).collect(), SAMPLE_RATE);
    let loud = Waveform::new(w.samples.iter().map(|v| 10.0 * v).collect(), SAMPLE_RATE);
    let s = stft_magnitude(&w, 512, 128, Window::Hann)?;
    let s10 = stft_magnitude(&loud, 512, 128, Window::Hann)?;
    let same = lsd(&s, &s)?;
    let ten = lsd(&s, &s10)?;
    let reference = ["the", "cat", "sat", "on", "mats"];
    let hypothesis = ["the", "cat", "sat", "in", "mats"];
    let w1 = wer(&reference, &hypothesis)?;
    let a: Vec<f64> = (0..24).map(|_| rng.random_range(-1.0..1.0)).collect();
    let sim = speaker_sim(&a, &a)?;
    let t = start.elapsed();
    let pass = same == 0.0
        && (ten - 2.0).abs() <= 1e-9
        && (w1 - 0.2).abs() <= 1e-12
        && (sim - 1.0).abs() <= 1e-12
        && t < Duration::from_secs(1);
    verdict(
        pass,
        format!("lsd(S,S) {same}, lsd(S,10S) {ten:.12}, wer {w1}, sim(a,a) {sim:.15}; {:.3} s", secs(t)),
    )
}

// ---- A8 ----

fn a8() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x0 = random_tensor(&[6, 5], &mut rng);
    let x1 = random_tensor(&[6, 5], &mut rng);
    let v = Tensor::new(vec![6, 5], x1.data().iter().zip(x0.data()).map(|(b, a)| b - a).collect())?;
    let mut constant_err: f64 = 0.0;
    let mut decay_err: f64 = 0.0;
    for steps in [1, 4, 32] {
        let mut field = |_x: &Tensor, _t: f64| Ok(v.clone());
        constant_err = constant_err.max(euler_sample(&mut field, &x0, steps)?.max_abs_diff(&x1));
        let mut decay = |x: &Tensor, _t: f64| Ok(x.map(|e| -e));
        let out = euler_sample(&mut decay, &x0, steps)?;
        // x_{k+1} = x_k - dt x_k, iterated one step at a time.
        let dt = 1.0 / steps as f64;
        let mut expect = x0.data().to_vec();
        for _ in 0..steps {
            expect.iter_mut().for_each(|e| *e -= dt * *e);
        }
        let err = out.data().iter().zip(&expect).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        decay_err = decay_err.max(err);
    }
    verdict(
        constant_err <= 1e-9 && decay_err <= 1e-9,
        format!("constant field endpoint error {constant_err:.2e}, v = -x recurrence error {decay_err:.2e}"),
    )
}

// ---- A9 ----

fn utterance(seed: u64) -> Result<Waveform> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f0 = rng.random_range(90.0..280.0);
    let spec = SyntheticUtteranceSpec {
        f0_hz: f0,
        vibrato_depth: 0.01,
        vibrato_rate_hz: 5.0,
        formants: SpeakerProfile::random(f0, &mut rng).formants,
        content_tokens: (0..3).map(|i| token_name(i * 2)).collect(),
        duration_s: 1.5,
        rng_seed: seed,
    };
    Ok(synth_utterance(&spec, SAMPLE_RATE)?.0)
}

fn a9() -> Result<Verdict> {
    let mut worst_snr: f64 = 0.0;
    let mut cases = 0;
    for seed in 0..4 {
        let clean = utterance(seed)?;
        for cutoff in [2000.0, 4000.0] {
            let filtered = degrade(&clean, &DegradationSpec::clean(cutoff))?.waveform;
            for snr in [5.0, 10.0, 15.0] {
                for kind in NoiseKind::ALL {
                    let spec = DegradationSpec {
                        cutoff_hz: cutoff,
                        snr_db: Some(snr),
                        noise_kind: kind,
                        rng_seed: seed * 31 + 5,
                    };
                    let d = degrade(&clean, &spec)?;
                    ensure!(d.clipped == 0, "clipping would distort the measured SNR");
                    let noise: Vec<f64> = d.waveform.samples.iter().zip(&filtered.samples).map(|(a, b)| a - b).collect();
                    let applied = 10.0 * (filtered.power() / mean_power(&noise)).log10();
                    worst_snr = worst_snr.max((applied - snr).abs());
                    cases += 1;
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let white = Waveform::new((0..2 * SAMPLE_RATE).map(|_| rng.random_range(-0.5..0.5)).collect(), SAMPLE_RATE);
    let mut worst_bw: f64 = 0.0;
    let mut estimates = Vec::new();
    for c in [1000.0, 2000.0, 3000.0, 4000.0, 6000.0] {
        let est = estimate_bandwidth(&lowpass(&white, c)?)?;
        worst_bw = worst_bw.max((est - c).abs());
        estimates.push(format!("{:.0}", est));
    }
    verdict(
        worst_snr <= 0.1 && worst_bw <= GRID_STEP_HZ,
        format!(
            "worst SNR deviation {worst_snr:.4} dB over {cases} mixtures; bandwidth estimates [{}] Hz, worst miss {worst_bw:.0} Hz (grid {GRID_STEP_HZ:.0})",
            estimates.join(", ")
        ),
    )
}

// ---- A10 ----

fn a10() -> Result<Verdict> {
    let mut cfg = common::smoke();
    cfg.training.steps = 100;
    cfg.training.validate_every = 50;
    let dir = TempDir::new()?;
    let run = |name: &str| -> Result<()> {
        let root = dir.path().join(name);
        let data = root.join("data");
        cmd_synth_data(&cfg, &data)?;
        cmd_train(&cfg, &data, &root.join("train"), &TrainOptions::default())?;
        let entry = read_manifest(&data.join(manifest_file("test")))?.remove(0);
        let clean = read_wav(&data.join(&entry.wav_path))?;
        let input = root.join("input.wav");
        write_wav(&input, &degrade(&clean, &entry.degradation)?.waveform)?;
        cmd_restore(&RestoreRequest {
            checkpoint: root.join("train").join(LAST),
            input,
            cot: CotSource::Cached {
                store: data.join(COT_CACHE_FILE),
                id: entry.id,
            },
            output: root.join("restore").join("restored.wav"),
            steps: srflow_flow::DEFAULT_STEPS,
            seed: 0,
        })?;
        cmd_evaluate(&cfg, &root.join("train").join(LAST), &data.join(manifest_file("test")), &root.join("eval"))?;
        Ok(())
    };
    run("a")?;
    run("b")?;
    let mut parts = Vec::new();
    let mut pass = true;
    for stage in ["data", "train", "restore", "eval"] {
        let (a, b) = (dir.path().join("a").join(stage), dir.path().join("b").join(stage));
        let files = common::tree(&a).len();
        let diff = common::tree_diff(&a, &b);
        pass &= diff.is_empty() && files > 0;
        parts.push(if diff.is_empty() {
            format!("{stage} {files} files identical")
        } else {
            format!("{stage} differs in {}", diff.join(", "))
        });
    }
    verdict(pass, parts.join("; "))
}

// ---- driver ----

enum Outcome {
    Pass,
    Fail,
    Error,
}

fn report(name: &str, r: Result<Verdict>, elapsed: Duration) -> Outcome {
    match r {
        Ok(v) => {
            println!("{name} {} {} [{:.1} s]", if v.pass { "PASS" } else { "FAIL" }, v.detail, secs(elapsed));
            if v.pass {
                Outcome::Pass
            } else {
                Outcome::Fail
            }
        }
        Err(e) => {
            println!("{name} FAIL error: {e:#} [{:.1} s]", secs(elapsed));
            Outcome::Error
        }
    }
}

fn main() -> ExitCode {
    let wanted: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let selected = |name: &str| wanted.is_empty() || wanted.iter().any(|w| w.eq_ignore_ascii_case(name));
    let smoke: OnceCell<Result<SmokeRun, String>> = OnceCell::new();
    let smoke_run = || smoke.get_or_init(|| smoke_run().map_err(|e| format!("{e:#}")));
    let with_smoke = |f: fn(&SmokeRun) -> Result<Verdict>| -> Result<Verdict> {
        match smoke_run() {
            Ok(run) => f(run),
            Err(e) => Err(anyhow::anyhow!("smoke run failed: {e}")),
        }
    };

    let criteria: [(&str, &dyn Fn() -> Result<Verdict>); 10] = [
        ("A1", &a1),
        ("A2", &a2),
        ("A3", &a3),
        ("A4", &|| with_smoke(a4)),
        ("A5", &|| with_smoke(a5)),
        ("A6", &|| with_smoke(a6)),
        ("A7", &a7),
        ("A8", &a8),
        ("A9", &a9),
        ("A10", &a10),
    ];
    let (mut passed, mut failed, mut errors) = (Vec::new(), Vec::new(), Vec::new());
    for (name, run) in criteria {
        if !selected(name) {
            continue;
        }
        let start = Instant::now();
        match report(name, run(), start.elapsed()) {
            Outcome::Pass => passed.push(name),
            Outcome::Fail => failed.push(name),
            Outcome::Error => errors.push(name),
        }
    }
    if let Some(Ok(run)) = smoke.get() {
        for t in &run.timings {
            println!("   {:<16} trained in {:.0} s, evaluated in {:.0} s", t.variant, secs(t.train), secs(t.evaluate));
        }
        print!("{}", run.table.render());
    }
    let total = passed.len() + failed.len() + errors.len();
    println!("summary: {} of {total} criteria passed", passed.len());
    if !failed.is_empty() {
        println!("failed: {}", failed.join(" "));
    }
    if !errors.is_empty() {
        println!("errored: {}", errors.join(" "));
    }
    let strict = std::env::var("SRFLOW_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if errors.is_empty() && (failed.is_empty() || !strict) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
