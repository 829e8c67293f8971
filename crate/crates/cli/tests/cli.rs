//! Driver commands end to end on tiny configurations.

mod common;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::Command;

use common::{tiny, tree, tree_diff};
use srflow_cli::ablate::{ABLATION_JSON, ABLATION_TXT};
use srflow_cli::artifact::{read_json, RunRecord, RUN_FILE};
use srflow_cli::evaluate::{REPORT_JSON, REPORT_TXT};
use srflow_cli::manifest::{manifest_file, COT_CACHE_FILE, SPLITS};
use srflow_cli::train::{read_loss_log, LAST, LOSS_LOG};
use srflow_cli::*;
use srflow_conditioning::bundle::build_bundle;
use srflow_conditioning::{serialize_cot, ConditioningCache};
use srflow_dsp::{degrade, read_wav, write_wav};
use srflow_eval::MetricsReport;
use srflow_flow::pipeline::condition;
use srflow_flow::ModelState;
use srflow_numerics::Graph;
use tempfile::TempDir;

fn synth(cfg: &RunConfig, dir: &Path) -> CorpusSummary {
    cmd_synth_data(cfg, dir).expect("synthesis succeeds")
}

fn speakers_of(data: &Path, split: &str) -> BTreeSet<String> {
    read_manifest(&data.join(manifest_file(split))).unwrap().into_iter().map(|e| e.speaker).collect()
}

#[test]
fn two_hundred_utterances_split_into_speaker_disjoint_sets() {
    let mut cfg = tiny();
    cfg.corpus.count = 200;
    cfg.corpus.utterances_per_speaker = 5;
    let dir = TempDir::new().unwrap();
    let s = synth(&cfg, dir.path());
    let sizes: Vec<usize> = s.splits.iter().map(|x| x.utterances).collect();
    assert_eq!(sizes, vec![180, 10, 10]);
    let sets: Vec<BTreeSet<String>> = SPLITS.iter().map(|n| speakers_of(dir.path(), n)).collect();
    for i in 0..3 {
        for j in i + 1..3 {
            assert!(sets[i].is_disjoint(&sets[j]), "{} and {} share a speaker", SPLITS[i], SPLITS[j]);
        }
    }
    // The voice parameters themselves are disjoint too.
    let f0s: Vec<BTreeSet<u64>> = SPLITS
        .iter()
        .map(|n| read_manifest(&dir.path().join(manifest_file(n))).unwrap().iter().map(|e| e.f0_hz.to_bits()).collect())
        .collect();
    assert!(f0s[0].is_disjoint(&f0s[1]) && f0s[0].is_disjoint(&f0s[2]) && f0s[1].is_disjoint(&f0s[2]));
    let cache = ConditioningCache::open(dir.path().join(COT_CACHE_FILE)).unwrap();
    assert_eq!(cache.len(), 200);
}

#[test]
fn synthesis_reruns_are_byte_identical_and_seed_sensitive() {
    let cfg = tiny();
    let (a, b, c) = (TempDir::new().unwrap(), TempDir::new().unwrap(), TempDir::new().unwrap());
    synth(&cfg, a.path());
    synth(&cfg, b.path());
    assert_eq!(tree_diff(a.path(), b.path()), Vec::<String>::new());
    // Writing over an existing corpus gives the same bytes again.
    synth(&cfg, b.path());
    assert_eq!(tree_diff(a.path(), b.path()), Vec::<String>::new());
    let mut other = cfg.clone();
    other.corpus.seed += 1;
    synth(&other, c.path());
    assert!(!tree_diff(a.path(), c.path()).is_empty());
}

#[test]
fn artifacts_carry_the_config_fingerprint() {
    let cfg = tiny();
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data");
    let run = dir.path().join("run");
    synth(&cfg, &data);
    let s = cmd_train(&cfg, &data, &run, &TrainOptions::default()).unwrap();
    let fp = cfg.fingerprint();
    assert_eq!(fp.len(), 64);
    assert_eq!(s.config_fingerprint, fp);
    for d in [&data, &run] {
        let r: RunRecord = read_json(&d.join(RUN_FILE)).unwrap();
        assert_eq!(r.config_fingerprint, fp);
        assert_eq!(r.config, cfg);
    }
    let summary: CorpusSummary = read_json(&data.join(srflow_cli::corpus::CORPUS_FILE)).unwrap();
    assert_eq!(summary.config_fingerprint, fp);
    assert_eq!(ModelState::load(&run.join(LAST)).unwrap().config_fingerprint, fp);
}

#[test]
fn resuming_from_a_saved_state_reproduces_the_uninterrupted_run() {
    let cfg = tiny();
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data");
    synth(&cfg, &data);
    let full = dir.path().join("full");
    let split = dir.path().join("split");
    cmd_train(&cfg, &data, &full, &TrainOptions::default()).unwrap();
    let first = TrainOptions {
        resume: None,
        stop_after: Some(3),
    };
    let part = cmd_train(&cfg, &data, &split, &first).unwrap();
    assert_eq!(part.steps, 3);
    let rest = TrainOptions {
        resume: Some(split.join(LAST)),
        stop_after: None,
    };
    cmd_train(&cfg, &data, &split, &rest).unwrap();
    let (a, b) = (read_loss_log(&full).unwrap(), read_loss_log(&split).unwrap());
    assert_eq!(a.len(), 6);
    assert_eq!(a, b);
    assert_eq!(tree(&full).get(LOSS_LOG), tree(&split).get(LOSS_LOG));
    for f in ModelState::files(Path::new(LAST)) {
        let name = f.to_string_lossy().into_owned();
        assert_eq!(fs::read(full.join(&name)).unwrap(), fs::read(split.join(&name)).unwrap(), "{name}");
    }
}

#[test]
fn resume_rejects_a_state_from_another_seed() {
    let cfg = tiny();
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data");
    synth(&cfg, &data);
    let run = dir.path().join("run");
    cmd_train(&cfg, &data, &run, &TrainOptions::default()).unwrap();
    let mut other = cfg.clone();
    other.training.seed += 1;
    let opts = TrainOptions {
        resume: Some(run.join(LAST)),
        stop_after: None,
    };
    assert!(cmd_train(&other, &data, &run, &opts).is_err());
}

#[test]
fn disabled_cot_leaves_three_conditioning_tokens() {
    let mut cfg = tiny();
    cfg.ablation.disable_cot = true;
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data");
    synth(&cfg, &data);
    let run = dir.path().join("run");
    cmd_train(&cfg, &data, &run, &TrainOptions { resume: None, stop_after: Some(1) }).unwrap();
    let state = ModelState::load(&run.join(LAST)).unwrap();
    let split = load_split(&data.join(manifest_file("test"))).unwrap();
    let c = condition(&state, &split.waves[0], &split.records[0]).unwrap();
    let mut g = Graph::new();
    let p = state.params.bind(&mut g);
    let b = build_bundle(&mut g, &p, &state.cond, &c.inputs).unwrap();
    assert_eq!(g.shape(b.tokens)[0], 3);
}

/// Synthesizes, trains and writes one degraded test input; returns the data
/// directory, the run directory and the input WAV.
fn trained(dir: &Path, cfg: &RunConfig) -> (std::path::PathBuf, std::path::PathBuf, std::path::PathBuf, String) {
    let data = dir.join("data");
    let run = dir.join("run");
    synth(cfg, &data);
    cmd_train(cfg, &data, &run, &TrainOptions::default()).unwrap();
    let entry = &read_manifest(&data.join(manifest_file("test"))).unwrap()[0];
    let clean = read_wav(&data.join(&entry.wav_path)).unwrap();
    let input = dir.join("input.wav");
    write_wav(&input, &degrade(&clean, &entry.degradation).unwrap().waveform).unwrap();
    (data, run, input, entry.id.clone())
}

#[test]
fn restore_is_deterministic_and_writes_a_sidecar() {
    let cfg = tiny();
    let dir = TempDir::new().unwrap();
    let (data, run, input, id) = trained(dir.path(), &cfg);
    let req = |out: &str, cot: CotSource| RestoreRequest {
        checkpoint: run.join(LAST),
        input: input.clone(),
        cot,
        output: dir.path().join(out),
        steps: 4,
        seed: 9,
    };
    let cached = CotSource::Cached {
        store: data.join(COT_CACHE_FILE),
        id: id.clone(),
    };
    let (a, _) = cmd_restore(&req("a.wav", cached.clone())).unwrap();
    let (b, _) = cmd_restore(&req("b.wav", cached)).unwrap();
    assert_eq!(a, b);
    assert_eq!(fs::read(dir.path().join("a.wav")).unwrap(), fs::read(dir.path().join("b.wav")).unwrap());
    assert_eq!(fs::read(dir.path().join("a.wav.json")).unwrap(), fs::read(dir.path().join("b.wav.json")).unwrap());
    assert_eq!(a.config_fingerprint, cfg.fingerprint());
    // The same record given as text restores the same audio.
    let text = CotSource::Text(a.record.clone());
    cmd_restore(&req("c.wav", text)).unwrap();
    assert_eq!(fs::read(dir.path().join("a.wav")).unwrap(), fs::read(dir.path().join("c.wav")).unwrap());
    let restored = read_wav(&dir.path().join("a.wav")).unwrap();
    assert_eq!(restored.len(), read_wav(&input).unwrap().len());

    let mut zero = req("d.wav", CotSource::Text(a.record.clone()));
    zero.steps = 0;
    let e = cmd_restore(&zero).unwrap_err();
    assert_eq!(exit_code(&e), srflow_cli::error::EXIT_USAGE);
    let missing = CotSource::Cached {
        store: data.join(COT_CACHE_FILE),
        id: "nobody".into(),
    };
    assert_eq!(exit_code(&cmd_restore(&req("e.wav", missing)).unwrap_err()), srflow_cli::error::EXIT_USAGE);
}

#[test]
fn evaluation_reports_are_byte_identical_and_complete() {
    let cfg = tiny();
    let dir = TempDir::new().unwrap();
    let (data, run, _, _) = trained(dir.path(), &cfg);
    let manifest = data.join(manifest_file("test"));
    let (a, b) = (dir.path().join("eval_a"), dir.path().join("eval_b"));
    let ra = cmd_evaluate(&cfg, &run.join(LAST), &manifest, &a).unwrap();
    cmd_evaluate(&cfg, &run.join(LAST), &manifest, &b).unwrap();
    assert_eq!(tree_diff(&a, &b), Vec::<String>::new());
    assert!(a.join(REPORT_TXT).exists());
    let back: MetricsReport = serde_json::from_str(&fs::read_to_string(a.join(REPORT_JSON)).unwrap()).unwrap();
    assert_eq!(back, ra);
    assert_eq!(ra.config_fingerprint, cfg.fingerprint());
    let c = &ra.conditions[0];
    assert_eq!(c.n + c.failures.len(), read_manifest(&manifest).unwrap().len());
    for u in &c.per_utterance {
        assert!(u.lsd.is_finite() && u.lsd_input.is_finite() && u.sim.is_finite());
        assert!(u.content_error_rate >= 0.0);
    }
}

#[test]
fn empty_evaluation_conditions_are_rejected() {
    let mut cfg = tiny();
    cfg.evaluation.conditions.clear();
    assert!(cfg.validate().is_err());
    let text = cfg.to_toml();
    assert!(matches!(RunConfig::parse(&text), Err(CliError::Config(_))));
}

#[test]
fn ablation_table_has_four_rows_that_recompute_from_reports() {
    let cfg = tiny();
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data");
    synth(&cfg, &data);
    let out = dir.path().join("ablate");
    let table = cmd_ablate(&cfg, &data, &out).unwrap();
    let names: Vec<&str> = table.rows.iter().map(|r| r.variant.as_str()).collect();
    assert_eq!(names, vec!["Full", "w/o CoT", "transcript-only", "w/o priors"]);
    assert!(table.data_order_identical);
    assert_eq!(verify_table(&out).unwrap(), table);
    assert!(out.join(ABLATION_TXT).exists());
    let orders: Vec<Vec<Vec<String>>> = VARIANTS
        .iter()
        .map(|v| read_loss_log(&out.join(v.dir)).unwrap().into_iter().map(|l| l.items).collect())
        .collect();
    assert!(orders.windows(2).all(|w| w[0] == w[1]));
    // Editing one cell breaks the cross-file check.
    let mut edited = table.clone();
    edited.rows[1].lsd += 0.5;
    fs::write(out.join(ABLATION_JSON), serde_json::to_string(&edited).unwrap()).unwrap();
    assert!(verify_table(&out).is_err());
}

#[test]
fn record_text_round_trips_through_the_cache() {
    let cfg = tiny();
    let dir = TempDir::new().unwrap();
    synth(&cfg, dir.path());
    let cache = ConditioningCache::open(dir.path().join(COT_CACHE_FILE)).unwrap();
    for id in cache.ids() {
        let r = cache.get(id).unwrap();
        let again = CotSource::Text(serialize_cot(r)).resolve().unwrap();
        assert_eq!(&again, r);
    }
}

// ---- the binary ----

fn srflow(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_srflow")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("config.toml");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn invalid_record_text_exits_with_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let wav = dir.path().join("in.wav");
    write_wav(&wav, &srflow_dsp::Waveform::zeros(1600, 16_000)).unwrap();
    let out = srflow(&[
        "restore",
        "--checkpoint",
        dir.path().join("none").to_str().unwrap(),
        "--input",
        wav.to_str().unwrap(),
        "--cot",
        "gender: robot\nnonsense",
        "--out",
        dir.path().join("o.wav").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("invalid record text"), "{err}");
    assert!(!dir.path().join("o.wav").exists());
}

#[test]
fn exit_codes_separate_usage_from_runtime_failures() {
    let dir = TempDir::new().unwrap();
    assert_eq!(srflow(&["--help"]).status.code(), Some(0));
    assert_eq!(srflow(&["no-such-verb"]).status.code(), Some(1));
    assert_eq!(srflow(&["synth-data", "--out", "x"]).status.code(), Some(1));
    let cfg = write_config(dir.path(), &tiny().to_toml());
    // A valid configuration with a missing data directory is a runtime failure.
    let missing = dir.path().join("missing");
    let out = dir.path().join("run");
    let r = srflow(&["train", "--config", &cfg, "--data", missing.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn strict_config_aborts_before_any_side_effect() {
    let dir = TempDir::new().unwrap();
    let good = tiny().to_toml();
    let unknown = good.replace("[corpus]\n", "[corpus]\nsurprise = 1\n");
    assert_ne!(unknown, good);
    let missing = good.replace("seed = 7\n", "");
    assert_ne!(missing, good);
    for text in [unknown, missing] {
        let cfg = write_config(dir.path(), &text);
        let out = dir.path().join("data");
        let r = srflow(&["synth-data", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(r.status.code(), Some(1), "{}", String::from_utf8_lossy(&r.stderr));
        assert!(!out.exists());
    }
}

#[test]
fn binary_synthesis_matches_the_library_and_honours_the_seed_flag() {
    let dir = TempDir::new().unwrap();
    let cfg = tiny();
    let path = write_config(dir.path(), &cfg.to_toml());
    let bin = dir.path().join("bin");
    let r = srflow(&["synth-data", "--config", &path, "--out", bin.to_str().unwrap(), "--seed", "99"]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let mut seeded = cfg.clone();
    seeded.corpus.seed = 99;
    let lib = dir.path().join("lib");
    synth(&seeded, &lib);
    assert_eq!(tree_diff(&bin, &lib), Vec::<String>::new());
}

#[test]
fn gradcheck_command_passes() {
    let dir = TempDir::new().unwrap();
    let s = cmd_gradcheck(0, 60, Some(dir.path())).unwrap();
    assert!(s.all_passed(), "{}", s.render());
    assert_eq!(s.rows.len(), srflow_numerics::OpKind::ALL.len() + 1);
    let back: GradcheckSummary = read_json(&dir.path().join(srflow_cli::gradcheck::GRADCHECK_JSON)).unwrap();
    assert_eq!(back, s);
}
