//! `ablate`: the full model against three conditioning ablations, trained
//! and evaluated under identical seeds and budgets.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use srflow_conditioning::Ablation;
use srflow_eval::MetricsReport;
use srflow_flow::ModelState;

use crate::artifact::{ensure_dir, read_json, write_json, write_run_record};
use crate::config::RunConfig;
use crate::evaluate::{evaluate_state, REPORT_JSON};
use crate::manifest::manifest_file;
use crate::train::{cmd_train, read_loss_log, TrainOptions, LAST};

pub const ABLATION_JSON: &str = "ablation.json";
pub const ABLATION_TXT: &str = "ablation.txt";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Variant {
    pub name: &'static str,
    /// Subdirectory holding the variant's run.
    pub dir: &'static str,
    pub ablation: Ablation,
}

pub const VARIANTS: [Variant; 4] = [
    Variant {
        name: "Full",
        dir: "full",
        ablation: Ablation {
            disable_cot: false,
            transcript_only: false,
            disable_acoustic_priors: false,
        },
    },
    Variant {
        name: "w/o CoT",
        dir: "no_cot",
        ablation: Ablation {
            disable_cot: true,
            transcript_only: false,
            disable_acoustic_priors: false,
        },
    },
    Variant {
        name: "transcript-only",
        dir: "transcript_only",
        ablation: Ablation {
            disable_cot: false,
            transcript_only: true,
            disable_acoustic_priors: false,
        },
    },
    Variant {
        name: "w/o priors",
        dir: "no_priors",
        ablation: Ablation {
            disable_cot: false,
            transcript_only: false,
            disable_acoustic_priors: true,
        },
    },
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub run_dir: String,
    pub config_fingerprint: String,
    pub content_error: f64,
    pub lsd: f64,
    pub sim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub config_fingerprint: String,
    /// The reported condition: the first configured evaluation condition.
    pub cutoff_hz: f64,
    pub snr_db: Option<f64>,
    pub wer_source: String,
    /// Every run trained on the same utterances in the same order.
    pub data_order_identical: bool,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let snr = self.snr_db.map_or("clean".to_string(), |v| format!("{v:.0} dB SNR"));
        let _ = writeln!(s, "ablation at {:.0} Hz / {snr} (config {})", self.cutoff_hz, self.config_fingerprint);
        let _ = writeln!(s, "{:<18} {:>14} {:>8} {:>8}", "variant", "content_error", "lsd", "sim");
        for r in &self.rows {
            let _ = writeln!(s, "{:<18} {:>14.4} {:>8.4} {:>8.4}", r.variant, r.content_error, r.lsd, r.sim);
        }
        let _ = writeln!(s, "content error source: {}", self.wer_source);
        s
    }
}

/// Row of `variant` from the first condition of its report.
pub fn row_from_report(variant: &str, run_dir: &str, report: &MetricsReport) -> Result<AblationRow> {
    let c = report.conditions.first().context("report has no conditions")?;
    Ok(AblationRow {
        variant: variant.to_string(),
        run_dir: run_dir.to_string(),
        config_fingerprint: report.config_fingerprint.clone(),
        content_error: c.means.content_error_rate,
        lsd: c.means.lsd,
        sim: c.means.sim,
    })
}

pub fn variant_config(cfg: &RunConfig, v: &Variant) -> RunConfig {
    RunConfig {
        ablation: v.ablation,
        ..cfg.clone()
    }
}

/// Wall-clock cost of one variant. Kept out of the written artifacts so they
/// stay byte-identical across runs.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantTiming {
    pub variant: String,
    pub train: Duration,
    pub evaluate: Duration,
}

/// Trains and evaluates every variant into `out/<variant dir>` and writes
/// the comparison table. The `ablation` section of `cfg` is ignored.
pub fn cmd_ablate(cfg: &RunConfig, data: &Path, out: &Path) -> Result<AblationTable> {
    Ok(cmd_ablate_timed(cfg, data, out)?.0)
}

/// [`cmd_ablate`] that also reports how long each variant took.
pub fn cmd_ablate_timed(cfg: &RunConfig, data: &Path, out: &Path) -> Result<(AblationTable, Vec<VariantTiming>)> {
    ensure_dir(out)?;
    write_run_record(out, "ablate", cfg)?;
    let test = data.join(manifest_file("test"));
    let mut rows = Vec::new();
    let mut orders = Vec::new();
    let mut timings = Vec::new();
    for v in &VARIANTS {
        let vcfg = variant_config(cfg, v);
        let dir = out.join(v.dir);
        log::info!("ablation variant {}", v.name);
        let start = Instant::now();
        cmd_train(&vcfg, data, &dir, &TrainOptions::default())?;
        let train = start.elapsed();
        let start = Instant::now();
        let state = ModelState::load(&dir.join(LAST))?;
        let report = evaluate_state(&vcfg, &state, &test, &dir)?;
        let evaluate = start.elapsed();
        log::info!("{}: trained in {:.0} s, evaluated in {:.0} s", v.name, train.as_secs_f64(), evaluate.as_secs_f64());
        timings.push(VariantTiming {
            variant: v.name.to_string(),
            train,
            evaluate,
        });
        rows.push(row_from_report(v.name, v.dir, &report)?);
        orders.push(read_loss_log(&dir)?.into_iter().map(|l| l.items).collect::<Vec<_>>());
    }
    let data_order_identical = orders.windows(2).all(|w| w[0] == w[1]);
    if !data_order_identical {
        bail!("ablation runs did not see the same training data order");
    }
    let first = cfg.evaluation.conditions[0];
    let table = AblationTable {
        config_fingerprint: cfg.fingerprint(),
        cutoff_hz: first.cutoff_hz,
        snr_db: first.snr_db,
        wer_source: srflow_eval::report::WER_SOURCE.to_string(),
        data_order_identical,
        rows,
    };
    write_json(&out.join(ABLATION_JSON), &table)?;
    let txt = out.join(ABLATION_TXT);
    fs::write(&txt, table.render()).with_context(|| format!("writing {}", txt.display()))?;
    Ok((table, timings))
}

/// Recomputes every row of a written table from the per-run reports.
pub fn verify_table(out: &Path) -> Result<AblationTable> {
    let table: AblationTable = read_json(&out.join(ABLATION_JSON))?;
    for row in &table.rows {
        let report: MetricsReport = read_json(&out.join(&row.run_dir).join(REPORT_JSON))?;
        let again = row_from_report(&row.variant, &row.run_dir, &report)?;
        if &again != row {
            bail!("row {} does not match {}/{REPORT_JSON}", row.variant, row.run_dir);
        }
    }
    Ok(table)
}
