//! `gradcheck`: tape gradients against central differences, per op and for
//! the full training loss.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::Result;
use serde::{Deserialize, Serialize};
use srflow_flow::training_loss_grad_check;
use srflow_numerics::{check_all_ops, GradCheckOptions, GradCheckReport};

use crate::artifact::{ensure_dir, write_json};

pub const TOLERANCE: f64 = 1e-4;
pub const GRADCHECK_JSON: &str = "gradcheck.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
    pub passed: bool,
    pub error: Option<String>,
}

impl CheckRow {
    fn new(name: String, r: &GradCheckReport) -> Self {
        Self {
            name,
            checked: r.checked,
            max_rel_error: r.max_rel_error,
            passed: r.passed(),
            error: r.error.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckSummary {
    pub tolerance: f64,
    pub step: f64,
    pub seed: u64,
    pub rows: Vec<CheckRow>,
}

impl GradcheckSummary {
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for r in &self.rows {
            let verdict = if r.passed { "ok" } else { "FAIL" };
            let _ = writeln!(s, "{:<16} {:>5} coords  max rel err {:.3e}  {verdict}", r.name, r.checked, r.max_rel_error);
            if let Some(e) = &r.error {
                let _ = writeln!(s, "  error: {e}");
            }
        }
        s
    }
}

/// Checks every registered op and `samples` coordinates of the training
/// loss of a depth-two network.
pub fn cmd_gradcheck(seed: u64, samples: usize, out: Option<&Path>) -> Result<GradcheckSummary> {
    let opts = GradCheckOptions {
        seed,
        ..GradCheckOptions::default()
    };
    let mut rows: Vec<CheckRow> = check_all_ops(seed, TOLERANCE, opts)
        .iter()
        .map(|(kind, r)| CheckRow::new(format!("{kind:?}"), r))
        .collect();
    let r = training_loss_grad_check(samples, TOLERANCE, seed)?;
    rows.push(CheckRow::new("training loss".into(), &r));
    let summary = GradcheckSummary {
        tolerance: TOLERANCE,
        step: opts.step,
        seed,
        rows,
    };
    if let Some(dir) = out {
        ensure_dir(dir)?;
        write_json(&dir.join(GRADCHECK_JSON), &summary)?;
    }
    Ok(summary)
}
