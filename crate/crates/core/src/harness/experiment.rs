use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cost::{simulated_latency, CostModel};
use super::metrics::{mean, median};
use super::workload::{generate_workload, Task, Workload, WorkloadSpec};
use crate::calibration::{calibrate, CalibratedIndex, CalibrationConfig};
use crate::engine::{decode, EngineConfig};
use crate::error::{Error, Result};
use crate::lm::TableLm;
use crate::retrieval::DraftStore;

/// Decoding configurations compared by an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// No drafting: one token per step.
    Vanilla,
    /// Suffix-match retrieval over the context.
    Plain,
    /// Plain plus the calibrated token tree.
    Calibration,
    /// Plain plus draft reuse.
    Reuse,
    /// Calibration plus draft reuse.
    Full,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Vanilla,
        Variant::Plain,
        Variant::Calibration,
        Variant::Reuse,
        Variant::Full,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Vanilla => "vanilla",
            Variant::Plain => "plain",
            Variant::Calibration => "calibration",
            Variant::Reuse => "reuse",
            Variant::Full => "full",
        }
    }

    fn calibrated(self) -> bool {
        matches!(self, Variant::Calibration | Variant::Full)
    }

    fn engine(self, base: &EngineConfig) -> EngineConfig {
        EngineConfig {
            draft: self != Variant::Vanilla,
            reuse: matches!(self, Variant::Reuse | Variant::Full),
            ..*base
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::config("variants", format!("unknown variant {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub workload: WorkloadSpec,
    pub engine: EngineConfig,
    pub calibration: CalibrationConfig,
    pub cost: CostModel,
    pub variants: Vec<Variant>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            workload: WorkloadSpec::default(),
            engine: EngineConfig::default(),
            calibration: CalibrationConfig::default(),
            cost: CostModel::default(),
            variants: Variant::ALL.to_vec(),
        }
    }
}

impl ExperimentConfig {
    /// Parses a config document; unknown variant names are reported with
    /// their position.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let mut v: serde_json::Value = serde_json::from_str(s)?;
        if let Some(names) = v.get_mut("variants").and_then(|n| n.as_array_mut()) {
            for (i, n) in names.iter().enumerate() {
                let name = n
                    .as_str()
                    .ok_or_else(|| Error::config(format!("variants[{i}]"), "must be a string"))?;
                if name.parse::<Variant>().is_err() {
                    return Err(Error::config(
                        format!("variants[{i}]"),
                        format!("unknown variant {name:?}"),
                    ));
                }
            }
        }
        let cfg: ExperimentConfig = serde_json::from_value(v)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.workload.validate()?;
        self.engine.validate()?;
        self.calibration.validate()?;
        self.cost.validate()?;
        if self.variants.is_empty() {
            return Err(Error::config("variants", "no variants requested"));
        }
        if self.engine.target_draft_len > self.cost.verify_cost.len() {
            return Err(Error::config(
                "cost.verify_cost",
                format!(
                    "table shorter than target_draft_len {}",
                    self.engine.target_draft_len
                ),
            ));
        }
        Ok(())
    }
}

/// One task under one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRow {
    pub task: usize,
    pub variant: Variant,
    pub acceptance_ratio: f64,
    pub simulated_ms_per_token: f64,
    pub steps: usize,
    pub tokens_out: usize,
    pub mean_draft_len: f64,
    pub missing: usize,
    pub synonym: usize,
    pub redundant: usize,
    /// Output equals the greedy reference.
    pub lossless: bool,
    pub draft_len_histogram: BTreeMap<usize, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: Variant,
    pub tasks: usize,
    pub mean_acceptance_ratio: f64,
    pub mean_ms_per_token: f64,
    pub mean_draft_len: f64,
    /// Median over every step of every task.
    pub median_draft_len: f64,
    pub missing: usize,
    pub synonym: usize,
    pub redundant: usize,
    pub lossless_tasks: usize,
    pub speedup_vs_vanilla: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub versions: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    pub config: ExperimentConfig,
    pub summaries: Vec<VariantSummary>,
    pub tasks: Vec<TaskRow>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn summary(&self, v: Variant) -> Option<&VariantSummary> {
        self.summaries.iter().find(|s| s.variant == v)
    }

    pub fn rows(&self, v: Variant) -> impl Iterator<Item = &TaskRow> {
        self.tasks.iter().filter(move |r| r.variant == v)
    }

    /// Per-task rows without the histogram column.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "task",
            "variant",
            "acceptance_ratio",
            "simulated_ms_per_token",
            "steps",
            "tokens_out",
            "mean_draft_len",
            "missing",
            "synonym",
            "redundant",
            "lossless",
        ])?;
        for r in &self.tasks {
            out.write_record([
                r.task.to_string(),
                r.variant.to_string(),
                r.acceptance_ratio.to_string(),
                r.simulated_ms_per_token.to_string(),
                r.steps.to_string(),
                r.tokens_out.to_string(),
                r.mean_draft_len.to_string(),
                r.missing.to_string(),
                r.synonym.to_string(),
                r.redundant.to_string(),
                r.lossless.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn summarize(v: Variant, rows: &[&TaskRow], cost: &CostModel) -> VariantSummary {
    let col = |f: fn(&TaskRow) -> f64| mean(&rows.iter().map(|r| f(r)).collect::<Vec<_>>());
    let mut lens = Vec::new();
    for r in rows {
        for (&len, &n) in &r.draft_len_histogram {
            lens.extend(std::iter::repeat_n(len, n));
        }
    }
    let ms = col(|r| r.simulated_ms_per_token);
    VariantSummary {
        variant: v,
        tasks: rows.len(),
        mean_acceptance_ratio: col(|r| r.acceptance_ratio),
        mean_ms_per_token: ms,
        mean_draft_len: col(|r| r.mean_draft_len),
        median_draft_len: median(&lens),
        missing: rows.iter().map(|r| r.missing).sum(),
        synonym: rows.iter().map(|r| r.synonym).sum(),
        redundant: rows.iter().map(|r| r.redundant).sum(),
        lossless_tasks: rows.iter().filter(|r| r.lossless).count(),
        speedup_vs_vanilla: if ms > 0.0 {
            cost.vanilla_token_cost / ms
        } else {
            0.0
        },
    }
}

/// Context plus prompt, as the store and the calibration pass see it.
fn request_text(task: &Task) -> Vec<crate::token::TokenId> {
    let mut text = task.context.clone();
    text.extend_from_slice(&task.prompt);
    text
}

fn run_task(lm: &TableLm, task: &Task, cfg: &ExperimentConfig) -> Result<Vec<TaskRow>> {
    let text = request_text(task);
    let calibrated = if cfg.variants.iter().any(|v| v.calibrated()) {
        let logits = lm.prefill(&text)?;
        Some(CalibratedIndex::from_tree(&calibrate(
            &text,
            &logits,
            &cfg.calibration,
        )?))
    } else {
        None
    };
    let mut rows = Vec::with_capacity(cfg.variants.len());
    for &v in &cfg.variants {
        let mut store = DraftStore::new(&text);
        if v.calibrated() {
            store.set_calibrated(calibrated.clone().expect("built above"));
        }
        let out = decode(lm, &mut store, &task.prompt, &v.engine(&cfg.engine))?;
        let s = &out.stats;
        let mut hist = BTreeMap::new();
        for &d in &s.per_step_draft_lens {
            *hist.entry(d).or_insert(0) += 1;
        }
        let ms = if v == Variant::Vanilla {
            cfg.cost.vanilla_token_cost
        } else {
            simulated_latency(s, &cfg.cost)?
        };
        rows.push(TaskRow {
            task: task.id,
            variant: v,
            acceptance_ratio: s.acceptance_ratio,
            simulated_ms_per_token: ms,
            steps: s.steps,
            tokens_out: s.tokens_out,
            mean_draft_len: s.mean_draft_len(),
            missing: s.case_counts.missing,
            synonym: s.case_counts.synonym,
            redundant: s.case_counts.redundant,
            lossless: out.tokens == task.reference,
            draft_len_histogram: hist,
        });
    }
    Ok(rows)
}

/// Runs every configured variant on every task of an existing workload.
/// Tasks run in parallel; the report does not depend on scheduling.
pub fn run_on_workload(cfg: &ExperimentConfig, workload: &Workload) -> Result<RunReport> {
    cfg.validate()?;
    let per_task: Vec<Vec<TaskRow>> = workload
        .tasks
        .par_iter()
        .map(|t| run_task(&workload.lm, t, cfg))
        .collect::<Result<_>>()?;
    let tasks: Vec<TaskRow> = per_task.into_iter().flatten().collect();
    let summaries = cfg
        .variants
        .iter()
        .map(|&v| {
            let rows: Vec<&TaskRow> = tasks.iter().filter(|r| r.variant == v).collect();
            summarize(v, &rows, &cfg.cost)
        })
        .collect();
    let versions = BTreeMap::from([(
        "npudraft".to_string(),
        env!("CARGO_PKG_VERSION").to_string(),
    )]);
    Ok(RunReport {
        versions,
        timestamp: None,
        config: cfg.clone(),
        summaries,
        tasks,
    })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let workload = generate_workload(&cfg.workload)?;
    run_on_workload(cfg, &workload)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(overlap: f64, synonym: f64, missing: f64) -> ExperimentConfig {
        ExperimentConfig {
            workload: WorkloadSpec {
                num_tasks: 8,
                overlap_rate: overlap,
                synonym_rate: synonym,
                missing_rate: missing,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn every_variant_is_lossless() {
        let r = run_experiment(&small(0.4, 0.3, 0.2)).unwrap();
        assert_eq!(r.tasks.len(), 8 * Variant::ALL.len());
        assert!(r.tasks.iter().all(|t| t.lossless));
        assert!(r.rows(Variant::Vanilla).all(|t| t.acceptance_ratio == 1.0));
    }

    #[test]
    fn means_come_from_rows() {
        let r = run_experiment(&small(0.5, 0.2, 0.0)).unwrap();
        for s in &r.summaries {
            let rows: Vec<&TaskRow> = r.rows(s.variant).collect();
            let m = rows.iter().map(|t| t.acceptance_ratio).sum::<f64>() / rows.len() as f64;
            assert!((m - s.mean_acceptance_ratio).abs() < 1e-12);
        }
    }

    #[test]
    fn repeat_runs_are_identical() {
        let cfg = small(0.3, 0.3, 0.3);
        assert_eq!(
            run_experiment(&cfg).unwrap().to_json(),
            run_experiment(&cfg).unwrap().to_json()
        );
    }

    #[test]
    fn bad_variant_names_the_key() {
        let err = ExperimentConfig::from_json_str(r#"{"variants":["plain","turbo"]}"#).unwrap_err();
        match err {
            Error::Config { key, .. } => assert_eq!(key, "variants[1]"),
            e => panic!("{e}"),
        }
        let cfg = ExperimentConfig::from_json_str(r#"{"variants":["vanilla","full"]}"#).unwrap();
        assert_eq!(cfg.variants, vec![Variant::Vanilla, Variant::Full]);
    }

    #[test]
    fn csv_has_one_row_per_task_and_variant() {
        let r = run_experiment(&small(0.5, 0.0, 0.0)).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + r.tasks.len());
        assert!(text.starts_with("task,variant,acceptance_ratio"));
    }
}
