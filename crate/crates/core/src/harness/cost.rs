use serde::{Deserialize, Serialize};

use crate::engine::DecodeStats;
use crate::error::{Error, Result};

/// Per-token verification cost at draft length 1 and 32 in the default table.
pub const VERIFY_COST_LEN1: f64 = 51.1;
pub const VERIFY_COST_LEN32: f64 = 5.7;
const DEFAULT_TABLE_LEN: usize = 64;

/// Declarative latency model, in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostModel {
    pub draft_cost_per_step: f64,
    /// `verify_cost[L - 1]` is the per-token cost of verifying a draft of
    /// length `L`.
    pub verify_cost: Vec<f64>,
    pub vanilla_token_cost: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        let slope = (VERIFY_COST_LEN1 - VERIFY_COST_LEN32) / 31.0;
        let verify_cost = (1..=DEFAULT_TABLE_LEN)
            .map(|l| VERIFY_COST_LEN1 - slope * (l.min(32) - 1) as f64)
            .collect();
        CostModel {
            draft_cost_per_step: 0.5,
            verify_cost,
            vanilla_token_cost: VERIFY_COST_LEN1,
        }
    }
}

impl CostModel {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let cm: CostModel = serde_json::from_str(s)?;
        cm.validate()?;
        Ok(cm)
    }

    pub fn validate(&self) -> Result<()> {
        if self.verify_cost.is_empty() {
            return Err(Error::config("cost.verify_cost", "table is empty"));
        }
        if self.verify_cost.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::config(
                "cost.verify_cost",
                "costs must be finite and non-negative",
            ));
        }
        if self.verify_cost.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::config(
                "cost.verify_cost",
                "per-token cost must not grow with length",
            ));
        }
        if !(self.draft_cost_per_step >= 0.0 && self.vanilla_token_cost >= 0.0) {
            return Err(Error::config("cost", "costs must be non-negative"));
        }
        if !self.vanilla_token_cost.is_finite()
            || (1..=self.verify_cost.len()).any(|l| !self.step_cost(l).is_ok_and(f64::is_finite))
        {
            return Err(Error::config("cost", "step costs overflow"));
        }
        Ok(())
    }

    /// Per-token verification cost at draft length `len` (at least 1).
    pub fn verify_cost(&self, len: usize) -> Result<f64> {
        let l = len.max(1);
        self.verify_cost.get(l - 1).copied().ok_or_else(|| {
            Error::config("cost.verify_cost", format!("no entry for draft length {l}"))
        })
    }

    /// Cost of one decode step with a draft of `draft_len` nodes. An empty
    /// draft still pays a length-1 verification.
    pub fn step_cost(&self, draft_len: usize) -> Result<f64> {
        let l = draft_len.max(1);
        Ok(self.draft_cost_per_step + l as f64 * self.verify_cost(l)?)
    }
}

/// Simulated time per output token of a finished decode.
pub fn simulated_latency(stats: &DecodeStats, cm: &CostModel) -> Result<f64> {
    if stats.tokens_out == 0 {
        return Err(Error::input("decode produced no tokens"));
    }
    let mut total = 0.0;
    for &d in &stats.per_step_draft_lens {
        total += cm.step_cost(d)?;
    }
    Ok(total / stats.tokens_out as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(lens: Vec<usize>, tokens_out: usize) -> DecodeStats {
        DecodeStats {
            steps: lens.len(),
            tokens_out,
            per_step_draft_lens: lens,
            ..Default::default()
        }
    }

    #[test]
    fn default_table_anchors() {
        let cm = CostModel::default();
        cm.validate().unwrap();
        assert_eq!(cm.verify_cost(1).unwrap(), 51.1);
        assert!((cm.verify_cost(32).unwrap() - 5.7).abs() < 1e-9);
        assert!((cm.verify_cost(64).unwrap() - 5.7).abs() < 1e-9);
        assert!(cm.verify_cost(65).is_err());
        assert!(cm.verify_cost(1).unwrap() >= cm.verify_cost(32).unwrap());
    }

    #[test]
    fn empty_drafts_cost_a_length_one_pass() {
        let cm = CostModel::default();
        let s = stats(vec![0; 10], 10);
        let l = simulated_latency(&s, &cm).unwrap();
        assert!((l - (cm.draft_cost_per_step + 51.1)).abs() < 1e-9);
    }

    #[test]
    fn draft_cost_is_linear() {
        let cm = CostModel::default();
        let s = stats(vec![4, 9, 0, 32], 13);
        let base = simulated_latency(&s, &cm).unwrap();
        let mut cm2 = cm.clone();
        cm2.draft_cost_per_step *= 2.0;
        let delta = cm.draft_cost_per_step;
        let bumped = simulated_latency(&s, &cm2).unwrap();
        assert!((bumped - base - delta * 4.0 / 13.0).abs() < 1e-9);
    }

    #[test]
    fn acceptance_four_point_two_beats_vanilla() {
        // 10 steps of 32-token drafts producing 42 tokens.
        let cm = CostModel::default();
        let s = stats(vec![32; 10], 42);
        assert!(simulated_latency(&s, &cm).unwrap() < cm.vanilla_token_cost);
    }

    #[test]
    fn validation() {
        assert!(CostModel::from_json_str(r#"{"verify_cost":[]}"#).is_err());
        assert!(CostModel::from_json_str(r#"{"verify_cost":[1.0, 2.0]}"#).is_err());
        let cm = CostModel::from_json_str(r#"{"verify_cost":[3.0, 2.0]}"#).unwrap();
        assert_eq!(cm.draft_cost_per_step, 0.5);
    }
}
