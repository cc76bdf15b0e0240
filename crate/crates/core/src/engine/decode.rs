use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::TableLm;
use crate::retrieval::{DraftStore, RetrievalConfig};
use crate::token::TokenId;
use crate::verify::{predictions, verify_tree};

use super::draft::build_step_draft;
use super::reuse::{
    classify_case, compute_reuse, reusable_tokens, RejectionCase, ReuseBuffer, ReuseWindow,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    /// Draft tree size the verifier runs most efficiently at.
    pub target_draft_len: usize,
    pub max_steps: usize,
    pub max_new_tokens: usize,
    /// Tail of the output used as the retrieval query.
    pub recent_window: usize,
    pub retrieval: RetrievalConfig,
    /// Retrieval drafting on/off; off degenerates to plain greedy decoding.
    pub draft: bool,
    pub reuse: bool,
    pub cumulative_threshold: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            target_draft_len: 32,
            max_steps: 4096,
            max_new_tokens: 512,
            recent_window: 64,
            retrieval: RetrievalConfig::default(),
            draft: true,
            reuse: true,
            cumulative_threshold: 64,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.target_draft_len == 0 {
            return Err(Error::config(
                "engine.target_draft_len",
                "must be at least 1",
            ));
        }
        if self.max_steps == 0 {
            return Err(Error::config("engine.max_steps", "must be at least 1"));
        }
        if self.recent_window == 0 {
            return Err(Error::config("engine.recent_window", "must be at least 1"));
        }
        self.retrieval.validate()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseCounts {
    pub missing: usize,
    pub synonym: usize,
    pub redundant: usize,
}

impl CaseCounts {
    pub fn record(&mut self, case: RejectionCase) {
        match case {
            RejectionCase::Missing => self.missing += 1,
            RejectionCase::Synonym => self.synonym += 1,
            RejectionCase::Redundant => self.redundant += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.missing + self.synonym + self.redundant
    }

    pub fn add(&mut self, other: &CaseCounts) {
        self.missing += other.missing;
        self.synonym += other.synonym;
        self.redundant += other.redundant;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DecodeStats {
    pub steps: usize,
    pub tokens_out: usize,
    pub acceptance_ratio: f64,
    pub case_counts: CaseCounts,
    pub rejections: usize,
    pub per_step_draft_lens: Vec<usize>,
    /// Stopped by `max_steps` before eos or the token limit.
    pub truncated: bool,
    pub reuse_inserted: usize,
    pub reuse_dropped: usize,
    pub reuse_consumed: usize,
}

impl DecodeStats {
    pub fn mean_draft_len(&self) -> f64 {
        if self.per_step_draft_lens.is_empty() {
            return 0.0;
        }
        self.per_step_draft_lens.iter().sum::<usize>() as f64
            / self.per_step_draft_lens.len() as f64
    }
}

/// One line of the decode trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub draft_len: usize,
    pub accepted: usize,
    pub correction: TokenId,
    pub case: Option<RejectionCase>,
    pub reuse_active: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutput {
    pub tokens: Vec<TokenId>,
    pub stats: DecodeStats,
    pub trace: Vec<StepRecord>,
}

impl DecodeOutput {
    pub fn write_trace<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.trace {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Draft, verify, append, index, and recycle rejected drafts until eos,
/// `max_new_tokens`, or `max_steps`.
///
/// `store` must already index the request context (including the prompt);
/// generated tokens are appended to its context index as they are accepted.
pub fn decode(
    lm: &TableLm,
    store: &mut DraftStore,
    prompt: &[TokenId],
    cfg: &EngineConfig,
) -> Result<DecodeOutput> {
    cfg.validate()?;
    if prompt.is_empty() {
        return Err(Error::input("empty prompt"));
    }
    lm.check_tokens(prompt)?;
    let mut seq = prompt.to_vec();
    let mut out: Vec<TokenId> = Vec::new();
    let mut stats = DecodeStats::default();
    let mut trace = Vec::new();
    let mut buffer = ReuseBuffer::new(cfg.cumulative_threshold);
    let eos = lm.eos();

    loop {
        if out.len() >= cfg.max_new_tokens || out.last() == Some(&eos) {
            break;
        }
        if stats.steps == cfg.max_steps {
            stats.truncated = true;
            break;
        }
        let recent = &seq[seq.len().saturating_sub(cfg.recent_window)..];
        let step = if cfg.draft {
            build_step_draft(store, &mut buffer, recent, cfg)
        } else {
            Default::default()
        };
        let res = verify_tree(lm, &seq, &step.tree)?;

        let mut case = None;
        if let Some(e) = res.rejection_pos {
            let parent = res.accepted_nodes.last().copied();
            let mut best: Option<(ReuseWindow, Vec<TokenId>)> = None;
            for leaf in step.tree.leaves_under(parent) {
                let x = step.tree.path_to(leaf);
                let y = predictions(lm, &seq, &x);
                if let Some(w) = compute_reuse(&x, &y, e)? {
                    if best.as_ref().is_none_or(|(b, _)| {
                        w.span() > b.span() || (w.span() == b.span() && w.gamma < b.gamma)
                    }) {
                        best = Some((w, reusable_tokens(&x, e, w)));
                    }
                }
            }
            let c = classify_case(best.as_ref().map(|(w, _)| *w));
            stats.case_counts.record(c);
            stats.rejections += 1;
            case = Some(c);
            if let Some(first) = res.accepted.first() {
                buffer.consume(&step.reused, *first);
            }
            if cfg.reuse {
                if let Some((_, tokens)) = best {
                    buffer.insert(tokens, stats.steps);
                }
            }
        } else if let Some(first) = res.accepted.first() {
            buffer.consume(&step.reused, *first);
        }

        let mut emitted: Vec<TokenId> = res.emitted().collect();
        if let Some(p) = emitted.iter().position(|&t| t == eos) {
            emitted.truncate(p + 1);
        }
        emitted.truncate(cfg.max_new_tokens - out.len());

        stats.steps += 1;
        stats.per_step_draft_lens.push(step.tree.len());
        trace.push(StepRecord {
            draft_len: step.tree.len(),
            accepted: res.accepted_count,
            correction: res.correction,
            case,
            reuse_active: step.reused.len(),
        });
        store.extend_context(&emitted);
        seq.extend_from_slice(&emitted);
        out.extend_from_slice(&emitted);
    }

    stats.tokens_out = out.len();
    stats.acceptance_ratio = if stats.steps == 0 {
        1.0
    } else {
        stats.tokens_out as f64 / stats.steps as f64
    };
    stats.reuse_inserted = buffer.inserted;
    stats.reuse_dropped = buffer.dropped;
    stats.reuse_consumed = buffer.consumed;
    Ok(DecodeOutput {
        tokens: out,
        stats,
        trace,
    })
}
