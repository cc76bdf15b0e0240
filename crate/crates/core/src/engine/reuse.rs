//! Draft reuse: keep the longest model-agreeing tail of a rejected draft.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::token::TokenId;

/// Offsets of the retained window `x[e+gamma ..= e+epsilon]` relative to the
/// rejection index `e`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReuseWindow {
    pub gamma: usize,
    pub epsilon: usize,
}

impl ReuseWindow {
    /// Number of agreeing draft tokens in the window.
    pub fn span(&self) -> usize {
        self.epsilon - self.gamma + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectionCase {
    /// The output inserts tokens before a still-valid draft tail.
    Missing,
    /// A draft span was replaced by different tokens; the rest is valid.
    Synonym,
    /// Nothing after the rejection agrees with the model.
    Redundant,
}

/// Longest window after `e` where draft and predictions agree.
///
/// `x` is the draft (without the anchor token), `y[i]` the model's greedy
/// prediction after `x[..i]`, so `|y| = |x| + 1`. Among equally long windows
/// the one with the smallest `gamma` wins.
pub fn compute_reuse(x: &[TokenId], y: &[TokenId], e: usize) -> Result<Option<ReuseWindow>> {
    if y.len() != x.len() + 1 {
        return Err(Error::input(format!(
            "predictions must be one longer than the draft ({} vs {})",
            y.len(),
            x.len()
        )));
    }
    if e >= x.len() {
        return Err(Error::input(format!(
            "rejection index {e} outside draft of {}",
            x.len()
        )));
    }
    if x[e] == y[e] {
        return Err(Error::input(format!(
            "draft agrees with the model at rejection index {e}"
        )));
    }
    let mut best: Option<(usize, usize)> = None;
    let mut run_start = None;
    for i in e + 1..=x.len() {
        let agree = i < x.len() && x[i] == y[i];
        match (agree, run_start) {
            (true, None) => run_start = Some(i),
            (false, Some(s)) => {
                let len = i - s;
                if best.is_none_or(|(bs, be)| len > be - bs + 1) {
                    best = Some((s, i - 1));
                }
                run_start = None;
            }
            _ => {}
        }
    }
    Ok(best.map(|(s, t)| ReuseWindow {
        gamma: s - e,
        epsilon: t - e,
    }))
}

/// Names the rejection pattern. Analytics only.
pub fn classify_case(reuse: Option<ReuseWindow>) -> RejectionCase {
    match reuse {
        None => RejectionCase::Redundant,
        Some(w) if w.gamma == 1 => RejectionCase::Missing,
        Some(_) => RejectionCase::Synonym,
    }
}

/// Tokens kept for later steps: exactly the agreeing window.
pub fn reusable_tokens(x: &[TokenId], e: usize, w: ReuseWindow) -> Vec<TokenId> {
    x[e + w.gamma..=e + w.epsilon].to_vec()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub tokens: Vec<TokenId>,
    pub born_step: usize,
}

/// Segments retained from rejected drafts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReuseBuffer {
    segments: Vec<Segment>,
    pub cumulative_threshold: usize,
    pub inserted: usize,
    pub dropped: usize,
    pub consumed: usize,
}

impl ReuseBuffer {
    pub fn new(cumulative_threshold: usize) -> Self {
        ReuseBuffer {
            segments: Vec::new(),
            cumulative_threshold,
            inserted: 0,
            dropped: 0,
            consumed: 0,
        }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Adds a segment unless an identical one is already live.
    pub fn insert(&mut self, tokens: Vec<TokenId>, step: usize) -> bool {
        if tokens.is_empty() || self.segments.iter().any(|s| s.tokens == tokens) {
            return false;
        }
        self.segments.push(Segment {
            tokens,
            born_step: step,
        });
        self.inserted += 1;
        true
    }

    /// Removes segments by index (ascending), counting them as dropped.
    pub(crate) fn drop_indices(&mut self, idx: &[usize]) {
        for &i in idx.iter().rev() {
            self.segments.remove(i);
        }
        self.dropped += idx.len();
    }

    /// Removes segments whose draft branch started with `first`.
    pub(crate) fn consume(&mut self, heads: &[(usize, TokenId)], first: TokenId) {
        let mut hit: Vec<usize> = heads
            .iter()
            .filter(|(_, t)| *t == first)
            .map(|(i, _)| *i)
            .collect();
        hit.sort_unstable();
        hit.dedup();
        for &i in hit.iter().rev() {
            self.segments.remove(i);
        }
        self.consumed += hit.len();
    }
}
