//! Draft store: suffix-automaton indexes over the request context and past
//! responses, plus an optional calibrated source.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::automaton::{SuffixAutomaton, SEPARATOR};
use crate::calibration::CalibratedIndex;
use crate::error::{Error, Result};
use crate::token::{TokenId, Vocab};
use crate::tree::{DraftSource, DraftTree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    /// Shortest suffix of the recent output that counts as a match.
    pub match_len_min: usize,
    /// Branches taken per source (and per level of a calibrated subtree).
    pub max_branch: usize,
    /// Longest continuation emitted per branch.
    pub max_continuation: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            match_len_min: 1,
            max_branch: 4,
            max_continuation: 16,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.match_len_min == 0 {
            return Err(Error::config(
                "retrieval.match_len_min",
                "must be at least 1",
            ));
        }
        if self.max_branch == 0 {
            return Err(Error::config("retrieval.max_branch", "must be at least 1"));
        }
        if self.max_continuation == 0 {
            return Err(Error::config(
                "retrieval.max_continuation",
                "must be at least 1",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct DraftStore {
    context: SuffixAutomaton,
    history: SuffixAutomaton,
    responses: Vec<Vec<TokenId>>,
    calibrated: Option<CalibratedIndex>,
}

impl DraftStore {
    pub fn new(context: &[TokenId]) -> Self {
        DraftStore {
            context: SuffixAutomaton::from_tokens(context),
            ..Default::default()
        }
    }

    pub fn context_index(&self) -> &SuffixAutomaton {
        &self.context
    }

    pub fn history_index(&self) -> &SuffixAutomaton {
        &self.history
    }

    pub fn responses(&self) -> &[Vec<TokenId>] {
        &self.responses
    }

    pub fn calibrated(&self) -> Option<&CalibratedIndex> {
        self.calibrated.as_ref()
    }

    /// Appends newly generated tokens to the context index.
    pub fn extend_context(&mut self, tokens: &[TokenId]) {
        for &t in tokens {
            self.context.extend(t);
        }
    }

    /// Records a finished response as a history source.
    pub fn add_history(&mut self, response: &[TokenId]) -> Result<()> {
        if response.is_empty() {
            return Err(Error::input("empty response"));
        }
        if !self.history.is_empty() {
            self.history.extend(SEPARATOR);
        }
        for &t in response {
            self.history.extend(t);
        }
        self.responses.push(response.to_vec());
        Ok(())
    }

    /// Installs a calibrated source, merging with any existing one.
    pub fn set_calibrated(&mut self, index: CalibratedIndex) {
        match &mut self.calibrated {
            Some(existing) => existing.merge(index),
            None => self.calibrated = Some(index),
        }
    }

    /// Builds a draft tree for the output whose tail is `recent`.
    ///
    /// Sources are consulted calibrated first, then whichever of context and
    /// history has the longer suffix match (context on ties). The calibrated
    /// subtree is the one rooted where the context match ends, if any. Paths are merged
    /// into one tree sharing common prefixes; at most `max_nodes` nodes.
    pub fn retrieve(
        &self,
        recent: &[TokenId],
        cfg: &RetrievalConfig,
        max_nodes: usize,
    ) -> DraftTree {
        let mut tree = DraftTree::new();
        let mut budget = max_nodes;
        if recent.is_empty() || budget == 0 {
            return tree;
        }
        let mut matches = Vec::new();
        for (sa, source) in [
            (&self.context, DraftSource::Context),
            (&self.history, DraftSource::History),
        ] {
            if let Some(m) = sa.longest_suffix_match(recent) {
                if m.len >= cfg.match_len_min {
                    matches.push((m, sa, source));
                }
            }
        }
        if let Some(cal) = &self.calibrated {
            let anchor = *recent.last().expect("non-empty");
            let pos = matches
                .iter()
                .find(|(_, _, s)| *s == DraftSource::Context)
                .map(|(m, sa, _)| sa.first_end(*m));
            budget -= cal.draft_into(anchor, pos, &mut tree, cfg, budget);
        }
        // Stable: context stays ahead of history on equal match length.
        matches.sort_by_key(|m| std::cmp::Reverse(m.0.len));
        for (m, sa, source) in matches {
            for path in sa.continuations(m, cfg.max_branch, cfg.max_continuation) {
                if budget == 0 {
                    return tree;
                }
                budget -= tree.insert_path(&path, source, budget);
            }
        }
        tree
    }

    /// Writes history as JSONL, one token-string array per response.
    pub fn save_history<W: Write>(&self, mut w: W, vocab: &Vocab) -> Result<()> {
        for r in &self.responses {
            let words: Vec<&str> = r.iter().map(|&t| vocab.token(t).unwrap_or("<?>")).collect();
            serde_json::to_writer(&mut w, &words)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Loads history JSONL written by [`save_history`](Self::save_history).
    pub fn load_history<R: BufRead>(&mut self, r: R, vocab: &Vocab) -> Result<usize> {
        let responses = parse_history(r, vocab)?;
        let n = responses.len();
        for resp in responses {
            self.add_history(&resp)?;
        }
        Ok(n)
    }
}

pub fn parse_history<R: BufRead>(r: R, vocab: &Vocab) -> Result<Vec<Vec<TokenId>>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let words: Vec<String> = serde_json::from_str(&line)?;
        if words.is_empty() {
            return Err(Error::input(format!(
                "history line {}: empty response",
                i + 1
            )));
        }
        let ids = words
            .iter()
            .map(|w| {
                vocab.id(w).ok_or_else(|| {
                    Error::input(format!("history line {}: unknown token `{w}`", i + 1))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(ids);
    }
    Ok(out)
}
