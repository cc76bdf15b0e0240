//! In-context calibration: a token tree of model-preferred successors built
//! from prefill distributions over the context.
//!
//! For each context position the top successors of its prefill row are
//! sampled (above a probability floor). A sampled token that is the context's
//! own next token continues from there; any other is located at its first
//! occurrence in the context. The most likely successor additionally
//! continues from the next position, as if it had replaced the token there.
//! Expansion is depth-first until the depth or node budget runs out.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::LogitMatrix;
use crate::retrieval::{DraftStore, RetrievalConfig};
use crate::token::{TokenId, Vocab};
use crate::tree::{DraftSource, DraftTree};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    pub top_k: usize,
    pub prob_min: f64,
    pub max_depth: usize,
    pub max_nodes: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            top_k: 3,
            prob_min: 0.05,
            max_depth: 8,
            max_nodes: 1 << 16,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.top_k == 0 {
            return Err(Error::config("calibration.top_k", "must be at least 1"));
        }
        if !(self.prob_min > 0.0 && self.prob_min <= 1.0) {
            return Err(Error::config("calibration.prob_min", "must lie in (0, 1]"));
        }
        if self.max_depth == 0 {
            return Err(Error::config("calibration.max_depth", "must be at least 1"));
        }
        if self.max_nodes < self.top_k {
            return Err(Error::config(
                "calibration.max_nodes",
                "must be at least top_k",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalNode {
    pub token: TokenId,
    /// Probability in the row this node was sampled from (1.0 for anchors).
    pub prob: f64,
    /// Context position whose row produced this node's children.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<usize>,
    /// Position after the parent's, when the node stands in for a different
    /// context token there; its row supplies further children.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aligned: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<CalNode>,
}

impl CalNode {
    fn count(&self) -> usize {
        1 + self.children.iter().map(CalNode::count).sum::<usize>()
    }

    fn depth(&self) -> usize {
        self.children
            .iter()
            .map(|c| 1 + c.depth())
            .max()
            .unwrap_or(0)
    }

    /// Visits every (parent, child) edge.
    pub fn for_each_edge(&self, f: &mut impl FnMut(&CalNode, &CalNode)) {
        for c in &self.children {
            f(self, c);
            c.for_each_edge(f);
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CalibratedTree {
    pub roots: Vec<CalNode>,
    /// Number of distinct context rows that were sampled.
    #[serde(skip)]
    pub sample_passes: usize,
}

impl CalibratedTree {
    pub fn node_count(&self) -> usize {
        self.roots.iter().map(CalNode::count).sum()
    }

    /// Longest anchor-to-leaf edge count.
    pub fn depth(&self) -> usize {
        self.roots.iter().map(CalNode::depth).max().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }

    /// Debug dump: nested `{token, prob, children}` with token strings.
    pub fn to_json(&self, vocab: &Vocab) -> serde_json::Value {
        fn node(n: &CalNode, vocab: &Vocab) -> serde_json::Value {
            serde_json::json!({
                "token": vocab.token(n.token).unwrap_or("<?>"),
                "prob": n.prob,
                "children": n.children.iter().map(|c| node(c, vocab)).collect::<Vec<_>>(),
            })
        }
        serde_json::Value::Array(self.roots.iter().map(|r| node(r, vocab)).collect())
    }
}

struct Builder<'a> {
    context: &'a [TokenId],
    logits: &'a LogitMatrix,
    cfg: &'a CalibrationConfig,
    first_occurrence: HashMap<TokenId, usize>,
    samples: Vec<Option<Vec<(TokenId, f64)>>>,
    passes: usize,
    budget: usize,
}

impl Builder<'_> {
    fn sample(&mut self, pos: usize) -> Vec<(TokenId, f64)> {
        if self.samples[pos].is_none() {
            self.passes += 1;
            self.samples[pos] = Some(self.logits.top_k(pos, self.cfg.top_k, self.cfg.prob_min));
        }
        self.samples[pos].clone().expect("filled above")
    }

    fn expand(&mut self, pos: usize, depth: usize) -> Vec<CalNode> {
        let mut out = Vec::new();
        for (rank, (token, prob)) in self.sample(pos).into_iter().enumerate() {
            if self.budget == 0 {
                break;
            }
            self.budget -= 1;
            // An occurrence right after `pos` is the in-context one. Otherwise
            // the token is searched, and the top prediction also continues
            // from the next position, which it would occupy had the context
            // followed the model.
            let here = pos + 1 < self.context.len();
            let (next, aligned) = if here && self.context[pos + 1] == token {
                (Some(pos + 1), None)
            } else {
                (
                    self.first_occurrence.get(&token).copied(),
                    (rank == 0 && here).then_some(pos + 1),
                )
            };
            let mut children = Vec::new();
            if depth < self.cfg.max_depth {
                if let Some(q) = next {
                    children = self.expand(q, depth + 1);
                }
                if let Some(q) = aligned {
                    let more = self.expand(q, depth + 1);
                    merge_children(&mut children, more);
                }
            }
            out.push(CalNode {
                token,
                prob,
                position: next,
                aligned,
                children,
            });
        }
        out
    }
}

/// Builds the calibrated tree from prefill rows (`logits.row(t)` predicts the
/// token after `context[t]`).
pub fn calibrate(
    context: &[TokenId],
    logits: &LogitMatrix,
    cfg: &CalibrationConfig,
) -> Result<CalibratedTree> {
    cfg.validate()?;
    if logits.len() != context.len() {
        return Err(Error::input(format!(
            "{} logit rows for {} context tokens",
            logits.len(),
            context.len()
        )));
    }
    let mut first_occurrence = HashMap::new();
    for (i, &t) in context.iter().enumerate() {
        first_occurrence.entry(t).or_insert(i);
    }
    let mut b = Builder {
        context,
        logits,
        cfg,
        first_occurrence,
        samples: vec![None; context.len()],
        passes: 0,
        budget: cfg.max_nodes,
    };
    let mut roots = Vec::new();
    for t in 0..context.len() {
        if b.budget < 2 {
            break;
        }
        b.budget -= 1;
        let children = b.expand(t, 1);
        if children.is_empty() {
            b.budget += 1;
            continue;
        }
        roots.push(CalNode {
            token: b.context[t],
            prob: 1.0,
            position: Some(t),
            aligned: None,
            children,
        });
    }
    Ok(CalibratedTree {
        roots,
        sample_passes: b.passes,
    })
}

/// Calibrated continuations keyed by anchor token, with anchors of the same
/// token merged, plus the unmerged subtree of each anchor position.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CalibratedIndex {
    anchors: HashMap<TokenId, Vec<CalNode>>,
    positions: HashMap<usize, (TokenId, Vec<CalNode>)>,
}

fn merge_children(dst: &mut Vec<CalNode>, src: Vec<CalNode>) {
    for s in src {
        match dst.iter_mut().find(|d| d.token == s.token) {
            Some(d) => {
                d.prob = d.prob.max(s.prob);
                merge_children(&mut d.children, s.children);
            }
            None => dst.push(s),
        }
    }
}

fn sort_children(nodes: &mut [CalNode]) {
    nodes.sort_by(|a, b| b.prob.total_cmp(&a.prob).then(a.token.cmp(&b.token)));
    for n in nodes {
        sort_children(&mut n.children);
    }
}

impl CalibratedIndex {
    pub fn from_tree(tree: &CalibratedTree) -> Self {
        let mut index = CalibratedIndex::default();
        for r in &tree.roots {
            merge_children(
                index.anchors.entry(r.token).or_default(),
                r.children.clone(),
            );
            if let Some(p) = r.position {
                index.positions.insert(p, (r.token, r.children.clone()));
            }
        }
        for v in index.anchors.values_mut() {
            sort_children(v);
        }
        for (_, v) in index.positions.values_mut() {
            sort_children(v);
        }
        index
    }

    pub fn merge(&mut self, other: CalibratedIndex) {
        for (k, v) in other.anchors {
            let dst = self.anchors.entry(k).or_default();
            merge_children(dst, v);
            sort_children(dst);
        }
        for (p, v) in other.positions {
            self.positions.entry(p).or_insert(v);
        }
    }

    pub fn num_anchors(&self) -> usize {
        self.anchors.len()
    }

    pub fn successors(&self, anchor: TokenId) -> &[CalNode] {
        self.anchors.get(&anchor).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Children of the anchor at context position `pos`, if that position
    /// holds `anchor`.
    pub fn successors_at(&self, pos: usize, anchor: TokenId) -> Option<&[CalNode]> {
        match self.positions.get(&pos) {
            Some((t, c)) if *t == anchor => Some(c),
            _ => None,
        }
    }

    /// Copies the calibrated continuations of `anchor` into `tree`, taken
    /// from context position `pos` when known there; returns the number of
    /// nodes added.
    pub(crate) fn draft_into(
        &self,
        anchor: TokenId,
        pos: Option<usize>,
        tree: &mut DraftTree,
        cfg: &RetrievalConfig,
        budget: usize,
    ) -> usize {
        fn walk(
            nodes: &[CalNode],
            parent: Option<usize>,
            depth: usize,
            tree: &mut DraftTree,
            cfg: &RetrievalConfig,
            budget: &mut usize,
            added: &mut usize,
        ) {
            if depth > cfg.max_continuation {
                return;
            }
            for n in nodes.iter().take(cfg.max_branch) {
                let id = match tree.find_child(parent, n.token) {
                    Some(id) => id,
                    None => {
                        if *budget == 0 {
                            return;
                        }
                        *budget -= 1;
                        *added += 1;
                        tree.push(parent, n.token, DraftSource::Calibrated)
                    }
                };
                walk(&n.children, Some(id), depth + 1, tree, cfg, budget, added);
            }
        }
        let mut budget = budget;
        let mut added = 0;
        let nodes = pos
            .and_then(|p| self.successors_at(p, anchor))
            .unwrap_or_else(|| self.successors(anchor));
        walk(nodes, None, 1, tree, cfg, &mut budget, &mut added);
        added
    }
}

/// Adds `tree` to the store as a calibrated retrieval source.
pub fn merge_into_store(store: &mut DraftStore, tree: &CalibratedTree) {
    store.set_calibrated(CalibratedIndex::from_tree(tree));
}
