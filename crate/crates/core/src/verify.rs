//! Greedy (exact-match) verification of linear drafts and draft trees.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::lm::TableLm;
use crate::token::TokenId;
use crate::tree::DraftTree;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationResult {
    /// Draft tokens that matched the model's greedy predictions.
    pub accepted: Vec<TokenId>,
    /// The model's own prediction after the accepted tokens (bonus token).
    pub correction: TokenId,
    pub accepted_count: usize,
    /// Index of the first draft position whose candidates all mismatched.
    /// `None` when the draft (path) was exhausted without a mismatch.
    pub rejection_pos: Option<usize>,
    /// Tree node ids along the accepted path (empty for linear drafts).
    #[serde(skip)]
    pub accepted_nodes: Vec<usize>,
}

impl VerificationResult {
    /// Tokens appended to the output by this step.
    pub fn emitted(&self) -> impl Iterator<Item = TokenId> + '_ {
        self.accepted
            .iter()
            .copied()
            .chain(std::iter::once(self.correction))
    }

    pub fn emitted_count(&self) -> usize {
        self.accepted_count + 1
    }
}

pub fn verify_linear(
    lm: &TableLm,
    prefix: &[TokenId],
    draft: &[TokenId],
) -> Result<VerificationResult> {
    lm.check_tokens(draft)?;
    let mut ctx = prefix.to_vec();
    let first = lm.greedy_next(prefix)?;
    let mut y = first;
    for (i, &x) in draft.iter().enumerate() {
        if x != y {
            return Ok(finish(&ctx[prefix.len()..], y, Some(i), Vec::new()));
        }
        ctx.push(x);
        y = lm.predict(&ctx);
    }
    Ok(finish(&ctx[prefix.len()..], y, None, Vec::new()))
}

/// Walks the tree following the model's greedy choice at each level.
pub fn verify_tree(
    lm: &TableLm,
    prefix: &[TokenId],
    tree: &DraftTree,
) -> Result<VerificationResult> {
    lm.check_tokens(&tree.nodes().iter().map(|n| n.token).collect::<Vec<_>>())?;
    let mut ctx = prefix.to_vec();
    let mut y = lm.greedy_next(prefix)?;
    let mut parent = None;
    let mut nodes = Vec::new();
    loop {
        let level = tree.level(parent);
        match tree.find_child(parent, y) {
            Some(n) => {
                nodes.push(n);
                ctx.push(y);
                y = lm.predict(&ctx);
                parent = Some(n);
            }
            None => {
                let rej = (!level.is_empty()).then_some(nodes.len());
                return Ok(finish(&ctx[prefix.len()..], y, rej, nodes));
            }
        }
    }
}

fn finish(
    accepted: &[TokenId],
    correction: TokenId,
    rejection_pos: Option<usize>,
    accepted_nodes: Vec<usize>,
) -> VerificationResult {
    VerificationResult {
        accepted: accepted.to_vec(),
        correction,
        accepted_count: accepted.len(),
        rejection_pos,
        accepted_nodes,
    }
}

/// Model predictions along a draft path: `y[i]` is the greedy token after
/// `prefix + draft[..i]`, for `i` in `0..=draft.len()`.
pub fn predictions(lm: &TableLm, prefix: &[TokenId], draft: &[TokenId]) -> Vec<TokenId> {
    let mut ctx = prefix.to_vec();
    let mut y = Vec::with_capacity(draft.len() + 1);
    y.push(lm.predict(&ctx));
    for &x in draft {
        ctx.push(x);
        y.push(lm.predict(&ctx));
    }
    y
}
