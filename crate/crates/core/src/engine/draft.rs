use crate::retrieval::DraftStore;
use crate::token::TokenId;
use crate::tree::{DraftSource, DraftTree};

use super::decode::EngineConfig;
use super::reuse::ReuseBuffer;

/// A step's draft tree and bookkeeping about which reuse segments it holds.
#[derive(Debug, Clone, Default)]
pub struct StepDraft {
    pub tree: DraftTree,
    /// Nodes that came from fresh retrieval.
    pub fresh_len: usize,
    /// `(segment index, first branch token)` for every included segment.
    pub reused: Vec<(usize, TokenId)>,
    /// Segments discarded by the packing rule in this step.
    pub dropped: usize,
}

/// Part of `segment` to draft after the output's last token: the tail after
/// the last occurrence of that token, or the whole segment.
fn anchored(segment: &[TokenId], last: Option<TokenId>) -> &[TokenId] {
    match last.and_then(|t| segment.iter().rposition(|&s| s == t)) {
        Some(j) => &segment[j + 1..],
        None => segment,
    }
}

/// Nodes `path` would add to `tree` when merged at the root.
fn new_nodes(tree: &DraftTree, path: &[TokenId]) -> usize {
    let mut parent = None;
    for (i, &t) in path.iter().enumerate() {
        match tree.find_child(parent, t) {
            Some(c) => parent = Some(c),
            None => return path.len() - i,
        }
    }
    0
}

/// Fresh retrieval first, then live reuse segments oldest-first as extra
/// branches while the tree stays within
/// `min(target_draft_len, cumulative_threshold)` nodes. Segments that do not
/// fit are removed from the buffer and counted as dropped.
pub fn build_step_draft(
    store: &DraftStore,
    reuse: &mut ReuseBuffer,
    recent: &[TokenId],
    cfg: &EngineConfig,
) -> StepDraft {
    let limit = cfg.target_draft_len.min(reuse.cumulative_threshold);
    let tree = store.retrieve(recent, &cfg.retrieval, cfg.target_draft_len);
    let mut out = StepDraft {
        fresh_len: tree.len(),
        tree,
        ..Default::default()
    };
    let last = recent.last().copied();
    let mut drop = Vec::new();
    for (i, seg) in reuse.segments().iter().enumerate() {
        let branch = anchored(&seg.tokens, last);
        if branch.is_empty() {
            continue;
        }
        let cost = new_nodes(&out.tree, branch);
        if out.tree.len() + cost > limit {
            drop.push(i);
            continue;
        }
        out.tree.insert_path(branch, DraftSource::Reused, cost);
        out.reused.push((i, branch[0]));
    }
    // Indices in `reused` refer to positions before removal; remap.
    if !drop.is_empty() {
        out.reused = out
            .reused
            .iter()
            .map(|&(i, t)| (i - drop.iter().filter(|&&d| d < i).count(), t))
            .collect();
        out.dropped = drop.len();
        reuse.drop_indices(&drop);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[u32]) -> Vec<TokenId> {
        v.iter().map(|&i| TokenId(i)).collect()
    }

    fn cfg(target: usize) -> EngineConfig {
        EngineConfig {
            target_draft_len: target,
            ..Default::default()
        }
    }

    #[test]
    fn empty_everything() {
        let store = DraftStore::default();
        let mut buf = ReuseBuffer::new(64);
        let d = build_step_draft(&store, &mut buf, &ids(&[1]), &cfg(32));
        assert!(d.tree.is_empty());
    }

    #[test]
    fn additive_packing() {
        // Fresh chain of 3 after token 0, one reuse segment of 4.
        let store = DraftStore::new(&ids(&[0, 1, 2, 3]));
        let mut buf = ReuseBuffer::new(64);
        buf.insert(ids(&[10, 11, 12, 13]), 0);
        let d = build_step_draft(&store, &mut buf, &ids(&[0]), &cfg(8));
        assert_eq!(d.fresh_len, 3);
        assert_eq!(d.tree.len(), 7);
        assert_eq!(d.reused, vec![(0, TokenId(10))]);
        assert_eq!(buf.len(), 1);
    }

    #[test]
    fn threshold_drops_second_segment() {
        // 6 fresh + 4 = 10 fits under 12; +5 would make 15.
        let store = DraftStore::new(&ids(&[0, 1, 2, 3, 4, 5, 6]));
        let mut buf = ReuseBuffer::new(12);
        buf.insert(ids(&[10, 11, 12, 13]), 0);
        buf.insert(ids(&[20, 21, 22, 23, 24]), 0);
        let d = build_step_draft(&store, &mut buf, &ids(&[0]), &cfg(32));
        assert_eq!(d.fresh_len, 6);
        assert_eq!(d.tree.len(), 10);
        assert_eq!(d.dropped, 1);
        assert_eq!(buf.dropped, 1);
        assert_eq!(buf.segments().len(), 1);
        assert_eq!(buf.segments()[0].tokens, ids(&[10, 11, 12, 13]));
    }

    #[test]
    fn segment_anchors_on_last_token() {
        let store = DraftStore::default();
        let mut buf = ReuseBuffer::new(64);
        buf.insert(ids(&[5, 6, 7]), 0);
        let d = build_step_draft(&store, &mut buf, &ids(&[9, 6]), &cfg(32));
        assert_eq!(d.tree.paths(), vec![ids(&[7])]);
    }
}
