//! Candidate token trees submitted for verification.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::token::TokenId;

/// Where a draft node came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DraftSource {
    Context,
    History,
    Calibrated,
    Reused,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DraftNode {
    pub token: TokenId,
    pub source: DraftSource,
    pub parent: Option<usize>,
    #[serde(skip)]
    children: Vec<usize>,
}

impl DraftNode {
    pub fn children(&self) -> &[usize] {
        &self.children
    }
}

/// A forest of candidate continuations anchored after the last accepted
/// token. Roots are candidates for the next token; siblings never share a
/// token.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DraftTree {
    nodes: Vec<DraftNode>,
    roots: Vec<usize>,
}

impl DraftTree {
    pub fn new() -> Self {
        Self::default()
    }

    /// A single chain.
    pub fn chain(tokens: &[TokenId], source: DraftSource) -> Self {
        let mut t = Self::new();
        t.insert_path(tokens, source, usize::MAX);
        t
    }

    /// Rebuilds a tree from `(token, parent, source)` triples, rejecting
    /// dangling parents, cycles, and duplicate sibling tokens.
    pub fn from_parts(parts: &[(TokenId, Option<usize>, DraftSource)]) -> Result<Self> {
        let n = parts.len();
        let mut nodes: Vec<DraftNode> = parts
            .iter()
            .map(|&(token, parent, source)| DraftNode {
                token,
                source,
                parent,
                children: Vec::new(),
            })
            .collect();
        let mut roots = Vec::new();
        for i in 0..n {
            match nodes[i].parent {
                None => roots.push(i),
                Some(p) if p >= n => {
                    return Err(Error::Structure(format!("node {i} has orphan parent {p}")))
                }
                Some(p) if p == i => {
                    return Err(Error::Structure(format!("node {i} is its own parent")))
                }
                Some(p) => nodes[p].children.push(i),
            }
        }
        // Every node must reach a root within n hops.
        for i in 0..n {
            let mut cur = i;
            let mut hops = 0;
            while let Some(p) = nodes[cur].parent {
                cur = p;
                hops += 1;
                if hops > n {
                    return Err(Error::Structure(format!("cycle through node {i}")));
                }
            }
        }
        let tree = DraftTree { nodes, roots };
        for level in std::iter::once(&tree.roots).chain(tree.nodes.iter().map(|n| &n.children)) {
            for (a, &x) in level.iter().enumerate() {
                if level[..a]
                    .iter()
                    .any(|&y| tree.nodes[y].token == tree.nodes[x].token)
                {
                    return Err(Error::Structure(format!(
                        "duplicate sibling token {}",
                        tree.nodes[x].token
                    )));
                }
            }
        }
        Ok(tree)
    }

    pub fn to_parts(&self) -> Vec<(TokenId, Option<usize>, DraftSource)> {
        self.nodes
            .iter()
            .map(|n| (n.token, n.parent, n.source))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn roots(&self) -> &[usize] {
        &self.roots
    }

    pub fn node(&self, i: usize) -> &DraftNode {
        &self.nodes[i]
    }

    pub fn nodes(&self) -> &[DraftNode] {
        &self.nodes
    }

    /// Children of `parent`, or the roots when `parent` is `None`.
    pub fn level(&self, parent: Option<usize>) -> &[usize] {
        match parent {
            None => &self.roots,
            Some(p) => &self.nodes[p].children,
        }
    }

    pub fn find_child(&self, parent: Option<usize>, token: TokenId) -> Option<usize> {
        self.level(parent)
            .iter()
            .copied()
            .find(|&c| self.nodes[c].token == token)
    }

    pub fn push(&mut self, parent: Option<usize>, token: TokenId, source: DraftSource) -> usize {
        let id = self.nodes.len();
        self.nodes.push(DraftNode {
            token,
            source,
            parent,
            children: Vec::new(),
        });
        match parent {
            None => self.roots.push(id),
            Some(p) => self.nodes[p].children.push(id),
        }
        id
    }

    /// Merges `tokens` as a root-anchored path, sharing any existing prefix.
    /// At most `budget` new nodes are created; returns how many were.
    pub fn insert_path(&mut self, tokens: &[TokenId], source: DraftSource, budget: usize) -> usize {
        self.insert_path_under(None, tokens, source, budget)
    }

    pub fn insert_path_under(
        &mut self,
        mut parent: Option<usize>,
        tokens: &[TokenId],
        source: DraftSource,
        budget: usize,
    ) -> usize {
        let mut added = 0;
        for &tok in tokens {
            parent = Some(match self.find_child(parent, tok) {
                Some(c) => c,
                None => {
                    if added == budget {
                        break;
                    }
                    added += 1;
                    self.push(parent, tok, source)
                }
            });
        }
        added
    }

    /// Tokens from the root down to `node`, inclusive.
    pub fn path_to(&self, node: usize) -> Vec<TokenId> {
        let mut path = vec![self.nodes[node].token];
        let mut cur = node;
        while let Some(p) = self.nodes[cur].parent {
            path.push(self.nodes[p].token);
            cur = p;
        }
        path.reverse();
        path
    }

    pub fn depth(&self) -> usize {
        self.leaves()
            .map(|l| self.path_to(l).len())
            .max()
            .unwrap_or(0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].children.is_empty())
    }

    /// Every root-to-leaf token path, in node order of the leaves.
    pub fn paths(&self) -> Vec<Vec<TokenId>> {
        self.leaves().map(|l| self.path_to(l)).collect()
    }

    /// Leaf paths below the subtree rooted at the children of `parent`.
    pub fn leaves_under(&self, parent: Option<usize>) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack: Vec<usize> = self.level(parent).iter().rev().copied().collect();
        while let Some(n) = stack.pop() {
            let ch = &self.nodes[n].children;
            if ch.is_empty() {
                out.push(n);
            } else {
                stack.extend(ch.iter().rev());
            }
        }
        out
    }
}
