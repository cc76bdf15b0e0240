//! Online suffix automaton over token sequences.
//!
//! Each state stores its longest length, suffix link, outgoing transitions and
//! the smallest end position of the substrings it represents (`first_end`).
//! The last is enough to recover one concrete occurrence of any continuation
//! without scanning the source.

use std::collections::BTreeMap;

use crate::token::TokenId;

/// Boundary marker between independently indexed documents. Never matches a
/// vocabulary token and is never emitted in a continuation.
pub const SEPARATOR: TokenId = TokenId(u32::MAX);

#[derive(Debug, Clone)]
struct State {
    len: usize,
    link: Option<usize>,
    first_end: usize,
    next: BTreeMap<TokenId, usize>,
}

#[derive(Debug, Clone)]
pub struct SuffixAutomaton {
    states: Vec<State>,
    last: usize,
    source: Vec<TokenId>,
}

/// Longest suffix of a query found in the source with at least one
/// following token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuffixMatch {
    state: usize,
    pub len: usize,
}

impl Default for SuffixAutomaton {
    fn default() -> Self {
        Self::new()
    }
}

impl SuffixAutomaton {
    pub fn new() -> Self {
        SuffixAutomaton {
            states: vec![State {
                len: 0,
                link: None,
                first_end: 0,
                next: BTreeMap::new(),
            }],
            last: 0,
            source: Vec::new(),
        }
    }

    pub fn from_tokens(tokens: &[TokenId]) -> Self {
        let mut sa = Self::new();
        for &t in tokens {
            sa.extend(t);
        }
        sa
    }

    pub fn source(&self) -> &[TokenId] {
        &self.source
    }

    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_transitions(&self) -> usize {
        self.states.iter().map(|s| s.next.len()).sum()
    }

    /// Appends one token to the indexed source.
    pub fn extend(&mut self, token: TokenId) {
        let pos = self.source.len();
        self.source.push(token);
        let cur = self.states.len();
        self.states.push(State {
            len: self.states[self.last].len + 1,
            link: None,
            first_end: pos,
            next: BTreeMap::new(),
        });
        let mut p = Some(self.last);
        while let Some(pi) = p {
            if self.states[pi].next.contains_key(&token) {
                break;
            }
            self.states[pi].next.insert(token, cur);
            p = self.states[pi].link;
        }
        match p {
            None => self.states[cur].link = Some(0),
            Some(pi) => {
                let q = self.states[pi].next[&token];
                if self.states[pi].len + 1 == self.states[q].len {
                    self.states[cur].link = Some(q);
                } else {
                    let clone = self.states.len();
                    let mut st = self.states[q].clone();
                    st.len = self.states[pi].len + 1;
                    self.states.push(st);
                    let mut p = Some(pi);
                    while let Some(pj) = p {
                        match self.states[pj].next.get_mut(&token) {
                            Some(t) if *t == q => *t = clone,
                            _ => break,
                        }
                        p = self.states[pj].link;
                    }
                    self.states[q].link = Some(clone);
                    self.states[cur].link = Some(clone);
                }
            }
        }
        self.last = cur;
    }

    /// Whether `pattern` is a substring of the source.
    pub fn contains(&self, pattern: &[TokenId]) -> bool {
        let mut s = 0;
        for t in pattern {
            match self.states[s].next.get(t) {
                Some(&n) => s = n,
                None => return false,
            }
        }
        true
    }

    /// Finds the longest suffix of `query` that occurs in the source and is
    /// followed by at least one token there. O(|query|) amortized.
    pub fn longest_suffix_match(&self, query: &[TokenId]) -> Option<SuffixMatch> {
        let (mut s, mut l) = (0usize, 0usize);
        for t in query {
            loop {
                if let Some(&n) = self.states[s].next.get(t) {
                    s = n;
                    l += 1;
                    break;
                }
                match self.states[s].link {
                    Some(link) => {
                        s = link;
                        l = self.states[s].len;
                    }
                    None => {
                        l = 0;
                        break;
                    }
                }
            }
        }
        // A state without transitions only occurs at the very end; shorten.
        while !self.has_continuation(s) {
            s = self.states[s].link?;
            l = self.states[s].len;
        }
        (l > 0).then_some(SuffixMatch { state: s, len: l })
    }

    /// Source index of the last token of the match's earliest occurrence.
    pub fn first_end(&self, m: SuffixMatch) -> usize {
        self.states[m.state].first_end
    }

    fn has_continuation(&self, s: usize) -> bool {
        self.states[s].next.keys().any(|&t| t != SEPARATOR)
    }

    /// Continuations after a match, one per distinct next token, each taken
    /// from the earliest occurrence of `match + token`. Ordered by that
    /// occurrence; at most `max_branch` of length up to `max_len`.
    pub fn continuations(
        &self,
        m: SuffixMatch,
        max_branch: usize,
        max_len: usize,
    ) -> Vec<Vec<TokenId>> {
        let mut starts: Vec<usize> = self.states[m.state]
            .next
            .iter()
            .filter(|(&t, _)| t != SEPARATOR)
            .map(|(_, &n)| self.states[n].first_end)
            .collect();
        starts.sort_unstable();
        starts
            .into_iter()
            .take(max_branch)
            .map(|start| {
                let end = (start + max_len).min(self.source.len());
                self.source[start..end]
                    .iter()
                    .copied()
                    .take_while(|&t| t != SEPARATOR)
                    .collect()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(s: &str) -> Vec<TokenId> {
        s.bytes()
            .filter(|b| !b.is_ascii_whitespace())
            .map(|b| TokenId((b - b'a') as u32))
            .collect()
    }

    fn naive_contains(src: &[TokenId], pat: &[TokenId]) -> bool {
        pat.is_empty() || src.windows(pat.len()).any(|w| w == pat)
    }

    #[test]
    fn empty_accepts_only_empty() {
        let sa = SuffixAutomaton::new();
        assert!(sa.contains(&[]));
        assert!(!sa.contains(&ids("a")));
    }

    #[test]
    fn membership_small() {
        let src = ids("a b c a b d");
        let sa = SuffixAutomaton::from_tokens(&src);
        assert!(sa.contains(&ids("ab")));
        assert!(!sa.contains(&ids("ba")));
        assert!(sa.contains(&ids("cab")));
        // Exhaustive over every pattern up to length 4 on the alphabet a..d.
        let mut pats = vec![vec![]];
        for _ in 0..4 {
            let mut next = Vec::new();
            for p in &pats {
                for c in 0..4 {
                    let mut q: Vec<TokenId> = p.clone();
                    q.push(TokenId(c));
                    next.push(q);
                }
            }
            for p in &next {
                assert_eq!(sa.contains(p), naive_contains(&src, p), "{p:?}");
            }
            pats = next;
        }
    }

    #[test]
    fn state_bound_repeated_token() {
        let sa = SuffixAutomaton::from_tokens(&ids("aaaa"));
        assert!(sa.num_states() < 2 * 4);
        let mut sa = SuffixAutomaton::new();
        for n in 1..=50 {
            sa.extend(TokenId(0));
            if n >= 2 {
                assert!(sa.num_states() < 2 * n);
            }
        }
    }

    #[test]
    fn extend_matches_rebuild() {
        let mut sa = SuffixAutomaton::from_tokens(&ids("ab"));
        sa.extend(TokenId(2));
        let rebuilt = SuffixAutomaton::from_tokens(&ids("abc"));
        for p in [ids("abc"), ids("bc"), ids("c"), ids("ac"), ids("cb")] {
            assert_eq!(sa.contains(&p), rebuilt.contains(&p));
        }
        let mut sa = SuffixAutomaton::new();
        sa.extend(TokenId(0));
        assert!(sa.contains(&ids("a")));
    }

    #[test]
    fn continuation_from_match() {
        let sa = SuffixAutomaton::from_tokens(&ids("abcabd"));
        let m = sa.longest_suffix_match(&ids("xab")).unwrap();
        assert_eq!(m.len, 2);
        assert_eq!(sa.continuations(m, 4, 2), vec![ids("ca"), ids("d")]);
    }

    #[test]
    fn end_only_match_shortens() {
        // "d" occurs only at the end; its suffix has nothing after it.
        let sa = SuffixAutomaton::from_tokens(&ids("abcabd"));
        assert_eq!(sa.longest_suffix_match(&ids("d")), None);
        let m = sa.longest_suffix_match(&ids("cab")).unwrap();
        assert_eq!(m.len, 3);
    }

    #[test]
    fn separator_is_not_a_continuation() {
        let mut sa = SuffixAutomaton::from_tokens(&ids("ab"));
        sa.extend(SEPARATOR);
        sa.extend(TokenId(1));
        assert_eq!(sa.longest_suffix_match(&ids("b")), None);
    }
}
