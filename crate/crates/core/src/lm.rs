//! Table-driven language model.
//!
//! [`TableLm`] maps token contexts of length at most `order` to next-token
//! probability rows. Lookup backs off from the longest available suffix of the
//! conditioning sequence to shorter ones and finally to a uniform row, so every
//! context resolves. Greedy prediction is argmax with ties going to the lowest
//! token index.

use std::collections::HashMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::token::{TokenId, Vocab};

/// Tolerance for row normalization.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// Default end-of-sequence token string used by corpus-built models.
pub const EOS_TOKEN: &str = "</s>";

#[derive(Debug, Clone)]
pub struct TableLm {
    vocab: Vocab,
    order: usize,
    eos: TokenId,
    table: HashMap<Vec<TokenId>, Vec<f64>>,
    uniform: Vec<f64>,
}

/// Per-position next-token distributions produced by [`TableLm::prefill`].
#[derive(Debug, Clone, PartialEq)]
pub struct LogitMatrix {
    rows: Vec<Vec<f64>>,
}

impl LogitMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        for (t, row) in rows.iter().enumerate() {
            check_row(row, row.len()).map_err(|e| Error::input(format!("row {t}: {e}")))?;
        }
        Ok(LogitMatrix { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Distribution of the token following position `t`.
    pub fn row(&self, t: usize) -> &[f64] {
        &self.rows[t]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Up to `k` tokens of row `t` with probability at least `prob_min`,
    /// by descending probability, ties by token index.
    pub fn top_k(&self, t: usize, k: usize, prob_min: f64) -> Vec<(TokenId, f64)> {
        top_k(&self.rows[t], k, prob_min)
    }
}

pub(crate) fn top_k(row: &[f64], k: usize, prob_min: f64) -> Vec<(TokenId, f64)> {
    let mut picked: Vec<(TokenId, f64)> = row
        .iter()
        .enumerate()
        .filter(|(_, &p)| p >= prob_min && p > 0.0)
        .map(|(i, &p)| (TokenId(i as u32), p))
        .collect();
    picked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    picked.truncate(k);
    picked
}

fn check_row(row: &[f64], width: usize) -> std::result::Result<(), String> {
    if row.len() != width {
        return Err(format!("row has {} entries, expected {width}", row.len()));
    }
    if let Some(p) = row.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(format!("invalid probability {p}"));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(format!("row sums to {sum}"));
    }
    Ok(())
}

/// Lowest-index argmax.
pub(crate) fn argmax(row: &[f64]) -> TokenId {
    let mut best = 0;
    for (i, &p) in row.iter().enumerate().skip(1) {
        if p > row[best] {
            best = i;
        }
    }
    TokenId(best as u32)
}

impl TableLm {
    /// Empty model: every lookup falls through to the uniform row.
    pub fn new(vocab: Vocab, order: usize, eos: TokenId) -> Result<Self> {
        if order == 0 {
            return Err(Error::input("order must be at least 1"));
        }
        if !vocab.contains(eos) {
            return Err(Error::input(format!("eos {eos} not in vocabulary")));
        }
        let n = vocab.len();
        Ok(TableLm {
            uniform: vec![1.0 / n as f64; n],
            vocab,
            order,
            eos,
            table: HashMap::new(),
        })
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn eos(&self) -> TokenId {
        self.eos
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn num_entries(&self) -> usize {
        self.table.len()
    }

    /// Stores (or replaces) the row for `context`.
    pub fn insert_row(&mut self, context: Vec<TokenId>, row: Vec<f64>) -> Result<()> {
        if context.len() > self.order {
            return Err(Error::input(format!(
                "context length {} exceeds order {}",
                context.len(),
                self.order
            )));
        }
        self.check_tokens(&context)?;
        check_row(&row, self.vocab.len()).map_err(Error::Input)?;
        self.table.insert(context, row);
        Ok(())
    }

    /// Row for `context`, or `None` when the exact key is not stored.
    pub fn stored_row(&self, context: &[TokenId]) -> Option<&[f64]> {
        self.table.get(context).map(Vec::as_slice)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&[TokenId], &[f64])> {
        self.table.iter().map(|(k, v)| (k.as_slice(), v.as_slice()))
    }

    /// Distribution of the token following `history`.
    pub fn row(&self, history: &[TokenId]) -> &[f64] {
        let longest = self.order.min(history.len());
        for len in (0..=longest).rev() {
            if let Some(row) = self.table.get(&history[history.len() - len..]) {
                return row;
            }
        }
        &self.uniform
    }

    pub(crate) fn check_tokens(&self, tokens: &[TokenId]) -> Result<()> {
        match tokens.iter().find(|t| !self.vocab.contains(**t)) {
            Some(t) => Err(Error::input(format!("unknown token id {t}"))),
            None => Ok(()),
        }
    }

    /// Row `t` is the distribution conditioned on `tokens[..=t]`.
    pub fn prefill(&self, tokens: &[TokenId]) -> Result<LogitMatrix> {
        if tokens.is_empty() {
            return Err(Error::input("prefill of an empty sequence"));
        }
        self.check_tokens(tokens)?;
        let rows = (0..tokens.len())
            .map(|t| self.row(&tokens[..=t]).to_vec())
            .collect();
        Ok(LogitMatrix { rows })
    }

    pub fn greedy_next(&self, prefix: &[TokenId]) -> Result<TokenId> {
        if prefix.is_empty() {
            return Err(Error::input("greedy prediction needs a non-empty prefix"));
        }
        self.check_tokens(prefix)?;
        Ok(self.predict(prefix))
    }

    /// Unchecked greedy prediction for internal hot loops.
    #[inline]
    pub(crate) fn predict(&self, prefix: &[TokenId]) -> TokenId {
        argmax(self.row(prefix))
    }

    /// Plain greedy decoding: stops after emitting eos or `max_new` tokens.
    pub fn greedy_decode(&self, prompt: &[TokenId], max_new: usize) -> Result<Vec<TokenId>> {
        if prompt.is_empty() {
            return Err(Error::input("empty prompt"));
        }
        self.check_tokens(prompt)?;
        let mut seq = prompt.to_vec();
        let mut out = Vec::new();
        while out.len() < max_new {
            let next = self.predict(&seq);
            seq.push(next);
            out.push(next);
            if next == self.eos {
                break;
            }
        }
        Ok(out)
    }

    /// Maximum-likelihood model over whitespace-tokenized documents.
    ///
    /// Every document is terminated with [`EOS_TOKEN`]. For each position all
    /// suffix contexts of length `1..=order` are counted.
    pub fn from_corpus<D, S>(docs: D, order: usize) -> Result<Self>
    where
        D: IntoIterator<Item = Vec<S>>,
        S: AsRef<str>,
    {
        let docs: Vec<Vec<String>> = docs
            .into_iter()
            .map(|d| d.iter().map(|s| s.as_ref().to_string()).collect())
            .collect();
        let mut names: Vec<String> = Vec::new();
        let mut seen = HashMap::new();
        for w in docs.iter().flatten().map(String::as_str).chain([EOS_TOKEN]) {
            if !seen.contains_key(w) {
                seen.insert(w.to_string(), names.len());
                names.push(w.to_string());
            }
        }
        if names.len() < 2 {
            names.push("<unk>".to_string());
        }
        let vocab = Vocab::new(names)?;
        let eos = vocab.id(EOS_TOKEN).expect("eos inserted above");
        let encoded: Vec<Vec<TokenId>> = docs
            .iter()
            .map(|d| {
                d.iter()
                    .map(|w| vocab.id(w).expect("collected above"))
                    .chain([eos])
                    .collect()
            })
            .collect();
        let mut lm = TableLm::new(vocab, order, eos)?;
        lm.fit_counts(&encoded);
        Ok(lm)
    }

    /// Adds count-normalized rows for every context observed in `seqs`.
    /// Existing rows for the same contexts are replaced.
    pub fn fit_counts(&mut self, seqs: &[Vec<TokenId>]) {
        let n = self.vocab.len();
        let mut counts: HashMap<Vec<TokenId>, Vec<u64>> = HashMap::new();
        for seq in seqs {
            for i in 1..seq.len() {
                for len in 1..=self.order.min(i) {
                    let ctx = seq[i - len..i].to_vec();
                    counts.entry(ctx).or_insert_with(|| vec![0; n])[seq[i].index()] += 1;
                }
            }
        }
        for (ctx, c) in counts {
            let total: u64 = c.iter().sum();
            let row = c.iter().map(|&x| x as f64 / total as f64).collect();
            self.table.insert(ctx, row);
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let doc: LmDocument = serde_json::from_str(s)?;
        doc.into_lm()
    }

    pub fn to_document(&self) -> LmDocument {
        let mut entries: Vec<LmEntry> = self
            .table
            .iter()
            .map(|(ctx, row)| LmEntry {
                context: ctx.iter().map(|&t| self.name(t)).collect(),
                probs: row
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(i, &p)| (self.name(TokenId(i as u32)), p))
                    .collect(),
            })
            .collect();
        entries.sort_by(|a, b| a.context.cmp(&b.context));
        LmDocument {
            order: self.order,
            eos: self.name(self.eos),
            vocab: Some(self.vocab.tokens().to_vec()),
            entries,
        }
    }

    fn name(&self, t: TokenId) -> String {
        self.vocab.token(t).unwrap_or_default().to_string()
    }
}

/// JSON form: `{order, eos, vocab?, entries: [{context: [tok], probs: {tok: p}}]}`.
///
/// Without an explicit `vocab`, tokens are collected in order of first
/// appearance (eos first, then contexts and row keys entry by entry).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmDocument {
    pub order: usize,
    pub eos: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab: Option<Vec<String>>,
    pub entries: Vec<LmEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmEntry {
    pub context: Vec<String>,
    pub probs: std::collections::BTreeMap<String, f64>,
}

impl LmDocument {
    pub fn into_lm(self) -> Result<TableLm> {
        let vocab = match self.vocab {
            Some(v) => Vocab::new(v)?,
            None => {
                let mut names = vec![self.eos.clone()];
                for e in &self.entries {
                    for w in e.context.iter().chain(e.probs.keys()) {
                        if !names.contains(w) {
                            names.push(w.clone());
                        }
                    }
                }
                Vocab::new(names)?
            }
        };
        let eos = vocab
            .id(&self.eos)
            .ok_or_else(|| Error::input(format!("eos `{}` not in vocabulary", self.eos)))?;
        let mut lm = TableLm::new(vocab, self.order, eos)?;
        for e in self.entries {
            let ctx = e
                .context
                .iter()
                .map(|w| {
                    lm.vocab
                        .id(w)
                        .ok_or_else(|| Error::input(format!("unknown token `{w}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut row = vec![0.0; lm.vocab.len()];
            for (w, p) in &e.probs {
                let id = lm
                    .vocab
                    .id(w)
                    .ok_or_else(|| Error::input(format!("unknown token `{w}`")))?;
                row[id.index()] = *p;
            }
            lm.insert_row(ctx, row)?;
        }
        Ok(lm)
    }
}

/// Reads a corpus: one document per line, either a JSON string (split on
/// whitespace) or a JSON array of token strings. Blank lines are skipped.
pub fn read_corpus_jsonl<R: BufRead>(reader: R) -> Result<Vec<Vec<String>>> {
    let mut docs = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line)?;
        let doc = match value {
            serde_json::Value::String(s) => s.split_whitespace().map(str::to_string).collect(),
            serde_json::Value::Array(items) => items
                .into_iter()
                .map(|v| match v {
                    serde_json::Value::String(s) => Ok(s),
                    other => Err(Error::input(format!(
                        "line {}: expected token string, got {other}",
                        lineno + 1
                    ))),
                })
                .collect::<Result<Vec<_>>>()?,
            other => {
                return Err(Error::input(format!(
                    "line {}: expected string or array, got {other}",
                    lineno + 1
                )))
            }
        };
        docs.push(doc);
    }
    Ok(docs)
}
