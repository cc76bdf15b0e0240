use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::{TableLm, EOS_TOKEN};
use crate::token::{TokenId, Vocab};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskTag {
    Summary,
    Rag,
    Ui,
    Tweet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkloadSpec {
    pub seed: u64,
    pub num_tasks: usize,
    /// Content tokens, not counting eos.
    pub vocab_size: usize,
    pub context_len: usize,
    pub target_len: usize,
    pub prompt_len: usize,
    /// Reference span length used for planting.
    pub span_len: usize,
    pub order: usize,
    /// Probability mass on the model's chosen token in every row.
    pub peak: f64,
    pub overlap_rate: f64,
    pub synonym_rate: f64,
    pub missing_rate: f64,
    pub task_tag: TaskTag,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            seed: 0,
            num_tasks: 200,
            vocab_size: 64,
            context_len: 256,
            target_len: 64,
            prompt_len: 8,
            span_len: 8,
            order: 4,
            peak: 0.7,
            overlap_rate: 0.5,
            synonym_rate: 0.0,
            missing_rate: 0.0,
            task_tag: TaskTag::Summary,
        }
    }
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<()> {
        for (key, r) in [
            ("workload.overlap_rate", self.overlap_rate),
            ("workload.synonym_rate", self.synonym_rate),
            ("workload.missing_rate", self.missing_rate),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::config(key, "must lie in [0, 1]"));
            }
        }
        if self.overlap_rate + self.synonym_rate + self.missing_rate > 1.0 + 1e-12 {
            return Err(Error::config(
                "workload",
                "overlap, synonym and missing rates sum past 1",
            ));
        }
        if self.vocab_size < 4 {
            return Err(Error::config("workload.vocab_size", "must be at least 4"));
        }
        if self.order == 0 {
            return Err(Error::config("workload.order", "must be at least 1"));
        }
        if self.prompt_len < self.order {
            return Err(Error::config(
                "workload.prompt_len",
                "must be at least the model order",
            ));
        }
        if self.span_len < 3 {
            return Err(Error::config("workload.span_len", "must be at least 3"));
        }
        if self.target_len == 0 || self.num_tasks == 0 {
            return Err(Error::config(
                "workload",
                "target_len and num_tasks must be positive",
            ));
        }
        if !(self.peak > 0.0 && self.peak <= 1.0) {
            return Err(Error::config("workload.peak", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpanKind {
    Verbatim,
    Synonym,
    Missing,
}

/// A reference span copied (possibly altered) into the context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedSpan {
    pub kind: SpanKind,
    /// Range in `reference`.
    pub reference: (usize, usize),
    /// Range in `context`.
    pub context: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: usize,
    pub tag: TaskTag,
    pub context: Vec<TokenId>,
    pub prompt: Vec<TokenId>,
    /// Greedy continuation of `prompt`, ending in eos.
    pub reference: Vec<TokenId>,
    pub spans: Vec<PlantedSpan>,
}

#[derive(Debug, Clone)]
pub struct Workload {
    pub lm: TableLm,
    pub tasks: Vec<Task>,
}

/// Fresh prompts tried before a saturated table is reported.
const MAX_PROMPT_ATTEMPTS: usize = 1000;

struct Builder {
    spec: WorkloadSpec,
    rng: ChaCha8Rng,
    next: HashMap<Vec<TokenId>, TokenId>,
    eos: TokenId,
}

impl Builder {
    fn content_token(&mut self) -> TokenId {
        TokenId(self.rng.gen_range(0..self.spec.vocab_size as u32))
    }

    fn random_seq(&mut self, len: usize) -> Vec<TokenId> {
        (0..len).map(|_| self.content_token()).collect()
    }

    fn key(&self, seq: &[TokenId]) -> Vec<TokenId> {
        seq[seq.len() - self.spec.order..].to_vec()
    }

    /// Continues `prompt` through the table, adding entries for unseen keys,
    /// and closes with eos once the target length is reached.
    fn reference(&mut self, prompt: &[TokenId]) -> Vec<TokenId> {
        let mut seq = prompt.to_vec();
        let mut added = Vec::new();
        let cap = 2 * self.spec.target_len + self.spec.order;
        loop {
            let out_len = seq.len() - prompt.len();
            let key = self.key(&seq);
            match self.next.get(&key) {
                Some(&t) => {
                    seq.push(t);
                    if t == self.eos {
                        break;
                    }
                }
                None if out_len + 1 >= self.spec.target_len || out_len + 1 >= cap => {
                    self.next.insert(key, self.eos);
                    seq.push(self.eos);
                    break;
                }
                None => {
                    let t = self.content_token();
                    self.next.insert(key.clone(), t);
                    added.push(key);
                    seq.push(t);
                }
            }
            if seq.len() - prompt.len() >= cap {
                // Forced tokens looped; undo this attempt so the next prompt
                // does not run into its entries.
                for k in added {
                    self.next.remove(&k);
                }
                return Vec::new();
            }
        }
        seq.split_off(prompt.len())
    }

    fn synonym(&mut self, span: &[TokenId]) -> Vec<TokenId> {
        let mut out = span.to_vec();
        let n = self.rng.gen_range(1..=2.min(span.len() - 2));
        let start = self.rng.gen_range(1..=span.len() - 1 - n);
        for t in &mut out[start..start + n] {
            let old = *t;
            while *t == old {
                *t = self.content_token();
            }
        }
        out
    }

    fn missing(&mut self, span: &[TokenId]) -> Vec<TokenId> {
        let n = self.rng.gen_range(1..=2.min(span.len() - 2));
        let start = self.rng.gen_range(1..=span.len() - 1 - n);
        let mut out = span[..start].to_vec();
        out.extend_from_slice(&span[start + n..]);
        out
    }

    fn task(&mut self, id: usize) -> Result<Task> {
        let mut attempts = 0;
        let (prompt, reference) = loop {
            let prompt = self.random_seq(self.spec.prompt_len);
            let reference = self.reference(&prompt);
            if !reference.is_empty() {
                break (prompt, reference);
            }
            attempts += 1;
            if attempts == MAX_PROMPT_ATTEMPTS {
                return Err(Error::config(
                    "workload",
                    format!("task {id}: every prompt runs into a forced loop; raise vocab_size or order, or lower target_len"),
                ));
            }
        };
        let body = &reference[..reference.len() - 1];
        let mut planted: Vec<TokenId> = prompt.clone();
        let mut spans = Vec::new();
        let s = self.spec.clone();
        for (i, chunk) in body.chunks(s.span_len).enumerate() {
            let u: f64 = self.rng.gen();
            let kind = if u < s.overlap_rate {
                Some(SpanKind::Verbatim)
            } else if u < s.overlap_rate + s.synonym_rate {
                Some(SpanKind::Synonym)
            } else if u < s.overlap_rate + s.synonym_rate + s.missing_rate {
                Some(SpanKind::Missing)
            } else {
                None
            };
            let text = match kind {
                Some(SpanKind::Synonym) if chunk.len() >= 3 => self.synonym(chunk),
                Some(SpanKind::Missing) if chunk.len() >= 3 => self.missing(chunk),
                Some(_) => chunk.to_vec(),
                None => self.random_seq(chunk.len()),
            };
            if let Some(kind) = kind {
                let start = i * s.span_len;
                spans.push(PlantedSpan {
                    kind,
                    reference: (start, start + chunk.len()),
                    context: (planted.len(), planted.len() + text.len()),
                });
            }
            planted.extend(text);
        }
        let filler = s.context_len.saturating_sub(planted.len());
        let head = if filler == 0 {
            0
        } else {
            self.rng.gen_range(0..=filler)
        };
        let mut context = self.random_seq(head);
        for sp in &mut spans {
            sp.context.0 += head;
            sp.context.1 += head;
        }
        context.extend(planted);
        let tail = self.random_seq(filler - head);
        context.extend(tail);
        Ok(Task {
            id,
            tag: s.task_tag,
            context,
            prompt,
            reference,
            spans,
        })
    }

    /// Context n-grams the references did not claim continue as in the
    /// context, so the model follows copied text past an altered token.
    fn absorb_context(&mut self, context: &[TokenId]) {
        let k = self.spec.order;
        for w in context.windows(k + 1) {
            self.next.entry(w[..k].to_vec()).or_insert(w[k]);
        }
    }

    fn into_lm(self) -> Result<TableLm> {
        let v = self.spec.vocab_size;
        let names: Vec<String> = (0..v)
            .map(|i| format!("w{i}"))
            .chain([EOS_TOKEN.to_string()])
            .collect();
        let mut lm = TableLm::new(Vocab::new(names)?, self.spec.order, self.eos)?;
        let spread = (1.0 - self.spec.peak) / v as f64;
        let mut entries: Vec<_> = self.next.into_iter().collect();
        entries.sort();
        for (key, t) in entries {
            let mut row = vec![spread; v + 1];
            row[v] = 0.0;
            row[t.index()] += self.spec.peak;
            if t.index() == v {
                // eos rows: spread over content tokens only, peak on eos.
                row[v] = self.spec.peak;
            }
            lm.insert_row(key, row)?;
        }
        Ok(lm)
    }
}

/// Synthetic tasks and a table model whose greedy continuation of each
/// prompt is that task's reference. Fully determined by the spec.
pub fn generate_workload(spec: &WorkloadSpec) -> Result<Workload> {
    spec.validate()?;
    let mut b = Builder {
        spec: spec.clone(),
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        next: HashMap::new(),
        eos: TokenId(spec.vocab_size as u32),
    };
    let tasks: Vec<Task> = (0..spec.num_tasks)
        .map(|i| b.task(i))
        .collect::<Result<_>>()?;
    for t in &tasks {
        b.absorb_context(&t.context);
    }
    let lm = b.into_lm()?;
    Ok(Workload { lm, tasks })
}

/// Share of reference spans planted as each kind: `(verbatim, synonym, missing)`.
pub fn planted_rates(tasks: &[Task], span_len: usize) -> (f64, f64, f64) {
    let mut total = 0usize;
    let mut counts = [0usize; 3];
    for t in tasks {
        total += (t.reference.len() - 1).div_ceil(span_len);
        for s in &t.spans {
            counts[s.kind as usize] += 1;
        }
    }
    let f = |c: usize| {
        if total == 0 {
            0.0
        } else {
            c as f64 / total as f64
        }
    };
    (f(counts[0]), f(counts[1]), f(counts[2]))
}
