//! Independent oracles and generators shared by the integration suites.
#![allow(dead_code)]

use npudraft::calibration::{calibrate, CalibratedIndex, CalibrationConfig};
use npudraft::engine::{EngineConfig, ReuseWindow};
use npudraft::harness::{TaskTag, WorkloadSpec};
use npudraft::retrieval::RetrievalConfig;
use npudraft::scheduler::{BlockProfile, GreedySchedule, ScheduleInstance};
use npudraft::{TableLm, TokenId, Vocab};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn ids(v: &[u32]) -> Vec<TokenId> {
    v.iter().map(|&i| TokenId(i)).collect()
}

/// Greedy decoding written out directly: argmax with lowest index on ties.
pub fn greedy_reference(lm: &TableLm, prompt: &[TokenId], max_new: usize) -> Vec<TokenId> {
    let mut seq = prompt.to_vec();
    let mut out = Vec::new();
    while out.len() < max_new {
        let row = lm.row(&seq);
        let mut best = 0;
        for (i, &p) in row.iter().enumerate() {
            if p > row[best] {
                best = i;
            }
        }
        let t = TokenId(best as u32);
        seq.push(t);
        out.push(t);
        if t == lm.eos() {
            break;
        }
    }
    out
}

/// A random table model. Rows are sparse and sometimes tied so the argmax
/// tie rule gets exercised.
pub fn random_lm(rng: &mut ChaCha8Rng, vocab_size: usize, order: usize, rows: usize) -> TableLm {
    let names: Vec<String> = (0..vocab_size - 1)
        .map(|i| format!("v{i}"))
        .chain(["</s>".to_string()])
        .collect();
    let vocab = Vocab::new(names).unwrap();
    let eos = TokenId(vocab_size as u32 - 1);
    let mut lm = TableLm::new(vocab, order, eos).unwrap();
    for _ in 0..rows {
        let len = rng.gen_range(1..=order);
        let ctx: Vec<TokenId> = (0..len)
            .map(|_| TokenId(rng.gen_range(0..vocab_size as u32)))
            .collect();
        let mut row = vec![0.0; vocab_size];
        let support = rng.gen_range(1..=3.min(vocab_size));
        let tie = rng.gen_bool(0.2);
        for k in 0..support {
            let t = rng.gen_range(0..vocab_size);
            row[t] += if tie {
                1.0
            } else {
                (k + 1) as f64 * rng.gen_range(0.5..1.5)
            };
        }
        let s: f64 = row.iter().sum();
        for p in &mut row {
            *p /= s;
        }
        lm.insert_row(ctx, row).unwrap();
    }
    lm
}

pub fn random_workload_spec(rng: &mut ChaCha8Rng) -> WorkloadSpec {
    // Order 1 needs a wide vocabulary or forced chains loop before eos.
    let order = rng.gen_range(1..=4);
    let vocab_size = if order == 1 {
        rng.gen_range(32..=48)
    } else {
        rng.gen_range(6..=48)
    };
    // A reference revisits a key with birthday odds; past about sqrt(keys)
    // tokens most prompts loop.
    let target_cap = ((vocab_size as f64).powi(order as i32).sqrt() as usize).clamp(4, 48);
    let overlap = rng.gen_range(0.0..=1.0);
    let synonym = rng.gen_range(0.0..=1.0 - overlap);
    let missing = rng.gen_range(0.0..=1.0 - overlap - synonym);
    WorkloadSpec {
        seed: rng.gen(),
        num_tasks: rng.gen_range(1..=3),
        vocab_size,
        context_len: rng.gen_range(16..=160),
        target_len: rng.gen_range(4..=target_cap),
        prompt_len: rng.gen_range(order..=order + 4),
        span_len: rng.gen_range(3..=10),
        order,
        peak: rng.gen_range(0.3..=1.0),
        overlap_rate: overlap,
        synonym_rate: synonym,
        missing_rate: missing,
        task_tag: *[TaskTag::Summary, TaskTag::Rag, TaskTag::Ui, TaskTag::Tweet]
            .choose(rng)
            .unwrap(),
    }
}

pub fn random_engine_config(rng: &mut ChaCha8Rng) -> EngineConfig {
    EngineConfig {
        target_draft_len: rng.gen_range(1..=48),
        max_steps: 4096,
        max_new_tokens: rng.gen_range(1..=96),
        recent_window: rng.gen_range(1..=64),
        retrieval: RetrievalConfig {
            match_len_min: rng.gen_range(1..=3),
            max_branch: rng.gen_range(1..=5),
            max_continuation: rng.gen_range(1..=32),
        },
        draft: rng.gen_bool(0.95),
        reuse: rng.gen_bool(0.5),
        cumulative_threshold: rng.gen_range(1..=80),
    }
}

pub fn random_calibration(rng: &mut ChaCha8Rng) -> CalibrationConfig {
    CalibrationConfig {
        top_k: rng.gen_range(1..=4),
        prob_min: rng.gen_range(0.01..=0.5),
        max_depth: rng.gen_range(1..=8),
        max_nodes: rng.gen_range(4..=4096),
    }
}

pub fn calibrated_index(
    lm: &TableLm,
    text: &[TokenId],
    cfg: &CalibrationConfig,
) -> CalibratedIndex {
    let logits = lm.prefill(text).unwrap();
    CalibratedIndex::from_tree(&calibrate(text, &logits, cfg).unwrap())
}

/// Every (gamma, epsilon) window checked one by one; longest wins, ties to
/// the smallest gamma.
pub fn window_oracle(x: &[TokenId], y: &[TokenId], e: usize) -> Option<ReuseWindow> {
    let mut best: Option<ReuseWindow> = None;
    for g in 1..x.len() - e {
        for eps in g..x.len() - e {
            if (e + g..=e + eps).all(|i| x[i] == y[i]) {
                let better = match best {
                    None => true,
                    Some(b) => eps - g > b.epsilon - b.gamma,
                };
                if better {
                    best = Some(ReuseWindow {
                        gamma: g,
                        epsilon: eps,
                    });
                }
            }
        }
    }
    best
}

/// Longest suffix of `query` that occurs in `source` with a token after it,
/// by scanning every start position. Returns the length and the set of
/// tokens that follow some occurrence.
pub fn naive_suffix_match(source: &[TokenId], query: &[TokenId]) -> Option<(usize, Vec<TokenId>)> {
    for len in (1..=query.len().min(source.len())).rev() {
        let pat = &query[query.len() - len..];
        let mut next: Vec<TokenId> = source
            .windows(len + 1)
            .filter(|w| &w[..len] == pat)
            .map(|w| w[len])
            .collect();
        if !next.is_empty() {
            next.sort();
            next.dedup();
            return Some((len, next));
        }
    }
    None
}

pub fn naive_contains(source: &[TokenId], pat: &[TokenId]) -> bool {
    pat.is_empty() || source.windows(pat.len()).any(|w| w == pat)
}

/// Random instance in the ranges used across the scheduler suites.
pub fn random_instance(
    rng: &mut ChaCha8Rng,
    max_blocks: usize,
    max_chunks: usize,
) -> ScheduleInstance {
    random_instance_with(rng, max_blocks, max_chunks, 120)
}

pub fn random_instance_with(
    rng: &mut ChaCha8Rng,
    max_blocks: usize,
    max_chunks: usize,
    max_load: u64,
) -> ScheduleInstance {
    let n = rng.gen_range(1..=max_blocks);
    let c = rng.gen_range(1..=max_chunks);
    let r = rng.gen_range(1..=4u64);
    let blocks = (0..n)
        .map(|_| {
            let g1 = rng.gen_range(1..=50u64);
            let slow: f64 = rng.gen_range(0.8..1.5);
            BlockProfile {
                load_g2: rng.gen_range(0..=max_load),
                compute_g1: g1,
                compute_g2_sub: ((g1 as f64 * slow) / r as f64).ceil() as u64,
            }
        })
        .collect();
    ScheduleInstance::new(c, r as usize, blocks).unwrap()
}

/// Checks the overlap bound of each covered greedy decision against
/// estimates rebuilt from scratch, and that one slot fewer would not do.
pub fn overlap_bound_violations(inst: &ScheduleInstance, g: &GreedySchedule) -> Vec<String> {
    let n = inst.blocks.len();
    let slots = inst.chunks * n;
    let mut on_g2_from: Vec<Option<usize>> = vec![None; n];
    let mut bad = Vec::new();
    let est = |on: &[Option<usize>], s: usize| -> u64 {
        let b = s % n;
        let p = &inst.blocks[b];
        match on[b] {
            Some(q) if q <= s => inst.subchunk_factor as u64 * p.compute_g2_sub,
            _ => p.compute_g1,
        }
    };
    for d in &g.decisions {
        if let Some(k) = d.k {
            if k == 0 || d.point + k > slots {
                bad.push(format!(
                    "block {}: run {}+{} outside prefill",
                    d.block, d.point, k
                ));
            } else {
                let run: Vec<u64> = (d.point..d.point + k)
                    .map(|s| est(&on_g2_from, s))
                    .collect();
                let total: u64 = run.iter().sum();
                if (d.point..d.point + k).any(|s| s % n == d.block) {
                    bad.push(format!("block {}: run overlaps its own compute", d.block));
                }
                if total < d.load {
                    bad.push(format!(
                        "block {}: covered {} < load {}",
                        d.block, total, d.load
                    ));
                }
                if k > 1 && run[..k - 1].iter().sum::<u64>() >= d.load {
                    bad.push(format!("block {}: k={} not minimal", d.block, k));
                }
                if total != d.covered {
                    bad.push(format!(
                        "block {}: reported cover {} != {}",
                        d.block, d.covered, total
                    ));
                }
            }
        }
        on_g2_from[d.block] = Some(d.point);
    }
    bad
}

/// Slot-by-slot timeline recomputed independently of the simulator:
/// returns (prefill_done, switch_done).
pub fn timeline_oracle(inst: &ScheduleInstance, loads: &[(usize, usize)]) -> (u64, u64) {
    let n = inst.blocks.len();
    let slots = inst.chunks * n;
    let mut ready: Vec<Option<u64>> = vec![None; n];
    let mut channel = 0u64;
    let mut switch_done = 0u64;
    let mut issued = 0;
    let mut order: Vec<(usize, usize)> = loads.to_vec();
    order.sort_by_key(|&(_, p)| p);
    let mut t = 0u64;
    for s in 0..=slots {
        while issued < order.len() && order[issued].1 == s {
            let (b, _) = order[issued];
            let start = t.max(channel);
            channel = start + inst.blocks[b].load_g2;
            switch_done = switch_done.max(channel);
            ready[b] = Some(channel);
            issued += 1;
        }
        if s == slots {
            break;
        }
        let b = s % n;
        let p = &inst.blocks[b];
        t = match ready[b] {
            Some(r) => t.max(r) + inst.subchunk_factor as u64 * p.compute_g2_sub,
            None => t + p.compute_g1,
        };
    }
    (t, switch_done)
}

pub fn subset_sum_split(a: &[u64]) -> bool {
    let total: u64 = a.iter().sum();
    if total % 2 == 1 {
        return false;
    }
    let half = total / 2;
    (0u32..1 << a.len()).any(|mask| {
        a.iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .map(|(_, v)| v)
            .sum::<u64>()
            == half
    })
}
