use rustc_hash::FxHashSet;

use super::greedy::greedy_schedule;
use super::instance::{Graph, ScheduleInstance};
use super::plan::{naive_async_plan, synchronous_plan, LoadIssue, SwitchPlan};
use super::sim::{simulate, LatencyReport};
use crate::error::{Error, Result};

/// Largest instance `brute_force_schedule` accepts.
pub const BRUTE_MAX_BLOCKS: usize = 8;
pub const BRUTE_MAX_CHUNKS: usize = 3;
/// Deadline checks prune much harder, so they take bigger instances.
pub const FEASIBLE_MAX_BLOCKS: usize = 12;
pub const FEASIBLE_MAX_CHUNKS: usize = 3;
const MAX_NODES: u64 = 50_000_000;
const KEY: usize = FEASIBLE_MAX_BLOCKS + 3;
type Ends = [u64; FEASIBLE_MAX_BLOCKS];

struct RestTable {
    by_block: [u64; FEASIBLE_MAX_BLOCKS + 1],
}

struct Search {
    n: usize,
    total: usize,
    chunks: usize,
    g1: Vec<u64>,
    g2: Vec<u64>,
    load: Vec<u64>,
    /// Best overall found so far; the search only looks for strictly better.
    best: u64,
    best_plan: Option<Vec<LoadIssue>>,
    stop_at: Option<u64>,
    path: Vec<LoadIssue>,
    seen: FxHashSet<[u64; KEY]>,
    nodes: u64,
}

impl Search {
    fn next_slot(&self, b: usize, p: usize) -> Option<usize> {
        let c = if p <= b { 0 } else { (p - b).div_ceil(self.n) };
        Some(c * self.n + b).filter(|&s| s < self.total)
    }

    fn done(&self) -> bool {
        self.stop_at.is_some_and(|d| self.best <= d)
    }

    /// Slots of block `b` at or after slot `s`.
    fn count_from(&self, b: usize, s: usize) -> u64 {
        let c = if s <= b { 0 } else { (s - b).div_ceil(self.n) };
        (self.chunks - c.min(self.chunks)) as u64
    }

    fn cheapest(&self, b: usize, mask: u32) -> u64 {
        if mask >> b & 1 == 1 {
            self.g2[b]
        } else {
            self.g1[b].min(self.g2[b])
        }
    }

    /// Suffix sums of the cheapest per-chunk cost over block index.
    fn rest_table(&self, mask: u32) -> RestTable {
        let mut by_block = [0u64; FEASIBLE_MAX_BLOCKS + 1];
        for b in (0..self.n).rev() {
            by_block[b] = by_block[b + 1] + self.cheapest(b, mask);
        }
        RestTable { by_block }
    }

    /// Least possible compute from slot `s` to the end.
    fn rest_compute(&self, rt: &RestTable, s: usize) -> u64 {
        if s >= self.total {
            return 0;
        }
        (self.chunks - s / self.n - 1) as u64 * rt.by_block[0] + rt.by_block[s % self.n]
    }

    /// Lower bound on overall from state at point `p`.
    fn bound(&self, rt: &RestTable, p: usize, t: u64, l: u64, mask: u32, ends: &Ends) -> u64 {
        let mut lb = t + self.rest_compute(rt, p);
        let rest: u64 = (0..self.n)
            .filter(|&b| mask >> b & 1 == 0)
            .map(|b| self.load[b])
            .sum();
        lb = lb.max(if rest > 0 { l.max(t) + rest } else { l });
        for b in 0..self.n {
            if mask >> b & 1 == 1 && ends[b] > t {
                if let Some(s) = self.next_slot(b, p) {
                    lb = lb.max(ends[b] + self.rest_compute(rt, s));
                }
            }
        }
        lb
    }

    fn dfs(&mut self, p: usize, t: u64, l: u64, mask: u32, ends: &mut Ends) -> Result<()> {
        self.nodes += 1;
        if self.nodes > MAX_NODES {
            return Err(Error::Size(format!(
                "exact search exceeded {MAX_NODES} nodes"
            )));
        }
        let full = (1u32 << self.n) - 1;
        if p == self.total {
            let rest: u64 = (0..self.n)
                .filter(|&b| mask >> b & 1 == 0)
                .map(|b| self.load[b])
                .sum();
            let sw = if mask == full { l } else { l.max(t) + rest };
            let overall = t.max(sw);
            if overall < self.best {
                self.best = overall;
                let mut plan = self.path.clone();
                plan.extend(
                    (0..self.n)
                        .rev()
                        .filter(|&b| mask >> b & 1 == 0)
                        .map(|block| LoadIssue { block, point: p }),
                );
                self.best_plan = Some(plan);
            }
            return Ok(());
        }
        let rt = self.rest_table(mask);
        if self.bound(&rt, p, t, l, mask, ends) >= self.best {
            return Ok(());
        }
        let mut key = [0u64; KEY];
        key[0] = (p as u64) << 32 | mask as u64;
        key[1] = t;
        key[2] = if mask == full { l } else { l.max(t) };
        for b in 0..self.n {
            if mask >> b & 1 == 1 && ends[b] > t && self.next_slot(b, p).is_some() {
                key[3 + b] = ends[b];
            }
        }
        if !self.seen.insert(key) {
            return Ok(());
        }

        self.batch(p, t, l, mask, 0, ends)?;
        // Blocks whose own stall alone would reach the incumbent.
        let mut hopeless = 0u32;
        for b in 0..self.n {
            if mask >> b & 1 == 0 {
                if let Some(s) = self.next_slot(b, p) {
                    let upgrade = (self.g2[b] - self.cheapest(b, mask)) * self.count_from(b, s);
                    if l.max(t) + self.load[b] + self.rest_compute(&rt, s) + upgrade >= self.best {
                        hopeless |= 1 << b;
                    }
                }
            }
        }
        // A batch at point p that leaves out the block of slot p-1 can move
        // to p-1 without delaying anything, so only batches containing that
        // block are tried past point 0.
        let (anchor, free) = if p == 0 {
            (0, full & !mask & !hopeless)
        } else {
            let a = 1u32 << ((p - 1) % self.n);
            if (mask | hopeless) & a != 0 {
                return Ok(());
            }
            (a, full & !mask & !a & !hopeless)
        };
        let mut sub = 0u32;
        loop {
            if anchor | sub != 0 {
                if self.done() {
                    break;
                }
                self.batch(p, t, l, mask, anchor | sub, ends)?;
            }
            if sub == free {
                break;
            }
            sub = (sub.wrapping_sub(free)) & free;
        }
        Ok(())
    }

    /// Issues `batch` at point `p`, runs slot `p`, and recurses.
    fn batch(
        &mut self,
        p: usize,
        t: u64,
        l: u64,
        mask: u32,
        batch: u32,
        ends: &mut Ends,
    ) -> Result<()> {
        // Within a batch, loads whose block computes sooner go first; this
        // ordering dominates every other one.
        let mut order = [(0usize, 0usize); FEASIBLE_MAX_BLOCKS];
        let mut len = 0;
        for b in (0..self.n).filter(|&b| batch >> b & 1 == 1) {
            order[len] = (self.next_slot(b, p).unwrap_or(usize::MAX), b);
            len += 1;
        }
        let order = &mut order[..len];
        order.sort_unstable();
        let saved = *ends;
        let depth = self.path.len();
        let mut ch = l;
        for &(_, b) in order.iter() {
            ch = ch.max(t) + self.load[b];
            ends[b] = ch;
            self.path.push(LoadIssue { block: b, point: p });
        }
        let m2 = mask | batch;
        let b = p % self.n;
        let t2 = if m2 >> b & 1 == 1 {
            t.max(ends[b]) + self.g2[b]
        } else {
            t + self.g1[b]
        };
        let r = self.dfs(p + 1, t2, ch, m2, ends);
        self.path.truncate(depth);
        *ends = saved;
        r
    }
}

fn search(inst: &ScheduleInstance, best: u64, stop_at: Option<u64>) -> Result<Search> {
    let n = inst.num_blocks();
    let mut s = Search {
        n,
        total: inst.num_slots(),
        chunks: inst.chunks,
        g1: (0..n).map(|b| inst.compute(b, Graph::G1)).collect(),
        g2: (0..n).map(|b| inst.compute(b, Graph::G2)).collect(),
        load: inst.blocks.iter().map(|b| b.load_g2).collect(),
        best,
        best_plan: None,
        stop_at,
        path: Vec::new(),
        seen: FxHashSet::default(),
        nodes: 0,
    };
    let mut ends = [0; FEASIBLE_MAX_BLOCKS];
    s.dfs(0, 0, 0, 0, &mut ends)?;
    Ok(s)
}

/// Minimum-overall complete plan, by exhaustive branch and bound over load
/// issue points.
pub fn brute_force_schedule(inst: &ScheduleInstance) -> Result<(SwitchPlan, LatencyReport)> {
    inst.validate()?;
    if inst.num_blocks() > BRUTE_MAX_BLOCKS || inst.chunks > BRUTE_MAX_CHUNKS {
        return Err(Error::Size(format!(
            "brute force handles at most {BRUTE_MAX_BLOCKS} blocks and {BRUTE_MAX_CHUNKS} chunks"
        )));
    }
    let mut best_plan = synchronous_plan(inst);
    let mut best = simulate(inst, &best_plan)?;
    for plan in [naive_async_plan(inst), greedy_schedule(inst)] {
        let r = simulate(inst, &plan)?;
        if r.overall < best.overall {
            best = r;
            best_plan = plan;
        }
    }
    let s = search(inst, best.overall, None)?;
    if let Some(loads) = s.best_plan {
        best_plan = SwitchPlan::new(loads);
        best = simulate(inst, &best_plan)?;
        debug_assert_eq!(best.overall, s.best);
    }
    Ok((best_plan, best))
}

/// Whether some complete plan finishes (prefill and every switch) by
/// `deadline`. Returns the witness plan when one exists.
pub fn feasible_plan(inst: &ScheduleInstance, deadline: u64) -> Result<Option<SwitchPlan>> {
    inst.validate()?;
    if inst.num_blocks() > FEASIBLE_MAX_BLOCKS || inst.chunks > FEASIBLE_MAX_CHUNKS {
        return Err(Error::Size(format!(
            "feasibility check handles at most {FEASIBLE_MAX_BLOCKS} blocks and {FEASIBLE_MAX_CHUNKS} chunks"
        )));
    }
    let s = search(inst, deadline.saturating_add(1), Some(deadline))?;
    Ok(s.best_plan.map(SwitchPlan::new))
}

pub fn feasible(inst: &ScheduleInstance, deadline: u64) -> Result<bool> {
    feasible_plan(inst, deadline).map(|p| p.is_some())
}
