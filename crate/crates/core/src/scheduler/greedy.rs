use serde::{Deserialize, Serialize};

use super::instance::{Graph, ScheduleInstance};
use super::plan::{LoadIssue, SwitchPlan};

/// Why a greedy load landed where it did.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GreedyDecision {
    pub block: usize,
    pub point: usize,
    /// Length of the compute run that covers the load; `None` when no run
    /// before the end of prefill could hide it.
    pub k: Option<usize>,
    /// Estimated compute of the covering run.
    pub covered: u64,
    pub load: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GreedySchedule {
    pub plan: SwitchPlan,
    pub decisions: Vec<GreedyDecision>,
}

impl GreedySchedule {
    /// True when every load was hidden behind a compute run.
    pub fn all_covered(&self) -> bool {
        self.decisions.iter().all(|d| d.k.is_some())
    }
}

/// Estimated compute of slot `s` given the loads planned so far.
pub(crate) fn estimate(inst: &ScheduleInstance, switched_at: &[Option<usize>], s: usize) -> u64 {
    let b = inst.slot_block(s);
    let g = match switched_at[b] {
        Some(p) if p <= s => Graph::G2,
        _ => Graph::G1,
    };
    inst.compute(b, g)
}

/// Extra compute block `b` pays for running every slot from `p` on G².
fn switch_penalty(inst: &ScheduleInstance, b: usize, p: usize) -> i128 {
    let slots = (p..inst.num_slots())
        .filter(|&s| inst.slot_block(s) == b)
        .count() as i128;
    slots * (inst.compute(b, Graph::G2) as i128 - inst.compute(b, Graph::G1) as i128)
}

enum Cover {
    Run {
        point: usize,
        k: usize,
        covered: u64,
    },
    None,
}

/// Minimal run of slots starting at or after `p` that hides block `b`'s
/// load without containing a slot of `b` itself.
fn find_cover(
    inst: &ScheduleInstance,
    switched_at: &[Option<usize>],
    b: usize,
    mut p: usize,
) -> Cover {
    let load = inst.blocks[b].load_g2;
    let total = inst.num_slots();
    loop {
        if p >= total {
            return Cover::None;
        }
        // Switching early is only worth it if the slower compute costs less
        // than leaving the load exposed at the end.
        if switch_penalty(inst, b, p) > load as i128 {
            let own = (p..total)
                .find(|&s| inst.slot_block(s) == b)
                .expect("penalty implies a slot");
            p = own + 1;
            continue;
        }
        // A run cannot contain a slot of `b` itself; restart past it.
        let own = (p..total).find(|&s| inst.slot_block(s) == b);
        let mut sum = 0;
        for s in p..own.unwrap_or(total) {
            sum += estimate(inst, switched_at, s);
            if sum >= load {
                return Cover::Run {
                    point: p,
                    k: s + 1 - p,
                    covered: sum,
                };
            }
        }
        match own {
            Some(s) => p = s + 1,
            None => return Cover::None,
        }
    }
}

/// Back-to-front greedy switching: each load is issued with the shortest run
/// of upcoming compute that hides it, and the next load starts when that run
/// ends. Loads that cannot be hidden go after their block's last compute.
pub fn greedy_schedule_explained(inst: &ScheduleInstance) -> GreedySchedule {
    let n = inst.num_blocks();
    let mut switched_at = vec![None; n];
    let mut loads = Vec::with_capacity(n);
    let mut decisions = Vec::with_capacity(n);
    let mut p = 0;
    let mut spilled = false;
    for b in (0..n).rev() {
        let load = inst.blocks[b].load_g2;
        let cover = if spilled {
            Cover::None
        } else {
            find_cover(inst, &switched_at, b, p)
        };
        let d = match cover {
            Cover::Run { point, k, covered } => {
                p = point + k;
                GreedyDecision {
                    block: b,
                    point,
                    k: Some(k),
                    covered,
                    load,
                }
            }
            Cover::None => {
                spilled = true;
                let point = p.max(inst.final_slot(b) + 1);
                p = point;
                GreedyDecision {
                    block: b,
                    point,
                    k: None,
                    covered: 0,
                    load,
                }
            }
        };
        switched_at[b] = Some(d.point);
        loads.push(LoadIssue {
            block: b,
            point: d.point,
        });
        decisions.push(d);
    }
    GreedySchedule {
        plan: SwitchPlan::new(loads),
        decisions,
    }
}

pub fn greedy_schedule(inst: &ScheduleInstance) -> SwitchPlan {
    greedy_schedule_explained(inst).plan
}
