use serde::{Deserialize, Serialize};

use super::instance::ScheduleInstance;
use crate::error::{Error, Result};

/// One G² load. `point` is the compute-run boundary the load is issued at:
/// point `p` means "before slot `p`", so `chunk * N + position` for a
/// position inside a chunk and `chunks * N` for after the final compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LoadIssue {
    pub block: usize,
    pub point: usize,
}

impl LoadIssue {
    /// `(chunk, position-in-chunk)` form of the issue point.
    pub fn round(&self, num_blocks: usize) -> (usize, usize) {
        (self.point / num_blocks, self.point % num_blocks)
    }
}

/// Loads in issue order. The load channel is serialized, so this order is
/// also the order loads run in.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchPlan {
    pub loads: Vec<LoadIssue>,
}

impl SwitchPlan {
    pub fn new(loads: Vec<LoadIssue>) -> Self {
        SwitchPlan { loads }
    }

    /// Checks block ids, duplicate switches, and issue order. A plan may
    /// leave blocks unswitched.
    pub fn check(&self, inst: &ScheduleInstance) -> Result<()> {
        let n = inst.num_blocks();
        let mut seen = vec![false; n];
        let mut last = 0;
        for l in &self.loads {
            if l.block >= n {
                return Err(Error::input(format!(
                    "plan references unknown block {}",
                    l.block
                )));
            }
            if seen[l.block] {
                return Err(Error::input(format!("block {} switched twice", l.block)));
            }
            seen[l.block] = true;
            if l.point > inst.num_slots() {
                return Err(Error::input(format!(
                    "issue point {} past the end",
                    l.point
                )));
            }
            if l.point < last {
                return Err(Error::input("loads must be listed in issue order"));
            }
            last = l.point;
        }
        Ok(())
    }

    pub fn is_complete(&self, inst: &ScheduleInstance) -> bool {
        let mut seen = vec![false; inst.num_blocks()];
        for l in &self.loads {
            if let Some(s) = seen.get_mut(l.block) {
                *s = true;
            }
        }
        seen.iter().all(|&s| s) && self.loads.len() == seen.len()
    }

    pub fn point_of(&self, block: usize) -> Option<usize> {
        self.loads
            .iter()
            .find(|l| l.block == block)
            .map(|l| l.point)
    }
}

/// Every load waits for the whole prefill.
pub fn synchronous_plan(inst: &ScheduleInstance) -> SwitchPlan {
    let end = inst.num_slots();
    SwitchPlan::new(
        (0..inst.num_blocks())
            .rev()
            .map(|block| LoadIssue { block, point: end })
            .collect(),
    )
}

/// Each block loads right after its last-chunk compute, in block order.
pub fn naive_async_plan(inst: &ScheduleInstance) -> SwitchPlan {
    SwitchPlan::new(
        (0..inst.num_blocks())
            .map(|block| LoadIssue {
                block,
                point: inst.final_slot(block) + 1,
            })
            .collect(),
    )
}
