use serde::{Deserialize, Serialize};

use super::exact::feasible;
use super::instance::{BlockProfile, ScheduleInstance};
use crate::error::{Error, Result};

/// Scheduling instance built from a 2-partition instance, plus the deadline
/// a plan must meet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionReduction {
    pub instance: ScheduleInstance,
    pub deadline: u64,
}

/// Builds the two-chunk instance whose deadline is reachable exactly when
/// `a` splits into two equal halves.
///
/// Times are scaled by an even `K > m` so every value is an integer: item
/// `j` loads in `K·a_j`, computes in 0 on G¹ and 1 on G²; the long block
/// (last index) loads in 0 and computes `K·Σa/2` on G¹ and `K` more on G².
/// The deadline is the all-G¹ prefill plus `m`, which absorbs the G² cost of
/// the items but no load of length `K` or more.
pub fn reduce_partition(a: &[u64]) -> Result<PartitionReduction> {
    if a.is_empty() {
        return Err(Error::input("partition instance is empty"));
    }
    if a.contains(&0) {
        return Err(Error::input("partition values must be positive"));
    }
    let m = a.len() as u64;
    let k = 2 * (m + 1);
    let sum: u64 = a.iter().sum();
    let window = k * sum / 2;
    let mut blocks: Vec<BlockProfile> = a
        .iter()
        .map(|&x| BlockProfile {
            load_g2: k * x,
            compute_g1: 0,
            compute_g2_sub: 1,
        })
        .collect();
    blocks.push(BlockProfile {
        load_g2: 0,
        compute_g1: window,
        compute_g2_sub: window + k,
    });
    let instance = ScheduleInstance::new(2, 1, blocks)?;
    let deadline = instance.pure_prefill() + m;
    Ok(PartitionReduction { instance, deadline })
}

impl PartitionReduction {
    pub fn feasible(&self) -> Result<bool> {
        feasible(&self.instance, self.deadline)
    }
}
