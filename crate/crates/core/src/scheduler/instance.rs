use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Profiled latencies of one model block, in integer time units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockProfile {
    pub load_g2: u64,
    pub compute_g1: u64,
    pub compute_g2_sub: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScheduleInstance {
    pub chunks: usize,
    pub subchunk_factor: usize,
    pub blocks: Vec<BlockProfile>,
}

/// Which graph a block computes a chunk with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Graph {
    G1,
    G2,
}

impl ScheduleInstance {
    pub fn new(chunks: usize, subchunk_factor: usize, blocks: Vec<BlockProfile>) -> Result<Self> {
        let inst = ScheduleInstance {
            chunks,
            subchunk_factor,
            blocks,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() {
            return Err(Error::input("instance needs at least one block"));
        }
        if self.chunks == 0 {
            return Err(Error::input("instance needs at least one chunk"));
        }
        if self.subchunk_factor == 0 {
            return Err(Error::input("subchunk_factor must be at least 1"));
        }
        // Bounds every timeline so the simulator can add without checks.
        let r = self.subchunk_factor as u128;
        let per_chunk: u128 = self
            .blocks
            .iter()
            .map(|b| (b.compute_g1 as u128).max(r * b.compute_g2_sub as u128))
            .sum();
        let loads: u128 = self.blocks.iter().map(|b| b.load_g2 as u128).sum();
        let worst = (self.chunks as u128)
            .saturating_mul(per_chunk)
            .saturating_add(loads);
        if worst > u64::MAX as u128 {
            return Err(Error::input("instance times overflow 64 bits"));
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let inst: ScheduleInstance = serde_json::from_str(s)?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Number of compute slots, `chunks * blocks`.
    pub fn num_slots(&self) -> usize {
        self.chunks * self.blocks.len()
    }

    /// Block that computes in slot `s`.
    pub fn slot_block(&self, s: usize) -> usize {
        s % self.blocks.len()
    }

    pub fn slot_chunk(&self, s: usize) -> usize {
        s / self.blocks.len()
    }

    /// Last slot in which block `b` computes.
    pub fn final_slot(&self, b: usize) -> usize {
        (self.chunks - 1) * self.blocks.len() + b
    }

    /// Full-chunk compute time of block `b` on graph `g`.
    pub fn compute(&self, b: usize, g: Graph) -> u64 {
        let p = &self.blocks[b];
        match g {
            Graph::G1 => p.compute_g1,
            Graph::G2 => self.subchunk_factor as u64 * p.compute_g2_sub,
        }
    }

    /// Prefill time with every block left on G¹.
    pub fn pure_prefill(&self) -> u64 {
        self.chunks as u64 * self.blocks.iter().map(|b| b.compute_g1).sum::<u64>()
    }

    pub fn total_load(&self) -> u64 {
        self.blocks.iter().map(|b| b.load_g2).sum()
    }
}
