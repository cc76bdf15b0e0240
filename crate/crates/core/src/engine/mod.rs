//! The speculative decoding loop.

mod decode;
mod draft;
pub mod reuse;

pub use decode::{decode, CaseCounts, DecodeOutput, DecodeStats, EngineConfig, StepRecord};
pub use draft::{build_step_draft, StepDraft};
pub use reuse::{
    classify_case, compute_reuse, reusable_tokens, RejectionCase, ReuseBuffer, ReuseWindow, Segment,
};
