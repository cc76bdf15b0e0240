//! Retrieval-based speculative decoding with draft reuse, plus a model-switch
//! scheduler for heterogeneous accelerator graphs.

pub mod automaton;
pub mod calibration;
pub mod engine;
pub mod error;
pub mod harness;
pub mod lm;
pub mod retrieval;
pub mod scheduler;
pub mod token;
pub mod tree;
pub mod verify;

pub use error::{Error, Result};
pub use lm::TableLm;
pub use token::{TokenId, Vocab};
