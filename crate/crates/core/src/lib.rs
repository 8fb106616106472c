// `!(x > 0.0)` is used on purpose so that NaN fails validation too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Coarse-to-fine RLHF at desk scale.
//!
//! A tiny decoder-only transformer is pretrained on a synthetic grammar, then
//! taken down two paths: supervised fine-tuning toward short EOS-terminated
//! answers, and PPO against a learned reward model with EOS-suppressed
//! sampling and an adaptive output-length limit. The two results are merged
//! by linear parameter interpolation and evaluated for redundancy, length,
//! reward, and win rate.

pub mod checkpoint;
pub mod coarse;
pub mod data;
pub mod error;
pub mod eval;
pub mod merge;
pub mod model;
pub mod optim;
pub mod params;
pub mod pipeline;
pub mod ppo;
pub mod reward;
pub mod sampling;
pub mod sft;
pub mod tensor;

pub use error::{Error, Result};
