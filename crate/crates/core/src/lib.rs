//! Sentence simplification as sequence-to-sequence learning with a
//! reinforcement-learning fine-tuning stage.
//!
//! The crate is organised bottom-up:
//!
//! - [`textproc`]: tokens, entity anonymization, vocabulary, corpus files.
//! - [`metrics`]: SARI, BLEU, FKGL, TER and corpus output statistics.
//! - [`ndgraph`]: a small reverse-mode autodiff tape, LSTM cells and optimizers.
//! - [`seq2seq`]: the attention encoder-decoder policy.
//! - [`rewardmodels`]: simplicity, relevance and fluency rewards.
//! - [`reinforce`]: rollouts, the baseline regressor and the curriculum trainer.
//! - [`lexsimp`]: the lexical substitution model and decode-time interpolation.
//! - [`cli`]: configuration, checkpoints, the synthetic corpus and pipeline stages.

pub mod cli;
pub mod error;
pub mod lexsimp;
pub mod metrics;
pub mod ndgraph;
pub mod reinforce;
pub mod rewardmodels;
pub mod rng;
pub mod seq2seq;
pub mod textproc;

pub use error::{DressError, Result};
