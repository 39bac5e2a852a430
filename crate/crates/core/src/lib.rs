// Range checks are written as negated comparisons so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibrate;
pub mod chain;
pub mod cli;
pub mod correct;
pub mod error;
pub mod fit;
pub mod recipe;
pub mod report;
pub mod ringosc;
mod rng;
pub mod storage;
pub mod sweep;
pub mod time;
pub mod waveform;
