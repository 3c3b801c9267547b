//! Trimmed and truncated Birkhoff sums of heavy-tailed observables over
//! Markov measures on one-sided subshifts of finite type.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiments;
pub mod measure;
pub mod norming;
pub mod observable;
pub mod report;
pub mod rng;
pub mod shift;
pub mod spectral;
pub mod trimming;

pub use config::{ExperimentConfig, Mode};
pub use error::{Error, Result};
pub use experiments::{summarize, Experiment, RunOptions, Summary};
pub use measure::{GibbsBracket, MarkovMeasure, TrajectorySampler};
pub use norming::{PsiFunction, TrimSchedule};
pub use observable::{Observable, ParetoObservable, ReturnTimeObservable};
pub use report::{ExperimentReport, Row};
pub use shift::{CylinderMeasure, ShiftSystem, Word};
pub use spectral::{CylinderFunction, TransferMatrix};
pub use trimming::TrimAccumulator;
