//! Adaptive receptive vocabulary size testing.
//!
//! The crate is organised around the life cycle of the test:
//!
//! - [`irt`]: Rasch-model probabilities, item information and ability estimation.
//! - [`bank`]: the stimulus bank (real words, multiple-choice items, pseudowords).
//! - [`cat`]: the live adaptive session, scoring and attention accounting.
//! - [`calibration`]: offline item calibration, fit statistics and conversion fitting.
//! - [`study`]: data cleaning and the group statistics run on exported results.
//! - [`sim`]: synthetic respondents and Monte-Carlo recovery studies.

pub mod bank;
pub mod calibration;
pub mod cat;
pub mod histogram;
pub mod irt;
pub mod sim;
pub mod study;

pub use bank::{ConversionCoefficients, ItemBank, Stimulus, StimulusKind, StimulusStatus};
pub use cat::{Answer, Demographics, Session, SessionConfig, TestResult};
pub use irt::{Ability, Prior, ScoredResponse};
