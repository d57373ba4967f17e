//! Cross-lingual keyword spotting from visually grounded speech.
//!
//! A convolutional speech network is trained to predict, for an untranscribed
//! utterance in a search language, the soft keyword tags that a visual tagger
//! in a query language assigns to the image paired with that utterance. At test
//! time each output dimension is a detection score for one query-language
//! keyword, so ranking utterances by that dimension performs cross-lingual
//! keyword spotting.
//!
//! ```text
//! corpus -> features -> targets -> network/trainer -> spotting (rank + metrics)
//!                                        ^
//!                         baselines -----+
//! ```

pub mod baselines;
pub mod corpus;
pub mod dataset;
pub mod error;
pub mod features;
pub mod network;
pub mod seed;
pub mod spotting;
pub mod targets;
pub mod trainer;

pub use error::{Error, Result};
