//! Paragraph-level discourse relation sequence prediction.
//!
//! Encodes a paragraph of discourse units with a two-level bidirectional
//! LSTM (word level over the whole paragraph, max-pooling per unit, then
//! a unit-level pass) and predicts the sequence of implicit and explicit
//! relations between adjacent units, with untied prediction heads and an
//! optional linear-chain CRF over the slot sequence.

pub mod corpus;
pub mod crf;
pub mod encoder;
pub mod error;
pub mod harness;
pub mod heads;
pub mod model;
pub mod numeric;

pub use error::{Error, Result};
