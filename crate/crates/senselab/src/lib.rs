//! Word sense disambiguation with a held-out-word LSTM language model.
//!
//! The pipeline: tokenize raw text and build a [`corpus::Vocabulary`]; train
//! an [`lstm`] language model that predicts a held-out word from its
//! sentence; average the model's context vectors over sense-annotated
//! occurrences into a [`wsd::SenseEmbeddingTable`]; disambiguate new
//! occurrences by nearest sense embedding (optionally propagating labels
//! over a similarity graph); and score predictions against gold keys with
//! [`eval`].

pub mod corpus;
pub mod eval;
pub mod lstm;
pub mod numeric;
pub mod wsd;
