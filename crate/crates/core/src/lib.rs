pub mod bidaf;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod nn;
pub mod phoc;
pub mod retriever;
pub mod snippet_qa;
pub mod synth;

pub use error::{Error, Result};
