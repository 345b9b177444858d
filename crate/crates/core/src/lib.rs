//! Best–worst scaling: design 4-tuple questionnaires, collect best/worst
//! judgments, turn them into real-valued scores and measure how reliable
//! those scores are.

pub mod agreement;
pub mod cli;
mod error;
pub mod io;
pub mod model;
pub mod reliability;
pub mod scoring;
pub mod service;
pub mod simulator;
pub mod stats;
pub mod tuplegen;

pub use error::{Error, Result};
pub use model::{
    LexiconEntry, LexiconMetadata, Response, ScoredLexicon, StudyConfig, Term, TermId, Tuple4, TupleId, TupleSet,
};
