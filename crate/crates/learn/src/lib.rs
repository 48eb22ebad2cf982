//! Learning side of the MGDIL pipeline: text encoding, the domain-invariant
//! latent model with its three objectives, relational message passing and the
//! evaluation harness.

pub mod bench;
pub mod checkpoint;
pub mod data;
pub mod encode;
pub mod gradcheck;
pub mod graph;
pub mod grl;
pub mod losses;
pub mod model;
pub mod optim;
pub mod train;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("empty document")]
    EmptyDocument,
    #[error("encoder error: {0}")]
    Encoder(String),
    #[error("degenerate projection: zero-norm projection vector")]
    DegenerateProjection,
    #[error("row {row} has no domain label")]
    MissingDomain { row: usize },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}: L_cls={l_cls} L_adv={l_adv} L_con={l_con}")]
    NonFinite {
        epoch: usize,
        batch: usize,
        l_cls: f64,
        l_adv: f64,
        l_con: f64,
    },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub use data::{Batch, Dataset};
pub use model::ModelState;
pub use train::{train, TrainConfig};
