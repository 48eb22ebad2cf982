//! Data side of the MGDIL pipeline: dataset ingestion, profile features,
//! post summaries and instruction documents.

pub mod ingest;
pub mod instruction;
pub mod profile;
pub mod summary;
mod text;

pub use ingest::{Label, UserRecord};
pub use instruction::{build_instruction, InstructionDoc, Variant};
pub use profile::{render_profile, Lexicons, ProfileRendering};
pub use summary::PostSummary;
