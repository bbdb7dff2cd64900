//! Device identification, vulnerability enrichment and risk scoring for
//! networked embedded devices.

pub mod enrich;
pub mod identify;
pub mod kb;
pub mod model;
pub mod pipeline;
pub mod score;
pub mod version;

pub use model::*;
