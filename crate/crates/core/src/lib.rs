//! Streaming analysis of national medical-device registry dumps.
//!
//! The crate ingests UDI registry archives, runs a declarative two-layer
//! filter (medical-device software first, AI-enabled devices second),
//! annotates survivors and aggregates them into report tables.

pub mod analytics;
pub mod annotate;
pub mod bench;
pub mod filter;
pub mod ingest;
pub mod record;
pub mod regnum;
pub mod report;
pub mod scan;
pub mod synth;
pub mod text;
pub mod udi;
pub mod verify;
