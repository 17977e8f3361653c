//! Session-oriented HTTP service for interactive concept retrieval.
//!
//! A collection is ingested once (features, item classes, taxonomy) and its
//! bases are fitted offline. Sessions then run the labeling loop against it;
//! each session is an append-only event log replayed on startup.

pub mod api;
pub mod collection;
pub mod error;
pub mod session;
pub mod store;

pub use api::{router, serve};
pub use collection::{Collection, CollectionDescriptor, Upload};
pub use error::{Result, ServiceError};
pub use session::{Event, LabelRequest, Seed, SessionState};
pub use store::{CreateSession, Service};
