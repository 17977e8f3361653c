//! Interactive concept retrieval: eigenfunction-approximated graph
//! regularization over a visual and a semantic modality, with active
//! learning on top.

pub mod active;
pub mod eigenmap;
pub mod error;
pub mod harness;
pub mod io;
pub mod numerics;
pub mod pipeline;
pub mod solver;
pub mod taxonomy;

pub use active::{ActiveLearner, QueryStrategy, StrategyKind, ThresholdState};
pub use error::{Error, Result};
pub use numerics::DenseMatrix;
pub use pipeline::{OfflineBases, PipelineConfig};
pub use solver::{FusionWeights, Label, LabelFunction, LabelState, Modality};
