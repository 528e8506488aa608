//! Exact k-nearest-neighbor search built as dataflow pipelines.
//!
//! Distances go through a staged squared-L2 datapath ([`distance`]) into a
//! systolic top-k queue ([`topk`]). Two engines ([`engine`]) wire these
//! together: FQ-SD answers a batch of queries while the dataset streams
//! through a double buffer, FD-SQ keeps the dataset resident across partition
//! workers and answers queries one at a time. [`oracle`] is the brute-force
//! reference both are checked against.

pub mod data_io;
pub mod distance;
pub mod engine;
pub mod oracle;
pub mod topk;
pub mod types;

pub use distance::DistanceStagingParams;
pub use engine::{EngineConfig, EngineError, Mode};
pub use oracle::brute_force_knn;
pub use topk::TopKQueue;
pub use types::{KnnResult, NeighborPair, Query, VectorId, VectorRecord};
