//! Replication auditing for text-to-image training corpora.
//!
//! The crate works on precomputed embeddings and captions:
//!
//! * [`store`] reads and writes `EMB1` embedding files and caption sets.
//! * [`simgraph`] runs exact blocked similarity search and finds duplicate clusters.
//! * [`metrics`] computes dataset similarity, replication flags and correlation statistics.
//! * [`complexity`] scores images by histogram entropy and JPEG size.
//! * [`mitigate`] implements the caption and embedding randomization strategies.
//! * [`manifest`] builds duplication-aware training manifests and samples epochs from them.

pub mod complexity;
pub mod error;
pub mod manifest;
pub mod metrics;
pub mod mitigate;
pub mod rng;
pub mod simgraph;
mod special;
pub mod store;

pub use error::{Error, Result};
pub use store::{CaptionRecord, EmbeddingMatrix};

/// Runs `f` inside a rayon pool with `threads` workers (0 picks the rayon default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}
