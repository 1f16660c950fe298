//! Dynamic graph-based approximate nearest neighbor search over
//! locally-adaptive quantized vectors, plus a streaming benchmark harness.
//!
//! The crate is organized around a small set of building blocks:
//!
//! - [`dataio`]: dataset loading (`*vecs` interchange format), splitting, and
//!   a synthetic clustered-dataset generator.
//! - [`quantize`]: per-vector scalar quantization with locally-adaptive
//!   bounds, one- and two-level codes, and fractional-bit analysis encoders.
//! - [`layout`]: bit-exact packed code layouts (sequential and turbo) with
//!   fused decode-and-accumulate similarity kernels.
//! - [`mlvq`]: multi-means quantization backed by deterministic k-means.
//! - [`distance`]: similarity functions over full-precision and encoded
//!   vectors, per-query preprocessing, and two-level re-ranking.
//! - [`graph`]: the dynamic proximity graph (greedy search, alpha pruning,
//!   insertion, lazy deletion, consolidation).
//! - [`store`]: vector storage backends (full precision or encoded) consumed
//!   by the graph.
//! - [`oracle`]: exact brute-force ground truth.
//! - [`stream`]: streaming protocols (IID and distribution shift), window
//!   calibration, and the quantization-error / window-size studies.
//! - [`container`]: serialization of encoded datasets.

pub mod container;
pub mod dataio;
pub mod distance;
pub mod error;
pub mod graph;
pub mod layout;
pub mod mlvq;
pub mod oracle;
pub mod quantize;
pub mod store;
pub mod stream;

pub use error::{Error, Result};
