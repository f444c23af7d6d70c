//! Edge caching for shared virtual environments with association-rule
//! prefetching gated by spatial proximity, plus an adaptive support tuner.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arm;
pub mod cache;
pub mod domain;
pub mod error;
pub mod experiment;
pub mod io;
pub mod prefetch;
pub mod sim;
pub mod tuner;
pub mod workload;

pub use cache::{Cache, CacheConfig, Policy};
pub use domain::{AccessEvent, Catalog, ObjectId, Point, Transaction, UserId, VirtualObject};
pub use error::{Error, Result};
pub use prefetch::SpaarcParams;
pub use sim::{Mode, RunConfig, RunReport};
pub use tuner::TunerConfig;
