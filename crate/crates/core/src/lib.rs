//! Simulation core for multi-tenant DNN execution on NPUs that share a
//! sliced last-level cache.
//!
//! The crate is `no_std` (it needs `alloc`) and performs no IO. File formats,
//! sweeps across threads and the command line live in the `camdn` crate.
//!
//! Layout:
//! - [`workload`]: layer/model descriptions, block segmentation, reuse analysis.
//! - [`mapper`]: offline cache-aware mapping and mapping candidate tables.
//! - [`cachemem`]: NPU subspace with NEC semantics and paging, transparent LRU
//!   baseline, DRAM channel queues.
//! - [`npu`]: tile-level execution of a mapping candidate.
//! - [`scheduler`]: dynamic cache page allocation.
//! - [`sim`]: discrete-event engine, scenarios and metrics.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod cachemem;
pub mod config;
pub mod error;
pub mod mapper;
pub mod npu;
pub mod scheduler;
pub mod sim;
pub mod workload;

pub use config::HardwareConfig;
pub use error::{Error, Result};

/// Simulated time in NPU clock cycles.
pub type Cycle = u64;
