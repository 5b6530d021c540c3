//! Offline cache-aware mapping.
//!
//! For every layer the mapper produces several layer-wise mappings (LWM), one
//! per cache usage limit, and a layer-block mapping (LBM) that keeps the
//! activations between layers of a block entirely in cache. Search is
//! exhaustive over a heuristically pruned tiling space with modeled DRAM
//! traffic as the objective.

mod candidate;
mod loops;
mod mct;
mod search;

pub use candidate::{
    dram_traffic, tensor_traffic, CacheMapTable, CandidateKind, MappingCandidate, Placement, TensorMap,
};
pub use loops::{tile_extent, Dim, LoopOrder, LoopTable, TensorRole, TileFactors, TileStep};
pub use mct::{
    default_lbm_page_cap, default_usage_limits, generate_mct, largest_lwms, lbm_block_candidates,
    lbm_footprint_pages, map_model, MappingCandidateTable, MappingOptions, ModelMapping,
    DEFAULT_MAX_BLOCK_LAYERS,
};
pub use search::{factor_grid, heuristic_prune, single_point, solve_min_traffic, Subspace};
