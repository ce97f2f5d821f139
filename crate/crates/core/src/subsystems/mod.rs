//! Per-queue Markov chains the system is decomposed into.

pub mod core_queue;
pub mod single;
pub mod superposed;
pub mod tandem;

pub use core_queue::{
    binomial_departure_pmf, build_core_queue_matrix, core_arrival_batch_pmf, CoreQueueSpec, CoreRates,
};
pub use single::{build_single_queue_matrix, single_queue_closed_form, SingleQueueSpec};
pub use superposed::{
    build_superposed_queue_matrix, infinite_superposed_steady_state, Buffer, InfiniteQueueSolution,
    SuperposedQueueSpec, SuperposedRates, DEFAULT_STATE_CAP, TAIL_MASS_TOL,
};
pub use tandem::{build_tandem_matrix, tandem_blocks, TandemBlocks, TandemSpec};
