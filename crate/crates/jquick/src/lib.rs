//! Distributed quicksort with exact per-rank balance.
//!
//! Every recursion level picks a pivot, partitions locally, computes a
//! distributed exclusive prefix sum over the (small, large) counts and
//! redistributes elements so that each rank holds exactly its capacity:
//! `n/p` when `n` divides evenly, else `ceil(n/p)` on the first `n mod p`
//! ranks. When the small total does not land on a rank boundary, the
//! boundary rank joins both subgroups with split capacities and advances
//! both tasks simultaneously through nonblocking operations. Groups of one
//! or two ranks are deferred to a second phase: a lone rank sorts locally, a
//! pair exchanges everything and quickselects its share.
//!
//! Communicators for subgroups come from constant-time range splits, so the
//! entire recursion creates no communicator-management traffic.

pub mod config;
pub mod engine;
pub mod error;
pub mod task;

pub use config::{PivotMode, Schedule, SortConfig};
pub use engine::{
    sort, sort_on, SortKey, SortPoll, SortStats, Sorter, TAG_BASE_EXCHANGE, TAG_EXCHANGE_LARGE,
    TAG_EXCHANGE_SMALL,
};
pub use error::{Error, Result};
