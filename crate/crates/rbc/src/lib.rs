//! Range-based communicators over a simulated multi-rank message-passing
//! fabric.
//!
//! Communicators are (possibly strided) rank ranges created and split in
//! constant time without communication. On top of them the crate provides
//! blocking and nonblocking point-to-point operations with wildcard-source
//! membership filtering, binomial-tree collectives driven as explicit state
//! machines by test calls, and nonblocking communicator creation with
//! tuple-valued context identifiers.
//!
//! The fabric is an in-process simulation: one mailbox per rank, FIFO per
//! (source, context) pair, buffered sends, and message/byte counters in place
//! of a network. Rank workers are ordinary threads (see [`runner::run_ranks`]);
//! nonblocking requests progress only inside test calls, so deterministic
//! single-threaded drivers work just as well (see [`runner::drive`]).

pub mod coll;
pub mod comm;
pub mod error;
pub mod fabric;
pub mod group;
pub mod p2p;
pub mod registry;
pub mod request;
pub mod runner;
pub mod wire;

pub use coll::ReduceOp;
pub use comm::{CommMode, MemberSet, RangeComm};
pub use error::{Error, Result};
pub use fabric::{
    is_reserved_tag, BaseRank, ContextId, Endpoint, Envelope, Fabric, Header, SrcFilter, Tag,
};
pub use group::{ctx_registry_check, derive_range_ctx, GroupSpec};
pub use p2p::Src;
pub use registry::{Violation, ViolationKind};
pub use request::{Request, Status};
