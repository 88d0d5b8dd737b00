use thiserror::Error;

use crate::fabric::{BaseRank, Tag};

/// Errors surfaced by fabric, communicator, point-to-point and collective
/// operations. Absence of a matching message is *not* an error; nonblocking
/// operations report it through their request state instead.
#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("rank {rank} is out of range for a fabric of {world} ranks")]
    RankOutOfRange { rank: usize, world: usize },

    #[error("base rank {0} is not a member of this communicator")]
    NotAMember(BaseRank),

    #[error("tag {0} lies in the band reserved for collective-internal traffic")]
    ReservedTag(Tag),

    #[error("incoming payload of {incoming} bytes exceeds receive capacity of {capacity} bytes")]
    Truncation { incoming: usize, capacity: usize },

    #[error("request is owned by rank {owner} and may not be driven by rank {caller}")]
    ForeignRequest { owner: BaseRank, caller: BaseRank },

    #[error("protocol violation: {0}")]
    Protocol(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
