//! Debug-mode registry of in-flight operations.
//!
//! When enabled on the fabric, every collective registers itself for the span
//! between its start and its local completion. The registry flags two
//! hazards: same-tag operations running concurrently on communicators that
//! share the same context and overlap in two or more ranks (the tag-scoped
//! usage restriction), and ranks disagreeing on the parameters of the same
//! collective (root mismatch).

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use crate::comm::MemberSet;
use crate::fabric::{BaseRank, ContextId, Tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    /// Two overlapping (>= 2 shared ranks) communicators with equal context
    /// ran concurrent operations under the same tag.
    TagOverlap,
    /// Ranks of one communicator disagreed on a collective's parameters.
    ScheduleMismatch,
}

#[derive(Debug, Clone)]
pub struct Violation {
    pub kind: ViolationKind,
    pub detail: String,
}

/// Parameters a collective registers so peers can cross-check them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct OpDesc {
    pub op: &'static str,
    pub root: usize,
    pub tag: Tag,
}

struct ActiveOp {
    id: u64,
    rank: BaseRank,
    ctx: ContextId,
    desc: OpDesc,
    members: MemberSet,
    /// Per-(rank, communicator) sequence number; parameter checks only apply
    /// between registrations with equal sequence so pipelined back-to-back
    /// collectives are not misflagged.
    seq: u64,
}

#[derive(Default)]
struct State {
    active: Vec<ActiveOp>,
    seqs: HashMap<(BaseRank, MemberSet), u64>,
    violations: Vec<Violation>,
}

pub(crate) struct OpRegistry {
    next_id: AtomicU64,
    state: Mutex<State>,
}

/// Handle returned from registration; pass back to `unregister` at local
/// completion.
#[derive(Debug, Clone, Copy)]
pub(crate) struct OpToken(u64);

impl OpRegistry {
    pub(crate) fn new() -> Self {
        OpRegistry {
            next_id: AtomicU64::new(1),
            state: Mutex::new(State::default()),
        }
    }

    pub(crate) fn register(
        &self,
        rank: BaseRank,
        ctx: ContextId,
        members: MemberSet,
        desc: OpDesc,
    ) -> OpToken {
        let id = self.next_id.fetch_add(1, Ordering::SeqCst);
        let mut st = self.state.lock().unwrap();
        let seq_key = (rank, members.clone());
        let seq = {
            let e = st.seqs.entry(seq_key).or_insert(0);
            let s = *e;
            *e += 1;
            s
        };

        let mut violations = Vec::new();
        for other in &st.active {
            if other.ctx != ctx {
                continue;
            }
            if other.desc.tag == desc.tag && other.members != members {
                if members.overlap_count(&other.members) >= 2 {
                    violations.push(Violation {
                        kind: ViolationKind::TagOverlap,
                        detail: format!(
                            "tag {} used concurrently on {} and {} (ctx {}, ranks {} and {})",
                            desc.tag, members, other.members, ctx, rank, other.rank
                        ),
                    });
                }
            } else if other.members == members && other.seq == seq && other.desc != desc {
                violations.push(Violation {
                    kind: ViolationKind::ScheduleMismatch,
                    detail: format!(
                        "rank {} started {}(root {}, tag {}) while rank {} runs {}(root {}, tag {}) on {}",
                        rank, desc.op, desc.root, desc.tag,
                        other.rank, other.desc.op, other.desc.root, other.desc.tag, members
                    ),
                });
            }
        }
        st.violations.extend(violations);
        st.active.push(ActiveOp {
            id,
            rank,
            ctx,
            desc,
            members,
            seq,
        });
        OpToken(id)
    }

    pub(crate) fn unregister(&self, token: OpToken) {
        let mut st = self.state.lock().unwrap();
        if let Some(pos) = st.active.iter().position(|a| a.id == token.0) {
            st.active.swap_remove(pos);
        }
    }

    pub(crate) fn take_violations(&self) -> Vec<Violation> {
        std::mem::take(&mut self.state.lock().unwrap().violations)
    }
}
