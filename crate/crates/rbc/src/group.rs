//! Nonblocking communicator creation.
//!
//! Creating a communicator boils down to agreeing on a context identifier no
//! live communicator uses. Two paths exist:
//!
//! * Range path: the group is a contiguous local-rank range `f'..=l'` of the
//!   parent with context `<a,b,f,l,c>`; every member derives
//!   `<a,b,f+f',f+l',c+1>` locally in constant time with zero envelopes. The
//!   generation counter `c` keeps an identity-range child distinct from its
//!   parent.
//! * General path: for an explicit member list, the group's first member
//!   (leader) forms `<leader_base, counter, 0, group_size, 0>`, bumps its
//!   counter, and broadcasts the tuple over a binomial tree restricted to the
//!   group, addressed through the parent's context with the caller's tag.
//!   Exactly `group_size - 1` envelopes.
//!
//! Creations are requests like any other nonblocking operation: several may
//! be in flight at once and make progress through interleaved test calls.

use std::sync::Arc;

use crate::comm::{CommMode, RangeComm};
use crate::error::{Error, Result};
use crate::fabric::{is_reserved_tag, BaseRank, ContextId, Endpoint, Tag};
use crate::request::{Machine, MachineStatus, ReqState, Request};

/// Group of parent-local ranks for a creation call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GroupSpec {
    /// Contiguous local-rank range `first..=last` of the parent.
    Range { first: usize, last: usize },
    /// Explicit ascending, duplicate-free list of parent-local ranks.
    Explicit(Vec<usize>),
}

/// Locally derive the context of a contiguous sub-range. Pure and O(1).
pub fn derive_range_ctx(parent: ContextId, f_off: usize, l_off: usize) -> Result<ContextId> {
    if f_off > l_off || l_off > parent.l - parent.f {
        return Err(Error::invalid(format!(
            "range offsets {f_off}..={l_off} exceed parent context span {}",
            parent.l - parent.f
        )));
    }
    Ok(ContextId::new(
        parent.a,
        parent.b,
        parent.f + f_off,
        parent.f + l_off,
        parent.c + 1,
    ))
}

/// True iff all given communicators carry pairwise-distinct contexts.
/// Multiple handles of one logical communicator (same context, same member
/// set, same mode) count once.
pub fn ctx_registry_check<'a>(comms: impl IntoIterator<Item = &'a RangeComm>) -> bool {
    let mut seen: Vec<&RangeComm> = Vec::new();
    for c in comms {
        for other in &seen {
            if other.ctx() == c.ctx()
                && (other.members() != c.members() || other.mode() != c.mode())
            {
                return false;
            }
        }
        seen.push(c);
    }
    true
}

fn validate_explicit(parent: &RangeComm, locals: &[usize]) -> Result<()> {
    if locals.is_empty() {
        return Err(Error::invalid("group must be nonempty"));
    }
    for w in locals.windows(2) {
        if w[0] >= w[1] {
            return Err(Error::invalid(
                "explicit group must be ascending and duplicate-free",
            ));
        }
    }
    if *locals.last().unwrap() >= parent.size() {
        return Err(Error::invalid(format!(
            "group member {} out of range for parent size {}",
            locals.last().unwrap(),
            parent.size()
        )));
    }
    Ok(())
}

struct CreateMachine {
    parent: RangeComm,
    tag: Tag,
    /// Group members as parent-local ranks, ascending; index = new local rank.
    locals: Arc<Vec<usize>>,
    my_idx: usize,
    ctx: Option<ContextId>,
    out: Option<RangeComm>,
}

impl CreateMachine {
    fn group_base(&self, idx: usize) -> Result<BaseRank> {
        self.parent.local_to_base(self.locals[idx])
    }

    fn send_children(&self, ep: &Endpoint, ctx: ContextId) -> Result<()> {
        let size = self.locals.len();
        let w = self.my_idx;
        let mut step = if w == 0 {
            1
        } else {
            1usize << (usize::BITS - 1 - w.leading_zeros()) << 1
        };
        while w + step < size {
            ep.send_on(&self.parent, self.locals[w + step], self.tag, ctx.encode())?;
            step <<= 1;
        }
        Ok(())
    }

    fn build_comm(&self) -> Result<RangeComm> {
        let bases: Result<Vec<BaseRank>> =
            (0..self.locals.len()).map(|i| self.group_base(i)).collect();
        Ok(RangeComm::from_table(
            self.parent.fabric(),
            Arc::new(bases?),
            self.ctx.expect("context agreed before construction"),
            CommMode::ContextScoped,
        ))
    }
}

impl Machine for CreateMachine {
    fn poll(&mut self, ep: &Endpoint) -> Result<MachineStatus> {
        if self.ctx.is_none() {
            let parent_idx = {
                let w = self.my_idx;
                w - (1usize << (usize::BITS - 1 - w.leading_zeros()))
            };
            let from = self.group_base(parent_idx)?;
            match ep.raw_recv(self.parent.ctx(), self.tag, from) {
                None => return Ok(MachineStatus::Stalled),
                Some(env) => {
                    let ctx = ContextId::decode(&env.payload)?;
                    self.ctx = Some(ctx);
                    self.send_children(ep, ctx)?;
                }
            }
        }
        if self.out.is_none() {
            self.out = Some(self.build_comm()?);
        }
        Ok(MachineStatus::Done {
            payload: None,
            comm: self.out.take(),
        })
    }
}

impl Endpoint {
    /// Nonblocking communicator creation, called collectively by exactly the
    /// group members with identical `group` and `tag`. The request yields the
    /// new communicator via [`Request::take_comm`].
    pub fn icomm_create_group(
        &self,
        parent: &RangeComm,
        group: &GroupSpec,
        tag: Tag,
    ) -> Result<Request> {
        if is_reserved_tag(tag) {
            return Err(Error::ReservedTag(tag));
        }
        let my_local = parent.base_to_local(self.rank())?;

        let locals: Vec<usize> = match group {
            GroupSpec::Range { first, last } => {
                if first > last || *last >= parent.size() {
                    return Err(Error::invalid(format!(
                        "group range {first}..={last} out of parent bounds"
                    )));
                }
                if !(*first..=*last).contains(&my_local) {
                    return Err(Error::NotAMember(self.rank()));
                }
                // Fast path: when the parent's context tuple describes the
                // parent's own range, a contiguous sub-range derives its
                // context locally; done on the first test, zero envelopes.
                // Otherwise (inherited tag-scoped contexts, strided or
                // table parents) the offsets would be ambiguous and the
                // general path runs instead.
                let pctx = parent.ctx();
                if *parent.members()
                    == (crate::comm::MemberSet::Range {
                        f: pctx.f,
                        l: pctx.l,
                        stride: 1,
                    })
                {
                    let ctx = derive_range_ctx(pctx, *first, *last)?;
                    let comm = parent.split_range(*first, *last)?.with_ctx(ctx);
                    return Ok(Request::done_with(self.rank(), None, None, Some(comm)));
                }
                (*first..=*last).collect()
            }
            GroupSpec::Explicit(locals) => {
                validate_explicit(parent, locals)?;
                locals.clone()
            }
        };

        let my_idx = locals
            .binary_search(&my_local)
            .map_err(|_| Error::NotAMember(self.rank()))?;

        let mut machine = CreateMachine {
            parent: parent.clone(),
            tag,
            locals: Arc::new(locals),
            my_idx,
            ctx: None,
            out: None,
        };

        if my_idx == 0 {
            // Leader: mint the context and broadcast it down the tree.
            let fabric = parent.fabric();
            let a = self.rank().0;
            let size = machine.locals.len();
            let mut b = fabric.next_leader_counter(self.rank());
            // The root context of the fabric is <0,0,0,p-1,0>; skip the one
            // counter value that would collide with it.
            if a == 0 && b == 0 && size == fabric.size() - 1 {
                b = fabric.next_leader_counter(self.rank());
            }
            let ctx = ContextId::new(a, b, 0, size, 0);
            machine.ctx = Some(ctx);
            machine.send_children(self, ctx)?;
            let comm = machine.build_comm()?;
            return Ok(Request::done_with(self.rank(), None, None, Some(comm)));
        }

        Ok(Request::new(self.rank(), ReqState::Coll(Box::new(machine))))
    }
}
