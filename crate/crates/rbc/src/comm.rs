//! Range-based communicators.
//!
//! A communicator is a (possibly strided) range of base ranks plus a context
//! identifier, representable in constant space and splittable in constant
//! time without communication. Two creation modes exist:
//!
//! * `TagScoped` children inherit the parent's context. Traffic of
//!   overlapping communicators is separated by tags only, so two
//!   communicators sharing two or more ranks must not run concurrent
//!   operations with equal tags (the debug registry flags this).
//! * `ContextScoped` children derive a fresh context tuple locally, which
//!   removes the tag restriction entirely.
//!
//! Splitting is pure arithmetic: non-members may compute a child descriptor
//! too, though only members can communicate through it.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fabric::{BaseRank, ContextId, Fabric};
use crate::group::derive_range_ctx;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CommMode {
    TagScoped,
    ContextScoped,
}

/// Membership of a communicator: either a strided range of base ranks or an
/// explicit ascending table (general-path creations).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum MemberSet {
    Range { f: usize, l: usize, stride: usize },
    Table(Arc<Vec<BaseRank>>),
}

impl MemberSet {
    pub fn size(&self) -> usize {
        match self {
            MemberSet::Range { f, l, stride } => (l - f) / stride + 1,
            MemberSet::Table(t) => t.len(),
        }
    }

    pub fn contains(&self, m: BaseRank) -> bool {
        match self {
            MemberSet::Range { f, l, stride } => {
                m.0 >= *f && m.0 <= *l && (m.0 - f) % stride == 0
            }
            MemberSet::Table(t) => t.binary_search(&m).is_ok(),
        }
    }

    pub fn iter(&self) -> Box<dyn Iterator<Item = BaseRank> + '_> {
        match self {
            MemberSet::Range { f, l, stride } => {
                Box::new((*f..=*l).step_by(*stride).map(BaseRank))
            }
            MemberSet::Table(t) => Box::new(t.iter().copied()),
        }
    }

    pub fn overlap_count(&self, other: &MemberSet) -> usize {
        let (small, big) = if self.size() <= other.size() {
            (self, other)
        } else {
            (other, self)
        };
        small.iter().filter(|m| big.contains(*m)).count()
    }
}

impl fmt::Display for MemberSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MemberSet::Range { f: lo, l, stride: 1 } => write!(f, "[{lo}..{l}]"),
            MemberSet::Range { f: lo, l, stride } => write!(f, "[{lo}..{l}:{stride}]"),
            MemberSet::Table(t) => write!(f, "table({} ranks)", t.len()),
        }
    }
}

struct CommInner {
    fabric: Fabric,
    members: MemberSet,
    ctx: ContextId,
    mode: CommMode,
}

/// A communicator handle. Immutable after creation and cheap to clone.
#[derive(Clone)]
pub struct RangeComm {
    inner: Arc<CommInner>,
}

impl fmt::Debug for RangeComm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "RangeComm({} ctx {} {:?})",
            self.inner.members, self.inner.ctx, self.inner.mode
        )
    }
}

impl RangeComm {
    /// Communicator over all ranks of the fabric, with the root context.
    /// Local: sends no envelopes.
    pub fn world(fabric: &Fabric, mode: CommMode) -> RangeComm {
        RangeComm {
            inner: Arc::new(CommInner {
                fabric: fabric.clone(),
                members: MemberSet::Range {
                    f: 0,
                    l: fabric.size() - 1,
                    stride: 1,
                },
                ctx: fabric.root_ctx(),
                mode,
            }),
        }
    }

    pub(crate) fn from_table(
        fabric: &Fabric,
        bases: Arc<Vec<BaseRank>>,
        ctx: ContextId,
        mode: CommMode,
    ) -> RangeComm {
        RangeComm {
            inner: Arc::new(CommInner {
                fabric: fabric.clone(),
                members: MemberSet::Table(bases),
                ctx,
                mode,
            }),
        }
    }

    /// Same members under a given context, context-scoped. Used by the
    /// creation paths; exposed for tests that forge duplicate contexts.
    pub fn with_ctx(&self, ctx: ContextId) -> RangeComm {
        RangeComm {
            inner: Arc::new(CommInner {
                fabric: self.inner.fabric.clone(),
                members: self.inner.members.clone(),
                ctx,
                mode: CommMode::ContextScoped,
            }),
        }
    }

    /// Child communicator over local ranks `f_local..=l_local` of `self`.
    /// Constant work, zero envelopes; callable by non-members.
    pub fn split_range(&self, f_local: usize, l_local: usize) -> Result<RangeComm> {
        self.split_range_strided(f_local, l_local, 1)
    }

    /// Strided variant: the child keeps every `stride`-th member of the
    /// local range. Strides compose multiplicatively with the parent's.
    pub fn split_range_strided(
        &self,
        f_local: usize,
        l_local: usize,
        stride: usize,
    ) -> Result<RangeComm> {
        if stride == 0 {
            return Err(Error::invalid("stride must be positive"));
        }
        if f_local > l_local || l_local >= self.size() {
            return Err(Error::invalid(format!(
                "split bounds {f_local}..={l_local} out of range for size {}",
                self.size()
            )));
        }
        let (pf, pstride) = match &self.inner.members {
            MemberSet::Range { f, stride, .. } => (*f, *stride),
            MemberSet::Table(_) => {
                return Err(Error::invalid(
                    "explicit-group communicators are not range-splittable; use the general creation path",
                ))
            }
        };
        // Last member lands on the stride grid by construction.
        let span = (l_local - f_local) / stride * stride;
        let child_f = pf + f_local * pstride;
        let child_l = pf + (f_local + span) * pstride;
        let child_stride = pstride * stride;
        let ctx = match self.inner.mode {
            CommMode::TagScoped => self.inner.ctx,
            CommMode::ContextScoped => {
                if stride != 1 {
                    return Err(Error::invalid(
                        "strided splits are not context-scoped ranges; use tag-scoped mode or the general creation path",
                    ));
                }
                derive_range_ctx(self.inner.ctx, f_local, l_local)?
            }
        };
        Ok(RangeComm {
            inner: Arc::new(CommInner {
                fabric: self.inner.fabric.clone(),
                members: MemberSet::Range {
                    f: child_f,
                    l: child_l,
                    stride: child_stride,
                },
                ctx,
                mode: self.inner.mode,
            }),
        })
    }

    pub fn fabric(&self) -> &Fabric {
        &self.inner.fabric
    }

    pub fn size(&self) -> usize {
        self.inner.members.size()
    }

    pub fn ctx(&self) -> ContextId {
        self.inner.ctx
    }

    pub fn mode(&self) -> CommMode {
        self.inner.mode
    }

    pub fn members(&self) -> &MemberSet {
        &self.inner.members
    }

    /// Base rank of local rank `r`.
    pub fn local_to_base(&self, r: usize) -> Result<BaseRank> {
        if r >= self.size() {
            return Err(Error::invalid(format!(
                "local rank {r} out of range for size {}",
                self.size()
            )));
        }
        Ok(match &self.inner.members {
            MemberSet::Range { f, stride, .. } => BaseRank(f + r * stride),
            MemberSet::Table(t) => t[r],
        })
    }

    /// Local rank of base rank `m`; errors if `m` is not a member.
    pub fn base_to_local(&self, m: BaseRank) -> Result<usize> {
        match &self.inner.members {
            MemberSet::Range { f, stride, .. } => {
                if !self.inner.members.contains(m) {
                    return Err(Error::NotAMember(m));
                }
                Ok((m.0 - f) / stride)
            }
            MemberSet::Table(t) => t.binary_search(&m).map_err(|_| Error::NotAMember(m)),
        }
    }

    pub fn contains_base(&self, m: BaseRank) -> bool {
        self.inner.members.contains(m)
    }
}
