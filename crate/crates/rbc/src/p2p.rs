//! Point-to-point operations over a communicator: blocking and nonblocking
//! send/receive and probe, with wildcard-source receives filtered to
//! communicator membership.
//!
//! Sends are buffered: the envelope is handed to the fabric immediately and
//! the send request completes at once. A wildcard probe or receive never
//! observes an envelope whose sender is not a member of the communicator,
//! even when such envelopes are pending; this is what keeps traffic of two
//! tag-scoped communicators apart when they share at most one rank.

use std::time::Duration;

use crate::comm::RangeComm;
use crate::error::{Error, Result};
use crate::fabric::{is_reserved_tag, Endpoint, Envelope, Tag};
use crate::request::{ReqState, Request, Status};
use crate::wire::{decode_vec, encode_slice, Wire};

/// Source selector for receives and probes, in communicator-local ranks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Src {
    /// Match any member of the communicator.
    Any,
    /// Match exactly this local rank.
    Local(usize),
}

impl Endpoint {
    fn check_user_tag(&self, tag: Tag) -> Result<()> {
        if is_reserved_tag(tag) {
            return Err(Error::ReservedTag(tag));
        }
        Ok(())
    }

    fn my_local(&self, comm: &RangeComm) -> Result<usize> {
        comm.base_to_local(self.rank())
    }

    /// Hand one envelope to the fabric, addressed by communicator-local rank.
    pub(crate) fn send_on(
        &self,
        comm: &RangeComm,
        dst_local: usize,
        tag: Tag,
        payload: Vec<u8>,
    ) -> Result<()> {
        let dst = comm.local_to_base(dst_local)?;
        self.fabric().send(Envelope {
            ctx: comm.ctx(),
            tag,
            src: self.rank(),
            dst,
            payload,
        })
    }

    /// Blocking send (buffered: returns once the envelope is in the fabric).
    pub fn send<T: Wire>(
        &self,
        comm: &RangeComm,
        dst_local: usize,
        tag: Tag,
        data: &[T],
    ) -> Result<()> {
        self.check_user_tag(tag)?;
        self.my_local(comm)?;
        self.send_on(comm, dst_local, tag, encode_slice(data))
    }

    /// Nonblocking send; the request is complete as soon as it is created.
    pub fn isend<T: Wire>(
        &self,
        comm: &RangeComm,
        dst_local: usize,
        tag: Tag,
        data: &[T],
    ) -> Result<Request> {
        self.send(comm, dst_local, tag, data)?;
        Ok(Request::done(self.rank()))
    }

    /// Nonblocking receive of up to `max_elems` elements.
    pub fn irecv<T: Wire>(
        &self,
        comm: &RangeComm,
        src: Src,
        tag: Tag,
        max_elems: usize,
    ) -> Result<Request> {
        self.check_user_tag(tag)?;
        self.irecv_internal(comm, src, tag, max_elems * T::WIDTH)
    }

    pub(crate) fn irecv_internal(
        &self,
        comm: &RangeComm,
        src: Src,
        tag: Tag,
        cap_bytes: usize,
    ) -> Result<Request> {
        self.my_local(comm)?;
        let state = match src {
            Src::Local(src_local) => {
                // Validate membership up front.
                comm.local_to_base(src_local)?;
                ReqState::RecvExact {
                    comm: comm.clone(),
                    tag,
                    src_local,
                    cap_bytes,
                }
            }
            Src::Any => ReqState::RecvAny {
                comm: comm.clone(),
                tag,
                cap_bytes,
            },
        };
        Ok(Request::new(self.rank(), state))
    }

    /// Blocking receive; returns the decoded payload and its status.
    pub fn recv<T: Wire>(
        &self,
        comm: &RangeComm,
        src: Src,
        tag: Tag,
        max_elems: usize,
    ) -> Result<(Vec<T>, Status)> {
        let mut req = self.irecv::<T>(comm, src, tag, max_elems)?;
        self.wait(&mut req)?;
        let status = req.status().expect("completed receive has a status");
        let bytes = req.take_bytes().expect("completed receive has a payload");
        Ok((decode_vec::<T>(&bytes), status))
    }

    /// Nonblocking probe. With `Src::Any` only member-sourced envelopes are
    /// reported, even if envelopes from non-members are pending.
    pub fn iprobe(&self, comm: &RangeComm, src: Src, tag: Tag) -> Result<Option<Status>> {
        self.my_local(comm)?;
        let hdr = match src {
            Src::Local(src_local) => {
                let base = comm.local_to_base(src_local)?;
                self.raw_probe(comm.ctx(), tag, crate::fabric::SrcFilter::Exact(base))
            }
            Src::Any => self.probe_where(comm.ctx(), tag, &|s| comm.contains_base(s)),
        };
        Ok(match hdr {
            None => None,
            Some(h) => Some(Status {
                source: comm.base_to_local(h.src)?,
                tag: h.tag,
                bytes: h.bytes,
            }),
        })
    }

    /// Blocking probe: parks until a matching envelope is pending.
    pub fn probe(&self, comm: &RangeComm, src: Src, tag: Tag) -> Result<Status> {
        loop {
            let seen = self.mailbox_generation();
            if let Some(status) = self.iprobe(comm, src, tag)? {
                return Ok(status);
            }
            self.park_mailbox(seen, Duration::from_millis(20));
        }
    }
}
