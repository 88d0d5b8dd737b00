//! Request handles for nonblocking operations.
//!
//! A request makes progress only inside test calls. Once done it stays done;
//! testing a done request is idempotent and side-effect free. Requests are
//! owned by the rank that created them and must be driven through that
//! rank's endpoint.

use std::time::Duration;

use crate::comm::RangeComm;
use crate::error::{Error, Result};
use crate::fabric::{BaseRank, Endpoint, Tag};
use crate::wire::{decode_vec, Wire};

/// Completion information of a receive: source local rank, tag, byte count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Status {
    pub source: usize,
    pub tag: Tag,
    pub bytes: usize,
}

/// Internal progress outcome of one poll step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Poll {
    Done,
    /// State advanced but the operation is not finished; worth polling again
    /// immediately.
    Progressed,
    /// Blocked on an incoming envelope; parking until mail arrives is safe.
    Stalled,
}

pub(crate) enum MachineStatus {
    Done {
        payload: Option<Vec<u8>>,
        comm: Option<RangeComm>,
    },
    Progressed,
    Stalled,
}

/// State machine behind a nonblocking collective or communicator creation.
pub(crate) trait Machine: Send {
    fn poll(&mut self, ep: &Endpoint) -> Result<MachineStatus>;
}

pub(crate) enum ReqState {
    Done,
    RecvExact {
        comm: RangeComm,
        tag: Tag,
        src_local: usize,
        cap_bytes: usize,
    },
    /// Wildcard receive: latches onto the oldest pending member-sourced
    /// envelope found while testing.
    RecvAny {
        comm: RangeComm,
        tag: Tag,
        cap_bytes: usize,
    },
    Coll(Box<dyn Machine>),
}

/// Handle for any nonblocking operation.
pub struct Request {
    owner: BaseRank,
    state: ReqState,
    transitions: u32,
    status: Option<Status>,
    payload: Option<Vec<u8>>,
    comm_out: Option<RangeComm>,
}

impl std::fmt::Debug for Request {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match &self.state {
            ReqState::Done => "done",
            ReqState::RecvExact { .. } => "recv",
            ReqState::RecvAny { .. } => "recv-any",
            ReqState::Coll(_) => "collective",
        };
        f.debug_struct("Request")
            .field("owner", &self.owner)
            .field("kind", &kind)
            .field("transitions", &self.transitions)
            .finish()
    }
}

impl Request {
    pub(crate) fn new(owner: BaseRank, state: ReqState) -> Request {
        Request {
            owner,
            state,
            transitions: 0,
            status: None,
            payload: None,
            comm_out: None,
        }
    }

    pub(crate) fn done(owner: BaseRank) -> Request {
        Request::new(owner, ReqState::Done)
    }

    pub(crate) fn done_with(
        owner: BaseRank,
        status: Option<Status>,
        payload: Option<Vec<u8>>,
        comm: Option<RangeComm>,
    ) -> Request {
        let mut r = Request::new(owner, ReqState::Done);
        r.status = status;
        r.payload = payload;
        r.comm_out = comm;
        r
    }

    pub fn owner(&self) -> BaseRank {
        self.owner
    }

    pub fn is_done(&self) -> bool {
        matches!(self.state, ReqState::Done)
    }

    /// Receive status, available once a receive request completed.
    pub fn status(&self) -> Option<Status> {
        self.status
    }

    /// Number of state advances this request went through; bounded by the
    /// operation's round count.
    pub fn transitions(&self) -> u32 {
        self.transitions
    }

    /// Completion payload as raw bytes (received message, collective result).
    pub fn take_bytes(&mut self) -> Option<Vec<u8>> {
        self.payload.take()
    }

    /// Completion payload decoded as a vector of `T`.
    pub fn take_vec<T: Wire>(&mut self) -> Option<Vec<T>> {
        self.payload.take().map(|b| decode_vec::<T>(&b))
    }

    /// Communicator produced by a creation request.
    pub fn take_comm(&mut self) -> Option<RangeComm> {
        self.comm_out.take()
    }
}

impl Endpoint {
    fn check_owner(&self, req: &Request) -> Result<()> {
        if req.owner != self.rank() {
            return Err(Error::ForeignRequest {
                owner: req.owner,
                caller: self.rank(),
            });
        }
        Ok(())
    }

    pub(crate) fn poll_request(&self, req: &mut Request) -> Result<Poll> {
        self.check_owner(req)?;
        let poll = match &mut req.state {
            ReqState::Done => return Ok(Poll::Done),
            ReqState::RecvExact {
                comm,
                tag,
                src_local,
                cap_bytes,
            } => {
                let src_base = comm.local_to_base(*src_local)?;
                match self.raw_probe(comm.ctx(), *tag, crate::fabric::SrcFilter::Exact(src_base)) {
                    None => Poll::Stalled,
                    Some(h) if h.bytes > *cap_bytes => {
                        return Err(Error::Truncation {
                            incoming: h.bytes,
                            capacity: *cap_bytes,
                        })
                    }
                    Some(_) => {
                        let env = self
                            .raw_recv(comm.ctx(), *tag, src_base)
                            .expect("probed envelope vanished");
                        req.status = Some(Status {
                            source: *src_local,
                            tag: *tag,
                            bytes: env.payload.len(),
                        });
                        req.payload = Some(env.payload);
                        Poll::Done
                    }
                }
            }
            ReqState::RecvAny {
                comm,
                tag,
                cap_bytes,
            } => {
                let hdr = self.probe_where(comm.ctx(), *tag, &|s| comm.contains_base(s));
                match hdr {
                    None => Poll::Stalled,
                    Some(h) if h.bytes > *cap_bytes => {
                        return Err(Error::Truncation {
                            incoming: h.bytes,
                            capacity: *cap_bytes,
                        })
                    }
                    Some(h) => {
                        let env = self
                            .raw_recv(comm.ctx(), *tag, h.src)
                            .expect("probed envelope vanished");
                        req.status = Some(Status {
                            source: comm.base_to_local(h.src)?,
                            tag: *tag,
                            bytes: env.payload.len(),
                        });
                        req.payload = Some(env.payload);
                        Poll::Done
                    }
                }
            }
            ReqState::Coll(machine) => match machine.poll(self)? {
                MachineStatus::Done { payload, comm } => {
                    req.payload = payload;
                    req.comm_out = comm;
                    Poll::Done
                }
                MachineStatus::Progressed => Poll::Progressed,
                MachineStatus::Stalled => Poll::Stalled,
            },
        };
        match poll {
            Poll::Done => {
                req.state = ReqState::Done;
                req.transitions += 1;
            }
            Poll::Progressed => req.transitions += 1,
            Poll::Stalled => {}
        }
        Ok(poll)
    }

    /// Advance `req` by at most one state and report completion.
    pub fn test(&self, req: &mut Request) -> Result<bool> {
        Ok(self.poll_request(req)? == Poll::Done)
    }

    /// Repeatedly test until `req` completes, parking between stalled
    /// attempts.
    pub fn wait(&self, req: &mut Request) -> Result<()> {
        loop {
            let seen = self.mailbox_generation();
            match self.poll_request(req)? {
                Poll::Done => return Ok(()),
                Poll::Progressed => continue,
                Poll::Stalled => self.park_mailbox(seen, Duration::from_millis(20)),
            }
        }
    }

    /// Test every request once; true when all are complete.
    pub fn testall(&self, reqs: &mut [Request]) -> Result<bool> {
        let mut all = true;
        for r in reqs.iter_mut() {
            all &= self.poll_request(r)? == Poll::Done;
        }
        Ok(all)
    }

    /// Loop testall until every request completes.
    pub fn waitall(&self, reqs: &mut [Request]) -> Result<()> {
        loop {
            let seen = self.mailbox_generation();
            let mut all = true;
            let mut progressed = false;
            for r in reqs.iter_mut() {
                match self.poll_request(r)? {
                    Poll::Done => {}
                    Poll::Progressed => {
                        all = false;
                        progressed = true;
                    }
                    Poll::Stalled => all = false,
                }
            }
            if all {
                return Ok(());
            }
            if !progressed {
                self.park_mailbox(seen, Duration::from_millis(20));
            }
        }
    }
}
