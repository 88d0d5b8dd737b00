//! In-process point-to-point message fabric connecting simulated ranks.
//!
//! One mailbox per rank holds pending envelopes in arrival order, which gives
//! FIFO delivery per (source, context) pair for free. Sends are buffered and
//! never wait on the receiver; receives and probes match on
//! (context, tag, source) and report absence as "not ready" rather than an
//! error. Traffic counters are the fabric's observable cost model: messages
//! and bytes instead of simulated latency.

use std::fmt;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use crate::error::{Error, Result};
use crate::registry::OpRegistry;

/// Index of a process in the world group, stable for the fabric's lifetime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BaseRank(pub usize);

impl fmt::Display for BaseRank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

/// Message tag. Tags are full-width non-negative integers; the band
/// `[RESERVED_TAG_BASE, RESERVED_TAG_BASE + RESERVED_TAG_SPAN)` is carved out
/// for collective-internal traffic and rejected on user point-to-point calls.
pub type Tag = usize;

pub const RESERVED_TAG_BASE: Tag = 1 << 20;
pub const RESERVED_TAG_SPAN: Tag = 64;

/// True if `tag` falls into the collective-internal band.
pub fn is_reserved_tag(tag: Tag) -> bool {
    (RESERVED_TAG_BASE..RESERVED_TAG_BASE + RESERVED_TAG_SPAN).contains(&tag)
}

/// Five-component communication-context identifier `<a, b, f, l, c>`.
///
/// `a`/`b` anchor the context at the leader rank and its creation counter,
/// `f`/`l` carry the range bounds (or 0/group-size on the general creation
/// path) and `c` counts range derivations since the anchor. Identity is
/// componentwise equality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContextId {
    pub a: usize,
    pub b: u64,
    pub f: usize,
    pub l: usize,
    pub c: u32,
}

impl ContextId {
    pub const fn new(a: usize, b: u64, f: usize, l: usize, c: u32) -> Self {
        ContextId { a, b, f, l, c }
    }

    /// Root context of a fabric with `p_world` ranks.
    pub const fn root(p_world: usize) -> Self {
        ContextId::new(0, 0, 0, p_world - 1, 0)
    }

    pub(crate) fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(40);
        for v in [self.a as u64, self.b, self.f as u64, self.l as u64, self.c as u64] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub(crate) fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != 40 {
            return Err(Error::Protocol(format!(
                "context id payload has {} bytes, expected 40",
                bytes.len()
            )));
        }
        let word = |i: usize| u64::from_le_bytes(bytes[i * 8..(i + 1) * 8].try_into().unwrap());
        Ok(ContextId {
            a: word(0) as usize,
            b: word(1),
            f: word(2) as usize,
            l: word(3) as usize,
            c: word(4) as u32,
        })
    }
}

impl fmt::Display for ContextId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{},{},{},{},{}>", self.a, self.b, self.f, self.l, self.c)
    }
}

/// One message: header plus payload bytes.
#[derive(Debug, Clone)]
pub struct Envelope {
    pub ctx: ContextId,
    pub tag: Tag,
    pub src: BaseRank,
    pub dst: BaseRank,
    pub payload: Vec<u8>,
}

/// Header of a pending envelope, as returned by probes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub ctx: ContextId,
    pub tag: Tag,
    pub src: BaseRank,
    pub bytes: usize,
}

/// Source selector for raw probes.
#[derive(Debug, Clone, Copy)]
pub enum SrcFilter {
    Any,
    Exact(BaseRank),
}

struct MailboxState {
    queue: std::collections::VecDeque<Envelope>,
    /// Bumped on every delivery; lets blocked callers park until new arrivals.
    version: u64,
}

struct Mailbox {
    state: Mutex<MailboxState>,
    arrived: Condvar,
}

impl Mailbox {
    fn new() -> Self {
        Mailbox {
            state: Mutex::new(MailboxState {
                queue: std::collections::VecDeque::new(),
                version: 0,
            }),
            arrived: Condvar::new(),
        }
    }
}

#[derive(Default)]
struct RankCounters {
    sent: AtomicU64,
    received: AtomicU64,
    bytes_sent: AtomicU64,
}

/// Snapshot of fabric-wide traffic counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Traffic {
    pub messages_sent: u64,
    pub messages_received: u64,
    pub bytes_sent: u64,
}

impl Traffic {
    pub fn pending(&self) -> u64 {
        self.messages_sent - self.messages_received
    }
}

/// Per-rank traffic breakdown (messages/bytes sent by the rank, messages
/// received by it).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankTraffic {
    pub rank: BaseRank,
    pub messages_sent: u64,
    pub messages_received: u64,
    pub bytes_sent: u64,
}

struct Shared {
    mailboxes: Vec<Mailbox>,
    sent: AtomicU64,
    received: AtomicU64,
    bytes: AtomicU64,
    per_rank: Vec<RankCounters>,
    /// Per-rank leader counters for general-path communicator creation.
    leader_counters: Vec<AtomicU64>,
    debug_checks: AtomicBool,
    registry: OpRegistry,
}

/// Shared in-process fabric of `p_world` ranks. Cheap to clone; all clones
/// address the same mailboxes and counters.
#[derive(Clone)]
pub struct Fabric {
    shared: Arc<Shared>,
}

impl Fabric {
    /// Create a fabric with `p_world` empty mailboxes and zeroed counters.
    pub fn new(p_world: usize) -> Result<Fabric> {
        if p_world == 0 {
            return Err(Error::invalid("fabric needs at least one rank"));
        }
        Ok(Fabric {
            shared: Arc::new(Shared {
                mailboxes: (0..p_world).map(|_| Mailbox::new()).collect(),
                sent: AtomicU64::new(0),
                received: AtomicU64::new(0),
                bytes: AtomicU64::new(0),
                per_rank: (0..p_world).map(|_| RankCounters::default()).collect(),
                leader_counters: (0..p_world).map(|_| AtomicU64::new(0)).collect(),
                debug_checks: AtomicBool::new(false),
                registry: OpRegistry::new(),
            }),
        })
    }

    pub fn size(&self) -> usize {
        self.shared.mailboxes.len()
    }

    /// Root context identifier of this fabric's world group.
    pub fn root_ctx(&self) -> ContextId {
        ContextId::root(self.size())
    }

    /// Handle through which one simulated rank uses the fabric.
    pub fn endpoint(&self, rank: usize) -> Result<Endpoint> {
        if rank >= self.size() {
            return Err(Error::RankOutOfRange {
                rank,
                world: self.size(),
            });
        }
        Ok(Endpoint {
            fabric: self.clone(),
            rank: BaseRank(rank),
        })
    }

    /// Enable or disable the debug-mode operation registry (tag-discipline and
    /// schedule-mismatch detection). Off by default.
    pub fn set_debug_checks(&self, on: bool) {
        self.shared.debug_checks.store(on, Ordering::SeqCst);
    }

    pub fn debug_checks(&self) -> bool {
        self.shared.debug_checks.load(Ordering::SeqCst)
    }

    pub(crate) fn registry(&self) -> &OpRegistry {
        &self.shared.registry
    }

    /// Drain the violations recorded by the debug registry.
    pub fn take_violations(&self) -> Vec<crate::registry::Violation> {
        self.shared.registry.take_violations()
    }

    pub fn counters(&self) -> Traffic {
        Traffic {
            messages_sent: self.shared.sent.load(Ordering::SeqCst),
            messages_received: self.shared.received.load(Ordering::SeqCst),
            bytes_sent: self.shared.bytes.load(Ordering::SeqCst),
        }
    }

    pub fn rank_traffic(&self, rank: usize) -> Result<RankTraffic> {
        let c = self
            .shared
            .per_rank
            .get(rank)
            .ok_or(Error::RankOutOfRange {
                rank,
                world: self.size(),
            })?;
        Ok(RankTraffic {
            rank: BaseRank(rank),
            messages_sent: c.sent.load(Ordering::SeqCst),
            messages_received: c.received.load(Ordering::SeqCst),
            bytes_sent: c.bytes_sent.load(Ordering::SeqCst),
        })
    }

    /// Total number of envelopes sitting undelivered in mailboxes.
    pub fn pending_messages(&self) -> u64 {
        self.counters().pending()
    }

    pub(crate) fn next_leader_counter(&self, rank: BaseRank) -> u64 {
        self.shared.leader_counters[rank.0].fetch_add(1, Ordering::SeqCst)
    }

    /// Current value of a rank's general-path creation counter.
    pub fn leader_counter(&self, rank: BaseRank) -> u64 {
        self.shared.leader_counters[rank.0].load(Ordering::SeqCst)
    }

    /// Append `env` to the destination mailbox. Buffered: never waits on the
    /// receiver.
    pub fn send(&self, env: Envelope) -> Result<()> {
        if env.dst.0 >= self.size() {
            return Err(Error::RankOutOfRange {
                rank: env.dst.0,
                world: self.size(),
            });
        }
        let bytes = env.payload.len() as u64;
        let src = env.src;
        {
            let mailbox = &self.shared.mailboxes[env.dst.0];
            let mut state = mailbox.state.lock().unwrap();
            state.queue.push_back(env);
            state.version += 1;
            mailbox.arrived.notify_all();
        }
        self.shared.sent.fetch_add(1, Ordering::SeqCst);
        self.shared.bytes.fetch_add(bytes, Ordering::SeqCst);
        if let Some(c) = self.shared.per_rank.get(src.0) {
            c.sent.fetch_add(1, Ordering::SeqCst);
            c.bytes_sent.fetch_add(bytes, Ordering::SeqCst);
        }
        Ok(())
    }

    fn note_receive(&self, rank: BaseRank) {
        self.shared.received.fetch_add(1, Ordering::SeqCst);
        self.shared.per_rank[rank.0]
            .received
            .fetch_add(1, Ordering::SeqCst);
    }
}

pub(crate) fn src_matches(env_src: BaseRank, filter: &SrcFilter) -> bool {
    match filter {
        SrcFilter::Any => true,
        SrcFilter::Exact(r) => env_src == *r,
    }
}

/// A rank's handle on the fabric. All point-to-point and collective
/// operations run through the endpoint of the calling rank.
#[derive(Clone)]
pub struct Endpoint {
    fabric: Fabric,
    rank: BaseRank,
}

impl Endpoint {
    pub fn rank(&self) -> BaseRank {
        self.rank
    }

    pub fn fabric(&self) -> &Fabric {
        &self.fabric
    }

    /// Header of the oldest pending envelope matching (ctx, tag, filter),
    /// without removing it. Never blocks.
    pub fn raw_probe(&self, ctx: ContextId, tag: Tag, src: SrcFilter) -> Option<Header> {
        self.probe_where(ctx, tag, &|r| src_matches(r, &src))
    }

    /// Like [`raw_probe`](Self::raw_probe) but with an arbitrary source
    /// predicate; used by the membership filter of wildcard receives.
    pub(crate) fn probe_where(
        &self,
        ctx: ContextId,
        tag: Tag,
        src_ok: &dyn Fn(BaseRank) -> bool,
    ) -> Option<Header> {
        let mailbox = &self.fabric.shared.mailboxes[self.rank.0];
        let state = mailbox.state.lock().unwrap();
        state
            .queue
            .iter()
            .find(|e| e.ctx == ctx && e.tag == tag && src_ok(e.src))
            .map(|e| Header {
                ctx: e.ctx,
                tag: e.tag,
                src: e.src,
                bytes: e.payload.len(),
            })
    }

    /// Remove and return the oldest envelope matching (ctx, tag, src).
    /// `None` means "not ready", surfaced to the request layer.
    pub fn raw_recv(&self, ctx: ContextId, tag: Tag, src: BaseRank) -> Option<Envelope> {
        let mailbox = &self.fabric.shared.mailboxes[self.rank.0];
        let mut state = mailbox.state.lock().unwrap();
        let idx = state
            .queue
            .iter()
            .position(|e| e.ctx == ctx && e.tag == tag && e.src == src)?;
        let env = state.queue.remove(idx).unwrap();
        drop(state);
        self.fabric.note_receive(self.rank);
        Some(env)
    }

    /// Current delivery generation of this rank's mailbox. Read it before a
    /// test sweep and hand it to [`park_mailbox`](Self::park_mailbox) to
    /// sleep until new mail arrives.
    pub fn mailbox_generation(&self) -> u64 {
        self.fabric.shared.mailboxes[self.rank.0]
            .state
            .lock()
            .unwrap()
            .version
    }

    /// Park the calling worker until the mailbox generation moves past
    /// `seen` or the timeout elapses.
    pub fn park_mailbox(&self, seen: u64, timeout: Duration) {
        let mailbox = &self.fabric.shared.mailboxes[self.rank.0];
        let state = mailbox.state.lock().unwrap();
        if state.version != seen {
            return;
        }
        let _ = mailbox
            .arrived
            .wait_timeout_while(state, timeout, |s| s.version == seen)
            .unwrap();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(ctx: ContextId, tag: Tag, src: usize, dst: usize, payload: Vec<u8>) -> Envelope {
        Envelope {
            ctx,
            tag,
            src: BaseRank(src),
            dst: BaseRank(dst),
            payload,
        }
    }

    #[test]
    fn create_initial_state() {
        let f = Fabric::new(4).unwrap();
        assert_eq!(f.size(), 4);
        assert_eq!(f.counters().messages_sent, 0);
        assert_eq!(f.pending_messages(), 0);
    }

    #[test]
    fn single_rank_fabric_allows_self_send() {
        let f = Fabric::new(1).unwrap();
        let ctx = f.root_ctx();
        f.send(env(ctx, 3, 0, 0, vec![7])).unwrap();
        let ep = f.endpoint(0).unwrap();
        let got = ep.raw_recv(ctx, 3, BaseRank(0)).unwrap();
        assert_eq!(got.payload, vec![7]);
    }

    #[test]
    fn zero_ranks_is_invalid() {
        assert!(matches!(Fabric::new(0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn send_out_of_range_is_invalid() {
        let f = Fabric::new(2).unwrap();
        let err = f.send(env(f.root_ctx(), 0, 0, 2, vec![])).unwrap_err();
        assert!(matches!(err, Error::RankOutOfRange { rank: 2, world: 2 }));
    }

    #[test]
    fn send_updates_counters() {
        let f = Fabric::new(4).unwrap();
        let ctx = f.root_ctx();
        f.send(env(ctx, 7, 0, 1, vec![0; 8])).unwrap();
        let t = f.counters();
        assert_eq!(t.messages_sent, 1);
        assert_eq!(t.bytes_sent, 8);
        assert_eq!(t.pending(), 1);
        assert_eq!(f.rank_traffic(0).unwrap().messages_sent, 1);
    }

    #[test]
    fn fifo_per_source_context() {
        let f = Fabric::new(2).unwrap();
        let ctx = f.root_ctx();
        f.send(env(ctx, 7, 0, 1, vec![1])).unwrap();
        f.send(env(ctx, 7, 0, 1, vec![2])).unwrap();
        let ep = f.endpoint(1).unwrap();
        assert_eq!(ep.raw_recv(ctx, 7, BaseRank(0)).unwrap().payload, vec![1]);
        assert_eq!(ep.raw_recv(ctx, 7, BaseRank(0)).unwrap().payload, vec![2]);
    }

    #[test]
    fn probe_is_nondestructive_and_filters_context() {
        let f = Fabric::new(4).unwrap();
        let ctx_x = ContextId::new(0, 0, 0, 3, 1);
        let ctx_y = ContextId::new(0, 0, 0, 3, 2);
        f.send(env(ctx_x, 7, 2, 0, vec![9; 3])).unwrap();
        let ep = f.endpoint(0).unwrap();

        // empty for the other context
        assert!(ep.raw_probe(ctx_y, 7, SrcFilter::Any).is_none());
        let h = ep.raw_probe(ctx_x, 7, SrcFilter::Any).unwrap();
        assert_eq!(h.src, BaseRank(2));
        assert_eq!(h.bytes, 3);
        // still pending after the probe
        assert!(ep.raw_probe(ctx_x, 7, SrcFilter::Any).is_some());
    }

    #[test]
    fn recv_no_match_reports_not_ready() {
        let f = Fabric::new(2).unwrap();
        let ep = f.endpoint(1).unwrap();
        assert!(ep.raw_recv(f.root_ctx(), 7, BaseRank(0)).is_none());
    }

    #[test]
    fn conservation_at_quiescence() {
        let f = Fabric::new(3).unwrap();
        let ctx = f.root_ctx();
        for i in 0..5 {
            f.send(env(ctx, 1, 0, i % 3, vec![i as u8])).unwrap();
        }
        let ep = f.endpoint(0).unwrap();
        ep.raw_recv(ctx, 1, BaseRank(0)).unwrap();
        let t = f.counters();
        assert_eq!(t.messages_sent, 5);
        assert_eq!(t.messages_received, 1);
        assert_eq!(t.pending(), 4);
    }

    #[test]
    fn context_id_encode_decode() {
        let ctx = ContextId::new(5, 2, 0, 8, 0);
        assert_eq!(ContextId::decode(&ctx.encode()).unwrap(), ctx);
    }

    #[test]
    fn reserved_band() {
        assert!(!is_reserved_tag(RESERVED_TAG_BASE - 1));
        assert!(is_reserved_tag(RESERVED_TAG_BASE));
        assert!(is_reserved_tag(RESERVED_TAG_BASE + 63));
        assert!(!is_reserved_tag(RESERVED_TAG_BASE + 64));
    }
}
