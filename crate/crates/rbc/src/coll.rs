//! Binomial-tree collective operations, blocking and nonblocking.
//!
//! Every nonblocking collective is a per-rank state machine that advances
//! only inside test calls: a state does local work and ends at a pending
//! receive if that receive is a data dependency. Sends are buffered and never
//! block. Each operation's first state runs when the operation is invoked.
//!
//! Message counts are exact: p-1 envelopes for the rooted operations
//! (broadcast, reduce, gather, gatherv), 2(p-1) for the scans (up-sweep plus
//! down-sweep) and the barrier (reduce plus broadcast). All trees complete in
//! O(log p) rounds.
//!
//! Rooted reductions and gathers run on a segment-merge tree that only ever
//! combines adjacent rank ranges, so non-commutative operators see their
//! operands in ascending rank order for any root.

use std::sync::Arc;

use crate::comm::RangeComm;
use crate::error::{Error, Result};
use crate::fabric::{is_reserved_tag, Endpoint, Fabric, Tag, RESERVED_TAG_BASE};
use crate::registry::{OpDesc, OpToken};
use crate::request::{Machine, MachineStatus, ReqState, Request};
use crate::wire::{decode_vec, encode_slice, Wire};

/// Default (reserved) tags, one per collective; the barrier uses one tag per
/// sweep.
pub const TAG_BCAST: Tag = RESERVED_TAG_BASE;
pub const TAG_REDUCE: Tag = RESERVED_TAG_BASE + 1;
pub const TAG_SCAN: Tag = RESERVED_TAG_BASE + 2;
pub const TAG_EXSCAN: Tag = RESERVED_TAG_BASE + 3;
pub const TAG_GATHER: Tag = RESERVED_TAG_BASE + 4;
pub const TAG_GATHERV: Tag = RESERVED_TAG_BASE + 5;
pub const TAG_BARRIER_REDUCE: Tag = RESERVED_TAG_BASE + 6;
pub const TAG_BARRIER_BCAST: Tag = RESERVED_TAG_BASE + 7;

/// Reduction operator over element vectors: `combine(acc, rhs)` folds `rhs`
/// (the higher-ranked operand) into `acc`. Must be associative; the
/// commutative flag is contract metadata; rank order is always preserved.
pub struct ReduceOp<T: Wire> {
    combine: Arc<dyn Fn(&mut Vec<T>, &[T]) + Send + Sync>,
    commutative: bool,
}

impl<T: Wire> Clone for ReduceOp<T> {
    fn clone(&self) -> Self {
        ReduceOp {
            combine: self.combine.clone(),
            commutative: self.commutative,
        }
    }
}

impl<T: Wire + 'static> ReduceOp<T> {
    pub fn new(
        commutative: bool,
        combine: impl Fn(&mut Vec<T>, &[T]) + Send + Sync + 'static,
    ) -> Self {
        ReduceOp {
            combine: Arc::new(combine),
            commutative,
        }
    }

    /// Apply `f` componentwise to equal-length vectors.
    pub fn elementwise(
        commutative: bool,
        f: impl Fn(T, T) -> T + Send + Sync + 'static,
    ) -> Self {
        Self::new(commutative, move |acc, rhs| {
            for (a, b) in acc.iter_mut().zip(rhs.iter()) {
                *a = f(*a, *b);
            }
        })
    }

    pub fn is_commutative(&self) -> bool {
        self.commutative
    }

    pub fn apply(&self, acc: &mut Vec<T>, rhs: &[T]) {
        (self.combine)(acc, rhs)
    }

    fn byte_combiner(&self) -> ByteCombiner {
        let f = self.combine.clone();
        Arc::new(move |l: &[u8], r: &[u8]| {
            if l.len() != r.len() {
                return Err(Error::invalid(format!(
                    "reduce operands differ in length: {} vs {} bytes",
                    l.len(),
                    r.len()
                )));
            }
            let mut lv = decode_vec::<T>(l);
            let rv = decode_vec::<T>(r);
            f(&mut lv, &rv);
            Ok(encode_slice(&lv))
        })
    }
}

impl<T: Wire + std::ops::Add<Output = T> + 'static> ReduceOp<T> {
    /// Componentwise sum.
    pub fn sum() -> Self {
        Self::elementwise(true, |a, b| a + b)
    }
}

type ByteCombiner = Arc<dyn Fn(&[u8], &[u8]) -> Result<Vec<u8>> + Send + Sync>;

/// Registry registration that unregisters at local completion (or drop).
struct RegGuard {
    fabric: Option<Fabric>,
    token: Option<OpToken>,
}

impl RegGuard {
    fn none() -> RegGuard {
        RegGuard {
            fabric: None,
            token: None,
        }
    }

    fn register(ep: &Endpoint, comm: &RangeComm, op: &'static str, root: usize, tag: Tag) -> RegGuard {
        if !comm.fabric().debug_checks() {
            return RegGuard::none();
        }
        let token = comm.fabric().registry().register(
            ep.rank(),
            comm.ctx(),
            comm.members().clone(),
            OpDesc { op, root, tag },
        );
        RegGuard {
            fabric: Some(comm.fabric().clone()),
            token: Some(token),
        }
    }

    fn finish(&mut self) {
        if let (Some(f), Some(t)) = (self.fabric.take(), self.token.take()) {
            f.registry().unregister(t);
        }
    }
}

impl Drop for RegGuard {
    fn drop(&mut self) {
        self.finish();
    }
}

fn msb(x: usize) -> usize {
    debug_assert!(x > 0);
    1usize << (usize::BITS - 1 - x.leading_zeros())
}

/// Smallest k with 2^k >= p.
pub fn ceil_log2(p: usize) -> u32 {
    debug_assert!(p > 0);
    usize::BITS - (p - 1).leading_zeros()
}

// ---------------------------------------------------------------------------
// Broadcast: binomial tree rooted by rank rotation.
// ---------------------------------------------------------------------------

struct BcastMachine {
    comm: RangeComm,
    tag: Tag,
    p: usize,
    root: usize,
    w: usize, // rotated label; 0 at the root
    payload: Option<Vec<u8>>,
    guard: RegGuard,
}

impl BcastMachine {
    fn new(
        ep: &Endpoint,
        comm: &RangeComm,
        root: usize,
        data: Option<Vec<u8>>,
        tag: Tag,
        register: bool,
    ) -> Result<BcastMachine> {
        let p = comm.size();
        let me = comm.base_to_local(ep.rank())?;
        let w = (me + p - root) % p;
        let guard = if register {
            RegGuard::register(ep, comm, "bcast", root, tag)
        } else {
            RegGuard::none()
        };
        let mut m = BcastMachine {
            comm: comm.clone(),
            tag,
            p,
            root,
            w,
            payload: data,
            guard,
        };
        if m.w == 0 {
            m.send_children(ep)?;
        }
        Ok(m)
    }

    fn unrotate(&self, w: usize) -> usize {
        (w + self.root) % self.p
    }

    fn send_children(&mut self, ep: &Endpoint) -> Result<()> {
        let payload = self.payload.as_ref().expect("broadcast payload present");
        let mut step = if self.w == 0 { 1 } else { msb(self.w) << 1 };
        while self.w + step < self.p {
            let child = self.unrotate(self.w + step);
            ep.send_on(&self.comm, child, self.tag, payload.clone())?;
            step <<= 1;
        }
        Ok(())
    }
}

impl Machine for BcastMachine {
    fn poll(&mut self, ep: &Endpoint) -> Result<MachineStatus> {
        if self.payload.is_none() {
            let parent = self.unrotate(self.w - msb(self.w));
            let parent_base = self.comm.local_to_base(parent)?;
            match ep.raw_recv(self.comm.ctx(), self.tag, parent_base) {
                None => return Ok(MachineStatus::Stalled),
                Some(env) => {
                    self.payload = Some(env.payload);
                    self.send_children(ep)?;
                }
            }
        }
        self.guard.finish();
        Ok(MachineStatus::Done {
            payload: self.payload.take(),
            comm: None,
        })
    }
}

// ---------------------------------------------------------------------------
// Segment-merge tree: reduce and gather share it. Only adjacent rank ranges
// merge, so operand order equals rank order; the representative of a merged
// range is the root whenever the root lies inside it.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MStep {
    RecvLeft(usize),
    RecvRight(usize),
    SendTo(usize),
}

fn plan_merge(p: usize, root: usize, me: usize) -> Vec<MStep> {
    let mut steps = Vec::new();
    let v = me;
    let mut k = 0u32;
    loop {
        let half = 1usize << k;
        if half >= p {
            break;
        }
        let bs = half << 1;
        let b = v & !(bs - 1);
        let mid = b + half;
        if mid < p {
            let end = (b + bs).min(p);
            let in_left = (b..mid).contains(&root);
            let in_right = (mid..end).contains(&root);
            let rep_l = if in_left { root } else { b };
            let rep_r = if in_right { root } else { mid };
            let rep_new = if in_left || in_right { root } else { b };
            if v == rep_l || v == rep_r {
                if v != rep_new {
                    steps.push(MStep::SendTo(rep_new));
                    break;
                } else if v == rep_l {
                    steps.push(MStep::RecvRight(rep_r));
                } else {
                    steps.push(MStep::RecvLeft(rep_l));
                }
            }
        }
        k += 1;
    }
    steps
}

enum MergeFinish {
    Reduce,
    /// Concatenation gather; the root validates chunk lengths against the
    /// declared per-rank byte counts.
    Gather { counts_bytes: Option<Vec<usize>> },
    Empty,
}

struct MergeMachine {
    comm: RangeComm,
    tag: Tag,
    combine: ByteCombiner,
    steps: Vec<MStep>,
    idx: usize,
    acc: Vec<u8>,
    is_root: bool,
    finish: MergeFinish,
    guard: RegGuard,
}

/// Gather chunks travel as a flat list of (local rank, length, bytes)
/// records; concatenating two encoded lists concatenates the lists.
fn gather_chunk(rank: usize, data: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + data.len());
    out.extend_from_slice(&(rank as u64).to_le_bytes());
    out.extend_from_slice(&(data.len() as u64).to_le_bytes());
    out.extend_from_slice(data);
    out
}

fn decode_chunks(mut bytes: &[u8]) -> Result<Vec<(usize, Vec<u8>)>> {
    let mut out = Vec::new();
    while !bytes.is_empty() {
        if bytes.len() < 16 {
            return Err(Error::Protocol("truncated gather chunk header".into()));
        }
        let rank = u64::from_le_bytes(bytes[0..8].try_into().unwrap()) as usize;
        let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        if bytes.len() < 16 + len {
            return Err(Error::Protocol("truncated gather chunk body".into()));
        }
        out.push((rank, bytes[16..16 + len].to_vec()));
        bytes = &bytes[16 + len..];
    }
    Ok(out)
}

impl MergeMachine {
    #[allow(clippy::too_many_arguments)]
    fn new(
        ep: &Endpoint,
        comm: &RangeComm,
        root: usize,
        initial: Vec<u8>,
        combine: ByteCombiner,
        tag: Tag,
        finish: MergeFinish,
        register: Option<&'static str>,
    ) -> Result<MergeMachine> {
        let p = comm.size();
        let me = comm.base_to_local(ep.rank())?;
        let guard = match register {
            Some(op) => RegGuard::register(ep, comm, op, root, tag),
            None => RegGuard::none(),
        };
        let mut m = MergeMachine {
            comm: comm.clone(),
            tag,
            combine,
            steps: plan_merge(p, root, me),
            idx: 0,
            acc: initial,
            is_root: me == root,
            finish,
            guard,
        };
        m.flush_sends(ep)?;
        Ok(m)
    }

    fn flush_sends(&mut self, ep: &Endpoint) -> Result<()> {
        while let Some(MStep::SendTo(t)) = self.steps.get(self.idx).copied() {
            ep.send_on(&self.comm, t, self.tag, std::mem::take(&mut self.acc))?;
            self.idx += 1;
        }
        Ok(())
    }

    fn finalize(&mut self) -> Result<Option<Vec<u8>>> {
        self.guard.finish();
        if !self.is_root {
            return Ok(None);
        }
        match &self.finish {
            MergeFinish::Reduce => Ok(Some(std::mem::take(&mut self.acc))),
            MergeFinish::Empty => Ok(None),
            MergeFinish::Gather { counts_bytes } => {
                let chunks = decode_chunks(&self.acc)?;
                if let Some(counts) = counts_bytes {
                    if chunks.len() != counts.len() {
                        return Err(Error::Protocol(format!(
                            "gather produced {} chunks for {} declared counts",
                            chunks.len(),
                            counts.len()
                        )));
                    }
                    for (rank, data) in &chunks {
                        let declared = counts[*rank];
                        if data.len() > declared {
                            return Err(Error::Truncation {
                                incoming: data.len(),
                                capacity: declared,
                            });
                        }
                        if data.len() < declared {
                            return Err(Error::Protocol(format!(
                                "rank {} sent {} bytes, {} declared",
                                rank,
                                data.len(),
                                declared
                            )));
                        }
                    }
                }
                let mut out = Vec::new();
                for (_, data) in chunks {
                    out.extend_from_slice(&data);
                }
                Ok(Some(out))
            }
        }
    }
}

impl Machine for MergeMachine {
    fn poll(&mut self, ep: &Endpoint) -> Result<MachineStatus> {
        loop {
            let step = match self.steps.get(self.idx).copied() {
                None => {
                    let payload = self.finalize()?;
                    return Ok(MachineStatus::Done {
                        payload,
                        comm: None,
                    });
                }
                Some(s) => s,
            };
            match step {
                MStep::SendTo(_) => self.flush_sends(ep)?,
                MStep::RecvLeft(from) | MStep::RecvRight(from) => {
                    let from_base = self.comm.local_to_base(from)?;
                    match ep.raw_recv(self.comm.ctx(), self.tag, from_base) {
                        None => return Ok(MachineStatus::Stalled),
                        Some(env) => {
                            self.acc = match step {
                                MStep::RecvLeft(_) => (self.combine)(&env.payload, &self.acc)?,
                                _ => (self.combine)(&self.acc, &env.payload)?,
                            };
                            self.idx += 1;
                            // One data dependency per test call; flush any
                            // trailing zero-dependency work before yielding.
                            if matches!(
                                self.steps.get(self.idx),
                                Some(MStep::RecvLeft(_) | MStep::RecvRight(_))
                            ) {
                                return Ok(MachineStatus::Progressed);
                            }
                        }
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Scan: binomial up-sweep / down-sweep over rank segments.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScanKind {
    Inclusive,
    Exclusive,
}

enum ScanPhase {
    Up,
    DownWait,
}

struct ScanMachine {
    comm: RangeComm,
    tag: Tag,
    kind: ScanKind,
    combine: ByteCombiner,
    input: Vec<u8>,
    partial: Vec<u8>,
    /// Left-half sums received on the way up, one per merged level,
    /// ascending; replayed in reverse on the way down.
    saved: Vec<(usize, Vec<u8>)>, // (left-half holder local rank, its sum)
    up_recvs: Vec<usize>, // senders, ascending level order
    up_next: usize,
    up_send: Option<usize>, // block holder we report to; None at the tree root
    identity: Option<Vec<u8>>,
    phase: ScanPhase,
    guard: RegGuard,
}

/// Option-valued prefix: `[0]` encodes "nothing before this block".
fn encode_opt(x: &Option<Vec<u8>>) -> Vec<u8> {
    match x {
        None => vec![0],
        Some(v) => {
            let mut out = Vec::with_capacity(1 + v.len());
            out.push(1);
            out.extend_from_slice(v);
            out
        }
    }
}

fn decode_opt(bytes: &[u8]) -> Result<Option<Vec<u8>>> {
    match bytes.first() {
        Some(0) => Ok(None),
        Some(1) => Ok(Some(bytes[1..].to_vec())),
        _ => Err(Error::Protocol("malformed scan prefix payload".into())),
    }
}

impl ScanMachine {
    fn new(
        ep: &Endpoint,
        comm: &RangeComm,
        kind: ScanKind,
        data: Vec<u8>,
        combine: ByteCombiner,
        identity: Option<Vec<u8>>,
        tag: Tag,
    ) -> Result<ScanMachine> {
        let p = comm.size();
        let me = comm.base_to_local(ep.rank())?;

        let mut up_recvs = Vec::new();
        let mut up_send = None;
        let mut k = 0u32;
        loop {
            let half = 1usize << k;
            if half >= p {
                break;
            }
            let bs = half << 1;
            let b = me & !(bs - 1);
            let mid = b + half;
            if mid < p {
                let holder = (b + bs).min(p) - 1;
                let left_holder = mid - 1;
                if me == left_holder {
                    up_send = Some(holder);
                    break;
                }
                if me == holder {
                    up_recvs.push(left_holder);
                }
            }
            k += 1;
        }

        let op = match kind {
            ScanKind::Inclusive => "scan",
            ScanKind::Exclusive => "exscan",
        };
        let mut m = ScanMachine {
            comm: comm.clone(),
            tag,
            kind,
            combine,
            input: data.clone(),
            partial: data,
            saved: Vec::new(),
            up_recvs,
            up_next: 0,
            up_send,
            identity,
            phase: ScanPhase::Up,
            guard: RegGuard::register(ep, comm, op, 0, tag),
        };
        // Leaves with nothing to receive report their value right away.
        if m.up_next >= m.up_recvs.len() {
            if let Some(to) = m.up_send {
                ep.send_on(&m.comm, to, m.tag, encode_opt(&Some(m.partial.clone())))?;
                m.phase = ScanPhase::DownWait;
            }
            // The tree root with no receives (p == 1) finishes in poll.
        }
        Ok(m)
    }

    fn run_down(&mut self, ep: &Endpoint, mut x: Option<Vec<u8>>) -> Result<MachineStatus> {
        while let Some((to, left_sum)) = self.saved.pop() {
            ep.send_on(&self.comm, to, self.tag, encode_opt(&x))?;
            x = Some(match x {
                None => left_sum,
                Some(v) => (self.combine)(&v, &left_sum)?,
            });
        }
        let result = match self.kind {
            ScanKind::Exclusive => match x {
                Some(v) => v,
                None => self
                    .identity
                    .clone()
                    .expect("exclusive scan requires an identity"),
            },
            ScanKind::Inclusive => match x {
                None => self.input.clone(),
                Some(v) => (self.combine)(&v, &self.input)?,
            },
        };
        self.guard.finish();
        Ok(MachineStatus::Done {
            payload: Some(result),
            comm: None,
        })
    }
}

impl Machine for ScanMachine {
    fn poll(&mut self, ep: &Endpoint) -> Result<MachineStatus> {
        match self.phase {
            ScanPhase::Up => {
                if let Some(&from) = self.up_recvs.get(self.up_next) {
                    let from_base = self.comm.local_to_base(from)?;
                    match ep.raw_recv(self.comm.ctx(), self.tag, from_base) {
                        None => return Ok(MachineStatus::Stalled),
                        Some(env) => {
                            let left_sum = decode_opt(&env.payload)?
                                .ok_or_else(|| Error::Protocol("empty up-sweep sum".into()))?;
                            self.partial = (self.combine)(&left_sum, &self.partial)?;
                            self.saved.push((from, left_sum));
                            self.up_next += 1;
                            if self.up_next < self.up_recvs.len() {
                                return Ok(MachineStatus::Progressed);
                            }
                        }
                    }
                }
                match self.up_send {
                    Some(to) => {
                        ep.send_on(&self.comm, to, self.tag, encode_opt(&Some(self.partial.clone())))?;
                        self.phase = ScanPhase::DownWait;
                        Ok(MachineStatus::Progressed)
                    }
                    None => {
                        // Tree root: inject the identity prefix and unwind.
                        let x = match self.kind {
                            ScanKind::Exclusive => self.identity.clone(),
                            ScanKind::Inclusive => None,
                        };
                        self.run_down(ep, x)
                    }
                }
            }
            ScanPhase::DownWait => {
                let holder = self.up_send.expect("non-root waits on its block holder");
                let holder_base = self.comm.local_to_base(holder)?;
                match ep.raw_recv(self.comm.ctx(), self.tag, holder_base) {
                    None => Ok(MachineStatus::Stalled),
                    Some(env) => {
                        let x = decode_opt(&env.payload)?;
                        self.run_down(ep, x)
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Barrier: reduce to rank 0, then broadcast from rank 0.
// ---------------------------------------------------------------------------

enum BarrierPhase {
    Reduce(MergeMachine),
    Bcast(BcastMachine),
}

struct BarrierMachine {
    comm: RangeComm,
    bcast_tag: Tag,
    phase: BarrierPhase,
    guard: RegGuard,
}

impl BarrierMachine {
    fn new(ep: &Endpoint, comm: &RangeComm, tag_hint: Option<Tag>) -> Result<BarrierMachine> {
        // A user tag shifts both sweeps; they stay adjacent.
        let (t_reduce, t_bcast) = match tag_hint {
            None => (TAG_BARRIER_REDUCE, TAG_BARRIER_BCAST),
            Some(t) => (t, t + 1),
        };
        let guard = RegGuard::register(ep, comm, "barrier", 0, t_reduce);
        let reduce = MergeMachine::new(
            ep,
            comm,
            0,
            Vec::new(),
            Arc::new(|_: &[u8], _: &[u8]| Ok(Vec::new())),
            t_reduce,
            MergeFinish::Empty,
            None,
        )?;
        Ok(BarrierMachine {
            comm: comm.clone(),
            bcast_tag: t_bcast,
            phase: BarrierPhase::Reduce(reduce),
            guard,
        })
    }
}

impl Machine for BarrierMachine {
    fn poll(&mut self, ep: &Endpoint) -> Result<MachineStatus> {
        match &mut self.phase {
            BarrierPhase::Reduce(m) => match m.poll(ep)? {
                MachineStatus::Done { .. } => {
                    let me = self.comm.base_to_local(ep.rank())?;
                    let data = (me == 0).then(Vec::new);
                    let bcast = BcastMachine::new(ep, &self.comm, 0, data, self.bcast_tag, false)?;
                    self.phase = BarrierPhase::Bcast(bcast);
                    Ok(MachineStatus::Progressed)
                }
                other => Ok(other),
            },
            BarrierPhase::Bcast(m) => match m.poll(ep)? {
                MachineStatus::Done { .. } => {
                    self.guard.finish();
                    Ok(MachineStatus::Done {
                        payload: None,
                        comm: None,
                    })
                }
                other => Ok(other),
            },
        }
    }
}

// ---------------------------------------------------------------------------
// Endpoint API
// ---------------------------------------------------------------------------

fn effective_tag(tag: Option<Tag>, default: Tag) -> Result<Tag> {
    match tag {
        None => Ok(default),
        Some(t) if is_reserved_tag(t) => Err(Error::ReservedTag(t)),
        Some(t) => Ok(t),
    }
}

impl Endpoint {
    fn coll_request(&self, machine: impl Machine + 'static) -> Request {
        Request::new(self.rank(), ReqState::Coll(Box::new(machine)))
    }

    /// Nonblocking broadcast of `data` from local rank `root`. Non-roots pass
    /// an empty vector; on completion every member's request yields the
    /// root's data.
    pub fn ibcast<T: Wire>(
        &self,
        comm: &RangeComm,
        root: usize,
        data: Vec<T>,
        tag: Option<Tag>,
    ) -> Result<Request> {
        let tag = effective_tag(tag, TAG_BCAST)?;
        if root >= comm.size() {
            return Err(Error::invalid(format!(
                "root {root} out of range for size {}",
                comm.size()
            )));
        }
        let me = comm.base_to_local(self.rank())?;
        let payload = (me == root).then(|| encode_slice(&data));
        let machine = BcastMachine::new(self, comm, root, payload, tag, true)?;
        Ok(self.coll_request(machine))
    }

    pub fn bcast<T: Wire>(&self, comm: &RangeComm, root: usize, data: Vec<T>) -> Result<Vec<T>> {
        let mut req = self.ibcast(comm, root, data, None)?;
        self.wait(&mut req)?;
        Ok(req.take_vec::<T>().expect("broadcast yields a payload"))
    }

    /// Nonblocking reduction to local rank `root`; the fold runs in ascending
    /// rank order. Only the root's request yields a payload.
    pub fn ireduce<T: Wire + 'static>(
        &self,
        comm: &RangeComm,
        root: usize,
        data: &[T],
        op: &ReduceOp<T>,
        tag: Option<Tag>,
    ) -> Result<Request> {
        let tag = effective_tag(tag, TAG_REDUCE)?;
        if root >= comm.size() {
            return Err(Error::invalid(format!(
                "root {root} out of range for size {}",
                comm.size()
            )));
        }
        let machine = MergeMachine::new(
            self,
            comm,
            root,
            encode_slice(data),
            op.byte_combiner(),
            tag,
            MergeFinish::Reduce,
            Some("reduce"),
        )?;
        Ok(self.coll_request(machine))
    }

    pub fn reduce<T: Wire + 'static>(
        &self,
        comm: &RangeComm,
        root: usize,
        data: &[T],
        op: &ReduceOp<T>,
    ) -> Result<Option<Vec<T>>> {
        let mut req = self.ireduce(comm, root, data, op, None)?;
        self.wait(&mut req)?;
        Ok(req.take_vec::<T>())
    }

    /// Nonblocking inclusive scan: local rank r obtains the fold of ranks
    /// 0..=r.
    pub fn iscan<T: Wire + 'static>(
        &self,
        comm: &RangeComm,
        data: &[T],
        op: &ReduceOp<T>,
        tag: Option<Tag>,
    ) -> Result<Request> {
        let tag = effective_tag(tag, TAG_SCAN)?;
        let machine = ScanMachine::new(
            self,
            comm,
            ScanKind::Inclusive,
            encode_slice(data),
            op.byte_combiner(),
            None,
            tag,
        )?;
        Ok(self.coll_request(machine))
    }

    pub fn scan<T: Wire + 'static>(
        &self,
        comm: &RangeComm,
        data: &[T],
        op: &ReduceOp<T>,
    ) -> Result<Vec<T>> {
        let mut req = self.iscan(comm, data, op, None)?;
        self.wait(&mut req)?;
        Ok(req.take_vec::<T>().expect("scan yields a payload"))
    }

    /// Nonblocking exclusive scan: local rank r obtains the fold of ranks
    /// 0..r; rank 0 obtains the caller-supplied identity.
    pub fn iexscan<T: Wire + 'static>(
        &self,
        comm: &RangeComm,
        data: &[T],
        op: &ReduceOp<T>,
        identity: &[T],
        tag: Option<Tag>,
    ) -> Result<Request> {
        let tag = effective_tag(tag, TAG_EXSCAN)?;
        if identity.len() != data.len() {
            return Err(Error::invalid(format!(
                "exclusive scan identity has {} elements, data has {}",
                identity.len(),
                data.len()
            )));
        }
        let machine = ScanMachine::new(
            self,
            comm,
            ScanKind::Exclusive,
            encode_slice(data),
            op.byte_combiner(),
            Some(encode_slice(identity)),
            tag,
        )?;
        Ok(self.coll_request(machine))
    }

    pub fn exscan<T: Wire + 'static>(
        &self,
        comm: &RangeComm,
        data: &[T],
        op: &ReduceOp<T>,
        identity: &[T],
    ) -> Result<Vec<T>> {
        let mut req = self.iexscan(comm, data, op, identity, None)?;
        self.wait(&mut req)?;
        Ok(req.take_vec::<T>().expect("exclusive scan yields a payload"))
    }

    /// Nonblocking gather with per-rank counts, concatenated by ascending
    /// local rank at the root. `counts` (element counts, one per rank) must
    /// be supplied at the root and are ignored elsewhere.
    pub fn igatherv<T: Wire>(
        &self,
        comm: &RangeComm,
        root: usize,
        data: &[T],
        counts: Option<&[usize]>,
        tag: Option<Tag>,
    ) -> Result<Request> {
        self.igather_impl(comm, root, data, counts, tag, TAG_GATHERV, "gatherv")
    }

    /// Equal-count gather: every rank contributes the same number of
    /// elements, the root's own count setting the expectation.
    pub fn igather<T: Wire>(
        &self,
        comm: &RangeComm,
        root: usize,
        data: &[T],
        tag: Option<Tag>,
    ) -> Result<Request> {
        let me = comm.base_to_local(self.rank())?;
        let counts = (me == root).then(|| vec![data.len(); comm.size()]);
        self.igather_impl(comm, root, data, counts.as_deref(), tag, TAG_GATHER, "gather")
    }

    #[allow(clippy::too_many_arguments)]
    fn igather_impl<T: Wire>(
        &self,
        comm: &RangeComm,
        root: usize,
        data: &[T],
        counts: Option<&[usize]>,
        tag: Option<Tag>,
        default_tag: Tag,
        op_name: &'static str,
    ) -> Result<Request> {
        let tag = effective_tag(tag, default_tag)?;
        if root >= comm.size() {
            return Err(Error::invalid(format!(
                "root {root} out of range for size {}",
                comm.size()
            )));
        }
        let me = comm.base_to_local(self.rank())?;
        let counts_bytes = if me == root {
            let counts = counts.ok_or_else(|| {
                Error::invalid("gather counts must be supplied at the root")
            })?;
            if counts.len() != comm.size() {
                return Err(Error::invalid(format!(
                    "{} counts for {} ranks",
                    counts.len(),
                    comm.size()
                )));
            }
            Some(counts.iter().map(|c| c * T::WIDTH).collect())
        } else {
            None
        };
        let machine = MergeMachine::new(
            self,
            comm,
            root,
            gather_chunk(me, &encode_slice(data)),
            Arc::new(|l: &[u8], r: &[u8]| {
                let mut out = Vec::with_capacity(l.len() + r.len());
                out.extend_from_slice(l);
                out.extend_from_slice(r);
                Ok(out)
            }),
            tag,
            MergeFinish::Gather { counts_bytes },
            Some(op_name),
        )?;
        Ok(self.coll_request(machine))
    }

    pub fn gatherv<T: Wire>(
        &self,
        comm: &RangeComm,
        root: usize,
        data: &[T],
        counts: Option<&[usize]>,
    ) -> Result<Option<Vec<T>>> {
        let mut req = self.igatherv(comm, root, data, counts, None)?;
        self.wait(&mut req)?;
        Ok(req.take_vec::<T>())
    }

    /// Nonblocking barrier: no member's request completes before every
    /// member has entered.
    pub fn ibarrier(&self, comm: &RangeComm, tag: Option<Tag>) -> Result<Request> {
        if let Some(t) = tag {
            if is_reserved_tag(t) || is_reserved_tag(t + 1) {
                return Err(Error::ReservedTag(t));
            }
        }
        let machine = BarrierMachine::new(self, comm, tag)?;
        Ok(self.coll_request(machine))
    }

    pub fn barrier(&self, comm: &RangeComm) -> Result<()> {
        let mut req = self.ibarrier(comm, None)?;
        self.wait(&mut req)
    }
}
