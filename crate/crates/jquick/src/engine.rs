//! The distributed sort engine.
//!
//! Each rank runs a `Sorter`: a poll-driven machine holding up to two live
//! recursion tasks (a rank on a group boundary belongs to the left group as
//! its last member and to the right group as its first member) plus a queue
//! of deferred base cases. All communication is nonblocking; a poll sweeps
//! every live task, so progress on one group never waits on the other.
//!
//! One distributed level of a task: agree on a pivot, partition locally,
//! exclusive-scan the (small, large) counts, broadcast the totals from the
//! last rank, derive the capacity split, post the greedy-assignment sends on
//! the task's communicator, and receive (wildcard source, membership
//! filtered) until both side capacities are met exactly. Base cases (one or
//! two ranks) are deferred to a second phase so a boundary rank never delays
//! a larger sibling task, then processed in global offset order; the pair
//! protocol posts all sends before draining receives, which also keeps
//! tag-scoped streams between the same two ranks aligned.

use rbc::{Endpoint, RangeComm, ReduceOp, Request, Src, Tag};

use crate::config::{PivotMode, Schedule, SortConfig};
use crate::error::Result;
use crate::task::{
    greedy_spans, level_cmp, level_rng, locate_global, partition_stable, quickselect_k_smallest,
    split_groups, GroupSplit, PivotCmp, Span, SALT_PIVOT, SALT_SELECT,
};

/// Exchange traffic tags; chosen above the collective-internal band.
pub const TAG_EXCHANGE_SMALL: Tag = 2_000_000;
pub const TAG_EXCHANGE_LARGE: Tag = 2_000_001;
pub const TAG_BASE_EXCHANGE: Tag = 2_000_002;

/// Key types the sorter accepts.
pub trait SortKey: rbc::wire::Wire + Ord + Copy + Send + 'static {}
impl<T: rbc::wire::Wire + Ord + Copy + Send + 'static> SortKey for T {}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SortStats {
    /// Distributed levels executed (maximum over this rank's tasks).
    pub levels: u32,
    pub base_pairs: usize,
    pub base_solos: usize,
    pub pivot_retries: u32,
    /// Largest number of outgoing data spans per partition side at any level.
    pub max_spans_per_side: usize,
    /// Largest number of data envelopes received for one task level.
    pub max_recv_msgs_per_level: usize,
    /// Tasks finished early because every key in the group was equal.
    pub equal_key_finishes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SortPoll {
    Done,
    Progressed,
    Stalled,
}

struct TaskSeed<K> {
    comm: RangeComm,
    caps: Vec<u64>,
    holdings: Vec<u64>,
    elems: Vec<K>,
    offset: u64,
    level: u32,
}

enum Outcome<K> {
    Child(TaskSeed<K>),
    Piece(u64, Vec<K>),
}

enum TaskPoll<K> {
    Stalled,
    Progressed,
    Finished(Vec<Outcome<K>>),
}

struct ExchangeState<K> {
    split: GroupSplit,
    need_small: u64,
    need_large: u64,
    /// Incoming chunks keyed by source local rank. Assembling them in source
    /// order (not arrival order) keeps a rank's element vector, and with it
    /// every later sample draw, independent of thread scheduling.
    small_in: Vec<(usize, Vec<K>)>,
    large_in: Vec<(usize, Vec<K>)>,
    recv_msgs: usize,
    /// Set on the rebalance path: finish as a sorted piece instead of
    /// recursing (the group's keys are all equal).
    finish_after: bool,
}

fn assemble<K: Copy>(mut chunks: Vec<(usize, Vec<K>)>) -> Vec<K> {
    chunks.sort_by_key(|(src, _)| *src);
    let mut out = Vec::with_capacity(chunks.iter().map(|(_, c)| c.len()).sum());
    for (_, chunk) in chunks {
        out.extend(chunk);
    }
    out
}

enum TaskState<K> {
    PivotStart,
    SampleGather { req: Request },
    PivotBcast { req: Request },
    CountsScan { req: Request },
    TotalsBcast { req: Request },
    FallbackCountGather { req: Request },
    FallbackKeyGather { req: Request },
    FallbackBcast { req: Request },
    Exchange(ExchangeState<K>),
}

struct TaskMachine<K: SortKey> {
    comm: RangeComm,
    me: usize,
    caps: Vec<u64>,
    holdings: Vec<u64>,
    elems: Vec<K>,
    offset: u64,
    level: u32,
    attempt: u32,
    state: TaskState<K>,
    pivot: Option<K>,
    small: Vec<K>,
    large: Vec<K>,
    s_before: u64,
    g_before: u64,
    fallback_counts: Option<Vec<usize>>,
    seed: u64,
    pivot_mode: PivotMode,
    schedule: Schedule,
    sample_count: usize,
}

/// One test call on a pending request, reporting whether its state machine
/// advanced. Telling "progressed" from "stalled" apart matters: a stalled
/// rank may park until new mail arrives, a progressed one must poll again
/// immediately because more of its mail may already be waiting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Step {
    Done,
    Progressed,
    Stalled,
}

fn test_step(ep: &Endpoint, req: &mut Request) -> crate::error::Result<Step> {
    let before = req.transitions();
    Ok(if ep.test(req)? {
        Step::Done
    } else if req.transitions() != before {
        Step::Progressed
    } else {
        Step::Stalled
    })
}

impl<K: SortKey> TaskMachine<K> {
    fn new(seed: TaskSeed<K>, cfg: &SortConfig, me: usize) -> TaskMachine<K> {
        let per_rank = seed.caps.iter().sum::<u64>() / seed.caps.len() as u64;
        TaskMachine {
            me,
            sample_count: cfg.sample_count(seed.comm.size(), per_rank.max(1)),
            comm: seed.comm,
            caps: seed.caps,
            holdings: seed.holdings,
            elems: seed.elems,
            offset: seed.offset,
            level: seed.level,
            attempt: 0,
            state: TaskState::PivotStart,
            pivot: None,
            small: Vec::new(),
            large: Vec::new(),
            s_before: 0,
            g_before: 0,
            fallback_counts: None,
            seed: cfg.seed,
            pivot_mode: cfg.pivot_mode,
            schedule: cfg.schedule,
        }
    }

    fn total(&self) -> u64 {
        self.caps.iter().sum()
    }

    fn my_holding_prefix(&self) -> u64 {
        self.holdings[..self.me].iter().sum()
    }

    fn rng(&self, salt: u64) -> rand::rngs::StdRng {
        level_rng(self.seed, self.offset, self.level, self.attempt, salt)
    }

    fn start_pivot(&mut self, ep: &Endpoint) -> Result<TaskPoll<K>> {
        use rand::Rng;
        debug_assert_eq!(self.holdings[self.me], self.elems.len() as u64);
        match self.pivot_mode {
            PivotMode::SingleRandom => {
                let mut rng = self.rng(SALT_PIVOT);
                let idx = rng.gen_range(0..self.total());
                let (owner, off) = locate_global(&self.holdings, idx);
                let data = if owner == self.me {
                    vec![self.elems[off as usize]]
                } else {
                    Vec::new()
                };
                let req = ep.ibcast(&self.comm, owner, data, None)?;
                self.state = TaskState::PivotBcast { req };
            }
            PivotMode::SampleMedian => {
                let mut rng = self.rng(SALT_PIVOT);
                let idxs: Vec<u64> = (0..self.sample_count)
                    .map(|_| rng.gen_range(0..self.total()))
                    .collect();
                let prefix = self.my_holding_prefix();
                let my_count = self.holdings[self.me];
                let mine: Vec<K> = idxs
                    .iter()
                    .filter(|&&i| i >= prefix && i < prefix + my_count)
                    .map(|&i| self.elems[(i - prefix) as usize])
                    .collect();
                let counts = if self.me == 0 {
                    let mut c = vec![0usize; self.comm.size()];
                    for &i in &idxs {
                        let (owner, _) = locate_global(&self.holdings, i);
                        c[owner] += 1;
                    }
                    Some(c)
                } else {
                    None
                };
                let req = ep.igatherv(&self.comm, 0, &mine, counts.as_deref(), None)?;
                self.state = TaskState::SampleGather { req };
            }
        }
        Ok(TaskPoll::Progressed)
    }

    fn partition_and_scan(&mut self, ep: &Endpoint) -> Result<TaskPoll<K>> {
        let pivot = self.pivot.expect("pivot agreed");
        let (small, large) = partition_stable(&self.elems, &pivot, level_cmp(self.level));
        self.small = small;
        self.large = large;
        let counts = [self.small.len() as u64, self.large.len() as u64];
        let req = ep.iexscan(&self.comm, &counts, &ReduceOp::<u64>::sum(), &[0, 0], None)?;
        self.state = TaskState::CountsScan { req };
        Ok(TaskPoll::Progressed)
    }

    fn start_exchange(
        &mut self,
        ep: &Endpoint,
        split: GroupSplit,
        stats: &mut SortStats,
    ) -> Result<TaskPoll<K>> {
        self.elems = Vec::new();
        let small = std::mem::take(&mut self.small);
        let large = std::mem::take(&mut self.large);
        let mut st = ExchangeState {
            need_small: if self.me <= split.left_last {
                split.left_caps[self.me]
            } else {
                0
            },
            need_large: if self.me >= split.right_first {
                split.right_caps[self.me - split.right_first]
            } else {
                0
            },
            small_in: Vec::new(),
            large_in: Vec::new(),
            recv_msgs: 0,
            finish_after: false,
            split,
        };

        let s_spans = greedy_spans(&st.split.left_caps, 0, self.s_before, small.len() as u64);
        let g_spans = greedy_spans(
            &st.split.right_caps,
            st.split.right_first,
            self.g_before,
            large.len() as u64,
        );
        stats.max_spans_per_side = stats
            .max_spans_per_side
            .max(s_spans.len())
            .max(g_spans.len());

        self.post_side(ep, &small, &s_spans, TAG_EXCHANGE_SMALL, true, &mut st)?;
        self.post_side(ep, &large, &g_spans, TAG_EXCHANGE_LARGE, false, &mut st)?;

        self.state = TaskState::Exchange(st);
        Ok(TaskPoll::Progressed)
    }

    fn post_side(
        &self,
        ep: &Endpoint,
        side: &[K],
        spans: &[Span],
        tag: Tag,
        is_small: bool,
        st: &mut ExchangeState<K>,
    ) -> Result<()> {
        for span in spans {
            let lo = span.offset as usize;
            let hi = lo + span.len as usize;
            if span.target == self.me {
                // Local move, no envelope.
                if is_small {
                    st.small_in.push((self.me, side[lo..hi].to_vec()));
                    st.need_small -= span.len;
                } else {
                    st.large_in.push((self.me, side[lo..hi].to_vec()));
                    st.need_large -= span.len;
                }
            } else {
                ep.send(&self.comm, span.target, tag, &side[lo..hi])?;
            }
        }
        Ok(())
    }

    fn drain_side(
        &self,
        ep: &Endpoint,
        tag: Tag,
        need: &mut u64,
        sink: &mut Vec<(usize, Vec<K>)>,
        msgs: &mut usize,
    ) -> Result<bool> {
        let mut progressed = false;
        while *need > 0 {
            match ep.iprobe(&self.comm, Src::Any, tag)? {
                None => break,
                Some(status) => {
                    let (data, _) =
                        ep.recv::<K>(&self.comm, Src::Local(status.source), tag, *need as usize)?;
                    *need -= data.len() as u64;
                    sink.push((status.source, data));
                    *msgs += 1;
                    progressed = true;
                }
            }
        }
        Ok(progressed)
    }

    /// Fallback when repeated random pivots left one side empty: gather the
    /// distinct keys at rank 0 and either pick an exact splitting pivot or,
    /// if only one key exists, tell everyone to finish.
    fn fallback_pivot_payload(&self, keys: &mut Vec<K>) -> Vec<K> {
        keys.sort_unstable();
        keys.dedup();
        if keys.len() <= 1 {
            return Vec::new();
        }
        let idx = match level_cmp(self.level) {
            // Small side is strict-below: any pivot above the minimum works.
            PivotCmp::Lt => keys.len() / 2,
            // Small side includes equals: the pivot must stay below the max.
            PivotCmp::Le => ((keys.len() - 1) / 2).min(keys.len() - 2),
        };
        vec![keys[idx]]
    }

    fn equal_key_finish(&mut self, ep: &Endpoint, stats: &mut SortStats) -> Result<TaskPoll<K>> {
        stats.equal_key_finishes += 1;
        if self.holdings == self.caps {
            let elems = std::mem::take(&mut self.elems);
            let piece_off = self.offset + self.caps[..self.me].iter().sum::<u64>();
            return Ok(TaskPoll::Finished(vec![Outcome::Piece(piece_off, elems)]));
        }
        // Equal keys but unbalanced holdings: one rebalancing exchange, then
        // finish.
        let all = std::mem::take(&mut self.elems);
        let spans = greedy_spans(&self.caps, 0, self.my_holding_prefix(), all.len() as u64);
        stats.max_spans_per_side = stats.max_spans_per_side.max(spans.len());
        let mut st = ExchangeState {
            split: GroupSplit {
                left_last: self.comm.size() - 1,
                right_first: self.comm.size(),
                janus: None,
                left_caps: self.caps.clone(),
                right_caps: Vec::new(),
                s_total: self.total(),
                g_total: 0,
            },
            need_small: self.caps[self.me],
            need_large: 0,
            small_in: Vec::new(),
            large_in: Vec::new(),
            recv_msgs: 0,
            finish_after: true,
        };
        self.post_side(ep, &all, &spans, TAG_EXCHANGE_SMALL, true, &mut st)?;
        self.state = TaskState::Exchange(st);
        Ok(TaskPoll::Progressed)
    }

    fn poll(&mut self, ep: &Endpoint, stats: &mut SortStats) -> Result<TaskPoll<K>> {
        let state = std::mem::replace(&mut self.state, TaskState::PivotStart);
        match state {
            TaskState::PivotStart => self.start_pivot(ep),
            TaskState::SampleGather { mut req } => {
                match test_step(ep, &mut req)? {
                    Step::Done => {}
                    step => {
                        self.state = TaskState::SampleGather { req };
                        return Ok(if step == Step::Progressed {
                            TaskPoll::Progressed
                        } else {
                            TaskPoll::Stalled
                        });
                    }
                }
                let data = if self.me == 0 {
                    let mut samples = req.take_vec::<K>().expect("gathered samples");
                    debug_assert_eq!(samples.len(), self.sample_count);
                    samples.sort_unstable();
                    vec![samples[samples.len() / 2]]
                } else {
                    Vec::new()
                };
                let req = ep.ibcast(&self.comm, 0, data, None)?;
                self.state = TaskState::PivotBcast { req };
                Ok(TaskPoll::Progressed)
            }
            TaskState::PivotBcast { mut req } => {
                match test_step(ep, &mut req)? {
                    Step::Done => {}
                    step => {
                        self.state = TaskState::PivotBcast { req };
                        return Ok(if step == Step::Progressed {
                            TaskPoll::Progressed
                        } else {
                            TaskPoll::Stalled
                        });
                    }
                }
                self.pivot = Some(req.take_vec::<K>().expect("pivot broadcast")[0]);
                self.partition_and_scan(ep)
            }
            TaskState::CountsScan { mut req } => {
                match test_step(ep, &mut req)? {
                    Step::Done => {}
                    step => {
                        self.state = TaskState::CountsScan { req };
                        return Ok(if step == Step::Progressed {
                            TaskPoll::Progressed
                        } else {
                            TaskPoll::Stalled
                        });
                    }
                }
                let pre = req.take_vec::<u64>().expect("scan result");
                self.s_before = pre[0];
                self.g_before = pre[1];
                // Prefix identity: small and large prefixes partition the
                // elements held below this rank.
                debug_assert_eq!(self.s_before + self.g_before, self.my_holding_prefix());
                let last = self.comm.size() - 1;
                let data = if self.me == last {
                    vec![
                        self.s_before + self.small.len() as u64,
                        self.g_before + self.large.len() as u64,
                    ]
                } else {
                    Vec::new()
                };
                let req = ep.ibcast(&self.comm, last, data, None)?;
                self.state = TaskState::TotalsBcast { req };
                Ok(TaskPoll::Progressed)
            }
            TaskState::TotalsBcast { mut req } => {
                match test_step(ep, &mut req)? {
                    Step::Done => {}
                    step => {
                        self.state = TaskState::TotalsBcast { req };
                        return Ok(if step == Step::Progressed {
                            TaskPoll::Progressed
                        } else {
                            TaskPoll::Stalled
                        });
                    }
                }
                let totals = req.take_vec::<u64>().expect("totals broadcast");
                let (s_total, g_total) = (totals[0], totals[1]);
                debug_assert_eq!(s_total + g_total, self.total());
                if s_total == 0 || g_total == 0 {
                    self.attempt += 1;
                    stats.pivot_retries += 1;
                    if self.attempt <= 3 {
                        return self.start_pivot(ep);
                    }
                    let mut mine = self.elems.clone();
                    mine.sort_unstable();
                    mine.dedup();
                    let req = ep.igather(&self.comm, 0, &[mine.len() as u64], None)?;
                    self.state = TaskState::FallbackCountGather { req };
                    return Ok(TaskPoll::Progressed);
                }
                let split = split_groups(&self.caps, s_total);
                self.start_exchange(ep, split, stats)
            }
            TaskState::FallbackCountGather { mut req } => {
                match test_step(ep, &mut req)? {
                    Step::Done => {}
                    step => {
                        self.state = TaskState::FallbackCountGather { req };
                        return Ok(if step == Step::Progressed {
                            TaskPoll::Progressed
                        } else {
                            TaskPoll::Stalled
                        });
                    }
                }
                self.fallback_counts = req
                    .take_vec::<u64>()
                    .map(|v| v.iter().map(|&c| c as usize).collect());
                let mut mine = self.elems.clone();
                mine.sort_unstable();
                mine.dedup();
                let req =
                    ep.igatherv(&self.comm, 0, &mine, self.fallback_counts.as_deref(), None)?;
                self.state = TaskState::FallbackKeyGather { req };
                Ok(TaskPoll::Progressed)
            }
            TaskState::FallbackKeyGather { mut req } => {
                match test_step(ep, &mut req)? {
                    Step::Done => {}
                    step => {
                        self.state = TaskState::FallbackKeyGather { req };
                        return Ok(if step == Step::Progressed {
                            TaskPoll::Progressed
                        } else {
                            TaskPoll::Stalled
                        });
                    }
                }
                let data = if self.me == 0 {
                    let mut keys = req.take_vec::<K>().expect("gathered distinct keys");
                    self.fallback_pivot_payload(&mut keys)
                } else {
                    Vec::new()
                };
                let req = ep.ibcast(&self.comm, 0, data, None)?;
                self.state = TaskState::FallbackBcast { req };
                Ok(TaskPoll::Progressed)
            }
            TaskState::FallbackBcast { mut req } => {
                match test_step(ep, &mut req)? {
                    Step::Done => {}
                    step => {
                        self.state = TaskState::FallbackBcast { req };
                        return Ok(if step == Step::Progressed {
                            TaskPoll::Progressed
                        } else {
                            TaskPoll::Stalled
                        });
                    }
                }
                match req.take_vec::<K>().expect("fallback broadcast").first() {
                    Some(&pivot) => {
                        self.pivot = Some(pivot);
                        self.partition_and_scan(ep)
                    }
                    None => self.equal_key_finish(ep, stats),
                }
            }
            TaskState::Exchange(mut st) => {
                let p1 = self.drain_side(
                    ep,
                    TAG_EXCHANGE_SMALL,
                    &mut st.need_small,
                    &mut st.small_in,
                    &mut st.recv_msgs,
                )?;
                let p2 = self.drain_side(
                    ep,
                    TAG_EXCHANGE_LARGE,
                    &mut st.need_large,
                    &mut st.large_in,
                    &mut st.recv_msgs,
                )?;
                if st.need_small > 0 || st.need_large > 0 {
                    let progressed = p1 || p2;
                    self.state = TaskState::Exchange(st);
                    return Ok(if progressed {
                        TaskPoll::Progressed
                    } else {
                        TaskPoll::Stalled
                    });
                }
                stats.max_recv_msgs_per_level = stats.max_recv_msgs_per_level.max(st.recv_msgs);
                stats.levels = stats.levels.max(self.level + 1);
                self.finish_exchange(st)
            }
        }
    }

    fn finish_exchange(&mut self, st: ExchangeState<K>) -> Result<TaskPoll<K>> {
        let split = st.split;
        let small_in = assemble(st.small_in);
        let large_in = assemble(st.large_in);
        if st.finish_after {
            // Rebalanced equal-key group: already sorted.
            assert_eq!(small_in.len() as u64, self.caps[self.me]);
            let piece_off = self.offset + self.caps[..self.me].iter().sum::<u64>();
            return Ok(TaskPoll::Finished(vec![Outcome::Piece(piece_off, small_in)]));
        }

        let in_left = self.me <= split.left_last;
        let in_right = self.me >= split.right_first;
        if in_left {
            assert_eq!(
                small_in.len() as u64,
                split.left_caps[self.me],
                "left capacity not met exactly"
            );
        }
        if in_right {
            assert_eq!(
                large_in.len() as u64,
                split.right_caps[self.me - split.right_first],
                "right capacity not met exactly"
            );
        }

        let left_comm = self.comm.split_range(0, split.left_last);
        let right_comm = self
            .comm
            .split_range(split.right_first, self.comm.size() - 1);

        let left_seed = |elems: Vec<K>| -> Result<Outcome<K>> {
            Ok(Outcome::Child(TaskSeed {
                comm: left_comm?,
                caps: split.left_caps.clone(),
                holdings: split.left_caps.clone(),
                elems,
                offset: self.offset,
                level: self.level + 1,
            }))
        };
        let right_seed = |elems: Vec<K>| -> Result<Outcome<K>> {
            Ok(Outcome::Child(TaskSeed {
                comm: right_comm?,
                caps: split.right_caps.clone(),
                holdings: split.right_caps.clone(),
                elems,
                offset: self.offset + split.s_total,
                level: self.level + 1,
            }))
        };

        let mut outcomes = Vec::new();
        if in_left && in_right {
            // Boundary rank: the schedule decides which side it sets up and
            // polls first.
            let my_base = self.comm.local_to_base(self.me)?.0;
            let left_first = match self.schedule {
                Schedule::Cascaded => true,
                Schedule::Alternating => my_base % 2 == 0,
            };
            if left_first {
                outcomes.push(left_seed(small_in)?);
                outcomes.push(right_seed(large_in)?);
            } else {
                outcomes.push(right_seed(large_in)?);
                outcomes.push(left_seed(small_in)?);
            }
        } else if in_left {
            outcomes.push(left_seed(small_in)?);
        } else {
            outcomes.push(right_seed(large_in)?);
        }
        Ok(TaskPoll::Finished(outcomes))
    }
}

struct BaseCase<K> {
    offset: u64,
    comm: Option<RangeComm>,
    me_local: usize,
    my_cap: u64,
    partner_incoming: u64,
    elems: Vec<K>,
    recv: Option<Request>,
    select_seed: u64,
}

enum SetupState {
    CountGather(Request),
    CountBcast(Request),
}

enum Phase {
    Setup(SetupState),
    Distributed,
    Bases { idx: usize },
    Done,
}

/// Poll-driven distributed sorter for one rank.
pub struct Sorter<K: SortKey> {
    ep: Endpoint,
    cfg: SortConfig,
    phase: Phase,
    root_comm: RangeComm,
    input: Option<Vec<K>>,
    live: Vec<TaskMachine<K>>,
    bases: Vec<BaseCase<K>>,
    finished: Vec<(u64, Vec<K>)>,
    stats: SortStats,
    my_cap: u64,
}

impl<K: SortKey> Sorter<K> {
    /// Start a sort over an existing communicator. Every member calls this
    /// collectively with its local elements.
    pub fn new(
        ep: &Endpoint,
        comm: &RangeComm,
        elems: Vec<K>,
        cfg: &SortConfig,
    ) -> Result<Sorter<K>> {
        // The input may be unevenly distributed; gather-and-broadcast the
        // per-rank counts once so every member can locate global positions.
        let counts = if comm.base_to_local(ep.rank())? == 0 {
            Some(vec![1usize; comm.size()])
        } else {
            None
        };
        let req = ep.igatherv(comm, 0, &[elems.len() as u64], counts.as_deref(), None)?;
        Ok(Sorter {
            ep: ep.clone(),
            cfg: cfg.clone(),
            phase: Phase::Setup(SetupState::CountGather(req)),
            root_comm: comm.clone(),
            input: Some(elems),
            live: Vec::new(),
            bases: Vec::new(),
            finished: Vec::new(),
            stats: SortStats::default(),
            my_cap: 0,
        })
    }

    pub fn stats(&self) -> &SortStats {
        &self.stats
    }

    fn route(&mut self, seed: TaskSeed<K>) {
        let me = seed
            .comm
            .base_to_local(self.ep.rank())
            .expect("routed a task this rank is not part of");
        debug_assert_eq!(seed.holdings[me], seed.elems.len() as u64);
        match seed.comm.size() {
            1 => {
                self.stats.base_solos += 1;
                self.bases.push(BaseCase {
                    offset: seed.offset,
                    comm: None,
                    me_local: 0,
                    my_cap: seed.caps[0],
                    partner_incoming: 0,
                    elems: seed.elems,
                    recv: None,
                    select_seed: self.cfg.seed,
                });
            }
            2 => {
                self.stats.base_pairs += 1;
                self.bases.push(BaseCase {
                    offset: seed.offset,
                    comm: Some(seed.comm),
                    me_local: me,
                    my_cap: seed.caps[me],
                    partner_incoming: seed.holdings[1 - me],
                    elems: seed.elems,
                    recv: None,
                    select_seed: self.cfg.seed,
                });
            }
            _ => {
                let machine = TaskMachine::new(seed, &self.cfg, me);
                self.live.push(machine);
            }
        }
    }

    fn poll_setup(&mut self) -> Result<SortPoll> {
        let Phase::Setup(state) = &mut self.phase else {
            unreachable!()
        };
        match state {
            SetupState::CountGather(req) => {
                match test_step(&self.ep, req)? {
                    Step::Done => {}
                    Step::Progressed => return Ok(SortPoll::Progressed),
                    Step::Stalled => return Ok(SortPoll::Stalled),
                }
                let data = req.take_vec::<u64>().unwrap_or_default();
                let req = self.ep.ibcast(&self.root_comm, 0, data, None)?;
                self.phase = Phase::Setup(SetupState::CountBcast(req));
                Ok(SortPoll::Progressed)
            }
            SetupState::CountBcast(req) => {
                match test_step(&self.ep, req)? {
                    Step::Done => {}
                    Step::Progressed => return Ok(SortPoll::Progressed),
                    Step::Stalled => return Ok(SortPoll::Stalled),
                }
                let holdings = req.take_vec::<u64>().expect("holdings broadcast");
                let p = self.root_comm.size();
                debug_assert_eq!(holdings.len(), p);
                let n: u64 = holdings.iter().sum();
                let caps: Vec<u64> = (0..p as u64)
                    .map(|i| n / p as u64 + u64::from(i < n % p as u64))
                    .collect();
                let me = self.root_comm.base_to_local(self.ep.rank())?;
                self.my_cap = caps[me];
                let elems = self.input.take().expect("input consumed once");
                if n == 0 {
                    self.phase = Phase::Done;
                    return Ok(SortPoll::Done);
                }
                self.route(TaskSeed {
                    comm: self.root_comm.clone(),
                    caps,
                    holdings,
                    elems,
                    offset: 0,
                    level: 0,
                });
                self.phase = Phase::Distributed;
                Ok(SortPoll::Progressed)
            }
        }
    }

    fn poll_distributed(&mut self) -> Result<SortPoll> {
        let mut progressed = false;
        let mut i = 0;
        while i < self.live.len() {
            let Sorter {
                ep, live, stats, ..
            } = self;
            match live[i].poll(ep, stats)? {
                TaskPoll::Stalled => i += 1,
                TaskPoll::Progressed => {
                    progressed = true;
                    i += 1;
                }
                TaskPoll::Finished(outcomes) => {
                    progressed = true;
                    self.live.remove(i);
                    for o in outcomes {
                        match o {
                            Outcome::Piece(off, piece) => self.finished.push((off, piece)),
                            Outcome::Child(seed) => self.route(seed),
                        }
                    }
                    // Restart the sweep so fresh tasks get their first poll
                    // in schedule order.
                    i = 0;
                }
            }
        }
        if !self.live.is_empty() {
            return Ok(if progressed {
                SortPoll::Progressed
            } else {
                SortPoll::Stalled
            });
        }
        // Enter the base-case phase: order by global offset, post all pair
        // sends up front, then drain receives case by case.
        self.bases.sort_by_key(|b| b.offset);
        for b in &self.bases {
            if let Some(comm) = &b.comm {
                self.ep
                    .send(comm, 1 - b.me_local, TAG_BASE_EXCHANGE, &b.elems)?;
            }
        }
        self.phase = Phase::Bases { idx: 0 };
        Ok(SortPoll::Progressed)
    }

    fn poll_bases(&mut self) -> Result<SortPoll> {
        let Phase::Bases { idx } = &mut self.phase else {
            unreachable!()
        };
        let mut progressed = false;
        while *idx < self.bases.len() {
            let b = &mut self.bases[*idx];
            match &b.comm {
                None => {
                    let mut elems = std::mem::take(&mut b.elems);
                    assert_eq!(elems.len() as u64, b.my_cap);
                    elems.sort_unstable();
                    self.finished.push((b.offset, elems));
                    *idx += 1;
                    progressed = true;
                }
                Some(comm) => {
                    if b.recv.is_none() {
                        b.recv = Some(self.ep.irecv::<K>(
                            comm,
                            Src::Local(1 - b.me_local),
                            TAG_BASE_EXCHANGE,
                            b.partner_incoming as usize,
                        )?);
                    }
                    let req = b.recv.as_mut().unwrap();
                    match test_step(&self.ep, req)? {
                        Step::Done => {}
                        step => {
                            return Ok(if progressed || step == Step::Progressed {
                                SortPoll::Progressed
                            } else {
                                SortPoll::Stalled
                            });
                        }
                    }
                    let theirs = req.take_vec::<K>().expect("partner elements");
                    assert_eq!(theirs.len() as u64, b.partner_incoming);
                    let mut union = std::mem::take(&mut b.elems);
                    union.extend(theirs);
                    let mut rng = level_rng(b.select_seed, b.offset, 0, 0, SALT_SELECT);
                    let total = union.len() as u64;
                    // The left rank keeps the smallest elements matching its
                    // capacity; the right rank keeps the complement.
                    let left_cap = if b.me_local == 0 {
                        b.my_cap
                    } else {
                        total - b.my_cap
                    };
                    let (lows, highs) = quickselect_k_smallest(&union, left_cap as usize, &mut rng);
                    let (mut mine, piece_off) = if b.me_local == 0 {
                        (lows, b.offset)
                    } else {
                        (highs, b.offset + left_cap)
                    };
                    assert_eq!(mine.len() as u64, b.my_cap);
                    mine.sort_unstable();
                    self.finished.push((piece_off, mine));
                    *idx += 1;
                    progressed = true;
                }
            }
        }
        self.phase = Phase::Done;
        Ok(SortPoll::Done)
    }

    /// Advance this rank's sort; all progress happens in here.
    pub fn poll(&mut self) -> Result<SortPoll> {
        match self.phase {
            Phase::Setup(_) => self.poll_setup(),
            Phase::Distributed => self.poll_distributed(),
            Phase::Bases { .. } => self.poll_bases(),
            Phase::Done => Ok(SortPoll::Done),
        }
    }

    pub fn is_done(&self) -> bool {
        matches!(self.phase, Phase::Done)
    }

    /// Final sorted segment of this rank, pieces concatenated in global
    /// offset order.
    pub fn into_output(mut self) -> (Vec<K>, SortStats) {
        assert!(self.is_done(), "sort not finished");
        self.finished.sort_by_key(|(off, _)| *off);
        let mut out = Vec::with_capacity(self.my_cap as usize);
        for (_, piece) in self.finished {
            out.extend(piece);
        }
        assert_eq!(
            out.len() as u64,
            self.my_cap,
            "final holding differs from capacity"
        );
        (out, self.stats)
    }
}

/// Collective blocking sort over `comm`: returns this rank's globally sorted
/// segment and the run statistics.
pub fn sort_on<K: SortKey>(
    ep: &Endpoint,
    comm: &RangeComm,
    elems: Vec<K>,
    cfg: &SortConfig,
) -> Result<(Vec<K>, SortStats)> {
    let mut sorter = Sorter::new(ep, comm, elems, cfg)?;
    loop {
        let seen = ep.mailbox_generation();
        match sorter.poll()? {
            SortPoll::Done => break,
            SortPoll::Progressed => continue,
            SortPoll::Stalled => ep.park_mailbox(seen, std::time::Duration::from_millis(10)),
        }
    }
    Ok(sorter.into_output())
}

/// Collective blocking sort over a world communicator created in the
/// configured mode.
pub fn sort<K: SortKey>(
    ep: &Endpoint,
    elems: Vec<K>,
    cfg: &SortConfig,
) -> Result<(Vec<K>, SortStats)> {
    let comm = RangeComm::world(ep.fabric(), cfg.mode);
    sort_on(ep, &comm, elems, cfg)
}
