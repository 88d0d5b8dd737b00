//! Benchmark runners: communicator splitting, collectives on sub-ranges, and
//! sort runs with built-in verification. Message and byte columns come from
//! the fabric counters; wall times are desk-scale indications only.

use std::time::Instant;

use jquick::{PivotMode, Schedule, SortConfig, SortStats};
use rbc::runner::{drive, run_ranks};
use rbc::{CommMode, Endpoint, Fabric, GroupSpec, RangeComm, ReduceOp, Request};

use crate::record::BenchRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImplKind {
    /// Local range splits: constant time, zero envelopes.
    RangeLocal,
    /// General-path creation: leader broadcast of the fresh context.
    ExplicitGroup,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollOp {
    Bcast,
    Reduce,
    Scan,
    Gatherv,
    Barrier,
}

impl CollOp {
    pub fn name(&self) -> &'static str {
        match self {
            CollOp::Bcast => "bcast",
            CollOp::Reduce => "reduce",
            CollOp::Scan => "scan",
            CollOp::Gatherv => "gatherv",
            CollOp::Barrier => "barrier",
        }
    }
}

pub fn mode_name(mode: CommMode) -> &'static str {
    match mode {
        CommMode::TagScoped => "tag",
        CommMode::ContextScoped => "ctx",
    }
}

/// Overlapping size-4 chain {0..3},{3..6},... over `p` ranks.
pub fn chain_groups(p: usize) -> Vec<(usize, usize)> {
    (0..)
        .map(|g| (3 * g, 3 * g + 3))
        .take_while(|&(_, l)| l < p)
        .collect()
}

/// Create the overlapping chain with local range splits, honoring the
/// schedule for ranks that sit in two groups. Returns (wall, comms).
pub fn run_chain_range(
    world: &RangeComm,
    schedule: Schedule,
) -> (std::time::Duration, Vec<RangeComm>) {
    let groups = chain_groups(world.size());
    // A split is one local operation per member; the schedule only permutes
    // the order in which a boundary rank runs its two splits, so the chain
    // is created group by group in schedule-dependent order.
    let order: Vec<usize> = match schedule {
        Schedule::Cascaded => (0..groups.len()).collect(),
        Schedule::Alternating => {
            let mut order: Vec<usize> = (0..groups.len()).step_by(2).collect();
            order.extend((1..groups.len()).step_by(2));
            order
        }
    };
    let start = Instant::now();
    let mut comms = vec![None; groups.len()];
    for gi in order {
        let (f, l) = groups[gi];
        comms[gi] = Some(world.split_range(f, l).expect("chain bounds"));
    }
    let comms = comms.into_iter().map(Option::unwrap).collect();
    (start.elapsed(), comms)
}

/// Create the overlapping chain through the general path. Boundary ranks
/// start their two creations in schedule order; everything then progresses
/// by interleaved testing. Returns (wall, sweep count, comms).
pub fn run_chain_group(
    fabric: &Fabric,
    world: &RangeComm,
    schedule: Schedule,
) -> (std::time::Duration, usize, Vec<RangeComm>) {
    let p = world.size();
    let groups = chain_groups(p);
    let eps: Vec<Endpoint> = (0..p).map(|r| fabric.endpoint(r).unwrap()).collect();

    // Build each rank's creation list in schedule order.
    let mut per_rank: Vec<Vec<usize>> = vec![Vec::new(); p];
    for (gi, &(f, l)) in groups.iter().enumerate() {
        for r in f..=l {
            per_rank[r].push(gi);
        }
    }
    for (r, list) in per_rank.iter_mut().enumerate() {
        if list.len() == 2 {
            let left_first = match schedule {
                Schedule::Cascaded => true,
                Schedule::Alternating => (r / 3) % 2 == 1,
            };
            if !left_first {
                list.reverse();
            }
        }
    }

    let start = Instant::now();
    let mut pairs: Vec<(Endpoint, Request)> = Vec::new();
    for r in 0..p {
        for &gi in &per_rank[r] {
            let (f, l) = groups[gi];
            let spec = GroupSpec::Explicit((f..=l).collect());
            pairs.push((
                eps[r].clone(),
                eps[r]
                    .icomm_create_group(world, &spec, 500 + gi)
                    .expect("chain creation"),
            ));
        }
    }
    let sweeps = drive(&mut pairs, 100_000).expect("chain completes");
    let wall = start.elapsed();
    let comms = pairs
        .iter_mut()
        .filter_map(|(_, req)| req.take_comm())
        .collect();
    (wall, sweeps, comms)
}

/// Split benchmarks: half/half split timing plus the overlapping chain.
pub fn bench_split(
    p: usize,
    schedule: Schedule,
    impl_kind: ImplKind,
    reps: u32,
    _seed: u64,
) -> Vec<BenchRecord> {
    assert!(p >= 4, "overlapping chain needs p >= 4");
    let mut records = Vec::new();
    for rep in 0..reps {
        let fabric = Fabric::new(p).unwrap();
        let world = RangeComm::world(&fabric, CommMode::ContextScoped);
        let before = fabric.counters();

        match impl_kind {
            ImplKind::RangeLocal => {
                let iters = 2000u32;
                let start = Instant::now();
                for _ in 0..iters {
                    let a = world.split_range(0, p / 2 - 1).unwrap();
                    let b = world.split_range(p / 2, p - 1).unwrap();
                    std::hint::black_box((&a, &b));
                }
                let wall = start.elapsed().as_nanos() / (2 * iters as u128);
                let t = fabric.counters();
                records.push(BenchRecord {
                    bench: "split_half_range".into(),
                    p,
                    n_per_p: 0,
                    mode: "ctx".into(),
                    repetition: rep,
                    wall_ns: wall,
                    messages: t.messages_sent - before.messages_sent,
                    bytes: t.bytes_sent - before.bytes_sent,
                    depth: None,
                });

                let before = fabric.counters();
                let (wall, comms) = run_chain_range(&world, schedule);
                std::hint::black_box(&comms);
                let t = fabric.counters();
                records.push(BenchRecord {
                    bench: format!("split_chain_{}", schedule_name(schedule)),
                    p,
                    n_per_p: 0,
                    mode: "ctx".into(),
                    repetition: rep,
                    wall_ns: wall.as_nanos(),
                    messages: t.messages_sent - before.messages_sent,
                    bytes: t.bytes_sent - before.bytes_sent,
                    depth: None,
                });
            }
            ImplKind::ExplicitGroup => {
                let eps: Vec<Endpoint> = (0..p).map(|r| fabric.endpoint(r).unwrap()).collect();
                let start = Instant::now();
                let mut pairs: Vec<(Endpoint, Request)> = Vec::new();
                for r in 0..p {
                    let (f, l) = if r < p / 2 { (0, p / 2 - 1) } else { (p / 2, p - 1) };
                    let spec = GroupSpec::Explicit((f..=l).collect());
                    pairs.push((
                        eps[r].clone(),
                        eps[r].icomm_create_group(&world, &spec, 400 + usize::from(r >= p / 2)).unwrap(),
                    ));
                }
                drive(&mut pairs, 100_000).unwrap();
                let wall = start.elapsed();
                let t = fabric.counters();
                records.push(BenchRecord {
                    bench: "split_half_group".into(),
                    p,
                    n_per_p: 0,
                    mode: "ctx".into(),
                    repetition: rep,
                    wall_ns: wall.as_nanos(),
                    messages: t.messages_sent - before.messages_sent,
                    bytes: t.bytes_sent - before.bytes_sent,
                    depth: None,
                });

                let before = fabric.counters();
                let (wall, _sweeps, comms) = run_chain_group(&fabric, &world, schedule);
                std::hint::black_box(&comms);
                let t = fabric.counters();
                records.push(BenchRecord {
                    bench: format!("split_chain_group_{}", schedule_name(schedule)),
                    p,
                    n_per_p: 0,
                    mode: "ctx".into(),
                    repetition: rep,
                    wall_ns: wall.as_nanos(),
                    messages: t.messages_sent - before.messages_sent,
                    bytes: t.bytes_sent - before.bytes_sent,
                    depth: None,
                });
            }
        }
    }
    records
}

fn schedule_name(s: Schedule) -> &'static str {
    match s {
        Schedule::Cascaded => "cascaded",
        Schedule::Alternating => "alternating",
    }
}

/// Start `op` on every member of `comm` and drive to completion.
fn run_collective_once(
    eps: &[Endpoint],
    comm: &RangeComm,
    op: CollOp,
    n_per_p: u64,
    tag_salt: usize,
) {
    let members: Vec<usize> = comm.members().iter().map(|b| b.0).collect();
    let len = n_per_p as usize;
    let sum = ReduceOp::<u64>::sum();
    let mut pairs: Vec<(Endpoint, Request)> = members
        .iter()
        .enumerate()
        .map(|(local, &base)| {
            let ep = &eps[base];
            let data: Vec<u64> = (0..len as u64).map(|i| local as u64 * 1000 + i).collect();
            let req = match op {
                CollOp::Bcast => {
                    let payload = if local == 0 { data } else { Vec::new() };
                    ep.ibcast(comm, 0, payload, None).unwrap()
                }
                CollOp::Reduce => ep.ireduce(comm, 0, &data, &sum, None).unwrap(),
                CollOp::Scan => ep.iscan(comm, &data, &sum, None).unwrap(),
                CollOp::Gatherv => {
                    let counts = (local == 0).then(|| vec![len; comm.size()]);
                    ep.igatherv(comm, 0, &data, counts.as_deref(), None).unwrap()
                }
                CollOp::Barrier => ep.ibarrier(comm, None).unwrap(),
            };
            (ep.clone(), req)
        })
        .collect();
    let _ = tag_salt;
    drive(&mut pairs, 1_000_000).expect("collective completes");
}

/// Collective benchmarks: the full communicator, then split-plus-collective
/// on the lower half, once with a single operation and once with fifty.
pub fn bench_collective(
    p: usize,
    op: CollOp,
    n_per_p: u64,
    mode: CommMode,
    impl_kind: ImplKind,
    reps: u32,
    _seed: u64,
) -> Vec<BenchRecord> {
    assert!(p >= 2);
    let mut records = Vec::new();
    for rep in 0..reps {
        let fabric = Fabric::new(p).unwrap();
        let eps: Vec<Endpoint> = (0..p).map(|r| fabric.endpoint(r).unwrap()).collect();
        let world = RangeComm::world(&fabric, mode);

        let before = fabric.counters();
        let start = Instant::now();
        run_collective_once(&eps, &world, op, n_per_p, 0);
        let wall = start.elapsed();
        let t = fabric.counters();
        records.push(BenchRecord {
            bench: format!("coll_{}_full", op.name()),
            p,
            n_per_p,
            mode: mode_name(mode).into(),
            repetition: rep,
            wall_ns: wall.as_nanos(),
            messages: t.messages_sent - before.messages_sent,
            bytes: t.bytes_sent - before.bytes_sent,
            depth: None,
        });

        for (label, ops) in [("x1", 1usize), ("x50", 50)] {
            let fabric = Fabric::new(p).unwrap();
            let eps: Vec<Endpoint> = (0..p).map(|r| fabric.endpoint(r).unwrap()).collect();
            let world = RangeComm::world(&fabric, mode);
            let before = fabric.counters();
            let start = Instant::now();
            let half = match impl_kind {
                ImplKind::RangeLocal => world.split_range(0, p / 2 - 1).unwrap(),
                ImplKind::ExplicitGroup => {
                    let spec = GroupSpec::Explicit((0..p / 2).collect());
                    let mut pairs: Vec<(Endpoint, Request)> = (0..p / 2)
                        .map(|r| {
                            (
                                eps[r].clone(),
                                eps[r].icomm_create_group(&world, &spec, 450).unwrap(),
                            )
                        })
                        .collect();
                    drive(&mut pairs, 100_000).unwrap();
                    pairs[0].1.take_comm().unwrap()
                }
            };
            for _ in 0..ops {
                run_collective_once(&eps, &half, op, n_per_p, 0);
            }
            let wall = start.elapsed();
            let t = fabric.counters();
            records.push(BenchRecord {
                bench: format!(
                    "coll_{}_half_{}_{}",
                    op.name(),
                    match impl_kind {
                        ImplKind::RangeLocal => "range",
                        ImplKind::ExplicitGroup => "group",
                    },
                    label
                ),
                p,
                n_per_p,
                mode: mode_name(mode).into(),
                repetition: rep,
                wall_ns: wall.as_nanos(),
                messages: t.messages_sent - before.messages_sent,
                bytes: t.bytes_sent - before.bytes_sent,
                depth: None,
            });
        }
    }
    records
}

/// Deterministic benchmark inputs.
pub fn gen_inputs(p: usize, n_per_p: u64, seed: u64, kind: InputKind) -> Vec<Vec<u64>> {
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    let mut rng = StdRng::seed_from_u64(seed);
    let n = p as u64 * n_per_p;
    match kind {
        InputKind::Uniform => (0..p)
            .map(|_| (0..n_per_p).map(|_| rng.gen::<u64>()).collect())
            .collect(),
        InputKind::AllEqual => (0..p).map(|_| vec![42u64; n_per_p as usize]).collect(),
        InputKind::Sorted => (0..p)
            .map(|r| {
                (0..n_per_p)
                    .map(|i| r as u64 * n_per_p + i)
                    .collect()
            })
            .collect(),
        InputKind::Reversed => (0..p)
            .map(|r| {
                (0..n_per_p)
                    .map(|i| n - (r as u64 * n_per_p + i))
                    .collect()
            })
            .collect(),
        InputKind::FewKeys => (0..p)
            .map(|_| (0..n_per_p).map(|_| rng.gen_range(0..4u64)).collect())
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputKind {
    Uniform,
    AllEqual,
    Sorted,
    Reversed,
    FewKeys,
}

/// Sortedness, balance and multiset verification of one run.
pub fn verify_outputs(inputs: &[Vec<u64>], outputs: &[Vec<u64>]) -> Result<(), String> {
    let p = inputs.len();
    let n: usize = inputs.iter().map(Vec::len).sum();
    for (r, out) in outputs.iter().enumerate() {
        let expect = n / p + usize::from(r < n % p);
        if out.len() != expect {
            return Err(format!(
                "rank {r} holds {} elements, capacity is {expect}",
                out.len()
            ));
        }
    }
    let flat: Vec<u64> = outputs.iter().flatten().copied().collect();
    if let Some(w) = flat.windows(2).position(|w| w[0] > w[1]) {
        return Err(format!("output not sorted at global position {w}"));
    }
    let mut expect: Vec<u64> = inputs.iter().flatten().copied().collect();
    expect.sort_unstable();
    if flat != expect {
        return Err("output multiset differs from input".into());
    }
    Ok(())
}

/// Run one threaded sort and verify it; returns per-rank outputs and stats.
pub fn run_sort_threaded(
    fabric: &Fabric,
    inputs: &[Vec<u64>],
    cfg: &SortConfig,
) -> Result<(Vec<Vec<u64>>, Vec<SortStats>), String> {
    let results: Vec<(Vec<u64>, SortStats)> = run_ranks(fabric, |ep| {
        let elems = inputs[ep.rank().0].clone();
        jquick::sort(&ep, elems, cfg).expect("sort run")
    });
    let (outputs, stats): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    verify_outputs(inputs, &outputs)?;
    Ok((outputs, stats))
}

/// Sort benchmark: verified runs only; a failed verdict aborts with the
/// diagnostic.
#[allow(clippy::too_many_arguments)]
pub fn bench_sort(
    p: usize,
    n_per_p: u64,
    mode: CommMode,
    schedule: Schedule,
    pivot_mode: PivotMode,
    reps: u32,
    seed: u64,
) -> Result<Vec<BenchRecord>, String> {
    let mut records = Vec::new();
    for rep in 0..reps {
        let inputs = gen_inputs(p, n_per_p, seed + rep as u64, InputKind::Uniform);
        let cfg = SortConfig {
            pivot_mode,
            seed: seed + rep as u64,
            mode,
            schedule,
            ..Default::default()
        };
        let fabric = Fabric::new(p).map_err(|e| e.to_string())?;
        let before = fabric.counters();
        let start = Instant::now();
        let (_, stats) = run_sort_threaded(&fabric, &inputs, &cfg)
            .map_err(|e| format!("sort verification failed (p={p}, rep={rep}): {e}"))?;
        let wall = start.elapsed();
        let t = fabric.counters();
        records.push(BenchRecord {
            bench: "sort".into(),
            p,
            n_per_p,
            mode: mode_name(mode).into(),
            repetition: rep,
            wall_ns: wall.as_nanos(),
            messages: t.messages_sent - before.messages_sent,
            bytes: t.bytes_sent - before.bytes_sent,
            depth: Some(stats.iter().map(|s| s.levels).max().unwrap_or(0)),
        });
    }
    Ok(records)
}
