//! Acceptance suite: one test per criterion, each printing a pass line.
//! Run with `cargo test -p rbc-harness --test acceptance -- --nocapture`.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use jquick::{PivotMode, Schedule, SortConfig, SortPoll, SortStats, Sorter};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rbc::coll::ceil_log2;
use rbc::runner::{drive, run_ranks};
use rbc::{
    ctx_registry_check, CommMode, ContextId, Endpoint, Fabric, GroupSpec, RangeComm, ReduceOp,
    Request, Src, ViolationKind,
};
use rbc_harness::{chain_groups, gen_inputs, run_chain_range, verify_outputs, InputKind};

fn pass(line: &str) {
    println!("[acceptance] {line}: PASS");
}

fn endpoints(fabric: &Fabric) -> Vec<Endpoint> {
    (0..fabric.size()).map(|r| fabric.endpoint(r).unwrap()).collect()
}

// ---------------------------------------------------------------------------
// Criterion 1: zero-communication constant-time splitting.
// ---------------------------------------------------------------------------

#[test]
fn c1_zero_communication_splitting() {
    let t0 = Instant::now();
    let ps = [4usize, 16, 64, 256, 1024];
    let mut mean_ns = Vec::new();
    for &p in &ps {
        let fabric = Fabric::new(p).unwrap();
        let world = RangeComm::world(&fabric, CommMode::ContextScoped);
        let before = fabric.counters();

        // 10 blocks x 1000 splits = 10 000 consecutive splits.
        let mut block_ns = Vec::new();
        for block in 0..10 {
            let start = Instant::now();
            for i in 0..1000usize {
                let f = (block + i) % (p / 2);
                let l = f + p / 2 - 1;
                let c = world.split_range(f, l).unwrap();
                std::hint::black_box(&c);
            }
            block_ns.push(start.elapsed().as_nanos() / 1000);
        }
        block_ns.sort_unstable();
        mean_ns.push(block_ns[block_ns.len() / 2] as f64);

        let after = fabric.counters();
        assert_eq!(
            after.messages_sent, before.messages_sent,
            "splits sent envelopes at p={p}"
        );
    }
    let lo = mean_ns.iter().cloned().fold(f64::MAX, f64::min);
    let hi = mean_ns.iter().cloned().fold(0.0, f64::max);
    assert!(
        hi / lo < 3.0,
        "per-split time varies {:.2}x across p: {mean_ns:?}",
        hi / lo
    );
    assert!(t0.elapsed() < Duration::from_secs(30), "criterion 1 overran");
    pass(&format!(
        "C1 zero-communication splitting (0 envelopes, spread {:.2}x over p={ps:?})",
        hi / lo
    ));
}

// ---------------------------------------------------------------------------
// Criterion 2: collectives equal the sequential oracle, exact message counts.
// ---------------------------------------------------------------------------

fn start_pairs(
    eps: &[Endpoint],
    f: impl Fn(&Endpoint, usize) -> Request,
) -> Vec<(Endpoint, Request)> {
    eps.iter()
        .enumerate()
        .map(|(i, ep)| (ep.clone(), f(ep, i)))
        .collect()
}

#[test]
fn c2_collectives_oracle_equivalence() {
    let t0 = Instant::now();
    let sum = ReduceOp::<u64>::sum();
    for p in 1..=33usize {
        let root = p / 2;
        for len in [0usize, 1, 17] {
            let inputs: Vec<Vec<u64>> =
                (0..p).map(|r| (0..len as u64).map(|i| r as u64 * 100 + i).collect()).collect();

            // Broadcast.
            let (fabric, eps, comm) = fresh_world(p);
            let mut pairs = start_pairs(&eps, |ep, i| {
                let data = if i == root { inputs[root].clone() } else { vec![] };
                ep.ibcast(&comm, root, data, None).unwrap()
            });
            drive(&mut pairs, 100_000).unwrap();
            for (_, req) in pairs.iter_mut() {
                assert_eq!(req.take_vec::<u64>().unwrap(), inputs[root]);
            }
            assert_eq!(fabric.counters().messages_sent, (p - 1) as u64, "bcast p={p}");

            // Reduce.
            let (fabric, eps, comm) = fresh_world(p);
            let mut pairs = start_pairs(&eps, |ep, i| {
                ep.ireduce(&comm, root, &inputs[i], &sum, None).unwrap()
            });
            drive(&mut pairs, 100_000).unwrap();
            let mut expect = inputs[0].clone();
            for v in &inputs[1..] {
                for (a, b) in expect.iter_mut().zip(v) {
                    *a += b;
                }
            }
            assert_eq!(pairs[root].1.take_vec::<u64>().unwrap(), expect, "reduce p={p}");
            assert_eq!(fabric.counters().messages_sent, (p - 1) as u64);

            // Inclusive and exclusive scan.
            for exclusive in [false, true] {
                let (fabric, eps, comm) = fresh_world(p);
                let mut pairs = start_pairs(&eps, |ep, i| {
                    if exclusive {
                        let id = vec![0u64; len];
                        ep.iexscan(&comm, &inputs[i], &sum, &id, None).unwrap()
                    } else {
                        ep.iscan(&comm, &inputs[i], &sum, None).unwrap()
                    }
                });
                drive(&mut pairs, 100_000).unwrap();
                let mut acc = vec![0u64; len];
                for (i, (_, req)) in pairs.iter_mut().enumerate() {
                    let got = req.take_vec::<u64>().unwrap();
                    if exclusive {
                        assert_eq!(got, acc, "exscan p={p} rank {i}");
                        for (a, b) in acc.iter_mut().zip(&inputs[i]) {
                            *a += b;
                        }
                    } else {
                        for (a, b) in acc.iter_mut().zip(&inputs[i]) {
                            *a += b;
                        }
                        assert_eq!(got, acc, "scan p={p} rank {i}");
                    }
                }
                assert_eq!(fabric.counters().messages_sent, 2 * (p as u64 - 1));
            }

            // Gatherv.
            let (fabric, eps, comm) = fresh_world(p);
            let counts = vec![len; p];
            let mut pairs = start_pairs(&eps, |ep, i| {
                let c = (i == root).then_some(&counts[..]);
                ep.igatherv(&comm, root, &inputs[i], c, None).unwrap()
            });
            drive(&mut pairs, 100_000).unwrap();
            let expect: Vec<u64> = inputs.iter().flatten().copied().collect();
            assert_eq!(
                pairs[root].1.take_vec::<u64>().unwrap_or_default(),
                expect,
                "gatherv p={p}"
            );
            assert_eq!(fabric.counters().messages_sent, (p - 1) as u64);

            // Barrier (length-independent; run once per p).
            if len == 0 {
                let (fabric, eps, comm) = fresh_world(p);
                let mut pairs = start_pairs(&eps, |ep, _| ep.ibarrier(&comm, None).unwrap());
                drive(&mut pairs, 100_000).unwrap();
                assert_eq!(fabric.counters().messages_sent, 2 * (p as u64 - 1));
            }
        }
    }
    assert!(t0.elapsed() < Duration::from_secs(120), "criterion 2 overran");
    pass("C2 collectives oracle equivalence, exact binomial message counts (p=1..33, len 0/1/17)");
}

fn fresh_world(p: usize) -> (Fabric, Vec<Endpoint>, RangeComm) {
    let fabric = Fabric::new(p).unwrap();
    let eps = endpoints(&fabric);
    let comm = RangeComm::world(&fabric, CommMode::ContextScoped);
    (fabric, eps, comm)
}

// ---------------------------------------------------------------------------
// Criteria 3 and 5 share one instance sweep: 1000 randomized sorts with
// balance, order, multiset and message-bound checks.
// ---------------------------------------------------------------------------

struct SortSweep {
    instances: usize,
    max_spans: usize,
    recv_bound_violations: usize,
    elapsed: Duration,
}

fn driver_sort(
    fabric: &Fabric,
    inputs: &[Vec<u64>],
    cfg: &SortConfig,
) -> (Vec<Vec<u64>>, Vec<SortStats>) {
    let comm = RangeComm::world(fabric, cfg.mode);
    let mut sorters: Vec<Sorter<u64>> = (0..fabric.size())
        .map(|r| {
            let ep = fabric.endpoint(r).unwrap();
            Sorter::new(&ep, &comm, inputs[r].clone(), cfg).unwrap()
        })
        .collect();
    let mut guard = 0usize;
    loop {
        let mut done = true;
        for s in sorters.iter_mut() {
            done &= s.poll().unwrap() == SortPoll::Done;
        }
        if done {
            break;
        }
        guard += 1;
        assert!(guard < 5_000_000, "sort did not converge");
    }
    sorters.into_iter().map(|s| s.into_output()).unzip()
}

fn sort_sweep() -> &'static SortSweep {
    static SWEEP: OnceLock<SortSweep> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let t0 = Instant::now();
        let mut rng = StdRng::seed_from_u64(0xACC3_5EED);
        let mut max_spans = 0usize;
        let mut recv_bound_violations = 0usize;
        let instances = 1000usize;
        for i in 0..instances {
            let p = rng.gen_range(2..=32usize);
            let n_per = rng.gen_range(1..=64u64);
            let kind = match i % 10 {
                0 => InputKind::AllEqual,
                1 => InputKind::Sorted,
                2 => InputKind::Reversed,
                3 => InputKind::FewKeys,
                _ => InputKind::Uniform,
            };
            let inputs = gen_inputs(p, n_per, i as u64, kind);
            let cfg = SortConfig {
                pivot_mode: if i % 2 == 0 {
                    PivotMode::SampleMedian
                } else {
                    PivotMode::SingleRandom
                },
                mode: if i % 4 < 2 {
                    CommMode::ContextScoped
                } else {
                    CommMode::TagScoped
                },
                seed: 0x1000 + i as u64,
                ..Default::default()
            };
            let fabric = Fabric::new(p).unwrap();
            let (outputs, stats) = driver_sort(&fabric, &inputs, &cfg);
            // Order, multiset, final balance; intermediate balance is
            // asserted inside the engine on every exchange.
            verify_outputs(&inputs, &outputs)
                .unwrap_or_else(|e| panic!("instance {i} (p={p}, n/p={n_per}, {kind:?}): {e}"));
            assert_eq!(fabric.pending_messages(), 0, "instance {i} left mail");
            let recv_bound = (p as u64).min(n_per) as usize + 2;
            for s in &stats {
                max_spans = max_spans.max(s.max_spans_per_side);
                if s.max_recv_msgs_per_level > recv_bound {
                    recv_bound_violations += 1;
                }
            }
        }
        SortSweep {
            instances,
            max_spans,
            recv_bound_violations,
            elapsed: t0.elapsed(),
        }
    })
}

#[test]
fn c3_sorting_correctness_and_balance() {
    let sweep = sort_sweep();
    assert_eq!(sweep.instances, 1000);
    assert!(
        sweep.elapsed < Duration::from_secs(300),
        "criterion 3 overran: {:?}",
        sweep.elapsed
    );
    pass(&format!(
        "C3 sorting correctness and perfect balance (1000 instances in {:.1?})",
        sweep.elapsed
    ));
}

#[test]
fn c5_message_bounds_per_level() {
    let sweep = sort_sweep();
    assert!(
        sweep.max_spans <= 2,
        "a source posted {} spans on one side",
        sweep.max_spans
    );
    assert_eq!(
        sweep.recv_bound_violations, 0,
        "per-level receive counts exceeded min(p, n/p) + 2"
    );
    pass(&format!(
        "C5 message bounds (max {} sends per side, receive bound violations 0)",
        sweep.max_spans
    ));
}

// ---------------------------------------------------------------------------
// Criterion 4: recursion depth under single random pivots.
// ---------------------------------------------------------------------------

#[test]
fn c4_recursion_depth() {
    let t0 = Instant::now();
    let p = 64usize;
    let n_per = 16u64;
    // 20 * log_{8/7}(64) distributed levels.
    let hard = (20.0 * (64f64).ln() / (8f64 / 7.0).ln()).floor() as u32;
    let mut depths = Vec::new();
    for run in 0..100u64 {
        let inputs = gen_inputs(p, n_per, 0xDEE9 + run, InputKind::Uniform);
        let cfg = SortConfig {
            pivot_mode: PivotMode::SingleRandom,
            seed: run,
            ..Default::default()
        };
        let fabric = Fabric::new(p).unwrap();
        let (outputs, stats) = driver_sort(&fabric, &inputs, &cfg);
        verify_outputs(&inputs, &outputs).unwrap();
        depths.push(stats.iter().map(|s| s.levels).max().unwrap());
    }
    depths.sort_unstable();
    let max = *depths.last().unwrap();
    let median = depths[depths.len() / 2];
    assert!(max <= hard, "depth {max} exceeds hard bound {hard}");
    assert!(median <= 24, "median depth {median} exceeds 4*log2(64) = 24");
    assert!(t0.elapsed() < Duration::from_secs(120), "criterion 4 overran");
    pass(&format!(
        "C4 recursion depth (max {max} <= {hard}, median {median} <= 24 over 100 runs)"
    ));
}

// ---------------------------------------------------------------------------
// Criterion 6: context isolation and uniqueness over random creation trees.
// ---------------------------------------------------------------------------

#[test]
fn c6_context_isolation_and_uniqueness() {
    let t0 = Instant::now();
    for scenario in 0..200u64 {
        let mut rng = StdRng::seed_from_u64(0xC6_000 + scenario);
        let p = rng.gen_range(4..=24usize);
        let fabric = Fabric::new(p).unwrap();
        let eps = endpoints(&fabric);
        let world = RangeComm::world(&fabric, CommMode::ContextScoped);

        let mut all: Vec<RangeComm> = vec![world.clone()];
        let mut frontier: Vec<(RangeComm, u32)> = vec![(world, 0)];
        while let Some((comm, depth)) = frontier.pop() {
            if depth >= 8 || comm.size() < 4 || all.len() > 24 {
                continue;
            }
            let range_backed = matches!(comm.members(), rbc::MemberSet::Range { .. });
            match rng.gen_range(0..10) {
                // Explicit-path communicators are not range-splittable;
                // their subgroups go through the general path again.
                0..=5 if range_backed => {
                    // Range partition; half the time the boundary rank sits
                    // in both children.
                    let size = comm.size();
                    let before = fabric.counters().messages_sent;
                    let m = rng.gen_range(1..=size - 3);
                    let overlap = rng.gen_bool(0.5);
                    let left = comm.split_range(0, m).unwrap();
                    let right = comm
                        .split_range(if overlap { m } else { m + 1 }, size - 1)
                        .unwrap();
                    assert_eq!(fabric.counters().messages_sent, before, "range path sent mail");
                    frontier.push((left.clone(), depth + 1));
                    frontier.push((right.clone(), depth + 1));
                    all.push(left);
                    all.push(right);
                }
                0..=8 => {
                    // Explicit group over a random subset of the parent.
                    let size = comm.size();
                    let k = rng.gen_range(2..=size);
                    let mut locals: Vec<usize> = (0..size).collect();
                    for i in (1..locals.len()).rev() {
                        locals.swap(i, rng.gen_range(0..=i));
                    }
                    locals.truncate(k);
                    locals.sort_unstable();
                    let before = fabric.counters().messages_sent;
                    let mut pairs: Vec<(Endpoint, Request)> = locals
                        .iter()
                        .map(|&l| {
                            let base = comm.local_to_base(l).unwrap();
                            let ep = &eps[base.0];
                            let req = ep
                                .icomm_create_group(
                                    &comm,
                                    &GroupSpec::Explicit(locals.clone()),
                                    900 + scenario as usize % 50,
                                )
                                .unwrap();
                            (ep.clone(), req)
                        })
                        .collect();
                    drive(&mut pairs, 100_000).unwrap();
                    assert_eq!(
                        fabric.counters().messages_sent - before,
                        k as u64 - 1,
                        "explicit path envelope count"
                    );
                    let sub = pairs[0].1.take_comm().unwrap();
                    frontier.push((sub.clone(), depth + 1));
                    all.push(sub);
                }
                _ => {}
            }
        }

        // Pairwise-distinct context tuples, strictly.
        let mut ctxs: Vec<ContextId> = all.iter().map(|c| c.ctx()).collect();
        let count = ctxs.len();
        ctxs.sort_unstable();
        ctxs.dedup();
        assert_eq!(ctxs.len(), count, "duplicate context in scenario {scenario}");
        assert!(ctx_registry_check(all.iter()));

        // Concurrent same-tag broadcasts across every live communicator;
        // context isolation alone must keep them apart.
        let mut pairs: Vec<(Endpoint, Request)> = Vec::new();
        let mut expected: Vec<(usize, u64)> = Vec::new(); // (pair idx base, marker)
        for (ci, comm) in all.iter().enumerate() {
            let marker = 0xBEEF_0000 + ci as u64;
            for local in 0..comm.size() {
                let base = comm.local_to_base(local).unwrap();
                let ep = &eps[base.0];
                let data = if local == 0 { vec![marker] } else { vec![] };
                let req = ep.ibcast(comm, 0, data, Some(777)).unwrap();
                expected.push((pairs.len(), marker));
                pairs.push((ep.clone(), req));
            }
        }
        drive(&mut pairs, 1_000_000).unwrap();
        for (idx, marker) in expected {
            assert_eq!(
                pairs[idx].1.take_vec::<u64>().unwrap(),
                vec![marker],
                "cross-context delivery in scenario {scenario}"
            );
        }
        assert_eq!(fabric.pending_messages(), 0);
    }
    assert!(t0.elapsed() < Duration::from_secs(60), "criterion 6 overran");
    pass("C6 context isolation and uniqueness (200 creation trees, exact creation costs)");
}

// ---------------------------------------------------------------------------
// Criterion 7: wildcard receives never cross a one-rank overlap.
// ---------------------------------------------------------------------------

#[test]
fn c7_wildcard_membership_filter() {
    let p = 9usize;
    let per_sender = 1250u64; // 8 senders x 1250 = 10 000 messages
    let fabric = Fabric::new(p).unwrap();
    run_ranks(&fabric, |ep| {
        let w = RangeComm::world(ep.fabric(), CommMode::TagScoped);
        let a = w.split_range(0, 4).unwrap();
        let b = w.split_range(4, 8).unwrap();
        match ep.rank().0 {
            4 => {
                for _ in 0..(4 * per_sender) {
                    let (v, st) = ep.recv::<u64>(&a, Src::Any, 3, 2).unwrap();
                    assert_eq!(v[0], 0, "wildcard receive crossed from B into A");
                    assert!(a.contains_base(a.local_to_base(st.source).unwrap()));
                }
                for _ in 0..(4 * per_sender) {
                    let (v, st) = ep.recv::<u64>(&b, Src::Any, 3, 2).unwrap();
                    assert_eq!(v[0], 1, "wildcard receive crossed from A into B");
                    assert!(b.contains_base(b.local_to_base(st.source).unwrap()));
                }
            }
            me @ 0..=3 => {
                let dst = a.base_to_local(rbc::BaseRank(4)).unwrap();
                for i in 0..per_sender {
                    ep.send(&a, dst, 3, &[0u64, me as u64 * per_sender + i]).unwrap();
                }
            }
            me => {
                let dst = b.base_to_local(rbc::BaseRank(4)).unwrap();
                for i in 0..per_sender {
                    ep.send(&b, dst, 3, &[1u64, me as u64 * per_sender + i]).unwrap();
                }
            }
        }
    });
    assert_eq!(fabric.pending_messages(), 0);
    pass("C7 wildcard filtering (10 000 messages across a one-rank overlap, zero violations)");
}

// ---------------------------------------------------------------------------
// Criterion 8: the >= 2-rank overlap hazard is real in tag-scoped mode and
// gone in context-scoped mode.
// ---------------------------------------------------------------------------

#[test]
fn c8_overlap_hazard_and_fix() {
    // Tag-scoped: comms [0..3] and [1..4] share ranks 1..3 and the same
    // context. Rank 3 receives from base 1 in both broadcast trees; driving
    // B first makes its payload the oldest match for A's receive.
    let fabric = Fabric::new(5).unwrap();
    fabric.set_debug_checks(true);
    let eps = endpoints(&fabric);
    let w = RangeComm::world(&fabric, CommMode::TagScoped);
    let a = w.split_range(0, 3).unwrap();
    let b = w.split_range(1, 4).unwrap();
    assert_eq!(a.ctx(), b.ctx());

    let req_b_root = eps[1].ibcast(&b, 0, vec![222u64], None).unwrap();
    let mut req_a: Vec<Request> = (0..4)
        .map(|r| {
            let data = if r == 0 { vec![111u64] } else { vec![] };
            eps[r].ibcast(&a, 0, data, None).unwrap()
        })
        .collect();
    assert!(eps[3].test(&mut req_a[3]).unwrap());
    assert_eq!(
        req_a[3].take_vec::<u64>().unwrap(),
        vec![222],
        "expected the documented mis-delivery"
    );
    let violations = fabric.take_violations();
    assert!(
        violations.iter().any(|v| v.kind == ViolationKind::TagOverlap),
        "registry must flag the overlap: {violations:?}"
    );
    // Drain the rest of the scenario.
    let mut rest: Vec<(Endpoint, Request)> = Vec::new();
    for (r, req) in req_a.into_iter().enumerate().take(3) {
        rest.push((eps[r].clone(), req));
    }
    rest.push((eps[1].clone(), req_b_root));
    for r in 2..5 {
        rest.push((eps[r].clone(), eps[r].ibcast::<u64>(&b, 0, vec![], None).unwrap()));
    }
    let _ = drive(&mut rest, 100_000);

    // Context-scoped: same shape, distinct contexts, same adversarial drive
    // order; everything lands correctly and nothing is flagged.
    let fabric = Fabric::new(5).unwrap();
    fabric.set_debug_checks(true);
    let eps = endpoints(&fabric);
    let w = RangeComm::world(&fabric, CommMode::ContextScoped);
    let a = w.split_range(0, 3).unwrap();
    let b = w.split_range(1, 4).unwrap();
    assert_ne!(a.ctx(), b.ctx());

    let mut pairs: Vec<(Endpoint, Request)> = Vec::new();
    pairs.push((eps[1].clone(), eps[1].ibcast(&b, 0, vec![222u64], None).unwrap()));
    for r in 0..4 {
        let data = if r == 0 { vec![111u64] } else { vec![] };
        pairs.push((eps[r].clone(), eps[r].ibcast(&a, 0, data, None).unwrap()));
    }
    for r in 2..5 {
        pairs.push((eps[r].clone(), eps[r].ibcast::<u64>(&b, 0, vec![], None).unwrap()));
    }
    drive(&mut pairs, 100_000).unwrap();
    assert_eq!(pairs[0].1.take_vec::<u64>().unwrap(), vec![222]);
    for (_, req) in &mut pairs[1..5] {
        assert_eq!(req.take_vec::<u64>().unwrap(), vec![111]);
    }
    for (_, req) in &mut pairs[5..] {
        assert_eq!(req.take_vec::<u64>().unwrap(), vec![222]);
    }
    assert!(fabric.take_violations().is_empty());
    pass("C8 overlap hazard reproduced in tag-scoped mode (flagged) and fixed by contexts");
}

// ---------------------------------------------------------------------------
// Criterion 9: cascaded vs alternating chain splits at p = 256.
// ---------------------------------------------------------------------------

#[test]
fn c9_schedule_robustness() {
    let p = 256usize;
    let fabric = Fabric::new(p).unwrap();
    let world = RangeComm::world(&fabric, CommMode::ContextScoped);
    let groups = chain_groups(p);
    assert!(groups.len() > 80);

    let before = fabric.counters().messages_sent;
    let mut walls = [Vec::new(), Vec::new()];
    for round in 0..400 {
        for (si, schedule) in [Schedule::Cascaded, Schedule::Alternating].iter().enumerate() {
            let (wall, comms) = run_chain_range(&world, *schedule);
            assert_eq!(comms.len(), groups.len());
            std::hint::black_box(&comms);
            let _ = round;
            walls[si].push(wall.as_nanos());
        }
    }
    assert_eq!(
        fabric.counters().messages_sent,
        before,
        "range chain must send nothing"
    );
    for w in walls.iter_mut() {
        w.sort_unstable();
    }
    let med = |w: &Vec<u128>| w[w.len() / 2] as f64;
    let (c, a) = (med(&walls[0]), med(&walls[1]));
    let ratio = if c > a { c / a } else { a / c };
    assert!(
        ratio < 1.5,
        "cascaded {c:.0}ns vs alternating {a:.0}ns: ratio {ratio:.2}"
    );
    pass(&format!(
        "C9 schedule robustness (0 envelopes, cascaded/alternating ratio {ratio:.2} < 1.5)"
    ));
}

// ---------------------------------------------------------------------------
// Criterion 10: progress happens only inside test calls.
// ---------------------------------------------------------------------------

#[test]
fn c10_nonblocking_progress_contract() {
    // Rank 3 is the scan-tree root of the world communicator. While it
    // withholds test calls, nobody's scan completes; a collective among
    // ranks 0..2 on its own communicator with a distinct tag completes
    // regardless. Resuming rank 3 completes everything.
    let (_, eps, comm) = fresh_world(4);
    let sum = ReduceOp::<u64>::sum();
    let mut scans = start_pairs(&eps, |ep, i| {
        ep.iscan(&comm, &[i as u64 + 1], &sum, None).unwrap()
    });

    for _ in 0..100 {
        for (ep, req) in scans.iter_mut().take(3) {
            let _ = ep.test(req).unwrap();
        }
    }
    for (i, (_, req)) in scans.iter().enumerate() {
        assert!(!req.is_done(), "rank {i}'s scan completed without rank 3");
    }

    let sub = comm.split_range(0, 2).unwrap();
    let mut side: Vec<(Endpoint, Request)> = (0..3)
        .map(|i| {
            let data = if i == 0 { vec![9u64] } else { vec![] };
            (eps[i].clone(), eps[i].ibcast(&sub, 0, data, Some(321)).unwrap())
        })
        .collect();
    drive(&mut side, 100_000).unwrap();
    for (_, req) in side.iter_mut() {
        assert_eq!(req.take_vec::<u64>().unwrap(), vec![9]);
    }
    for (_, req) in scans.iter() {
        assert!(!req.is_done());
    }

    drive(&mut scans, 100_000).unwrap();
    let got: Vec<u64> = scans
        .iter_mut()
        .map(|(_, r)| r.take_vec::<u64>().unwrap()[0])
        .collect();
    assert_eq!(got, vec![1, 3, 6, 10]);
    pass("C10 nonblocking progress contract (withheld tests stall, resume completes)");
}

// ---------------------------------------------------------------------------
// Round-count sanity used by several criteria above.
// ---------------------------------------------------------------------------

#[test]
fn round_bounds_sanity() {
    for p in [2usize, 5, 16, 33] {
        let log = ceil_log2(p);
        let (_, eps, comm) = fresh_world(p);
        let mut pairs = start_pairs(&eps, |ep, i| {
            let data = if i == 0 { vec![1u64] } else { vec![] };
            ep.ibcast(&comm, 0, data, None).unwrap()
        });
        let sweeps = drive(&mut pairs, 100_000).unwrap();
        assert!(sweeps as u32 <= log + 2, "bcast sweeps {sweeps} at p={p}");
    }
}
