//! Concurrency-model tests: every rank is a real worker thread using the
//! blocking API.

mod common;

use common::*;
use rbc::runner::run_ranks;
use rbc::{CommMode, RangeComm, ReduceOp, Src};

#[test]
fn threaded_blocking_collectives() {
    let (fabric, _, _) = world(16, CommMode::ContextScoped);
    let op = ReduceOp::<u64>::sum();
    let results = run_ranks(&fabric, |ep| {
        let comm = RangeComm::world(ep.fabric(), CommMode::ContextScoped);
        let me = comm.base_to_local(ep.rank()).unwrap() as u64;

        let data = if me == 0 { vec![41u64, 1] } else { vec![] };
        let bc = ep.bcast(&comm, 0, data).unwrap();

        let sum = ep.reduce(&comm, 3, &[me], &op).unwrap();
        let prefix = ep.exscan(&comm, &[me], &op, &[0]).unwrap();
        ep.barrier(&comm).unwrap();
        (bc, sum, prefix)
    });
    for (r, (bc, sum, prefix)) in results.iter().enumerate() {
        assert_eq!(*bc, vec![41, 1]);
        assert_eq!(*prefix, vec![(0..r as u64).sum::<u64>()]);
        if r == 3 {
            assert_eq!(sum.as_deref(), Some(&[120u64][..]));
        } else {
            assert!(sum.is_none());
        }
    }
    assert_eq!(fabric.pending_messages(), 0);
}

#[test]
fn threaded_ring_with_blocking_p2p() {
    let p = 12;
    let (fabric, _, _) = world(p, CommMode::ContextScoped);
    let results = run_ranks(&fabric, |ep| {
        let comm = RangeComm::world(ep.fabric(), CommMode::ContextScoped);
        let me = comm.base_to_local(ep.rank()).unwrap();
        let next = (me + 1) % p;
        ep.send(&comm, next, 8, &[me as u64]).unwrap();
        let (data, status) = ep.recv::<u64>(&comm, Src::Any, 8, 1).unwrap();
        (data[0], status.source)
    });
    for (r, (value, source)) in results.iter().enumerate() {
        let prev = (r + p - 1) % p;
        assert_eq!(*value, prev as u64);
        assert_eq!(*source, prev);
    }
    assert_eq!(fabric.pending_messages(), 0);
}

#[test]
fn threaded_wildcard_filter_one_rank_overlap() {
    // Comms A = [0..4] and B = [4..8] share exactly rank 4 and, in tag-scoped
    // mode, the same context and the same tag. Rank 4 receives with the
    // wildcard on each communicator; the membership filter must never hand it
    // a message across the boundary.
    let p = 9;
    let per_sender = 20u64;
    let (fabric, _, _) = world(p, CommMode::TagScoped);
    run_ranks(&fabric, |ep| {
        let w = RangeComm::world(ep.fabric(), CommMode::TagScoped);
        let a = w.split_range(0, 4).unwrap();
        let b = w.split_range(4, 8).unwrap();
        let me = ep.rank().0;
        match me {
            4 => {
                let mut got_a = Vec::new();
                let mut got_b = Vec::new();
                for _ in 0..(4 * per_sender) {
                    let (v, st) = ep.recv::<u64>(&a, Src::Any, 3, 2).unwrap();
                    // Marker byte 0 identifies traffic addressed through A.
                    assert_eq!(v[0], 0, "A-side receive pulled a B message");
                    let src_base = a.local_to_base(st.source).unwrap();
                    assert!(a.contains_base(src_base));
                    got_a.push(v[1]);
                }
                for _ in 0..(4 * per_sender) {
                    let (v, st) = ep.recv::<u64>(&b, Src::Any, 3, 2).unwrap();
                    assert_eq!(v[0], 1, "B-side receive pulled an A message");
                    let src_base = b.local_to_base(st.source).unwrap();
                    assert!(b.contains_base(src_base));
                    got_b.push(v[1]);
                }
                assert_eq!(got_a.len() as u64, 4 * per_sender);
                assert_eq!(got_b.len() as u64, 4 * per_sender);
            }
            0..=3 => {
                let dst = a.base_to_local(rbc::BaseRank(4)).unwrap();
                for i in 0..per_sender {
                    ep.send(&a, dst, 3, &[0u64, i]).unwrap();
                }
            }
            _ => {
                let dst = b.base_to_local(rbc::BaseRank(4)).unwrap();
                for i in 0..per_sender {
                    ep.send(&b, dst, 3, &[1u64, i]).unwrap();
                }
            }
        }
    });
    assert_eq!(fabric.pending_messages(), 0);
}

#[test]
fn threaded_sibling_broadcasts_from_sample_usage() {
    // The classic split-then-broadcast pattern: both halves broadcast from
    // their first rank concurrently, communicators created locally with no
    // synchronization.
    let p = 16;
    let (fabric, _, _) = world(p, CommMode::ContextScoped);
    let results = run_ranks(&fabric, |ep| {
        let w = RangeComm::world(ep.fabric(), CommMode::ContextScoped);
        let me = ep.rank().0;
        let half = if me < p / 2 {
            w.split_range(0, p / 2 - 1).unwrap()
        } else {
            w.split_range(p / 2, p - 1).unwrap()
        };
        let data = if half.base_to_local(ep.rank()).unwrap() == 0 {
            vec![me as u64]
        } else {
            vec![]
        };
        ep.bcast(&half, 0, data).unwrap()
    });
    for (r, v) in results.iter().enumerate() {
        let expect = if r < p / 2 { 0 } else { p as u64 / 2 };
        assert_eq!(*v, vec![expect]);
    }
}
