#![allow(dead_code)]

//! Shared helpers for integration tests: fabric setup, a deterministic
//! single-threaded request driver, and sequential oracles for the
//! collectives.

use rbc::{CommMode, Endpoint, Fabric, RangeComm, Request, Result};

pub fn world(p: usize, mode: CommMode) -> (Fabric, Vec<Endpoint>, RangeComm) {
    let fabric = Fabric::new(p).unwrap();
    let eps = (0..p).map(|r| fabric.endpoint(r).unwrap()).collect();
    let comm = RangeComm::world(&fabric, mode);
    (fabric, eps, comm)
}

/// Start one request per endpoint and pair them up for driving.
pub fn start_all(
    eps: &[Endpoint],
    mut f: impl FnMut(&Endpoint, usize) -> Result<Request>,
) -> Vec<(Endpoint, Request)> {
    eps.iter()
        .enumerate()
        .map(|(i, ep)| (ep.clone(), f(ep, i).unwrap()))
        .collect()
}

pub fn drive_all(pairs: &mut [(Endpoint, Request)]) -> usize {
    rbc::runner::drive(pairs, 100_000).unwrap()
}

// --- sequential oracles ----------------------------------------------------

pub fn oracle_fold(inputs: &[Vec<u64>], f: impl Fn(u64, u64) -> u64) -> Vec<u64> {
    let mut acc = inputs[0].clone();
    for v in &inputs[1..] {
        for (a, b) in acc.iter_mut().zip(v.iter()) {
            *a = f(*a, *b);
        }
    }
    acc
}

pub fn oracle_scan_inclusive(inputs: &[Vec<u64>], f: impl Fn(u64, u64) -> u64) -> Vec<Vec<u64>> {
    let mut out = Vec::with_capacity(inputs.len());
    let mut acc: Option<Vec<u64>> = None;
    for v in inputs {
        let next = match &acc {
            None => v.clone(),
            Some(a) => a
                .iter()
                .zip(v.iter())
                .map(|(x, y)| f(*x, *y))
                .collect(),
        };
        out.push(next.clone());
        acc = Some(next);
    }
    out
}

pub fn oracle_scan_exclusive(
    inputs: &[Vec<u64>],
    identity: &[u64],
    f: impl Fn(u64, u64) -> u64,
) -> Vec<Vec<u64>> {
    let mut out = Vec::with_capacity(inputs.len());
    let mut acc = identity.to_vec();
    for v in inputs {
        out.push(acc.clone());
        acc = acc.iter().zip(v.iter()).map(|(x, y)| f(*x, *y)).collect();
    }
    out
}

pub fn oracle_gatherv(inputs: &[Vec<u64>]) -> Vec<u64> {
    inputs.iter().flatten().copied().collect()
}

/// Deterministic per-rank input vectors.
pub fn rank_input(rank: usize, len: usize) -> Vec<u64> {
    (0..len)
        .map(|i| (rank as u64 + 1) * 1_000 + i as u64)
        .collect()
}

// Affine maps x -> m*x + a over wrapping u32 arithmetic, packed into a u64 as
// (m << 32) | a. Composition is associative but not commutative, which makes
// it the right probe for rank-order preservation.

pub fn affine_pack(m: u32, a: u32) -> u64 {
    ((m as u64) << 32) | a as u64
}

/// `compose(g, h)` = apply `g` first, then `h`.
pub fn affine_compose(g: u64, h: u64) -> u64 {
    let (mg, ag) = ((g >> 32) as u32, g as u32);
    let (mh, ah) = ((h >> 32) as u32, h as u32);
    let m = mg.wrapping_mul(mh);
    let a = ag.wrapping_mul(mh).wrapping_add(ah);
    affine_pack(m, a)
}

pub fn affine_input(rank: usize, len: usize) -> Vec<u64> {
    (0..len)
        .map(|i| affine_pack(2 * rank as u32 + 3, 7 * rank as u32 + i as u32 + 1))
        .collect()
}
