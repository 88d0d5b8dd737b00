//! Pure per-level arithmetic: capacity walks, group splitting with boundary
//! (janus) ranks, greedy span assignment, partitioning and quickselect.
//!
//! Everything here is local computation over small vectors; the only group
//! state it consumes is the capacity vector a task carries.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// Comparator used against the pivot; levels alternate to keep duplicate
/// keys moving to alternating sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PivotCmp {
    /// Small side takes keys strictly below the pivot.
    Lt,
    /// Small side takes keys at or below the pivot.
    Le,
}

pub fn level_cmp(level: u32) -> PivotCmp {
    if level % 2 == 0 {
        PivotCmp::Lt
    } else {
        PivotCmp::Le
    }
}

/// Stable two-way partition by the pivot under the given comparator.
pub fn partition_stable<K: Ord + Copy>(elems: &[K], pivot: &K, cmp: PivotCmp) -> (Vec<K>, Vec<K>) {
    let mut small = Vec::new();
    let mut large = Vec::new();
    for e in elems {
        let goes_small = match cmp {
            PivotCmp::Lt => e < pivot,
            PivotCmp::Le => e <= pivot,
        };
        if goes_small {
            small.push(*e);
        } else {
            large.push(*e);
        }
    }
    (small, large)
}

/// Walk a counts vector to the owner of global position `idx`.
/// Returns (owner index, offset within the owner).
pub fn locate_global(counts: &[u64], idx: u64) -> (usize, u64) {
    let mut cum = 0u64;
    for (i, &c) in counts.iter().enumerate() {
        if idx < cum + c {
            return (i, idx - cum);
        }
        cum += c;
    }
    panic!("global index {idx} out of range for total {cum}");
}

/// Boundary rank straddling the two subgroups, with its split capacities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Janus {
    pub local: usize,
    pub small_part: u64,
    pub large_part: u64,
}

/// Result of splitting a group's capacity vector at `s_total`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupSplit {
    pub left_last: usize,
    pub right_first: usize,
    pub janus: Option<Janus>,
    /// Capacities of the left subgroup (locals 0..=left_last).
    pub left_caps: Vec<u64>,
    /// Capacities of the right subgroup (locals right_first..).
    pub right_caps: Vec<u64>,
    pub s_total: u64,
    pub g_total: u64,
}

/// Split a group so the left subgroup's capacities absorb exactly `s_total`
/// elements. If `s_total` lands on a rank boundary the subgroups are
/// disjoint; otherwise the boundary rank joins both with split capacities
/// summing to its full capacity.
pub fn split_groups(caps: &[u64], s_total: u64) -> GroupSplit {
    let total: u64 = caps.iter().sum();
    assert!(caps.len() >= 2, "split needs at least two ranks");
    assert!(
        s_total > 0 && s_total < total,
        "degenerate split: {s_total} of {total}"
    );
    let mut cum = 0u64;
    for (i, &c) in caps.iter().enumerate() {
        if cum + c >= s_total {
            return if cum + c == s_total {
                GroupSplit {
                    left_last: i,
                    right_first: i + 1,
                    janus: None,
                    left_caps: caps[..=i].to_vec(),
                    right_caps: caps[i + 1..].to_vec(),
                    s_total,
                    g_total: total - s_total,
                }
            } else {
                let small_part = s_total - cum;
                let large_part = c - small_part;
                let mut left_caps = caps[..=i].to_vec();
                *left_caps.last_mut().unwrap() = small_part;
                let mut right_caps = caps[i..].to_vec();
                right_caps[0] = large_part;
                GroupSplit {
                    left_last: i,
                    right_first: i,
                    janus: Some(Janus {
                        local: i,
                        small_part,
                        large_part,
                    }),
                    left_caps,
                    right_caps,
                    s_total,
                    g_total: total - s_total,
                }
            };
        }
        cum += c;
    }
    unreachable!("cumulative capacity never reached s_total");
}

/// One outgoing message: `len` elements starting at `offset` of the sender's
/// side vector, addressed to parent-local rank `target`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub target: usize,
    pub offset: u64,
    pub len: u64,
}

/// Greedy assignment of my side elements (occupying side positions
/// `prefix..prefix+count`) onto target capacities filled in rank order.
/// `first_target` is the parent-local rank of `target_caps[0]`.
pub fn greedy_spans(
    target_caps: &[u64],
    first_target: usize,
    prefix: u64,
    count: u64,
) -> Vec<Span> {
    let mut spans = Vec::new();
    if count == 0 {
        return spans;
    }
    let lo = prefix;
    let hi = prefix + count;
    let mut cum = 0u64;
    for (t, &cap) in target_caps.iter().enumerate() {
        let t_lo = cum;
        let t_hi = cum + cap;
        cum = t_hi;
        if t_hi <= lo {
            continue;
        }
        if t_lo >= hi {
            break;
        }
        let s_lo = lo.max(t_lo);
        let s_hi = hi.min(t_hi);
        if s_hi > s_lo {
            spans.push(Span {
                target: first_target + t,
                offset: s_lo - prefix,
                len: s_hi - s_lo,
            });
        }
    }
    debug_assert_eq!(spans.iter().map(|s| s.len).sum::<u64>(), count);
    spans
}

/// Split `elems` into (k smallest, the rest), unordered within each side,
/// by repeated three-way partitioning around random pivots.
pub fn quickselect_k_smallest<K: Ord + Copy>(
    elems: &[K],
    k: usize,
    rng: &mut StdRng,
) -> (Vec<K>, Vec<K>) {
    assert!(k <= elems.len(), "k={k} out of range for {}", elems.len());
    let mut lows: Vec<K> = Vec::with_capacity(k);
    let mut highs: Vec<K> = Vec::with_capacity(elems.len() - k);
    let mut work: Vec<K> = elems.to_vec();
    let mut need = k;
    loop {
        if need == 0 {
            highs.extend(work);
            break;
        }
        if need == work.len() {
            lows.extend(work);
            break;
        }
        let pivot = work[rng.gen_range(0..work.len())];
        let mut lt = Vec::new();
        let mut eq = Vec::new();
        let mut gt = Vec::new();
        for x in work {
            match x.cmp(&pivot) {
                std::cmp::Ordering::Less => lt.push(x),
                std::cmp::Ordering::Equal => eq.push(x),
                std::cmp::Ordering::Greater => gt.push(x),
            }
        }
        if need < lt.len() {
            highs.extend(eq);
            highs.extend(gt);
            work = lt;
        } else if need <= lt.len() + eq.len() {
            let from_eq = need - lt.len();
            lows.extend(lt);
            lows.extend(eq.drain(..from_eq));
            highs.extend(eq);
            highs.extend(gt);
            break;
        } else {
            need -= lt.len() + eq.len();
            lows.extend(lt);
            lows.extend(eq);
            work = gt;
        }
    }
    (lows, highs)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Deterministic RNG shared by all members of a task at one level: every
/// rank mixes the same (seed, task offset, level, attempt, salt) fields.
pub fn level_rng(seed: u64, task_offset: u64, level: u32, attempt: u32, salt: u64) -> StdRng {
    let mut h = splitmix64(seed ^ 0xA076_1D64_78BD_642F);
    h = splitmix64(h ^ task_offset);
    h = splitmix64(h ^ (level as u64) << 32 ^ attempt as u64);
    h = splitmix64(h ^ salt);
    StdRng::seed_from_u64(h)
}

pub const SALT_PIVOT: u64 = 0x01;
pub const SALT_SELECT: u64 = 0x02;
