use rbc::CommMode;

/// How the per-level pivot is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PivotMode {
    /// One uniformly random element of the group, broadcast by its owner.
    SingleRandom,
    /// Median of a random sample set, gathered at the group's first rank
    /// and broadcast.
    SampleMedian,
}

/// Order in which a rank sitting on a group boundary creates and advances
/// its two subgroups.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    /// Boundary ranks always take the left group first.
    Cascaded,
    /// Every other boundary rank takes the left group first.
    Alternating,
}

/// Sorter configuration.
#[derive(Debug, Clone)]
pub struct SortConfig {
    pub pivot_mode: PivotMode,
    /// Sample-count constants: the sample set size is
    /// `max(log_factor * ceil(log2 p), frac * n/p, min)`, adjusted to be odd.
    pub sample_log_factor: usize,
    pub sample_frac: f64,
    pub sample_min: usize,
    pub seed: u64,
    pub mode: CommMode,
    pub schedule: Schedule,
}

impl Default for SortConfig {
    fn default() -> Self {
        SortConfig {
            pivot_mode: PivotMode::SampleMedian,
            sample_log_factor: 1,
            sample_frac: 0.0,
            sample_min: 3,
            seed: 0x5EED_1DEA,
            mode: CommMode::ContextScoped,
            schedule: Schedule::Alternating,
        }
    }
}

impl SortConfig {
    pub fn single_random(seed: u64) -> Self {
        SortConfig {
            pivot_mode: PivotMode::SingleRandom,
            seed,
            ..Default::default()
        }
    }

    /// Number of pivot samples for a group of `p` ranks holding about
    /// `per_rank` elements each; always odd so the median is unique.
    pub fn sample_count(&self, p: usize, per_rank: u64) -> usize {
        let by_log = self.sample_log_factor * rbc::coll::ceil_log2(p) as usize;
        let by_frac = (self.sample_frac * per_rank as f64).ceil() as usize;
        let n = by_log.max(by_frac).max(self.sample_min).max(1);
        if n % 2 == 0 {
            n + 1
        } else {
            n
        }
    }
}
