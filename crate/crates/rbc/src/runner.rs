//! Helpers for driving simulated ranks.
//!
//! `run_ranks` spawns one worker thread per rank and joins them. `drive`
//! advances a set
//! of requests from a single thread by sweeping test calls round-robin, which
//! keeps multi-rank scenarios deterministic and lets tests count completion
//! rounds exactly.

use crate::error::{Error, Result};
use crate::fabric::{Endpoint, Fabric};
use crate::request::Request;

/// Spawn one worker per rank, run `f` on each, and return the results in
/// rank order. Panics in a worker propagate.
pub fn run_ranks<R, F>(fabric: &Fabric, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(Endpoint) -> R + Send + Sync,
{
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..fabric.size())
            .map(|r| {
                let ep = fabric.endpoint(r).expect("rank in range");
                let f = &f;
                std::thread::Builder::new()
                    .name(format!("rank-{r}"))
                    .stack_size(1 << 20)
                    .spawn_scoped(s, move || f(ep))
                    .expect("spawn rank worker")
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("rank worker panicked"))
            .collect()
    })
}

/// Sweep test calls over `(endpoint, request)` pairs round-robin until all
/// requests complete; returns the number of sweeps. Errors if `max_sweeps`
/// passes without completion.
pub fn drive(pairs: &mut [(Endpoint, Request)], max_sweeps: usize) -> Result<usize> {
    for sweep in 1..=max_sweeps {
        let mut all = true;
        for (ep, req) in pairs.iter_mut() {
            all &= ep.test(req)?;
        }
        if all {
            return Ok(sweep);
        }
    }
    Err(Error::Protocol(format!(
        "requests did not complete within {max_sweeps} sweeps"
    )))
}
