//! Benchmark and verification harness for the communicator layer and the
//! sorter: runs desk-scale measurements, verifies every run, and emits CSV.

pub mod bench;
pub mod record;

pub use bench::{
    bench_collective, bench_sort, bench_split, chain_groups, gen_inputs, run_chain_group,
    run_chain_range, run_sort_threaded, verify_outputs, CollOp, ImplKind, InputKind,
};
pub use record::{emit_csv, parse_csv, render_csv, BenchRecord, CSV_HEADER};
