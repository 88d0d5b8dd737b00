use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use jquick::{PivotMode, Schedule};
use rbc::CommMode;
use rbc_harness::{bench_collective, bench_sort, bench_split, emit_csv, render_csv, CollOp, ImplKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BenchArg {
    Split,
    Collective,
    Sort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Tag,
    Ctx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScheduleArg {
    Cascaded,
    Alternating,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ImplArg {
    Range,
    Group,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OpArg {
    Bcast,
    Reduce,
    Scan,
    Gatherv,
    Barrier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PivotArg {
    Single,
    Median,
}

/// Desk-scale benchmarks over the simulated fabric. Every sort run is
/// verified; any verification failure exits nonzero.
#[derive(Parser, Debug)]
#[command(name = "rbc-harness", version, about)]
struct Args {
    /// Benchmark family to run.
    #[arg(long, value_enum)]
    bench: BenchArg,

    /// Number of simulated ranks.
    #[arg(long, default_value_t = 16)]
    p: usize,

    /// Elements per rank (collective payload length / sort input size).
    #[arg(long = "n-per-p", default_value_t = 64)]
    n_per_p: u64,

    /// Communicator mode: tag-scoped or context-scoped.
    #[arg(long, value_enum, default_value_t = ModeArg::Ctx)]
    mode: ModeArg,

    /// Creation order for ranks sitting in two overlapping groups.
    #[arg(long, value_enum, default_value_t = ScheduleArg::Alternating)]
    schedule: ScheduleArg,

    /// Communicator creation flavor: local range splits or the general
    /// leader-broadcast path.
    #[arg(long = "impl", value_enum, default_value_t = ImplArg::Range)]
    impl_kind: ImplArg,

    /// Collective operation for --bench collective.
    #[arg(long, value_enum, default_value_t = OpArg::Bcast)]
    op: OpArg,

    /// Pivot mode for --bench sort.
    #[arg(long, value_enum, default_value_t = PivotArg::Median)]
    pivot: PivotArg,

    /// Repetitions; 0 picks the default (5 for microbenchmarks, 3 for sorts).
    #[arg(long, default_value_t = 0)]
    reps: u32,

    #[arg(long, default_value_t = 1)]
    seed: u64,

    /// Write records to this file (CSV also goes to stdout).
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mode = match args.mode {
        ModeArg::Tag => CommMode::TagScoped,
        ModeArg::Ctx => CommMode::ContextScoped,
    };
    let schedule = match args.schedule {
        ScheduleArg::Cascaded => Schedule::Cascaded,
        ScheduleArg::Alternating => Schedule::Alternating,
    };
    let impl_kind = match args.impl_kind {
        ImplArg::Range => ImplKind::RangeLocal,
        ImplArg::Group => ImplKind::ExplicitGroup,
    };
    let op = match args.op {
        OpArg::Bcast => CollOp::Bcast,
        OpArg::Reduce => CollOp::Reduce,
        OpArg::Scan => CollOp::Scan,
        OpArg::Gatherv => CollOp::Gatherv,
        OpArg::Barrier => CollOp::Barrier,
    };
    let pivot = match args.pivot {
        PivotArg::Single => PivotMode::SingleRandom,
        PivotArg::Median => PivotMode::SampleMedian,
    };

    let records = match args.bench {
        BenchArg::Split => {
            let reps = if args.reps == 0 { 5 } else { args.reps };
            bench_split(args.p, schedule, impl_kind, reps, args.seed)
        }
        BenchArg::Collective => {
            let reps = if args.reps == 0 { 5 } else { args.reps };
            bench_collective(args.p, op, args.n_per_p, mode, impl_kind, reps, args.seed)
        }
        BenchArg::Sort => {
            let reps = if args.reps == 0 { 3 } else { args.reps };
            match bench_sort(args.p, args.n_per_p, mode, schedule, pivot, reps, args.seed) {
                Ok(records) => records,
                Err(diag) => {
                    eprintln!("verification failed: {diag}");
                    return ExitCode::FAILURE;
                }
            }
        }
    };

    print!("{}", render_csv(&records));
    if let Some(path) = &args.csv {
        if let Err(e) = emit_csv(&records, path) {
            eprintln!("cannot write {}: {e}", path.display());
            return ExitCode::FAILURE;
        }
    }
    ExitCode::SUCCESS
}
