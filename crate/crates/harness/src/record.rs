//! Benchmark records and their CSV form.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

pub const CSV_HEADER: &str = "bench,p,n_per_p,mode,repetition,wall_ns,messages,bytes,depth";

/// One benchmark repetition. `depth` is set for sort runs only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchRecord {
    pub bench: String,
    pub p: usize,
    pub n_per_p: u64,
    pub mode: String,
    pub repetition: u32,
    pub wall_ns: u128,
    pub messages: u64,
    pub bytes: u64,
    pub depth: Option<u32>,
}

pub fn render_csv(records: &[BenchRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        let depth = r.depth.map(|d| d.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.bench, r.p, r.n_per_p, r.mode, r.repetition, r.wall_ns, r.messages, r.bytes, depth
        )
        .expect("write to string");
    }
    out
}

/// Write records to `path`, header first, one line per record, UTF-8.
pub fn emit_csv(records: &[BenchRecord], path: &Path) -> io::Result<()> {
    fs::write(path, render_csv(records))
}

/// Parse the output of [`render_csv`]; used by round-trip tests.
pub fn parse_csv(text: &str) -> Result<Vec<BenchRecord>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => return Err(format!("bad header: {other:?}")),
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(format!("line {}: {} fields", i + 2, fields.len()));
        }
        let num = |s: &str, what: &str| -> Result<u64, String> {
            s.parse::<u64>().map_err(|e| format!("line {}: {what}: {e}", i + 2))
        };
        out.push(BenchRecord {
            bench: fields[0].to_string(),
            p: num(fields[1], "p")? as usize,
            n_per_p: num(fields[2], "n_per_p")?,
            mode: fields[3].to_string(),
            repetition: num(fields[4], "repetition")? as u32,
            wall_ns: fields[5]
                .parse::<u128>()
                .map_err(|e| format!("line {}: wall_ns: {e}", i + 2))?,
            messages: num(fields[6], "messages")?,
            bytes: num(fields[7], "bytes")?,
            depth: if fields[8].is_empty() {
                None
            } else {
                Some(num(fields[8], "depth")? as u32)
            },
        });
    }
    Ok(out)
}
