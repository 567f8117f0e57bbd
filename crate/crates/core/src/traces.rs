//! Memory-access traces: the record type, a text file format, and synthetic
//! workload generators.
//!
//! Trace files hold one record per line: `<pc-hex> <lineaddr-hex> R|W`.
//! Blank lines and lines starting with `#` are ignored.
//!
//! Every generator gives each line a fixed class (written or read-only) and
//! draws PCs from per-class pools, so a PC either always installs lines that
//! are eventually written or never does. Write-predictor accuracy therefore
//! has a known ground truth.

use crate::config::{parse_u64, ConfigError};
use crate::geometry::LineAddr;
use crate::rng::{mix64, rng_for, SimRng, Stream};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AccessKind {
    Read,
    Write,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MemAccess {
    pub pc: u64,
    pub addr: LineAddr,
    pub kind: AccessKind,
}

impl MemAccess {
    pub fn read(pc: u64, addr: u64) -> Self {
        MemAccess { pc, addr: LineAddr(addr), kind: AccessKind::Read }
    }

    pub fn write(pc: u64, addr: u64) -> Self {
        MemAccess { pc, addr: LineAddr(addr), kind: AccessKind::Write }
    }

    pub fn is_write(&self) -> bool {
        self.kind == AccessKind::Write
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("record {record}: {reason}")]
    Malformed { record: usize, reason: String },
    #[error("record {record}: address {addr} outside memory of {capacity} lines")]
    OutOfRange { record: usize, addr: LineAddr, capacity: u64 },
    #[error("invalid trace spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    /// Sequential sweep, wrapping at the footprint.
    Stream,
    /// Bursts of `locality_span` consecutive lines at random offsets.
    PageLocal,
    /// Sequential sweep where each written line is written exactly once.
    WriteOnce,
    /// A hot set re-written round-robin, interleaved with background reads.
    WriteRepeat,
    /// Uniformly random lines.
    PointerChase,
    /// Page-local reuse, streaming, and random accesses interleaved.
    Mix,
}

impl Pattern {
    pub const ALL: [Pattern; 6] = [
        Pattern::Stream,
        Pattern::PageLocal,
        Pattern::WriteOnce,
        Pattern::WriteRepeat,
        Pattern::PointerChase,
        Pattern::Mix,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Pattern::Stream => "stream",
            Pattern::PageLocal => "page_local",
            Pattern::WriteOnce => "write_once",
            Pattern::WriteRepeat => "write_repeat",
            Pattern::PointerChase => "pointer_chase",
            Pattern::Mix => "mix",
        }
    }
}

impl FromStr for Pattern {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        Pattern::ALL.into_iter().find(|p| p.name() == s).ok_or(())
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSpec {
    pub pattern: Pattern,
    pub footprint_lines: u64,
    pub access_count: u64,
    /// Fraction of lines that are written (for `WriteRepeat`, of accesses that hit the hot set).
    pub write_fraction: f64,
    /// Burst length in lines (for `WriteRepeat`, the hot-set size).
    pub locality_span: u64,
    pub seed: u64,
}

impl TraceSpec {
    pub fn new(pattern: Pattern, footprint_lines: u64, access_count: u64) -> Self {
        TraceSpec { pattern, footprint_lines, access_count, write_fraction: 0.0, locality_span: 64, seed: 1 }
    }

    pub fn write_fraction(mut self, f: f64) -> Self {
        self.write_fraction = f;
        self
    }

    pub fn span(mut self, span: u64) -> Self {
        self.locality_span = span;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        if !(0.0..=1.0).contains(&self.write_fraction) {
            return Err(TraceError::InvalidSpec(format!("write_fraction {} not in [0,1]", self.write_fraction)));
        }
        if self.locality_span == 0 || self.footprint_lines < self.locality_span {
            return Err(TraceError::InvalidSpec(format!(
                "need footprint_lines ({}) >= locality_span ({}) >= 1",
                self.footprint_lines, self.locality_span
            )));
        }
        Ok(())
    }

    /// Parses the `key = value` spec file used by the `generate` command.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut spec = TraceSpec::new(Pattern::Stream, 1 << 16, 1 << 16);
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or(ConfigError::Syntax { line })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = || ConfigError::BadValue { line, key: key.to_string(), value: value.to_string() };
            match key {
                "pattern" => spec.pattern = value.parse().map_err(|_| bad())?,
                "footprint_lines" => spec.footprint_lines = parse_u64(value).ok_or_else(bad)?,
                "access_count" => spec.access_count = parse_u64(value).ok_or_else(bad)?,
                "write_fraction" => spec.write_fraction = value.parse().map_err(|_| bad())?,
                "locality_span" => spec.locality_span = parse_u64(value).ok_or_else(bad)?,
                "seed" => spec.seed = parse_u64(value).ok_or_else(bad)?,
                _ => return Err(ConfigError::UnknownKey { line, key: key.to_string() }),
            }
        }
        spec.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(spec)
    }
}

const PC_BASE: u64 = 0x40_0000;
const PCS_PER_CLASS: u64 = 8;

/// PC for an access in sub-stream `stream` touching `addr`. Writer and
/// reader PCs never overlap; at most 64 distinct PCs are produced.
fn pc_for(stream: u64, writer: bool, addr: u64) -> u64 {
    let slot = (addr / 64) % PCS_PER_CLASS;
    PC_BASE + stream * 0x1000 + if writer { 0x800 } else { 0 } + slot * 0x10
}

/// Whether `addr` belongs to the written class for this spec.
fn is_write_line(spec: &TraceSpec, addr: u64) -> bool {
    if spec.write_fraction <= 0.0 {
        return false;
    }
    if spec.write_fraction >= 1.0 {
        return true;
    }
    let u = (mix64(addr ^ mix64(spec.seed)) >> 11) as f64 / (1u64 << 53) as f64;
    u < spec.write_fraction
}

fn classed_access(spec: &TraceSpec, stream: u64, addr: u64) -> MemAccess {
    if is_write_line(spec, addr) {
        MemAccess::write(pc_for(stream, true, addr), addr)
    } else {
        MemAccess::read(pc_for(stream, false, addr), addr)
    }
}

/// Generates the trace described by `spec`. Pure in `spec`.
pub fn generate(spec: &TraceSpec) -> Result<Vec<MemAccess>, TraceError> {
    spec.validate()?;
    let n = spec.access_count as usize;
    let mut out = Vec::with_capacity(n);
    let mut rng = rng_for(spec.seed, Stream::Trace);
    match spec.pattern {
        Pattern::Stream => {
            out.extend((0..spec.access_count).map(|i| classed_access(spec, 0, i % spec.footprint_lines)));
        }
        Pattern::PageLocal => {
            while out.len() < n {
                page_burst(spec, 0, 0, spec.footprint_lines, &mut rng, n, &mut out);
            }
        }
        Pattern::WriteOnce => {
            for i in 0..spec.access_count {
                let addr = i % spec.footprint_lines;
                let first_visit = i < spec.footprint_lines;
                if first_visit && is_write_line(spec, addr) {
                    out.push(MemAccess::write(pc_for(0, true, addr), addr));
                } else {
                    out.push(MemAccess::read(pc_for(0, false, addr), addr));
                }
            }
        }
        Pattern::WriteRepeat => write_repeat(spec, &mut rng, &mut out),
        Pattern::PointerChase => {
            for _ in 0..n {
                let addr = rng.gen_range(0..spec.footprint_lines);
                out.push(classed_access(spec, 0, addr));
            }
        }
        Pattern::Mix => mix(spec, &mut rng, &mut out),
    }
    Ok(out)
}

fn page_burst(
    spec: &TraceSpec,
    stream: u64,
    base: u64,
    len: u64,
    rng: &mut SimRng,
    limit: usize,
    out: &mut Vec<MemAccess>,
) {
    let span = spec.locality_span.min(len);
    let start = base + rng.gen_range(0..=len - span);
    for a in start..start + span {
        if out.len() == limit {
            return;
        }
        out.push(classed_access(spec, stream, a));
    }
}

fn write_repeat(spec: &TraceSpec, rng: &mut SimRng, out: &mut Vec<MemAccess>) {
    let hot = spec.locality_span;
    let stride = (spec.footprint_lines / hot).max(1);
    let is_hot = |a: u64| a.is_multiple_of(stride) && a / stride < hot;
    let mut next_hot = 0;
    let mut cursor = 0;
    for _ in 0..spec.access_count {
        if spec.write_fraction >= 1.0 || rng.gen_bool(spec.write_fraction) {
            let addr = (next_hot % hot) * stride;
            next_hot += 1;
            out.push(MemAccess::write(pc_for(0, true, addr), addr));
        } else {
            // Background reads stream over the cold lines.
            let mut addr = cursor % spec.footprint_lines;
            while is_hot(addr) && hot < spec.footprint_lines {
                cursor += 1;
                addr = cursor % spec.footprint_lines;
            }
            cursor += 1;
            out.push(MemAccess::read(pc_for(1, false, addr), addr));
        }
    }
}

fn mix(spec: &TraceSpec, rng: &mut SimRng, out: &mut Vec<MemAccess>) {
    let n = spec.access_count as usize;
    let hot_len = (spec.footprint_lines / 4).max(spec.locality_span);
    let (stream_base, stream_len) = if spec.footprint_lines > hot_len {
        (hot_len, spec.footprint_lines - hot_len)
    } else {
        (0, spec.footprint_lines)
    };
    let mut cursor = 0;
    while out.len() < n {
        let pick: f64 = rng.gen();
        if pick < 0.5 {
            page_burst(spec, 1, 0, hot_len, rng, n, out);
        } else if pick < 0.8 {
            for _ in 0..spec.locality_span {
                if out.len() == n {
                    break;
                }
                out.push(classed_access(spec, 2, stream_base + cursor % stream_len));
                cursor += 1;
            }
        } else {
            let addr = rng.gen_range(0..spec.footprint_lines);
            out.push(classed_access(spec, 3, addr));
        }
    }
}

pub fn write_trace<W: Write>(trace: &[MemAccess], mut out: W) -> io::Result<()> {
    for a in trace {
        let k = if a.is_write() { 'W' } else { 'R' };
        writeln!(out, "{:x} {:x} {}", a.pc, a.addr.0, k)?;
    }
    out.flush()
}

/// Reads a text trace, rejecting addresses at or above `memory_lines`.
pub fn read_trace<R: BufRead>(input: R, memory_lines: u64) -> Result<Vec<MemAccess>, TraceError> {
    let mut out = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let record = idx + 1;
        let line = line?;
        let body = line.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let malformed = |reason: &str| TraceError::Malformed { record, reason: reason.to_string() };
        let mut fields = body.split_whitespace();
        let (Some(pc), Some(addr), Some(kind), None) = (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(malformed("expected `<pc-hex> <lineaddr-hex> R|W`"));
        };
        let hex = |s: &str| u64::from_str_radix(s.trim_start_matches("0x"), 16);
        let pc = hex(pc).map_err(|_| malformed("bad pc"))?;
        let addr = LineAddr(hex(addr).map_err(|_| malformed("bad line address"))?);
        let kind = match kind {
            "R" | "r" => AccessKind::Read,
            "W" | "w" => AccessKind::Write,
            _ => return Err(malformed("access kind must be R or W")),
        };
        if addr.0 >= memory_lines {
            return Err(TraceError::OutOfRange { record, addr, capacity: memory_lines });
        }
        out.push(MemAccess { pc, addr, kind });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashMap;

    fn roundtrip(t: &[MemAccess]) -> Vec<MemAccess> {
        let mut buf = Vec::new();
        write_trace(t, &mut buf).unwrap();
        read_trace(buf.as_slice(), u64::MAX).unwrap()
    }

    #[test]
    fn degenerate_stream() {
        let t = generate(&TraceSpec::new(Pattern::Stream, 1000, 1000)).unwrap();
        assert_eq!(t.len(), 1000);
        for (i, a) in t.iter().enumerate() {
            assert_eq!(a.addr, LineAddr(i as u64));
            assert_eq!(a.kind, AccessKind::Read);
        }
    }

    #[test]
    fn write_once_small_footprint() {
        let t = generate(&TraceSpec::new(Pattern::WriteOnce, 64, 64).write_fraction(1.0)).unwrap();
        let mut counts: HashMap<LineAddr, usize> = HashMap::new();
        for a in &t {
            assert!(a.is_write());
            *counts.entry(a.addr).or_default() += 1;
        }
        assert_eq!(counts.len(), 64);
        assert!(counts.values().all(|&c| c == 1));
    }

    #[test]
    fn same_seed_same_bytes() {
        for p in Pattern::ALL {
            let spec = TraceSpec::new(p, 5000, 20_000).write_fraction(0.3).span(16).seed(42);
            let mut a = Vec::new();
            let mut b = Vec::new();
            write_trace(&generate(&spec).unwrap(), &mut a).unwrap();
            write_trace(&generate(&spec).unwrap(), &mut b).unwrap();
            assert_eq!(a, b, "{p}");
        }
    }

    #[test]
    fn page_local_bursts_are_sequential() {
        let spec = TraceSpec::new(Pattern::PageLocal, 100_000, 50_000).span(32).seed(3);
        let t = generate(&spec).unwrap();
        let (mut pairs, mut unit) = (0, 0);
        for burst in t.chunks(32) {
            for w in burst.windows(2) {
                pairs += 1;
                if w[1].addr.0 == w[0].addr.0 + 1 {
                    unit += 1;
                }
            }
        }
        assert!(unit as f64 >= 0.9 * pairs as f64, "{unit}/{pairs}");
    }

    #[test]
    fn writer_pcs_never_read() {
        for p in Pattern::ALL {
            let spec = TraceSpec::new(p, 4096, 30_000).write_fraction(0.4).span(16).seed(9);
            let t = generate(&spec).unwrap();
            let mut kind_of_pc: HashMap<u64, AccessKind> = HashMap::new();
            for a in &t {
                let k = *kind_of_pc.entry(a.pc).or_insert(a.kind);
                assert_eq!(k, a.kind, "{p}: pc {:#x} both reads and writes", a.pc);
            }
            assert!(kind_of_pc.len() <= 64);
        }
    }

    #[test]
    fn write_repeat_rewrites_hot_set() {
        let spec = TraceSpec::new(Pattern::WriteRepeat, 64 * 100, 100 * 50).write_fraction(1.0).span(100);
        let t = generate(&spec).unwrap();
        let mut counts: HashMap<LineAddr, usize> = HashMap::new();
        for a in &t {
            assert!(a.is_write());
            assert_eq!(a.addr.0 % 64, 0);
            *counts.entry(a.addr).or_default() += 1;
        }
        assert_eq!(counts.len(), 100);
        assert!(counts.values().all(|&c| c == 50));
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(generate(&TraceSpec::new(Pattern::Stream, 10, 10).write_fraction(1.5)).is_err());
        assert!(generate(&TraceSpec::new(Pattern::Stream, 10, 10).span(0)).is_err());
        assert!(generate(&TraceSpec::new(Pattern::Stream, 10, 10).span(11)).is_err());
    }

    #[test]
    fn empty_and_small_files() {
        assert!(read_trace("".as_bytes(), 100).unwrap().is_empty());
        let t = read_trace("400000 1 R\n400010 2 W\n\n0x400020 0x3 R\n".as_bytes(), 100).unwrap();
        assert_eq!(t, vec![MemAccess::read(0x400000, 1), MemAccess::write(0x400010, 2), MemAccess::read(0x400020, 3)]);
    }

    #[test]
    fn malformed_records_report_position() {
        match read_trace("1 1 R\n1 2 X\n".as_bytes(), 100) {
            Err(TraceError::Malformed { record: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        match read_trace("1 1 R\n1 2 R 7\n".as_bytes(), 100) {
            Err(TraceError::Malformed { record: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        match read_trace("1 ff R\n".as_bytes(), 100) {
            Err(TraceError::OutOfRange { record: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn large_generated_trace_round_trips_bytewise() {
        let spec = TraceSpec::new(Pattern::Mix, 1 << 20, 100_000).write_fraction(0.3).span(32).seed(5);
        let t = generate(&spec).unwrap();
        let mut first = Vec::new();
        write_trace(&t, &mut first).unwrap();
        let back = read_trace(first.as_slice(), 1 << 30).unwrap();
        let mut second = Vec::new();
        write_trace(&back, &mut second).unwrap();
        assert_eq!(back, t);
        assert_eq!(first, second);
    }

    #[test]
    fn spec_file_parse() {
        let s = TraceSpec::parse("pattern = write_once\nfootprint_lines = 0x1000\naccess_count = 500\nwrite_fraction = 0.5\nlocality_span = 8\nseed = 3\n").unwrap();
        assert_eq!(s, TraceSpec::new(Pattern::WriteOnce, 4096, 500).write_fraction(0.5).span(8).seed(3));
        assert!(TraceSpec::parse("pattern = zig").is_err());
    }

    proptest! {
        #[test]
        fn trace_file_round_trip(recs in proptest::collection::vec((any::<u64>(), 0u64..(1 << 30), any::<bool>()), 0..200)) {
            let t: Vec<MemAccess> = recs.into_iter()
                .map(|(pc, a, w)| if w { MemAccess::write(pc, a) } else { MemAccess::read(pc, a) })
                .collect();
            prop_assert_eq!(roundtrip(&t), t);
        }

        #[test]
        fn write_once_never_repeats_a_write(fp in 1u64..2000, n in 0u64..5000, wf in 0.0f64..=1.0, seed in any::<u64>()) {
            let spec = TraceSpec::new(Pattern::WriteOnce, fp, n).write_fraction(wf).span(1).seed(seed);
            let mut seen = std::collections::HashSet::new();
            for a in generate(&spec).unwrap() {
                if a.is_write() {
                    prop_assert!(seen.insert(a.addr));
                }
            }
        }
    }
}
