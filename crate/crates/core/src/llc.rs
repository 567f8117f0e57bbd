//! Set-associative LRU model of the on-chip L3 that fronts the DRAM cache.
//!
//! Each line carries two hints about its DRAM-cache copy: `dcp` (present)
//! and `dcd` (present and already marked dirty in the out-of-line metadata).
//! A miss reserves the victim way and reports the eviction immediately; the
//! line is installed later by [`L3::fill`] once the DRAM cache has answered.

use crate::config::L3Config;
use crate::geometry::LineAddr;
use crate::traces::{AccessKind, MemAccess};
use thiserror::Error;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct L3Line {
    pub addr: LineAddr,
    pub valid: bool,
    pub dirty: bool,
    pub dcp: bool,
    pub dcd: bool,
    pub lru: u64,
    /// PC of the access that brought the line into the L3.
    pub pc: u64,
    pub payload: u64,
    /// The DRAM cache did not hold the line when it was filled.
    pub filled_absent: bool,
    /// Write prediction made when the line was fetched from memory.
    pub prediction: Option<bool>,
}

/// A line leaving the L3, with its hint bits as they stood at eviction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Eviction {
    pub addr: LineAddr,
    pub dirty: bool,
    pub dcp: bool,
    pub dcd: bool,
    pub pc: u64,
    pub payload: u64,
    pub filled_absent: bool,
    pub prediction: Option<bool>,
}

impl Eviction {
    fn of(line: &L3Line) -> Self {
        Eviction {
            addr: line.addr,
            dirty: line.dirty,
            dcp: line.dcp,
            dcd: line.dcd,
            pc: line.pc,
            payload: line.payload,
            filled_absent: line.filled_absent,
            prediction: line.prediction,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Miss {
    pub addr: LineAddr,
    pub pc: u64,
    pub kind: AccessKind,
}

/// Events of one L3 access, in the order the DRAM cache sees them.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum L3Event {
    ReadMiss { addr: LineAddr, pc: u64 },
    WriteMiss { addr: LineAddr, pc: u64 },
    DirtyEviction(Eviction),
    CleanEviction(Eviction),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct L3Outcome {
    pub miss: Option<Miss>,
    pub eviction: Option<Eviction>,
}

impl L3Outcome {
    pub fn events(&self) -> Vec<L3Event> {
        let mut v = Vec::with_capacity(2);
        if let Some(m) = self.miss {
            v.push(match m.kind {
                AccessKind::Read => L3Event::ReadMiss { addr: m.addr, pc: m.pc },
                AccessKind::Write => L3Event::WriteMiss { addr: m.addr, pc: m.pc },
            });
        }
        if let Some(e) = self.eviction {
            v.push(if e.dirty { L3Event::DirtyEviction(e) } else { L3Event::CleanEviction(e) });
        }
        v
    }
}

/// What the DRAM cache reports when answering a miss.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Fill {
    pub present_in_l4: bool,
    /// The DRAM-cache copy is known to be marked dirty.
    pub dirty_in_l4: bool,
    pub payload: u64,
    pub prediction: Option<bool>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LlcError {
    #[error("fill for {0} with no outstanding miss")]
    UnexpectedFill(LineAddr),
    #[error("fill for {got} while the outstanding miss is for {expected}")]
    WrongFill { expected: LineAddr, got: LineAddr },
    #[error("access to {0} while a miss is outstanding")]
    MissOutstanding(LineAddr),
}

#[derive(Clone, Copy, Debug)]
struct Pending {
    miss: Miss,
    slot: usize,
    write_payload: Option<u64>,
}

#[derive(Clone, Debug)]
pub struct L3 {
    sets: usize,
    ways: usize,
    lines: Vec<L3Line>,
    clock: u64,
    pending: Option<Pending>,
}

impl L3 {
    pub fn new(cfg: &L3Config) -> Self {
        Self::with_shape(cfg.sets(), cfg.ways)
    }

    pub fn with_shape(sets: usize, ways: usize) -> Self {
        assert!(sets > 0 && ways > 0, "L3 needs at least one set and one way");
        L3 { sets, ways, lines: vec![L3Line::default(); sets * ways], clock: 0, pending: None }
    }

    fn set_range(&self, addr: LineAddr) -> std::ops::Range<usize> {
        let s = (addr.0 % self.sets as u64) as usize;
        s * self.ways..(s + 1) * self.ways
    }

    fn find(&self, addr: LineAddr) -> Option<usize> {
        self.set_range(addr).find(|&i| self.lines[i].valid && self.lines[i].addr == addr)
    }

    pub fn line(&self, addr: LineAddr) -> Option<&L3Line> {
        self.find(addr).map(|i| &self.lines[i])
    }

    /// Performs `acc`. A write stores `write_payload` into the line.
    pub fn access(&mut self, acc: &MemAccess, write_payload: u64) -> Result<L3Outcome, LlcError> {
        if self.pending.is_some() {
            return Err(LlcError::MissOutstanding(acc.addr));
        }
        self.clock += 1;
        if let Some(i) = self.find(acc.addr) {
            let line = &mut self.lines[i];
            line.lru = self.clock;
            if acc.is_write() {
                line.dirty = true;
                line.payload = write_payload;
            }
            return Ok(L3Outcome::default());
        }
        let range = self.set_range(acc.addr);
        let slot = range
            .clone()
            .find(|&i| !self.lines[i].valid)
            .unwrap_or_else(|| range.min_by_key(|&i| self.lines[i].lru).expect("sets have at least one way"));
        let victim = &mut self.lines[slot];
        let eviction = victim.valid.then(|| Eviction::of(victim));
        victim.valid = false;
        let miss = Miss { addr: acc.addr, pc: acc.pc, kind: acc.kind };
        self.pending = Some(Pending { miss, slot, write_payload: acc.is_write().then_some(write_payload) });
        Ok(L3Outcome { miss: Some(miss), eviction })
    }

    /// Completes the outstanding miss for `addr`.
    pub fn fill(&mut self, addr: LineAddr, fill: Fill) -> Result<(), LlcError> {
        let p = self.pending.ok_or(LlcError::UnexpectedFill(addr))?;
        if p.miss.addr != addr {
            return Err(LlcError::WrongFill { expected: p.miss.addr, got: addr });
        }
        self.pending = None;
        self.lines[p.slot] = L3Line {
            addr,
            valid: true,
            dirty: p.write_payload.is_some(),
            dcp: fill.present_in_l4,
            dcd: fill.present_in_l4 && fill.dirty_in_l4,
            lru: self.clock,
            pc: p.miss.pc,
            payload: p.write_payload.unwrap_or(fill.payload),
            filled_absent: !fill.present_in_l4,
            prediction: fill.prediction,
        };
        Ok(())
    }

    /// Clears the presence hints of `addr` after the DRAM cache dropped its copy.
    pub fn revoke_presence(&mut self, addr: LineAddr) {
        if let Some(i) = self.find(addr) {
            self.lines[i].dcp = false;
            self.lines[i].dcd = false;
        }
    }

    /// Removes every valid line, in set order.
    pub fn drain(&mut self) -> Vec<Eviction> {
        let mut out = Vec::new();
        for line in self.lines.iter_mut().filter(|l| l.valid) {
            out.push(Eviction::of(line));
            line.valid = false;
        }
        out
    }

    pub fn valid_lines(&self) -> impl Iterator<Item = &L3Line> {
        self.lines.iter().filter(|l| l.valid)
    }

    /// `dcd ⇒ dcp` for every valid line.
    pub fn hints_consistent(&self) -> bool {
        self.valid_lines().all(|l| !l.dcd || l.dcp)
    }
}
