//! Micro-trace conformance suite: drives single controller operations from
//! hand-built states and compares per-operation transfer counts with the
//! reference cost model.

use crate::config::{Organization, PolicyConfig};
use crate::geometry::LineAddr;
use crate::ledger::{Category, Device, Transfer};
use crate::llc::{Eviction, Fill};
use crate::policies::Controller;
use std::fmt;

const CACHE_LINES: u64 = 256;
const MEMORY_LINES: u64 = 4096;

/// Line in set 5 with tag 0, and a line with tag 1 that conflicts with it.
const A: LineAddr = LineAddr(5);
const B: LineAddr = LineAddr(5 + CACHE_LINES);

/// Untrained PC: the hit/miss predictor says hit.
const PC_HIT: u64 = 0x40_0000;
/// PC trained to predict miss.
const PC_MISS: u64 = 0x40_0100;
/// PC the write predictor has learned installs lines that get written.
const PC_WRITER: u64 = 0x40_0200;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CaseResult {
    pub name: &'static str,
    pub expected: u64,
    pub actual: u64,
}

impl CaseResult {
    pub fn passed(&self) -> bool {
        self.expected == self.actual
    }
}

impl fmt::Display for CaseResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed() { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: expected {} got {}", self.name, self.expected, self.actual)
    }
}

struct Bench {
    ctrl: Controller,
    log: Vec<Transfer>,
}

impl Bench {
    fn new(cfg: PolicyConfig) -> Self {
        let cfg = cfg.with_geometry(CACHE_LINES, MEMORY_LINES);
        let mut ctrl = Controller::new(&cfg);
        ctrl.hit_miss_predictor_mut().set_counter(PC_MISS, 0);
        ctrl.write_predictor_mut().train_pc(PC_WRITER, true);
        Bench { ctrl, log: Vec::new() }
    }

    fn read(&mut self, addr: LineAddr, pc: u64) -> Fill {
        self.ctrl.read_miss(addr, pc, &mut self.log)
    }

    /// Dirty L3 eviction of a line filled with `fill` and written since.
    fn writeback(&mut self, addr: LineAddr, fill: Fill) {
        let ev = Eviction {
            addr,
            dirty: true,
            dcp: fill.present_in_l4,
            dcd: fill.present_in_l4 && fill.dirty_in_l4,
            pc: PC_HIT,
            payload: 0xd1d1,
            filled_absent: !fill.present_in_l4,
            prediction: fill.prediction,
        };
        self.ctrl.dirty_eviction(&ev, &mut self.log);
    }

    fn evict_metadata(&mut self) {
        self.ctrl.evict_metadata_cache(&mut self.log);
    }

    fn reset_log(&mut self) {
        self.log.clear();
    }

    fn count(&self, c: Category) -> u64 {
        self.log.iter().filter(|t| t.category == c).count() as u64
    }

    /// DRAM-cache transfers of the lookup itself: everything on the DRAM
    /// device except the install and the tag write that accompanies it.
    fn lookup_cost(&self) -> u64 {
        self.log
            .iter()
            .filter(|t| t.device == Device::Dram && !matches!(t.category, Category::Install | Category::TocUpdate))
            .count() as u64
    }

    fn total(&self) -> u64 {
        self.log.len() as u64
    }
}

fn case(name: &'static str, expected: u64, actual: u64) -> CaseResult {
    CaseResult { name, expected, actual }
}

/// Measures the three lookup outcomes for `org`: hit, miss over a clean
/// victim, miss over a dirty victim. `cold_metadata` empties the metadata
/// cache right before the measured lookup.
fn lookup_cases(org: Organization, cold_metadata: bool) -> [(u64, u64, u64); 3] {
    let measure = |victim_dirty: bool, target: LineAddr, pc: u64| {
        let mut b = Bench::new(PolicyConfig::new(org));
        let f = b.read(A, PC_HIT);
        if victim_dirty {
            b.writeback(A, f);
        }
        if cold_metadata {
            b.evict_metadata();
        }
        b.reset_log();
        b.read(target, pc);
        (b.lookup_cost(), b.count(Category::XpointWrite), b.count(Category::MissProbe))
    };
    [measure(false, A, PC_HIT), measure(false, B, PC_MISS), measure(true, B, PC_MISS)]
}

/// Runs every conformance case.
pub fn run_suite() -> Vec<CaseResult> {
    let mut out = Vec::new();

    let [hit, clean, dirty] = lookup_cases(Organization::IdealSram, false);
    out.push(case("sram hit: cache transfers", 1, hit.0));
    out.push(case("sram miss, clean victim: cache transfers", 0, clean.0));
    out.push(case("sram miss, dirty victim: cache transfers", 1, dirty.0));
    out.push(case("sram miss, dirty victim: memory writes", 1, dirty.1));

    // The untrained PC predicts hit, so TIC misses serialize probe then memory.
    let tic = |victim_dirty: bool, target: LineAddr| {
        let mut b = Bench::new(PolicyConfig::new(Organization::Tic));
        let f = b.read(A, PC_HIT);
        if victim_dirty {
            b.writeback(A, f);
        }
        b.reset_log();
        b.read(target, PC_HIT);
        (b.lookup_cost(), b.count(Category::XpointWrite), b.count(Category::MissProbe))
    };
    let (hit, clean, dirty) = (tic(false, A), tic(false, B), tic(true, B));
    out.push(case("tic hit: cache transfers", 1, hit.0));
    out.push(case("tic miss, clean victim: cache transfers", 1, clean.0));
    out.push(case("tic miss, clean victim: probes", 1, clean.2));
    out.push(case("tic miss, dirty victim: cache transfers", 1, dirty.0));
    out.push(case("tic miss, dirty victim: probes", 1, dirty.2));
    out.push(case("tic miss, dirty victim: memory writes", 1, dirty.1));

    let [hit, clean, dirty] = lookup_cases(Organization::Toc, false);
    out.push(case("toc hit, metadata cached: cache transfers", 1, hit.0));
    out.push(case("toc miss, clean victim, metadata cached: cache transfers", 0, clean.0));
    out.push(case("toc miss, dirty victim, metadata cached: cache transfers", 1, dirty.0));
    let [hit, clean, dirty] = lookup_cases(Organization::Toc, true);
    out.push(case("toc hit, metadata miss: cache transfers", 2, hit.0));
    out.push(case("toc miss, clean victim, metadata miss: cache transfers", 1, clean.0));
    out.push(case("toc miss, dirty victim, metadata miss: cache transfers", 2, dirty.0));

    out.extend(write_path_cases());
    out.extend(miss_install_cases());
    out
}

fn write_path_cost(b: &Bench) -> u64 {
    b.count(Category::Install) + b.count(Category::CacheWrite) + b.count(Category::DirtyBitUpdate)
}

/// Install, L3 writeback, then dirty-bit maintenance with the metadata line
/// out of the metadata cache at writeback time and evicted afterwards.
fn write_path_cases() -> Vec<CaseResult> {
    let mut out = Vec::new();

    let mut b = Bench::new(PolicyConfig::new(Organization::TicToc));
    let f = b.read(A, PC_MISS);
    b.evict_metadata();
    b.writeback(A, f);
    b.evict_metadata();
    out.push(case("tictoc write path: install + write + dirty-bit read + dirty-bit write", 4, write_path_cost(&b)));
    out.push(case("tictoc write path: dirty-bit transfers", 2, b.count(Category::DirtyBitUpdate)));

    let mut b =
        Bench::new(PolicyConfig { dcd_enabled: true, pdm_enabled: true, ..PolicyConfig::new(Organization::TicToc) });
    let f = b.read(A, PC_WRITER);
    b.evict_metadata();
    b.writeback(A, f);
    b.evict_metadata();
    out.push(case("tictoc+dcd+pdm write path, predicted written", 2, write_path_cost(&b)));
    out.push(case("tictoc+dcd+pdm write path: dirty-bit transfers", 0, b.count(Category::DirtyBitUpdate)));

    // A line re-read from the DRAM cache after it was dirtied comes back with dcd set.
    let mut b = Bench::new(PolicyConfig { dcd_enabled: true, ..PolicyConfig::new(Organization::TicToc) });
    let f = b.read(A, PC_HIT);
    b.writeback(A, f);
    let again = b.read(A, PC_HIT);
    b.evict_metadata();
    b.reset_log();
    b.writeback(A, again);
    out.push(case("tictoc+dcd second writeback: total transfers", 1, b.total()));
    out.push(case("tictoc+dcd second writeback: dirty-bit transfers", 0, b.count(Category::DirtyBitUpdate)));
    out
}

/// Read miss that installs over a resident victim, metadata cached.
fn miss_install_cases() -> Vec<CaseResult> {
    let mut out = Vec::new();

    let mut b = Bench::new(PolicyConfig::new(Organization::TicToc));
    b.read(A, PC_MISS);
    b.reset_log();
    b.read(B, PC_MISS);
    out.push(case("tictoc miss+install, clean victim, metadata cached: transfers", 2, b.total()));

    let mut b =
        Bench::new(PolicyConfig { dcd_enabled: true, pdm_enabled: true, ..PolicyConfig::new(Organization::TicToc) });
    b.read(A, PC_WRITER);
    b.reset_log();
    b.read(B, PC_MISS);
    out.push(case("tictoc+dcd+pdm miss+install, falsely predicted-dirty victim: transfers", 3, b.total()));
    out.push(case(
        "tictoc+dcd+pdm miss+install, falsely predicted-dirty victim: memory writes",
        0,
        b.count(Category::XpointWrite),
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        let results = run_suite();
        assert!(results.len() >= 20);
        for r in &results {
            assert!(r.passed(), "{r}");
        }
    }
}
