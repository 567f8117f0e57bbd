//! DRAM-cache controllers for every organization. The controller owns the
//! DRAM cache, the 3D-XPoint contents, the metadata system and predictors,
//! and turns L3 misses and evictions into channel transfers.

use crate::config::{BypassMode, Organization, PolicyConfig};
use crate::geometry::{CacheGeometry, LineAddr, SetIndex};
use crate::ledger::{BandwidthLedger, Category, Device, Issue, Op, Transfer};
use crate::llc::{Eviction, Fill};
use crate::metadata::{MetadataSystem, TocEntry};
use crate::predictors::{Accuracy, HitMiss, HitMissPredictor, WritePredictor};
use crate::rng::{rng_for, SimRng, Stream};
use rand::Rng;
use rustc_hash::FxHashMap;

/// Share of clean installs kept by the 90%-bypass policies.
pub const INSTALL_PROBABILITY: f64 = 0.1;

/// One resident DRAM-cache line with its in-line (TIC) bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct L4Line {
    pub addr: LineAddr,
    pub tic_dirty: bool,
    pub payload: u64,
    /// Written at least once since install.
    pub written: bool,
    /// Write prediction made when the line was fetched, if it is scored.
    pub prediction: Option<bool>,
}

/// State a line enters the DRAM cache with.
#[derive(Clone, Copy, Debug, Default)]
struct InstallKind {
    /// Dirty relative to memory (write-allocated).
    dirty: bool,
    /// Marked dirty in the out-of-line tag only.
    predicted_dirty: bool,
    /// Write prediction to score when the line leaves.
    prediction: Option<bool>,
}

/// How much the controller already knows about the victim before replacing it.
#[derive(Clone, Copy, Debug)]
enum VictimInfo {
    /// A DRAM-cache read already returned the victim with its TIC bits.
    Probed,
    /// Only the out-of-line dirty bit is known.
    Toc { dirty: bool },
    /// SRAM tags know the dirty bit; the data still has to be read.
    SramTags,
}

#[derive(Debug)]
pub struct Controller {
    cfg: PolicyConfig,
    geom: CacheGeometry,
    l4: FxHashMap<u64, L4Line>,
    memory: FxHashMap<u64, u64>,
    meta: Option<MetadataSystem>,
    hm: HitMissPredictor,
    swp: WritePredictor,
    bypass_rng: SimRng,
    ledger: BandwidthLedger,
    revoked: Vec<LineAddr>,
    scoring: bool,
    accuracy: Accuracy,
    drop_writebacks: bool,
}

fn dram(category: Category, op: Op, set: SetIndex, issue: Issue) -> Transfer {
    Transfer { category, device: Device::Dram, op, location: set.0, issue }
}

fn xpoint(category: Category, op: Op, addr: LineAddr, issue: Issue) -> Transfer {
    Transfer { category, device: Device::Xpoint, op, location: addr.0, issue }
}

impl Controller {
    pub fn new(cfg: &PolicyConfig) -> Self {
        let meta = cfg.organization.has_toc().then(|| MetadataSystem::new(cfg.geometry, cfg.metadata_cache_entries));
        Controller {
            cfg: *cfg,
            geom: cfg.geometry,
            l4: FxHashMap::default(),
            memory: FxHashMap::default(),
            meta,
            hm: HitMissPredictor::new(),
            swp: WritePredictor::new(cfg.rng_seed),
            bypass_rng: rng_for(cfg.rng_seed, Stream::Bypass),
            ledger: BandwidthLedger::default(),
            revoked: Vec::new(),
            scoring: false,
            accuracy: Accuracy::default(),
            drop_writebacks: false,
        }
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.cfg
    }

    pub fn ledger(&self) -> &BandwidthLedger {
        &self.ledger
    }

    /// Metadata-cache miss probability, if the organization has one.
    pub fn rho(&self) -> Option<f64> {
        self.meta.as_ref().map(MetadataSystem::rho)
    }

    pub fn metadata(&self) -> Option<&MetadataSystem> {
        self.meta.as_ref()
    }

    pub fn write_accuracy(&self) -> Accuracy {
        self.accuracy
    }

    /// Starts scoring write predictions for lines retired from now on.
    pub fn set_scoring(&mut self, on: bool) {
        self.scoring = on;
    }

    pub fn hit_miss_predictor_mut(&mut self) -> &mut HitMissPredictor {
        &mut self.hm
    }

    pub fn write_predictor(&self) -> &WritePredictor {
        &self.swp
    }

    pub fn write_predictor_mut(&mut self) -> &mut WritePredictor {
        &mut self.swp
    }

    /// Fault injection: writebacks from the L3 are acknowledged but their data is lost.
    pub fn inject_dropped_writebacks(&mut self) {
        self.drop_writebacks = true;
    }

    /// L3 lines whose DRAM-cache copy was replaced since the last call.
    pub fn take_revocations(&mut self) -> Vec<LineAddr> {
        std::mem::take(&mut self.revoked)
    }

    pub fn memory(&self) -> &FxHashMap<u64, u64> {
        &self.memory
    }

    pub fn memory_value(&self, addr: LineAddr) -> u64 {
        self.memory.get(&addr.0).copied().unwrap_or(0)
    }

    pub fn l4_line(&self, addr: LineAddr) -> Option<&L4Line> {
        self.l4.get(&self.geom.cache_index(addr).0).filter(|l| l.addr == addr)
    }

    /// Resident lines whose in-line dirty bit is set.
    pub fn l4_dirty_lines(&self) -> impl Iterator<Item = &L4Line> {
        self.l4.values().filter(|l| l.tic_dirty)
    }

    fn record(&mut self, transfers: &[Transfer]) {
        for t in transfers {
            self.ledger.record(t);
            if t.op == Op::Write && matches!(t.category, Category::TocUpdate | Category::DirtyBitUpdate) {
                self.ledger.metadata_writebacks += 1;
            }
        }
    }

    fn is_tictoc(&self) -> bool {
        self.cfg.organization == Organization::TicToc
    }

    fn meta_mut(&mut self) -> &mut MetadataSystem {
        self.meta.as_mut().expect("organization keeps out-of-line metadata")
    }

    fn set_of(&self, addr: LineAddr) -> SetIndex {
        self.geom.cache_index(addr)
    }

    fn resident(&self, addr: LineAddr) -> Option<L4Line> {
        self.l4_line(addr).copied()
    }

    fn draw_install(&mut self) -> bool {
        self.bypass_rng.gen::<f64>() < INSTALL_PROBABILITY
    }

    /// Whether a clean line fetched on a read miss is installed.
    fn installs_on_read(&mut self, likely_written: bool) -> bool {
        match self.cfg.bypass {
            BypassMode::None => true,
            BypassMode::Bypass90 | BypassMode::WriteAllocate => self.draw_install(),
            BypassMode::PreemptiveWriteAllocate => {
                let drawn = self.draw_install();
                likely_written || drawn
            }
        }
    }

    /// Whether a dirty L3 eviction of a non-resident line is installed.
    fn write_allocates(&self) -> bool {
        self.cfg.bypass != BypassMode::Bypass90
    }

    fn begin_operation(&mut self) {
        if let Some(m) = self.meta.as_mut() {
            m.begin_operation();
        }
    }

    fn score(&mut self, prediction: Option<bool>, written: bool) {
        if let (true, Some(p)) = (self.scoring, prediction) {
            self.accuracy.record(p, written);
        }
    }

    /// Removes the current occupant of `set`, writing it to memory if needed.
    fn replace_victim(&mut self, set: SetIndex, info: VictimInfo, out: &mut Vec<Transfer>) {
        let Some(v) = self.l4.remove(&set.0) else {
            return;
        };
        let read_needed = match info {
            VictimInfo::Probed => false,
            VictimInfo::Toc { dirty } => dirty,
            VictimInfo::SramTags => v.tic_dirty,
        };
        debug_assert!(!v.tic_dirty || read_needed || matches!(info, VictimInfo::Probed));
        if read_needed {
            out.push(dram(Category::MissProbe, Op::Read, set, Issue::Background));
        }
        if v.tic_dirty {
            out.push(xpoint(Category::XpointWrite, Op::Write, v.addr, Issue::Background));
            self.memory.insert(v.addr.0, v.payload);
        }
        self.score(v.prediction, v.written);
        if self.is_tictoc() {
            self.swp.learn_on_evict(set);
        }
        self.revoked.push(v.addr);
    }

    /// Installs `addr`, updating the out-of-line tag when the organization keeps one.
    fn install(&mut self, addr: LineAddr, pc: u64, payload: u64, kind: InstallKind, out: &mut Vec<Transfer>) {
        let InstallKind { dirty, predicted_dirty, prediction } = kind;
        let set = self.set_of(addr);
        debug_assert!(!self.l4.contains_key(&set.0), "install over a live line");
        out.push(dram(Category::Install, Op::Write, set, Issue::Background));
        self.l4.insert(set.0, L4Line { addr, tic_dirty: dirty, payload, written: dirty, prediction });
        if self.is_tictoc() {
            self.swp.observe_install(set, pc);
            if dirty {
                self.swp.observe_write(set);
            }
        }
        if self.meta.is_some() {
            let entry = TocEntry::new(self.geom.tag_of(addr), dirty || predicted_dirty);
            self.meta_mut().toc_update(set, entry, Issue::Background, out);
        }
    }

    /// Writes an L3 writeback into the resident copy.
    fn cache_write(&mut self, set: SetIndex, payload: u64, out: &mut Vec<Transfer>) {
        out.push(dram(Category::CacheWrite, Op::Write, set, Issue::Parallel));
        let drop = self.drop_writebacks;
        let line = self.l4.get_mut(&set.0).expect("cache write to a resident line");
        line.tic_dirty = true;
        line.written = true;
        if !drop {
            line.payload = payload;
        }
        if self.is_tictoc() {
            self.swp.observe_write(set);
        }
    }

    fn write_memory_direct(&mut self, addr: LineAddr, payload: u64, out: &mut Vec<Transfer>) {
        out.push(xpoint(Category::XpointWrite, Op::Write, addr, Issue::Parallel));
        if !self.drop_writebacks {
            self.memory.insert(addr.0, payload);
        }
    }

    /// Services an L3 miss for `addr` and says how the L3 should fill it.
    pub fn read_miss(&mut self, addr: LineAddr, pc: u64, out: &mut Vec<Transfer>) -> Fill {
        let start = out.len();
        self.begin_operation();
        let fill = match self.cfg.organization {
            Organization::NoCache => {
                out.push(xpoint(Category::XpointRead, Op::Read, addr, Issue::Parallel));
                Fill { present_in_l4: false, dirty_in_l4: false, payload: self.memory_value(addr), prediction: None }
            }
            Organization::IdealSram => self.read_sram(addr, pc, out),
            Organization::Tic => self.read_tic(addr, pc, out),
            Organization::Toc => self.read_toc(addr, pc, out),
            Organization::TicToc => self.read_tictoc(addr, pc, out),
        };
        self.record(&out[start..]);
        fill
    }

    fn hit_fill(line: L4Line, dirty_known: bool) -> Fill {
        Fill { present_in_l4: true, dirty_in_l4: dirty_known, payload: line.payload, prediction: None }
    }

    fn read_sram(&mut self, addr: LineAddr, pc: u64, out: &mut Vec<Transfer>) -> Fill {
        let set = self.set_of(addr);
        if let Some(line) = self.resident(addr) {
            out.push(dram(Category::CacheHitRead, Op::Read, set, Issue::Parallel));
            return Self::hit_fill(line, line.tic_dirty);
        }
        out.push(xpoint(Category::XpointRead, Op::Read, addr, Issue::Parallel));
        let payload = self.memory_value(addr);
        self.replace_victim(set, VictimInfo::SramTags, out);
        self.install(addr, pc, payload, InstallKind::default(), out);
        Fill { present_in_l4: true, dirty_in_l4: false, payload, prediction: None }
    }

    /// Tag-and-data read guided by the hit/miss predictor. Returns the line on a hit.
    fn tic_probe(&mut self, addr: LineAddr, pc: u64, out: &mut Vec<Transfer>) -> Option<L4Line> {
        let set = self.set_of(addr);
        let hit = self.resident(addr);
        let predicted = self.hm.predict(pc);
        self.hm.train(pc, hit.is_some());
        match (predicted, hit.is_some()) {
            (HitMiss::Hit, true) => out.push(dram(Category::CacheHitRead, Op::Read, set, Issue::Parallel)),
            (HitMiss::Miss, true) => {
                out.push(dram(Category::CacheHitRead, Op::Read, set, Issue::Parallel));
                out.push(xpoint(Category::MissProbe, Op::Read, addr, Issue::Parallel));
                self.ledger.wasted_parallel_reads += 1;
            }
            (HitMiss::Hit, false) => {
                out.push(dram(Category::MissProbe, Op::Read, set, Issue::Parallel));
                out.push(xpoint(Category::XpointRead, Op::Read, addr, Issue::Serial));
            }
            (HitMiss::Miss, false) => {
                out.push(dram(Category::MissProbe, Op::Read, set, Issue::Parallel));
                out.push(xpoint(Category::XpointRead, Op::Read, addr, Issue::Parallel));
            }
        }
        hit
    }

    fn read_tic(&mut self, addr: LineAddr, pc: u64, out: &mut Vec<Transfer>) -> Fill {
        if let Some(line) = self.tic_probe(addr, pc, out) {
            return Self::hit_fill(line, line.tic_dirty);
        }
        let payload = self.memory_value(addr);
        let install = self.installs_on_read(false);
        if install {
            self.replace_victim(self.set_of(addr), VictimInfo::Probed, out);
            self.install(addr, pc, payload, InstallKind::default(), out);
        }
        Fill { present_in_l4: install, dirty_in_l4: false, payload, prediction: None }
    }

    /// Out-of-line lookup with predictor-guided parallel data access on a
    /// metadata-cache miss. Returns the hit line or how much is known about the victim.
    fn toc_lookup(&mut self, addr: LineAddr, pc: u64, out: &mut Vec<Transfer>) -> Result<(L4Line, bool), VictimInfo> {
        let set = self.set_of(addr);
        let tag = self.geom.tag_of(addr);
        let (entry, mdc_hit) = self.meta_mut().read_entry(set, Category::TocAccess, Issue::Parallel, out);
        let hit = entry.matches(tag);
        debug_assert_eq!(hit, self.resident(addr).is_some(), "out-of-line tag disagrees with the cache");
        let predicted = self.hm.predict(pc);
        self.hm.train(pc, hit);
        let mut probed = false;
        if mdc_hit {
            out.push(if hit {
                dram(Category::CacheHitRead, Op::Read, set, Issue::Parallel)
            } else {
                xpoint(Category::XpointRead, Op::Read, addr, Issue::Parallel)
            });
        } else {
            match (predicted, hit) {
                (HitMiss::Hit, true) => out.push(dram(Category::CacheHitRead, Op::Read, set, Issue::Parallel)),
                (HitMiss::Hit, false) => {
                    out.push(dram(Category::MissProbe, Op::Read, set, Issue::Parallel));
                    out.push(xpoint(Category::XpointRead, Op::Read, addr, Issue::Serial));
                    probed = true;
                }
                (HitMiss::Miss, true) => {
                    out.push(xpoint(Category::MissProbe, Op::Read, addr, Issue::Parallel));
                    out.push(dram(Category::CacheHitRead, Op::Read, set, Issue::Serial));
                    self.ledger.wasted_parallel_reads += 1;
                }
                (HitMiss::Miss, false) => out.push(xpoint(Category::XpointRead, Op::Read, addr, Issue::Parallel)),
            }
        }
        if hit {
            let line = self.resident(addr).expect("hit");
            return Ok((line, entry.dirty()));
        }
        Err(if probed { VictimInfo::Probed } else { VictimInfo::Toc { dirty: entry.valid() && entry.dirty() } })
    }

    fn read_toc(&mut self, addr: LineAddr, pc: u64, out: &mut Vec<Transfer>) -> Fill {
        match self.toc_lookup(addr, pc, out) {
            Ok((line, toc_dirty)) => Self::hit_fill(line, toc_dirty),
            Err(victim) => {
                let payload = self.memory_value(addr);
                self.replace_victim(self.set_of(addr), victim, out);
                self.install(addr, pc, payload, InstallKind::default(), out);
                Fill { present_in_l4: true, dirty_in_l4: false, payload, prediction: None }
            }
        }
    }

    fn read_tictoc(&mut self, addr: LineAddr, pc: u64, out: &mut Vec<Transfer>) -> Fill {
        let victim = match self.hm.predict(pc) {
            HitMiss::Hit => match self.tic_probe(addr, pc, out) {
                Some(line) => return Self::hit_fill(line, line.tic_dirty),
                None => VictimInfo::Probed,
            },
            HitMiss::Miss => match self.toc_lookup(addr, pc, out) {
                Ok((line, toc_dirty)) => return Self::hit_fill(line, toc_dirty),
                Err(v) => v,
            },
        };
        let payload = self.memory_value(addr);
        let likely = self.swp.predict(pc).is_likely();
        if !self.installs_on_read(likely) {
            return Fill { present_in_l4: false, dirty_in_l4: false, payload, prediction: Some(likely) };
        }
        let predicted_dirty = self.cfg.pdm_enabled && likely;
        self.replace_victim(self.set_of(addr), victim, out);
        let kind = InstallKind { predicted_dirty, prediction: Some(likely), ..InstallKind::default() };
        self.install(addr, pc, payload, kind, out);
        Fill { present_in_l4: true, dirty_in_l4: predicted_dirty, payload, prediction: None }
    }

    /// Handles a dirty line leaving the L3.
    pub fn dirty_eviction(&mut self, ev: &Eviction, out: &mut Vec<Transfer>) {
        debug_assert!(ev.dirty);
        let start = out.len();
        self.begin_operation();
        let set = self.set_of(ev.addr);
        match self.cfg.organization {
            Organization::NoCache => self.write_memory_direct(ev.addr, ev.payload, out),
            Organization::IdealSram => {
                if self.resident(ev.addr).is_some() {
                    self.cache_write(set, ev.payload, out);
                } else {
                    self.replace_victim(set, VictimInfo::SramTags, out);
                    self.install(
                        ev.addr,
                        ev.pc,
                        ev.payload,
                        InstallKind { dirty: true, ..InstallKind::default() },
                        out,
                    );
                }
            }
            Organization::Tic => {
                if ev.dcp {
                    self.cache_write(set, ev.payload, out);
                } else if !self.write_allocates() {
                    self.write_memory_direct(ev.addr, ev.payload, out);
                } else {
                    out.push(dram(Category::MissProbe, Op::Read, set, Issue::Parallel));
                    self.allocate_dirty(ev, VictimInfo::Probed, out);
                }
            }
            Organization::Toc => {
                if ev.dcp {
                    self.cache_write(set, ev.payload, out);
                    self.meta_mut().mark_dirty(set, Issue::Background, out);
                } else {
                    let (entry, _) = self.meta_mut().read_entry(set, Category::TocAccess, Issue::Parallel, out);
                    self.allocate_dirty(ev, VictimInfo::Toc { dirty: entry.valid() && entry.dirty() }, out);
                }
            }
            Organization::TicToc => {
                if ev.dcp {
                    self.cache_write(set, ev.payload, out);
                    if !(self.cfg.dcd_enabled && ev.dcd) {
                        self.meta_mut().mark_dirty(set, Issue::Background, out);
                    }
                } else if !self.write_allocates() {
                    self.write_memory_direct(ev.addr, ev.payload, out);
                    if ev.filled_absent {
                        self.swp.learn_bypassed(set, ev.pc, true);
                        self.score(ev.prediction, true);
                    }
                } else {
                    // A cached metadata line answers the tag check for free.
                    let victim = match self.meta.as_ref().and_then(|m| m.peek(set)) {
                        Some(e) => VictimInfo::Toc { dirty: e.valid() && e.dirty() },
                        None => {
                            out.push(dram(Category::MissProbe, Op::Read, set, Issue::Parallel));
                            VictimInfo::Probed
                        }
                    };
                    self.allocate_dirty(ev, victim, out);
                }
            }
        }
        self.record(&out[start..]);
    }

    /// Write-allocates a dirty line whose copy is known to be absent.
    fn allocate_dirty(&mut self, ev: &Eviction, victim: VictimInfo, out: &mut Vec<Transfer>) {
        debug_assert!(self.resident(ev.addr).is_none(), "presence hint missed a resident line");
        let set = self.set_of(ev.addr);
        self.replace_victim(set, victim, out);
        let payload = if self.drop_writebacks { self.memory_value(ev.addr) } else { ev.payload };
        self.install(
            ev.addr,
            ev.pc,
            payload,
            InstallKind { dirty: true, prediction: ev.prediction, ..InstallKind::default() },
            out,
        );
    }

    /// Handles a clean line leaving the L3. Costs no bandwidth.
    pub fn clean_eviction(&mut self, ev: &Eviction) {
        if self.is_tictoc() && ev.filled_absent {
            self.swp.learn_bypassed(self.set_of(ev.addr), ev.pc, false);
            self.score(ev.prediction, false);
        }
    }

    /// End of run: writes every in-line-dirty line to memory and flushes the metadata cache.
    pub fn drain(&mut self, out: &mut Vec<Transfer>) {
        let start = out.len();
        let mut sets: Vec<u64> = self.l4.keys().copied().collect();
        sets.sort_unstable();
        for s in sets {
            let line = self.l4[&s];
            if line.tic_dirty {
                out.push(xpoint(Category::XpointWrite, Op::Write, line.addr, Issue::Parallel));
                self.memory.insert(line.addr.0, line.payload);
                self.l4.get_mut(&s).expect("present").tic_dirty = false;
            }
            self.score(line.prediction, line.written);
            self.l4.get_mut(&s).expect("present").prediction = None;
        }
        if let Some(m) = self.meta.as_mut() {
            m.drain(out);
        }
        self.record(&out[start..]);
    }

    /// Evicts every metadata line as if the metadata cache had been thrashed.
    pub fn evict_metadata_cache(&mut self, out: &mut Vec<Transfer>) {
        let start = out.len();
        if let Some(m) = self.meta.as_mut() {
            m.evict_all(out);
        }
        self.record(&out[start..]);
    }

    /// Checks the cross-structure invariants before drain; returns a
    /// description of the first violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        for (&s, line) in &self.l4 {
            if self.geom.cache_index(line.addr).0 != s {
                return Err(format!("line {} stored in set {s}", line.addr));
            }
            if let Some(m) = &self.meta {
                let e = m.entry(SetIndex(s));
                if !e.matches(self.geom.tag_of(line.addr)) {
                    return Err(format!("set {s}: out-of-line tag {e:?} does not name {}", line.addr));
                }
                if line.tic_dirty && !e.dirty() {
                    return Err(format!("set {s}: in-line dirty but out-of-line clean"));
                }
                if !self.cfg.pdm_enabled && e.dirty() != line.tic_dirty {
                    return Err(format!("set {s}: dirty bits disagree without preemptive marking"));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
