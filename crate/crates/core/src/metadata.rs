//! Out-of-line (TOC) metadata: packed entries, metadata lines, the on-chip
//! metadata cache, and the DRAM-resident metadata region behind it.
//!
//! In-line (TIC) bits live with each DRAM-cache line in the policies module;
//! they ride along with data transfers and cost no bandwidth of their own.

use crate::geometry::{toc_line_of, CacheGeometry, SetIndex, TocLineId, LINES_PER_TOC_LINE};
use crate::ledger::{Category, Device, Issue, Op, Transfer};
use lru::LruCache;
use rustc_hash::FxHashMap;
use std::num::NonZeroUsize;
use thiserror::Error;

/// One byte of metadata: bits [7:2] tag, [1] dirty, [0] valid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct TocEntry(u8);

impl TocEntry {
    pub const TAG_BITS: u32 = 6;
    pub const INVALID: TocEntry = TocEntry(0);

    /// Builds a valid entry. `tag` must fit in six bits.
    pub fn new(tag: u64, dirty: bool) -> Self {
        debug_assert!(tag < 1 << Self::TAG_BITS, "tag {tag} does not fit in a metadata entry");
        TocEntry(((tag as u8 & 0x3f) << 2) | (u8::from(dirty) << 1) | 1)
    }

    pub fn decode(byte: u8) -> Self {
        TocEntry(byte)
    }

    pub fn encode(self) -> u8 {
        self.0
    }

    pub fn tag(self) -> u64 {
        u64::from(self.0 >> 2)
    }

    pub fn dirty(self) -> bool {
        self.0 & 0b10 != 0
    }

    pub fn valid(self) -> bool {
        self.0 & 1 != 0
    }

    pub fn matches(self, tag: u64) -> bool {
        self.valid() && self.tag() == tag
    }

    pub fn with_dirty(self, dirty: bool) -> Self {
        TocEntry((self.0 & !0b10) | (u8::from(dirty) << 1))
    }
}

/// 64 entries covering 64 consecutive sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TocLine {
    pub entries: [TocEntry; LINES_PER_TOC_LINE as usize],
}

impl Default for TocLine {
    fn default() -> Self {
        TocLine { entries: [TocEntry::INVALID; LINES_PER_TOC_LINE as usize] }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetadataError {
    #[error("metadata line {0} is already cached")]
    DuplicateInstall(u64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct CachedLine {
    line: TocLine,
    dirty: bool,
    /// Category of the update that first dirtied the line; its writeback is charged there.
    dirtied_by: Option<Category>,
}

/// A metadata line pushed out of the metadata cache.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EvictedLine {
    pub id: TocLineId,
    pub line: TocLine,
    pub dirty: bool,
    pub dirtied_by: Option<Category>,
}

/// Fully associative, LRU, write-back cache of metadata lines.
#[derive(Debug)]
pub struct MetadataCache {
    lines: LruCache<u64, CachedLine>,
    lookups: u64,
    misses: u64,
}

impl MetadataCache {
    pub fn new(entries: usize) -> Self {
        let cap = NonZeroUsize::new(entries).expect("metadata cache needs at least one entry");
        MetadataCache { lines: LruCache::new(cap), lookups: 0, misses: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.lines.cap().get()
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    /// Counted lookup. A hit refreshes the line's LRU position.
    pub fn lookup(&mut self, id: TocLineId) -> Option<&TocLine> {
        self.lookups += 1;
        match self.lines.get(&id.0) {
            Some(c) => Some(&c.line),
            None => {
                self.misses += 1;
                None
            }
        }
    }

    /// Uncounted access that refreshes LRU position; returns whether `id` is resident.
    pub fn touch(&mut self, id: TocLineId) -> bool {
        self.lines.get(&id.0).is_some()
    }

    /// Uncounted residency check that leaves LRU order untouched.
    pub fn contains(&self, id: TocLineId) -> bool {
        self.lines.contains(&id.0)
    }

    pub fn peek(&self, id: TocLineId) -> Option<&TocLine> {
        self.lines.peek(&id.0).map(|c| &c.line)
    }

    pub fn is_dirty(&self, id: TocLineId) -> bool {
        self.lines.peek(&id.0).is_some_and(|c| c.dirty)
    }

    /// Installs a clean line, returning the LRU victim if the cache was full.
    pub fn install(&mut self, id: TocLineId, line: TocLine) -> Result<Option<EvictedLine>, MetadataError> {
        if self.lines.contains(&id.0) {
            return Err(MetadataError::DuplicateInstall(id.0));
        }
        let evicted = self
            .lines
            .push(id.0, CachedLine { line, dirty: false, dirtied_by: None })
            .map(|(vid, c)| EvictedLine { id: TocLineId(vid), line: c.line, dirty: c.dirty, dirtied_by: c.dirtied_by });
        Ok(evicted)
    }

    /// Replaces entry `slot` of a cached line and marks the line dirty. No LRU change.
    pub fn update(&mut self, id: TocLineId, slot: usize, entry: TocEntry, by: Category) {
        let c = self.lines.peek_mut(&id.0).expect("update of an uncached metadata line");
        c.line.entries[slot] = entry;
        if !c.dirty {
            c.dirty = true;
            c.dirtied_by = Some(by);
        }
    }

    /// Marks every dirty line clean and returns them, in LRU-to-MRU order.
    pub fn clean_all(&mut self) -> Vec<EvictedLine> {
        let mut out: Vec<EvictedLine> = self
            .lines
            .iter_mut()
            .filter(|(_, c)| c.dirty)
            .map(|(&id, c)| {
                let e = EvictedLine { id: TocLineId(id), line: c.line, dirty: true, dirtied_by: c.dirtied_by };
                c.dirty = false;
                c.dirtied_by = None;
                e
            })
            .collect();
        out.reverse();
        out
    }

    /// Empties the cache, returning every line in LRU-to-MRU order.
    pub fn evict_all(&mut self) -> Vec<EvictedLine> {
        let mut out = Vec::with_capacity(self.lines.len());
        while let Some((id, c)) = self.lines.pop_lru() {
            out.push(EvictedLine { id: TocLineId(id), line: c.line, dirty: c.dirty, dirtied_by: c.dirtied_by });
        }
        out
    }

    pub fn lookups(&self) -> u64 {
        self.lookups
    }

    pub fn misses(&self) -> u64 {
        self.misses
    }

    /// Miss probability ρ; zero before the first lookup.
    pub fn rho(&self) -> f64 {
        if self.lookups == 0 {
            0.0
        } else {
            self.misses as f64 / self.lookups as f64
        }
    }
}

/// The metadata region in DRAM together with its metadata cache. Every
/// channel transfer it causes is appended to the caller's list.
#[derive(Debug)]
pub struct MetadataSystem {
    geom: CacheGeometry,
    region: FxHashMap<u64, TocLine>,
    cache: MetadataCache,
    writebacks: u64,
    /// Lines already referenced by the current controller operation, if one is open.
    op_lines: Option<Vec<u64>>,
}

impl MetadataSystem {
    pub fn new(geom: CacheGeometry, cache_entries: usize) -> Self {
        MetadataSystem {
            geom,
            region: FxHashMap::default(),
            cache: MetadataCache::new(cache_entries),
            writebacks: 0,
            op_lines: None,
        }
    }

    pub fn cache(&self) -> &MetadataCache {
        &self.cache
    }

    /// Metadata lines written back to DRAM so far.
    pub fn writebacks(&self) -> u64 {
        self.writebacks
    }

    /// Opens a new controller operation. Until the next call, repeat references
    /// to a line this operation already brought in are not counted as lookups.
    pub fn begin_operation(&mut self) {
        self.op_lines.get_or_insert_with(Vec::new).clear();
    }

    fn location(&self, id: TocLineId) -> u64 {
        self.geom.cache_lines + id.0
    }

    fn transfer(&self, category: Category, op: Op, id: TocLineId, issue: Issue) -> Transfer {
        Transfer { category, device: Device::Dram, op, location: self.location(id), issue }
    }

    /// Current entry for `set`, wherever it lives. Costs nothing.
    pub fn entry(&self, set: SetIndex) -> TocEntry {
        let (id, slot) = toc_line_of(set);
        self.cache.peek(id).or_else(|| self.region.get(&id.0)).map_or(TocEntry::INVALID, |l| l.entries[slot])
    }

    /// Entry for `set` if its line is in the metadata cache. Uncounted, no LRU change.
    pub fn peek(&self, set: SetIndex) -> Option<TocEntry> {
        let (id, slot) = toc_line_of(set);
        self.cache.peek(id).map(|l| l.entries[slot])
    }

    /// Counted lookup of the line holding `set`, fetching it on a miss with a
    /// read charged to `category`. Returns whether the lookup hit.
    fn ensure(&mut self, set: SetIndex, category: Category, issue: Issue, out: &mut Vec<Transfer>) -> bool {
        let (id, _) = toc_line_of(set);
        if let Some(seen) = self.op_lines.as_mut() {
            if seen.contains(&id.0) && self.cache.touch(id) {
                return true;
            }
            seen.push(id.0);
        }
        if self.cache.lookup(id).is_some() {
            return true;
        }
        out.push(self.transfer(category, Op::Read, id, issue));
        let line = self.region.get(&id.0).copied().unwrap_or_default();
        let evicted = self.cache.install(id, line).expect("line was just found absent");
        if let Some(v) = evicted {
            self.retire(v, None, out);
        }
        false
    }

    fn retire(&mut self, v: EvictedLine, charge_to: Option<Category>, out: &mut Vec<Transfer>) {
        if v.dirty {
            let cat = charge_to.or(v.dirtied_by).unwrap_or(Category::TocUpdate);
            out.push(self.transfer(cat, Op::Write, v.id, Issue::Background));
            self.writebacks += 1;
        }
        self.region.insert(v.id.0, v.line);
    }

    /// Reads the entry for `set` through the metadata cache; a miss costs one
    /// read charged to `category`.
    pub fn read_entry(
        &mut self,
        set: SetIndex,
        category: Category,
        issue: Issue,
        out: &mut Vec<Transfer>,
    ) -> (TocEntry, bool) {
        let hit = self.ensure(set, category, issue, out);
        (self.peek(set).expect("line is cached after ensure"), hit)
    }

    /// Writes `entry` for `set`. A metadata-cache miss costs one read charged to `TocUpdate`.
    pub fn toc_update(&mut self, set: SetIndex, entry: TocEntry, issue: Issue, out: &mut Vec<Transfer>) -> bool {
        let hit = self.ensure(set, Category::TocUpdate, issue, out);
        let (id, slot) = toc_line_of(set);
        self.cache.update(id, slot, entry, Category::TocUpdate);
        hit
    }

    /// Sets the dirty bit for `set`. The lookup always happens; a miss costs a
    /// `DirtyBitUpdate` read. Returns true if the bit went from clean to dirty.
    pub fn mark_dirty(&mut self, set: SetIndex, issue: Issue, out: &mut Vec<Transfer>) -> bool {
        self.ensure(set, Category::DirtyBitUpdate, issue, out);
        let (id, slot) = toc_line_of(set);
        let e = self.cache.peek(id).expect("line is cached after ensure").entries[slot];
        if e.dirty() {
            return false;
        }
        self.cache.update(id, slot, e.with_dirty(true), Category::DirtyBitUpdate);
        true
    }

    /// End-of-run drain: writes back every dirty cached line, charged to `TocUpdate`.
    pub fn drain(&mut self, out: &mut Vec<Transfer>) {
        for v in self.cache.clean_all() {
            self.retire(v, Some(Category::TocUpdate), out);
        }
    }

    /// Empties the metadata cache as if every line had been evicted.
    pub fn evict_all(&mut self, out: &mut Vec<Transfer>) {
        for v in self.cache.evict_all() {
            self.retire(v, None, out);
        }
    }

    pub fn rho(&self) -> f64 {
        self.cache.rho()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys(entries: usize) -> MetadataSystem {
        MetadataSystem::new(CacheGeometry::with_cache_lines(1 << 16, 1 << 20), entries)
    }

    #[test]
    fn entry_round_trips_all_bytes() {
        for b in 0..=255u8 {
            let e = TocEntry::decode(b);
            assert_eq!(e.encode(), b);
            assert_eq!(e.tag(), u64::from(b >> 2));
            assert_eq!(e.dirty(), b & 2 != 0);
            assert_eq!(e.valid(), b & 1 != 0);
            if e.valid() {
                assert_eq!(TocEntry::new(e.tag(), e.dirty()), e);
            }
        }
    }

    #[test]
    fn lookup_after_install_hits() {
        let mut c = MetadataCache::new(4);
        assert!(c.lookup(TocLineId(9)).is_none());
        c.install(TocLineId(9), TocLine::default()).unwrap();
        assert!(c.lookup(TocLineId(9)).is_some());
        assert_eq!((c.lookups(), c.misses()), (2, 1));
    }

    #[test]
    fn round_robin_over_capacity_always_misses() {
        let mut c = MetadataCache::new(512);
        for round in 0..4 {
            for id in 0..513 {
                assert!(c.lookup(TocLineId(id)).is_none(), "round {round} id {id}");
                c.install(TocLineId(id), TocLine::default()).unwrap();
            }
        }
        assert_eq!(c.rho(), 1.0);
    }

    #[test]
    fn install_evictions() {
        let mut c = MetadataCache::new(2);
        assert_eq!(c.install(TocLineId(1), TocLine::default()).unwrap(), None);
        assert_eq!(c.install(TocLineId(2), TocLine::default()).unwrap(), None);
        let v = c.install(TocLineId(3), TocLine::default()).unwrap().unwrap();
        assert_eq!((v.id, v.dirty), (TocLineId(1), false));
        c.update(TocLineId(2), 0, TocEntry::new(1, false), Category::TocUpdate);
        let v = c.install(TocLineId(4), TocLine::default()).unwrap().unwrap();
        assert_eq!((v.id, v.dirty, v.dirtied_by), (TocLineId(2), true, Some(Category::TocUpdate)));
        assert_eq!(c.install(TocLineId(4), TocLine::default()), Err(MetadataError::DuplicateInstall(4)));
    }

    #[test]
    fn toc_update_costs() {
        let mut m = sys(512);
        let mut out = vec![];
        m.toc_update(SetIndex(3), TocEntry::new(1, false), Issue::Background, &mut out);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].category, Category::TocUpdate);
        m.toc_update(SetIndex(4), TocEntry::new(2, false), Issue::Background, &mut out);
        assert_eq!(out.len(), 1, "same metadata line, second update is free");
        assert_eq!(m.entry(SetIndex(3)), TocEntry::new(1, false));
        assert_eq!(m.entry(SetIndex(4)), TocEntry::new(2, false));
    }

    #[test]
    fn dirty_victim_writeback_is_charged_to_first_dirtier() {
        let mut m = sys(1);
        let mut out = vec![];
        m.read_entry(SetIndex(0), Category::TocAccess, Issue::Parallel, &mut out);
        assert!(m.mark_dirty(SetIndex(0), Issue::Background, &mut out));
        assert!(!m.mark_dirty(SetIndex(0), Issue::Background, &mut out));
        m.toc_update(SetIndex(64), TocEntry::new(0, false), Issue::Background, &mut out);
        let cats: Vec<_> = out.iter().map(|t| (t.category, t.op)).collect();
        assert_eq!(
            cats,
            vec![
                (Category::TocAccess, Op::Read),
                (Category::TocUpdate, Op::Read),
                (Category::DirtyBitUpdate, Op::Write)
            ]
        );
        // The evicted line's contents survive in the region.
        assert!(m.entry(SetIndex(0)).dirty());
        assert_eq!(m.writebacks(), 1);
    }

    #[test]
    fn drain_charges_toc_update() {
        let mut m = sys(4);
        let mut out = vec![];
        m.read_entry(SetIndex(0), Category::TocAccess, Issue::Parallel, &mut out);
        m.mark_dirty(SetIndex(0), Issue::Background, &mut out);
        out.clear();
        m.drain(&mut out);
        assert_eq!(out.len(), 1);
        assert_eq!((out[0].category, out[0].op), (Category::TocUpdate, Op::Write));
        out.clear();
        m.drain(&mut out);
        assert!(out.is_empty());
    }

    #[test]
    fn rho_matches_event_log() {
        let mut m = sys(8);
        let mut log = vec![];
        let mut out = vec![];
        for i in 0..2000u64 {
            let set = SetIndex((i * 37) % 1024);
            let before = out.len();
            let (_, hit) = m.read_entry(set, Category::TocAccess, Issue::Parallel, &mut out);
            log.push(hit);
            assert_eq!(hit, out[before..].iter().all(|t| t.category != Category::TocAccess));
        }
        let misses = log.iter().filter(|h| !**h).count() as f64;
        assert!((m.rho() - misses / log.len() as f64).abs() < 1e-12);
    }

    #[test]
    fn peek_does_not_count_or_touch_lru() {
        let mut m = sys(2);
        let mut out = vec![];
        m.read_entry(SetIndex(0), Category::TocAccess, Issue::Parallel, &mut out);
        m.read_entry(SetIndex(64), Category::TocAccess, Issue::Parallel, &mut out);
        assert!(m.peek(SetIndex(0)).is_some());
        assert_eq!(m.cache().lookups(), 2);
        // Line 0 is still LRU despite the peek.
        m.read_entry(SetIndex(128), Category::TocAccess, Issue::Parallel, &mut out);
        assert!(m.peek(SetIndex(0)).is_none());
        assert!(m.peek(SetIndex(64)).is_some());
    }

    #[test]
    fn repeat_reference_within_an_operation_is_one_lookup() {
        let mut m = sys(4);
        let mut out = vec![];
        m.begin_operation();
        let (_, hit) = m.read_entry(SetIndex(3), Category::TocAccess, Issue::Parallel, &mut out);
        assert!(!hit);
        m.toc_update(SetIndex(3), TocEntry::new(1, false), Issue::Background, &mut out);
        assert_eq!((m.cache().lookups(), m.cache().misses()), (1, 1));
        m.begin_operation();
        m.mark_dirty(SetIndex(4), Issue::Background, &mut out);
        assert_eq!((m.cache().lookups(), m.cache().misses()), (2, 1));
        assert_eq!(out.len(), 1);
    }
}
