//! PC-indexed predictors: the hit/miss predictor that routes TicToc lookups
//! and the signature-based write predictor (SWP).

use crate::geometry::SetIndex;
use crate::rng::{mix64, pc_hash};
use rustc_hash::FxHashMap;
use serde::Serialize;

/// Outcome predicted for a DRAM-cache lookup.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HitMiss {
    Hit,
    Miss,
}

/// Table of 2-bit saturating counters indexed by hashed PC.
#[derive(Clone, Debug)]
pub struct HitMissPredictor {
    counters: Vec<u8>,
}

impl HitMissPredictor {
    pub const ENTRIES: usize = 4096;
    pub const INIT: u8 = 3;
    pub const MAX: u8 = 3;
    pub const STORAGE_BYTES: u64 = Self::ENTRIES as u64 * 2 / 8;

    pub fn new() -> Self {
        HitMissPredictor { counters: vec![Self::INIT; Self::ENTRIES] }
    }

    fn index(pc: u64) -> usize {
        (pc_hash(pc) % Self::ENTRIES as u64) as usize
    }

    pub fn counter(&self, pc: u64) -> u8 {
        self.counters[Self::index(pc)]
    }

    pub fn predict(&self, pc: u64) -> HitMiss {
        if self.counter(pc) >= 2 {
            HitMiss::Hit
        } else {
            HitMiss::Miss
        }
    }

    pub fn train(&mut self, pc: u64, hit: bool) {
        let c = &mut self.counters[Self::index(pc)];
        *c = if hit { (*c + 1).min(Self::MAX) } else { c.saturating_sub(1) };
    }

    /// Forces the counter for `pc`; used to set up conformance scenarios.
    pub fn set_counter(&mut self, pc: u64, value: u8) {
        self.counters[Self::index(pc)] = value.min(Self::MAX);
    }
}

impl Default for HitMissPredictor {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WritePrediction {
    WriteLikely,
    WriteUnlikely,
}

impl WritePrediction {
    pub fn is_likely(self) -> bool {
        self == WritePrediction::WriteLikely
    }
}

/// Installing-PC signature: a 9-bit table index plus the 9-bit tag checked on lookup.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Signature {
    pub index: u16,
    pub tag: u16,
}

impl Signature {
    pub fn of(pc: u64) -> Self {
        let h = pc_hash(pc);
        Signature { index: (h & 0x1ff) as u16, tag: ((h >> 9) & 0x1ff) as u16 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
struct SwpEntry {
    valid: bool,
    tag: u16,
    counter: u8,
}

/// 512 entries of {9-bit PC tag, 3-bit saturating counter}.
#[derive(Clone, Debug)]
pub struct WritePredictorTable {
    entries: Vec<SwpEntry>,
}

impl WritePredictorTable {
    pub const ENTRIES: usize = 512;
    pub const COUNTER_MAX: u8 = 7;
    pub const STORAGE_BYTES: u64 = Self::ENTRIES as u64 * (9 + 3) / 8;

    pub fn new() -> Self {
        WritePredictorTable { entries: vec![SwpEntry::default(); Self::ENTRIES] }
    }

    pub fn predict(&self, pc: u64) -> WritePrediction {
        let sig = Signature::of(pc);
        let e = self.entries[sig.index as usize];
        if e.valid && e.tag == sig.tag && e.counter > 0 {
            WritePrediction::WriteLikely
        } else {
            WritePrediction::WriteUnlikely
        }
    }

    /// Counter for `pc`, or `None` when no entry carries its tag.
    pub fn counter(&self, pc: u64) -> Option<u8> {
        let sig = Signature::of(pc);
        let e = self.entries[sig.index as usize];
        (e.valid && e.tag == sig.tag).then_some(e.counter)
    }

    /// Trains the entry for `sig`; a tag mismatch re-tags the entry and resets it first.
    pub fn train(&mut self, sig: Signature, written: bool) {
        let e = &mut self.entries[sig.index as usize];
        if !e.valid || e.tag != sig.tag {
            *e = SwpEntry { valid: true, tag: sig.tag, counter: 0 };
        }
        e.counter = if written { (e.counter + 1).min(Self::COUNTER_MAX) } else { e.counter.saturating_sub(1) };
    }

    pub fn counters_in_range(&self) -> bool {
        self.entries.iter().all(|e| e.counter <= Self::COUNTER_MAX)
    }
}

impl Default for WritePredictorTable {
    fn default() -> Self {
        Self::new()
    }
}

/// Extra metadata kept for lines of sampled sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SampledLineMeta {
    pub signature: Signature,
    pub written_to: bool,
}

/// Fraction of sets that train the write predictor, in basis points.
pub const SAMPLED_SET_BASIS_POINTS: u64 = 100;

/// Whether `set` is one of the ~1% of sets that train the write predictor.
pub fn is_sampled_set(set: SetIndex, seed: u64) -> bool {
    mix64(set.0 ^ mix64(seed ^ 0x5357_5053_414d)) % 10_000 < SAMPLED_SET_BASIS_POINTS
}

/// Prediction accuracy tally.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Accuracy {
    pub correct: u64,
    pub total: u64,
}

impl Accuracy {
    pub fn record(&mut self, predicted: bool, actual: bool) {
        self.total += 1;
        if predicted == actual {
            self.correct += 1;
        }
    }

    /// Fraction correct, or `None` before any line was scored.
    pub fn ratio(&self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }
}

/// The write predictor together with the sampled-line state that trains it.
#[derive(Clone, Debug)]
pub struct WritePredictor {
    table: WritePredictorTable,
    sampled: FxHashMap<u64, SampledLineMeta>,
    seed: u64,
}

impl WritePredictor {
    pub fn new(seed: u64) -> Self {
        WritePredictor { table: WritePredictorTable::new(), sampled: FxHashMap::default(), seed }
    }

    pub fn table(&self) -> &WritePredictorTable {
        &self.table
    }

    pub fn is_sampled(&self, set: SetIndex) -> bool {
        is_sampled_set(set, self.seed)
    }

    pub fn predict(&self, pc: u64) -> WritePrediction {
        self.table.predict(pc)
    }

    pub fn sampled_meta(&self, set: SetIndex) -> Option<SampledLineMeta> {
        self.sampled.get(&set.0).copied()
    }

    pub fn observe_install(&mut self, set: SetIndex, pc: u64) {
        if self.is_sampled(set) {
            self.sampled.insert(set.0, SampledLineMeta { signature: Signature::of(pc), written_to: false });
        }
    }

    pub fn observe_write(&mut self, set: SetIndex) {
        if let Some(m) = self.sampled.get_mut(&set.0) {
            m.written_to = true;
        }
    }

    /// Trains on the line leaving `set` and forgets its sampled metadata.
    pub fn learn_on_evict(&mut self, set: SetIndex) {
        if let Some(m) = self.sampled.remove(&set.0) {
            self.table.train(m.signature, m.written_to);
        }
    }

    /// Trains on a line that lived only in the L3 (bypassed the DRAM cache).
    pub fn learn_bypassed(&mut self, set: SetIndex, pc: u64, written: bool) {
        if self.is_sampled(set) {
            self.table.train(Signature::of(pc), written);
        }
    }

    /// Trains `pc` directly, regardless of sampling; used to set up scenarios.
    pub fn train_pc(&mut self, pc: u64, written: bool) {
        self.table.train(Signature::of(pc), written);
    }
}
