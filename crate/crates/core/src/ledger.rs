//! Channel transfer records and the per-category bandwidth ledger.

use crate::geometry::LINE_BYTES;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Purpose of one 64-byte channel transfer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    XpointRead,
    XpointWrite,
    CacheHitRead,
    /// Writeback of a dirty L3 line into the DRAM cache.
    CacheWrite,
    Install,
    MissProbe,
    TocAccess,
    TocUpdate,
    DirtyBitUpdate,
}

impl Category {
    pub const COUNT: usize = 9;
    pub const ALL: [Category; Category::COUNT] = [
        Category::XpointRead,
        Category::XpointWrite,
        Category::CacheHitRead,
        Category::CacheWrite,
        Category::Install,
        Category::MissProbe,
        Category::TocAccess,
        Category::TocUpdate,
        Category::DirtyBitUpdate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::XpointRead => "xpoint_read",
            Category::XpointWrite => "xpoint_write",
            Category::CacheHitRead => "cache_hit_read",
            Category::CacheWrite => "cache_write",
            Category::Install => "install",
            Category::MissProbe => "miss_probe",
            Category::TocAccess => "toc_access",
            Category::TocUpdate => "toc_update",
            Category::DirtyBitUpdate => "dirty_bit_update",
        }
    }

    /// Transfers that service a read or write rather than install or maintenance.
    pub fn is_useful(self) -> bool {
        matches!(self, Category::XpointRead | Category::XpointWrite | Category::CacheHitRead | Category::CacheWrite)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Device {
    Dram,
    Xpoint,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Op {
    Read,
    Write,
}

/// When a transfer may start relative to the earlier transfers of the same request.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Issue {
    /// Starts with the current group (in parallel with the previous transfer).
    Parallel,
    /// Starts after every earlier transfer of the request completes.
    Serial,
    /// Like `Serial`, but off the critical path: the requester does not wait for it.
    Background,
}

/// One 64-byte transfer on a channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transfer {
    pub category: Category,
    pub device: Device,
    pub op: Op,
    /// Device location: a DRAM line slot or an XPoint line address.
    pub location: u64,
    pub issue: Issue,
}

impl Transfer {
    pub const BYTES: u64 = LINE_BYTES;
}

/// Transfer counters by category, plus sub-counters for attribution detail.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandwidthLedger {
    counts: [u64; Category::COUNT],
    /// Speculative memory reads made useless by a DRAM-cache hit (inside `MissProbe`).
    pub wasted_parallel_reads: u64,
    /// Dirty metadata lines written back from the metadata cache (inside `TocUpdate`/`DirtyBitUpdate`).
    pub metadata_writebacks: u64,
}

impl BandwidthLedger {
    pub fn record(&mut self, t: &Transfer) {
        self.counts[t.category as usize] += 1;
    }

    pub fn count(&self, c: Category) -> u64 {
        self.counts[c as usize]
    }

    pub fn bytes(&self, c: Category) -> u64 {
        self.count(c) * Transfer::BYTES
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn total_bytes(&self) -> u64 {
        self.total() * Transfer::BYTES
    }

    pub fn useful(&self) -> u64 {
        Category::ALL.iter().filter(|c| c.is_useful()).map(|&c| self.count(c)).sum()
    }

    /// Useful share of all transfers; 1.0 when nothing was transferred.
    pub fn useful_fraction(&self) -> f64 {
        match self.total() {
            0 => 1.0,
            t => self.useful() as f64 / t as f64,
        }
    }

    /// Category-wise difference `self - earlier`.
    pub fn since(&self, earlier: &BandwidthLedger) -> BandwidthLedger {
        let mut d = BandwidthLedger::default();
        for c in Category::ALL {
            d.counts[c as usize] = self.count(c) - earlier.count(c);
        }
        d.wasted_parallel_reads = self.wasted_parallel_reads - earlier.wasted_parallel_reads;
        d.metadata_writebacks = self.metadata_writebacks - earlier.metadata_writebacks;
        d
    }

    pub fn counts(&self) -> [u64; Category::COUNT] {
        self.counts
    }
}
