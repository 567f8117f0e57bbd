//! Address geometry for a direct-mapped DRAM cache with out-of-line metadata.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Bytes per cache line at every level of the hierarchy.
pub const LINE_BYTES: u64 = 64;

/// Number of 1-byte metadata entries packed into one metadata line.
pub const LINES_PER_TOC_LINE: u64 = 64;

/// A 64-byte cache-line index (byte address >> 6).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LineAddr(pub u64);

impl LineAddr {
    pub fn from_byte_addr(byte: u64) -> Self {
        LineAddr(byte / LINE_BYTES)
    }

    pub fn value(self) -> u64 {
        self.0
    }
}

impl fmt::Display for LineAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#x}", self.0)
    }
}

/// Index of a direct-mapped DRAM-cache set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SetIndex(pub u64);

/// Identifier of a metadata line in the out-of-line metadata region.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TocLineId(pub u64);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheGeometry {
    /// Data lines in the DRAM cache (one per set, direct-mapped). Power of two.
    pub cache_lines: u64,
    /// Lines in the metadata region.
    pub metadata_region_lines: u64,
    /// Capacity of the backing 3D-XPoint memory, in lines.
    pub memory_lines: u64,
}

impl Default for CacheGeometry {
    /// 4 GB cache, 64 MB metadata region, 64 GB memory.
    fn default() -> Self {
        CacheGeometry { cache_lines: 1 << 26, metadata_region_lines: 1 << 20, memory_lines: 1 << 30 }
    }
}

impl CacheGeometry {
    /// Geometry with the metadata region sized exactly to cover `cache_lines`.
    pub fn with_cache_lines(cache_lines: u64, memory_lines: u64) -> Self {
        CacheGeometry { cache_lines, metadata_region_lines: cache_lines.div_ceil(LINES_PER_TOC_LINE), memory_lines }
    }

    pub fn lines_per_toc_line(&self) -> u64 {
        LINES_PER_TOC_LINE
    }

    /// Number of distinct lines that can map onto one set.
    pub fn alias_ratio(&self) -> u64 {
        self.memory_lines.div_ceil(self.cache_lines)
    }

    pub fn contains(&self, addr: LineAddr) -> bool {
        addr.0 < self.memory_lines
    }

    pub fn cache_index(&self, addr: LineAddr) -> SetIndex {
        cache_index(addr, self)
    }

    /// Full tag of `addr` (the bits above the set index).
    pub fn tag_of(&self, addr: LineAddr) -> u64 {
        addr.0 >> self.cache_lines.trailing_zeros()
    }

    /// Line address that lives in `set` with `tag`.
    pub fn addr_of(&self, set: SetIndex, tag: u64) -> LineAddr {
        LineAddr((tag << self.cache_lines.trailing_zeros()) | set.0)
    }
}

/// Direct-mapped set of `addr`.
pub fn cache_index(addr: LineAddr, geom: &CacheGeometry) -> SetIndex {
    SetIndex(addr.0 & (geom.cache_lines - 1))
}

/// Metadata line covering `set`, and the entry slot within it.
pub fn toc_line_of(set: SetIndex) -> (TocLineId, usize) {
    (TocLineId(set.0 / LINES_PER_TOC_LINE), (set.0 % LINES_PER_TOC_LINE) as usize)
}
