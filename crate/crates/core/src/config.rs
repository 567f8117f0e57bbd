//! Run configuration and its flat `key = value` file format.
//!
//! Every key is optional; omitted keys take the defaults below, which follow
//! the evaluated system (4 GB direct-mapped DRAM cache, 64 GB 3D-XPoint,
//! 8 MB 16-way L3, 512-entry metadata cache).
//!
//! | key                      | values                                                   | default  |
//! |--------------------------|----------------------------------------------------------|----------|
//! | `organization`           | `no_cache`, `ideal_sram`, `tic`, `toc`, `tictoc`          | `tictoc` |
//! | `dcd`                    | `true` / `false`                                         | `false`  |
//! | `pdm`                    | `true` / `false`                                         | `false`  |
//! | `bypass`                 | `none`, `bypass90`, `write_allocate`, `preemptive_write_allocate` | `none` |
//! | `metadata_cache_entries` | integer ≥ 1                                              | `512`    |
//! | `channel_mode`           | `shared`, `dedicated`                                    | `shared` |
//! | `rng_seed`               | integer                                                  | `1`      |
//! | `cache_lines`            | power of two                                             | `2^26`   |
//! | `metadata_region_lines`  | integer                                                  | `2^20`   |
//! | `memory_lines`           | integer                                                  | `2^30`   |
//! | `l3_bytes`               | integer                                                  | `8388608`|
//! | `l3_ways`                | integer                                                  | `16`     |
//! | `max_in_flight`          | integer ≥ 1                                              | `64`     |
//!
//! Integers accept a `0x` prefix. Lines starting with `#` are comments.

use crate::geometry::{CacheGeometry, LINES_PER_TOC_LINE, LINE_BYTES};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value `{value}` for `{key}`")]
    BadValue { line: usize, key: String, value: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Organization {
    NoCache,
    IdealSram,
    Tic,
    Toc,
    TicToc,
}

impl Organization {
    pub const ALL: [Organization; 5] =
        [Organization::NoCache, Organization::IdealSram, Organization::Tic, Organization::Toc, Organization::TicToc];

    pub fn name(self) -> &'static str {
        match self {
            Organization::NoCache => "no_cache",
            Organization::IdealSram => "ideal_sram",
            Organization::Tic => "tic",
            Organization::Toc => "toc",
            Organization::TicToc => "tictoc",
        }
    }

    pub fn has_toc(self) -> bool {
        matches!(self, Organization::Toc | Organization::TicToc)
    }

    pub fn has_hit_miss_predictor(self) -> bool {
        matches!(self, Organization::Tic | Organization::Toc | Organization::TicToc)
    }

    /// Whether the L3 carries a DRAM-cache presence bit for this organization.
    pub fn uses_presence_bit(self) -> bool {
        self.has_hit_miss_predictor()
    }
}

impl FromStr for Organization {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        Organization::ALL.into_iter().find(|o| o.name() == s).ok_or(())
    }
}

impl fmt::Display for Organization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BypassMode {
    None,
    /// Install 10% of read-miss fills; dirty evictions of absent lines go to memory.
    Bypass90,
    /// `Bypass90`, plus dirty L3 evictions always install.
    WriteAllocate,
    /// `WriteAllocate`, plus write-likely read-miss fills always install.
    PreemptiveWriteAllocate,
}

impl BypassMode {
    pub const ALL: [BypassMode; 4] =
        [BypassMode::None, BypassMode::Bypass90, BypassMode::WriteAllocate, BypassMode::PreemptiveWriteAllocate];

    pub fn name(self) -> &'static str {
        match self {
            BypassMode::None => "none",
            BypassMode::Bypass90 => "bypass90",
            BypassMode::WriteAllocate => "write_allocate",
            BypassMode::PreemptiveWriteAllocate => "preemptive_write_allocate",
        }
    }
}

impl FromStr for BypassMode {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        BypassMode::ALL.into_iter().find(|b| b.name() == s).ok_or(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelMode {
    /// Two channels, each carrying DRAM cache and 3D-XPoint traffic.
    Shared,
    /// One DRAM-only channel and one 3D-XPoint-only channel.
    Dedicated,
}

impl ChannelMode {
    pub fn name(self) -> &'static str {
        match self {
            ChannelMode::Shared => "shared",
            ChannelMode::Dedicated => "dedicated",
        }
    }
}

impl FromStr for ChannelMode {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "shared" => Ok(ChannelMode::Shared),
            "dedicated" => Ok(ChannelMode::Dedicated),
            _ => Err(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct L3Config {
    pub bytes: u64,
    pub ways: usize,
}

impl Default for L3Config {
    fn default() -> Self {
        L3Config { bytes: 8 << 20, ways: 16 }
    }
}

impl L3Config {
    pub fn sets(&self) -> usize {
        (self.bytes / LINE_BYTES) as usize / self.ways
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub organization: Organization,
    pub dcd_enabled: bool,
    pub pdm_enabled: bool,
    pub bypass: BypassMode,
    pub metadata_cache_entries: usize,
    pub channel_mode: ChannelMode,
    pub rng_seed: u64,
    pub geometry: CacheGeometry,
    pub l3: L3Config,
    pub max_in_flight: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            organization: Organization::TicToc,
            dcd_enabled: false,
            pdm_enabled: false,
            bypass: BypassMode::None,
            metadata_cache_entries: 512,
            channel_mode: ChannelMode::Shared,
            rng_seed: 1,
            geometry: CacheGeometry::default(),
            l3: L3Config::default(),
            max_in_flight: 64,
        }
    }
}

impl PolicyConfig {
    pub fn new(organization: Organization) -> Self {
        PolicyConfig { organization, ..Default::default() }
    }

    /// TicToc with every bandwidth optimization switched on.
    pub fn tictoc_full() -> Self {
        PolicyConfig {
            dcd_enabled: true,
            pdm_enabled: true,
            bypass: BypassMode::PreemptiveWriteAllocate,
            ..PolicyConfig::new(Organization::TicToc)
        }
    }

    pub fn with_geometry(mut self, cache_lines: u64, memory_lines: u64) -> Self {
        self.geometry = CacheGeometry::with_cache_lines(cache_lines, memory_lines);
        self
    }

    pub fn with_l3(mut self, bytes: u64, ways: usize) -> Self {
        self.l3 = L3Config { bytes, ways };
        self
    }

    /// Short flag summary used in reports, e.g. `dcd+pdm+bypass90`.
    pub fn flags_label(&self) -> String {
        let mut parts = Vec::new();
        if self.dcd_enabled {
            parts.push("dcd".to_string());
        }
        if self.pdm_enabled {
            parts.push("pdm".to_string());
        }
        if self.bypass != BypassMode::None {
            parts.push(self.bypass.name().to_string());
        }
        if parts.is_empty() {
            "-".to_string()
        } else {
            parts.join("+")
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        let org = self.organization;
        if (self.dcd_enabled || self.pdm_enabled) && org != Organization::TicToc {
            return invalid(format!("dcd/pdm require organization tictoc, not {org}"));
        }
        match self.bypass {
            BypassMode::None => {}
            BypassMode::Bypass90 if matches!(org, Organization::Tic | Organization::TicToc) => {}
            _ if org == Organization::TicToc => {}
            b => return invalid(format!("bypass {} is not available for {org}", b.name())),
        }
        let g = &self.geometry;
        if g.cache_lines == 0 || !g.cache_lines.is_power_of_two() {
            return invalid(format!("cache_lines {} must be a power of two", g.cache_lines));
        }
        if g.metadata_region_lines * LINES_PER_TOC_LINE < g.cache_lines {
            return invalid("metadata region too small to cover every set".into());
        }
        if g.memory_lines < g.cache_lines {
            return invalid("memory_lines must be at least cache_lines".into());
        }
        if org.has_toc() && g.alias_ratio() > 64 {
            return invalid(format!(
                "memory/cache ratio {} exceeds the 64 tags a 6-bit metadata tag can name",
                g.alias_ratio()
            ));
        }
        if self.metadata_cache_entries == 0 {
            return invalid("metadata_cache_entries must be at least 1".into());
        }
        if self.l3.ways == 0 || self.l3.sets() == 0 || !self.l3.bytes.is_multiple_of(LINE_BYTES * self.l3.ways as u64) {
            return invalid("l3_bytes must be a positive multiple of 64 * l3_ways".into());
        }
        if self.max_in_flight == 0 {
            return invalid("max_in_flight must be at least 1".into());
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = PolicyConfig::default();
        let mut metadata_lines = None;
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
                "organization" => cfg.organization = value.parse().map_err(|_| bad())?,
                "dcd" => cfg.dcd_enabled = parse_bool(value).ok_or_else(bad)?,
                "pdm" => cfg.pdm_enabled = parse_bool(value).ok_or_else(bad)?,
                "bypass" => cfg.bypass = value.parse().map_err(|_| bad())?,
                "metadata_cache_entries" => cfg.metadata_cache_entries = parse_u64(value).ok_or_else(bad)? as usize,
                "channel_mode" => cfg.channel_mode = value.parse().map_err(|_| bad())?,
                "rng_seed" => cfg.rng_seed = parse_u64(value).ok_or_else(bad)?,
                "cache_lines" => cfg.geometry.cache_lines = parse_u64(value).ok_or_else(bad)?,
                "metadata_region_lines" => metadata_lines = Some(parse_u64(value).ok_or_else(bad)?),
                "memory_lines" => cfg.geometry.memory_lines = parse_u64(value).ok_or_else(bad)?,
                "l3_bytes" => cfg.l3.bytes = parse_u64(value).ok_or_else(bad)?,
                "l3_ways" => cfg.l3.ways = parse_u64(value).ok_or_else(bad)? as usize,
                "max_in_flight" => cfg.max_in_flight = parse_u64(value).ok_or_else(bad)? as usize,
                _ => return Err(ConfigError::UnknownKey { line, key: key.to_string() }),
            }
        }
        cfg.geometry.metadata_region_lines =
            metadata_lines.unwrap_or_else(|| cfg.geometry.cache_lines.div_ceil(LINES_PER_TOC_LINE));
        cfg.validate()?;
        Ok(cfg)
    }

    /// Renders the config in the file format accepted by [`PolicyConfig::parse`].
    pub fn to_file_string(&self) -> String {
        let g = &self.geometry;
        format!(
            "organization = {}\ndcd = {}\npdm = {}\nbypass = {}\nmetadata_cache_entries = {}\n\
             channel_mode = {}\nrng_seed = {}\ncache_lines = {:#x}\nmetadata_region_lines = {:#x}\n\
             memory_lines = {:#x}\nl3_bytes = {}\nl3_ways = {}\nmax_in_flight = {}\n",
            self.organization,
            self.dcd_enabled,
            self.pdm_enabled,
            self.bypass.name(),
            self.metadata_cache_entries,
            self.channel_mode.name(),
            self.rng_seed,
            g.cache_lines,
            g.metadata_region_lines,
            g.memory_lines,
            self.l3.bytes,
            self.l3.ways,
            self.max_in_flight,
        )
    }
}

pub(crate) fn parse_bool(v: &str) -> Option<bool> {
    match v {
        "true" | "1" | "on" | "yes" => Some(true),
        "false" | "0" | "off" | "no" => Some(false),
        _ => None,
    }
}

pub(crate) fn parse_u64(v: &str) -> Option<u64> {
    let v = v.replace('_', "");
    match v.strip_prefix("0x") {
        Some(hex) => u64::from_str_radix(hex, 16).ok(),
        None => v.parse().ok(),
    }
}
