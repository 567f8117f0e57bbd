//! On-chip SRAM cost of each organization.

use crate::config::{Organization, PolicyConfig};
use crate::geometry::LINE_BYTES;
use crate::predictors::{HitMissPredictor, WritePredictorTable};
use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StorageItem {
    pub component: &'static str,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StorageReport {
    pub items: Vec<StorageItem>,
    /// Bits kept next to every L3 line (presence, dirtiness).
    pub bits_per_l3_line: u32,
}

impl StorageReport {
    pub fn total_bytes(&self) -> u64 {
        self.items.iter().map(|i| i.bytes).sum()
    }

    /// Total rounded to the nearest KiB.
    pub fn total_kib(&self) -> u64 {
        (self.total_bytes() + 512) / 1024
    }
}

/// SRAM provisioned by `config`'s organization. TicToc is costed with every
/// structure it provisions, whichever feature flags are switched on.
pub fn storage_budget(config: &PolicyConfig) -> StorageReport {
    let predictor = StorageItem { component: "hit/miss predictor", bytes: HitMissPredictor::STORAGE_BYTES };
    let mdc = StorageItem { component: "metadata cache", bytes: config.metadata_cache_entries as u64 * LINE_BYTES };
    match config.organization {
        Organization::NoCache => StorageReport { items: vec![], bits_per_l3_line: 0 },
        Organization::IdealSram => StorageReport {
            // One byte of tag/valid/dirty per cached line.
            items: vec![StorageItem { component: "sram tag store", bytes: config.geometry.cache_lines }],
            bits_per_l3_line: 0,
        },
        Organization::Tic => StorageReport { items: vec![predictor], bits_per_l3_line: 1 },
        Organization::Toc => StorageReport { items: vec![predictor, mdc], bits_per_l3_line: 1 },
        Organization::TicToc => StorageReport {
            items: vec![
                predictor,
                mdc,
                StorageItem { component: "write predictor", bytes: WritePredictorTable::STORAGE_BYTES },
            ],
            bits_per_l3_line: 2,
        },
    }
}
