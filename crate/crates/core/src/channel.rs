//! Occupancy and latency model of the memory channels.
//!
//! Each channel is a FIFO bus moving one 64-byte transfer every 4 ns. A
//! request is the list of transfers caused by one L3 event; it is issued as
//! soon as fewer than `max_in_flight` requests are outstanding. Transfers
//! marked `Serial` or `Background` wait for everything before them in the
//! same request. Times are integer nanoseconds.

use crate::config::ChannelMode;
use crate::ledger::{BandwidthLedger, Device, Issue, Op, Transfer};
use lru::LruCache;
use serde::Serialize;
use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::num::NonZeroUsize;

pub const CHANNELS: usize = 2;
/// Per-channel bandwidth in bytes per nanosecond (16 GB/s).
pub const BUS_BYTES_PER_NS: u64 = 16;
/// Bus occupancy of one 64-byte transfer.
pub const TRANSFER_NS: u64 = Transfer::BYTES / BUS_BYTES_PER_NS;
pub const DRAM_ACCESS_NS: u64 = 13;
pub const XPOINT_ROW_HIT_NS: u64 = 4;
pub const XPOINT_ROW_MISS_NS: u64 = 80;
pub const XPOINT_WRITE_NS: u64 = 320;
pub const XPOINT_WRITE_SLOTS: usize = 64;
pub const XPOINT_ROW_BUFFERS: usize = 64;
pub const XPOINT_ROW_BYTES: u64 = 256;

#[derive(Debug)]
struct Channel {
    bus_free: u64,
    busy: u64,
    rows: LruCache<u64, ()>,
    /// Completion times of XPoint writes still occupying a write slot.
    write_slots: BinaryHeap<Reverse<u64>>,
}

impl Channel {
    fn new() -> Self {
        Channel {
            bus_free: 0,
            busy: 0,
            rows: LruCache::new(NonZeroUsize::new(XPOINT_ROW_BUFFERS).expect("nonzero")),
            write_slots: BinaryHeap::new(),
        }
    }
}

/// Timing summary of one run.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ChannelStats {
    pub requests: u64,
    pub transfers: u64,
    pub bytes: u64,
    pub busy_ns: Vec<u64>,
    /// Time until every transfer, including posted XPoint writes, has completed.
    pub makespan_ns: u64,
    pub mean_latency_ns: f64,
    pub p50_latency_ns: u64,
    pub p99_latency_ns: u64,
    /// Transfers by category as charged on the channels.
    pub ledger: BandwidthLedger,
}

#[derive(Debug)]
pub struct ChannelModel {
    mode: ChannelMode,
    channels: Vec<Channel>,
    max_in_flight: usize,
    in_flight: BinaryHeap<Reverse<u64>>,
    clock: u64,
    makespan: u64,
    latencies: Vec<u64>,
    ledger: BandwidthLedger,
}

impl ChannelModel {
    pub fn new(mode: ChannelMode, max_in_flight: usize) -> Self {
        assert!(max_in_flight > 0);
        ChannelModel {
            mode,
            channels: (0..CHANNELS).map(|_| Channel::new()).collect(),
            max_in_flight,
            in_flight: BinaryHeap::new(),
            clock: 0,
            makespan: 0,
            latencies: Vec::new(),
            ledger: BandwidthLedger::default(),
        }
    }

    pub fn mode(&self) -> ChannelMode {
        self.mode
    }

    fn channel_of(&self, t: &Transfer) -> usize {
        match self.mode {
            ChannelMode::Shared => (t.location % CHANNELS as u64) as usize,
            ChannelMode::Dedicated => match t.device {
                Device::Dram => 0,
                Device::Xpoint => 1,
            },
        }
    }

    /// Occupies a bus for `t`, which may start its device work at `ready`.
    /// Returns the time the transfer completes.
    pub fn charge(&mut self, t: &Transfer, ready: u64) -> u64 {
        self.ledger.record(t);
        let idx = self.channel_of(t);
        let ch = &mut self.channels[idx];
        let start = match (t.device, t.op) {
            (Device::Dram, Op::Read) => (ready + DRAM_ACCESS_NS).max(ch.bus_free),
            (Device::Dram, Op::Write) => ready.max(ch.bus_free),
            (Device::Xpoint, Op::Read) => {
                let row = t.location * Transfer::BYTES / XPOINT_ROW_BYTES;
                let service = if ch.rows.get(&row).is_some() { XPOINT_ROW_HIT_NS } else { XPOINT_ROW_MISS_NS };
                ch.rows.put(row, ());
                (ready + service).max(ch.bus_free)
            }
            (Device::Xpoint, Op::Write) => {
                let slot_free = if ch.write_slots.len() < XPOINT_WRITE_SLOTS {
                    0
                } else {
                    ch.write_slots.pop().map_or(0, |Reverse(t)| t)
                };
                ready.max(ch.bus_free).max(slot_free)
            }
        };
        let end = start + TRANSFER_NS;
        ch.bus_free = end;
        ch.busy += TRANSFER_NS;
        if (t.device, t.op) == (Device::Xpoint, Op::Write) {
            ch.write_slots.push(Reverse(end + XPOINT_WRITE_NS));
            self.makespan = self.makespan.max(end + XPOINT_WRITE_NS);
        }
        self.makespan = self.makespan.max(end);
        end
    }

    /// Issues one request. Empty requests are ignored.
    pub fn submit(&mut self, transfers: &[Transfer]) {
        if transfers.is_empty() {
            return;
        }
        let mut issue = self.clock;
        while self.in_flight.len() >= self.max_in_flight {
            let Reverse(done) = self.in_flight.pop().expect("nonempty");
            issue = issue.max(done);
        }
        self.clock = issue;
        let (mut group_start, mut all_done, mut critical_done) = (issue, issue, issue);
        let mut background = false;
        for t in transfers {
            match t.issue {
                Issue::Parallel => {}
                Issue::Serial => group_start = all_done,
                Issue::Background => {
                    group_start = all_done;
                    background = true;
                }
            }
            let end = self.charge(t, group_start);
            all_done = all_done.max(end);
            if !background {
                critical_done = critical_done.max(end);
            }
        }
        self.latencies.push(critical_done - issue);
        self.in_flight.push(Reverse(critical_done));
    }

    pub fn stats(&self) -> ChannelStats {
        let mut sorted = self.latencies.clone();
        sorted.sort_unstable();
        let pct = |p: f64| -> u64 {
            if sorted.is_empty() {
                0
            } else {
                let rank = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
                sorted[rank - 1]
            }
        };
        let mean = if sorted.is_empty() { 0.0 } else { sorted.iter().sum::<u64>() as f64 / sorted.len() as f64 };
        ChannelStats {
            requests: self.latencies.len() as u64,
            transfers: self.ledger.total(),
            bytes: self.ledger.total_bytes(),
            busy_ns: self.channels.iter().map(|c| c.busy).collect(),
            makespan_ns: self.makespan,
            mean_latency_ns: mean,
            p50_latency_ns: pct(0.50),
            p99_latency_ns: pct(0.99),
            ledger: self.ledger,
        }
    }
}
