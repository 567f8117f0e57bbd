//! Experiment runner: drives traces through L3 → controller → channels,
//! checks every run against a flat reference memory, and runs plans,
//! metadata-cache size sweeps and shared/dedicated channel comparisons.

pub mod conformance;
pub mod report;

use crate::channel::{ChannelModel, ChannelStats};
use crate::config::{ChannelMode, ConfigError, PolicyConfig};
use crate::geometry::LineAddr;
use crate::ledger::{BandwidthLedger, Category, Transfer};
use crate::llc::{Eviction, Fill, LlcError, L3};
use crate::policies::Controller;
use crate::predictors::Accuracy;
use crate::rng::payload_token;
use crate::traces::{generate, read_trace, MemAccess, TraceError, TraceSpec};
use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::Serialize;
use std::fmt;
use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Llc(#[from] LlcError),
    #[error("access {index}: address {addr} outside memory of {capacity} lines")]
    AddressOutOfRange { index: u64, addr: LineAddr, capacity: u64 },
    #[error("invariant violated after access {index}: {detail}")]
    Invariant { index: u64, detail: String },
    #[error("{0}")]
    Unsupported(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Where a divergence from the reference memory was detected.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Stage {
    /// A fill returned data other than the last value written.
    Fill,
    /// Memory overlaid with dirty cached lines, before drain.
    BeforeDrain,
    /// Raw memory contents after drain.
    AfterDrain,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Pass,
    Fail { addr: LineAddr, stage: Stage },
}

impl Verdict {
    pub fn passed(self) -> bool {
        self == Verdict::Pass
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Pass => f.write_str("PASS"),
            Verdict::Fail { addr, stage } => write!(f, "FAIL({stage:?} at {addr})"),
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    /// Lose the data of L3 writebacks (fault injection for the oracle).
    pub drop_writebacks: bool,
    /// Check cross-structure invariants every this many accesses.
    pub check_every: Option<u64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunResult {
    pub run_id: usize,
    pub config: PolicyConfig,
    pub accesses: u64,
    pub ledger: BandwidthLedger,
    pub rho: Option<f64>,
    pub metadata_lookups: u64,
    pub channel: ChannelStats,
    pub write_accuracy: Accuracy,
    pub verdict: Verdict,
}

impl RunResult {
    pub fn count(&self, c: Category) -> u64 {
        self.ledger.count(c)
    }

    pub fn useful_fraction(&self) -> f64 {
        self.ledger.useful_fraction()
    }
}

/// One simulation instance. Feed it accesses with [`Simulation::step`] and
/// call [`Simulation::finish`] to drain and judge it.
pub struct Simulation {
    cfg: PolicyConfig,
    l3: L3,
    ctrl: Controller,
    channel: ChannelModel,
    oracle: FxHashMap<u64, u64>,
    writes: u64,
    accesses: u64,
    warmup: u64,
    options: RunOptions,
    failure: Option<Verdict>,
    buf: Vec<Transfer>,
}

impl Simulation {
    /// `expected_accesses` sets the warmup window (its first 10%) for prediction scoring.
    pub fn new(cfg: &PolicyConfig, expected_accesses: u64, options: RunOptions) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let mut ctrl = Controller::new(cfg);
        if options.drop_writebacks {
            ctrl.inject_dropped_writebacks();
        }
        let warmup = expected_accesses / 10;
        ctrl.set_scoring(warmup == 0);
        Ok(Simulation {
            cfg: *cfg,
            l3: L3::new(&cfg.l3),
            ctrl,
            channel: ChannelModel::new(cfg.channel_mode, cfg.max_in_flight),
            oracle: FxHashMap::default(),
            writes: 0,
            accesses: 0,
            warmup,
            options,
            failure: None,
            buf: Vec::new(),
        })
    }

    pub fn controller(&self) -> &Controller {
        &self.ctrl
    }

    pub fn l3(&self) -> &L3 {
        &self.l3
    }

    fn fail(&mut self, addr: LineAddr, stage: Stage) {
        self.failure.get_or_insert(Verdict::Fail { addr, stage });
    }

    fn submit(&mut self) {
        self.channel.submit(&self.buf);
        self.buf.clear();
    }

    /// Clears presence hints of lines the DRAM cache just replaced, including
    /// the eviction and fill still in flight for this access.
    fn apply_revocations(&mut self, eviction: &mut Option<Eviction>, fill: &mut Option<(LineAddr, Fill)>) {
        for a in self.ctrl.take_revocations() {
            self.l3.revoke_presence(a);
            if let Some(e) = eviction.as_mut().filter(|e| e.addr == a) {
                e.dcp = false;
                e.dcd = false;
            }
            if let Some((_, f)) = fill.as_mut().filter(|(m, _)| *m == a) {
                f.present_in_l4 = false;
                f.dirty_in_l4 = false;
                f.prediction = None;
            }
        }
    }

    pub fn step(&mut self, acc: &MemAccess) -> Result<(), HarnessError> {
        let capacity = self.cfg.geometry.memory_lines;
        if acc.addr.0 >= capacity {
            return Err(HarnessError::AddressOutOfRange { index: self.accesses, addr: acc.addr, capacity });
        }
        let token = if acc.is_write() {
            self.writes += 1;
            payload_token(acc.addr.0, self.writes)
        } else {
            0
        };
        let outcome = self.l3.access(acc, token)?;
        let mut eviction = outcome.eviction;
        let mut fill = None;
        if let Some(m) = outcome.miss {
            let f = self.ctrl.read_miss(m.addr, m.pc, &mut self.buf);
            self.submit();
            if f.payload != self.oracle.get(&m.addr.0).copied().unwrap_or(0) {
                self.fail(m.addr, Stage::Fill);
            }
            fill = Some((m.addr, f));
            self.apply_revocations(&mut eviction, &mut fill);
        }
        if let Some(ev) = eviction {
            if ev.dirty {
                self.ctrl.dirty_eviction(&ev, &mut self.buf);
                self.submit();
            } else {
                self.ctrl.clean_eviction(&ev);
            }
            self.apply_revocations(&mut None, &mut fill);
        }
        if let Some((addr, f)) = fill {
            self.l3.fill(addr, f)?;
        }
        if acc.is_write() {
            self.oracle.insert(acc.addr.0, token);
        }
        self.accesses += 1;
        if self.accesses == self.warmup {
            self.ctrl.set_scoring(true);
        }
        if let Some(n) = self.options.check_every {
            if self.accesses.is_multiple_of(n.max(1)) {
                self.check_invariants().map_err(|detail| HarnessError::Invariant { index: self.accesses, detail })?;
            }
        }
        Ok(())
    }

    /// Cross-checks the L3 hints against the DRAM cache and the controller's own invariants.
    pub fn check_invariants(&self) -> Result<(), String> {
        if !self.l3.hints_consistent() {
            return Err("an L3 line has dcd without dcp".into());
        }
        for line in self.l3.valid_lines() {
            if line.dcp && self.ctrl.l4_line(line.addr).is_none() {
                return Err(format!("L3 line {} claims a DRAM-cache copy that is gone", line.addr));
            }
            if line.dcd {
                let set = self.cfg.geometry.cache_index(line.addr);
                if let Some(m) = self.ctrl.metadata() {
                    if !m.entry(set).dirty() {
                        return Err(format!("L3 line {} has dcd but its metadata is clean", line.addr));
                    }
                }
            }
        }
        self.ctrl.check_invariants()
    }

    /// Lowest address where `memory` disagrees with the reference.
    fn first_divergence(&self, memory: &FxHashMap<u64, u64>) -> Option<LineAddr> {
        let get = |m: &FxHashMap<u64, u64>, a: &u64| m.get(a).copied().unwrap_or(0);
        self.oracle
            .keys()
            .chain(memory.keys())
            .filter(|a| get(memory, a) != get(&self.oracle, a))
            .min()
            .map(|&a| LineAddr(a))
    }

    fn effective_memory(&self) -> FxHashMap<u64, u64> {
        let mut mem = self.ctrl.memory().clone();
        for l in self.ctrl.l4_dirty_lines() {
            mem.insert(l.addr.0, l.payload);
        }
        for l in self.l3.valid_lines().filter(|l| l.dirty) {
            mem.insert(l.addr.0, l.payload);
        }
        mem
    }

    /// Drains every level, checks memory before and after, and reports.
    pub fn finish(mut self, run_id: usize) -> RunResult {
        if let Some(a) = self.first_divergence(&self.effective_memory()) {
            self.fail(a, Stage::BeforeDrain);
        }
        let mut evictions = self.l3.drain();
        for i in 0..evictions.len() {
            let ev = evictions[i];
            if ev.dirty {
                self.ctrl.dirty_eviction(&ev, &mut self.buf);
                self.submit();
            } else {
                self.ctrl.clean_eviction(&ev);
            }
            // Installs made while draining can displace lines still queued here.
            for gone in self.ctrl.take_revocations() {
                for later in evictions[i + 1..].iter_mut().filter(|e| e.addr == gone) {
                    later.dcp = false;
                    later.dcd = false;
                }
            }
        }
        let mut drained = Vec::new();
        self.ctrl.drain(&mut drained);
        for t in &drained {
            self.channel.submit(std::slice::from_ref(t));
        }
        if let Some(a) = self.first_divergence(self.ctrl.memory()) {
            self.fail(a, Stage::AfterDrain);
        }
        let meta = self.ctrl.metadata();
        RunResult {
            run_id,
            config: self.cfg,
            accesses: self.accesses,
            ledger: *self.ctrl.ledger(),
            rho: self.ctrl.rho(),
            metadata_lookups: meta.map_or(0, |m| m.cache().lookups()),
            channel: self.channel.stats(),
            write_accuracy: self.ctrl.write_accuracy(),
            verdict: self.failure.unwrap_or(Verdict::Pass),
        }
    }
}

pub fn run_trace(cfg: &PolicyConfig, trace: &[MemAccess]) -> Result<RunResult, HarnessError> {
    run_trace_with(cfg, trace, RunOptions::default(), 0)
}

pub fn run_trace_with(
    cfg: &PolicyConfig,
    trace: &[MemAccess],
    options: RunOptions,
    run_id: usize,
) -> Result<RunResult, HarnessError> {
    let mut sim = Simulation::new(cfg, trace.len() as u64, options)?;
    for acc in trace {
        sim.step(acc)?;
    }
    Ok(sim.finish(run_id))
}

#[derive(Clone, Debug)]
pub enum TraceSource {
    Spec(TraceSpec),
    File(PathBuf),
    Inline(Arc<Vec<MemAccess>>),
}

impl TraceSource {
    pub fn load(&self, memory_lines: u64) -> Result<Arc<Vec<MemAccess>>, HarnessError> {
        Ok(match self {
            TraceSource::Spec(s) => Arc::new(generate(s)?),
            TraceSource::File(p) => Arc::new(read_trace(BufReader::new(File::open(p)?), memory_lines)?),
            TraceSource::Inline(t) => Arc::clone(t),
        })
    }
}

#[derive(Clone, Debug)]
pub struct PlannedRun {
    pub config: PolicyConfig,
    pub trace: TraceSource,
}

#[derive(Clone, Debug, Default)]
pub struct ExperimentPlan {
    pub runs: Vec<PlannedRun>,
}

impl ExperimentPlan {
    pub fn push(&mut self, config: PolicyConfig, trace: TraceSource) {
        self.runs.push(PlannedRun { config, trace });
    }
}

/// Executes every run of `plan` in parallel; results come back in plan order.
pub fn run(plan: &ExperimentPlan) -> Result<Vec<RunResult>, HarnessError> {
    plan.runs
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let trace = r.trace.load(r.config.geometry.memory_lines)?;
            run_trace_with(&r.config, &trace, RunOptions::default(), i)
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub entries: usize,
    pub rho: f64,
    pub makespan_ns: u64,
    pub result: RunResult,
}

/// Re-runs `trace` once per metadata-cache size, with everything else fixed.
pub fn sweep_mdc_size(cfg: &PolicyConfig, trace: &[MemAccess], sizes: &[usize]) -> Result<Vec<SweepRow>, HarnessError> {
    if !cfg.organization.has_toc() {
        return Err(HarnessError::Unsupported(format!("{} has no metadata cache to sweep", cfg.organization)));
    }
    sizes
        .par_iter()
        .enumerate()
        .map(|(i, &entries)| {
            let c = PolicyConfig { metadata_cache_entries: entries, ..*cfg };
            let result = run_trace_with(&c, trace, RunOptions::default(), i)?;
            Ok(SweepRow { entries, rho: result.rho.unwrap_or(0.0), makespan_ns: result.channel.makespan_ns, result })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct ModeComparison {
    pub shared: RunResult,
    pub dedicated: RunResult,
}

impl ModeComparison {
    /// Shared-mode makespan relative to dedicated-mode makespan.
    pub fn makespan_ratio(&self) -> f64 {
        self.shared.channel.makespan_ns as f64 / self.dedicated.channel.makespan_ns.max(1) as f64
    }
}

/// Runs `trace` under the same policy with shared and with dedicated channels.
pub fn compare_modes(cfg: &PolicyConfig, trace: &[MemAccess]) -> Result<ModeComparison, HarnessError> {
    let with = |mode| PolicyConfig { channel_mode: mode, ..*cfg };
    let (shared, dedicated) = rayon::join(
        || run_trace(&with(ChannelMode::Shared), trace),
        || run_trace(&with(ChannelMode::Dedicated), trace),
    );
    Ok(ModeComparison { shared: shared?, dedicated: dedicated? })
}

#[cfg(test)]
mod tests;
