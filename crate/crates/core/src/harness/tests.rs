use super::*;
use crate::config::{BypassMode, Organization};
use crate::traces::Pattern;

fn small(org: Organization) -> PolicyConfig {
    PolicyConfig::new(org).with_geometry(1 << 12, 1 << 16).with_l3(32 << 10, 8)
}

/// Every legal organization and flag combination.
pub(crate) fn config_lattice() -> Vec<PolicyConfig> {
    let mut v = vec![];
    for org in Organization::ALL {
        for bypass in BypassMode::ALL {
            for dcd in [false, true] {
                for pdm in [false, true] {
                    let c = PolicyConfig { bypass, dcd_enabled: dcd, pdm_enabled: pdm, ..small(org) };
                    if c.validate().is_ok() {
                        v.push(c);
                    }
                }
            }
        }
    }
    v
}

#[test]
fn lattice_covers_every_organization() {
    let l = config_lattice();
    for org in Organization::ALL {
        assert!(l.iter().any(|c| c.organization == org));
    }
    assert_eq!(l.iter().filter(|c| c.organization == Organization::TicToc).count(), 16);
}

#[test]
fn no_cache_passes_and_is_fully_useful() {
    let t = generate(&TraceSpec::new(Pattern::Mix, 1 << 15, 20_000).write_fraction(0.4)).unwrap();
    let r = run_trace(&small(Organization::NoCache), &t).unwrap();
    assert_eq!(r.verdict, Verdict::Pass);
    assert_eq!(r.useful_fraction(), 1.0);
}

#[test]
fn empty_trace_costs_nothing() {
    for c in config_lattice() {
        let r = run_trace(&c, &[]).unwrap();
        assert_eq!(r.ledger.total(), 0);
        assert_eq!(r.channel.busy_ns.iter().sum::<u64>(), 0);
        assert_eq!(r.verdict, Verdict::Pass);
    }
}

#[test]
fn single_write_drains_once() {
    let t = [MemAccess::write(1, 42)];
    let r = run_trace(&small(Organization::IdealSram), &t).unwrap();
    assert_eq!(r.count(Category::XpointWrite), 1);
    let r = run_trace(&small(Organization::NoCache), &t).unwrap();
    assert_eq!(r.count(Category::XpointWrite), 1);
    assert_eq!(r.ledger.total(), 2);
}

#[test]
fn whole_lattice_matches_reference_with_invariants() {
    for (i, c) in config_lattice().into_iter().enumerate() {
        let spec = TraceSpec::new(Pattern::Mix, 1 << 14, 20_000).write_fraction(0.4).span(16).seed(i as u64);
        let t = generate(&spec).unwrap();
        let opts = RunOptions { check_every: Some(97), ..RunOptions::default() };
        let r = run_trace_with(&c, &t, opts, i).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{} {}", c.organization, c.flags_label());
        assert_eq!(r.ledger.total(), r.channel.transfers);
    }
}

#[test]
fn dropped_writebacks_fail_at_first_evicted_address() {
    // Write line 0, push it out of a 1-set L3, then read it back.
    let cfg = PolicyConfig::new(Organization::NoCache).with_geometry(1 << 12, 1 << 16).with_l3(64 * 2, 2);
    let t = [MemAccess::write(1, 0), MemAccess::read(1, 8), MemAccess::read(1, 9), MemAccess::read(1, 0)];
    let opts = RunOptions { drop_writebacks: true, ..RunOptions::default() };
    let r = run_trace_with(&cfg, &t, opts, 0).unwrap();
    assert_eq!(r.verdict, Verdict::Fail { addr: LineAddr(0), stage: Stage::Fill });
    assert!(run_trace(&cfg, &t).unwrap().verdict.passed());

    for c in config_lattice() {
        let spec = TraceSpec::new(Pattern::Stream, 1 << 14, 20_000).write_fraction(0.5);
        let r = run_trace_with(&c, &generate(&spec).unwrap(), opts, 0).unwrap();
        assert!(!r.verdict.passed(), "{} {}", c.organization, c.flags_label());
    }
}

#[test]
fn out_of_range_address_is_rejected() {
    let c = small(Organization::Tic);
    let err = run_trace(&c, &[MemAccess::read(0, 1 << 16)]).unwrap_err();
    assert!(matches!(err, HarnessError::AddressOutOfRange { .. }));
}

#[test]
fn pdm_never_adds_memory_writes() {
    for bypass in BypassMode::ALL {
        for dcd in [false, true] {
            for seed in 0..3 {
                let spec = TraceSpec::new(Pattern::Mix, 1 << 15, 30_000).write_fraction(0.5).span(32).seed(seed);
                let t = generate(&spec).unwrap();
                let base = PolicyConfig { bypass, dcd_enabled: dcd, ..small(Organization::TicToc) };
                let off = run_trace(&base, &t).unwrap();
                let on = run_trace(&PolicyConfig { pdm_enabled: true, ..base }, &t).unwrap();
                assert_eq!(on.count(Category::XpointWrite), off.count(Category::XpointWrite));
            }
        }
    }
}

#[test]
fn single_pass_stream_writes_each_dirty_line_once_either_way() {
    for (footprint, wf) in [(1 << 15, 0.5), (1 << 14, 1.0), (1 << 16, 0.3)] {
        let t =
            generate(&TraceSpec::new(Pattern::Stream, footprint, footprint.min(40_000)).write_fraction(wf)).unwrap();
        let dirty_lines = t.iter().filter(|a| a.is_write()).count() as u64;
        let with = |bypass| run_trace(&PolicyConfig { bypass, ..small(Organization::TicToc) }, &t).unwrap();
        assert_eq!(with(BypassMode::WriteAllocate).count(Category::XpointWrite), dirty_lines);
        assert_eq!(with(BypassMode::Bypass90).count(Category::XpointWrite), dirty_lines);
    }
}

#[test]
fn write_allocation_can_split_writes_bypass90_would_coalesce() {
    // Line 0 is dirtied on both passes. Bypass90 happens to keep it cached
    // across the wrap; the write-allocated line 16 displaces it instead.
    let t = generate(&TraceSpec::new(Pattern::Stream, 32, 39).write_fraction(0.5).span(1)).unwrap();
    let base = PolicyConfig::new(Organization::TicToc).with_geometry(16, 16 * 64).with_l3(2 * 64 * 2, 2);
    let with = |bypass| run_trace(&PolicyConfig { bypass, ..base }, &t).unwrap().count(Category::XpointWrite);
    assert_eq!((with(BypassMode::WriteAllocate), with(BypassMode::Bypass90)), (21, 20));
}

#[test]
fn plan_results_keep_plan_order() {
    let mut plan = ExperimentPlan::default();
    for org in Organization::ALL {
        plan.push(small(org), TraceSource::Spec(TraceSpec::new(Pattern::PageLocal, 1 << 14, 5000).write_fraction(0.2)));
    }
    let results = run(&plan).unwrap();
    for (i, (r, org)) in results.iter().zip(Organization::ALL).enumerate() {
        assert_eq!((r.run_id, r.config.organization), (i, org));
        assert!(r.verdict.passed());
    }
}

#[test]
fn sweep_single_size_gives_one_row() {
    let t = generate(&TraceSpec::new(Pattern::PageLocal, 1 << 14, 5000)).unwrap();
    let rows = sweep_mdc_size(&small(Organization::TicToc), &t, &[256]).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].entries, 256);
    assert!(sweep_mdc_size(&small(Organization::Tic), &t, &[256]).is_err());
}

#[test]
fn all_miss_trace_shared_is_never_slower() {
    let t = generate(&TraceSpec::new(Pattern::Stream, 1 << 16, 20_000)).unwrap();
    let cmp = compare_modes(&small(Organization::NoCache), &t).unwrap();
    assert!(cmp.makespan_ratio() <= 1.0, "{}", cmp.makespan_ratio());
    let empty = compare_modes(&small(Organization::NoCache), &[]).unwrap();
    assert_eq!(empty.shared.channel.makespan_ns, 0);
    assert_eq!(empty.dedicated.channel.busy_ns.iter().sum::<u64>(), 0);
}
