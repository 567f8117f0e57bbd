use super::*;
use crate::config::BypassMode;

const PC: u64 = 0x40_0000;

fn cfg(org: Organization) -> PolicyConfig {
    PolicyConfig::new(org).with_geometry(256, 4096)
}

fn eviction(addr: u64, fill: Fill, payload: u64) -> Eviction {
    Eviction {
        addr: LineAddr(addr),
        dirty: true,
        dcp: fill.present_in_l4,
        dcd: fill.present_in_l4 && fill.dirty_in_l4,
        pc: PC,
        payload,
        filled_absent: !fill.present_in_l4,
        prediction: fill.prediction,
    }
}

fn cats(out: &[Transfer]) -> Vec<Category> {
    out.iter().map(|t| t.category).collect()
}

#[test]
fn no_cache_goes_straight_to_memory() {
    let mut c = Controller::new(&cfg(Organization::NoCache));
    let mut out = vec![];
    let f = c.read_miss(LineAddr(3), PC, &mut out);
    assert!(!f.present_in_l4);
    c.dirty_eviction(&eviction(3, f, 77), &mut out);
    assert_eq!(cats(&out), vec![Category::XpointRead, Category::XpointWrite]);
    assert_eq!(c.memory_value(LineAddr(3)), 77);
    out.clear();
    c.drain(&mut out);
    assert!(out.is_empty());
}

#[test]
fn ideal_sram_drain_writes_dirty_line_once() {
    let mut c = Controller::new(&cfg(Organization::IdealSram));
    let mut out = vec![];
    let f = c.read_miss(LineAddr(3), PC, &mut out);
    c.dirty_eviction(&eviction(3, f, 5), &mut out);
    out.clear();
    c.drain(&mut out);
    assert_eq!(cats(&out), vec![Category::XpointWrite]);
    assert_eq!(c.memory_value(LineAddr(3)), 5);
}

#[test]
fn replacing_a_line_revokes_its_presence() {
    let mut c = Controller::new(&cfg(Organization::Tic));
    let mut out = vec![];
    c.read_miss(LineAddr(3), PC, &mut out);
    assert!(c.take_revocations().is_empty());
    c.read_miss(LineAddr(3 + 256), PC, &mut out);
    assert_eq!(c.take_revocations(), vec![LineAddr(3)]);
}

#[test]
fn bypass90_installs_about_one_in_ten() {
    let mut c = Controller::new(&PolicyConfig { bypass: BypassMode::Bypass90, ..cfg(Organization::Tic) });
    let mut out = vec![];
    let n = 20_000;
    let installed = (0..n).filter(|&i| c.read_miss(LineAddr(i % 4096), PC, &mut out).present_in_l4).count();
    let frac = installed as f64 / n as f64;
    assert!((0.08..0.12).contains(&frac), "{frac}");
}

#[test]
fn bypassed_clean_miss_costs_no_cache_transfers() {
    let mut c = Controller::new(&PolicyConfig { bypass: BypassMode::Bypass90, ..cfg(Organization::TicToc) });
    c.hit_miss_predictor_mut().set_counter(PC, 0);
    let mut out = vec![];
    for i in 0..200 {
        out.clear();
        let f = c.read_miss(LineAddr(i), PC, &mut out);
        if !f.present_in_l4 {
            assert!(out.iter().all(|t| t.device == Device::Xpoint || t.category == Category::TocAccess), "{out:?}");
            assert_eq!(c.l4_line(LineAddr(i)), None);
        }
    }
}

#[test]
fn bypass90_sends_absent_dirty_lines_to_memory() {
    let mut c = Controller::new(&PolicyConfig { bypass: BypassMode::Bypass90, ..cfg(Organization::Tic) });
    let mut out = vec![];
    let absent = Fill { present_in_l4: false, dirty_in_l4: false, payload: 0, prediction: None };
    c.dirty_eviction(&eviction(9, absent, 4), &mut out);
    assert_eq!(cats(&out), vec![Category::XpointWrite]);
    assert_eq!(c.memory_value(LineAddr(9)), 4);
}

#[test]
fn write_allocate_installs_absent_dirty_lines() {
    let mut c = Controller::new(&PolicyConfig { bypass: BypassMode::WriteAllocate, ..cfg(Organization::TicToc) });
    let mut out = vec![];
    let absent = Fill { present_in_l4: false, dirty_in_l4: false, payload: 0, prediction: None };
    c.dirty_eviction(&eviction(9, absent, 4), &mut out);
    assert!(cats(&out).contains(&Category::Install));
    let line = c.l4_line(LineAddr(9)).unwrap();
    assert!(line.tic_dirty);
    assert_eq!(line.payload, 4);
    c.check_invariants().unwrap();
}

#[test]
fn preemptive_dirty_marking_sets_only_out_of_line_bit() {
    let mut c = Controller::new(&PolicyConfig { pdm_enabled: true, dcd_enabled: true, ..cfg(Organization::TicToc) });
    c.write_predictor_mut().train_pc(PC, true);
    let mut out = vec![];
    let f = c.read_miss(LineAddr(7), PC, &mut out);
    assert!(f.present_in_l4 && f.dirty_in_l4);
    assert!(!c.l4_line(LineAddr(7)).unwrap().tic_dirty);
    assert!(c.metadata().unwrap().entry(SetIndex(7)).dirty());
    c.check_invariants().unwrap();
}

#[test]
fn wasted_parallel_read_is_a_probe_on_memory() {
    let mut c = Controller::new(&cfg(Organization::Tic));
    let mut out = vec![];
    c.read_miss(LineAddr(3), PC, &mut out);
    c.hit_miss_predictor_mut().set_counter(PC, 0);
    out.clear();
    c.read_miss(LineAddr(3), PC, &mut out);
    assert_eq!(cats(&out), vec![Category::CacheHitRead, Category::MissProbe]);
    assert_eq!(out[1].device, Device::Xpoint);
    assert_eq!(c.ledger().wasted_parallel_reads, 1);
}

#[test]
fn predicted_hit_actual_miss_serializes_memory_read() {
    let mut c = Controller::new(&cfg(Organization::Tic));
    let mut out = vec![];
    c.read_miss(LineAddr(3), PC, &mut out);
    assert_eq!(out[0].category, Category::MissProbe);
    assert_eq!((out[1].category, out[1].issue), (Category::XpointRead, Issue::Serial));
}

#[test]
fn toc_dirty_tracks_tic_dirty_without_pdm() {
    for org in [Organization::Toc, Organization::TicToc] {
        let mut c = Controller::new(&cfg(org));
        let mut out = vec![];
        for i in 0..64u64 {
            let f = c.read_miss(LineAddr(i * 37 % 4096), PC + i % 3, &mut out);
            if i % 2 == 0 {
                let dcp = c.take_revocations().is_empty() && f.present_in_l4;
                let f = Fill { present_in_l4: dcp, ..f };
                if dcp {
                    c.dirty_eviction(&eviction(i * 37 % 4096, f, i), &mut out);
                }
            }
            c.check_invariants().unwrap();
        }
    }
}
