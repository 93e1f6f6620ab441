//! Firmware-bug timelines: a correct write, a faulty operation, then a read.

mod common;

use common::*;
use daxsim_core::controller::{DetectionPoint, SimOptions, Simulator};
use daxsim_core::memory::{FaultKind, FaultScheduleEntry};
use daxsim_core::redundancy::Region;
use daxsim_core::ControllerMode;

const DETECTING: [ControllerMode; 4] =
    [ControllerMode::Naive, ControllerMode::Ev, ControllerMode::EvCache, ControllerMode::Evu];

fn setup(mode: ControllerMode, recovery: bool) -> Simulator {
    let opts = SimOptions { recovery_enabled: recovery, ..SimOptions::default() };
    let mut s = sim_with(&machine(), mode, 1, opts);
    s.map_file(Region { base: 0, len: 256 * PAGE }).unwrap();
    s
}

fn write_through(s: &mut Simulator, addr: u64, v: daxsim_core::redundancy::Line) {
    s.store(0, addr, &v).unwrap();
    s.clean_line(0, addr).unwrap();
}

fn arm(s: &mut Simulator, kind: FaultKind, trigger: u64, target: Option<u64>) {
    s.nvm_mut().arm(FaultScheduleEntry { kind, trigger, occurrence: 1, misdirect_target: target }).unwrap();
}

/// Lost write on the blue line: write v1, write v2 (lost), read.
fn lost_write_timeline(mode: ControllerMode, recovery: bool) -> (Simulator, u64, daxsim_core::redundancy::Line) {
    let mut s = setup(mode, recovery);
    let blue = phys(&s, 10 * PAGE + 5 * 64);
    let (v1, v2) = (patterned(1), patterned(2));
    write_through(&mut s, blue, v1);
    arm(&mut s, FaultKind::LostWrite, blue, None);
    write_through(&mut s, blue, v2);
    s.flush_all().unwrap();
    assert_eq!(s.nvm().fired().len(), 1);
    assert_eq!(s.nvm().peek(blue), v1, "media still holds the old data");
    assert_eq!(s.nvm().expected(blue), v2);
    let got = s.load(0, blue).unwrap();
    (s, blue, got)
}

#[test]
fn lost_write_goes_unnoticed_without_redundancy() {
    let (s, _, got) = lost_write_timeline(ControllerMode::Off, true);
    assert_eq!(got, patterned(1), "stale read");
    assert!(s.events().is_empty());
    assert_eq!(s.silent_corruptions(), 1);
}

#[test]
fn lost_write_detected_by_checksums() {
    for mode in DETECTING {
        let (s, blue, got) = lost_write_timeline(mode, false);
        assert_eq!(s.events().len(), 1, "{mode}");
        let e = s.events()[0];
        assert_eq!(e.line_addr, blue);
        assert_eq!(e.point, DetectionPoint::Fill);
        assert!(!e.recovered);
        assert_ne!(e.expected, e.computed);
        assert_eq!(got, patterned(1));
        assert_eq!(s.silent_corruptions(), 0);
    }
}

#[test]
fn lost_write_recovers_acknowledged_value() {
    for mode in DETECTING {
        let (mut s, blue, got) = lost_write_timeline(mode, true);
        assert_eq!(got, patterned(2), "{mode}");
        assert!(s.events()[0].recovered);
        assert_eq!(s.nvm().peek(blue), patterned(2));
        s.flush_all().unwrap();
        let audit = s.audit();
        assert!(audit.is_clean(), "{mode}: {:?}", audit.findings);
    }
}

/// Misdirected write: blue written correctly, then a write meant for green
/// lands on blue.
fn misdirected_write_timeline(mode: ControllerMode) -> (Simulator, u64, u64) {
    let mut s = setup(mode, true);
    let blue = phys(&s, 10 * PAGE + 5 * 64);
    let green = phys(&s, 77 * PAGE + 9 * 64);
    assert_ne!(s.layout().stripe_of(blue).unwrap(), s.layout().stripe_of(green).unwrap());
    write_through(&mut s, blue, patterned(1));
    arm(&mut s, FaultKind::MisdirectedWrite, green, Some(blue));
    write_through(&mut s, green, patterned(2));
    s.flush_all().unwrap();
    assert_eq!(s.nvm().peek(blue), patterned(2), "blue incorrectly replaced");
    assert_eq!(s.nvm().peek(green), line(0), "green still old");
    (s, blue, green)
}

#[test]
fn misdirected_write_corrupts_silently_without_redundancy() {
    let (mut s, blue, green) = misdirected_write_timeline(ControllerMode::Off);
    assert_eq!(s.load(0, blue).unwrap(), patterned(2));
    assert_eq!(s.load(0, green).unwrap(), line(0));
    assert!(s.events().is_empty());
    assert_eq!(s.silent_corruptions(), 2);
}

#[test]
fn misdirected_write_detected_and_both_lines_recovered() {
    for mode in DETECTING {
        let (mut s, blue, green) = misdirected_write_timeline(mode);
        assert_eq!(s.load(0, blue).unwrap(), patterned(1), "{mode}: blue rebuilt");
        assert_eq!(s.events().len(), 1);
        assert_eq!(s.load(0, green).unwrap(), patterned(2), "{mode}: green rebuilt");
        assert_eq!(s.events().len(), 2);
        assert!(s.events().iter().all(|e| e.recovered));
        assert_eq!(s.silent_corruptions(), 0);
        s.flush_all().unwrap();
        assert!(s.audit().is_clean(), "{mode}");
    }
}

#[test]
fn misdirected_read_detected() {
    for mode in DETECTING {
        let mut s = setup(mode, true);
        let blue = phys(&s, 3 * PAGE);
        let other = phys(&s, 90 * PAGE);
        write_through(&mut s, blue, patterned(1));
        write_through(&mut s, other, patterned(9));
        s.flush_all().unwrap();
        arm(&mut s, FaultKind::MisdirectedRead, blue, Some(other));
        assert_eq!(s.load(0, blue).unwrap(), patterned(1), "{mode}");
        assert_eq!(s.events().len(), 1);
        assert!(s.events()[0].recovered);
        assert_eq!(s.silent_corruptions(), 0);
    }
    let mut s = setup(ControllerMode::Off, true);
    let blue = phys(&s, 3 * PAGE);
    let other = phys(&s, 90 * PAGE);
    write_through(&mut s, other, patterned(9));
    s.flush_all().unwrap();
    arm(&mut s, FaultKind::MisdirectedRead, blue, Some(other));
    assert_eq!(s.load(0, blue).unwrap(), patterned(9));
    assert_eq!(s.silent_corruptions(), 1);
}

#[test]
fn ev_catches_stale_media_at_writeback() {
    // A line kept in the LLC across its own lost write is caught when it is
    // next written back, before the stale content can poison the parity.
    for mode in [ControllerMode::Ev, ControllerMode::EvCache] {
        let mut s = setup(mode, true);
        let blue = phys(&s, 10 * PAGE);
        write_through(&mut s, blue, patterned(1));
        arm(&mut s, FaultKind::LostWrite, blue, None);
        write_through(&mut s, blue, patterned(2));
        write_through(&mut s, blue, patterned(3));
        assert_eq!(s.events().len(), 1, "{mode}");
        assert_eq!(s.events()[0].point, DetectionPoint::Writeback);
        assert!(s.events()[0].recovered);
        s.flush_all().unwrap();
        assert!(s.audit().is_clean(), "{mode}");
        assert_eq!(s.nvm().peek(blue), patterned(3));
    }
}

#[test]
fn two_failed_members_of_a_stripe_are_unrecoverable() {
    for mode in DETECTING {
        let mut s = setup(mode, true);
        let l = *s.layout();
        let a = phys(&s, 0);
        let stripe = l.stripe_of(a).unwrap();
        let b = l.stripe_members(stripe).find(|&(_, p, par)| !par && p != a).unwrap().1;
        for (x, v) in [(a, 1), (b, 2)] {
            write_through(&mut s, x, patterned(v));
        }
        for x in [a, b] {
            arm(&mut s, FaultKind::LostWrite, x, None);
        }
        for (x, v) in [(a, 3), (b, 4)] {
            write_through(&mut s, x, patterned(v));
        }
        s.flush_all().unwrap();
        s.load(0, a).unwrap();
        assert_eq!(s.events().len(), 1, "{mode}");
        assert!(!s.events()[0].recovered);
        assert_eq!(s.recoveries(), (1, 1));
    }
}

#[test]
fn map_initializes_line_checksums_from_media() {
    let mut s = sim(ControllerMode::Evu, 1);
    for i in 0..40u64 {
        let a = phys(&s, i * 97 * 64 % (32 * PAGE));
        s.preload(a, patterned(i)).unwrap();
    }
    s.map_file(Region { base: 0, len: 32 * PAGE }).unwrap();
    let audit = s.audit();
    assert!(audit.is_clean(), "{:?}", audit.findings);
    assert_eq!(audit.line_entries, 32 * 64);
    let before: Vec<_> = (0..32 * 64).map(|i| s.nvm().peek(phys(&s, i * 64))).collect();
    s.unmap_file(Region { base: 0, len: 32 * PAGE }).unwrap();
    let after: Vec<_> = (0..32 * 64).map(|i| s.nvm().peek(phys(&s, i * 64))).collect();
    assert_eq!(before, after);
    assert!(s.audit().is_clean());
}

#[test]
fn double_map_rejected_and_unmap_frees_buffer() {
    let mut s = sim(ControllerMode::Ev, 1);
    let r = Region { base: 0, len: 8 * PAGE };
    s.map_file(r).unwrap();
    assert!(s.map_file(r).is_err());
    assert!(s.map_file(Region { base: 4 * PAGE, len: 8 * PAGE }).is_err());
    let buf = s.mappings()[0].dax_cl.unwrap();
    s.unmap_file(r).unwrap();
    assert!(s.unmap_file(r).is_err());
    s.map_file(r).unwrap();
    assert_eq!(s.mappings()[0].dax_cl.unwrap().base, buf.base, "space was reclaimed");
}
