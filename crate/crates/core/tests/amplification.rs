mod common;

use common::*;
use daxsim_core::ControllerMode;

#[test]
fn naive_cold_read_reads_whole_page_plus_checksum() {
    let mut s = mapped(ControllerMode::Naive, 1, 64 * PAGE);
    let a = phys(&s, 5 * PAGE + 3 * 64);
    s.load(0, a).unwrap();
    let n = nvm(&s);
    assert_eq!(n.reads(), 65);
    assert_eq!(n.data_reads, 1);
    assert_eq!(n.redundancy_reads, 64);
    assert_eq!(n.writes(), 0);
}

#[test]
fn ev_cold_read_reads_line_and_its_checksum() {
    for mode in [ControllerMode::Ev, ControllerMode::EvCache, ControllerMode::Evu] {
        let mut s = mapped(mode, 1, 64 * PAGE);
        s.load(0, phys(&s, 7 * PAGE)).unwrap();
        let n = nvm(&s);
        assert_eq!((n.data_reads, n.redundancy_reads, n.writes()), (1, 1, 0), "{mode}");
    }
}

#[test]
fn off_and_software_modes_read_once() {
    for mode in [ControllerMode::Off, ControllerMode::TxbObject, ControllerMode::TxbPage] {
        let mut s = mapped(mode, 1, 64 * PAGE);
        s.load(0, phys(&s, 7 * PAGE)).unwrap();
        assert_eq!(nvm(&s).reads(), 1, "{mode}");
    }
}

#[test]
fn ev_cold_write_costs_four_reads_and_four_writes_at_writeback() {
    let mut s = mapped(ControllerMode::Ev, 1, 64 * PAGE);
    let a = phys(&s, 9 * PAGE + 128);
    s.store(0, a, &line(0xAB)).unwrap();
    let fill = nvm(&s);
    assert_eq!(fill.reads(), 2);
    s.reset_counters();
    s.flush_all().unwrap();
    let wb = nvm(&s);
    assert_eq!(wb.redundancy_reads, 4, "old data, line checksum, page checksum, parity");
    assert_eq!(wb.data_reads, 0);
    assert_eq!(wb.redundancy_writes, 3);
    assert_eq!(wb.data_writes, 1);
    assert!(s.audit().is_clean());
}

#[test]
fn naive_writeback_reads_old_data_checksum_and_parity() {
    let mut s = mapped(ControllerMode::Naive, 1, 64 * PAGE);
    let a = phys(&s, 2 * PAGE);
    s.store(0, a, &line(1)).unwrap();
    s.reset_counters();
    s.flush_all().unwrap();
    let wb = nvm(&s);
    assert_eq!((wb.redundancy_reads, wb.redundancy_writes, wb.data_writes), (3, 2, 1));
    assert!(s.audit().is_clean());
}

#[test]
fn evu_warm_writeback_is_a_single_data_write() {
    let mut s = mapped(ControllerMode::Evu, 1, 64 * PAGE);
    let a = phys(&s, 3 * PAGE);
    s.store(0, a, &line(1)).unwrap();
    s.clean_line(0, a).unwrap();
    s.store(0, a, &line(2)).unwrap();
    s.reset_counters();
    s.clean_line(0, a).unwrap();
    let n = nvm(&s);
    assert_eq!((n.reads(), n.data_writes, n.redundancy_writes), (0, 1, 0));
    s.flush_all().unwrap();
    assert!(s.audit().is_clean());
}

#[test]
fn evu_cold_writeback_fetches_three_redundancy_lines() {
    let mut s = mapped(ControllerMode::Evu, 1, 64 * PAGE);
    let a = phys(&s, 3 * PAGE);
    s.store(0, a, &line(1)).unwrap();
    s.reset_counters();
    s.clean_line(0, a).unwrap();
    let n = nvm(&s);
    // The line checksum line is still cached from the fill.
    assert_eq!((n.redundancy_reads, n.data_writes, n.redundancy_writes), (2, 1, 0));
}
