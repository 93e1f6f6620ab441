#![allow(dead_code)]

use daxsim_core::controller::{SimOptions, Simulator};
use daxsim_core::memory::NvmStats;
use daxsim_core::redundancy::{Line, Region};
use daxsim_core::{ControllerMode, MachineConfig};

pub const PAGE: u64 = 4096;

/// Small machine: 4 DIMMs of 4 MiB, 8 KiB L1, 32 KiB L2, 1 MiB LLC.
pub fn machine() -> MachineConfig {
    let mut m = MachineConfig::desk();
    m.nvm.dimm_capacity = 4 << 20;
    m
}

pub fn sim(mode: ControllerMode, lanes: usize) -> Simulator {
    sim_with(&machine(), mode, lanes, SimOptions::default())
}

pub fn sim_with(m: &MachineConfig, mode: ControllerMode, lanes: usize, opts: SimOptions) -> Simulator {
    Simulator::new(m, mode, lanes, opts).unwrap()
}

/// Simulator with logical [0, bytes) mapped and counters cleared.
pub fn mapped(mode: ControllerMode, lanes: usize, bytes: u64) -> Simulator {
    let mut s = sim(mode, lanes);
    s.map_file(Region { base: 0, len: bytes }).unwrap();
    s.reset_counters();
    s
}

pub fn phys(s: &Simulator, logical: u64) -> u64 {
    s.layout().translate(logical).unwrap()
}

pub fn line(b: u8) -> Line {
    [b; 64]
}

pub fn patterned(seed: u64) -> Line {
    let mut l = [0u8; 64];
    let mut x = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
    for b in l.iter_mut() {
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        *b = x as u8;
    }
    l
}

pub fn nvm(s: &Simulator) -> NvmStats {
    s.counters().nvm
}

/// Caches small enough that a few hundred accesses exercise every eviction
/// path: 1 KiB L1, 2 KiB L2, 16 KiB LLC, 512 B controller cache.
pub fn tiny() -> MachineConfig {
    let mut m = machine();
    m.l1.capacity = 1 << 10;
    m.l1.associativity = 2;
    m.l2.capacity = 2 << 10;
    m.l2.associativity = 4;
    m.llc.capacity = 16 << 10;
    m.controller_cache.capacity = 512;
    m.controller_cache.associativity = 2;
    m
}
