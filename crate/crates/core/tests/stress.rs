//! Randomized workloads against a flat-memory oracle.

mod common;

use std::collections::HashMap;

use common::*;
use daxsim_core::controller::{SimOptions, Simulator};
use daxsim_core::redundancy::Region;
use daxsim_core::workload::{generate, Op, WorkloadKind, WorkloadSpec};
use daxsim_core::ControllerMode;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LANES: usize = 3;
const LINES: u64 = 48 * 64;

fn tiny_sim(mode: ControllerMode) -> Simulator {
    let mut s = sim_with(&tiny(), mode, LANES, SimOptions::default());
    s.map_file(Region { base: 0, len: LINES * 64 }).unwrap();
    s
}

/// Applies (lane, store, line, payload seed) steps, checking loads against a
/// flat map and hierarchy invariants after every step.
fn drive(mode: ControllerMode, steps: &[(usize, bool, u64, u64)]) {
    let mut s = tiny_sim(mode);
    let mut flat: HashMap<u64, [u8; 64]> = HashMap::new();
    for (i, &(lane, store, idx, seed)) in steps.iter().enumerate() {
        let a = phys(&s, idx * 64);
        if store {
            s.store(lane, a, &patterned(seed)).unwrap();
            flat.insert(a, patterned(seed));
        } else {
            let got = s.load(lane, a).unwrap();
            assert_eq!(got, flat.get(&a).copied().unwrap_or([0; 64]), "{mode}: step {i}");
        }
        if let Err(e) = s.check_invariants() {
            panic!("{mode}: step {i}: {e}");
        }
        if mode.software() && i % 7 == 6 {
            s.commit(lane).unwrap();
        }
    }
    s.finish().unwrap();
    for (a, v) in &flat {
        assert_eq!(s.golden(*a), Some(*v));
    }
    let audit = s.audit();
    assert!(audit.is_clean(), "{mode}: {:?}", &audit.findings[..audit.findings.len().min(4)]);
    assert!(s.events().is_empty(), "{mode}: false positive");
    assert_eq!(s.silent_corruptions(), 0);
}

fn random_steps(seed: u64, n: usize) -> Vec<(usize, bool, u64, u64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|k| {
            // Half the traffic on a small hot set to mix hits and evictions.
            let idx = if rng.random_bool(0.5) { rng.random_range(0..64) } else { rng.random_range(0..LINES) };
            (rng.random_range(0..LANES), rng.random_bool(0.45), idx, k as u64 + 1)
        })
        .collect()
}

#[test]
fn every_mode_survives_random_traffic() {
    for mode in ControllerMode::ALL {
        for seed in 0..3 {
            drive(mode, &random_steps(seed, 3000));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn hierarchy_is_coherent_and_redundancy_consistent(
        mode in prop::sample::select(ControllerMode::ALL.to_vec()),
        steps in prop::collection::vec((0..LANES, any::<bool>(), 0..LINES, 1u64..1 << 40), 1..400),
    ) {
        drive(mode, &steps);
    }
}

#[test]
fn unmapped_traffic_matches_off_in_every_mode() {
    let mut spec = WorkloadSpec::new(WorkloadKind::StreamTriad);
    spec.threads = 2;
    spec.region_bytes = 96 << 10;
    spec.seed = 5;
    let events: Vec<_> = generate(&spec).unwrap().collect();
    let counters = |mode| {
        let mut s = sim_with(&machine(), mode, 2, SimOptions::default());
        for ev in &events {
            s.apply(ev).unwrap();
        }
        s.finish().unwrap();
        let mut media: Vec<_> =
            s.nvm().written_lines().filter(|&a| s.layout().is_data(a)).map(|a| (a, s.nvm().peek(a))).collect();
        media.sort_unstable();
        (s.counters(), media)
    };
    let off = counters(ControllerMode::Off);
    for mode in ControllerMode::ALL {
        assert_eq!(counters(mode), off, "{mode}");
    }
}

#[test]
fn workload_streams_are_identical_across_modes() {
    let spec = {
        let mut s = WorkloadSpec::new(WorkloadKind::KvSkewed);
        s.threads = 3;
        s.region_bytes = 64 << 10;
        s.ops_per_thread = Some(500);
        s
    };
    let a: Vec<_> = generate(&spec).unwrap().collect();
    let b: Vec<_> = generate(&spec).unwrap().collect();
    assert_eq!(a, b);
    assert!(a.iter().any(|e| e.op == Op::Store));
}
