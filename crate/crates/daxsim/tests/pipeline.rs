use daxsim::output::{read_csv, read_json, write_csv, write_json, RunOutput, TidyRow};
use daxsim::summary::summarize;
use daxsim::sweep::{points, sweep, Axis};
use daxsim::{config, missed_detections};
use daxsim_core::controller::{SimOptions, Simulator};
use daxsim_core::memory::AccessCounters;
use daxsim_core::redundancy::Region;
use daxsim_core::report::metrics;
use daxsim_core::{generate, run, ControllerMode, ExperimentConfig, MachineConfig, WorkloadKind, WorkloadSpec};
use proptest::prelude::*;

fn cfg(mode: ControllerMode, kind: WorkloadKind) -> ExperimentConfig {
    let mut w = WorkloadSpec::new(kind);
    w.threads = 2;
    w.region_bytes = 64 << 10;
    let mut c = ExperimentConfig::new(mode, w);
    c.machine = MachineConfig::desk();
    c.name = "t".into();
    c
}

#[test]
fn json_round_trip_is_lossless() {
    let mut c = cfg(ControllerMode::Evu, WorkloadKind::KvSkewed);
    c.seeds = vec![1, 2];
    let out = RunOutput::new(run(&c).unwrap());
    let mut buf = Vec::new();
    write_json(&out, &mut buf).unwrap();
    assert_eq!(read_json(&buf[..]).unwrap(), out);
}

#[test]
fn csv_round_trip_of_a_run() {
    let out = RunOutput::new(run(&cfg(ControllerMode::TxbObject, WorkloadKind::RandWrite)).unwrap());
    let rows = out.tidy();
    let mut buf = Vec::new();
    write_csv(&rows, &mut buf).unwrap();
    assert_eq!(read_csv(&buf[..]).unwrap(), rows);
}

#[test]
fn csv_rejects_wrong_header() {
    assert!(read_csv("a,b,c,d\nx,y,z,1\n".as_bytes()).is_err());
}

proptest! {
    #[test]
    fn csv_floats_survive_exactly(vals in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..40)) {
        let rows: Vec<TidyRow> = vals.iter().enumerate().map(|(i, &v)| TidyRow {
            experiment: format!("e,{i}"),
            mode: "evu".into(),
            metric: "m\"q".into(),
            value: v,
        }).collect();
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let back = read_csv(&buf[..]).unwrap();
        prop_assert_eq!(back.len(), rows.len());
        for (a, b) in back.iter().zip(&rows) {
            prop_assert_eq!(a.value.to_bits(), b.value.to_bits());
            prop_assert_eq!(&a.experiment, &b.experiment);
            prop_assert_eq!(&a.metric, &b.metric);
        }
    }
}

#[test]
fn summary_matches_recomputed_statistics() {
    let mut c = cfg(ControllerMode::Evu, WorkloadKind::RandWrite);
    c.seeds = vec![1, 2, 3];
    let reports = run(&c).unwrap();
    let summary = summarize(&reports);
    for s in &summary {
        let xs: Vec<f64> = reports
            .iter()
            .filter_map(|r| metrics(r).into_iter().find(|m| m.0 == s.metric).map(|m| m.1))
            .collect();
        assert_eq!(s.samples, 3);
        let mean = (xs[0] + xs[1] + xs[2]) / 3.0;
        let var = ((xs[0] - mean).powi(2) + (xs[1] - mean).powi(2) + (xs[2] - mean).powi(2)) / 3.0;
        assert!((s.mean - mean).abs() <= 1e-9 * mean.abs().max(1.0), "{}", s.metric);
        assert!((s.rms_error - var.sqrt()).abs() <= 1e-9 * mean.abs().max(1.0), "{}", s.metric);
    }
    let total = summary.iter().find(|s| s.metric == "nvm_total").unwrap();
    assert!(total.rms_error > 0.0, "seeds change the random stream");
}

#[test]
fn redundancy_ways_sweep_is_monotone_on_seq_write() {
    let mut c = cfg(ControllerMode::Evu, WorkloadKind::SeqWrite);
    c.workload.threads = 12;
    c.workload.region_bytes = 1 << 20;
    let ways: Vec<u32> = vec![1, 2, 4, 8];
    let reports = sweep(&c, &[Axis::RedundancyWays(ways.clone())], 4).unwrap();
    let reads: Vec<u64> = reports.iter().map(|r| r.counters.nvm.redundancy_reads).collect();
    assert_eq!(reports.len(), ways.len());
    assert!(reads.windows(2).all(|w| w[1] <= w[0]), "{reads:?}");
}

#[test]
fn diff_ways_equal_to_associativity_is_rejected() {
    let c = cfg(ControllerMode::Evu, WorkloadKind::SeqWrite);
    let assoc = c.machine.llc.associativity;
    let err = points(&c, &[Axis::DiffWays(vec![2, assoc])]).unwrap_err();
    assert!(err.to_string().contains("diff_ways"), "{err}");
}

#[test]
fn sweep_orders_points_and_seeds() {
    let mut c = cfg(ControllerMode::Evu, WorkloadKind::SeqRead);
    c.seeds = vec![5, 6];
    let axes = ["mode=naive,ev".parse::<Axis>().unwrap(), "num_dimms=2,4".parse().unwrap()];
    let reports = sweep(&c, &axes, 3).unwrap();
    let got: Vec<(String, u64)> = reports.iter().map(|r| (r.name.clone(), r.seed)).collect();
    let mut want = Vec::new();
    for m in ["naive", "ev"] {
        for d in [2, 4] {
            for s in [5, 6] {
                want.push((format!("t/mode={m},num_dimms={d}"), s));
            }
        }
    }
    assert_eq!(got, want);
    assert_eq!(reports[0].config.machine.nvm.num_dimms, 2);
}

#[test]
fn rendered_config_parses_back() {
    let mut c = cfg(ControllerMode::TxbPage, WorkloadKind::LogAppend);
    c.seeds = vec![3, 4];
    assert_eq!(config::parse(&config::render(&c).unwrap()).unwrap(), c);
}

#[test]
fn clean_runs_report_no_missed_detections() {
    let reports: Vec<_> = ControllerMode::ALL
        .iter()
        .flat_map(|&m| run(&cfg(m, WorkloadKind::RandWrite)).unwrap())
        .collect();
    assert_eq!(missed_detections(&reports), 0);
}

/// Runs `spec`'s stream to completion on `sim`, then commits and drains.
fn replay(sim: &mut Simulator, spec: &WorkloadSpec) {
    for ev in generate(spec).unwrap() {
        sim.apply(&ev).unwrap();
    }
    sim.finish().unwrap();
}

#[test]
fn counters_add_across_flushed_parts() {
    let machine = MachineConfig::desk();
    let mut a = WorkloadSpec::new(WorkloadKind::KvSkewed);
    a.threads = 3;
    a.region_bytes = 128 << 10;
    let mut b = a;
    b.kind = WorkloadKind::RandWrite;
    b.seed = 77;
    for mode in ControllerMode::ALL {
        let fresh = || {
            let mut s = Simulator::new(&machine, mode, 3, SimOptions::default()).unwrap();
            s.map_file(Region { base: 0, len: a.footprint() }).unwrap();
            s.reset_counters();
            s
        };
        let mut both = fresh();
        replay(&mut both, &a);
        replay(&mut both, &b);
        let mut parts = AccessCounters::new(3);
        for spec in [&a, &b] {
            let mut s = fresh();
            replay(&mut s, spec);
            parts.add(&s.counters());
        }
        assert_eq!(both.counters(), parts, "{mode}");
    }
}
