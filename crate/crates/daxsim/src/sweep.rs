//! Parameter sweeps. Points run on worker threads; results come back in
//! point order so output does not depend on scheduling.

use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use daxsim_core::{run, ControllerMode, ExperimentConfig, ExperimentReport};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Axis {
    Mode(Vec<ControllerMode>),
    RedundancyWays(Vec<u32>),
    DiffWays(Vec<u32>),
    NumDimms(Vec<u32>),
    /// (read, write) nanoseconds.
    NvmLatency(Vec<(u64, u64)>),
}

impl Axis {
    pub fn name(&self) -> &'static str {
        match self {
            Axis::Mode(_) => "mode",
            Axis::RedundancyWays(_) => "redundancy_ways",
            Axis::DiffWays(_) => "diff_ways",
            Axis::NumDimms(_) => "num_dimms",
            Axis::NvmLatency(_) => "nvm_latency",
        }
    }

    fn len(&self) -> usize {
        match self {
            Axis::Mode(v) => v.len(),
            Axis::RedundancyWays(v) | Axis::DiffWays(v) | Axis::NumDimms(v) => v.len(),
            Axis::NvmLatency(v) => v.len(),
        }
    }

    /// Applies point `i` to `cfg`; returns its label.
    fn apply(&self, i: usize, cfg: &mut ExperimentConfig) -> String {
        match self {
            Axis::Mode(v) => {
                cfg.mode = v[i];
                v[i].to_string()
            }
            Axis::RedundancyWays(v) => {
                cfg.machine.partitions.redundancy_ways = v[i];
                v[i].to_string()
            }
            Axis::DiffWays(v) => {
                cfg.machine.partitions.diff_ways = v[i];
                v[i].to_string()
            }
            Axis::NumDimms(v) => {
                cfg.machine.nvm.num_dimms = v[i];
                v[i].to_string()
            }
            Axis::NvmLatency(v) => {
                (cfg.machine.nvm.read_latency_ns, cfg.machine.nvm.write_latency_ns) = v[i];
                format!("{}/{}", v[i].0, v[i].1)
            }
        }
    }
}

/// `name` alone takes the default range; `name=a,b,c` lists values.
/// Latencies are written `read/write`.
impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, values) = match s.split_once('=') {
            Some((n, v)) => (n.trim(), Some(v)),
            None => (s.trim(), None),
        };
        let bad = |msg: &str| Error::Axis(s.to_string(), msg.to_string());
        fn list<T: FromStr>(v: &str) -> Option<Vec<T>> {
            let out: Option<Vec<T>> = v.split(',').map(|x| x.trim().parse().ok()).collect();
            out.filter(|o| !o.is_empty())
        }
        let axis = match (name, values) {
            ("mode", None) => Axis::Mode(ControllerMode::ALL.to_vec()),
            ("mode", Some(v)) => Axis::Mode(list(v).ok_or_else(|| bad("expected controller modes"))?),
            ("redundancy_ways", None) => Axis::RedundancyWays((1..=8).collect()),
            ("redundancy_ways", Some(v)) => Axis::RedundancyWays(list(v).ok_or_else(|| bad("expected way counts"))?),
            ("diff_ways", None) => Axis::DiffWays((1..=8).collect()),
            ("diff_ways", Some(v)) => Axis::DiffWays(list(v).ok_or_else(|| bad("expected way counts"))?),
            ("num_dimms", None) => Axis::NumDimms(vec![2, 4, 8]),
            ("num_dimms", Some(v)) => Axis::NumDimms(list(v).ok_or_else(|| bad("expected DIMM counts"))?),
            ("nvm_latency", None) => Axis::NvmLatency(vec![(30, 75), (60, 150), (120, 300)]),
            ("nvm_latency", Some(v)) => {
                let pairs: Option<Vec<(u64, u64)>> = v
                    .split(',')
                    .map(|p| {
                        let (r, w) = p.trim().split_once('/')?;
                        Some((r.parse().ok()?, w.parse().ok()?))
                    })
                    .collect();
                Axis::NvmLatency(pairs.ok_or_else(|| bad("expected read/write pairs in ns"))?)
            }
            _ => return Err(bad("axes are mode, redundancy_ways, diff_ways, num_dimms, nvm_latency")),
        };
        Ok(axis)
    }
}

/// Cartesian product of the axes over `base`, first axis outermost. Each
/// point is named `base/axis=value,...` and validated up front.
pub fn points(base: &ExperimentConfig, axes: &[Axis]) -> Result<Vec<ExperimentConfig>> {
    let mut out = vec![(base.clone(), Vec::<String>::new())];
    for axis in axes {
        out = out
            .into_iter()
            .flat_map(|(cfg, labels)| {
                (0..axis.len()).map(move |i| {
                    let mut c = cfg.clone();
                    let mut l = labels.clone();
                    l.push(format!("{}={}", axis.name(), axis.apply(i, &mut c)));
                    (c, l)
                })
            })
            .collect();
    }
    out.into_iter()
        .map(|(mut c, labels)| {
            if !labels.is_empty() {
                c.name = format!("{}/{}", base.name, labels.join(","));
            }
            c.validate().map_err(|errs| {
                let mut errs = errs;
                for e in &mut errs {
                    e.message = format!("{} (sweep point {})", e.message, c.name);
                }
                Error::Invalid(errs)
            })?;
            Ok(c)
        })
        .collect()
}

/// Runs every point, `threads` at a time; reports are in point order, seeds
/// innermost.
pub fn sweep(base: &ExperimentConfig, axes: &[Axis], threads: usize) -> Result<Vec<ExperimentReport>> {
    let pts = points(base, axes)?;
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<Vec<ExperimentReport>>>>> = Mutex::new((0..pts.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..threads.clamp(1, pts.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(p) = pts.get(i) else { break };
                let r = run(p).map_err(Error::from);
                results.lock().expect("no worker panics while holding the lock")[i] = Some(r);
            });
        }
    });
    let mut out = Vec::new();
    for r in results.into_inner().expect("workers joined") {
        out.extend(r.expect("every point ran")?);
    }
    Ok(out)
}
