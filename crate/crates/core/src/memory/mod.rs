//! Cache hierarchy building blocks, the NVM back-end and cost accounting.

pub mod cache;
pub mod counters;
pub mod nvm;

pub use cache::{CacheAccess, CacheLevelConfig, Evicted, HitMiss, Partition, SetAssocCache, SlotId};
pub use counters::{accrue, AccessCounters, Accrued, CostModel, LaneCounters};
pub use nvm::{AccessClass, FaultKind, FaultScheduleEntry, FiredFault, NvmConfig, NvmDevice, NvmError, NvmStats};
