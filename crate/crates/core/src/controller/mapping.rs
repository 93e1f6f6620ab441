//! DAX mapping table and the aux-region allocator backing its buffers.

use alloc::vec::Vec;

use crate::redundancy::{ChecksumBuffer, RedundancyLayout, Region, LINE_SIZE};

use super::SimError;

/// One DAX-mapped logical range and the buffers that live only while it is mapped.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mapping {
    /// Logical data-space byte range; page aligned.
    pub range: Region,
    pub dax_cl: Option<ChecksumBuffer>,
    pub objects: Option<ChecksumBuffer>,
}

/// Mapped ranges are pairwise disjoint and sorted by base.
#[derive(Clone, Debug)]
pub struct DaxMappingTable {
    entries: Vec<Mapping>,
    /// Free extents per DIMM aux region, sorted by base.
    free: Vec<Vec<Region>>,
}

impl DaxMappingTable {
    pub fn new(layout: &RedundancyLayout) -> Self {
        let free = (0..layout.num_dimms()).map(|d| alloc::vec![layout.aux_region(d)]).collect();
        DaxMappingTable { entries: Vec::new(), free }
    }

    pub fn entries(&self) -> &[Mapping] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Range match on a logical address.
    pub fn find(&self, logical: u64) -> Option<&Mapping> {
        let i = self.entries.partition_point(|m| m.range.end() <= logical);
        self.entries.get(i).filter(|m| m.range.contains(logical))
    }

    pub fn overlaps(&self, range: Region) -> bool {
        self.entries.iter().any(|m| m.range.overlaps(&range))
    }

    pub fn insert(&mut self, m: Mapping) -> Result<(), SimError> {
        if self.overlaps(m.range) {
            return Err(SimError::Overlap(m.range.base));
        }
        let i = self.entries.partition_point(|e| e.range.base < m.range.base);
        self.entries.insert(i, m);
        Ok(())
    }

    pub fn remove(&mut self, range: Region) -> Result<Mapping, SimError> {
        let i = self
            .entries
            .iter()
            .position(|m| m.range == range)
            .ok_or(SimError::NotMapped(range.base))?;
        Ok(self.entries.remove(i))
    }

    /// First-fit allocation of a line-aligned extent, trying DIMMs in order.
    pub fn alloc(&mut self, bytes: u64) -> Result<u64, SimError> {
        let len = bytes.div_ceil(LINE_SIZE as u64).max(1) * LINE_SIZE as u64;
        for list in &mut self.free {
            if let Some(i) = list.iter().position(|r| r.len >= len) {
                let base = list[i].base;
                list[i].base += len;
                list[i].len -= len;
                if list[i].len == 0 {
                    list.remove(i);
                }
                return Ok(base);
            }
        }
        Err(SimError::OutOfSpace(bytes))
    }

    pub fn free(&mut self, base: u64, bytes: u64, layout: &RedundancyLayout) {
        let len = bytes.div_ceil(LINE_SIZE as u64).max(1) * LINE_SIZE as u64;
        let Ok(d) = layout.dimm_of(base) else { return };
        let list = &mut self.free[d as usize];
        let i = list.partition_point(|r| r.base < base);
        list.insert(i, Region { base, len });
        // Coalesce with neighbours.
        if i + 1 < list.len() && list[i].end() == list[i + 1].base {
            list[i].len += list[i + 1].len;
            list.remove(i + 1);
        }
        if i > 0 && list[i - 1].end() == list[i].base {
            list[i - 1].len += list[i].len;
            list.remove(i);
        }
    }

    pub fn free_bytes(&self) -> u64 {
        self.free.iter().flatten().map(|r| r.len).sum()
    }
}
