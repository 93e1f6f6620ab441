//! Software redundancy at transaction boundaries. The library's own loads
//! and stores go through the cache hierarchy like any application access.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use super::sim::Simulator;
use super::{ControllerMode, SimError};
use crate::redundancy::line::xor_into;
use crate::redundancy::{checksum_slot, crc32c, line_base, line_diff, set_checksum_word, Line, LINE_SIZE};

const LINE: u64 = LINE_SIZE as u64;

impl Simulator {
    /// Brings checksums and parity up to date for everything `lane` stored
    /// since its last commit. No-op for hardware modes.
    pub fn commit(&mut self, lane: usize) -> Result<(), SimError> {
        if lane >= self.lanes() {
            return Err(SimError::BadLane(lane));
        }
        let dirty = core::mem::take(&mut self.pending[lane]);
        if dirty.is_empty() {
            return Ok(());
        }
        match self.mode {
            ControllerMode::TxbPage => self.commit_pages(lane, dirty),
            ControllerMode::TxbObject => self.commit_objects(lane, dirty),
            _ => Ok(()),
        }
    }

    /// Lines currently awaiting a commit on `lane`.
    pub fn pending_lines(&self, lane: usize) -> usize {
        self.pending.get(lane).map_or(0, |p| p.len())
    }

    fn sw_parity(&mut self, lane: usize, addr: u64, old: &Line, cur: &Line) -> Result<(), SimError> {
        let (_, pa) = self.layout.parity_addr(addr)?;
        let mut p = self.access(lane, pa, None)?;
        xor_into(&mut p, &line_diff(old, cur));
        self.compute(lane, 1);
        self.access(lane, pa, Some(&p))?;
        Ok(())
    }

    fn sw_checksum(&mut self, lane: usize, entry: u64, bytes: &[u8]) -> Result<(), SimError> {
        let mut cl = self.access(lane, line_base(entry), None)?;
        set_checksum_word(&mut cl, checksum_slot(entry), crc32c(bytes));
        self.compute(lane, 1);
        self.access(lane, line_base(entry), Some(&cl))?;
        Ok(())
    }

    fn commit_pages(&mut self, lane: usize, dirty: BTreeMap<u64, Line>) -> Result<(), SimError> {
        let mut pages: BTreeMap<u64, Vec<(u64, Line)>> = BTreeMap::new();
        for (a, old) in dirty {
            pages.entry(self.layout.page_base(a)).or_default().push((a, old));
        }
        let lpp = self.layout.geometry().lines_per_page();
        let mut buf = vec![0u8; self.layout.geometry().page_size() as usize];
        for (page, lines) in pages {
            for i in 0..lpp {
                let l = self.access(lane, page + i * LINE, None)?;
                buf[(i * LINE) as usize..((i + 1) * LINE) as usize].copy_from_slice(&l);
            }
            let ca = self.layout.system_checksum_addr(page)?;
            self.sw_checksum(lane, ca, &buf)?;
            for (a, old) in lines {
                let o = (a - page) as usize;
                let mut cur = [0u8; LINE_SIZE];
                cur.copy_from_slice(&buf[o..o + LINE_SIZE]);
                self.sw_parity(lane, a, &old, &cur)?;
            }
        }
        Ok(())
    }

    fn commit_objects(&mut self, lane: usize, dirty: BTreeMap<u64, Line>) -> Result<(), SimError> {
        // Keyed by logical object base so objects larger than a page still
        // enumerate their lines in order.
        let mut objects: BTreeMap<u64, Vec<(u64, Line)>> = BTreeMap::new();
        for (a, old) in dirty {
            let buf = self
                .mapping_of(a)
                .and_then(|m| m.objects)
                .ok_or(SimError::Invariant("object store without an object-checksum buffer"))?;
            let logical = self.layout.logical_of(a)?;
            let obj = logical - (logical - buf.covered.base) % buf.granule;
            objects.entry(obj).or_default().push((a, old));
        }
        for (obj, lines) in objects {
            let first = self.layout.translate(obj)?;
            let buf = self
                .mapping_of(first)
                .and_then(|m| m.objects)
                .ok_or(SimError::Invariant("object store without an object-checksum buffer"))?;
            let mut bytes = Vec::with_capacity(buf.granule as usize);
            let mut phys = Vec::with_capacity((buf.granule / LINE) as usize);
            for k in 0..buf.granule / LINE {
                let pa = self.layout.translate(obj + k * LINE)?;
                bytes.extend_from_slice(&self.access(lane, pa, None)?);
                phys.push(pa);
            }
            self.sw_checksum(lane, buf.entry_addr_logical(obj)?, &bytes)?;
            for (a, old) in lines {
                let k = phys.iter().position(|&p| p == a).ok_or(SimError::Invariant("line outside its object"))?;
                let mut cur = [0u8; LINE_SIZE];
                cur.copy_from_slice(&bytes[k * LINE_SIZE..(k + 1) * LINE_SIZE]);
                self.sw_parity(lane, a, &old, &cur)?;
            }
        }
        Ok(())
    }
}
