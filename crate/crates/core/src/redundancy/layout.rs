//! Physical placement of data, system-checksums, parity and checksum buffers
//! across the NVM DIMMs.
//!
//! Each DIMM is split into three disjoint regions:
//!
//! ```text
//! | stripe region (data + parity pages) | system-checksum region | aux region |
//! ```
//!
//! Page slot `s` of every DIMM's stripe region forms stripe `s`. The page on
//! DIMM `s % num_dimms` is the stripe's parity page; the others hold data.
//! Logical data pages are laid out stripe by stripe, so consecutive logical
//! pages land on different DIMMs and share parity pages.
//!
//! The system-checksum of a data page lives in the checksum region of the
//! same DIMM, packed 16 per line in ascending per-DIMM data-page order. The
//! aux region holds buffers handed out at map time (line checksums, object
//! checksums).

use core::fmt;

use serde::{Deserialize, Serialize};

use super::crc::Checksum32;

const CHECKSUM_BYTES: u64 = core::mem::size_of::<Checksum32>() as u64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageGeometry {
    page_size: u64,
    line_size: u64,
}

impl Default for PageGeometry {
    fn default() -> Self {
        PageGeometry { page_size: 4096, line_size: 64 }
    }
}

impl PageGeometry {
    pub fn new(page_size: u64, line_size: u64) -> Result<Self, LayoutError> {
        if line_size == 0 || !line_size.is_multiple_of(CHECKSUM_BYTES) {
            return Err(LayoutError::Geometry("line size must be a non-zero multiple of 4"));
        }
        if page_size == 0 || !page_size.is_multiple_of(line_size) {
            return Err(LayoutError::Geometry("page size must be a non-zero multiple of the line size"));
        }
        Ok(PageGeometry { page_size, line_size })
    }

    pub const fn page_size(&self) -> u64 {
        self.page_size
    }

    pub const fn line_size(&self) -> u64 {
        self.line_size
    }

    pub const fn lines_per_page(&self) -> u64 {
        self.page_size / self.line_size
    }

    pub const fn checksums_per_line(&self) -> u64 {
        self.line_size / CHECKSUM_BYTES
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub base: u64,
    pub len: u64,
}

impl Region {
    pub const fn end(&self) -> u64 {
        self.base + self.len
    }

    pub const fn contains(&self, addr: u64) -> bool {
        addr >= self.base && addr < self.base + self.len
    }

    pub const fn overlaps(&self, other: &Region) -> bool {
        self.base < other.end() && other.base < self.end()
    }
}

/// What a physical page holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PageKind {
    Data { dimm: u32, stripe: u64 },
    Parity { dimm: u32, stripe: u64 },
    SystemChecksum { dimm: u32 },
    Aux { dimm: u32 },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LayoutError {
    Geometry(&'static str),
    Capacity { dimm_capacity: u64 },
    OutOfRange(u64),
    NotDataPage(u64),
    ParityPage(u64),
    Misaligned(u64),
    NotCovered(u64),
}

impl fmt::Display for LayoutError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayoutError::Geometry(m) => write!(f, "invalid page geometry: {m}"),
            LayoutError::Capacity { dimm_capacity } => {
                write!(f, "DIMM capacity {dimm_capacity} B is too small for the redundancy layout")
            }
            LayoutError::OutOfRange(a) => write!(f, "address {a:#x} is outside the NVM address space"),
            LayoutError::NotDataPage(a) => write!(f, "address {a:#x} is not in a data page"),
            LayoutError::ParityPage(a) => write!(f, "address {a:#x} is on a parity page"),
            LayoutError::Misaligned(a) => write!(f, "address {a:#x} is not line-aligned"),
            LayoutError::NotCovered(a) => write!(f, "address {a:#x} is outside the checksum buffer's range"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedundancyLayout {
    geometry: PageGeometry,
    num_dimms: u32,
    dimm_capacity: u64,
    /// Page slots per DIMM in the stripe region (= number of stripes).
    stripes: u64,
    syscsum_pages: u64,
    aux_pages: u64,
}

impl RedundancyLayout {
    /// Carves each DIMM into regions. One eighth of every DIMM is reserved
    /// for the aux region; the rest is split between stripe pages and the
    /// checksum pages they need.
    pub fn new(num_dimms: u32, dimm_capacity: u64, geometry: PageGeometry) -> Result<Self, LayoutError> {
        if num_dimms < 2 {
            return Err(LayoutError::Geometry("parity needs at least two DIMMs"));
        }
        let page = geometry.page_size();
        let pages = dimm_capacity / page;
        let aux_pages = pages / 8;
        let remaining = pages - aux_pages;
        let csum_pages = |s: u64| (s * CHECKSUM_BYTES).div_ceil(page);
        let mut stripes = remaining * page / (page + CHECKSUM_BYTES);
        while stripes > 0 && stripes + csum_pages(stripes) > remaining {
            stripes -= 1;
        }
        if stripes == 0 || aux_pages == 0 {
            return Err(LayoutError::Capacity { dimm_capacity });
        }
        Ok(RedundancyLayout {
            geometry,
            num_dimms,
            dimm_capacity,
            stripes,
            syscsum_pages: csum_pages(stripes),
            aux_pages: pages - stripes - csum_pages(stripes),
        })
    }

    pub const fn geometry(&self) -> &PageGeometry {
        &self.geometry
    }

    pub const fn num_dimms(&self) -> u32 {
        self.num_dimms
    }

    pub const fn dimm_capacity(&self) -> u64 {
        self.dimm_capacity
    }

    pub const fn stripes(&self) -> u64 {
        self.stripes
    }

    /// Data pages per stripe.
    pub const fn stripe_width(&self) -> u64 {
        self.num_dimms as u64 - 1
    }

    pub const fn total_bytes(&self) -> u64 {
        self.num_dimms as u64 * self.dimm_capacity
    }

    pub const fn data_pages(&self) -> u64 {
        self.stripes * self.stripe_width()
    }

    pub const fn data_bytes(&self) -> u64 {
        self.data_pages() * self.geometry.page_size()
    }

    const fn dimm_base(&self, dimm: u32) -> u64 {
        dimm as u64 * self.dimm_capacity
    }

    pub const fn stripe_region(&self, dimm: u32) -> Region {
        Region { base: self.dimm_base(dimm), len: self.stripes * self.geometry.page_size() }
    }

    pub const fn syscsum_region(&self, dimm: u32) -> Region {
        Region {
            base: self.stripe_region(dimm).end(),
            len: self.syscsum_pages * self.geometry.page_size(),
        }
    }

    pub const fn aux_region(&self, dimm: u32) -> Region {
        Region {
            base: self.syscsum_region(dimm).end(),
            len: self.aux_pages * self.geometry.page_size(),
        }
    }

    pub const fn parity_dimm(&self, stripe: u64) -> u32 {
        (stripe % self.num_dimms as u64) as u32
    }

    pub fn dimm_of(&self, addr: u64) -> Result<u32, LayoutError> {
        if addr >= self.total_bytes() {
            return Err(LayoutError::OutOfRange(addr));
        }
        Ok((addr / self.dimm_capacity) as u32)
    }

    pub fn page_base(&self, addr: u64) -> u64 {
        addr - addr % self.geometry.page_size()
    }

    pub fn classify(&self, addr: u64) -> Result<PageKind, LayoutError> {
        let dimm = self.dimm_of(addr)?;
        if self.stripe_region(dimm).contains(addr) {
            let stripe = (addr - self.dimm_base(dimm)) / self.geometry.page_size();
            if self.parity_dimm(stripe) == dimm {
                Ok(PageKind::Parity { dimm, stripe })
            } else {
                Ok(PageKind::Data { dimm, stripe })
            }
        } else if self.syscsum_region(dimm).contains(addr) {
            Ok(PageKind::SystemChecksum { dimm })
        } else if self.aux_region(dimm).contains(addr) {
            Ok(PageKind::Aux { dimm })
        } else {
            // Tail of the DIMM that doesn't fill a page.
            Err(LayoutError::OutOfRange(addr))
        }
    }

    pub fn is_data(&self, addr: u64) -> bool {
        matches!(self.classify(addr), Ok(PageKind::Data { .. }))
    }

    /// Position of a data page among the data pages of its own DIMM.
    fn per_dimm_data_index(&self, dimm: u32, stripe: u64) -> u64 {
        let n = self.num_dimms as u64;
        let parity_below = (stripe + n - 1 - dimm as u64) / n;
        stripe - parity_below
    }

    /// Physical address of logical data page `page`.
    pub fn data_page_addr(&self, page: u64) -> Result<u64, LayoutError> {
        if page >= self.data_pages() {
            return Err(LayoutError::OutOfRange(page * self.geometry.page_size()));
        }
        let w = self.stripe_width();
        let stripe = page / w;
        let member = page % w;
        let dimm = ((self.parity_dimm(stripe) as u64 + 1 + member) % self.num_dimms as u64) as u32;
        Ok(self.dimm_base(dimm) + stripe * self.geometry.page_size())
    }

    /// Physical address of a logical data-space byte address.
    pub fn translate(&self, logical: u64) -> Result<u64, LayoutError> {
        let page = self.geometry.page_size();
        Ok(self.data_page_addr(logical / page)? + logical % page)
    }

    /// Inverse of [`translate`](Self::translate).
    pub fn logical_of(&self, addr: u64) -> Result<u64, LayoutError> {
        match self.classify(addr)? {
            PageKind::Data { dimm, stripe } => {
                let n = self.num_dimms as u64;
                let member = (dimm as u64 + n - self.parity_dimm(stripe) as u64 - 1) % n;
                let page = self.geometry.page_size();
                Ok((stripe * self.stripe_width() + member) * page + addr % page)
            }
            PageKind::Parity { .. } => Err(LayoutError::ParityPage(addr)),
            _ => Err(LayoutError::NotDataPage(addr)),
        }
    }

    /// Address of the 4-byte system-checksum word of the data page holding `page_addr`.
    pub fn system_checksum_addr(&self, page_addr: u64) -> Result<u64, LayoutError> {
        match self.classify(page_addr)? {
            PageKind::Data { dimm, stripe } => Ok(self.syscsum_region(dimm).base
                + CHECKSUM_BYTES * self.per_dimm_data_index(dimm, stripe)),
            PageKind::Parity { .. } => Err(LayoutError::ParityPage(page_addr)),
            _ => Err(LayoutError::NotDataPage(page_addr)),
        }
    }

    /// Parity DIMM and parity address for `page_addr`. The offset within the
    /// page carries over, so passing a line address yields the parity line.
    pub fn parity_addr(&self, page_addr: u64) -> Result<(u32, u64), LayoutError> {
        match self.classify(page_addr)? {
            PageKind::Data { stripe, .. } => {
                let pd = self.parity_dimm(stripe);
                let page = self.geometry.page_size();
                Ok((pd, self.dimm_base(pd) + stripe * page + page_addr % page))
            }
            PageKind::Parity { .. } => Err(LayoutError::ParityPage(page_addr)),
            _ => Err(LayoutError::NotDataPage(page_addr)),
        }
    }

    /// Every page of a stripe, one per DIMM, in DIMM order.
    pub fn stripe_members(&self, stripe: u64) -> impl Iterator<Item = (u32, u64, bool)> + '_ {
        let pd = self.parity_dimm(stripe);
        (0..self.num_dimms).map(move |d| {
            (d, self.dimm_base(d) + stripe * self.geometry.page_size(), d == pd)
        })
    }

    pub fn stripe_of(&self, addr: u64) -> Result<u64, LayoutError> {
        match self.classify(addr)? {
            PageKind::Data { stripe, .. } | PageKind::Parity { stripe, .. } => Ok(stripe),
            _ => Err(LayoutError::NotDataPage(addr)),
        }
    }
}

/// A contiguous NVM buffer holding one CRC-32C word per `granule` bytes of a
/// logical data range. Line checksums use a 64-byte granule; object
/// checksums use the object size.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChecksumBuffer {
    /// Physical address of entry 0.
    pub base: u64,
    /// Logical byte range covered.
    pub covered: Region,
    pub granule: u64,
}

/// Per-cache-line checksums kept only while a range is DAX-mapped.
pub type DaxClChecksumBuffer = ChecksumBuffer;

impl ChecksumBuffer {
    pub fn entries(&self) -> u64 {
        self.covered.len / self.granule
    }

    pub fn size_bytes(&self) -> u64 {
        self.entries() * CHECKSUM_BYTES
    }

    pub fn entry_addr_logical(&self, logical: u64) -> Result<u64, LayoutError> {
        if !self.covered.contains(logical) {
            return Err(LayoutError::NotCovered(logical));
        }
        Ok(self.base + CHECKSUM_BYTES * ((logical - self.covered.base) / self.granule))
    }

    /// Entry address for the granule holding physical address `addr`.
    pub fn entry_addr(&self, addr: u64, layout: &RedundancyLayout) -> Result<u64, LayoutError> {
        let logical = layout.logical_of(addr).map_err(|_| LayoutError::NotCovered(addr))?;
        self.entry_addr_logical(logical).map_err(|_| LayoutError::NotCovered(addr))
    }
}

/// Address of the line checksum for `line_addr` in `buf`.
pub fn dax_cl_checksum_addr(
    line_addr: u64,
    buf: &DaxClChecksumBuffer,
    layout: &RedundancyLayout,
) -> Result<u64, LayoutError> {
    if !line_addr.is_multiple_of(layout.geometry().line_size()) {
        return Err(LayoutError::Misaligned(line_addr));
    }
    buf.entry_addr(line_addr, layout)
}

impl core::error::Error for LayoutError {}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;
    use alloc::vec::Vec;

    const MIB: u64 = 1 << 20;

    fn small() -> RedundancyLayout {
        RedundancyLayout::new(4, 4 * MIB, PageGeometry::default()).unwrap()
    }

    #[test]
    fn geometry_defaults() {
        let g = PageGeometry::default();
        assert_eq!(g.lines_per_page(), 64);
        assert_eq!(g.checksums_per_line(), 16);
        assert!(PageGeometry::new(4000, 64).is_err());
        assert!(PageGeometry::new(4096, 62).is_err());
    }

    #[test]
    fn regions_are_disjoint_and_fit() {
        let l = small();
        for d in 0..4 {
            let r = [l.stripe_region(d), l.syscsum_region(d), l.aux_region(d)];
            for i in 0..3 {
                for j in i + 1..3 {
                    assert!(!r[i].overlaps(&r[j]));
                }
            }
            assert!(r[2].end() <= (d as u64 + 1) * l.dimm_capacity());
        }
        // Enough checksum slots for every data page of a DIMM.
        assert!(l.syscsum_region(0).len >= l.stripes() * 4);
    }

    #[test]
    fn first_data_page_checksum_is_slot_zero() {
        let l = small();
        // Stripe 0's parity is on DIMM 0, so DIMM 0's first data page is stripe 1.
        let first0 = l.stripe_region(0).base + 4096;
        assert_eq!(l.system_checksum_addr(first0).unwrap(), l.syscsum_region(0).base);
        let first2 = l.stripe_region(2).base;
        assert_eq!(l.system_checksum_addr(first2).unwrap(), l.syscsum_region(2).base);
    }

    #[test]
    fn seventeenth_data_page_of_dimm2() {
        let l = small();
        // Enumerate DIMM 2's data pages in slot order.
        let pages: Vec<u64> = (0..l.stripes())
            .map(|s| l.stripe_region(2).base + s * 4096)
            .filter(|&a| l.is_data(a))
            .collect();
        assert_eq!(l.system_checksum_addr(pages[16]).unwrap(), l.syscsum_region(2).base + 64);
        // Pages 0..15 share the first checksum line.
        for p in &pages[..16] {
            assert_eq!(l.system_checksum_addr(*p).unwrap() / 64, l.syscsum_region(2).base / 64);
        }
    }

    #[test]
    fn checksum_map_is_injective_and_same_dimm() {
        let l = small();
        let mut seen = BTreeSet::new();
        for p in 0..l.data_pages() {
            let a = l.data_page_addr(p).unwrap();
            let c = l.system_checksum_addr(a).unwrap();
            assert_eq!(l.dimm_of(a).unwrap(), l.dimm_of(c).unwrap());
            assert!(l.syscsum_region(l.dimm_of(a).unwrap()).contains(c));
            assert!(seen.insert(c));
        }
    }

    #[test]
    fn parity_rotates() {
        let l = small();
        assert_eq!(l.parity_dimm(0), 0);
        assert_eq!(l.parity_dimm(5), 1);
        for s in 0..64 {
            let members: Vec<_> = l.stripe_members(s).collect();
            assert_eq!(members.iter().filter(|m| m.2).count(), 1);
            let parity = members.iter().find(|m| m.2).unwrap().1;
            for (_, addr, is_parity) in members {
                if is_parity {
                    assert_eq!(l.parity_addr(addr), Err(LayoutError::ParityPage(addr)));
                } else {
                    assert_eq!(l.parity_addr(addr).unwrap(), (l.parity_dimm(s), parity));
                    assert_eq!(l.parity_addr(addr + 320).unwrap().1, parity + 320);
                }
            }
        }
    }

    #[test]
    fn logical_translation_round_trips() {
        let l = small();
        let mut seen = BTreeSet::new();
        for p in 0..l.data_pages() {
            let a = l.data_page_addr(p).unwrap();
            assert!(l.is_data(a));
            assert!(seen.insert(a));
            assert_eq!(l.logical_of(a + 128).unwrap(), p * 4096 + 128);
        }
        // Consecutive logical pages of one stripe sit on distinct DIMMs.
        let d: BTreeSet<u32> = (0..3).map(|p| l.dimm_of(l.data_page_addr(p).unwrap()).unwrap()).collect();
        assert_eq!(d.len(), 3);
        assert!(l.data_page_addr(l.data_pages()).is_err());
    }

    #[test]
    fn checksum_addr_rejects_non_data() {
        let l = small();
        assert!(matches!(l.system_checksum_addr(l.syscsum_region(1).base), Err(LayoutError::NotDataPage(_))));
        assert!(matches!(l.system_checksum_addr(l.total_bytes()), Err(LayoutError::OutOfRange(_))));
        assert!(matches!(l.system_checksum_addr(0), Err(LayoutError::ParityPage(0))));
    }

    #[test]
    fn dax_cl_entries() {
        let l = small();
        let buf = ChecksumBuffer {
            base: l.aux_region(1).base,
            covered: Region { base: 8 * 4096, len: 4 * 4096 },
            granule: 64,
        };
        let line = |i: u64| l.translate(8 * 4096 + i * 64).unwrap();
        assert_eq!(dax_cl_checksum_addr(line(0), &buf, &l).unwrap(), buf.base);
        assert_eq!(dax_cl_checksum_addr(line(16), &buf, &l).unwrap(), buf.base + 64);
        for i in 0..256 {
            assert_eq!(dax_cl_checksum_addr(line(i), &buf, &l).unwrap(), buf.base + 4 * i);
        }
        assert!(dax_cl_checksum_addr(l.translate(0).unwrap(), &buf, &l).is_err());
        assert!(dax_cl_checksum_addr(line(1) + 4, &buf, &l).is_err());
        assert_eq!(buf.size_bytes(), 1024);
    }

    #[test]
    fn tiny_capacity_rejected() {
        assert!(RedundancyLayout::new(4, 4096, PageGeometry::default()).is_err());
        assert!(RedundancyLayout::new(1, MIB, PageGeometry::default()).is_err());
    }
}
