//! Full-state consistency check of NVM media against stored redundancy.
//! Reads media without going through the device, so it neither counts nor
//! triggers faults. Meaningful only after the hierarchy has been drained.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::sim::Simulator;
use super::ControllerMode;
use crate::redundancy::line::xor_into;
use crate::redundancy::{checksum_slot, checksum_word, crc32c, line_base, Checksum32, ChecksumBuffer, LINE_SIZE, ZERO_LINE};

const LINE: u64 = LINE_SIZE as u64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AuditFinding {
    PageChecksum { page: u64, stored: Checksum32, computed: Checksum32 },
    LineChecksum { line: u64, stored: Checksum32, computed: Checksum32 },
    ObjectChecksum { object: u64, stored: Checksum32, computed: Checksum32 },
    Parity { parity_line: u64 },
    /// Media differs from the last value the workload stored.
    Data { line: u64 },
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub pages: u64,
    pub stripes: u64,
    pub line_entries: u64,
    pub object_entries: u64,
    pub data_lines: u64,
    pub findings: Vec<AuditFinding>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }
}

impl Simulator {
    /// Recomputes every redundancy item the mode maintains and compares it
    /// with what is stored; also compares media with the workload's stores.
    pub fn audit(&self) -> AuditReport {
        let mut r = AuditReport::default();
        let layout = &self.layout;
        let page_size = layout.geometry().page_size();
        let mut pages = BTreeSet::new();
        for m in self.mappings() {
            let mut l = m.range.base;
            while l < m.range.end() {
                if let Ok(p) = layout.translate(l) {
                    pages.insert(p);
                }
                l += page_size;
            }
        }
        for a in self.nvm.written_lines() {
            if layout.is_data(a) {
                pages.insert(layout.page_base(a));
            }
        }
        let page_csums = self.mode.verifies() || self.mode == ControllerMode::TxbPage;
        if page_csums {
            for &p in &pages {
                r.pages += 1;
                let Ok(ca) = layout.system_checksum_addr(p) else { continue };
                let stored = checksum_word(&self.nvm.peek(line_base(ca)), checksum_slot(ca));
                let computed = self.page_crc(p);
                if stored != computed {
                    r.findings.push(AuditFinding::PageChecksum { page: p, stored, computed });
                }
            }
        }
        if self.mode != ControllerMode::Off {
            let stripes: BTreeSet<u64> = pages.iter().filter_map(|&p| layout.stripe_of(p).ok()).collect();
            for s in stripes {
                r.stripes += 1;
                let members: Vec<(u64, bool)> = layout.stripe_members(s).map(|(_, a, p)| (a, p)).collect();
                let parity = members.iter().find(|m| m.1).map(|m| m.0).unwrap_or_default();
                for off in (0..page_size).step_by(LINE_SIZE) {
                    let mut x = ZERO_LINE;
                    for &(a, is_parity) in &members {
                        if !is_parity {
                            xor_into(&mut x, &self.nvm.peek(a + off));
                        }
                    }
                    if x != self.nvm.peek(parity + off) {
                        r.findings.push(AuditFinding::Parity { parity_line: parity + off });
                    }
                }
            }
        }
        for m in self.mappings() {
            if let (true, Some(b)) = (self.mode.line_checksums(), m.dax_cl) {
                r.line_entries += b.entries();
                self.audit_buffer(&b, &mut r, |line, stored, computed| AuditFinding::LineChecksum {
                    line,
                    stored,
                    computed,
                });
            }
            if let Some(b) = m.objects {
                r.object_entries += b.entries();
                self.audit_buffer(&b, &mut r, |object, stored, computed| AuditFinding::ObjectChecksum {
                    object,
                    stored,
                    computed,
                });
            }
        }
        let mut golden: Vec<(u64, _)> = self.golden_lines().collect();
        golden.sort_unstable_by_key(|g| g.0);
        for (a, v) in golden {
            r.data_lines += 1;
            if self.nvm.peek(a) != v {
                r.findings.push(AuditFinding::Data { line: a });
            }
        }
        r
    }

    fn page_crc(&self, page: u64) -> Checksum32 {
        let lpp = self.layout.geometry().lines_per_page();
        let mut buf = Vec::with_capacity(self.layout.geometry().page_size() as usize);
        for i in 0..lpp {
            buf.extend_from_slice(&self.nvm.peek(page + i * LINE));
        }
        crc32c(&buf)
    }

    fn audit_buffer(
        &self,
        b: &ChecksumBuffer,
        r: &mut AuditReport,
        finding: impl Fn(u64, Checksum32, Checksum32) -> AuditFinding,
    ) {
        let mut bytes = Vec::with_capacity(b.granule as usize);
        for e in 0..b.entries() {
            let logical = b.covered.base + e * b.granule;
            bytes.clear();
            for k in 0..b.granule / LINE {
                match self.layout.translate(logical + k * LINE) {
                    Ok(pa) => bytes.extend_from_slice(&self.nvm.peek(pa)),
                    Err(_) => return,
                }
            }
            let ea = b.base + 4 * e;
            let stored = checksum_word(&self.nvm.peek(line_base(ea)), checksum_slot(ea));
            let computed = crc32c(&bytes);
            if stored != computed {
                let phys = self.layout.translate(logical).unwrap_or(logical);
                r.findings.push(finding(phys, stored, computed));
            }
        }
    }
}
