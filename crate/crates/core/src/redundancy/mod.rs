//! Checksum, parity and placement primitives shared by every controller.

pub mod crc;
pub mod layout;
pub mod line;

pub use crc::{crc32c, crc_raw, crc_shift, incremental_page_checksum, Checksum32};
pub use layout::{
    dax_cl_checksum_addr, ChecksumBuffer, DaxClChecksumBuffer, LayoutError, PageGeometry, PageKind,
    RedundancyLayout, Region,
};
pub use line::{line_diff, parity_update, reconstruct_line, Line, StripeError, LINE_SIZE, ZERO_LINE};

/// Reads the checksum word at byte offset `4 * slot` of a checksum line.
pub fn checksum_word(line: &Line, slot: usize) -> Checksum32 {
    let o = slot * 4;
    Checksum32::from_le_bytes([line[o], line[o + 1], line[o + 2], line[o + 3]])
}

pub fn set_checksum_word(line: &mut Line, slot: usize, value: Checksum32) {
    let o = slot * 4;
    line[o..o + 4].copy_from_slice(&value.to_le_bytes());
}

/// Slot index of a 4-byte checksum address within its line.
pub fn checksum_slot(addr: u64) -> usize {
    ((addr % LINE_SIZE as u64) / 4) as usize
}

pub fn line_base(addr: u64) -> u64 {
    addr - addr % LINE_SIZE as u64
}
