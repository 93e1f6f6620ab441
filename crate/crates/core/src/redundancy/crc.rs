//! CRC-32C (Castagnoli) with the linear-algebra helpers needed to update a
//! page checksum from a single line diff.
//!
//! Two flavours of the same polynomial are exposed:
//!
//! * [`crc32c`] is the standard check (reflected, init `0xFFFF_FFFF`,
//!   final XOR `0xFFFF_FFFF`). This is the value stored on media.
//! * [`crc_raw`] drops the init and final XOR. It is a linear map over GF(2),
//!   so `crc_raw(a ^ b) == crc_raw(a) ^ crc_raw(b)` for equal-length inputs.
//!
//! For equal-length buffers `crc32c(a ^ b) == crc32c(a) ^ crc_raw(b)`, and
//! appending zeros multiplies the raw remainder by `x^8` per byte. Together
//! these give [`incremental_page_checksum`], which never touches the rest of
//! the page.

use serde::{Deserialize, Serialize};

use super::layout::PageGeometry;

/// Reflected form of the Castagnoli polynomial 0x1EDC6F41.
pub const CASTAGNOLI_REFLECTED: u32 = 0x82F6_3B78;

/// A 32-bit CRC-32C word as stored in checksum lines (little-endian on media).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Checksum32(pub u32);

impl Checksum32 {
    pub const fn value(self) -> u32 {
        self.0
    }

    pub fn to_le_bytes(self) -> [u8; 4] {
        self.0.to_le_bytes()
    }

    pub fn from_le_bytes(bytes: [u8; 4]) -> Self {
        Checksum32(u32::from_le_bytes(bytes))
    }
}

impl core::ops::BitXor for Checksum32 {
    type Output = Checksum32;
    fn bitxor(self, rhs: Self) -> Self {
        Checksum32(self.0 ^ rhs.0)
    }
}

impl core::fmt::LowerHex for Checksum32 {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        core::fmt::LowerHex::fmt(&self.0, f)
    }
}

// Slicing-by-8 tables. TABLES[0] is the classic byte-at-a-time table.
const TABLES: [[u32; 256]; 8] = build_tables();

const fn build_tables() -> [[u32; 256]; 8] {
    let mut t = [[0u32; 256]; 8];
    let mut i = 0;
    while i < 256 {
        let mut c = i as u32;
        let mut k = 0;
        while k < 8 {
            c = if c & 1 != 0 { (c >> 1) ^ CASTAGNOLI_REFLECTED } else { c >> 1 };
            k += 1;
        }
        t[0][i] = c;
        i += 1;
    }
    let mut s = 1;
    while s < 8 {
        let mut i = 0;
        while i < 256 {
            let prev = t[s - 1][i];
            t[s][i] = (prev >> 8) ^ t[0][(prev & 0xff) as usize];
            i += 1;
        }
        s += 1;
    }
    t
}

fn update(mut crc: u32, data: &[u8]) -> u32 {
    let mut chunks = data.chunks_exact(8);
    for c in &mut chunks {
        let lo = crc ^ u32::from_le_bytes([c[0], c[1], c[2], c[3]]);
        let hi = u32::from_le_bytes([c[4], c[5], c[6], c[7]]);
        crc = TABLES[7][(lo & 0xff) as usize]
            ^ TABLES[6][((lo >> 8) & 0xff) as usize]
            ^ TABLES[5][((lo >> 16) & 0xff) as usize]
            ^ TABLES[4][(lo >> 24) as usize]
            ^ TABLES[3][(hi & 0xff) as usize]
            ^ TABLES[2][((hi >> 8) & 0xff) as usize]
            ^ TABLES[1][((hi >> 16) & 0xff) as usize]
            ^ TABLES[0][(hi >> 24) as usize];
    }
    for &b in chunks.remainder() {
        crc = (crc >> 8) ^ TABLES[0][((crc ^ b as u32) & 0xff) as usize];
    }
    crc
}

/// Standard CRC-32C of `data`.
pub fn crc32c(data: &[u8]) -> Checksum32 {
    Checksum32(!update(!0, data))
}

/// Linear CRC core: init 0, no final XOR.
pub fn crc_raw(data: &[u8]) -> Checksum32 {
    Checksum32(update(0, data))
}

/// Product of two polynomials modulo the CRC polynomial, reflected
/// representation (bit 31 is the x^0 coefficient).
const fn mul_mod_poly(a: u32, mut b: u32) -> u32 {
    let mut m: u32 = 1 << 31;
    let mut p: u32 = 0;
    loop {
        if a & m != 0 {
            p ^= b;
            if a & (m - 1) == 0 {
                break;
            }
        }
        m >>= 1;
        if m == 0 {
            break;
        }
        b = if b & 1 != 0 { (b >> 1) ^ CASTAGNOLI_REFLECTED } else { b >> 1 };
    }
    p
}

// X2N[k] = x^(2^k) mod P.
const X2N: [u32; 32] = {
    let mut t = [0u32; 32];
    let mut p: u32 = 1 << 30; // x^1
    t[0] = p;
    let mut k = 1;
    while k < 32 {
        p = mul_mod_poly(p, p);
        t[k] = p;
        k += 1;
    }
    t
};

/// x^(n * 2^k) mod P.
fn x2n_mod_poly(mut n: u64, mut k: usize) -> u32 {
    let mut p: u32 = 1 << 31; // x^0
    while n != 0 {
        if n & 1 != 0 {
            p = mul_mod_poly(X2N[k & 31], p);
        }
        n >>= 1;
        k += 1;
    }
    p
}

/// Advances a raw CRC over `zero_bytes` appended zero bytes without touching
/// them: `crc_shift(crc_raw(m), n) == crc_raw(m ‖ 0^n)`.
pub fn crc_shift(c: Checksum32, zero_bytes: u64) -> Checksum32 {
    if c.0 == 0 || zero_bytes == 0 {
        return c;
    }
    Checksum32(mul_mod_poly(x2n_mod_poly(zero_bytes, 3), c.0))
}

/// New page checksum after the line at `offset` is XORed with `diff`.
///
/// `old` must be the CRC-32C of the page before the change. Only the diff is
/// read; the rest of the page is accounted for by the zero-shift.
pub fn incremental_page_checksum(
    old: Checksum32,
    diff: &[u8],
    offset: u64,
    geom: &PageGeometry,
) -> Checksum32 {
    debug_assert_eq!(diff.len() as u64, geom.line_size());
    debug_assert!(offset.is_multiple_of(geom.line_size()) && offset < geom.page_size());
    let trailing = geom.page_size() - offset - geom.line_size();
    old ^ crc_shift(crc_raw(diff), trailing)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;

    // Bit-at-a-time reference, independent of the tables.
    fn bitwise(init: u32, xorout: u32, data: &[u8]) -> u32 {
        let mut crc = init;
        for &b in data {
            crc ^= b as u32;
            for _ in 0..8 {
                let lsb = crc & 1;
                crc >>= 1;
                if lsb != 0 {
                    crc ^= 0x82F6_3B78;
                }
            }
        }
        crc ^ xorout
    }

    fn splitmix(state: &mut u64) -> u64 {
        *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = *state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    fn random_bytes(state: &mut u64, n: usize) -> Vec<u8> {
        (0..n).map(|_| splitmix(state) as u8).collect()
    }

    #[test]
    fn empty_input() {
        assert_eq!(crc32c(b""), Checksum32(0));
        assert_eq!(crc_raw(b""), Checksum32(0));
    }

    #[test]
    fn check_value() {
        assert_eq!(bitwise(!0, !0, b"123456789"), 0xE306_9283);
        assert_eq!(crc32c(b"123456789"), Checksum32(0xE306_9283));
    }

    #[test]
    fn zero_page_matches_bitwise_oracle() {
        let page = vec![0u8; 4096];
        // Frozen from the bitwise oracle.
        assert_eq!(bitwise(!0, !0, &page), 0x98F9_4189);
        assert_eq!(crc32c(&page), Checksum32(0x98F9_4189));
    }

    #[test]
    fn raw_single_byte() {
        // Frozen from the bitwise oracle.
        assert_eq!(bitwise(0, 0, &[0x01]), 0xF26B_8303);
        assert_eq!(crc_raw(&[0x01]), Checksum32(0xF26B_8303));
    }

    #[test]
    fn raw_of_zeros_is_zero() {
        for n in [1usize, 7, 64, 4096] {
            assert_eq!(crc_raw(&vec![0u8; n]), Checksum32(0));
        }
    }

    #[test]
    fn tables_agree_with_bitwise_on_odd_lengths() {
        let mut s = 7;
        for n in 0..200 {
            let d = random_bytes(&mut s, n);
            assert_eq!(crc32c(&d).0, bitwise(!0, !0, &d), "len {n}");
            assert_eq!(crc_raw(&d).0, bitwise(0, 0, &d), "len {n}");
        }
    }

    #[test]
    fn raw_is_linear() {
        let mut s = 11;
        for _ in 0..1000 {
            let a = random_bytes(&mut s, 64);
            let b = random_bytes(&mut s, 64);
            let x: Vec<u8> = a.iter().zip(&b).map(|(p, q)| p ^ q).collect();
            assert_eq!(crc_raw(&x), crc_raw(&a) ^ crc_raw(&b));
            assert_eq!(bitwise(0, 0, &x), bitwise(0, 0, &a) ^ bitwise(0, 0, &b));
        }
    }

    #[test]
    fn shift_identity_and_zero() {
        let c = crc_raw(b"abc");
        assert_eq!(crc_shift(c, 0), c);
        for n in [0u64, 1, 63, 4032, 1 << 20] {
            assert_eq!(crc_shift(Checksum32(0), n), Checksum32(0));
        }
    }

    #[test]
    fn shift_matches_literal_zero_padding() {
        let mut s = 3;
        for n in [1usize, 2, 3, 8, 63, 64, 100, 4032] {
            let d = random_bytes(&mut s, 64);
            let mut padded = d.clone();
            padded.extend(std::iter::repeat_n(0, n));
            assert_eq!(
                crc_shift(Checksum32(bitwise(0, 0, &d)), n as u64).0,
                bitwise(0, 0, &padded),
                "n {n}"
            );
        }
    }

    #[test]
    fn incremental_zero_diff_is_identity() {
        let g = PageGeometry::default();
        let old = crc32c(&[5u8; 4096]);
        assert_eq!(incremental_page_checksum(old, &[0u8; 64], 1024, &g), old);
    }

    #[test]
    fn incremental_equals_full_recompute() {
        let g = PageGeometry::default();
        let mut s = 99;
        let mut page = random_bytes(&mut s, 4096);
        let mut sum = Checksum32(bitwise(!0, !0, &page));
        for _ in 0..500 {
            let off = (splitmix(&mut s) % 64) * 64;
            let diff = random_bytes(&mut s, 64);
            for (p, d) in page[off as usize..off as usize + 64].iter_mut().zip(&diff) {
                *p ^= d;
            }
            sum = incremental_page_checksum(sum, &diff, off, &g);
            assert_eq!(sum.0, bitwise(!0, !0, &page));
        }
    }

    #[test]
    fn diff_applied_twice_restores() {
        let g = PageGeometry::default();
        let old = crc32c(&[9u8; 4096]);
        let d = [0xA5u8; 64];
        let once = incremental_page_checksum(old, &d, 64, &g);
        assert_ne!(once, old);
        assert_eq!(incremental_page_checksum(once, &d, 64, &g), old);
    }
}
