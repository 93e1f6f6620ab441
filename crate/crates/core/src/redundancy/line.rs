//! XOR helpers over cache-line sized buffers.

use core::fmt;

/// Size of a cache line in bytes. The whole model is built around 64-byte lines.
pub const LINE_SIZE: usize = 64;

/// Contents of one cache line.
pub type Line = [u8; LINE_SIZE];

pub const ZERO_LINE: Line = [0u8; LINE_SIZE];

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StripeError {
    /// `reconstruct_line` got the wrong number of survivors.
    MalformedStripe { expected: usize, got: usize },
    LengthMismatch,
}

impl fmt::Display for StripeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StripeError::MalformedStripe { expected, got } => {
                write!(f, "malformed stripe: expected {expected} surviving lines, got {got}")
            }
            StripeError::LengthMismatch => f.write_str("stripe members differ in length"),
        }
    }
}

pub fn xor_into(dst: &mut [u8], src: &[u8]) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, s) in dst.iter_mut().zip(src) {
        *d ^= s;
    }
}

/// Bytewise XOR of the old and new contents of a line.
pub fn line_diff(old_line: &Line, new_line: &Line) -> Line {
    let mut out = *old_line;
    xor_into(&mut out, new_line);
    out
}

/// Folds a data diff into the parity line at the same stripe position.
pub fn parity_update(parity_line: &Line, diff: &Line) -> Line {
    let mut out = *parity_line;
    xor_into(&mut out, diff);
    out
}

/// Rebuilds the missing member of a stripe position from the survivors.
///
/// `stripe_width` is the number of members including the missing one, so
/// exactly `stripe_width - 1` survivors are required.
pub fn reconstruct_line(surviving: &[Line], stripe_width: usize) -> Result<Line, StripeError> {
    let expected = stripe_width.saturating_sub(1);
    if surviving.len() != expected || expected == 0 {
        return Err(StripeError::MalformedStripe { expected, got: surviving.len() });
    }
    let mut out = [0u8; LINE_SIZE];
    for s in surviving {
        xor_into(&mut out, s);
    }
    Ok(out)
}

pub fn is_zero(line: &Line) -> bool {
    line.iter().all(|&b| b == 0)
}

impl core::error::Error for StripeError {}
