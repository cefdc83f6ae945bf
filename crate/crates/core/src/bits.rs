//! Bit-vector helpers shared by the packing, helper-data and wire formats.
//!
//! Every byte-oriented format in this crate is LSB-first: bit `i` of a
//! vector lives in byte `i / 8` at position `i % 8`.

/// Packs bits LSB-first into `ceil(len / 8)` bytes.
pub fn pack_lsb(bits: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, &bit) in bits.iter().enumerate() {
        if bit {
            out[i / 8] |= 1 << (i % 8);
        }
    }
    out
}

/// Unpacks the first `len` bits of `bytes`, LSB-first.
pub fn unpack_lsb(bytes: &[u8], len: usize) -> Vec<bool> {
    (0..len).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect()
}

pub fn hamming_distance(a: &[bool], b: &[bool]) -> usize {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

pub fn hamming_weight(a: &[bool]) -> usize {
    a.iter().filter(|&&b| b).count()
}

pub fn xor(a: &[bool], b: &[bool]) -> Vec<bool> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x ^ y).collect()
}
