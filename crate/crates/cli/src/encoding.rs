//! Hex conventions shared by every subcommand: scalar values are plain
//! hex numbers, bit streams pack MSB-first within each hex digit (the
//! first bit is the top bit of the first digit).

use crate::CliError;

pub fn parse_u64(text: &str) -> Result<u64, CliError> {
    let digits = text.strip_prefix("0x").or_else(|| text.strip_prefix("0X")).unwrap_or(text);
    u64::from_str_radix(digits, 16)
        .map_err(|_| CliError::Usage(format!("{text:?} is not a hex number")))
}

pub fn bits_to_hex(bits: &[u8]) -> String {
    let mut out = String::with_capacity(bits.len().div_ceil(4));
    for chunk in bits.chunks(4) {
        let mut digit = 0u32;
        for (i, &b) in chunk.iter().enumerate() {
            digit |= u32::from(b & 1) << (3 - i);
        }
        out.push(char::from_digit(digit, 16).unwrap());
    }
    out
}

/// Decode exactly `n_bits` bits; the hex must be exactly as long as
/// needed and any pad bits in the final digit must be zero.
pub fn hex_to_bits(hex: &str, n_bits: usize) -> Result<Vec<u8>, CliError> {
    let digits = hex.strip_prefix("0x").or_else(|| hex.strip_prefix("0X")).unwrap_or(hex);
    if digits.len() != n_bits.div_ceil(4) {
        return Err(CliError::Usage(format!(
            "expected {} hex digits for {n_bits} bits, got {}",
            n_bits.div_ceil(4),
            digits.len()
        )));
    }
    let mut bits = Vec::with_capacity(digits.len() * 4);
    for c in digits.chars() {
        let digit = c
            .to_digit(16)
            .ok_or_else(|| CliError::Usage(format!("{c:?} is not a hex digit")))?;
        for i in 0..4 {
            bits.push(((digit >> (3 - i)) & 1) as u8);
        }
    }
    for (i, &b) in bits[n_bits..].iter().enumerate() {
        if b != 0 {
            return Err(CliError::Usage(format!(
                "pad bit {} past the {n_bits}-bit payload is set",
                n_bits + i
            )));
        }
    }
    bits.truncate(n_bits);
    Ok(bits)
}
