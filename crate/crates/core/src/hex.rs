//! Fixed-width base-16 encoding of `f64` bit patterns.

use std::fmt::Write;

pub(crate) fn encode_f64(value: f64) -> String {
    format!("{:016x}", value.to_bits())
}

pub(crate) fn decode_f64(text: &str) -> Option<f64> {
    if text.len() != 16 {
        return None;
    }
    u64::from_str_radix(text, 16).ok().map(f64::from_bits)
}

pub(crate) fn encode_vec(values: &[f64]) -> String {
    let mut out = String::with_capacity(values.len() * 16);
    for v in values {
        let _ = write!(out, "{:016x}", v.to_bits());
    }
    out
}

pub(crate) fn decode_vec(text: &str) -> Option<Vec<f64>> {
    if text.len() % 16 != 0 || !text.is_ascii() {
        return None;
    }
    (0..text.len() / 16)
        .map(|i| decode_f64(&text[i * 16..(i + 1) * 16]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bit_exact() {
        let values = [0.0, -0.0, 1.0 / 3.0, f64::MIN_POSITIVE, 1e300];
        let decoded = decode_vec(&encode_vec(&values)).unwrap();
        for (a, b) in values.iter().zip(&decoded) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert!(decode_vec("abc").is_none());
        assert!(decode_f64("zzzzzzzzzzzzzzzz").is_none());
    }
}
