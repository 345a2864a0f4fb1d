//! 64-bit content digests for transcripts.
//!
//! FNV-1a over a canonical byte encoding, with an extra splitmix64 pass when
//! chaining events. This is a tamper-evidence checksum for replay comparison,
//! not a cryptographic hash.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Incremental FNV-1a hasher over canonically encoded fields.
#[derive(Debug, Clone)]
pub struct Digest {
    state: u64,
}

impl Default for Digest {
    fn default() -> Self {
        Self::new()
    }
}

impl Digest {
    pub fn new() -> Self {
        Digest { state: FNV_OFFSET }
    }

    pub fn write_bytes(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.state ^= b as u64;
            self.state = self.state.wrapping_mul(FNV_PRIME);
        }
    }

    pub fn write_u64(&mut self, v: u64) {
        self.write_bytes(&v.to_le_bytes());
    }

    pub fn write_u32(&mut self, v: u32) {
        self.write_bytes(&v.to_le_bytes());
    }

    pub fn write_u8(&mut self, v: u8) {
        self.write_bytes(&[v]);
    }

    pub fn write_bool(&mut self, v: bool) {
        self.write_u8(v as u8);
    }

    /// Hash an f64 by its exact bit pattern.
    pub fn write_f64(&mut self, v: f64) {
        self.write_u64(v.to_bits());
    }

    pub fn write_str(&mut self, s: &str) {
        self.write_u64(s.len() as u64);
        self.write_bytes(s.as_bytes());
    }

    pub fn finish(&self) -> u64 {
        // Final avalanche so short inputs still flip high bits.
        crate::rng::mix64(self.state)
    }
}

/// Chain an event digest onto a running hash.
pub fn chain(acc: u64, round: u32, kind: u8, payload: u64) -> u64 {
    let mut d = Digest::new();
    d.write_u64(acc);
    d.write_u32(round);
    d.write_u8(kind);
    d.write_u64(payload);
    d.finish()
}

/// Lowercase 16-hex-char rendering used by the transcript format.
pub fn to_hex(v: u64) -> String {
    format!("{v:016x}")
}

/// Parse a digest rendered by [`to_hex`].
pub fn from_hex(s: &str) -> Option<u64> {
    if s.len() != 16 {
        return None;
    }
    u64::from_str_radix(s, 16).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_byte_changes_digest() {
        let mut a = Digest::new();
        a.write_bytes(b"hello world");
        let mut b = Digest::new();
        b.write_bytes(b"hello worle");
        assert_ne!(a.finish(), b.finish());
    }

    #[test]
    fn hex_roundtrip() {
        for v in [0u64, 1, u64::MAX, 0xdeadbeef] {
            assert_eq!(from_hex(&to_hex(v)), Some(v));
        }
        assert_eq!(from_hex("xyz"), None);
        assert_eq!(from_hex("00"), None);
    }

    #[test]
    fn chain_depends_on_every_field() {
        let base = chain(1, 2, 3, 4);
        assert_ne!(base, chain(9, 2, 3, 4));
        assert_ne!(base, chain(1, 9, 3, 4));
        assert_ne!(base, chain(1, 2, 9, 4));
        assert_ne!(base, chain(1, 2, 3, 9));
    }
}
