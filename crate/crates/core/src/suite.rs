//! Security suites: the DSA / KEM / hash triple selected per NIST level.
//!
//! | Level | DSA       | KEM         | Hash     |
//! |-------|-----------|-------------|----------|
//! | 1     | ML-DSA-44 | ML-KEM-512  | SHA3-256 |
//! | 3     | ML-DSA-65 | ML-KEM-768  | SHA3-384 |
//! | 5     | ML-DSA-87 | ML-KEM-1024 | SHA3-512 |

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SuiteError {
    #[error("unregistered suite wire byte 0x{0:02x}")]
    UnknownWireByte(u8),
    #[error("unknown suite name `{0}`")]
    UnknownName(String),
}

/// A registered suite. The discriminant is the byte carried in the token's
/// protocol field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SuiteId {
    L1,
    L3,
    L5,
}

impl SuiteId {
    pub const ALL: [SuiteId; 3] = [SuiteId::L1, SuiteId::L3, SuiteId::L5];

    pub const fn wire_byte(self) -> u8 {
        match self {
            SuiteId::L1 => 1,
            SuiteId::L3 => 3,
            SuiteId::L5 => 5,
        }
    }

    pub fn from_wire_byte(byte: u8) -> Result<Self, SuiteError> {
        match byte {
            1 => Ok(SuiteId::L1),
            3 => Ok(SuiteId::L3),
            5 => Ok(SuiteId::L5),
            other => Err(SuiteError::UnknownWireByte(other)),
        }
    }

    pub const fn params(self) -> SuiteParams {
        match self {
            SuiteId::L1 => SuiteParams {
                public_key_len: 1312,
                signature_len: 2420,
                encaps_key_len: 800,
                ciphertext_len: 768,
                digest_len: 32,
            },
            SuiteId::L3 => SuiteParams {
                public_key_len: 1952,
                signature_len: 3309,
                encaps_key_len: 1184,
                ciphertext_len: 1088,
                digest_len: 48,
            },
            SuiteId::L5 => SuiteParams {
                public_key_len: 2592,
                signature_len: 4627,
                encaps_key_len: 1568,
                ciphertext_len: 1568,
                digest_len: 64,
            },
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            SuiteId::L1 => "L1",
            SuiteId::L3 => "L3",
            SuiteId::L5 => "L5",
        }
    }

    /// Human-readable algorithm triple.
    pub const fn algorithms(self) -> (&'static str, &'static str, &'static str) {
        match self {
            SuiteId::L1 => ("ML-DSA-44", "ML-KEM-512", "SHA3-256"),
            SuiteId::L3 => ("ML-DSA-65", "ML-KEM-768", "SHA3-384"),
            SuiteId::L5 => ("ML-DSA-87", "ML-KEM-1024", "SHA3-512"),
        }
    }
}

/// Looks up the size table for a raw wire byte.
pub fn suite_params(wire_byte: u8) -> Result<SuiteParams, SuiteError> {
    SuiteId::from_wire_byte(wire_byte).map(SuiteId::params)
}

impl fmt::Display for SuiteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SuiteId {
    type Err = SuiteError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "L1" | "1" => Ok(SuiteId::L1),
            "L3" | "3" => Ok(SuiteId::L3),
            "L5" | "5" => Ok(SuiteId::L5),
            _ => Err(SuiteError::UnknownName(s.to_string())),
        }
    }
}

/// Byte sizes of every variable-length cryptographic field for one suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SuiteParams {
    /// DSA public key.
    pub public_key_len: usize,
    /// DSA signature.
    pub signature_len: usize,
    /// KEM encapsulation key.
    pub encaps_key_len: usize,
    /// KEM ciphertext.
    pub ciphertext_len: usize,
    /// Hash output.
    pub digest_len: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_byte_is_a_bijection() {
        for id in SuiteId::ALL {
            assert_eq!(SuiteId::from_wire_byte(id.wire_byte()), Ok(id));
        }
        let bytes: std::collections::HashSet<u8> = SuiteId::ALL.iter().map(|s| s.wire_byte()).collect();
        assert_eq!(bytes.len(), SuiteId::ALL.len());
    }

    #[test]
    fn unregistered_wire_byte_is_rejected() {
        for b in [0u8, 2, 4, 6, 0x7f, 0xff] {
            assert_eq!(SuiteId::from_wire_byte(b), Err(SuiteError::UnknownWireByte(b)));
            assert!(suite_params(b).is_err());
        }
    }

    #[test]
    fn level_one_sizes() {
        let p = SuiteId::L1.params();
        assert_eq!(
            (p.public_key_len, p.signature_len, p.encaps_key_len, p.ciphertext_len, p.digest_len),
            (1312, 2420, 800, 768, 32)
        );
        // JWS check lower bound at level one is 42 + s_sig = 2462.
        assert_eq!(42 + p.signature_len, 2462);
    }

    #[test]
    fn level_five_digest_is_sha3_512() {
        assert_eq!(SuiteId::L5.params().digest_len, 64);
        assert_eq!(SuiteId::L5.algorithms().2, "SHA3-512");
    }

    #[test]
    fn parses_names() {
        assert_eq!("l3".parse::<SuiteId>(), Ok(SuiteId::L3));
        assert_eq!("5".parse::<SuiteId>(), Ok(SuiteId::L5));
        assert!("L2".parse::<SuiteId>().is_err());
    }
}
