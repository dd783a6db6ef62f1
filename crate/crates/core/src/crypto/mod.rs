//! Signature, KEM and hash primitives behind one provider interface.
//!
//! Two providers are available: [`MlProvider`] binds the FIPS 203/204/202
//! algorithms, [`SymbolicProvider`] produces structured, inspectable terms
//! with the same byte sizes so that attacker-knowledge tests can look inside
//! every value that crosses the wire.

mod real;
mod symbolic;

use std::fmt;
use std::sync::Arc;

use sha3::Digest as _;
use thiserror::Error;
use zeroize::{Zeroize, Zeroizing};

use crate::suite::{SuiteId, SuiteParams};

pub use real::MlProvider;
pub use symbolic::{SymbolicProvider, SymbolicSignature};

pub const SHARED_SECRET_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("key generation failed: {0}")]
    KeyGeneration(&'static str),
    #[error("malformed {what}: expected {expected} bytes, got {actual}")]
    Length {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("malformed {0}")]
    Malformed(&'static str),
    #[error("signing failed: {0}")]
    Signing(&'static str),
    #[error("encapsulation failed: {0}")]
    Encapsulation(&'static str),
    #[error("decapsulation failed: {0}")]
    Decapsulation(&'static str),
}

/// Private signing key bytes, wiped on drop.
#[derive(Clone, PartialEq, Eq)]
pub struct PrivateKey(Zeroizing<Vec<u8>>);

impl PrivateKey {
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        PrivateKey(Zeroizing::new(bytes))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PrivateKey({} bytes)", self.0.len())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SigningKeyPair {
    pub private_key: PrivateKey,
    pub public_key: Vec<u8>,
}

/// KEM decapsulation key bytes, wiped on drop.
#[derive(Clone, PartialEq, Eq)]
pub struct DecapsulationKey(Zeroizing<Vec<u8>>);

impl DecapsulationKey {
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        DecapsulationKey(Zeroizing::new(bytes))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for DecapsulationKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DecapsulationKey({} bytes)", self.0.len())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KemKeyPair {
    pub decapsulation_key: DecapsulationKey,
    pub encapsulation_key: Vec<u8>,
}

/// The 32-byte KEM shared secret. It becomes the payload of a final token.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SharedSecret([u8; SHARED_SECRET_LEN]);

impl SharedSecret {
    pub fn from_bytes(bytes: [u8; SHARED_SECRET_LEN]) -> Self {
        SharedSecret(bytes)
    }

    pub fn try_from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; SHARED_SECRET_LEN] = bytes.try_into().map_err(|_| CryptoError::Length {
            what: "shared secret",
            expected: SHARED_SECRET_LEN,
            actual: bytes.len(),
        })?;
        Ok(SharedSecret(arr))
    }

    pub fn as_bytes(&self) -> &[u8; SHARED_SECRET_LEN] {
        &self.0
    }
}

impl Drop for SharedSecret {
    fn drop(&mut self) {
        self.0.zeroize();
    }
}

impl fmt::Debug for SharedSecret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SharedSecret(..)")
    }
}

/// Hash output; its length is the suite's digest length.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Digest(Vec<u8>);

impl Digest {
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        Digest(bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.0)
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl AsRef<[u8]> for Digest {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

/// FIPS 202 hash of `input` at the suite's digest size.
pub fn sha3_digest(suite: SuiteId, input: &[u8]) -> Digest {
    let bytes = match suite {
        SuiteId::L1 => sha3::Sha3_256::digest(input).to_vec(),
        SuiteId::L3 => sha3::Sha3_384::digest(input).to_vec(),
        SuiteId::L5 => sha3::Sha3_512::digest(input).to_vec(),
    };
    Digest(bytes)
}

/// The operations the protocol needs from a cryptographic backend.
///
/// `verify` never fails: attacker-supplied garbage simply does not verify.
pub trait CryptoProvider: Send + Sync + fmt::Debug {
    fn suite(&self) -> SuiteId;

    fn params(&self) -> SuiteParams {
        self.suite().params()
    }

    fn generate_signing_key(&self) -> Result<SigningKeyPair, CryptoError>;

    fn sign(&self, message: &[u8], private_key: &PrivateKey) -> Result<Vec<u8>, CryptoError>;

    fn verify(&self, signature: &[u8], message: &[u8], public_key: &[u8]) -> bool;

    fn kem_generate(&self) -> Result<KemKeyPair, CryptoError>;

    /// Returns `(ciphertext, secret)`.
    fn kem_encapsulate(&self, encapsulation_key: &[u8]) -> Result<(Vec<u8>, SharedSecret), CryptoError>;

    fn kem_decapsulate(
        &self,
        ciphertext: &[u8],
        decapsulation_key: &DecapsulationKey,
    ) -> Result<SharedSecret, CryptoError>;

    fn hash(&self, input: &[u8]) -> Digest {
        sha3_digest(self.suite(), input)
    }

    fn fill_random(&self, out: &mut [u8]);
}

pub type SharedProvider = Arc<dyn CryptoProvider>;

/// Hash of the concatenation of `parts`.
pub fn hash_concat(provider: &dyn CryptoProvider, parts: &[&[u8]]) -> Digest {
    let mut buf = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
    for p in parts {
        buf.extend_from_slice(p);
    }
    provider.hash(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha3_256_empty_string() {
        // Oracle: python3 -c "import hashlib; print(hashlib.sha3_256(b'').hexdigest())"
        assert_eq!(
            sha3_digest(SuiteId::L1, b"").to_hex(),
            "a7ffc6f8bf1ed76651c14756a061d662f580ff4de43b49fa82d80a4b80f8434a"
        );
    }

    #[test]
    fn digest_lengths_follow_suite() {
        for id in SuiteId::ALL {
            assert_eq!(sha3_digest(id, b"abc").len(), id.params().digest_len);
        }
    }

    #[test]
    fn hash_is_deterministic_and_spreads() {
        let corpus: Vec<Vec<u8>> = (0u16..512).map(|i| i.to_be_bytes().to_vec()).collect();
        let mut seen = std::collections::HashSet::new();
        for x in &corpus {
            assert_eq!(sha3_digest(SuiteId::L1, x), sha3_digest(SuiteId::L1, x));
            assert!(seen.insert(sha3_digest(SuiteId::L1, x)));
        }
    }

    #[test]
    fn shared_secret_requires_32_bytes() {
        assert!(SharedSecret::try_from_slice(&[0u8; 31]).is_err());
        assert!(SharedSecret::try_from_slice(&[0u8; 32]).is_ok());
    }
}
