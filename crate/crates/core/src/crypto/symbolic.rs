//! Deterministic symbolic stand-ins for the signature scheme and the KEM.
//!
//! Every value is a tagged term padded with zeros to the suite's real size:
//!
//! ```text
//! private key   A1 | secret[32]
//! public key    A2 | key_id[32]                                   | 0..
//! signature     A3 | key_id[32] | h(m)[32] | mac[32]              | 0..
//! decaps key    B1 | secret[32]
//! encaps key    B2 | ek_id[32]                                    | 0..
//! ciphertext    B3 | ek_id[32]  | handle[16] | masked[32] | chk[32] | 0..
//! ```
//!
//! Verification and decapsulation are structural and byte-exact, so flipping
//! any byte of a term (padding included) invalidates it. Signing secrets are
//! held in a registry owned by the provider: a signature can only be produced
//! by whoever holds the private key bytes.

use std::collections::HashMap;

use parking_lot::Mutex;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha3::{Digest as _, Sha3_256};

use super::{
    CryptoError, CryptoProvider, DecapsulationKey, KemKeyPair, PrivateKey, SharedSecret,
    SigningKeyPair,
};
use crate::suite::SuiteId;

const TAG_SK: u8 = 0xA1;
const TAG_PK: u8 = 0xA2;
const TAG_SIG: u8 = 0xA3;
const TAG_DK: u8 = 0xB1;
const TAG_EK: u8 = 0xB2;
const TAG_CT: u8 = 0xB3;

const ID: usize = 32;
const HANDLE: usize = 16;

pub type TermId = [u8; ID];

fn h(parts: &[&[u8]]) -> [u8; ID] {
    let mut hasher = Sha3_256::new();
    for p in parts {
        hasher.update(p);
    }
    hasher.finalize().into()
}

fn id_at(bytes: &[u8], offset: usize) -> TermId {
    bytes[offset..offset + ID].try_into().expect("slice length checked by caller")
}

/// Checks tag, exact length and zero padding after `used` bytes.
fn well_formed(bytes: &[u8], tag: u8, len: usize, used: usize) -> bool {
    bytes.len() == len && bytes[0] == tag && bytes[used..].iter().all(|&b| b == 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SymbolicSignature {
    pub key_id: TermId,
    pub message_digest: [u8; 32],
}

#[derive(Debug, Default)]
struct Registry {
    signing: HashMap<TermId, [u8; 32]>,
    kem: HashMap<TermId, [u8; 32]>,
}

#[derive(Debug)]
pub struct SymbolicProvider {
    suite: SuiteId,
    rng: Mutex<ChaCha20Rng>,
    registry: Mutex<Registry>,
}

impl SymbolicProvider {
    pub fn new(suite: SuiteId, seed: u64) -> Self {
        SymbolicProvider {
            suite,
            rng: Mutex::new(ChaCha20Rng::seed_from_u64(seed)),
            registry: Mutex::new(Registry::default()),
        }
    }

    fn random32(&self) -> [u8; 32] {
        let mut out = [0u8; 32];
        self.rng.lock().fill_bytes(&mut out);
        out
    }

    fn pad(&self, mut bytes: Vec<u8>, len: usize) -> Vec<u8> {
        debug_assert!(bytes.len() <= len);
        bytes.resize(len, 0);
        bytes
    }

    fn signing_secret(sk: &PrivateKey) -> Result<[u8; 32], CryptoError> {
        let b = sk.as_bytes();
        if b.len() != 1 + ID || b[0] != TAG_SK {
            return Err(CryptoError::Malformed("symbolic private key"));
        }
        Ok(id_at(b, 1))
    }

    fn kem_secret(dk: &DecapsulationKey) -> Result<[u8; 32], CryptoError> {
        let b = dk.as_bytes();
        if b.len() != 1 + ID || b[0] != TAG_DK {
            return Err(CryptoError::Malformed("symbolic decapsulation key"));
        }
        Ok(id_at(b, 1))
    }

    /// Key identifier carried by a well-formed public key.
    pub fn public_key_id(&self, pk: &[u8]) -> Option<TermId> {
        well_formed(pk, TAG_PK, self.params().public_key_len, 1 + ID).then(|| id_at(pk, 1))
    }

    /// Key identifier a private key signs under.
    pub fn private_key_id(&self, sk: &PrivateKey) -> Option<TermId> {
        Self::signing_secret(sk).ok().map(|s| h(&[b"pk", &s]))
    }

    pub fn signature_parts(&self, sig: &[u8]) -> Option<SymbolicSignature> {
        if !well_formed(sig, TAG_SIG, self.params().signature_len, 1 + 3 * ID) {
            return None;
        }
        Some(SymbolicSignature {
            key_id: id_at(sig, 1),
            message_digest: id_at(sig, 1 + ID),
        })
    }

    pub fn encaps_key_id(&self, ek: &[u8]) -> Option<TermId> {
        well_formed(ek, TAG_EK, self.params().encaps_key_len, 1 + ID).then(|| id_at(ek, 1))
    }

    pub fn decapsulation_key_id(&self, dk: &DecapsulationKey) -> Option<TermId> {
        Self::kem_secret(dk).ok().map(|s| h(&[b"ek", &s]))
    }

    /// Ground truth for a ciphertext: the encapsulation key it targets and
    /// the secret inside. Only the harness uses this; attackers must go
    /// through decapsulation with a known key.
    pub fn open_ciphertext(&self, ct: &[u8]) -> Option<(TermId, SharedSecret)> {
        let used = 1 + ID + HANDLE + 2 * ID;
        if !well_formed(ct, TAG_CT, self.params().ciphertext_len, used) {
            return None;
        }
        let ek_id = id_at(ct, 1);
        let dk_secret = *self.registry.lock().kem.get(&ek_id)?;
        let dk = DecapsulationKey::from_bytes([&[TAG_DK][..], &dk_secret].concat());
        self.kem_decapsulate(ct, &dk).ok().map(|ss| (ek_id, ss))
    }
}

impl CryptoProvider for SymbolicProvider {
    fn suite(&self) -> SuiteId {
        self.suite
    }

    fn generate_signing_key(&self) -> Result<SigningKeyPair, CryptoError> {
        let secret = self.random32();
        let key_id = h(&[b"pk", &secret]);
        self.registry.lock().signing.insert(key_id, secret);
        let public_key = self.pad([&[TAG_PK][..], &key_id].concat(), self.params().public_key_len);
        Ok(SigningKeyPair {
            private_key: PrivateKey::from_bytes([&[TAG_SK][..], &secret].concat()),
            public_key,
        })
    }

    fn sign(&self, message: &[u8], private_key: &PrivateKey) -> Result<Vec<u8>, CryptoError> {
        let secret = Self::signing_secret(private_key)?;
        let key_id = h(&[b"pk", &secret]);
        let digest = h(&[message]);
        let mac = h(&[b"sig", &secret, &digest]);
        let body = [&[TAG_SIG][..], &key_id, &digest, &mac].concat();
        Ok(self.pad(body, self.params().signature_len))
    }

    fn verify(&self, signature: &[u8], message: &[u8], public_key: &[u8]) -> bool {
        let (Some(pk_id), Some(parts)) = (self.public_key_id(public_key), self.signature_parts(signature))
        else {
            return false;
        };
        if parts.key_id != pk_id || parts.message_digest != h(&[message]) {
            return false;
        }
        let Some(secret) = self.registry.lock().signing.get(&pk_id).copied() else {
            return false;
        };
        signature[1 + 2 * ID..1 + 3 * ID] == h(&[b"sig", &secret, &parts.message_digest])
    }

    fn kem_generate(&self) -> Result<KemKeyPair, CryptoError> {
        let secret = self.random32();
        let ek_id = h(&[b"ek", &secret]);
        self.registry.lock().kem.insert(ek_id, secret);
        Ok(KemKeyPair {
            decapsulation_key: DecapsulationKey::from_bytes([&[TAG_DK][..], &secret].concat()),
            encapsulation_key: self.pad([&[TAG_EK][..], &ek_id].concat(), self.params().encaps_key_len),
        })
    }

    fn kem_encapsulate(&self, ek: &[u8]) -> Result<(Vec<u8>, SharedSecret), CryptoError> {
        let ek_id = self
            .encaps_key_id(ek)
            .ok_or(CryptoError::Malformed("symbolic encapsulation key"))?;
        let dk_secret = self
            .registry
            .lock()
            .kem
            .get(&ek_id)
            .copied()
            .ok_or(CryptoError::Encapsulation("unregistered encapsulation key"))?;
        let secret = self.random32();
        let mut handle = [0u8; HANDLE];
        self.rng.lock().fill_bytes(&mut handle);
        let mask = h(&[b"mask", &dk_secret, &handle]);
        let masked: Vec<u8> = secret.iter().zip(mask.iter()).map(|(a, b)| a ^ b).collect();
        let check = h(&[b"check", &ek_id, &handle, &secret]);
        let body = [&[TAG_CT][..], &ek_id, &handle, &masked, &check].concat();
        Ok((self.pad(body, self.params().ciphertext_len), SharedSecret::from_bytes(secret)))
    }

    fn kem_decapsulate(&self, ct: &[u8], dk: &DecapsulationKey) -> Result<SharedSecret, CryptoError> {
        let dk_secret = Self::kem_secret(dk)?;
        let used = 1 + ID + HANDLE + 2 * ID;
        if !well_formed(ct, TAG_CT, self.params().ciphertext_len, used) {
            return Err(CryptoError::Decapsulation("malformed ciphertext"));
        }
        let ek_id = id_at(ct, 1);
        if ek_id != h(&[b"ek", &dk_secret]) {
            return Err(CryptoError::Decapsulation("ciphertext targets another key"));
        }
        let handle = &ct[1 + ID..1 + ID + HANDLE];
        let mask = h(&[b"mask", &dk_secret, handle]);
        let masked = &ct[1 + ID + HANDLE..1 + 2 * ID + HANDLE];
        let mut secret = [0u8; 32];
        for (i, out) in secret.iter_mut().enumerate() {
            *out = masked[i] ^ mask[i];
        }
        if ct[1 + 2 * ID + HANDLE..used] != h(&[b"check", &ek_id, handle, &secret]) {
            return Err(CryptoError::Decapsulation("ciphertext integrity check failed"));
        }
        Ok(SharedSecret::from_bytes(secret))
    }

    fn fill_random(&self, out: &mut [u8]) {
        self.rng.lock().fill_bytes(out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_terms() {
        let a = SymbolicProvider::new(SuiteId::L1, 7);
        let b = SymbolicProvider::new(SuiteId::L1, 7);
        let ka = a.generate_signing_key().unwrap();
        let kb = b.generate_signing_key().unwrap();
        assert_eq!(ka, kb);
        assert_eq!(a.sign(b"m", &ka.private_key).unwrap(), b.sign(b"m", &kb.private_key).unwrap());
    }

    #[test]
    fn sizes_match_registry() {
        for suite in SuiteId::ALL {
            let p = SymbolicProvider::new(suite, 1);
            let params = suite.params();
            let kp = p.generate_signing_key().unwrap();
            assert_eq!(kp.public_key.len(), params.public_key_len);
            assert_eq!(p.sign(b"x", &kp.private_key).unwrap().len(), params.signature_len);
            let kem = p.kem_generate().unwrap();
            assert_eq!(kem.encapsulation_key.len(), params.encaps_key_len);
            let (ct, _) = p.kem_encapsulate(&kem.encapsulation_key).unwrap();
            assert_eq!(ct.len(), params.ciphertext_len);
        }
    }

    #[test]
    fn every_signature_byte_matters() {
        let p = SymbolicProvider::new(SuiteId::L1, 3);
        let kp = p.generate_signing_key().unwrap();
        let sig = p.sign(b"hello", &kp.private_key).unwrap();
        assert!(p.verify(&sig, b"hello", &kp.public_key));
        for i in 0..sig.len() {
            let mut bad = sig.clone();
            bad[i] ^= 0x80;
            assert!(!p.verify(&bad, b"hello", &kp.public_key), "byte {i}");
        }
        for i in 0..kp.public_key.len() {
            let mut bad = kp.public_key.clone();
            bad[i] ^= 0x80;
            assert!(!p.verify(&sig, b"hello", &bad), "pk byte {i}");
        }
    }

    #[test]
    fn forged_structure_without_registry_secret_fails() {
        let p = SymbolicProvider::new(SuiteId::L1, 3);
        let kp = p.generate_signing_key().unwrap();
        let parts = p.signature_parts(&p.sign(b"a", &kp.private_key).unwrap()).unwrap();
        // Attacker builds a well-formed term for a new message without the secret.
        let forged = p.pad(
            [&[TAG_SIG][..], &parts.key_id, &h(&[b"b"]), &[0u8; 32]].concat(),
            p.params().signature_len,
        );
        assert!(!p.verify(&forged, b"b", &kp.public_key));
    }

    #[test]
    fn kem_roundtrip_and_tamper() {
        let p = SymbolicProvider::new(SuiteId::L3, 9);
        let kem = p.kem_generate().unwrap();
        let (ct, ss) = p.kem_encapsulate(&kem.encapsulation_key).unwrap();
        assert_eq!(p.kem_decapsulate(&ct, &kem.decapsulation_key).unwrap(), ss);
        let (ek_id, opened) = p.open_ciphertext(&ct).unwrap();
        assert_eq!(opened, ss);
        assert_eq!(Some(ek_id), p.decapsulation_key_id(&kem.decapsulation_key));
        for i in 0..ct.len() {
            let mut bad = ct.clone();
            bad[i] ^= 1;
            assert!(p.kem_decapsulate(&bad, &kem.decapsulation_key).is_err(), "byte {i}");
        }
        let other = p.kem_generate().unwrap();
        assert!(p.kem_decapsulate(&ct, &other.decapsulation_key).is_err());
    }
}
