use fips203::traits::{Decaps, Encaps, KeyGen as KemKeyGen, SerDes as KemSerDes};
use fips204::traits::{SerDes as DsaSerDes, Signer, Verifier};
use rand::RngCore;

use super::{
    CryptoError, CryptoProvider, DecapsulationKey, KemKeyPair, PrivateKey, SharedSecret,
    SigningKeyPair,
};
use crate::suite::SuiteId;

/// ML-DSA signatures are produced with an empty context string.
const SIGNING_CONTEXT: &[u8] = &[];

fn fixed<const N: usize>(bytes: &[u8], what: &'static str) -> Result<[u8; N], CryptoError> {
    bytes.try_into().map_err(|_| CryptoError::Length {
        what,
        expected: N,
        actual: bytes.len(),
    })
}

macro_rules! dsa_ops {
    ($name:ident, $alg:ident) => {
        mod $name {
            use super::*;
            use fips204::$alg as alg;

            pub(super) fn keygen() -> Result<SigningKeyPair, CryptoError> {
                let (pk, sk) = alg::try_keygen().map_err(CryptoError::KeyGeneration)?;
                Ok(SigningKeyPair {
                    private_key: PrivateKey::from_bytes(sk.into_bytes().to_vec()),
                    public_key: pk.into_bytes().to_vec(),
                })
            }

            pub(super) fn sign(message: &[u8], sk: &PrivateKey) -> Result<Vec<u8>, CryptoError> {
                let bytes = fixed::<{ alg::SK_LEN }>(sk.as_bytes(), "ML-DSA private key")?;
                let sk = alg::PrivateKey::try_from_bytes(bytes)
                    .map_err(|_| CryptoError::Malformed("ML-DSA private key"))?;
                let sig = sk.try_sign(message, SIGNING_CONTEXT).map_err(CryptoError::Signing)?;
                Ok(sig.to_vec())
            }

            pub(super) fn verify(signature: &[u8], message: &[u8], public_key: &[u8]) -> bool {
                let Ok(pk) = fixed::<{ alg::PK_LEN }>(public_key, "ML-DSA public key") else {
                    return false;
                };
                let Ok(sig) = fixed::<{ alg::SIG_LEN }>(signature, "ML-DSA signature") else {
                    return false;
                };
                match alg::PublicKey::try_from_bytes(pk) {
                    Ok(pk) => pk.verify(message, &sig, SIGNING_CONTEXT),
                    Err(_) => false,
                }
            }
        }
    };
}

macro_rules! kem_ops {
    ($name:ident, $alg:ident) => {
        mod $name {
            use super::*;
            use fips203::$alg as alg;

            pub(super) fn keygen() -> Result<KemKeyPair, CryptoError> {
                let (ek, dk) = alg::KG::try_keygen().map_err(CryptoError::KeyGeneration)?;
                Ok(KemKeyPair {
                    decapsulation_key: DecapsulationKey::from_bytes(dk.into_bytes().to_vec()),
                    encapsulation_key: ek.into_bytes().to_vec(),
                })
            }

            pub(super) fn encapsulate(ek: &[u8]) -> Result<(Vec<u8>, SharedSecret), CryptoError> {
                let bytes = fixed::<{ alg::EK_LEN }>(ek, "ML-KEM encapsulation key")?;
                let ek = alg::EncapsKey::try_from_bytes(bytes)
                    .map_err(|_| CryptoError::Malformed("ML-KEM encapsulation key"))?;
                let (ssk, ct) = ek.try_encaps().map_err(CryptoError::Encapsulation)?;
                Ok((ct.into_bytes().to_vec(), SharedSecret::from_bytes(ssk.into_bytes())))
            }

            pub(super) fn decapsulate(
                ct: &[u8],
                dk: &DecapsulationKey,
            ) -> Result<SharedSecret, CryptoError> {
                let dk_bytes = fixed::<{ alg::DK_LEN }>(dk.as_bytes(), "ML-KEM decapsulation key")?;
                let dk = alg::DecapsKey::try_from_bytes(dk_bytes)
                    .map_err(|_| CryptoError::Malformed("ML-KEM decapsulation key"))?;
                let ct_bytes = fixed::<{ alg::CT_LEN }>(ct, "ML-KEM ciphertext")?;
                let ct = alg::CipherText::try_from_bytes(ct_bytes)
                    .map_err(|_| CryptoError::Malformed("ML-KEM ciphertext"))?;
                // Tampered ciphertexts take the implicit-rejection path and
                // yield an unrelated secret; the approval hash catches it.
                let ssk = dk.try_decaps(&ct).map_err(CryptoError::Decapsulation)?;
                Ok(SharedSecret::from_bytes(ssk.into_bytes()))
            }
        }
    };
}

dsa_ops!(dsa44, ml_dsa_44);
dsa_ops!(dsa65, ml_dsa_65);
dsa_ops!(dsa87, ml_dsa_87);
kem_ops!(kem512, ml_kem_512);
kem_ops!(kem768, ml_kem_768);
kem_ops!(kem1024, ml_kem_1024);

/// ML-DSA + ML-KEM + SHA3 at one security level, randomness from the OS.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlProvider {
    suite: SuiteId,
}

impl MlProvider {
    pub fn new(suite: SuiteId) -> Self {
        MlProvider { suite }
    }
}

impl CryptoProvider for MlProvider {
    fn suite(&self) -> SuiteId {
        self.suite
    }

    fn generate_signing_key(&self) -> Result<SigningKeyPair, CryptoError> {
        match self.suite {
            SuiteId::L1 => dsa44::keygen(),
            SuiteId::L3 => dsa65::keygen(),
            SuiteId::L5 => dsa87::keygen(),
        }
    }

    fn sign(&self, message: &[u8], private_key: &PrivateKey) -> Result<Vec<u8>, CryptoError> {
        match self.suite {
            SuiteId::L1 => dsa44::sign(message, private_key),
            SuiteId::L3 => dsa65::sign(message, private_key),
            SuiteId::L5 => dsa87::sign(message, private_key),
        }
    }

    fn verify(&self, signature: &[u8], message: &[u8], public_key: &[u8]) -> bool {
        match self.suite {
            SuiteId::L1 => dsa44::verify(signature, message, public_key),
            SuiteId::L3 => dsa65::verify(signature, message, public_key),
            SuiteId::L5 => dsa87::verify(signature, message, public_key),
        }
    }

    fn kem_generate(&self) -> Result<KemKeyPair, CryptoError> {
        match self.suite {
            SuiteId::L1 => kem512::keygen(),
            SuiteId::L3 => kem768::keygen(),
            SuiteId::L5 => kem1024::keygen(),
        }
    }

    fn kem_encapsulate(&self, ek: &[u8]) -> Result<(Vec<u8>, SharedSecret), CryptoError> {
        match self.suite {
            SuiteId::L1 => kem512::encapsulate(ek),
            SuiteId::L3 => kem768::encapsulate(ek),
            SuiteId::L5 => kem1024::encapsulate(ek),
        }
    }

    fn kem_decapsulate(
        &self,
        ciphertext: &[u8],
        dk: &DecapsulationKey,
    ) -> Result<SharedSecret, CryptoError> {
        match self.suite {
            SuiteId::L1 => kem512::decapsulate(ciphertext, dk),
            SuiteId::L3 => kem768::decapsulate(ciphertext, dk),
            SuiteId::L5 => kem1024::decapsulate(ciphertext, dk),
        }
    }

    fn fill_random(&self, out: &mut [u8]) {
        rand::rngs::OsRng.fill_bytes(out);
    }
}
