//! Attacker knowledge and its closure under the symbolic derivation rules.
//!
//! Rules applied until nothing new appears:
//!
//! * any contiguous slice of an observed term is known (projection);
//! * observed bytes that decode as protocol messages yield their fields;
//! * `kemdecaps(ct, dk)` for every known ciphertext and decapsulation key;
//! * a hash is never inverted.
//!
//! Signing keys let the attacker build new signatures (used by the forging
//! actions in the harness) but derive nothing about existing secrets.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::crypto::{CryptoProvider, DecapsulationKey, PrivateKey, SymbolicProvider};
use crate::token::{Token, OFFSET_PAYLOAD, PAYLOAD_LEN, TOKEN_LEN};
use crate::wire::WireMessage;

/// Why a value is in the attacker's knowledge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provenance {
    /// Present verbatim inside observed term `term` at `offset`.
    Observed { term: usize, offset: usize },
    /// Decapsulated from the ciphertext in term `term` with a revealed key.
    Decapsulated { term: usize, key: String },
    /// Revealed directly.
    Revealed(String),
    /// Produced by the attacker itself.
    Generated(String),
}

#[derive(Debug, Clone)]
pub struct Knowledge {
    provider: Arc<SymbolicProvider>,
    terms: Vec<(String, Vec<u8>)>,
    signing_keys: Vec<(String, PrivateKey)>,
    decapsulation_keys: Vec<(String, DecapsulationKey)>,
    secrets: BTreeMap<[u8; PAYLOAD_LEN], Provenance>,
    ciphertexts: Vec<(usize, Vec<u8>)>,
    closed_terms: usize,
    closed_keys: usize,
}

impl Knowledge {
    pub fn new(provider: Arc<SymbolicProvider>) -> Self {
        Knowledge {
            provider,
            terms: Vec::new(),
            signing_keys: Vec::new(),
            decapsulation_keys: Vec::new(),
            secrets: BTreeMap::new(),
            ciphertexts: Vec::new(),
            closed_terms: 0,
            closed_keys: 0,
        }
    }

    /// Adds raw bytes the attacker has seen.
    pub fn observe(&mut self, label: impl Into<String>, bytes: Vec<u8>) {
        self.terms.push((label.into(), bytes));
    }

    pub fn reveal_signing_key(&mut self, label: impl Into<String>, key: PrivateKey) {
        self.signing_keys.push((label.into(), key));
    }

    pub fn reveal_decapsulation_key(&mut self, label: impl Into<String>, key: DecapsulationKey) {
        self.decapsulation_keys.push((label.into(), key));
    }

    pub fn reveal_token(&mut self, label: impl Into<String>, token: [u8; TOKEN_LEN]) {
        let payload: [u8; PAYLOAD_LEN] = token[OFFSET_PAYLOAD..].try_into().expect("payload slice");
        self.secrets
            .entry(payload)
            .or_insert_with(|| Provenance::Revealed(label.into()));
    }

    pub fn learn_secret(&mut self, label: impl Into<String>, secret: [u8; PAYLOAD_LEN]) {
        self.secrets
            .entry(secret)
            .or_insert_with(|| Provenance::Generated(label.into()));
    }

    /// Most recently revealed signing key whose public half is `public_key`.
    pub fn signing_key_for(&self, public_key: &[u8]) -> Option<&PrivateKey> {
        let id = self.provider.public_key_id(public_key)?;
        self.signing_keys
            .iter()
            .rev()
            .find(|(_, k)| self.provider.private_key_id(k) == Some(id))
            .map(|(_, k)| k)
    }

    pub fn terms(&self) -> &[(String, Vec<u8>)] {
        &self.terms
    }

    /// Runs the derivation rules to a fixed point.
    pub fn close(&mut self) {
        let params = self.provider.params();
        loop {
            let mut changed = false;
            for idx in self.closed_terms..self.terms.len() {
                let bytes = &self.terms[idx].1;
                if let Ok(msg) = WireMessage::decode(bytes, &params) {
                    match msg {
                        WireMessage::Stamped { ciphertext, .. } => self.ciphertexts.push((idx, ciphertext)),
                        WireMessage::Check { token } | WireMessage::Stamp { preview: token, .. } => {
                            let t = Token::encode(&token);
                            let payload: [u8; PAYLOAD_LEN] = t[OFFSET_PAYLOAD..].try_into().expect("payload");
                            self.secrets
                                .entry(payload)
                                .or_insert(Provenance::Observed { term: idx, offset: OFFSET_PAYLOAD });
                        }
                        _ => {}
                    }
                } else if bytes.len() == params.ciphertext_len {
                    self.ciphertexts.push((idx, bytes.clone()));
                }
                changed = true;
            }
            let new_terms = self.closed_terms < self.terms.len();
            let new_keys = self.closed_keys < self.decapsulation_keys.len();
            if new_terms || new_keys {
                for (term, ct) in &self.ciphertexts {
                    for (label, dk) in &self.decapsulation_keys {
                        if let Ok(ss) = self.provider.kem_decapsulate(ct, dk) {
                            if !self.secrets.contains_key(ss.as_bytes()) {
                                self.secrets.insert(
                                    *ss.as_bytes(),
                                    Provenance::Decapsulated { term: *term, key: label.clone() },
                                );
                                changed = true;
                            }
                        }
                    }
                }
            }
            self.closed_terms = self.terms.len();
            self.closed_keys = self.decapsulation_keys.len();
            if !changed {
                break;
            }
        }
    }

    /// Whether `secret` follows from what the attacker knows, and how.
    /// Only meaningful after [`Knowledge::close`].
    pub fn derive(&self, secret: &[u8; PAYLOAD_LEN]) -> Option<Provenance> {
        if let Some(p) = self.secrets.get(secret) {
            return Some(p.clone());
        }
        self.terms.iter().enumerate().find_map(|(term, (_, bytes))| {
            find_subslice(bytes, secret).map(|offset| Provenance::Observed { term, offset })
        })
    }
}

pub(crate) fn find_subslice(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    if needle.is_empty() || haystack.len() < needle.len() {
        return None;
    }
    haystack.windows(needle.len()).position(|w| w == needle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::suite::SuiteId;

    #[test]
    fn ciphertext_alone_reveals_nothing() {
        let p = Arc::new(SymbolicProvider::new(SuiteId::L1, 5));
        let kem = p.kem_generate().unwrap();
        let (ct, ss) = p.kem_encapsulate(&kem.encapsulation_key).unwrap();
        let mut k = Knowledge::new(Arc::clone(&p));
        k.observe("ek", kem.encapsulation_key.clone());
        k.observe("ct", ct.clone());
        k.close();
        assert_eq!(k.derive(ss.as_bytes()), None);

        let msg = WireMessage::Stamped {
            approval_hash: p.hash(b"x"),
            ciphertext: ct,
            server_signature: vec![0; p.params().signature_len],
        };
        k.observe("m6", msg.encode(&p.params()).unwrap());
        k.close();
        assert_eq!(k.derive(ss.as_bytes()), None);

        k.reveal_decapsulation_key("dk", kem.decapsulation_key);
        k.close();
        assert!(matches!(k.derive(ss.as_bytes()), Some(Provenance::Decapsulated { term: 1, .. })));
    }

    #[test]
    fn wrong_key_does_not_open() {
        let p = Arc::new(SymbolicProvider::new(SuiteId::L1, 5));
        let kem = p.kem_generate().unwrap();
        let other = p.kem_generate().unwrap();
        let (ct, ss) = p.kem_encapsulate(&kem.encapsulation_key).unwrap();
        let msg = WireMessage::Stamped {
            approval_hash: p.hash(b"x"),
            ciphertext: ct,
            server_signature: vec![0; p.params().signature_len],
        };
        let mut k = Knowledge::new(Arc::clone(&p));
        k.observe("m6", msg.encode(&p.params()).unwrap());
        k.reveal_decapsulation_key("other", other.decapsulation_key);
        k.close();
        assert_eq!(k.derive(ss.as_bytes()), None);
    }

    #[test]
    fn embedded_bytes_are_known() {
        let p = Arc::new(SymbolicProvider::new(SuiteId::L1, 5));
        let mut k = Knowledge::new(p);
        let secret = [9u8; 32];
        k.observe("blob", [&[1u8, 2, 3][..], &secret, &[4]].concat());
        k.close();
        assert_eq!(k.derive(&secret), Some(Provenance::Observed { term: 0, offset: 3 }));
        assert_eq!(find_subslice(b"abc", b""), None);
    }
}
