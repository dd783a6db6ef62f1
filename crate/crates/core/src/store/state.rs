//! Store contents and the shared operation logic. Every mutation yields the
//! log entries (after-images) that reproduce it, which the file store appends
//! and the memory store discards.

use std::collections::{BTreeMap, BTreeSet};

use uuid::Uuid;

use super::{
    AdminRecord, ClientRecord, InsertOutcome, RotateOutcome, StoreError, TimeAdvance, TokenInsert,
    TokenLookup, TokenRecord,
};
use crate::crypto::Digest;
use crate::time::Timestamp;
use crate::token::{PERMS_LEN, PERM_CODE_LEN};

pub(super) const MAGIC: &[u8; 4] = b"PQTS";
pub(super) const VERSION: u8 = 1;

const K_ADMIN: u8 = 1;
const K_CLIENT: u8 = 2;
const K_LEDGER: u8 = 3;
const K_TOKEN: u8 = 4;
const K_TOKEN_REMOVE: u8 = 5;
const K_PERM: u8 = 6;
const K_TIME: u8 = 7;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(super) enum Entry {
    Admin(AdminRecord),
    Client(ClientRecord),
    Ledger(Vec<u8>),
    Token(TokenRecord),
    TokenRemove(Digest),
    Perm([u8; PERM_CODE_LEN], String),
    Time { uuid: Uuid, expected_time: u64 },
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub(super) struct State {
    admins: BTreeMap<Uuid, AdminRecord>,
    clients: BTreeMap<Uuid, ClientRecord>,
    ledger: BTreeSet<Vec<u8>>,
    tokens: BTreeMap<Digest, TokenRecord>,
    perms: BTreeMap<[u8; PERM_CODE_LEN], String>,
}

impl State {
    pub fn insert_admin(&mut self, r: AdminRecord) -> (InsertOutcome, Vec<Entry>) {
        if self.admins.contains_key(&r.uuid) || self.clients.contains_key(&r.uuid) {
            return (InsertOutcome::DuplicateId, vec![]);
        }
        if self.ledger.contains(&r.public_key) {
            return (InsertOutcome::DuplicateKey, vec![]);
        }
        let entries = vec![Entry::Ledger(r.public_key.clone()), Entry::Admin(r.clone())];
        self.apply_all(&entries);
        (InsertOutcome::Inserted, entries)
    }

    pub fn admin(&self, uuid: &Uuid) -> Option<AdminRecord> {
        self.admins.get(uuid).cloned()
    }

    pub fn insert_client(&mut self, r: ClientRecord) -> (InsertOutcome, Vec<Entry>) {
        if self.clients.contains_key(&r.uuid) || self.admins.contains_key(&r.uuid) {
            return (InsertOutcome::DuplicateId, vec![]);
        }
        if self.ledger.contains(&r.public_key) {
            return (InsertOutcome::DuplicateKey, vec![]);
        }
        let entries = vec![Entry::Ledger(r.public_key.clone()), Entry::Client(r)];
        self.apply_all(&entries);
        (InsertOutcome::Inserted, entries)
    }

    pub fn client(&self, uuid: &Uuid) -> Option<ClientRecord> {
        self.clients.get(uuid).cloned()
    }

    pub fn compare_and_advance_time(&mut self, uuid: &Uuid, observed: u64) -> (TimeAdvance, Vec<Entry>) {
        let Some(c) = self.clients.get(uuid) else {
            return (TimeAdvance::UnknownClient, vec![]);
        };
        if c.expected_time != observed {
            return (TimeAdvance::Mismatch(c.expected_time), vec![]);
        }
        let next = observed.saturating_add(1);
        let entries = vec![Entry::Time {
            uuid: *uuid,
            expected_time: next,
        }];
        self.apply_all(&entries);
        (TimeAdvance::Advanced(next), entries)
    }

    pub fn rotate_key(
        &mut self,
        uuid: &Uuid,
        expected_epoch: u64,
        new_key: Vec<u8>,
        now: Timestamp,
    ) -> (RotateOutcome, Vec<Entry>) {
        let Some(c) = self.clients.get(uuid) else {
            return (RotateOutcome::UnknownClient, vec![]);
        };
        if c.key_epoch != expected_epoch {
            return (RotateOutcome::EpochMismatch, vec![]);
        }
        if self.ledger.contains(&new_key) {
            return (RotateOutcome::DuplicateKey, vec![]);
        }
        let epoch = c.key_epoch + 1;
        let updated = ClientRecord {
            uuid: *uuid,
            public_key: new_key.clone(),
            key_installed_at: now,
            expected_time: 0,
            key_epoch: epoch,
        };
        let entries = vec![Entry::Ledger(new_key), Entry::Client(updated)];
        self.apply_all(&entries);
        (RotateOutcome::Rotated { epoch }, entries)
    }

    pub fn insert_token(&mut self, r: TokenRecord) -> (TokenInsert, Vec<Entry>) {
        if self.tokens.contains_key(&r.token_hash) {
            return (TokenInsert::Duplicate, vec![]);
        }
        let entries = vec![Entry::Token(r)];
        self.apply_all(&entries);
        (TokenInsert::Inserted, entries)
    }

    pub fn lookup_token(&self, hash: &Digest, now: Timestamp) -> TokenLookup {
        match self.tokens.get(hash) {
            None => TokenLookup::Absent,
            Some(r) if now >= r.expires_at => TokenLookup::Expired(r.clone()),
            Some(r) => TokenLookup::Live(r.clone()),
        }
    }

    pub fn insert_perm_code(&mut self, code: [u8; PERM_CODE_LEN], scope: String) -> Vec<Entry> {
        let entries = vec![Entry::Perm(code, scope)];
        self.apply_all(&entries);
        entries
    }

    pub fn lookup_perm_code(&self, code: &[u8; PERM_CODE_LEN]) -> Option<String> {
        self.perms.get(code).cloned()
    }

    pub fn tokens(&self) -> Vec<TokenRecord> {
        self.tokens.values().cloned().collect()
    }

    pub fn purge_expired(&mut self, now: Timestamp) -> Vec<Entry> {
        let entries: Vec<Entry> = self
            .tokens
            .values()
            .filter(|r| now >= r.expires_at)
            .map(|r| Entry::TokenRemove(r.token_hash.clone()))
            .collect();
        self.apply_all(&entries);
        entries
    }

    pub fn apply(&mut self, e: &Entry) {
        match e {
            Entry::Admin(r) => {
                self.admins.insert(r.uuid, r.clone());
            }
            Entry::Client(r) => {
                self.clients.insert(r.uuid, r.clone());
            }
            Entry::Ledger(k) => {
                self.ledger.insert(k.clone());
            }
            Entry::Token(r) => {
                self.tokens.insert(r.token_hash.clone(), r.clone());
            }
            Entry::TokenRemove(h) => {
                self.tokens.remove(h);
            }
            Entry::Perm(code, scope) => {
                self.perms.insert(*code, scope.clone());
            }
            Entry::Time { uuid, expected_time } => {
                if let Some(c) = self.clients.get_mut(uuid) {
                    c.expected_time = *expected_time;
                }
            }
        }
    }

    fn apply_all(&mut self, entries: &[Entry]) {
        for e in entries {
            self.apply(e);
        }
    }

    /// Minimal entry list that rebuilds this state, in canonical order.
    pub fn snapshot_entries(&self) -> Vec<Entry> {
        let mut out = Vec::new();
        out.extend(self.ledger.iter().cloned().map(Entry::Ledger));
        out.extend(self.admins.values().cloned().map(Entry::Admin));
        out.extend(self.clients.values().cloned().map(Entry::Client));
        out.extend(self.tokens.values().cloned().map(Entry::Token));
        out.extend(self.perms.iter().map(|(c, s)| Entry::Perm(*c, s.clone())));
        out
    }

    pub fn snapshot_bytes(&self) -> Vec<u8> {
        let mut out = header();
        for e in self.snapshot_entries() {
            out.extend(encode_entry(&e));
        }
        out
    }

    pub fn entry_count(&self) -> usize {
        self.ledger.len() + self.admins.len() + self.clients.len() + self.tokens.len() + self.perms.len()
    }
}

pub(super) fn header() -> Vec<u8> {
    let mut h = MAGIC.to_vec();
    h.push(VERSION);
    h
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    out.extend_from_slice(&(b.len() as u32).to_be_bytes());
    out.extend_from_slice(b);
}

/// `u32 BE length ‖ kind ‖ fields`
pub(super) fn encode_entry(e: &Entry) -> Vec<u8> {
    let mut body = Vec::new();
    match e {
        Entry::Admin(r) => {
            body.push(K_ADMIN);
            body.extend_from_slice(r.uuid.as_bytes());
            put_bytes(&mut body, &r.public_key);
        }
        Entry::Client(r) => {
            body.push(K_CLIENT);
            body.extend_from_slice(r.uuid.as_bytes());
            put_bytes(&mut body, &r.public_key);
            body.extend_from_slice(&r.key_installed_at.0.to_be_bytes());
            body.extend_from_slice(&r.expected_time.to_be_bytes());
            body.extend_from_slice(&r.key_epoch.to_be_bytes());
        }
        Entry::Ledger(k) => {
            body.push(K_LEDGER);
            put_bytes(&mut body, k);
        }
        Entry::Token(r) => {
            body.push(K_TOKEN);
            put_bytes(&mut body, r.token_hash.as_bytes());
            body.extend_from_slice(r.uuid.as_bytes());
            body.extend_from_slice(&r.perms);
            body.extend_from_slice(&r.issued_at.0.to_be_bytes());
            body.extend_from_slice(&r.expires_at.0.to_be_bytes());
        }
        Entry::TokenRemove(h) => {
            body.push(K_TOKEN_REMOVE);
            put_bytes(&mut body, h.as_bytes());
        }
        Entry::Perm(code, scope) => {
            body.push(K_PERM);
            body.extend_from_slice(code);
            put_bytes(&mut body, scope.as_bytes());
        }
        Entry::Time { uuid, expected_time } => {
            body.push(K_TIME);
            body.extend_from_slice(uuid.as_bytes());
            body.extend_from_slice(&expected_time.to_be_bytes());
        }
    }
    let mut out = (body.len() as u32).to_be_bytes().to_vec();
    out.extend(body);
    out
}

struct Cursor<'a>(&'a [u8]);

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], StoreError> {
        if self.0.len() < n {
            return Err(StoreError::Corrupt("entry field truncated".into()));
        }
        let (a, b) = self.0.split_at(n);
        self.0 = b;
        Ok(a)
    }
    fn u64(&mut self) -> Result<u64, StoreError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().expect("8")))
    }
    fn uuid(&mut self) -> Result<Uuid, StoreError> {
        Ok(Uuid::from_bytes(self.take(16)?.try_into().expect("16")))
    }
    fn bytes(&mut self) -> Result<Vec<u8>, StoreError> {
        let n = u32::from_be_bytes(self.take(4)?.try_into().expect("4")) as usize;
        Ok(self.take(n)?.to_vec())
    }
}

pub(super) fn decode_entry(body: &[u8]) -> Result<Entry, StoreError> {
    let (&kind, rest) = body
        .split_first()
        .ok_or_else(|| StoreError::Corrupt("empty entry".into()))?;
    let mut c = Cursor(rest);
    let e = match kind {
        K_ADMIN => Entry::Admin(AdminRecord {
            uuid: c.uuid()?,
            public_key: c.bytes()?,
        }),
        K_CLIENT => Entry::Client(ClientRecord {
            uuid: c.uuid()?,
            public_key: c.bytes()?,
            key_installed_at: Timestamp(c.u64()?),
            expected_time: c.u64()?,
            key_epoch: c.u64()?,
        }),
        K_LEDGER => Entry::Ledger(c.bytes()?),
        K_TOKEN => Entry::Token(TokenRecord {
            token_hash: Digest::from_bytes(c.bytes()?),
            uuid: c.uuid()?,
            perms: c.take(PERMS_LEN)?.try_into().expect("16"),
            issued_at: Timestamp(c.u64()?),
            expires_at: Timestamp(c.u64()?),
        }),
        K_TOKEN_REMOVE => Entry::TokenRemove(Digest::from_bytes(c.bytes()?)),
        K_PERM => {
            let code = c.take(PERM_CODE_LEN)?.try_into().expect("15");
            let scope = String::from_utf8(c.bytes()?)
                .map_err(|_| StoreError::Corrupt("scope is not UTF-8".into()))?;
            Entry::Perm(code, scope)
        }
        K_TIME => Entry::Time {
            uuid: c.uuid()?,
            expected_time: c.u64()?,
        },
        other => return Err(StoreError::Corrupt(format!("unknown entry kind {other}"))),
    };
    if !c.0.is_empty() {
        return Err(StoreError::Corrupt("trailing bytes in entry".into()));
    }
    Ok(e)
}

/// Replays a header-prefixed log. Returns the state and the byte offset just
/// past the last complete entry, so a torn tail write can be cut off.
pub(super) fn replay(bytes: &[u8]) -> Result<(State, usize, usize), StoreError> {
    let hdr = header();
    if bytes.len() < hdr.len() || &bytes[..4] != MAGIC {
        return Err(StoreError::Corrupt("bad magic".into()));
    }
    if bytes[4] != VERSION {
        return Err(StoreError::Corrupt(format!("unsupported version {}", bytes[4])));
    }
    let mut state = State::default();
    let mut pos = hdr.len();
    let mut count = 0;
    while bytes.len() - pos >= 4 {
        let len = u32::from_be_bytes(bytes[pos..pos + 4].try_into().expect("4")) as usize;
        if bytes.len() - pos - 4 < len {
            break;
        }
        state.apply(&decode_entry(&bytes[pos + 4..pos + 4 + len])?);
        pos += 4 + len;
        count += 1;
    }
    Ok((state, pos, count))
}
