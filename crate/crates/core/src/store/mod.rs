//! Server-side persistence: administrators, clients, the public-key ledger,
//! token hashes and permission codes.
//!
//! Only digests of final tokens are stored. All mutating operations are
//! atomic; the per-client time counter is a compare-and-set.

mod file;
mod memory;
mod state;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;
use uuid::Uuid;

use crate::crypto::Digest;
use crate::time::Timestamp;
use crate::token::{PERMS_LEN, PERM_CODE_LEN};

pub use file::FileStore;
pub use memory::MemoryStore;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt store log: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdminRecord {
    pub uuid: Uuid,
    pub public_key: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientRecord {
    pub uuid: Uuid,
    pub public_key: Vec<u8>,
    pub key_installed_at: Timestamp,
    /// Protocol time the next stamp request must carry.
    pub expected_time: u64,
    pub key_epoch: u64,
}

impl ClientRecord {
    pub fn new(uuid: Uuid, public_key: Vec<u8>, now: Timestamp) -> Self {
        ClientRecord {
            uuid,
            public_key,
            key_installed_at: now,
            expected_time: 0,
            key_epoch: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenRecord {
    pub token_hash: Digest,
    pub uuid: Uuid,
    pub perms: [u8; PERMS_LEN],
    pub issued_at: Timestamp,
    pub expires_at: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOutcome {
    Inserted,
    DuplicateId,
    DuplicateKey,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeAdvance {
    /// The observed value matched; the counter now holds the returned value.
    Advanced(u64),
    /// The counter did not match and was left at the returned value.
    Mismatch(u64),
    UnknownClient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RotateOutcome {
    Rotated { epoch: u64 },
    DuplicateKey,
    UnknownClient,
    /// Another cycle completed between read and rotate.
    EpochMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenInsert {
    Inserted,
    Duplicate,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenLookup {
    Live(TokenRecord),
    Expired(TokenRecord),
    Absent,
}

pub trait Store: Send + Sync + fmt::Debug {
    fn insert_admin(&self, record: AdminRecord) -> Result<InsertOutcome, StoreError>;

    fn admin(&self, uuid: &Uuid) -> Result<Option<AdminRecord>, StoreError>;

    /// Insert-if-absent on both the identifier and the key ledger.
    fn insert_client(&self, record: ClientRecord) -> Result<InsertOutcome, StoreError>;

    fn client(&self, uuid: &Uuid) -> Result<Option<ClientRecord>, StoreError>;

    fn compare_and_advance_time(&self, uuid: &Uuid, observed: u64) -> Result<TimeAdvance, StoreError>;

    /// Installs `new_key`, bumps the epoch and resets the counter to 0,
    /// provided the client is still at `expected_epoch`.
    fn rotate_key(
        &self,
        uuid: &Uuid,
        expected_epoch: u64,
        new_key: Vec<u8>,
        now: Timestamp,
    ) -> Result<RotateOutcome, StoreError>;

    fn insert_token(&self, record: TokenRecord) -> Result<TokenInsert, StoreError>;

    fn lookup_token(&self, hash: &Digest, now: Timestamp) -> Result<TokenLookup, StoreError>;

    fn insert_perm_code(&self, code: [u8; PERM_CODE_LEN], scope: String) -> Result<(), StoreError>;

    fn lookup_perm_code(&self, code: &[u8; PERM_CODE_LEN]) -> Result<Option<String>, StoreError>;

    /// Drops token records whose expiry has passed; returns how many.
    fn purge_expired(&self, now: Timestamp) -> Result<usize, StoreError>;

    /// Canonical serialization of the full contents. Two stores holding the
    /// same data export identical bytes.
    fn export(&self) -> Result<Vec<u8>, StoreError>;

    /// All token records in hash order.
    fn tokens(&self) -> Result<Vec<TokenRecord>, StoreError>;
}

pub type SharedStore = Arc<dyn Store>;

/// A store call issued by a server state machine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StoreRequest {
    Admin(Uuid),
    Client(Uuid),
    InsertClient(ClientRecord),
    CompareAndAdvanceTime { uuid: Uuid, observed: u64 },
    RotateKey {
        uuid: Uuid,
        expected_epoch: u64,
        new_key: Vec<u8>,
        now: Timestamp,
    },
    InsertToken(TokenRecord),
    LookupToken { hash: Digest, now: Timestamp },
    LookupPermCode([u8; PERM_CODE_LEN]),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StoreResponse {
    Admin(Option<AdminRecord>),
    Client(Option<ClientRecord>),
    Insert(InsertOutcome),
    Time(TimeAdvance),
    Rotate(RotateOutcome),
    Token(TokenInsert),
    Lookup(TokenLookup),
    PermCode(Option<String>),
    Failed(String),
}

/// Runs one request against a store.
pub fn execute(store: &dyn Store, request: StoreRequest) -> StoreResponse {
    let result = match request {
        StoreRequest::Admin(u) => store.admin(&u).map(StoreResponse::Admin),
        StoreRequest::Client(u) => store.client(&u).map(StoreResponse::Client),
        StoreRequest::InsertClient(r) => store.insert_client(r).map(StoreResponse::Insert),
        StoreRequest::CompareAndAdvanceTime { uuid, observed } => {
            store.compare_and_advance_time(&uuid, observed).map(StoreResponse::Time)
        }
        StoreRequest::RotateKey {
            uuid,
            expected_epoch,
            new_key,
            now,
        } => store
            .rotate_key(&uuid, expected_epoch, new_key, now)
            .map(StoreResponse::Rotate),
        StoreRequest::InsertToken(r) => store.insert_token(r).map(StoreResponse::Token),
        StoreRequest::LookupToken { hash, now } => store.lookup_token(&hash, now).map(StoreResponse::Lookup),
        StoreRequest::LookupPermCode(code) => store.lookup_perm_code(&code).map(StoreResponse::PermCode),
    };
    result.unwrap_or_else(|e| StoreResponse::Failed(e.to_string()))
}
