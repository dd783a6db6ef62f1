use parking_lot::Mutex;
use uuid::Uuid;

use super::state::State;
use super::{
    AdminRecord, ClientRecord, InsertOutcome, RotateOutcome, Store, StoreError, TimeAdvance,
    TokenInsert, TokenLookup, TokenRecord,
};
use crate::crypto::Digest;
use crate::time::Timestamp;
use crate::token::PERM_CODE_LEN;

/// Associative in-memory store guarded by a single lock.
#[derive(Debug, Default)]
pub struct MemoryStore {
    state: Mutex<State>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Store for MemoryStore {
    fn insert_admin(&self, record: AdminRecord) -> Result<InsertOutcome, StoreError> {
        Ok(self.state.lock().insert_admin(record).0)
    }

    fn admin(&self, uuid: &Uuid) -> Result<Option<AdminRecord>, StoreError> {
        Ok(self.state.lock().admin(uuid))
    }

    fn insert_client(&self, record: ClientRecord) -> Result<InsertOutcome, StoreError> {
        Ok(self.state.lock().insert_client(record).0)
    }

    fn client(&self, uuid: &Uuid) -> Result<Option<ClientRecord>, StoreError> {
        Ok(self.state.lock().client(uuid))
    }

    fn compare_and_advance_time(&self, uuid: &Uuid, observed: u64) -> Result<TimeAdvance, StoreError> {
        Ok(self.state.lock().compare_and_advance_time(uuid, observed).0)
    }

    fn rotate_key(
        &self,
        uuid: &Uuid,
        expected_epoch: u64,
        new_key: Vec<u8>,
        now: Timestamp,
    ) -> Result<RotateOutcome, StoreError> {
        Ok(self.state.lock().rotate_key(uuid, expected_epoch, new_key, now).0)
    }

    fn insert_token(&self, record: TokenRecord) -> Result<TokenInsert, StoreError> {
        Ok(self.state.lock().insert_token(record).0)
    }

    fn lookup_token(&self, hash: &Digest, now: Timestamp) -> Result<TokenLookup, StoreError> {
        Ok(self.state.lock().lookup_token(hash, now))
    }

    fn insert_perm_code(&self, code: [u8; PERM_CODE_LEN], scope: String) -> Result<(), StoreError> {
        self.state.lock().insert_perm_code(code, scope);
        Ok(())
    }

    fn lookup_perm_code(&self, code: &[u8; PERM_CODE_LEN]) -> Result<Option<String>, StoreError> {
        Ok(self.state.lock().lookup_perm_code(code))
    }

    fn purge_expired(&self, now: Timestamp) -> Result<usize, StoreError> {
        Ok(self.state.lock().purge_expired(now).len())
    }

    fn export(&self) -> Result<Vec<u8>, StoreError> {
        Ok(self.state.lock().snapshot_bytes())
    }

    fn tokens(&self) -> Result<Vec<TokenRecord>, StoreError> {
        Ok(self.state.lock().tokens())
    }
}
