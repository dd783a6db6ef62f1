//! Append-only log store.
//!
//! ```text
//! file   = "PQTS" ‖ version u8 ‖ entry*
//! entry  = length u32 BE ‖ kind u8 ‖ fields
//! ```
//!
//! Entries are after-images, so replay is idempotent. A torn final entry is
//! dropped on open. When the log grows well past the live data it is
//! rewritten as a snapshot into a temporary file and renamed over the log.

use std::fs::{self, File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use parking_lot::Mutex;
use uuid::Uuid;

use super::state::{encode_entry, header, replay, Entry, State};
use super::{
    AdminRecord, ClientRecord, InsertOutcome, RotateOutcome, Store, StoreError, TimeAdvance,
    TokenInsert, TokenLookup, TokenRecord,
};
use crate::crypto::Digest;
use crate::time::Timestamp;
use crate::token::PERM_CODE_LEN;

const COMPACT_SLACK: usize = 4096;

#[derive(Debug)]
struct Inner {
    state: State,
    file: File,
    log_entries: usize,
}

#[derive(Debug)]
pub struct FileStore {
    path: PathBuf,
    inner: Mutex<Inner>,
}

impl FileStore {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(false)
            .open(&path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let (state, log_entries) = if bytes.is_empty() {
            file.write_all(&header())?;
            file.sync_all()?;
            (State::default(), 0)
        } else {
            let (state, end, count) = replay(&bytes)?;
            if end < bytes.len() {
                log::warn!("dropping {} bytes of torn entry at end of {}", bytes.len() - end, path.display());
                file.set_len(end as u64)?;
            }
            (state, count)
        };
        file.seek(SeekFrom::End(0))?;
        Ok(FileStore {
            path,
            inner: Mutex::new(Inner {
                state,
                file,
                log_entries,
            }),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Rewrites the log as a snapshot of the live contents.
    pub fn compact(&self) -> Result<(), StoreError> {
        let mut inner = self.inner.lock();
        self.compact_locked(&mut inner)
    }

    pub fn sync(&self) -> Result<(), StoreError> {
        self.inner.lock().file.sync_data()?;
        Ok(())
    }

    fn compact_locked(&self, inner: &mut Inner) -> Result<(), StoreError> {
        let tmp = self.path.with_extension("compact");
        {
            let mut f = File::create(&tmp)?;
            f.write_all(&inner.state.snapshot_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &self.path)?;
        let mut file = OpenOptions::new().read(true).write(true).open(&self.path)?;
        file.seek(SeekFrom::End(0))?;
        inner.file = file;
        inner.log_entries = inner.state.snapshot_entries().len();
        Ok(())
    }

    fn persist(&self, inner: &mut Inner, entries: &[Entry]) -> Result<(), StoreError> {
        if entries.is_empty() {
            return Ok(());
        }
        let mut buf = Vec::new();
        for e in entries {
            buf.extend(encode_entry(e));
        }
        inner.file.write_all(&buf)?;
        inner.log_entries += entries.len();
        if inner.log_entries > 2 * inner.state.entry_count() + COMPACT_SLACK {
            self.compact_locked(inner)?;
        }
        Ok(())
    }

    fn mutate<T>(&self, f: impl FnOnce(&mut State) -> (T, Vec<Entry>)) -> Result<T, StoreError> {
        let mut inner = self.inner.lock();
        let (out, entries) = f(&mut inner.state);
        self.persist(&mut inner, &entries)?;
        Ok(out)
    }
}

impl Store for FileStore {
    fn insert_admin(&self, record: AdminRecord) -> Result<InsertOutcome, StoreError> {
        self.mutate(|s| s.insert_admin(record))
    }

    fn admin(&self, uuid: &Uuid) -> Result<Option<AdminRecord>, StoreError> {
        Ok(self.inner.lock().state.admin(uuid))
    }

    fn insert_client(&self, record: ClientRecord) -> Result<InsertOutcome, StoreError> {
        self.mutate(|s| s.insert_client(record))
    }

    fn client(&self, uuid: &Uuid) -> Result<Option<ClientRecord>, StoreError> {
        Ok(self.inner.lock().state.client(uuid))
    }

    fn compare_and_advance_time(&self, uuid: &Uuid, observed: u64) -> Result<TimeAdvance, StoreError> {
        self.mutate(|s| s.compare_and_advance_time(uuid, observed))
    }

    fn rotate_key(
        &self,
        uuid: &Uuid,
        expected_epoch: u64,
        new_key: Vec<u8>,
        now: Timestamp,
    ) -> Result<RotateOutcome, StoreError> {
        self.mutate(|s| s.rotate_key(uuid, expected_epoch, new_key, now))
    }

    fn insert_token(&self, record: TokenRecord) -> Result<TokenInsert, StoreError> {
        self.mutate(|s| s.insert_token(record))
    }

    fn lookup_token(&self, hash: &Digest, now: Timestamp) -> Result<TokenLookup, StoreError> {
        Ok(self.inner.lock().state.lookup_token(hash, now))
    }

    fn insert_perm_code(&self, code: [u8; PERM_CODE_LEN], scope: String) -> Result<(), StoreError> {
        self.mutate(|s| ((), s.insert_perm_code(code, scope)))
    }

    fn lookup_perm_code(&self, code: &[u8; PERM_CODE_LEN]) -> Result<Option<String>, StoreError> {
        Ok(self.inner.lock().state.lookup_perm_code(code))
    }

    fn purge_expired(&self, now: Timestamp) -> Result<usize, StoreError> {
        self.mutate(|s| {
            let e = s.purge_expired(now);
            (e.len(), e)
        })
    }

    fn export(&self) -> Result<Vec<u8>, StoreError> {
        Ok(self.inner.lock().state.snapshot_bytes())
    }

    fn tokens(&self) -> Result<Vec<TokenRecord>, StoreError> {
        Ok(self.inner.lock().state.tokens())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(b: u8) -> ClientRecord {
        ClientRecord::new(Uuid::from_bytes([b; 16]), vec![b; 10], Timestamp(1))
    }

    #[test]
    fn survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.log");
        let before = {
            let s = FileStore::open(&path).unwrap();
            s.insert_client(rec(1)).unwrap();
            s.compare_and_advance_time(&Uuid::from_bytes([1; 16]), 0).unwrap();
            s.insert_perm_code([2; 15], "x".into()).unwrap();
            s.export().unwrap()
        };
        let s = FileStore::open(&path).unwrap();
        assert_eq!(s.export().unwrap(), before);
        assert_eq!(s.client(&Uuid::from_bytes([1; 16])).unwrap().unwrap().expected_time, 1);
    }

    #[test]
    fn torn_tail_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.log");
        let before = {
            let s = FileStore::open(&path).unwrap();
            s.insert_client(rec(1)).unwrap();
            s.export().unwrap()
        };
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(&[0, 0, 1, 0, 2, 9]).unwrap();
        drop(f);
        let s = FileStore::open(&path).unwrap();
        assert_eq!(s.export().unwrap(), before);
        s.insert_client(rec(2)).unwrap();
        drop(s);
        assert!(FileStore::open(&path).unwrap().client(&Uuid::from_bytes([2; 16])).unwrap().is_some());
    }

    #[test]
    fn compaction_preserves_contents_and_shrinks() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.log");
        let s = FileStore::open(&path).unwrap();
        let u = Uuid::from_bytes([1; 16]);
        s.insert_client(rec(1)).unwrap();
        for t in 0..200 {
            s.compare_and_advance_time(&u, t).unwrap();
        }
        let grown = fs::metadata(&path).unwrap().len();
        let before = s.export().unwrap();
        s.compact().unwrap();
        assert!(fs::metadata(&path).unwrap().len() < grown);
        s.compare_and_advance_time(&u, 200).unwrap();
        drop(s);
        let s = FileStore::open(&path).unwrap();
        assert_ne!(s.export().unwrap(), before);
        assert_eq!(s.client(&u).unwrap().unwrap().expected_time, 201);
    }

    #[test]
    fn rejects_foreign_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk");
        fs::write(&path, b"not a store").unwrap();
        assert!(matches!(FileStore::open(&path), Err(StoreError::Corrupt(_))));
    }
}
