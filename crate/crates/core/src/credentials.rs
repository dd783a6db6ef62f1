//! On-disk key material for servers, administrators and clients.
//!
//! ```text
//! "PQTC" | version u8 | kind u8 | suite u8 | uuid[16]
//!        | u32 len | private key | u32 len | public key | u32 len | server public key
//! ```
//!
//! Lengths are big-endian. A server file carries a nil uuid and an empty
//! server-key field. Client protocol time lives beside the credential in a
//! `<path>.time` text file so the credential itself never changes between
//! stamps.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;
use uuid::Uuid;

use crate::crypto::{PrivateKey, SigningKeyPair};
use crate::protocol::{AdminIdentity, ClientIdentity};
use crate::suite::{SuiteError, SuiteId};
use crate::time::ProtocolTime;

pub const MAGIC: &[u8; 4] = b"PQTC";
pub const VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum CredentialError {
    #[error("credential i/o: {0}")]
    Io(#[from] io::Error),
    #[error("not a credential file")]
    BadMagic,
    #[error("unsupported credential version {0}")]
    Version(u8),
    #[error("expected a {expected:?} credential, found {found:?}")]
    WrongKind { expected: CredentialKind, found: CredentialKind },
    #[error("unknown credential kind {0}")]
    UnknownKind(u8),
    #[error(transparent)]
    Suite(#[from] SuiteError),
    #[error("credential file is truncated or has trailing bytes")]
    Malformed,
    #[error("malformed time file: {0}")]
    TimeFile(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CredentialKind {
    Server = 1,
    Admin = 2,
    Client = 3,
}

impl CredentialKind {
    fn from_byte(b: u8) -> Result<Self, CredentialError> {
        match b {
            1 => Ok(CredentialKind::Server),
            2 => Ok(CredentialKind::Admin),
            3 => Ok(CredentialKind::Client),
            other => Err(CredentialError::UnknownKind(other)),
        }
    }
}

/// Decoded contents of any credential file.
#[derive(Clone, PartialEq, Eq)]
pub struct Credential {
    pub kind: CredentialKind,
    pub suite: SuiteId,
    pub uuid: Uuid,
    pub signing_key: SigningKeyPair,
    pub server_public_key: Vec<u8>,
}

impl std::fmt::Debug for Credential {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Credential")
            .field("kind", &self.kind)
            .field("suite", &self.suite)
            .field("uuid", &self.uuid)
            .finish_non_exhaustive()
    }
}

impl Credential {
    pub fn server(suite: SuiteId, key: SigningKeyPair) -> Self {
        Credential {
            kind: CredentialKind::Server,
            suite,
            uuid: Uuid::nil(),
            signing_key: key,
            server_public_key: Vec::new(),
        }
    }

    pub fn from_admin(a: &AdminIdentity) -> Self {
        Credential {
            kind: CredentialKind::Admin,
            suite: a.suite,
            uuid: a.uuid,
            signing_key: a.signing_key.clone(),
            server_public_key: a.server_public_key.clone(),
        }
    }

    pub fn from_client(c: &ClientIdentity) -> Self {
        Credential {
            kind: CredentialKind::Client,
            suite: c.suite,
            uuid: c.uuid,
            signing_key: c.signing_key.clone(),
            server_public_key: c.server_public_key.clone(),
        }
    }

    pub fn expect(self, kind: CredentialKind) -> Result<Self, CredentialError> {
        if self.kind == kind {
            Ok(self)
        } else {
            Err(CredentialError::WrongKind { expected: kind, found: self.kind })
        }
    }

    pub fn into_admin(self) -> Result<AdminIdentity, CredentialError> {
        let c = self.expect(CredentialKind::Admin)?;
        Ok(AdminIdentity {
            uuid: c.uuid,
            signing_key: c.signing_key,
            server_public_key: c.server_public_key,
            suite: c.suite,
        })
    }

    pub fn into_client(self, time: ProtocolTime) -> Result<ClientIdentity, CredentialError> {
        let c = self.expect(CredentialKind::Client)?;
        Ok(ClientIdentity {
            uuid: c.uuid,
            signing_key: c.signing_key,
            server_public_key: c.server_public_key,
            time,
            suite: c.suite,
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.signing_key.private_key.as_bytes().len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(self.kind as u8);
        out.push(self.suite.wire_byte());
        out.extend_from_slice(self.uuid.as_bytes());
        for field in [
            self.signing_key.private_key.as_bytes(),
            &self.signing_key.public_key,
            &self.server_public_key,
        ] {
            out.extend_from_slice(&(field.len() as u32).to_be_bytes());
            out.extend_from_slice(field);
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CredentialError> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(CredentialError::BadMagic);
        }
        let mut r = Reader { buf: &bytes[4..] };
        let version = r.byte()?;
        if version != VERSION {
            return Err(CredentialError::Version(version));
        }
        let kind = CredentialKind::from_byte(r.byte()?)?;
        let suite = SuiteId::from_wire_byte(r.byte()?)?;
        let uuid = Uuid::from_slice(r.take(16)?).map_err(|_| CredentialError::Malformed)?;
        let private_key = PrivateKey::from_bytes(r.field()?.to_vec());
        let public_key = r.field()?.to_vec();
        let server_public_key = r.field()?.to_vec();
        if !r.buf.is_empty() {
            return Err(CredentialError::Malformed);
        }
        Ok(Credential {
            kind,
            suite,
            uuid,
            signing_key: SigningKeyPair { private_key, public_key },
            server_public_key,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CredentialError> {
        Self::decode(&fs::read(path)?)
    }

    /// Writes atomically with owner-only permissions.
    pub fn save(&self, path: &Path) -> Result<(), CredentialError> {
        write_private(path, &self.encode())?;
        Ok(())
    }
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CredentialError> {
        if self.buf.len() < n {
            return Err(CredentialError::Malformed);
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn byte(&mut self) -> Result<u8, CredentialError> {
        Ok(self.take(1)?[0])
    }

    fn field(&mut self) -> Result<&'a [u8], CredentialError> {
        let len = u32::from_be_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize;
        self.take(len)
    }
}

pub fn time_path(credential: &Path) -> PathBuf {
    let mut s = credential.as_os_str().to_owned();
    s.push(".time");
    PathBuf::from(s)
}

/// Reads `<credential>.time`; a missing file means a fresh counter.
pub fn load_time(credential: &Path) -> Result<ProtocolTime, CredentialError> {
    let text = match fs::read_to_string(time_path(credential)) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(ProtocolTime::default()),
        Err(e) => return Err(e.into()),
    };
    let mut time = ProtocolTime::default();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CredentialError::TimeFile(line.to_string()))?;
        let v: u64 = v
            .trim()
            .parse()
            .map_err(|_| CredentialError::TimeFile(line.to_string()))?;
        match k.trim() {
            "counter" => time.counter = v,
            "max" => time.max = v,
            _ => return Err(CredentialError::TimeFile(line.to_string())),
        }
    }
    Ok(time)
}

pub fn save_time(credential: &Path, time: &ProtocolTime) -> Result<(), CredentialError> {
    let text = format!("counter={}\nmax={}\n", time.counter, time.max);
    write_private(&time_path(credential), text.as_bytes())?;
    Ok(())
}

/// Atomically writes `bytes` to `path`, readable by the owner only.
pub fn write_private(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut opts = fs::OpenOptions::new();
    opts.write(true).create(true).truncate(true);
    #[cfg(unix)]
    {
        use std::os::unix::fs::OpenOptionsExt;
        opts.mode(0o600);
    }
    let mut f = opts.open(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    drop(f);
    fs::rename(&tmp, path)
}
