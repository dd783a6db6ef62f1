//! Byte layout of the protocol messages.
//!
//! Every message is `discriminator ‖ fields in tuple order ‖ signatures`, with
//! each cryptographic field at the fixed length of the active suite. Inner
//! signatures cover the unsigned body (discriminator and fields); outer
//! signatures cover exactly the inner signature bytes.
//!
//! ```text
//! REGISTER  01 | uuid 16 | client_pk | admin_uuid 16 | sig_client | sig_admin
//! REGSUCC   02 | h(uuid)            | sig_server
//! CYCLE     03 | uuid 16 | new_pk   | sig_new | sig_old
//! CYCLEOK   04 | h(uuid ‖ new_pk)   | sig_server
//! STAMP     05 | preview token 74 | ek | sig_client
//! STAMPED   06 | approval hash | ct  | sig_server
//! ERROR     7F | code 1 | h(request) | correct_time u64 BE | sig_server
//! check        bare 74-byte token (no discriminator)
//! ```
//!
//! A check is recognised by its length: every discriminated message is longer
//! than a token for all registered suites.

use std::fmt;

use thiserror::Error;
use uuid::Uuid;

use crate::crypto::Digest;
use crate::suite::SuiteParams;
use crate::token::{Token, TokenError, TOKEN_LEN};

pub const REGISTER: u8 = 0x01;
pub const REGSUCCESS: u8 = 0x02;
pub const CYCLE: u8 = 0x03;
pub const CYCLEOK: u8 = 0x04;
pub const STAMP: u8 = 0x05;
pub const STAMPED: u8 = 0x06;
pub const ERROR: u8 = 0x7F;

const UUID_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("message truncated: needed {needed} more bytes")]
    Truncated { needed: usize },
    #[error("unknown discriminator 0x{0:02x}")]
    UnknownDiscriminator(u8),
    #[error("{0} trailing bytes after message")]
    TrailingBytes(usize),
    #[error("empty message")]
    Empty,
    #[error("field `{field}` must be {expected} bytes, got {actual}")]
    FieldLength {
        field: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("unknown error code {0}")]
    UnknownErrorCode(u8),
    #[error("invalid token: {0}")]
    Token(#[from] TokenError),
}

/// Server error codes carried in `ERROR` replies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum ErrorCode {
    BadTime = 1,
    KeyExpired = 2,
    DuplicateId = 3,
    DuplicateKey = 4,
    BadSignature = 5,
    UnknownClient = 6,
    DuplicateToken = 7,
    /// Undecodable request, wrong suite, unknown permission code.
    BadRequest = 8,
}

impl ErrorCode {
    pub fn from_byte(b: u8) -> Result<Self, WireError> {
        Ok(match b {
            1 => ErrorCode::BadTime,
            2 => ErrorCode::KeyExpired,
            3 => ErrorCode::DuplicateId,
            4 => ErrorCode::DuplicateKey,
            5 => ErrorCode::BadSignature,
            6 => ErrorCode::UnknownClient,
            7 => ErrorCode::DuplicateToken,
            8 => ErrorCode::BadRequest,
            other => return Err(WireError::UnknownErrorCode(other)),
        })
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ErrorCode::BadTime => "BAD_TIME",
            ErrorCode::KeyExpired => "KEY_EXPIRED",
            ErrorCode::DuplicateId => "DUPLICATE_ID",
            ErrorCode::DuplicateKey => "DUPLICATE_KEY",
            ErrorCode::BadSignature => "BAD_SIGNATURE",
            ErrorCode::UnknownClient => "UNKNOWN_CLIENT",
            ErrorCode::DuplicateToken => "DUPLICATE_TOKEN",
            ErrorCode::BadRequest => "BAD_REQUEST",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WireMessage {
    Register {
        uuid: Uuid,
        client_public_key: Vec<u8>,
        admin_uuid: Uuid,
        client_signature: Vec<u8>,
        admin_signature: Vec<u8>,
    },
    RegSuccess {
        id_hash: Digest,
        server_signature: Vec<u8>,
    },
    Cycle {
        uuid: Uuid,
        new_public_key: Vec<u8>,
        new_key_signature: Vec<u8>,
        old_key_signature: Vec<u8>,
    },
    CycleOk {
        verification_hash: Digest,
        server_signature: Vec<u8>,
    },
    Stamp {
        preview: Token,
        encapsulation_key: Vec<u8>,
        client_signature: Vec<u8>,
    },
    Stamped {
        approval_hash: Digest,
        ciphertext: Vec<u8>,
        server_signature: Vec<u8>,
    },
    Check {
        token: Token,
    },
    Error {
        code: ErrorCode,
        request_hash: Digest,
        correct_time: u64,
        server_signature: Vec<u8>,
    },
}

fn put(out: &mut Vec<u8>, field: &'static str, bytes: &[u8], expected: usize) -> Result<(), WireError> {
    if bytes.len() != expected {
        return Err(WireError::FieldLength {
            field,
            expected,
            actual: bytes.len(),
        });
    }
    out.extend_from_slice(bytes);
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.buf.len() < n {
            return Err(WireError::Truncated {
                needed: n - self.buf.len(),
            });
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn vec(&mut self, n: usize) -> Result<Vec<u8>, WireError> {
        self.take(n).map(<[u8]>::to_vec)
    }

    fn uuid(&mut self) -> Result<Uuid, WireError> {
        Ok(Uuid::from_bytes(self.take(UUID_LEN)?.try_into().expect("16")))
    }

    fn digest(&mut self, n: usize) -> Result<Digest, WireError> {
        self.vec(n).map(Digest::from_bytes)
    }

    fn finish(self) -> Result<(), WireError> {
        match self.buf.len() {
            0 => Ok(()),
            n => Err(WireError::TrailingBytes(n)),
        }
    }
}

impl WireMessage {
    pub fn discriminator(&self) -> Option<u8> {
        Some(match self {
            WireMessage::Register { .. } => REGISTER,
            WireMessage::RegSuccess { .. } => REGSUCCESS,
            WireMessage::Cycle { .. } => CYCLE,
            WireMessage::CycleOk { .. } => CYCLEOK,
            WireMessage::Stamp { .. } => STAMP,
            WireMessage::Stamped { .. } => STAMPED,
            WireMessage::Error { .. } => ERROR,
            WireMessage::Check { .. } => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            WireMessage::Register { .. } => "REGISTER",
            WireMessage::RegSuccess { .. } => "REGSUCCESS",
            WireMessage::Cycle { .. } => "CYCLE",
            WireMessage::CycleOk { .. } => "CYCLEOK",
            WireMessage::Stamp { .. } => "STAMP",
            WireMessage::Stamped { .. } => "STAMPED",
            WireMessage::Check { .. } => "CHECK",
            WireMessage::Error { .. } => "ERROR",
        }
    }

    /// The unsigned body: discriminator and plain fields, no signatures.
    /// This is what inner (or only) signatures cover.
    pub fn signing_bytes(&self, params: &SuiteParams) -> Result<Vec<u8>, WireError> {
        let mut out = Vec::new();
        if let Some(d) = self.discriminator() {
            out.push(d);
        }
        match self {
            WireMessage::Register {
                uuid,
                client_public_key,
                admin_uuid,
                ..
            } => {
                out.extend_from_slice(uuid.as_bytes());
                put(&mut out, "client_public_key", client_public_key, params.public_key_len)?;
                out.extend_from_slice(admin_uuid.as_bytes());
            }
            WireMessage::RegSuccess { id_hash, .. } => {
                put(&mut out, "id_hash", id_hash.as_bytes(), params.digest_len)?;
            }
            WireMessage::Cycle {
                uuid, new_public_key, ..
            } => {
                out.extend_from_slice(uuid.as_bytes());
                put(&mut out, "new_public_key", new_public_key, params.public_key_len)?;
            }
            WireMessage::CycleOk {
                verification_hash, ..
            } => {
                put(&mut out, "verification_hash", verification_hash.as_bytes(), params.digest_len)?;
            }
            WireMessage::Stamp {
                preview,
                encapsulation_key,
                ..
            } => {
                out.extend_from_slice(&preview.encode());
                put(&mut out, "encapsulation_key", encapsulation_key, params.encaps_key_len)?;
            }
            WireMessage::Stamped {
                approval_hash,
                ciphertext,
                ..
            } => {
                put(&mut out, "approval_hash", approval_hash.as_bytes(), params.digest_len)?;
                put(&mut out, "ciphertext", ciphertext, params.ciphertext_len)?;
            }
            WireMessage::Check { token } => out.extend_from_slice(&token.encode()),
            WireMessage::Error {
                code,
                request_hash,
                correct_time,
                ..
            } => {
                out.push(*code as u8);
                put(&mut out, "request_hash", request_hash.as_bytes(), params.digest_len)?;
                out.extend_from_slice(&correct_time.to_be_bytes());
            }
        }
        Ok(out)
    }

    /// Bytes covered by the outer signature of a double-signed message: the
    /// inner signature itself.
    pub fn outer_signing_bytes(&self) -> Option<&[u8]> {
        match self {
            WireMessage::Register { client_signature, .. } => Some(client_signature),
            WireMessage::Cycle { new_key_signature, .. } => Some(new_key_signature),
            _ => None,
        }
    }

    pub fn encode(&self, params: &SuiteParams) -> Result<Vec<u8>, WireError> {
        let mut out = self.signing_bytes(params)?;
        let sig = params.signature_len;
        match self {
            WireMessage::Register {
                client_signature,
                admin_signature,
                ..
            } => {
                put(&mut out, "client_signature", client_signature, sig)?;
                put(&mut out, "admin_signature", admin_signature, sig)?;
            }
            WireMessage::Cycle {
                new_key_signature,
                old_key_signature,
                ..
            } => {
                put(&mut out, "new_key_signature", new_key_signature, sig)?;
                put(&mut out, "old_key_signature", old_key_signature, sig)?;
            }
            WireMessage::RegSuccess { server_signature, .. }
            | WireMessage::CycleOk { server_signature, .. }
            | WireMessage::Stamped { server_signature, .. }
            | WireMessage::Error { server_signature, .. } => {
                put(&mut out, "server_signature", server_signature, sig)?;
            }
            WireMessage::Stamp { client_signature, .. } => {
                put(&mut out, "client_signature", client_signature, sig)?;
            }
            WireMessage::Check { .. } => {}
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8], params: &SuiteParams) -> Result<Self, WireError> {
        if bytes.is_empty() {
            return Err(WireError::Empty);
        }
        if bytes.len() == TOKEN_LEN {
            return Ok(WireMessage::Check {
                token: Token::decode(bytes)?,
            });
        }
        let mut r = Reader { buf: &bytes[1..] };
        let sig = params.signature_len;
        let msg = match bytes[0] {
            REGISTER => WireMessage::Register {
                uuid: r.uuid()?,
                client_public_key: r.vec(params.public_key_len)?,
                admin_uuid: r.uuid()?,
                client_signature: r.vec(sig)?,
                admin_signature: r.vec(sig)?,
            },
            REGSUCCESS => WireMessage::RegSuccess {
                id_hash: r.digest(params.digest_len)?,
                server_signature: r.vec(sig)?,
            },
            CYCLE => WireMessage::Cycle {
                uuid: r.uuid()?,
                new_public_key: r.vec(params.public_key_len)?,
                new_key_signature: r.vec(sig)?,
                old_key_signature: r.vec(sig)?,
            },
            CYCLEOK => WireMessage::CycleOk {
                verification_hash: r.digest(params.digest_len)?,
                server_signature: r.vec(sig)?,
            },
            STAMP => WireMessage::Stamp {
                preview: Token::decode(r.take(TOKEN_LEN)?)?,
                encapsulation_key: r.vec(params.encaps_key_len)?,
                client_signature: r.vec(sig)?,
            },
            STAMPED => WireMessage::Stamped {
                approval_hash: r.digest(params.digest_len)?,
                ciphertext: r.vec(params.ciphertext_len)?,
                server_signature: r.vec(sig)?,
            },
            ERROR => WireMessage::Error {
                code: ErrorCode::from_byte(r.take(1)?[0])?,
                request_hash: r.digest(params.digest_len)?,
                correct_time: u64::from_be_bytes(r.take(8)?.try_into().expect("8")),
                server_signature: r.vec(sig)?,
            },
            other => return Err(WireError::UnknownDiscriminator(other)),
        };
        r.finish()?;
        Ok(msg)
    }

    /// Encoded size of a message kind for a suite, without building one.
    pub fn encoded_len(discriminator: Option<u8>, params: &SuiteParams) -> Option<usize> {
        let p = params;
        Some(match discriminator {
            None => TOKEN_LEN,
            Some(REGISTER) => 1 + 2 * UUID_LEN + p.public_key_len + 2 * p.signature_len,
            Some(REGSUCCESS) | Some(CYCLEOK) => 1 + p.digest_len + p.signature_len,
            Some(CYCLE) => 1 + UUID_LEN + p.public_key_len + 2 * p.signature_len,
            Some(STAMP) => 1 + TOKEN_LEN + p.encaps_key_len + p.signature_len,
            Some(STAMPED) => 1 + p.digest_len + p.ciphertext_len + p.signature_len,
            Some(ERROR) => 1 + 1 + p.digest_len + 8 + p.signature_len,
            Some(_) => return None,
        })
    }
}

pub fn encode_message(m: &WireMessage, params: &SuiteParams) -> Result<Vec<u8>, WireError> {
    m.encode(params)
}

pub fn decode_message(bytes: &[u8], params: &SuiteParams) -> Result<WireMessage, WireError> {
    WireMessage::decode(bytes, params)
}

/// Outcome of a token check as reported to the presenter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Valid = 0,
    Unknown = 1,
    Expired = 2,
    Malformed = 3,
    UnknownClient = 4,
}

/// Reply to a check request: `status ‖ perms[16]` where perms is only
/// present when the status is valid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckReply {
    pub status: CheckStatus,
    pub perms: Option<[u8; 16]>,
}

impl CheckReply {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = vec![self.status as u8];
        if let Some(p) = self.perms {
            out.extend_from_slice(&p);
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let (&first, rest) = bytes.split_first().ok_or(WireError::Empty)?;
        let status = match first {
            0 => CheckStatus::Valid,
            1 => CheckStatus::Unknown,
            2 => CheckStatus::Expired,
            3 => CheckStatus::Malformed,
            4 => CheckStatus::UnknownClient,
            other => return Err(WireError::UnknownDiscriminator(other)),
        };
        match (status, rest.len()) {
            (CheckStatus::Valid, 16) => Ok(CheckReply {
                status,
                perms: Some(rest.try_into().expect("16")),
            }),
            (CheckStatus::Valid, n) if n < 16 => Err(WireError::Truncated { needed: 16 - n }),
            (CheckStatus::Valid, n) => Err(WireError::TrailingBytes(n - 16)),
            (_, 0) => Ok(CheckReply { status, perms: None }),
            (_, n) => Err(WireError::TrailingBytes(n)),
        }
    }
}
