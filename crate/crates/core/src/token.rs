//! The 74-byte transparent token.
//!
//! ```text
//! offset  size  field
//!      0     1  protocol   suite wire byte
//!      1     1  device     caller-supplied metadata
//!      2    16  uuid       client identifier
//!     18    16  perms      permission field, byte 0 is the mode
//!     34     8  time       protocol time, big-endian u64
//!     42    32  payload    random (preview) or KEM shared secret (final)
//! ```

use thiserror::Error;
use uuid::Uuid;

pub const TOKEN_LEN: usize = 74;
pub const PERMS_LEN: usize = 16;
pub const PERM_CODE_LEN: usize = PERMS_LEN - 1;
pub const PAYLOAD_LEN: usize = 32;

pub const OFFSET_PROTOCOL: usize = 0;
pub const OFFSET_DEVICE: usize = 1;
pub const OFFSET_UUID: usize = 2;
pub const OFFSET_PERMS: usize = 18;
pub const OFFSET_TIME: usize = 34;
pub const OFFSET_PAYLOAD: usize = 42;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TokenError {
    #[error("token must be exactly {TOKEN_LEN} bytes, got {0}")]
    Length(usize),
    #[error("permission mode {0} is reserved")]
    ReservedPermMode(u8),
}

/// Interpretation of the permission field, selected by its first byte.
/// Modes 2 through 8 are reserved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PermMode {
    /// Mode 0: the field is ignored.
    Disabled,
    /// Mode 1: the remaining 15 bytes are a code resolved by the server.
    Code([u8; PERM_CODE_LEN]),
    /// Modes 9 and above: application-defined.
    Custom(u8),
}

/// The raw 16-byte permission field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Permissions([u8; PERMS_LEN]);

impl Permissions {
    pub const DISABLED: Permissions = Permissions([0u8; PERMS_LEN]);

    pub fn from_bytes(bytes: [u8; PERMS_LEN]) -> Result<Self, TokenError> {
        match bytes[0] {
            m @ 2..=8 => Err(TokenError::ReservedPermMode(m)),
            _ => Ok(Permissions(bytes)),
        }
    }

    pub fn code(code: [u8; PERM_CODE_LEN]) -> Self {
        let mut bytes = [0u8; PERMS_LEN];
        bytes[0] = 1;
        bytes[1..].copy_from_slice(&code);
        Permissions(bytes)
    }

    pub fn mode(&self) -> PermMode {
        match self.0[0] {
            0 => PermMode::Disabled,
            1 => PermMode::Code(self.0[1..].try_into().expect("15 bytes")),
            m => PermMode::Custom(m),
        }
    }

    pub fn as_bytes(&self) -> &[u8; PERMS_LEN] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    pub protocol: u8,
    pub device: u8,
    pub uuid: Uuid,
    pub perms: Permissions,
    pub time: u64,
    pub payload: [u8; PAYLOAD_LEN],
}

impl Token {
    pub fn encode(&self) -> [u8; TOKEN_LEN] {
        let mut out = [0u8; TOKEN_LEN];
        out[OFFSET_PROTOCOL] = self.protocol;
        out[OFFSET_DEVICE] = self.device;
        out[OFFSET_UUID..OFFSET_PERMS].copy_from_slice(self.uuid.as_bytes());
        out[OFFSET_PERMS..OFFSET_TIME].copy_from_slice(self.perms.as_bytes());
        out[OFFSET_TIME..OFFSET_PAYLOAD].copy_from_slice(&self.time.to_be_bytes());
        out[OFFSET_PAYLOAD..].copy_from_slice(&self.payload);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, TokenError> {
        if bytes.len() != TOKEN_LEN {
            return Err(TokenError::Length(bytes.len()));
        }
        let perms = Permissions::from_bytes(bytes[OFFSET_PERMS..OFFSET_TIME].try_into().expect("16"))?;
        Ok(Token {
            protocol: bytes[OFFSET_PROTOCOL],
            device: bytes[OFFSET_DEVICE],
            uuid: Uuid::from_bytes(bytes[OFFSET_UUID..OFFSET_PERMS].try_into().expect("16")),
            perms,
            time: u64::from_be_bytes(bytes[OFFSET_TIME..OFFSET_PAYLOAD].try_into().expect("8")),
            payload: bytes[OFFSET_PAYLOAD..].try_into().expect("32"),
        })
    }

    /// Same token with the payload replaced, as done when finalizing.
    pub fn with_payload(&self, payload: [u8; PAYLOAD_LEN]) -> Token {
        Token { payload, ..self.clone() }
    }
}

pub fn encode_token(token: &Token) -> [u8; TOKEN_LEN] {
    token.encode()
}

pub fn decode_token(bytes: &[u8]) -> Result<Token, TokenError> {
    Token::decode(bytes)
}
