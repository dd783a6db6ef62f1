//! Protocol actions as I/O-free state machines.
//!
//! A machine is advanced with [`StateMachine::recv`]. Whenever it needs
//! something done outside (send bytes, query the store) it queues a request
//! that the driver collects with [`StateMachine::poll_transmit`], services,
//! and feeds back through `recv`. [`StateMachine::poll_result`] stays
//! `Pending` until the machine has terminated and its queue is drained.
//!
//! ```text
//! loop {
//!     if let Some(input) = inbound.pop() { machine.recv(input)?; }
//!     if let Some(t) = machine.poll_transmit() { inbound.push(service(t)); }
//!     if let Poll::Ready(r) = machine.poll_result() { return r; }
//! }
//! ```

mod client;
mod server;

use std::collections::VecDeque;
use std::fmt;
use std::task::Poll;

use thiserror::Error;
use uuid::Uuid;

use crate::crypto::{CryptoError, CryptoProvider, Digest, SigningKeyPair};
use crate::suite::SuiteId;
use crate::time::ProtocolTime;
use crate::token::{Token, TOKEN_LEN};
use crate::wire::{ErrorCode, WireError};

pub use client::{CheckClient, CycleClient, RegisterAdmin, StampClient};
pub use server::{
    CheckServer, CycleServer, Policy, RegisterServer, ServerContext, ServerInput, ServerOutcome,
    ServerSession, ServerTransmit, StampServer, DEFAULT_KEY_LIFETIME_SECS, DEFAULT_TOKEN_TTL_SECS,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MachineError {
    #[error("machine has already terminated")]
    Terminated,
    #[error("unexpected input: {0}")]
    UnexpectedInput(&'static str),
}

/// Why a protocol action failed.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("server rejected the request: {0}")]
    Rejected(ErrorCode),
    /// Local time was behind or ahead; it has been resynchronized and the
    /// request may be retried.
    #[error("protocol time out of sync; resynchronized to {correct_time}")]
    BadTime { correct_time: u64 },
    #[error("signing key expired or protocol time exhausted; a key cycle is required")]
    CycleRequired,
    #[error("server signature did not verify")]
    BadServerSignature,
    #[error("error reply is bound to a different request")]
    ErrorBindingMismatch,
    #[error("registration response is for a different identifier")]
    IdHashMismatch,
    #[error("cycle response does not match the submitted key")]
    VerificationHashMismatch,
    #[error("approval hash mismatch: token was not established")]
    ApprovalHashMismatch,
    #[error("unexpected {0} message")]
    UnexpectedMessage(&'static str),
    #[error("undecodable message: {0}")]
    Decode(#[from] WireError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

impl ProtocolError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ProtocolError::BadTime { .. })
    }
}

/// The contract shared by every machine.
pub trait StateMachine {
    type Input;
    type Transmit;
    type Output;

    fn recv(&mut self, input: Self::Input) -> Result<(), MachineError>;

    fn poll_transmit(&mut self) -> Option<Self::Transmit>;

    fn poll_result(&mut self) -> Poll<Self::Output>;
}

/// Everything a client holds after installation: `⟨I, k_c, k̄_S⟩` plus its
/// protocol time and suite.
#[derive(Clone, PartialEq, Eq)]
pub struct ClientIdentity {
    pub uuid: Uuid,
    pub signing_key: SigningKeyPair,
    pub server_public_key: Vec<u8>,
    pub time: ProtocolTime,
    pub suite: SuiteId,
}

impl fmt::Debug for ClientIdentity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClientIdentity")
            .field("uuid", &self.uuid)
            .field("time", &self.time)
            .field("suite", &self.suite)
            .finish_non_exhaustive()
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct AdminIdentity {
    pub uuid: Uuid,
    pub signing_key: SigningKeyPair,
    pub server_public_key: Vec<u8>,
    pub suite: SuiteId,
}

impl fmt::Debug for AdminIdentity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AdminIdentity")
            .field("uuid", &self.uuid)
            .field("suite", &self.suite)
            .finish_non_exhaustive()
    }
}

/// A successfully established token as seen by the client.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FinalToken {
    pub token: Token,
    pub preview: Token,
    pub approval_hash: Digest,
}

impl FinalToken {
    pub fn bytes(&self) -> [u8; TOKEN_LEN] {
        self.token.encode()
    }
}

/// `h(final ‖ preview)`
pub fn approval_hash(provider: &dyn CryptoProvider, final_token: &Token, preview: &Token) -> Digest {
    crate::crypto::hash_concat(provider, &[&final_token.encode(), &preview.encode()])
}

/// `h(I)` over the raw 16 identifier bytes.
pub fn id_hash(provider: &dyn CryptoProvider, uuid: &Uuid) -> Digest {
    provider.hash(uuid.as_bytes())
}

/// `h(I ‖ k̄'_c)`
pub fn cycle_verification_hash(provider: &dyn CryptoProvider, uuid: &Uuid, new_public_key: &[u8]) -> Digest {
    crate::crypto::hash_concat(provider, &[uuid.as_bytes(), new_public_key])
}

/// Outbound queue plus terminal slot, shared by all machines.
#[derive(Debug)]
struct Core<T, O> {
    out: VecDeque<T>,
    result: Option<O>,
}

impl<T, O: Clone> Core<T, O> {
    fn new() -> Self {
        Core {
            out: VecDeque::new(),
            result: None,
        }
    }

    fn guard(&self) -> Result<(), MachineError> {
        match self.result {
            Some(_) => Err(MachineError::Terminated),
            None => Ok(()),
        }
    }

    fn finish(&mut self, o: O) {
        debug_assert!(self.result.is_none());
        self.result = Some(o);
    }

    fn poll_result(&self) -> Poll<O> {
        match &self.result {
            Some(r) if self.out.is_empty() => Poll::Ready(r.clone()),
            _ => Poll::Pending,
        }
    }
}

#[cfg(test)]
mod tests;
