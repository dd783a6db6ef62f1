//! Single-shot post-quantum token establishment between machines.
//!
//! Clients obtain compact 74-byte tokens from a server using ML-DSA
//! signatures and an ML-KEM shared secret. Protocol logic is written as
//! I/O-free state machines; the [`transport`] module drives them over TCP.

pub mod adversary;
pub mod bench;
pub mod credentials;
pub mod crypto;
pub mod deployment;
pub mod frame;
pub mod overhead;
pub mod protocol;
pub mod store;
pub mod suite;
pub mod time;
pub mod token;
pub mod transport;
pub mod wire;
