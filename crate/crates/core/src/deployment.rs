//! One-call setup of a server context, store and provisioned administrator.

use std::sync::Arc;

use uuid::Uuid;

use crate::crypto::{CryptoError, SharedProvider};
use crate::protocol::{
    AdminIdentity, ClientIdentity, CycleClient, FinalToken, Policy, ProtocolError, RegisterAdmin,
    ServerContext, StampClient,
};
use crate::store::{AdminRecord, InsertOutcome, MemoryStore, SharedStore, StoreError};
use crate::time::{ManualClock, SharedClock};
use crate::token::Permissions;
use crate::transport::{LocalServer, TransportError};

#[derive(Debug, thiserror::Error)]
pub enum DeploymentError {
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("administrator could not be provisioned: {0:?}")]
    Admin(InsertOutcome),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

/// A server with an in-memory store, a manual clock and one administrator.
#[derive(Debug, Clone)]
pub struct Deployment {
    pub provider: SharedProvider,
    pub ctx: Arc<ServerContext>,
    pub store: SharedStore,
    pub clock: Arc<ManualClock>,
    pub admin: AdminIdentity,
}

impl Deployment {
    pub fn new(provider: SharedProvider, policy: Policy) -> Result<Self, DeploymentError> {
        Self::with_store(provider, policy, Arc::new(MemoryStore::new()))
    }

    pub fn with_store(provider: SharedProvider, policy: Policy, store: SharedStore) -> Result<Self, DeploymentError> {
        let server_key = provider.generate_signing_key()?;
        let ctx = ServerContext::new(Arc::clone(&provider), server_key, policy);
        let admin_key = provider.generate_signing_key()?;
        let admin = AdminIdentity {
            uuid: Uuid::from_bytes(random_uuid_bytes(&provider)),
            signing_key: admin_key,
            server_public_key: ctx.public_key().to_vec(),
            suite: provider.suite(),
        };
        match store.insert_admin(AdminRecord {
            uuid: admin.uuid,
            public_key: admin.signing_key.public_key.clone(),
        })? {
            InsertOutcome::Inserted => {}
            other => return Err(DeploymentError::Admin(other)),
        }
        Ok(Deployment {
            provider,
            ctx,
            store,
            clock: Arc::new(ManualClock::new(1_000_000)),
            admin,
        })
    }

    pub fn shared_clock(&self) -> SharedClock {
        self.clock.clone()
    }

    pub fn local(&self) -> LocalServer {
        LocalServer::new(Arc::clone(&self.ctx), Arc::clone(&self.store), self.shared_clock())
    }

    pub fn new_uuid(&self) -> Uuid {
        Uuid::from_bytes(random_uuid_bytes(&self.provider))
    }

    /// Registers a fresh client in process.
    pub fn register_client(&self) -> Result<ClientIdentity, DeploymentError> {
        let key = self.provider.generate_signing_key()?;
        let mut m = RegisterAdmin::new(Arc::clone(&self.provider), &self.admin, self.new_uuid(), key)?;
        Ok(self.local().run(&mut m)??)
    }

    pub fn cycle(&self, client: ClientIdentity) -> Result<(ClientIdentity, Result<(), ProtocolError>), DeploymentError> {
        let mut m = CycleClient::new(Arc::clone(&self.provider), client)?;
        let r = self.local().run(&mut m)?;
        Ok((m.into_identity(), r))
    }

    pub fn stamp(
        &self,
        client: ClientIdentity,
        perms: Permissions,
    ) -> Result<(ClientIdentity, Result<FinalToken, ProtocolError>), DeploymentError> {
        let mut m = StampClient::new(Arc::clone(&self.provider), client, 0, perms)?;
        let r = self.local().run(&mut m)?;
        Ok((m.into_identity(), r))
    }
}

fn random_uuid_bytes(provider: &SharedProvider) -> [u8; 16] {
    let mut b = [0u8; 16];
    provider.fill_random(&mut b);
    // RFC 4122 version 4 layout.
    b[6] = (b[6] & 0x0f) | 0x40;
    b[8] = (b[8] & 0x3f) | 0x80;
    b
}
