//! Server side. Each machine handles one request; store access is requested
//! through `poll_transmit` and answered through `recv`.

use std::sync::Arc;
use std::task::Poll;

use uuid::Uuid;

use super::{approval_hash, cycle_verification_hash, id_hash, Core, MachineError, StateMachine};
use crate::crypto::{Digest, SharedProvider, SigningKeyPair};
use crate::store::{
    ClientRecord, InsertOutcome, RotateOutcome, StoreRequest, StoreResponse, TimeAdvance,
    TokenInsert, TokenLookup, TokenRecord,
};
use crate::time::Timestamp;
use crate::token::{PermMode, Token, TOKEN_LEN};
use crate::wire::{CheckReply, CheckStatus, ErrorCode, WireMessage};

pub const DEFAULT_KEY_LIFETIME_SECS: u64 = 90 * 24 * 3600;
pub const DEFAULT_TOKEN_TTL_SECS: u64 = 3600;

/// Server-side limits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Policy {
    pub key_lifetime_secs: u64,
    pub token_ttl_secs: u64,
    /// Protocol time at which stamping stops until the client cycles.
    pub max_time: u64,
}

impl Default for Policy {
    fn default() -> Self {
        Policy {
            key_lifetime_secs: DEFAULT_KEY_LIFETIME_SECS,
            token_ttl_secs: DEFAULT_TOKEN_TTL_SECS,
            max_time: u64::MAX,
        }
    }
}

/// Long-lived server state shared by all machines: provider, `k_S`, policy.
#[derive(Debug)]
pub struct ServerContext {
    provider: SharedProvider,
    signing_key: SigningKeyPair,
    policy: Policy,
}

impl ServerContext {
    pub fn new(provider: SharedProvider, signing_key: SigningKeyPair, policy: Policy) -> Arc<Self> {
        Arc::new(ServerContext {
            provider,
            signing_key,
            policy,
        })
    }

    pub fn provider(&self) -> &SharedProvider {
        &self.provider
    }

    pub fn public_key(&self) -> &[u8] {
        &self.signing_key.public_key
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub(crate) fn signing_key(&self) -> &SigningKeyPair {
        &self.signing_key
    }

    pub(crate) fn sign_into(&self, mut msg: WireMessage) -> Vec<u8> {
        let params = self.provider.params();
        let body = msg.signing_bytes(&params).expect("server builds well-sized messages");
        let sig = self
            .provider
            .sign(&body, &self.signing_key.private_key)
            .expect("server key matches suite");
        match &mut msg {
            WireMessage::RegSuccess { server_signature, .. }
            | WireMessage::CycleOk { server_signature, .. }
            | WireMessage::Stamped { server_signature, .. }
            | WireMessage::Error { server_signature, .. } => *server_signature = sig,
            _ => unreachable!("only server messages are signed here"),
        }
        msg.encode(&params).expect("server builds well-sized messages")
    }

    fn error_reply(&self, code: ErrorCode, request: &[u8], correct_time: u64) -> Vec<u8> {
        self.sign_into(WireMessage::Error {
            code,
            request_hash: self.provider.hash(request),
            correct_time,
            server_signature: Vec::new(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ServerInput {
    Request(Vec<u8>),
    Store(StoreResponse),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ServerTransmit {
    Store(StoreRequest),
    Reply(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ServerOutcome {
    Registered { uuid: Uuid },
    Cycled { uuid: Uuid, epoch: u64 },
    Stamped {
        uuid: Uuid,
        epoch: u64,
        time: u64,
        token_hash: Digest,
    },
    Checked(CheckStatus),
    /// An error reply was sent.
    Rejected { request: &'static str, code: ErrorCode },
    /// The store failed; the connection should be dropped without a reply.
    Failed(String),
}

type ServerCore = Core<ServerTransmit, ServerOutcome>;

impl ServerCore {
    fn query(&mut self, r: StoreRequest) {
        self.out.push_back(ServerTransmit::Store(r));
    }

    fn reply(&mut self, bytes: Vec<u8>, outcome: ServerOutcome) {
        self.out.push_back(ServerTransmit::Reply(bytes));
        self.finish(outcome);
    }

    fn reject(&mut self, ctx: &ServerContext, name: &'static str, code: ErrorCode, request: &[u8], time: u64) {
        log::debug!("rejecting {name}: {code}");
        let bytes = ctx.error_reply(code, request, time);
        self.reply(bytes, ServerOutcome::Rejected { request: name, code });
    }
}

fn store_input(input: ServerInput) -> Result<StoreResponse, MachineError> {
    match input {
        ServerInput::Store(r) => Ok(r),
        ServerInput::Request(_) => Err(MachineError::UnexpectedInput("request while awaiting store")),
    }
}

macro_rules! server_machine_impl {
    ($ty:ty) => {
        impl StateMachine for $ty {
            type Input = ServerInput;
            type Transmit = ServerTransmit;
            type Output = ServerOutcome;

            fn recv(&mut self, input: ServerInput) -> Result<(), MachineError> {
                self.core.guard()?;
                let resp = store_input(input)?;
                if let StoreResponse::Failed(e) = resp {
                    self.core.finish(ServerOutcome::Failed(e));
                    return Ok(());
                }
                self.on_store(resp)
            }

            fn poll_transmit(&mut self) -> Option<ServerTransmit> {
                self.core.out.pop_front()
            }

            fn poll_result(&mut self) -> Poll<ServerOutcome> {
                self.core.poll_result()
            }
        }
    };
}

/// Handles `REGISTER`.
#[derive(Debug)]
pub struct RegisterServer {
    ctx: Arc<ServerContext>,
    core: ServerCore,
    now: Timestamp,
    request: Vec<u8>,
    msg: Option<WireMessage>,
    step: RegisterStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RegisterStep {
    Admin,
    Insert,
}

impl RegisterServer {
    pub fn new(ctx: Arc<ServerContext>, now: Timestamp, request: Vec<u8>) -> Self {
        let mut core = ServerCore::new();
        let msg = match WireMessage::decode(&request, &ctx.provider.params()) {
            Ok(m @ WireMessage::Register { .. }) => {
                if let WireMessage::Register { admin_uuid, .. } = &m {
                    core.query(StoreRequest::Admin(*admin_uuid));
                }
                Some(m)
            }
            _ => {
                core.reject(&ctx, "REGISTER", ErrorCode::BadRequest, &request, 0);
                None
            }
        };
        RegisterServer {
            ctx,
            core,
            now,
            request,
            msg,
            step: RegisterStep::Admin,
        }
    }

    fn on_store(&mut self, resp: StoreResponse) -> Result<(), MachineError> {
        let Some(WireMessage::Register {
            uuid,
            client_public_key,
            client_signature,
            admin_signature,
            ..
        }) = &self.msg
        else {
            return Err(MachineError::Terminated);
        };
        let ctx = &self.ctx;
        let p = &ctx.provider;
        match (self.step, resp) {
            (RegisterStep::Admin, StoreResponse::Admin(None)) => {
                self.core.reject(ctx, "REGISTER", ErrorCode::UnknownClient, &self.request, 0);
            }
            (RegisterStep::Admin, StoreResponse::Admin(Some(admin))) => {
                let body = self.msg.as_ref().expect("set").signing_bytes(&p.params()).expect("decoded");
                let inner_ok = p.verify(client_signature, &body, client_public_key);
                let outer_ok = p.verify(admin_signature, client_signature, &admin.public_key);
                if !(inner_ok && outer_ok) {
                    self.core.reject(ctx, "REGISTER", ErrorCode::BadSignature, &self.request, 0);
                } else {
                    self.step = RegisterStep::Insert;
                    let rec = ClientRecord::new(*uuid, client_public_key.clone(), self.now);
                    self.core.query(StoreRequest::InsertClient(rec));
                }
            }
            (RegisterStep::Insert, StoreResponse::Insert(outcome)) => match outcome {
                InsertOutcome::Inserted => {
                    let uuid = *uuid;
                    let reply = ctx.sign_into(WireMessage::RegSuccess {
                        id_hash: id_hash(p.as_ref(), &uuid),
                        server_signature: Vec::new(),
                    });
                    self.core.reply(reply, ServerOutcome::Registered { uuid });
                }
                InsertOutcome::DuplicateId => {
                    self.core.reject(ctx, "REGISTER", ErrorCode::DuplicateId, &self.request, 0)
                }
                InsertOutcome::DuplicateKey => {
                    self.core.reject(ctx, "REGISTER", ErrorCode::DuplicateKey, &self.request, 0)
                }
            },
            _ => return Err(MachineError::UnexpectedInput("store response of the wrong kind")),
        }
        Ok(())
    }
}

server_machine_impl!(RegisterServer);

/// Handles `CYCLE`.
#[derive(Debug)]
pub struct CycleServer {
    ctx: Arc<ServerContext>,
    core: ServerCore,
    now: Timestamp,
    request: Vec<u8>,
    msg: Option<WireMessage>,
    step: CycleStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CycleStep {
    Client,
    Rotate,
}

impl CycleServer {
    pub fn new(ctx: Arc<ServerContext>, now: Timestamp, request: Vec<u8>) -> Self {
        let mut core = ServerCore::new();
        let msg = match WireMessage::decode(&request, &ctx.provider.params()) {
            Ok(m @ WireMessage::Cycle { .. }) => {
                if let WireMessage::Cycle { uuid, .. } = &m {
                    core.query(StoreRequest::Client(*uuid));
                }
                Some(m)
            }
            _ => {
                core.reject(&ctx, "CYCLE", ErrorCode::BadRequest, &request, 0);
                None
            }
        };
        CycleServer {
            ctx,
            core,
            now,
            request,
            msg,
            step: CycleStep::Client,
        }
    }

    fn on_store(&mut self, resp: StoreResponse) -> Result<(), MachineError> {
        let Some(
            msg @ WireMessage::Cycle {
                uuid,
                new_public_key,
                new_key_signature,
                old_key_signature,
            },
        ) = &self.msg
        else {
            return Err(MachineError::Terminated);
        };
        let ctx = &self.ctx;
        let p = &ctx.provider;
        match (self.step, resp) {
            (CycleStep::Client, StoreResponse::Client(None)) => {
                self.core.reject(ctx, "CYCLE", ErrorCode::UnknownClient, &self.request, 0);
            }
            (CycleStep::Client, StoreResponse::Client(Some(client))) => {
                let body = msg.signing_bytes(&p.params()).expect("decoded");
                let inner_ok = p.verify(new_key_signature, &body, new_public_key);
                let outer_ok = p.verify(old_key_signature, new_key_signature, &client.public_key);
                if !(inner_ok && outer_ok) {
                    self.core.reject(ctx, "CYCLE", ErrorCode::BadSignature, &self.request, 0);
                } else {
                    self.step = CycleStep::Rotate;
                    self.core.query(StoreRequest::RotateKey {
                        uuid: *uuid,
                        expected_epoch: client.key_epoch,
                        new_key: new_public_key.clone(),
                        now: self.now,
                    });
                }
            }
            (CycleStep::Rotate, StoreResponse::Rotate(outcome)) => match outcome {
                RotateOutcome::Rotated { epoch } => {
                    let uuid = *uuid;
                    let reply = ctx.sign_into(WireMessage::CycleOk {
                        verification_hash: cycle_verification_hash(p.as_ref(), &uuid, new_public_key),
                        server_signature: Vec::new(),
                    });
                    self.core.reply(reply, ServerOutcome::Cycled { uuid, epoch });
                }
                RotateOutcome::DuplicateKey => {
                    self.core.reject(ctx, "CYCLE", ErrorCode::DuplicateKey, &self.request, 0)
                }
                RotateOutcome::UnknownClient => {
                    self.core.reject(ctx, "CYCLE", ErrorCode::UnknownClient, &self.request, 0)
                }
                // A concurrent cycle replaced the key the outer signature
                // was checked against.
                RotateOutcome::EpochMismatch => {
                    self.core.reject(ctx, "CYCLE", ErrorCode::BadSignature, &self.request, 0)
                }
            },
            _ => return Err(MachineError::UnexpectedInput("store response of the wrong kind")),
        }
        Ok(())
    }
}

server_machine_impl!(CycleServer);

/// Handles `STAMP`.
///
/// Order of checks: client known, signature, suite byte, key lifetime and
/// time ceiling, then the time compare-and-advance. Failures before the
/// compare-and-advance leave the counter untouched; from that point on the
/// request has consumed its protocol time whatever the outcome.
#[derive(Debug)]
pub struct StampServer {
    ctx: Arc<ServerContext>,
    core: ServerCore,
    now: Timestamp,
    request: Vec<u8>,
    msg: Option<WireMessage>,
    step: StampStep,
    epoch: u64,
    final_token: Option<Token>,
    ciphertext: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum StampStep {
    Client,
    Time,
    Perm,
    Insert,
}

impl StampServer {
    pub fn new(ctx: Arc<ServerContext>, now: Timestamp, request: Vec<u8>) -> Self {
        let mut core = ServerCore::new();
        let msg = match WireMessage::decode(&request, &ctx.provider.params()) {
            Ok(m @ WireMessage::Stamp { .. }) => {
                if let WireMessage::Stamp { preview, .. } = &m {
                    core.query(StoreRequest::Client(preview.uuid));
                }
                Some(m)
            }
            _ => {
                core.reject(&ctx, "STAMP", ErrorCode::BadRequest, &request, 0);
                None
            }
        };
        StampServer {
            ctx,
            core,
            now,
            request,
            msg,
            step: StampStep::Client,
            epoch: 0,
            final_token: None,
            ciphertext: Vec::new(),
        }
    }

    fn reject(&mut self, code: ErrorCode, time: u64) {
        let ctx = Arc::clone(&self.ctx);
        self.core.reject(&ctx, "STAMP", code, &self.request, time);
    }

    /// Encapsulates against the client's key and records the token hash.
    fn finalize(&mut self) {
        let Some(WireMessage::Stamp {
            preview,
            encapsulation_key,
            ..
        }) = &self.msg
        else {
            return;
        };
        let p = Arc::clone(&self.ctx.provider);
        let (ct, secret) = match p.kem_encapsulate(encapsulation_key) {
            Ok(v) => v,
            Err(_) => return self.reject(ErrorCode::BadRequest, 0),
        };
        let token = preview.with_payload(*secret.as_bytes());
        let record = TokenRecord {
            token_hash: p.hash(&token.encode()),
            uuid: token.uuid,
            perms: *token.perms.as_bytes(),
            issued_at: self.now,
            expires_at: self.now.plus(self.ctx.policy.token_ttl_secs),
        };
        self.final_token = Some(token);
        self.ciphertext = ct;
        self.step = StampStep::Insert;
        self.core.query(StoreRequest::InsertToken(record));
    }

    fn on_store(&mut self, resp: StoreResponse) -> Result<(), MachineError> {
        let Some(msg) = self.msg.clone() else {
            return Err(MachineError::Terminated);
        };
        let WireMessage::Stamp {
            preview,
            client_signature,
            ..
        } = &msg
        else {
            unreachable!("constructor only keeps STAMP messages");
        };
        let p = Arc::clone(&self.ctx.provider);
        let policy = self.ctx.policy;
        match (self.step, resp) {
            (StampStep::Client, StoreResponse::Client(None)) => self.reject(ErrorCode::UnknownClient, 0),
            (StampStep::Client, StoreResponse::Client(Some(client))) => {
                let body = msg.signing_bytes(&p.params()).expect("decoded");
                if !p.verify(client_signature, &body, &client.public_key) {
                    return Ok(self.reject(ErrorCode::BadSignature, 0));
                }
                if preview.protocol != p.suite().wire_byte() {
                    return Ok(self.reject(ErrorCode::BadRequest, 0));
                }
                let expires = client.key_installed_at.plus(policy.key_lifetime_secs);
                if self.now >= expires || client.expected_time >= policy.max_time {
                    return Ok(self.reject(ErrorCode::KeyExpired, 0));
                }
                self.epoch = client.key_epoch;
                self.step = StampStep::Time;
                self.core.query(StoreRequest::CompareAndAdvanceTime {
                    uuid: preview.uuid,
                    observed: preview.time,
                });
            }
            (StampStep::Time, StoreResponse::Time(t)) => match t {
                TimeAdvance::Mismatch(expected) => self.reject(ErrorCode::BadTime, expected),
                TimeAdvance::UnknownClient => self.reject(ErrorCode::UnknownClient, 0),
                TimeAdvance::Advanced(_) => match preview.perms.mode() {
                    PermMode::Code(code) => {
                        self.step = StampStep::Perm;
                        self.core.query(StoreRequest::LookupPermCode(code));
                    }
                    PermMode::Disabled | PermMode::Custom(_) => self.finalize(),
                },
            },
            (StampStep::Perm, StoreResponse::PermCode(scope)) => match scope {
                Some(_) => self.finalize(),
                None => self.reject(ErrorCode::BadRequest, 0),
            },
            (StampStep::Insert, StoreResponse::Token(outcome)) => match outcome {
                TokenInsert::Duplicate => self.reject(ErrorCode::DuplicateToken, 0),
                TokenInsert::Inserted => {
                    let preview = preview.clone();
                    let token = self.final_token.take().expect("set before insert");
                    let reply = self.ctx.sign_into(WireMessage::Stamped {
                        approval_hash: approval_hash(p.as_ref(), &token, &preview),
                        ciphertext: std::mem::take(&mut self.ciphertext),
                        server_signature: Vec::new(),
                    });
                    let outcome = ServerOutcome::Stamped {
                        uuid: token.uuid,
                        epoch: self.epoch,
                        time: token.time,
                        token_hash: p.hash(&token.encode()),
                    };
                    self.core.reply(reply, outcome);
                }
            },
            _ => return Err(MachineError::UnexpectedInput("store response of the wrong kind")),
        }
        Ok(())
    }
}

server_machine_impl!(StampServer);

/// Handles a bare-token check. Replies are unsigned status bytes.
#[derive(Debug)]
pub struct CheckServer {
    core: ServerCore,
    perms: Option<[u8; 16]>,
}

impl CheckServer {
    pub fn new(ctx: Arc<ServerContext>, now: Timestamp, request: Vec<u8>) -> Self {
        let mut core = ServerCore::new();
        if request.len() != TOKEN_LEN || Token::decode(&request).is_err() {
            let reply = CheckReply {
                status: CheckStatus::Malformed,
                perms: None,
            };
            core.reply(reply.encode(), ServerOutcome::Checked(CheckStatus::Malformed));
        } else {
            core.query(StoreRequest::LookupToken {
                hash: ctx.provider.hash(&request),
                now,
            });
        }
        CheckServer { core, perms: None }
    }

    fn answer(&mut self, status: CheckStatus) {
        let perms = if status == CheckStatus::Valid { self.perms } else { None };
        self.core.reply(CheckReply { status, perms }.encode(), ServerOutcome::Checked(status));
    }

    fn on_store(&mut self, resp: StoreResponse) -> Result<(), MachineError> {
        match resp {
            StoreResponse::Lookup(TokenLookup::Absent) => self.answer(CheckStatus::Unknown),
            StoreResponse::Lookup(TokenLookup::Expired(_)) => self.answer(CheckStatus::Expired),
            StoreResponse::Lookup(TokenLookup::Live(r)) if self.perms.is_none() => {
                self.perms = Some(r.perms);
                self.core.query(StoreRequest::Client(r.uuid));
            }
            StoreResponse::Client(Some(_)) => self.answer(CheckStatus::Valid),
            StoreResponse::Client(None) => self.answer(CheckStatus::UnknownClient),
            _ => return Err(MachineError::UnexpectedInput("store response of the wrong kind")),
        }
        Ok(())
    }
}

server_machine_impl!(CheckServer);

#[derive(Debug)]
enum Handler {
    Register(RegisterServer),
    Cycle(CycleServer),
    Stamp(StampServer),
    Check(CheckServer),
}

/// Accepts the first request of a connection and routes it to the matching
/// machine: 74 bytes is a check, otherwise the leading discriminator decides.
#[derive(Debug)]
pub struct ServerSession {
    ctx: Arc<ServerContext>,
    now: Timestamp,
    handler: Option<Handler>,
    early: Core<ServerTransmit, ServerOutcome>,
}

impl ServerSession {
    pub fn new(ctx: Arc<ServerContext>, now: Timestamp) -> Self {
        ServerSession {
            ctx,
            now,
            handler: None,
            early: Core::new(),
        }
    }
}

impl StateMachine for ServerSession {
    type Input = ServerInput;
    type Transmit = ServerTransmit;
    type Output = ServerOutcome;

    fn recv(&mut self, input: ServerInput) -> Result<(), MachineError> {
        self.early.guard()?;
        match (&mut self.handler, input) {
            (None, ServerInput::Request(bytes)) => {
                let ctx = Arc::clone(&self.ctx);
                let now = self.now;
                self.handler = Some(match (bytes.len(), bytes.first()) {
                    (TOKEN_LEN, _) => Handler::Check(CheckServer::new(ctx, now, bytes)),
                    (_, Some(&crate::wire::REGISTER)) => Handler::Register(RegisterServer::new(ctx, now, bytes)),
                    (_, Some(&crate::wire::CYCLE)) => Handler::Cycle(CycleServer::new(ctx, now, bytes)),
                    (_, Some(&crate::wire::STAMP)) => Handler::Stamp(StampServer::new(ctx, now, bytes)),
                    _ => {
                        self.early.reject(&ctx, "UNKNOWN", ErrorCode::BadRequest, &bytes, 0);
                        return Ok(());
                    }
                });
                Ok(())
            }
            (None, ServerInput::Store(_)) => Err(MachineError::UnexpectedInput("store response before request")),
            (Some(h), input) => match h {
                Handler::Register(m) => m.recv(input),
                Handler::Cycle(m) => m.recv(input),
                Handler::Stamp(m) => m.recv(input),
                Handler::Check(m) => m.recv(input),
            },
        }
    }

    fn poll_transmit(&mut self) -> Option<ServerTransmit> {
        match &mut self.handler {
            None => self.early.out.pop_front(),
            Some(Handler::Register(m)) => m.poll_transmit(),
            Some(Handler::Cycle(m)) => m.poll_transmit(),
            Some(Handler::Stamp(m)) => m.poll_transmit(),
            Some(Handler::Check(m)) => m.poll_transmit(),
        }
    }

    fn poll_result(&mut self) -> Poll<ServerOutcome> {
        match &mut self.handler {
            None => self.early.poll_result(),
            Some(Handler::Register(m)) => m.poll_result(),
            Some(Handler::Cycle(m)) => m.poll_result(),
            Some(Handler::Stamp(m)) => m.poll_result(),
            Some(Handler::Check(m)) => m.poll_result(),
        }
    }
}
