//! Admin and client sides: registration, key cycling, stamping, checking.

use std::task::Poll;

use uuid::Uuid;

use super::{
    approval_hash, cycle_verification_hash, id_hash, AdminIdentity, ClientIdentity, Core,
    FinalToken, MachineError, ProtocolError, StateMachine,
};
use crate::crypto::{KemKeyPair, SharedProvider, SigningKeyPair};
use crate::time::ProtocolTime;
use crate::token::{Permissions, Token, PAYLOAD_LEN, TOKEN_LEN};
use crate::wire::{CheckReply, ErrorCode, WireMessage};

/// Verifies a server-signed message body.
fn server_signed(
    provider: &SharedProvider,
    server_pk: &[u8],
    msg: &WireMessage,
    signature: &[u8],
) -> Result<(), ProtocolError> {
    let body = msg.signing_bytes(&provider.params())?;
    if provider.verify(signature, &body, server_pk) {
        Ok(())
    } else {
        Err(ProtocolError::BadServerSignature)
    }
}

/// Decodes a server reply. Returns `Ok(Err(..))` for an authentic error
/// reply bound to `request`, mapped to its error code.
fn decode_reply(
    provider: &SharedProvider,
    server_pk: &[u8],
    bytes: &[u8],
    request: &[u8],
) -> Result<Result<WireMessage, (ErrorCode, u64)>, ProtocolError> {
    let msg = WireMessage::decode(bytes, &provider.params())?;
    if let WireMessage::Error {
        code,
        request_hash,
        correct_time,
        server_signature,
    } = &msg
    {
        server_signed(provider, server_pk, &msg, server_signature)?;
        if *request_hash != provider.hash(request) {
            return Err(ProtocolError::ErrorBindingMismatch);
        }
        return Ok(Err((*code, *correct_time)));
    }
    Ok(Ok(msg))
}

/// Administrator registering a new client identity.
#[derive(Debug)]
pub struct RegisterAdmin {
    provider: SharedProvider,
    core: Core<Vec<u8>, Result<ClientIdentity, ProtocolError>>,
    request: Vec<u8>,
    identity: ClientIdentity,
}

impl RegisterAdmin {
    pub fn new(
        provider: SharedProvider,
        admin: &AdminIdentity,
        uuid: Uuid,
        keypair: SigningKeyPair,
    ) -> Result<Self, ProtocolError> {
        let params = provider.params();
        let mut msg = WireMessage::Register {
            uuid,
            client_public_key: keypair.public_key.clone(),
            admin_uuid: admin.uuid,
            client_signature: Vec::new(),
            admin_signature: Vec::new(),
        };
        let body = msg.signing_bytes(&params)?;
        let inner = provider.sign(&body, &keypair.private_key)?;
        let outer = provider.sign(&inner, &admin.signing_key.private_key)?;
        if let WireMessage::Register {
            client_signature,
            admin_signature,
            ..
        } = &mut msg
        {
            *client_signature = inner;
            *admin_signature = outer;
        }
        let request = msg.encode(&params)?;
        let mut core = Core::new();
        core.out.push_back(request.clone());
        Ok(RegisterAdmin {
            identity: ClientIdentity {
                uuid,
                signing_key: keypair,
                server_public_key: admin.server_public_key.clone(),
                time: ProtocolTime::default(),
                suite: provider.suite(),
            },
            provider,
            core,
            request,
        })
    }

    fn handle(&self, bytes: &[u8]) -> Result<ClientIdentity, ProtocolError> {
        let pk = &self.identity.server_public_key;
        let msg = match decode_reply(&self.provider, pk, bytes, &self.request)? {
            Err((code, _)) => return Err(ProtocolError::Rejected(code)),
            Ok(msg) => msg,
        };
        match &msg {
            WireMessage::RegSuccess {
                id_hash: h,
                server_signature,
            } => {
                server_signed(&self.provider, pk, &msg, server_signature)?;
                if *h != id_hash(self.provider.as_ref(), &self.identity.uuid) {
                    return Err(ProtocolError::IdHashMismatch);
                }
                Ok(self.identity.clone())
            }
            other => Err(ProtocolError::UnexpectedMessage(other.name())),
        }
    }
}

impl StateMachine for RegisterAdmin {
    type Input = Vec<u8>;
    type Transmit = Vec<u8>;
    type Output = Result<ClientIdentity, ProtocolError>;

    fn recv(&mut self, input: Vec<u8>) -> Result<(), MachineError> {
        self.core.guard()?;
        let r = self.handle(&input);
        self.core.finish(r);
        Ok(())
    }

    fn poll_transmit(&mut self) -> Option<Vec<u8>> {
        self.core.out.pop_front()
    }

    fn poll_result(&mut self) -> Poll<Self::Output> {
        self.core.poll_result()
    }
}

/// Client rotating its signing key.
#[derive(Debug)]
pub struct CycleClient {
    provider: SharedProvider,
    core: Core<Vec<u8>, Result<(), ProtocolError>>,
    request: Vec<u8>,
    identity: ClientIdentity,
    new_key: Option<SigningKeyPair>,
}

impl CycleClient {
    pub fn new(provider: SharedProvider, identity: ClientIdentity) -> Result<Self, ProtocolError> {
        let new_key = provider.generate_signing_key()?;
        Self::with_key(provider, identity, new_key)
    }

    /// Cycles to a caller-supplied key pair.
    pub fn with_key(
        provider: SharedProvider,
        identity: ClientIdentity,
        new_key: SigningKeyPair,
    ) -> Result<Self, ProtocolError> {
        let params = provider.params();
        let mut msg = WireMessage::Cycle {
            uuid: identity.uuid,
            new_public_key: new_key.public_key.clone(),
            new_key_signature: Vec::new(),
            old_key_signature: Vec::new(),
        };
        let inner = provider.sign(&msg.signing_bytes(&params)?, &new_key.private_key)?;
        let outer = provider.sign(&inner, &identity.signing_key.private_key)?;
        if let WireMessage::Cycle {
            new_key_signature,
            old_key_signature,
            ..
        } = &mut msg
        {
            *new_key_signature = inner;
            *old_key_signature = outer;
        }
        let request = msg.encode(&params)?;
        let mut core = Core::new();
        core.out.push_back(request.clone());
        Ok(CycleClient {
            provider,
            core,
            request,
            identity,
            new_key: Some(new_key),
        })
    }

    /// The identity as it stands: rotated after a successful cycle,
    /// unchanged otherwise.
    pub fn identity(&self) -> &ClientIdentity {
        &self.identity
    }

    pub fn into_identity(self) -> ClientIdentity {
        self.identity
    }

    fn handle(&mut self, bytes: &[u8]) -> Result<(), ProtocolError> {
        let pk = self.identity.server_public_key.clone();
        let msg = match decode_reply(&self.provider, &pk, bytes, &self.request)? {
            Err((code, _)) => return Err(ProtocolError::Rejected(code)),
            Ok(msg) => msg,
        };
        match &msg {
            WireMessage::CycleOk {
                verification_hash,
                server_signature,
            } => {
                server_signed(&self.provider, &pk, &msg, server_signature)?;
                let new_key = self.new_key.take().expect("cycle key present until completion");
                let expected = cycle_verification_hash(self.provider.as_ref(), &self.identity.uuid, &new_key.public_key);
                if *verification_hash != expected {
                    return Err(ProtocolError::VerificationHashMismatch);
                }
                self.identity.signing_key = new_key;
                self.identity.time.reset();
                Ok(())
            }
            other => Err(ProtocolError::UnexpectedMessage(other.name())),
        }
    }
}

impl StateMachine for CycleClient {
    type Input = Vec<u8>;
    type Transmit = Vec<u8>;
    type Output = Result<(), ProtocolError>;

    fn recv(&mut self, input: Vec<u8>) -> Result<(), MachineError> {
        self.core.guard()?;
        let r = self.handle(&input);
        self.core.finish(r);
        Ok(())
    }

    fn poll_transmit(&mut self) -> Option<Vec<u8>> {
        self.core.out.pop_front()
    }

    fn poll_result(&mut self) -> Poll<Self::Output> {
        self.core.poll_result()
    }
}

/// Client turning a preview token into a final token.
#[derive(Debug)]
pub struct StampClient {
    provider: SharedProvider,
    core: Core<Vec<u8>, Result<FinalToken, ProtocolError>>,
    request: Vec<u8>,
    identity: ClientIdentity,
    preview: Option<Token>,
    kem: Option<KemKeyPair>,
}

impl StampClient {
    pub fn new(
        provider: SharedProvider,
        mut identity: ClientIdentity,
        device: u8,
        perms: Permissions,
    ) -> Result<Self, ProtocolError> {
        let mut core = Core::new();
        if identity.time.exhausted() {
            core.finish(Err(ProtocolError::CycleRequired));
            return Ok(StampClient {
                provider,
                core,
                request: Vec::new(),
                identity,
                preview: None,
                kem: None,
            });
        }
        let mut payload = [0u8; PAYLOAD_LEN];
        provider.fill_random(&mut payload);
        let preview = Token {
            protocol: identity.suite.wire_byte(),
            device,
            uuid: identity.uuid,
            perms,
            time: identity.time.counter,
            payload,
        };
        let kem = provider.kem_generate()?;
        let params = provider.params();
        let mut msg = WireMessage::Stamp {
            preview: preview.clone(),
            encapsulation_key: kem.encapsulation_key.clone(),
            client_signature: Vec::new(),
        };
        let sig = provider.sign(&msg.signing_bytes(&params)?, &identity.signing_key.private_key)?;
        if let WireMessage::Stamp { client_signature, .. } = &mut msg {
            *client_signature = sig;
        }
        let request = msg.encode(&params)?;
        core.out.push_back(request.clone());
        identity.time.advance();
        Ok(StampClient {
            provider,
            core,
            request,
            identity,
            preview: Some(preview),
            kem: Some(kem),
        })
    }

    pub fn identity(&self) -> &ClientIdentity {
        &self.identity
    }

    pub fn into_identity(self) -> ClientIdentity {
        self.identity
    }

    fn handle(&mut self, bytes: &[u8]) -> Result<FinalToken, ProtocolError> {
        let pk = self.identity.server_public_key.clone();
        let msg = match decode_reply(&self.provider, &pk, bytes, &self.request)? {
            Err((ErrorCode::BadTime, correct_time)) => {
                self.identity.time.counter = correct_time;
                return Err(ProtocolError::BadTime { correct_time });
            }
            Err((ErrorCode::KeyExpired, _)) => return Err(ProtocolError::CycleRequired),
            Err((code, _)) => return Err(ProtocolError::Rejected(code)),
            Ok(msg) => msg,
        };
        match &msg {
            WireMessage::Stamped {
                approval_hash: ah,
                ciphertext,
                server_signature,
            } => {
                server_signed(&self.provider, &pk, &msg, server_signature)?;
                let kem = self.kem.take().expect("KEM pair present until completion");
                let preview = self.preview.take().expect("preview present until completion");
                let secret = self
                    .provider
                    .kem_decapsulate(ciphertext, &kem.decapsulation_key)
                    .map_err(|_| ProtocolError::ApprovalHashMismatch)?;
                let token = preview.with_payload(*secret.as_bytes());
                if approval_hash(self.provider.as_ref(), &token, &preview) != *ah {
                    return Err(ProtocolError::ApprovalHashMismatch);
                }
                Ok(FinalToken {
                    token,
                    preview,
                    approval_hash: ah.clone(),
                })
            }
            other => Err(ProtocolError::UnexpectedMessage(other.name())),
        }
    }
}

impl StateMachine for StampClient {
    type Input = Vec<u8>;
    type Transmit = Vec<u8>;
    type Output = Result<FinalToken, ProtocolError>;

    fn recv(&mut self, input: Vec<u8>) -> Result<(), MachineError> {
        self.core.guard()?;
        let r = self.handle(&input);
        self.core.finish(r);
        Ok(())
    }

    fn poll_transmit(&mut self) -> Option<Vec<u8>> {
        self.core.out.pop_front()
    }

    fn poll_result(&mut self) -> Poll<Self::Output> {
        self.core.poll_result()
    }
}

/// Presents a token to the server and reads the verdict.
#[derive(Debug)]
pub struct CheckClient {
    core: Core<Vec<u8>, Result<CheckReply, ProtocolError>>,
}

impl CheckClient {
    pub fn new(token: [u8; TOKEN_LEN]) -> Self {
        let mut core = Core::new();
        core.out.push_back(token.to_vec());
        CheckClient { core }
    }
}

impl StateMachine for CheckClient {
    type Input = Vec<u8>;
    type Transmit = Vec<u8>;
    type Output = Result<CheckReply, ProtocolError>;

    fn recv(&mut self, input: Vec<u8>) -> Result<(), MachineError> {
        self.core.guard()?;
        let r = CheckReply::decode(&input).map_err(ProtocolError::Decode);
        self.core.finish(r);
        Ok(())
    }

    fn poll_transmit(&mut self) -> Option<Vec<u8>> {
        self.core.out.pop_front()
    }

    fn poll_result(&mut self) -> Poll<Self::Output> {
        self.core.poll_result()
    }
}
