use std::sync::Arc;
use std::task::Poll;

use super::*;
use crate::crypto::{MlProvider, SharedProvider, SymbolicProvider};
use crate::deployment::Deployment;
use crate::store::{ClientRecord, TokenLookup};
use crate::token::Permissions;
use crate::transport::serve_request;
use crate::time::Clock;
use crate::wire::{CheckStatus, WireMessage};

fn symbolic(seed: u64) -> SharedProvider {
    Arc::new(SymbolicProvider::new(SuiteId::L1, seed))
}

fn deployment(policy: Policy) -> Deployment {
    Deployment::new(symbolic(11), policy).unwrap()
}

fn serve(d: &Deployment, bytes: Vec<u8>) -> (Option<Vec<u8>>, ServerOutcome) {
    serve_request(&d.ctx, &d.store, &d.shared_clock(), bytes)
}

fn decode_error(d: &Deployment, reply: &[u8]) -> (ErrorCode, u64) {
    match WireMessage::decode(reply, &d.provider.params()).unwrap() {
        WireMessage::Error { code, correct_time, .. } => (code, correct_time),
        other => panic!("expected error reply, got {}", other.name()),
    }
}

fn check(d: &Deployment, token: [u8; 74]) -> CheckStatus {
    let mut m = CheckClient::new(token);
    d.local().run(&mut m).unwrap().unwrap().status
}

fn first_transmit<M: StateMachine<Transmit = Vec<u8>>>(m: &mut M) -> Vec<u8> {
    m.poll_transmit().expect("machine emits its request on construction")
}

#[test]
fn honest_register_cycle_stamp_check() {
    let d = deployment(Policy::default());
    let client = d.register_client().unwrap();
    assert_eq!(client.time.counter, 0);
    let record = d.store.client(&client.uuid).unwrap().unwrap();
    assert_eq!(record.expected_time, 0);
    assert_eq!(record.public_key, client.signing_key.public_key);

    let old_key = client.signing_key.clone();
    let (client, r) = d.cycle(client).unwrap();
    r.unwrap();
    assert_ne!(client.signing_key, old_key);
    assert_eq!(client.time.counter, 0);
    assert_eq!(d.store.client(&client.uuid).unwrap().unwrap().public_key, client.signing_key.public_key);

    let (client, r) = d.stamp(client, Permissions::DISABLED).unwrap();
    let token = r.unwrap();
    assert_eq!(client.time.counter, 1);
    assert_eq!(d.store.client(&client.uuid).unwrap().unwrap().expected_time, 1);
    assert_eq!(token.token.payload.len(), 32);
    assert_ne!(token.token.payload, token.preview.payload);
    assert_eq!(check(&d, token.bytes()), CheckStatus::Valid);
}

#[test]
fn honest_flow_with_real_provider() {
    let provider: SharedProvider = Arc::new(MlProvider::new(SuiteId::L1));
    let d = Deployment::new(provider, Policy::default()).unwrap();
    let client = d.register_client().unwrap();
    let (client, r) = d.cycle(client).unwrap();
    r.unwrap();
    let (client, r) = d.stamp(client, Permissions::DISABLED).unwrap();
    let token = r.unwrap();
    assert_eq!(client.time.counter, 1);
    assert_eq!(check(&d, token.bytes()), CheckStatus::Valid);
}

#[test]
fn client_and_server_final_tokens_agree() {
    let d = deployment(Policy::default());
    let client = d.register_client().unwrap();
    let mut local = d.local();
    let mut m = StampClient::new(Arc::clone(&d.provider), client, 7, Permissions::DISABLED).unwrap();
    let token = local.run(&mut m).unwrap().unwrap();
    let ServerOutcome::Stamped { token_hash, time, .. } = local.outcomes()[0].clone() else {
        panic!("{:?}", local.outcomes());
    };
    assert_eq!(time, 0);
    assert_eq!(token_hash, d.provider.hash(&token.bytes()));
    assert_eq!(token.token.device, 7);
    assert!(matches!(
        d.store.lookup_token(&token_hash, d.clock.now()).unwrap(),
        TokenLookup::Live(_)
    ));
}

#[test]
fn register_replay_is_duplicate_id() {
    let d = deployment(Policy::default());
    let key = d.provider.generate_signing_key().unwrap();
    let mut m = RegisterAdmin::new(Arc::clone(&d.provider), &d.admin, d.new_uuid(), key).unwrap();
    let m1 = first_transmit(&mut m);
    let (reply, outcome) = serve(&d, m1.clone());
    assert!(matches!(outcome, ServerOutcome::Registered { .. }));
    m.recv(reply.unwrap()).unwrap();
    assert!(matches!(m.poll_result(), Poll::Ready(Ok(_))));

    let (reply, _) = serve(&d, m1);
    assert_eq!(decode_error(&d, &reply.unwrap()).0, ErrorCode::DuplicateId);
}

#[test]
fn register_with_swapped_admin_signature_is_bad_signature() {
    let d = deployment(Policy::default());
    let p = d.provider.params();
    let key = d.provider.generate_signing_key().unwrap();
    let mut m = RegisterAdmin::new(Arc::clone(&d.provider), &d.admin, d.new_uuid(), key).unwrap();
    let mut msg = WireMessage::decode(&first_transmit(&mut m), &p).unwrap();
    if let WireMessage::Register {
        client_signature,
        admin_signature,
        ..
    } = &mut msg
    {
        std::mem::swap(client_signature, admin_signature);
    }
    let (reply, _) = serve(&d, msg.encode(&p).unwrap());
    assert_eq!(decode_error(&d, &reply.unwrap()).0, ErrorCode::BadSignature);
}

#[test]
fn register_by_unknown_admin_is_rejected() {
    let d = deployment(Policy::default());
    let rogue = AdminIdentity {
        uuid: d.new_uuid(),
        signing_key: d.provider.generate_signing_key().unwrap(),
        server_public_key: d.ctx.public_key().to_vec(),
        suite: SuiteId::L1,
    };
    let key = d.provider.generate_signing_key().unwrap();
    let mut m = RegisterAdmin::new(Arc::clone(&d.provider), &rogue, d.new_uuid(), key).unwrap();
    let r = d.local().run(&mut m).unwrap();
    assert_eq!(r.unwrap_err(), ProtocolError::Rejected(ErrorCode::UnknownClient));
}

#[test]
fn register_duplicate_key_is_rejected() {
    let d = deployment(Policy::default());
    let client = d.register_client().unwrap();
    let mut m = RegisterAdmin::new(Arc::clone(&d.provider), &d.admin, d.new_uuid(), client.signing_key).unwrap();
    let r = d.local().run(&mut m).unwrap();
    assert_eq!(r.unwrap_err(), ProtocolError::Rejected(ErrorCode::DuplicateKey));
}

#[test]
fn regsuccess_for_other_id_is_rejected() {
    let d = deployment(Policy::default());
    let key = d.provider.generate_signing_key().unwrap();
    let mut m = RegisterAdmin::new(Arc::clone(&d.provider), &d.admin, d.new_uuid(), key).unwrap();
    let _ = first_transmit(&mut m);
    let forged = d.ctx.sign_into(WireMessage::RegSuccess {
        id_hash: id_hash(d.provider.as_ref(), &d.new_uuid()),
        server_signature: Vec::new(),
    });
    m.recv(forged).unwrap();
    assert_eq!(m.poll_result(), Poll::Ready(Err(ProtocolError::IdHashMismatch)));
}

#[test]
fn regsuccess_signed_by_other_key_is_rejected() {
    let d = deployment(Policy::default());
    let other = Deployment::new(Arc::clone(&d.provider), Policy::default()).unwrap();
    let uuid = d.new_uuid();
    let key = d.provider.generate_signing_key().unwrap();
    let mut m = RegisterAdmin::new(Arc::clone(&d.provider), &d.admin, uuid, key).unwrap();
    let _ = first_transmit(&mut m);
    let forged = other.ctx.sign_into(WireMessage::RegSuccess {
        id_hash: id_hash(d.provider.as_ref(), &uuid),
        server_signature: Vec::new(),
    });
    m.recv(forged).unwrap();
    assert_eq!(m.poll_result(), Poll::Ready(Err(ProtocolError::BadServerSignature)));
}

#[test]
fn replayed_cycle_after_success_is_bad_signature() {
    let d = deployment(Policy::default());
    let client = d.register_client().unwrap();
    let mut m = CycleClient::new(Arc::clone(&d.provider), client).unwrap();
    let m3 = first_transmit(&mut m);
    let (reply, outcome) = serve(&d, m3.clone());
    assert!(matches!(outcome, ServerOutcome::Cycled { epoch: 1, .. }));
    m.recv(reply.unwrap()).unwrap();
    assert_eq!(m.poll_result(), Poll::Ready(Ok(())));
    let before = d.store.client(&m.identity().uuid).unwrap();

    let (reply, _) = serve(&d, m3);
    assert_eq!(decode_error(&d, &reply.unwrap()).0, ErrorCode::BadSignature);
    assert_eq!(d.store.client(&m.identity().uuid).unwrap(), before);
}

#[test]
fn cycle_with_foreign_inner_signature_is_bad_signature() {
    let d = deployment(Policy::default());
    let p = d.provider.params();
    let client = d.register_client().unwrap();
    let impostor = d.provider.generate_signing_key().unwrap();
    let mut m = CycleClient::new(Arc::clone(&d.provider), client.clone()).unwrap();
    let mut msg = WireMessage::decode(&first_transmit(&mut m), &p).unwrap();
    let body = msg.signing_bytes(&p).unwrap();
    let inner = d.provider.sign(&body, &impostor.private_key).unwrap();
    let outer = d.provider.sign(&inner, &client.signing_key.private_key).unwrap();
    if let WireMessage::Cycle {
        new_key_signature,
        old_key_signature,
        ..
    } = &mut msg
    {
        *new_key_signature = inner;
        *old_key_signature = outer;
    }
    let (reply, _) = serve(&d, msg.encode(&p).unwrap());
    assert_eq!(decode_error(&d, &reply.unwrap()).0, ErrorCode::BadSignature);
}

#[test]
fn cycle_to_previously_seen_key_is_duplicate_key() {
    let d = deployment(Policy::default());
    let a = d.register_client().unwrap();
    let b = d.register_client().unwrap();
    let mut m = CycleClient::with_key(Arc::clone(&d.provider), a, b.signing_key.clone()).unwrap();
    let r = d.local().run(&mut m).unwrap();
    assert_eq!(r.unwrap_err(), ProtocolError::Rejected(ErrorCode::DuplicateKey));
    assert_eq!(m.into_identity().time.counter, 0);
}

#[test]
fn cycleok_over_different_key_is_rejected() {
    let d = deployment(Policy::default());
    let client = d.register_client().unwrap();
    let uuid = client.uuid;
    let mut m = CycleClient::new(Arc::clone(&d.provider), client.clone()).unwrap();
    let _ = first_transmit(&mut m);
    let forged = d.ctx.sign_into(WireMessage::CycleOk {
        verification_hash: cycle_verification_hash(d.provider.as_ref(), &uuid, &client.signing_key.public_key),
        server_signature: Vec::new(),
    });
    m.recv(forged).unwrap();
    assert_eq!(m.poll_result(), Poll::Ready(Err(ProtocolError::VerificationHashMismatch)));
    assert_eq!(m.into_identity().signing_key, client.signing_key);
}

#[test]
fn stamp_replay_is_bad_time_and_stores_one_token() {
    let d = deployment(Policy::default());
    let client = d.register_client().unwrap();
    let mut m = StampClient::new(Arc::clone(&d.provider), client, 0, Permissions::DISABLED).unwrap();
    let m5 = first_transmit(&mut m);
    let (reply, _) = serve(&d, m5.clone());
    m.recv(reply.unwrap()).unwrap();
    assert!(matches!(m.poll_result(), Poll::Ready(Ok(_))));
    let snapshot = d.store.export().unwrap();

    let (reply, outcome) = serve(&d, m5);
    assert_eq!(decode_error(&d, &reply.unwrap()), (ErrorCode::BadTime, 1));
    assert!(matches!(outcome, ServerOutcome::Rejected { code: ErrorCode::BadTime, .. }));
    assert_eq!(d.store.export().unwrap(), snapshot);
}

#[test]
fn desynchronized_client_adopts_server_time() {
    let d = deployment(Policy::default());
    let mut client = d.register_client().unwrap();
    for _ in 0..7 {
        let (c, r) = d.stamp(client, Permissions::DISABLED).unwrap();
        r.unwrap();
        client = c;
    }
    client.time.counter = 5;
    let (client, r) = d.stamp(client, Permissions::DISABLED).unwrap();
    assert_eq!(r.unwrap_err(), ProtocolError::BadTime { correct_time: 7 });
    assert!(ProtocolError::BadTime { correct_time: 7 }.is_retryable());
    assert_eq!(client.time.counter, 7);
    let (client, r) = d.stamp(client, Permissions::DISABLED).unwrap();
    assert_eq!(r.unwrap().token.time, 7);
    assert_eq!(client.time.counter, 8);
}

#[test]
fn expired_key_requires_cycle() {
    let d = deployment(Policy {
        key_lifetime_secs: 100,
        ..Policy::default()
    });
    let client = d.register_client().unwrap();
    d.clock.advance(100);
    let (client, r) = d.stamp(client, Permissions::DISABLED).unwrap();
    assert_eq!(r.unwrap_err(), ProtocolError::CycleRequired);
    assert_eq!(d.store.client(&client.uuid).unwrap().unwrap().expected_time, 0);
    let (client, r) = d.cycle(client).unwrap();
    r.unwrap();
    // The failed attempt advanced the local counter; the cycle reset it.
    assert_eq!(client.time.counter, 0);
    let (_, r) = d.stamp(client, Permissions::DISABLED).unwrap();
    r.unwrap();
}

#[test]
fn server_time_ceiling_forces_cycle() {
    let d = deployment(Policy {
        max_time: 3,
        ..Policy::default()
    });
    let mut client = d.register_client().unwrap();
    for t in 0..3 {
        let (c, r) = d.stamp(client, Permissions::DISABLED).unwrap();
        assert_eq!(r.unwrap().token.time, t);
        client = c;
    }
    let (client, r) = d.stamp(client, Permissions::DISABLED).unwrap();
    assert_eq!(r.unwrap_err(), ProtocolError::CycleRequired);
    let (client, r) = d.cycle(client).unwrap();
    r.unwrap();
    let (_, r) = d.stamp(client, Permissions::DISABLED).unwrap();
    assert_eq!(r.unwrap().token.time, 0);
}

#[test]
fn client_time_ceiling_refuses_locally() {
    let d = deployment(Policy::default());
    let mut client = d.register_client().unwrap();
    client.time.max = 0;
    let mut m = StampClient::new(Arc::clone(&d.provider), client, 0, Permissions::DISABLED).unwrap();
    assert!(m.poll_transmit().is_none());
    assert_eq!(m.poll_result(), Poll::Ready(Err(ProtocolError::CycleRequired)));
}

#[test]
fn tampered_ciphertext_fails_approval() {
    let d = deployment(Policy::default());
    let p = d.provider.params();
    let client = d.register_client().unwrap();
    let mut m = StampClient::new(Arc::clone(&d.provider), client, 0, Permissions::DISABLED).unwrap();
    let (reply, _) = serve(&d, first_transmit(&mut m));
    let mut msg = WireMessage::decode(&reply.unwrap(), &p).unwrap();
    // Re-sign so that only the KEM path can catch the change.
    if let WireMessage::Stamped { ciphertext, .. } = &mut msg {
        ciphertext[40] ^= 1;
    }
    let resigned = d.ctx.sign_into(msg);
    m.recv(resigned).unwrap();
    assert_eq!(m.poll_result(), Poll::Ready(Err(ProtocolError::ApprovalHashMismatch)));
}

#[test]
fn stamp_by_unknown_client() {
    let d = deployment(Policy::default());
    let mut ghost = d.register_client().unwrap();
    ghost.uuid = d.new_uuid();
    let (_, r) = d.stamp(ghost, Permissions::DISABLED).unwrap();
    assert_eq!(r.unwrap_err(), ProtocolError::Rejected(ErrorCode::UnknownClient));
}

#[test]
fn stamp_with_bad_signature_does_not_advance_time() {
    let d = deployment(Policy::default());
    let mut client = d.register_client().unwrap();
    let real = client.signing_key.clone();
    client.signing_key = d.provider.generate_signing_key().unwrap();
    let (mut client, r) = d.stamp(client, Permissions::DISABLED).unwrap();
    assert_eq!(r.unwrap_err(), ProtocolError::Rejected(ErrorCode::BadSignature));
    assert_eq!(d.store.client(&client.uuid).unwrap().unwrap().expected_time, 0);
    client.signing_key = real;
    client.time.counter = 0;
    let (_, r) = d.stamp(client, Permissions::DISABLED).unwrap();
    r.unwrap();
}

#[test]
fn permission_codes() {
    let d = deployment(Policy::default());
    d.store.insert_perm_code([7; 15], "read:vitals".into()).unwrap();
    let client = d.register_client().unwrap();
    let (client, r) = d.stamp(client, Permissions::code([7; 15])).unwrap();
    let token = r.unwrap();
    let mut m = CheckClient::new(token.bytes());
    let reply = d.local().run(&mut m).unwrap().unwrap();
    assert_eq!(reply.perms, Some(*Permissions::code([7; 15]).as_bytes()));

    let (client, r) = d.stamp(client, Permissions::code([8; 15])).unwrap();
    assert_eq!(r.unwrap_err(), ProtocolError::Rejected(ErrorCode::BadRequest));
    // The signed request consumed its protocol time.
    assert_eq!(d.store.client(&client.uuid).unwrap().unwrap().expected_time, 2);
    assert_eq!(client.time.counter, 2);
}

#[test]
fn check_outcomes() {
    let d = deployment(Policy {
        token_ttl_secs: 1,
        ..Policy::default()
    });
    let client = d.register_client().unwrap();
    let (_, r) = d.stamp(client, Permissions::DISABLED).unwrap();
    let token = r.unwrap();
    assert_eq!(check(&d, token.bytes()), CheckStatus::Valid);
    assert_eq!(check(&d, token.preview.encode()), CheckStatus::Unknown);
    let mut random = [0u8; 74];
    d.provider.fill_random(&mut random);
    random[18] = 0;
    assert_eq!(check(&d, random), CheckStatus::Unknown);
    d.clock.advance(1);
    assert_eq!(check(&d, token.bytes()), CheckStatus::Expired);

    let mut reserved = token.bytes();
    reserved[18] = 4;
    assert_eq!(check(&d, reserved), CheckStatus::Malformed);
}

#[test]
fn tokens_survive_a_cycle_until_ttl() {
    let d = deployment(Policy::default());
    let client = d.register_client().unwrap();
    let (client, r) = d.stamp(client, Permissions::DISABLED).unwrap();
    let token = r.unwrap();
    let (_, r) = d.cycle(client).unwrap();
    r.unwrap();
    assert_eq!(check(&d, token.bytes()), CheckStatus::Valid);
}

#[test]
fn store_holds_hashes_not_tokens() {
    let d = deployment(Policy::default());
    let mut client = d.register_client().unwrap();
    let mut tokens = Vec::new();
    for _ in 0..5 {
        let (c, r) = d.stamp(client, Permissions::DISABLED).unwrap();
        tokens.push(r.unwrap());
        client = c;
    }
    let dump = d.store.export().unwrap();
    for t in &tokens {
        let contains = |needle: &[u8]| dump.windows(needle.len()).any(|w| w == needle);
        assert!(!contains(&t.token.payload));
        assert!(!contains(&t.bytes()));
        assert!(contains(d.provider.hash(&t.bytes()).as_bytes()));
    }
}

#[test]
fn machines_reject_input_after_termination() {
    let d = deployment(Policy::default());
    let client = d.register_client().unwrap();
    let mut m = StampClient::new(Arc::clone(&d.provider), client, 0, Permissions::DISABLED).unwrap();
    assert_eq!(m.poll_result(), Poll::Pending);
    let (reply, _) = serve(&d, first_transmit(&mut m));
    let reply = reply.unwrap();
    assert_eq!(m.poll_result(), Poll::Pending);
    m.recv(reply.clone()).unwrap();
    assert!(matches!(m.poll_result(), Poll::Ready(Ok(_))));
    assert!(matches!(m.poll_result(), Poll::Ready(Ok(_))));
    assert_eq!(m.recv(reply), Err(MachineError::Terminated));
}

#[test]
fn server_result_waits_for_reply_to_drain() {
    let d = deployment(Policy::default());
    let mut s = ServerSession::new(Arc::clone(&d.ctx), d.clock.now());
    assert_eq!(s.poll_result(), Poll::Pending);
    s.recv(ServerInput::Request(vec![0x42; 10])).unwrap();
    assert_eq!(s.poll_result(), Poll::Pending);
    assert!(matches!(s.poll_transmit(), Some(ServerTransmit::Reply(_))));
    assert!(matches!(s.poll_result(), Poll::Ready(ServerOutcome::Rejected { code: ErrorCode::BadRequest, .. })));
    assert_eq!(s.recv(ServerInput::Request(vec![])), Err(MachineError::Terminated));
}

#[test]
fn server_store_input_before_request_is_an_error() {
    let d = deployment(Policy::default());
    let mut s = ServerSession::new(Arc::clone(&d.ctx), d.clock.now());
    let err = s.recv(ServerInput::Store(crate::store::StoreResponse::Client(None)));
    assert!(matches!(err, Err(MachineError::UnexpectedInput(_))));
}

#[test]
fn error_reply_for_another_request_is_not_accepted() {
    let d = deployment(Policy::default());
    let client = d.register_client().unwrap();
    let mut m = StampClient::new(Arc::clone(&d.provider), client.clone(), 0, Permissions::DISABLED).unwrap();
    let _ = first_transmit(&mut m);
    let stale = d.ctx.sign_into(WireMessage::Error {
        code: ErrorCode::BadTime,
        request_hash: d.provider.hash(b"some earlier request"),
        correct_time: 99,
        server_signature: Vec::new(),
    });
    m.recv(stale).unwrap();
    assert_eq!(m.poll_result(), Poll::Ready(Err(ProtocolError::ErrorBindingMismatch)));
    assert_eq!(m.into_identity().time.counter, 1);
}

#[test]
fn wrong_suite_token_is_bad_request() {
    let d = deployment(Policy::default());
    let mut client = d.register_client().unwrap();
    client.suite = SuiteId::L3;
    let (_, r) = d.stamp(client, Permissions::DISABLED).unwrap();
    assert_eq!(r.unwrap_err(), ProtocolError::Rejected(ErrorCode::BadRequest));
}

#[test]
fn client_record_starts_at_zero() {
    let r = ClientRecord::new(uuid::Uuid::nil(), vec![1], crate::time::Timestamp(5));
    assert_eq!((r.expected_time, r.key_epoch), (0, 0));
}
