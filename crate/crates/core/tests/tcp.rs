use std::io::{Read, Write};
use std::net::TcpStream;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use pqtoken::crypto::{MlProvider, SharedProvider, SymbolicProvider};
use pqtoken::deployment::Deployment;
use pqtoken::frame::{read_frame, write_frame, DEFAULT_MAX_FRAME};
use pqtoken::protocol::{
    CheckClient, ClientIdentity, CycleClient, FinalToken, Policy, RegisterAdmin, StampClient,
};
use pqtoken::store::TokenLookup;
use pqtoken::suite::SuiteId;
use pqtoken::time::Clock;
use pqtoken::token::Permissions;
use pqtoken::transport::{drive, listen, run_client, ClientLink, ServerConfig, ServerHandle, TransportError};
use pqtoken::wire::{CheckStatus, ErrorCode, WireMessage};

const TIMEOUT: Option<Duration> = Some(Duration::from_secs(10));

fn serve(d: &Deployment, tweak: impl FnOnce(&mut ServerConfig)) -> ServerHandle {
    let mut config = ServerConfig::new(Arc::clone(&d.ctx), Arc::clone(&d.store), d.shared_clock());
    tweak(&mut config);
    listen("127.0.0.1:0", config).unwrap()
}

fn register(d: &Deployment, h: &ServerHandle) -> ClientIdentity {
    let key = d.provider.generate_signing_key().unwrap();
    let mut m = RegisterAdmin::new(Arc::clone(&d.provider), &d.admin, d.new_uuid(), key).unwrap();
    run_client(&mut m, h.local_addr(), TIMEOUT).unwrap().unwrap()
}

fn stamp(d: &Deployment, h: &ServerHandle, c: ClientIdentity) -> (ClientIdentity, FinalToken) {
    let mut m = StampClient::new(Arc::clone(&d.provider), c, 0, Permissions::DISABLED).unwrap();
    let t = run_client(&mut m, h.local_addr(), TIMEOUT).unwrap().unwrap();
    (m.into_identity(), t)
}

fn full_flow(provider: SharedProvider) {
    let d = Deployment::new(provider, Policy::default()).unwrap();
    let h = serve(&d, |_| {});
    let c = register(&d, &h);
    let mut m = CycleClient::new(Arc::clone(&d.provider), c).unwrap();
    run_client(&mut m, h.local_addr(), TIMEOUT).unwrap().unwrap();
    let (c, t) = stamp(&d, &h, m.into_identity());

    // The server kept only h(token); it must match the client's final token.
    let hash = d.provider.hash(&t.bytes());
    assert!(matches!(d.store.lookup_token(&hash, d.clock.now()).unwrap(), TokenLookup::Live(_)));
    let rec = d.store.client(&c.uuid).unwrap().unwrap();
    assert_eq!(rec.expected_time, c.time.counter);
    assert_eq!(rec.public_key, c.signing_key.public_key);

    let mut m = CheckClient::new(t.bytes());
    let reply = run_client(&mut m, h.local_addr(), TIMEOUT).unwrap().unwrap();
    assert_eq!(reply.status, CheckStatus::Valid);
    h.shutdown();
}

#[test]
fn loopback_full_flow_real_l1() {
    full_flow(Arc::new(MlProvider::new(SuiteId::L1)));
}

#[test]
fn loopback_full_flow_real_l3_l5() {
    full_flow(Arc::new(MlProvider::new(SuiteId::L3)));
    full_flow(Arc::new(MlProvider::new(SuiteId::L5)));
}

#[test]
fn three_concurrent_clients_have_independent_counters() {
    let d = Deployment::new(Arc::new(MlProvider::new(SuiteId::L1)), Policy::default()).unwrap();
    let h = serve(&d, |_| {});
    let clients: Vec<ClientIdentity> = (0..3).map(|_| register(&d, &h)).collect();
    let addr = h.local_addr();
    let handles: Vec<_> = clients
        .into_iter()
        .enumerate()
        .map(|(i, mut c)| {
            let provider = Arc::clone(&d.provider);
            thread::spawn(move || {
                for _ in 0..=i {
                    let mut m = StampClient::new(Arc::clone(&provider), c, 0, Permissions::DISABLED).unwrap();
                    run_client(&mut m, addr, TIMEOUT).unwrap().unwrap();
                    c = m.into_identity();
                }
                c
            })
        })
        .collect();
    for (i, j) in handles.into_iter().enumerate() {
        let c = j.join().unwrap();
        assert_eq!(c.time.counter, i as u64 + 1);
        assert_eq!(d.store.client(&c.uuid).unwrap().unwrap().expected_time, i as u64 + 1);
    }
    assert_eq!(d.store.tokens().unwrap().len(), 6);
    h.shutdown();
}

#[test]
fn idle_connection_is_closed() {
    let d = Deployment::new(Arc::new(SymbolicProvider::new(SuiteId::L1, 1)), Policy::default()).unwrap();
    let h = serve(&d, |c| c.idle_timeout = Some(Duration::from_secs(1)));
    let mut s = TcpStream::connect(h.local_addr()).unwrap();
    s.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
    let start = Instant::now();
    let mut buf = [0u8; 1];
    let n = s.read(&mut buf).unwrap_or(0);
    assert_eq!(n, 0);
    let waited = start.elapsed();
    assert!(waited >= Duration::from_millis(900) && waited < Duration::from_secs(4), "{waited:?}");
    h.shutdown();
}

#[test]
fn malformed_first_frame_gets_error_and_server_survives() {
    let d = Deployment::new(Arc::new(SymbolicProvider::new(SuiteId::L1, 2)), Policy::default()).unwrap();
    let h = serve(&d, |_| {});
    for junk in [vec![0x42u8; 5], vec![0x05; 100], vec![]] {
        let mut s = TcpStream::connect(h.local_addr()).unwrap();
        s.set_read_timeout(TIMEOUT).unwrap();
        write_frame(&mut s, &junk, DEFAULT_MAX_FRAME).unwrap();
        match read_frame(&mut s, DEFAULT_MAX_FRAME) {
            Ok(Some(reply)) => match WireMessage::decode(&reply, &SuiteId::L1.params()).unwrap() {
                WireMessage::Error { code, .. } => assert_eq!(code, ErrorCode::BadRequest),
                other => panic!("{other:?}"),
            },
            Ok(None) | Err(_) => {}
        }
    }
    let c = register(&d, &h);
    stamp(&d, &h, c);
    h.shutdown();
}

#[test]
fn oversized_frame_closes_connection() {
    let d = Deployment::new(Arc::new(SymbolicProvider::new(SuiteId::L1, 3)), Policy::default()).unwrap();
    let h = serve(&d, |c| c.max_frame = 1024);
    let mut s = TcpStream::connect(h.local_addr()).unwrap();
    s.set_read_timeout(TIMEOUT).unwrap();
    s.write_all(&(1_000_000u32).to_be_bytes()).unwrap();
    let mut buf = [0u8; 16];
    assert_eq!(s.read(&mut buf).unwrap_or(0), 0);
    let before = d.store.export().unwrap();
    // A real request larger than the limit is refused the same way.
    let key = d.provider.generate_signing_key().unwrap();
    let mut m = RegisterAdmin::new(Arc::clone(&d.provider), &d.admin, d.new_uuid(), key).unwrap();
    assert!(run_client(&mut m, h.local_addr(), TIMEOUT).is_err());
    assert_eq!(d.store.export().unwrap(), before);
    h.shutdown();
}

#[test]
fn truncated_request_mutates_nothing() {
    let d = Deployment::new(Arc::new(SymbolicProvider::new(SuiteId::L1, 4)), Policy::default()).unwrap();
    let h = serve(&d, |_| {});
    let c = register(&d, &h);
    let before = d.store.export().unwrap();
    let mut m = StampClient::new(Arc::clone(&d.provider), c, 0, Permissions::DISABLED).unwrap();
    let request = pqtoken::protocol::StateMachine::poll_transmit(&mut m).unwrap();
    let mut s = TcpStream::connect(h.local_addr()).unwrap();
    s.write_all(&(request.len() as u32).to_be_bytes()).unwrap();
    s.write_all(&request[..request.len() / 2]).unwrap();
    drop(s);
    thread::sleep(Duration::from_millis(200));
    assert_eq!(d.store.export().unwrap(), before);
    h.shutdown();
}

#[test]
fn peer_dropping_mid_handshake_is_a_transport_error() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let t = thread::spawn(move || {
        let (mut s, _) = listener.accept().unwrap();
        let _ = read_frame(&mut s, DEFAULT_MAX_FRAME);
    });
    let d = Deployment::new(Arc::new(SymbolicProvider::new(SuiteId::L1, 5)), Policy::default()).unwrap();
    let c = d.register_client().unwrap();
    let mut m = StampClient::new(Arc::clone(&d.provider), c, 0, Permissions::DISABLED).unwrap();
    let r = run_client(&mut m, addr, TIMEOUT);
    t.join().unwrap();
    assert!(matches!(r, Err(TransportError::Closed) | Err(TransportError::Frame(_)) | Err(TransportError::Io(_))), "{r:?}");
}

#[test]
fn keep_alive_serves_sequential_actions() {
    let d = Deployment::new(Arc::new(SymbolicProvider::new(SuiteId::L1, 6)), Policy::default()).unwrap();
    let h = serve(&d, |c| c.keep_alive = true);
    let c = register(&d, &h);
    let mut link = ClientLink::connect(h.local_addr(), TIMEOUT).unwrap();
    let mut m = StampClient::new(Arc::clone(&d.provider), c, 0, Permissions::DISABLED).unwrap();
    let t1 = drive(&mut m, &mut link).unwrap().unwrap();
    let mut m = StampClient::new(Arc::clone(&d.provider), m.into_identity(), 0, Permissions::DISABLED).unwrap();
    let t2 = drive(&mut m, &mut link).unwrap().unwrap();
    assert_eq!((t1.token.time, t2.token.time), (0, 1));
    let mut m = CheckClient::new(t1.bytes());
    assert_eq!(drive(&mut m, &mut link).unwrap().unwrap().status, CheckStatus::Valid);
    h.shutdown();
}

#[test]
fn connection_limit_refuses_extra_connections() {
    let d = Deployment::new(Arc::new(SymbolicProvider::new(SuiteId::L1, 7)), Policy::default()).unwrap();
    let h = serve(&d, |c| c.max_connections = 1);
    let _held = TcpStream::connect(h.local_addr()).unwrap();
    let deadline = Instant::now() + Duration::from_secs(5);
    while h.active_connections() < 1 {
        assert!(Instant::now() < deadline);
        thread::sleep(Duration::from_millis(5));
    }
    let mut s = TcpStream::connect(h.local_addr()).unwrap();
    s.set_read_timeout(TIMEOUT).unwrap();
    let mut buf = [0u8; 1];
    assert_eq!(s.read(&mut buf).unwrap_or(0), 0);
    drop(_held);
    h.shutdown();
}

/// The same deterministic sequence run in process and over TCP leaves
/// identical stores and identical tokens.
#[test]
fn transport_transparency() {
    let run = |tcp: bool| {
        let d = Deployment::new(Arc::new(SymbolicProvider::new(SuiteId::L1, 99)), Policy::default()).unwrap();
        let h = tcp.then(|| serve(&d, |_| {}));
        let exec = |m: &mut dyn FnMut(Option<std::net::SocketAddr>)| m(h.as_ref().map(|h| h.local_addr()));
        let mut tokens = Vec::new();
        let key = d.provider.generate_signing_key().unwrap();
        let mut reg = RegisterAdmin::new(Arc::clone(&d.provider), &d.admin, d.new_uuid(), key).unwrap();
        let mut c = None;
        exec(&mut |addr| {
            c = Some(match addr {
                Some(a) => run_client(&mut reg, a, TIMEOUT).unwrap().unwrap(),
                None => d.local().run(&mut reg).unwrap().unwrap(),
            })
        });
        let mut c = c.unwrap();
        for _ in 0..3 {
            let mut m = StampClient::new(Arc::clone(&d.provider), c, 0, Permissions::DISABLED).unwrap();
            let t = match h.as_ref() {
                Some(h) => run_client(&mut m, h.local_addr(), TIMEOUT).unwrap().unwrap(),
                None => d.local().run(&mut m).unwrap().unwrap(),
            };
            tokens.push(t.bytes());
            c = m.into_identity();
        }
        if let Some(h) = h {
            h.shutdown();
        }
        (d.store.export().unwrap(), tokens)
    };
    assert_eq!(run(false), run(true));
}
