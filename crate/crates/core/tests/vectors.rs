//! Golden wire vectors produced by the deterministic symbolic provider at L1.
//!
//! Set `PQTOKEN_WRITE_VECTORS=1` to regenerate the files under `vectors/`.

use std::fmt::Write as _;
use std::path::PathBuf;

use pqtoken::adversary::{run_scenario, Action, Scenario};
use pqtoken::suite::SuiteId;
use pqtoken::token::{Permissions, Token};
use pqtoken::wire::{self, CheckReply, WireMessage};
use uuid::Uuid;

const SEED: u64 = 20240601;

fn dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../vectors")
}

fn fixed_token() -> Token {
    let mut code = [0u8; 15];
    code.iter_mut().enumerate().for_each(|(i, b)| *b = 0xa0 + i as u8);
    Token {
        protocol: SuiteId::L1.wire_byte(),
        device: 0x07,
        uuid: Uuid::from_bytes(*b"\x00\x11\x22\x33\x44\x55\x46\x77\x88\x99\xaa\xbb\xcc\xdd\xee\xff"),
        perms: Permissions::code(code),
        time: 0x0102_0304_0506_0708,
        payload: std::array::from_fn(|i| i as u8),
    }
}

fn generate() -> Vec<(String, Vec<u8>)> {
    let mut s = Scenario::honest(SEED);
    s.actions.push(Action::Replay(4));
    let out = run_scenario(&s);
    let names = [
        "m1_register",
        "m2_regsuccess",
        "m3_cycle",
        "m4_cycleok",
        "m5_stamp",
        "m6_stamped",
        "check",
        "check_reply",
        "m5_stamp_replayed",
        "error_bad_time",
    ];
    assert_eq!(out.transcript.len(), names.len());
    let mut v: Vec<(String, Vec<u8>)> =
        names.iter().zip(&out.transcript).map(|(n, e)| (n.to_string(), e.sent.clone())).collect();
    v.push(("token_fixed".into(), fixed_token().encode().to_vec()));
    v
}

fn render(v: &[(String, Vec<u8>)]) -> String {
    let mut s = String::from("# symbolic provider, suite L1, honest session plus one replayed stamp\n");
    for (name, bytes) in v {
        writeln!(s, "{name} {}", hex::encode(bytes)).unwrap();
    }
    s
}

fn load() -> Vec<(String, Vec<u8>)> {
    let text = std::fs::read_to_string(dir().join("symbolic_l1.txt")).expect("vectors/symbolic_l1.txt");
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let (name, hex) = l.split_once(' ').expect("name and hex");
            (name.to_string(), hex::decode(hex.trim()).expect("hex"))
        })
        .collect()
}

#[test]
fn golden_vectors_match() {
    let fresh = generate();
    if std::env::var_os("PQTOKEN_WRITE_VECTORS").is_some() {
        std::fs::write(dir().join("symbolic_l1.txt"), render(&fresh)).unwrap();
    }
    let stored = load();
    assert_eq!(stored.len(), fresh.len());
    for ((n1, b1), (n2, b2)) in stored.iter().zip(&fresh) {
        assert_eq!(n1, n2);
        assert_eq!(hex::encode(b1), hex::encode(b2), "{n1}");
    }
}

#[test]
fn golden_vectors_decode_and_reencode() {
    let params = SuiteId::L1.params();
    let expected = [
        ("m1_register", Some(wire::REGISTER)),
        ("m2_regsuccess", Some(wire::REGSUCCESS)),
        ("m3_cycle", Some(wire::CYCLE)),
        ("m4_cycleok", Some(wire::CYCLEOK)),
        ("m5_stamp", Some(wire::STAMP)),
        ("m6_stamped", Some(wire::STAMPED)),
        ("check", None),
        ("m5_stamp_replayed", Some(wire::STAMP)),
        ("error_bad_time", Some(wire::ERROR)),
    ];
    let stored = load();
    for (name, disc) in expected {
        let bytes = &stored.iter().find(|(n, _)| n == name).unwrap().1;
        let m = WireMessage::decode(bytes, &params).unwrap();
        assert_eq!(m.discriminator(), disc, "{name}");
        assert_eq!(&m.encode(&params).unwrap(), bytes, "{name}");
        assert_eq!(WireMessage::encoded_len(disc, &params), Some(bytes.len()), "{name}");
    }
    let reply = &stored.iter().find(|(n, _)| n == "check_reply").unwrap().1;
    assert_eq!(&CheckReply::decode(reply).unwrap().encode(), reply);
}

#[test]
fn fixed_token_layout() {
    let stored = load();
    let bytes = &stored.iter().find(|(n, _)| n == "token_fixed").unwrap().1;
    assert_eq!(
        hex::encode(bytes),
        concat!(
            "01",
            "07",
            "00112233445546778899aabbccddeeff",
            "01a0a1a2a3a4a5a6a7a8a9aaabacadae",
            "0102030405060708",
            "000102030405060708090a0b0c0d0e0f101112131415161718191a1b1c1d1e1f"
        )
    );
    assert_eq!(Token::decode(bytes).unwrap(), fixed_token());
}
