//! Plain-text attack scenarios.
//!
//! One directive per line; `#` starts a comment. Steps are numbered from 0 in
//! the order they appear, messages from 0 in the order they are sent.
//!
//! ```text
//! seed 7
//! suite L1
//! max_time 3
//! key_lifetime 7776000
//! token_ttl 3600
//!
//! register alice
//! cycle alice
//! stamp alice
//! check alice
//! perm 0102..0f reader      # provision a 15-byte permission code
//! stamp alice code 0102..0f
//! replay 4                  # resend message 4 to the server
//! inject 0301ab...
//! reveal client alice       # or: server | admin | token alice | store
//! advance 3600
//!
//! tamper 4 flip 10          # xor 0xff into byte 10 of message 4
//! tamper 4 set 10 00ff
//! tamper 5 drop
//! tamper 5 replay 1         # substitute message 1
//! tamper 4 impersonate      # answer in the server's place
//!
//! expect step 2 ok
//! expect step 6 reject BAD_TIME
//! expect step 6 fail
//! expect tokens 1
//! expect secrecy ok         # or: violated
//! ```

use std::collections::BTreeMap;
use std::str::FromStr;

use thiserror::Error;

use crate::protocol::Policy;
use crate::suite::SuiteId;
use crate::token::PERM_CODE_LEN;
use crate::wire::ErrorCode;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ScenarioError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reveal {
    Client(String),
    Server,
    Admin,
    Token(String),
    Store,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Register(String),
    Cycle(String),
    Stamp { client: String, code: Option<[u8; PERM_CODE_LEN]> },
    Check(String),
    Perm { code: [u8; PERM_CODE_LEN], scope: String },
    Replay(usize),
    Inject(Vec<u8>),
    Reveal(Reveal),
    Advance(u64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tamper {
    Drop,
    Flip(usize),
    Set(usize, Vec<u8>),
    Replay(usize),
    Impersonate,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepExpectation {
    Ok,
    Fail,
    Reject(ErrorCode),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expect {
    Step(usize, StepExpectation),
    Tokens(usize),
    Secrecy(bool),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub seed: u64,
    pub suite: SuiteId,
    pub policy: Policy,
    pub actions: Vec<Action>,
    pub tampers: BTreeMap<usize, Tamper>,
    pub expects: Vec<Expect>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            seed: 0,
            suite: SuiteId::L1,
            policy: Policy::default(),
            actions: Vec::new(),
            tampers: BTreeMap::new(),
            expects: Vec::new(),
        }
    }
}

impl Scenario {
    /// register, cycle, stamp and check for one client named `c`.
    pub fn honest(seed: u64) -> Self {
        Scenario {
            seed,
            actions: vec![
                Action::Register("c".into()),
                Action::Cycle("c".into()),
                Action::Stamp { client: "c".into(), code: None },
                Action::Check("c".into()),
            ],
            ..Scenario::default()
        }
    }

    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let mut s = Scenario::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| ScenarioError { line: n + 1, message };
            let words: Vec<&str> = line.split_whitespace().collect();
            parse_line(&mut s, &words).map_err(err)?;
        }
        Ok(s)
    }
}

impl FromStr for Scenario {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::parse(s)
    }
}

fn num<T: FromStr>(w: Option<&&str>, what: &str) -> Result<T, String> {
    let w = w.ok_or_else(|| format!("missing {what}"))?;
    w.parse().map_err(|_| format!("invalid {what} `{w}`"))
}

fn name(w: Option<&&str>) -> Result<String, String> {
    w.map(|s| s.to_string()).ok_or_else(|| "missing client name".to_string())
}

fn hex_arg(w: Option<&&str>) -> Result<Vec<u8>, String> {
    let w = w.ok_or("missing hex bytes")?;
    hex::decode(w).map_err(|e| format!("bad hex: {e}"))
}

fn code_arg(w: Option<&&str>) -> Result<[u8; PERM_CODE_LEN], String> {
    hex_arg(w)?
        .try_into()
        .map_err(|_| format!("permission code must be {PERM_CODE_LEN} bytes"))
}

fn parse_line(s: &mut Scenario, w: &[&str]) -> Result<(), String> {
    let arity = |n: usize| {
        if w.len() == n {
            Ok(())
        } else {
            Err(format!("`{}` takes {} argument(s)", w[0], n - 1))
        }
    };
    match w[0] {
        "seed" => {
            arity(2)?;
            s.seed = num(w.get(1), "seed")?;
        }
        "suite" => {
            arity(2)?;
            s.suite = w[1].parse().map_err(|e| format!("{e}"))?;
        }
        "max_time" => {
            arity(2)?;
            s.policy.max_time = num(w.get(1), "max_time")?;
        }
        "key_lifetime" => {
            arity(2)?;
            s.policy.key_lifetime_secs = num(w.get(1), "key_lifetime")?;
        }
        "token_ttl" => {
            arity(2)?;
            s.policy.token_ttl_secs = num(w.get(1), "token_ttl")?;
        }
        "register" => {
            arity(2)?;
            s.actions.push(Action::Register(name(w.get(1))?));
        }
        "cycle" => {
            arity(2)?;
            s.actions.push(Action::Cycle(name(w.get(1))?));
        }
        "stamp" => {
            let code = match w.len() {
                2 => None,
                4 if w[2] == "code" => Some(code_arg(w.get(3))?),
                _ => return Err("usage: stamp NAME [code HEX]".into()),
            };
            s.actions.push(Action::Stamp { client: name(w.get(1))?, code });
        }
        "check" => {
            arity(2)?;
            s.actions.push(Action::Check(name(w.get(1))?));
        }
        "perm" => {
            arity(3)?;
            s.actions.push(Action::Perm { code: code_arg(w.get(1))?, scope: w[2].to_string() });
        }
        "replay" => {
            arity(2)?;
            s.actions.push(Action::Replay(num(w.get(1), "message index")?));
        }
        "inject" => {
            arity(2)?;
            s.actions.push(Action::Inject(hex_arg(w.get(1))?));
        }
        "advance" => {
            arity(2)?;
            s.actions.push(Action::Advance(num(w.get(1), "seconds")?));
        }
        "reveal" => {
            let r = match (w.get(1).copied(), w.len()) {
                (Some("client"), 3) => Reveal::Client(w[2].to_string()),
                (Some("token"), 3) => Reveal::Token(w[2].to_string()),
                (Some("server"), 2) => Reveal::Server,
                (Some("admin"), 2) => Reveal::Admin,
                (Some("store"), 2) => Reveal::Store,
                _ => return Err("usage: reveal client NAME | token NAME | server | admin | store".into()),
            };
            s.actions.push(Action::Reveal(r));
        }
        "tamper" => {
            let idx: usize = num(w.get(1), "message index")?;
            let t = match (w.get(2).copied(), w.len()) {
                (Some("drop"), 3) => Tamper::Drop,
                (Some("impersonate"), 3) => Tamper::Impersonate,
                (Some("flip"), 4) => Tamper::Flip(num(w.get(3), "offset")?),
                (Some("replay"), 4) => Tamper::Replay(num(w.get(3), "message index")?),
                (Some("set"), 5) => Tamper::Set(num(w.get(3), "offset")?, hex_arg(w.get(4))?),
                _ => return Err("usage: tamper N drop | flip OFF | set OFF HEX | replay M | impersonate".into()),
            };
            if s.tampers.insert(idx, t).is_some() {
                return Err(format!("message {idx} already has a tamper rule"));
            }
        }
        "expect" => {
            let e = match w.get(1).copied() {
                Some("step") => {
                    let step = num(w.get(2), "step index")?;
                    let what = match (w.get(3).copied(), w.len()) {
                        (Some("ok"), 4) => StepExpectation::Ok,
                        (Some("fail"), 4) => StepExpectation::Fail,
                        (Some("reject"), 5) => StepExpectation::Reject(parse_code(w[4])?),
                        _ => return Err("usage: expect step N ok | fail | reject CODE".into()),
                    };
                    Expect::Step(step, what)
                }
                Some("tokens") => {
                    arity(3)?;
                    Expect::Tokens(num(w.get(2), "token count")?)
                }
                Some("secrecy") => {
                    arity(3)?;
                    match w[2] {
                        "ok" => Expect::Secrecy(true),
                        "violated" => Expect::Secrecy(false),
                        other => return Err(format!("expected ok or violated, got `{other}`")),
                    }
                }
                _ => return Err("usage: expect step ... | tokens N | secrecy ok|violated".into()),
            };
            s.expects.push(e);
        }
        other => return Err(format!("unknown directive `{other}`")),
    }
    Ok(())
}

fn parse_code(s: &str) -> Result<ErrorCode, String> {
    (1..=u8::MAX)
        .filter_map(|b| ErrorCode::from_byte(b).ok())
        .find(|c| c.to_string().eq_ignore_ascii_case(s))
        .ok_or_else(|| format!("unknown error code `{s}`"))
}
