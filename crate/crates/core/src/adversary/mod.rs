//! A network the attacker fully controls, scripted attacks against it, and a
//! symbolic secrecy check over everything the attacker saw.
//!
//! All parties run on the [`SymbolicProvider`] so every byte on the wire can
//! be taken apart. Each request and reply passes through the attacker, who
//! may forward, drop, rewrite, substitute or answer it, and may later replay
//! or inject arbitrary bytes. Runs are deterministic for a given seed.

mod knowledge;
mod scenario;

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;
use std::task::Poll;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use uuid::Uuid;

use crate::crypto::{PrivateKey, SharedProvider, SymbolicProvider};
use crate::deployment::Deployment;
use crate::protocol::{
    approval_hash, CheckClient, ClientIdentity, CycleClient, FinalToken, Policy, ProtocolError,
    RegisterAdmin, ServerOutcome, StampClient, StateMachine,
};
use crate::store::TokenRecord;
use crate::suite::SuiteId;
use crate::token::{Permissions, PAYLOAD_LEN};
use crate::transport::serve_request;
use crate::wire::{CheckReply, ErrorCode, WireMessage};

pub use knowledge::{Knowledge, Provenance};
pub use scenario::{Action, Expect, Reveal, Scenario, ScenarioError, StepExpectation, Tamper};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    ToServer,
    ToClient,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptEntry {
    pub index: usize,
    pub step: usize,
    pub direction: Direction,
    /// Bytes as the sender emitted them.
    pub sent: Vec<u8>,
    /// Bytes handed to the receiver, if any.
    pub delivered: Option<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepValue {
    Registered(Uuid),
    Cycled,
    Stamped(Box<FinalToken>),
    Checked(CheckReply),
    /// Raw bytes were sent; the server's reply, if it produced one.
    Sent(Option<Vec<u8>>),
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepResult {
    Ok(StepValue),
    Failed { code: Option<ErrorCode>, reason: String },
}

impl StepResult {
    pub fn is_ok(&self) -> bool {
        matches!(self, StepResult::Ok(_))
    }

    pub fn code(&self) -> Option<ErrorCode> {
        match self {
            StepResult::Failed { code, .. } => *code,
            StepResult::Ok(_) => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepRecord {
    pub action: Action,
    pub result: StepResult,
    /// Transcript indices of the messages this step produced.
    pub messages: Vec<usize>,
    pub server: Vec<ServerOutcome>,
}

/// A token the client accepted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub client: String,
    pub uuid: Uuid,
    pub step: usize,
    pub token: FinalToken,
}

impl Session {
    pub fn secret(&self) -> [u8; PAYLOAD_LEN] {
        self.token.token.payload
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpectResult {
    pub expect: Expect,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub steps: Vec<StepRecord>,
    pub transcript: Vec<TranscriptEntry>,
    pub store_snapshot: Vec<u8>,
    pub tokens: Vec<TokenRecord>,
    pub sessions: Vec<Session>,
    /// Final client state by name, private keys included, so tests can
    /// reveal them after the fact.
    pub clients: BTreeMap<String, ClientIdentity>,
    /// The server's long-term signing key, for the same purpose.
    pub server_key: PrivateKey,
    pub knowledge: Knowledge,
    pub expectations: Vec<ExpectResult>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.expectations.iter().all(|e| e.passed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecrecyWitness {
    pub session: usize,
    pub client: String,
    pub provenance: Provenance,
}

/// Fails with the first accepted session whose token secret the attacker
/// can derive.
pub fn assert_secrecy(outcome: &Outcome) -> Result<(), SecrecyWitness> {
    for (i, s) in outcome.sessions.iter().enumerate() {
        if let Some(provenance) = outcome.knowledge.derive(&s.secret()) {
            return Err(SecrecyWitness { session: i, client: s.client.clone(), provenance });
        }
    }
    Ok(())
}

enum Delivery {
    Deliver(Vec<u8>),
    Dropped,
    Impersonate,
}

struct Party {
    identity: Option<ClientIdentity>,
    last_token: Option<FinalToken>,
}

struct Harness {
    provider: SharedProvider,
    deployment: Deployment,
    parties: BTreeMap<String, Party>,
    tampers: BTreeMap<usize, Tamper>,
    transcript: Vec<TranscriptEntry>,
    knowledge: Knowledge,
    steps: Vec<StepRecord>,
    sessions: Vec<Session>,
    server_log: Vec<ServerOutcome>,
    step: usize,
}

impl Harness {
    fn new(seed: u64, suite: SuiteId, policy: Policy, tampers: BTreeMap<usize, Tamper>) -> Self {
        let symbolic = Arc::new(SymbolicProvider::new(suite, seed));
        let provider: SharedProvider = symbolic.clone();
        let deployment = Deployment::new(Arc::clone(&provider), policy).expect("symbolic provider never fails keygen");
        Harness {
            knowledge: Knowledge::new(symbolic),
            provider,
            deployment,
            parties: BTreeMap::new(),
            tampers,
            transcript: Vec::new(),
            steps: Vec::new(),
            sessions: Vec::new(),
            server_log: Vec::new(),
            step: 0,
        }
    }

    fn transmit(&mut self, direction: Direction, bytes: Vec<u8>) -> Delivery {
        let index = self.transcript.len();
        self.knowledge.observe(format!("message {index}"), bytes.clone());
        let delivery = match self.tampers.get(&index) {
            None => Delivery::Deliver(bytes.clone()),
            Some(Tamper::Drop) => Delivery::Dropped,
            Some(Tamper::Impersonate) => Delivery::Impersonate,
            Some(Tamper::Flip(off)) => {
                let mut b = bytes.clone();
                if let Some(x) = b.get_mut(*off) {
                    *x ^= 0xff;
                }
                Delivery::Deliver(b)
            }
            Some(Tamper::Set(off, v)) => {
                let mut b = bytes.clone();
                if b.len() < off + v.len() {
                    b.resize(off + v.len(), 0);
                }
                b[*off..off + v.len()].copy_from_slice(v);
                Delivery::Deliver(b)
            }
            Some(Tamper::Replay(src)) => match self.transcript.get(*src) {
                Some(e) => Delivery::Deliver(e.sent.clone()),
                None => Delivery::Dropped,
            },
        };
        let delivered = match &delivery {
            Delivery::Deliver(b) => Some(b.clone()),
            _ => None,
        };
        self.transcript.push(TranscriptEntry { index, step: self.step, direction, sent: bytes, delivered });
        delivery
    }

    fn serve(&mut self, request: Vec<u8>) -> Option<Vec<u8>> {
        let clock = self.deployment.shared_clock();
        let (reply, outcome) = serve_request(&self.deployment.ctx, &self.deployment.store, &clock, request);
        self.server_log.push(outcome);
        reply
    }

    /// Sends a request through the attacker and returns what comes back to
    /// the requester, if anything.
    fn round_trip(&mut self, request: Vec<u8>) -> Option<Vec<u8>> {
        let reply = match self.transmit(Direction::ToServer, request.clone()) {
            Delivery::Deliver(b) => self.serve(b),
            Delivery::Dropped => None,
            Delivery::Impersonate => self.forge_reply(&request),
        }?;
        match self.transmit(Direction::ToClient, reply) {
            Delivery::Deliver(b) => Some(b),
            Delivery::Dropped | Delivery::Impersonate => None,
        }
    }

    /// Answers a STAMP in the server's place. The reply only verifies if
    /// the server's signing key has been revealed.
    fn forge_reply(&mut self, request: &[u8]) -> Option<Vec<u8>> {
        let params = self.provider.params();
        let WireMessage::Stamp { preview, encapsulation_key, .. } = WireMessage::decode(request, &params).ok()? else {
            return None;
        };
        let (ciphertext, secret) = self.provider.kem_encapsulate(&encapsulation_key).ok()?;
        self.knowledge.learn_secret("attacker encapsulation", *secret.as_bytes());
        let final_token = preview.with_payload(*secret.as_bytes());
        let key = match self.knowledge.signing_key_for(self.deployment.ctx.public_key()) {
            Some(k) => k.clone(),
            None => self.provider.generate_signing_key().ok()?.private_key,
        };
        let mut msg = WireMessage::Stamped {
            approval_hash: approval_hash(self.provider.as_ref(), &final_token, &preview),
            ciphertext,
            server_signature: Vec::new(),
        };
        let sig = self.provider.sign(&msg.signing_bytes(&params).ok()?, &key).ok()?;
        if let WireMessage::Stamped { server_signature, .. } = &mut msg {
            *server_signature = sig;
        }
        msg.encode(&params).ok()
    }

    fn exchange<M>(&mut self, m: &mut M) -> Result<M::Output, String>
    where
        M: StateMachine<Input = Vec<u8>, Transmit = Vec<u8>>,
    {
        let mut inbound = VecDeque::new();
        loop {
            while let Some(req) = m.poll_transmit() {
                if let Some(reply) = self.round_trip(req) {
                    inbound.push_back(reply);
                }
            }
            if let Poll::Ready(r) = m.poll_result() {
                return Ok(r);
            }
            let input = inbound.pop_front().ok_or_else(|| "no reply".to_string())?;
            m.recv(input).map_err(|e| e.to_string())?;
        }
    }

    fn failed(&self, reason: String, from: usize) -> StepResult {
        StepResult::Failed { code: self.last_rejection(from), reason }
    }

    fn last_rejection(&self, from: usize) -> Option<ErrorCode> {
        self.server_log[from..].iter().rev().find_map(|o| match o {
            ServerOutcome::Rejected { code, .. } => Some(*code),
            _ => None,
        })
    }

    fn protocol_failure(&self, e: ProtocolError, from: usize) -> StepResult {
        let code = match &e {
            ProtocolError::Rejected(c) => Some(*c),
            ProtocolError::BadTime { .. } => Some(ErrorCode::BadTime),
            _ => self.last_rejection(from),
        };
        StepResult::Failed { code, reason: e.to_string() }
    }

    fn identity(&self, name: &str) -> Result<ClientIdentity, String> {
        self.parties
            .get(name)
            .and_then(|p| p.identity.clone())
            .ok_or_else(|| format!("no registered client `{name}`"))
    }

    fn run_action(&mut self, action: &Action) -> StepResult {
        let from = self.server_log.len();
        match action {
            Action::Register(name) => {
                if self.parties.contains_key(name) {
                    return self.failed(format!("client `{name}` already exists"), from);
                }
                let key = match self.provider.generate_signing_key() {
                    Ok(k) => k,
                    Err(e) => return self.failed(e.to_string(), from),
                };
                let uuid = self.deployment.new_uuid();
                let mut m = match RegisterAdmin::new(Arc::clone(&self.provider), &self.deployment.admin, uuid, key) {
                    Ok(m) => m,
                    Err(e) => return self.protocol_failure(e, from),
                };
                match self.exchange(&mut m) {
                    Ok(Ok(identity)) => {
                        self.parties.insert(name.clone(), Party { identity: Some(identity), last_token: None });
                        StepResult::Ok(StepValue::Registered(uuid))
                    }
                    Ok(Err(e)) => self.protocol_failure(e, from),
                    Err(reason) => self.failed(reason, from),
                }
            }
            Action::Cycle(name) => {
                let identity = match self.identity(name) {
                    Ok(i) => i,
                    Err(reason) => return self.failed(reason, from),
                };
                let mut m = match CycleClient::new(Arc::clone(&self.provider), identity) {
                    Ok(m) => m,
                    Err(e) => return self.protocol_failure(e, from),
                };
                let r = self.exchange(&mut m);
                self.parties.get_mut(name).expect("checked").identity = Some(m.into_identity());
                match r {
                    Ok(Ok(())) => StepResult::Ok(StepValue::Cycled),
                    Ok(Err(e)) => self.protocol_failure(e, from),
                    Err(reason) => self.failed(reason, from),
                }
            }
            Action::Stamp { client, code } => {
                let identity = match self.identity(client) {
                    Ok(i) => i,
                    Err(reason) => return self.failed(reason, from),
                };
                let uuid = identity.uuid;
                let perms = code.map(Permissions::code).unwrap_or(Permissions::DISABLED);
                let mut m = match StampClient::new(Arc::clone(&self.provider), identity, 0, perms) {
                    Ok(m) => m,
                    Err(e) => return self.protocol_failure(e, from),
                };
                let r = self.exchange(&mut m);
                let party = self.parties.get_mut(client).expect("checked");
                party.identity = Some(m.into_identity());
                match r {
                    Ok(Ok(token)) => {
                        party.last_token = Some(token.clone());
                        self.sessions.push(Session {
                            client: client.clone(),
                            uuid,
                            step: self.step,
                            token: token.clone(),
                        });
                        StepResult::Ok(StepValue::Stamped(Box::new(token)))
                    }
                    Ok(Err(e)) => self.protocol_failure(e, from),
                    Err(reason) => self.failed(reason, from),
                }
            }
            Action::Check(name) => {
                let Some(token) = self.parties.get(name).and_then(|p| p.last_token.clone()) else {
                    return self.failed(format!("client `{name}` holds no token"), from);
                };
                let mut m = CheckClient::new(token.bytes());
                match self.exchange(&mut m) {
                    Ok(Ok(reply)) => StepResult::Ok(StepValue::Checked(reply)),
                    Ok(Err(e)) => self.protocol_failure(e, from),
                    Err(reason) => self.failed(reason, from),
                }
            }
            Action::Perm { code, scope } => match self.deployment.store.insert_perm_code(*code, scope.clone()) {
                Ok(()) => StepResult::Ok(StepValue::Done),
                Err(e) => self.failed(e.to_string(), from),
            },
            Action::Replay(idx) => match self.transcript.get(*idx) {
                Some(e) => {
                    let bytes = e.sent.clone();
                    self.send_raw(bytes, from)
                }
                None => self.failed(format!("no message {idx} to replay"), from),
            },
            Action::Inject(bytes) => self.send_raw(bytes.clone(), from),
            Action::Reveal(r) => self.reveal(r, from),
            Action::Advance(secs) => {
                self.deployment.clock.advance(*secs);
                StepResult::Ok(StepValue::Done)
            }
        }
    }

    fn send_raw(&mut self, bytes: Vec<u8>, from: usize) -> StepResult {
        let reply = self.round_trip(bytes);
        match self.server_log[from..].last() {
            Some(ServerOutcome::Rejected { code, .. }) => StepResult::Failed {
                code: Some(*code),
                reason: format!("server rejected with {code}"),
            },
            Some(ServerOutcome::Failed(reason)) => StepResult::Failed { code: None, reason: reason.clone() },
            _ => StepResult::Ok(StepValue::Sent(reply)),
        }
    }

    fn reveal(&mut self, r: &Reveal, from: usize) -> StepResult {
        match r {
            Reveal::Client(name) => match self.identity(name) {
                Ok(id) => self
                    .knowledge
                    .reveal_signing_key(format!("client {name}"), id.signing_key.private_key),
                Err(reason) => return self.failed(reason, from),
            },
            Reveal::Server => {
                let key = self.deployment.ctx.signing_key().private_key.clone();
                self.knowledge.reveal_signing_key("server", key);
            }
            Reveal::Admin => {
                let key = self.deployment.admin.signing_key.private_key.clone();
                self.knowledge.reveal_signing_key("admin", key);
            }
            Reveal::Token(name) => match self.parties.get(name).and_then(|p| p.last_token.as_ref()) {
                Some(t) => self.knowledge.reveal_token(format!("token {name}"), t.bytes()),
                None => return self.failed(format!("client `{name}` holds no token"), from),
            },
            Reveal::Store => match self.deployment.store.export() {
                Ok(bytes) => self.knowledge.observe("store", bytes),
                Err(e) => return self.failed(e.to_string(), from),
            },
        }
        StepResult::Ok(StepValue::Done)
    }

    fn run(&mut self, actions: &[Action]) {
        for action in actions {
            let first_message = self.transcript.len();
            let from = self.server_log.len();
            let result = self.run_action(action);
            self.steps.push(StepRecord {
                action: action.clone(),
                result,
                messages: (first_message..self.transcript.len()).collect(),
                server: self.server_log[from..].to_vec(),
            });
            self.step += 1;
        }
    }

    fn finish(mut self, expects: &[Expect]) -> Outcome {
        self.knowledge.close();
        let store = &self.deployment.store;
        let mut outcome = Outcome {
            steps: self.steps,
            transcript: self.transcript,
            store_snapshot: store.export().unwrap_or_default(),
            tokens: store.tokens().unwrap_or_default(),
            sessions: self.sessions,
            clients: self
                .parties
                .into_iter()
                .filter_map(|(name, p)| p.identity.map(|i| (name, i)))
                .collect(),
            server_key: self.deployment.ctx.signing_key().private_key.clone(),
            knowledge: self.knowledge,
            expectations: Vec::new(),
        };
        outcome.expectations = expects.iter().map(|e| evaluate(&outcome, e)).collect();
        outcome
    }
}

fn evaluate(outcome: &Outcome, expect: &Expect) -> ExpectResult {
    let (passed, detail) = match expect {
        Expect::Step(i, want) => match outcome.steps.get(*i) {
            None => (false, format!("step {i} did not run")),
            Some(rec) => {
                let passed = match want {
                    StepExpectation::Ok => rec.result.is_ok(),
                    StepExpectation::Fail => !rec.result.is_ok(),
                    StepExpectation::Reject(code) => rec.result.code() == Some(*code),
                };
                (passed, format!("step {i}: {:?}", rec.result))
            }
        },
        Expect::Tokens(n) => (
            outcome.tokens.len() == *n,
            format!("{} token(s) in store", outcome.tokens.len()),
        ),
        Expect::Secrecy(ok) => match assert_secrecy(outcome) {
            Ok(()) => (*ok, "no session secret derivable".to_string()),
            Err(w) => (!*ok, format!("session {} ({}) derivable: {:?}", w.session, w.client, w.provenance)),
        },
    };
    ExpectResult { expect: expect.clone(), passed, detail }
}

/// Executes a scenario. Failures of individual steps are data in the
/// returned outcome, never errors.
pub fn run_scenario(scenario: &Scenario) -> Outcome {
    let mut h = Harness::new(scenario.seed, scenario.suite, scenario.policy, scenario.tampers.clone());
    h.run(&scenario.actions);
    h.finish(&scenario.expects)
}

enum Live {
    Cycle(CycleClient),
    Stamp(StampClient),
}

enum Phase {
    AtServer(Vec<u8>),
    AtClient(Option<Vec<u8>>),
}

struct Lane {
    name: String,
    identity: Option<ClientIdentity>,
    remaining: usize,
    since_cycle: usize,
    live: Option<LiveOp>,
}

struct LiveOp {
    machine: Live,
    phase: Phase,
    /// Start of this operation's server outcomes.
    from: usize,
    messages: Vec<usize>,
}

/// Runs `clients` clients, each performing `stamps` stamps (and a cycle
/// after every `cycle_every` stamps when non-zero), with message delivery
/// interleaved across clients by a scheduler seeded from `seed`. The network
/// is honest; the attacker only observes.
pub fn run_interleaved(seed: u64, clients: usize, stamps: usize, cycle_every: usize) -> Outcome {
    let mut h = Harness::new(seed, SuiteId::L1, Policy::default(), BTreeMap::new());
    let mut lanes = Vec::with_capacity(clients);
    for i in 0..clients {
        let name = format!("c{i}");
        h.run(&[Action::Register(name.clone())]);
        let identity = h.parties.get(&name).and_then(|p| p.identity.clone());
        lanes.push(Lane { name, identity, remaining: stamps, since_cycle: 0, live: None });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5eed);
    loop {
        let enabled: Vec<usize> = lanes
            .iter()
            .enumerate()
            .filter(|(_, l)| l.live.is_some() || (l.remaining > 0 && l.identity.is_some()))
            .map(|(i, _)| i)
            .collect();
        if enabled.is_empty() {
            break;
        }
        let lane = &mut lanes[enabled[rng.gen_range(0..enabled.len())]];
        step_lane(&mut h, lane, cycle_every);
    }
    for lane in lanes {
        if let Some(p) = h.parties.get_mut(&lane.name) {
            p.identity = lane.identity;
        }
    }
    h.finish(&[])
}

fn step_lane(h: &mut Harness, lane: &mut Lane, cycle_every: usize) {
    match lane.live.take() {
        None => {
            let identity = lane.identity.take().expect("enabled lane has identity");
            let from = h.server_log.len();
            let built = if cycle_every > 0 && lane.since_cycle == cycle_every {
                CycleClient::new(Arc::clone(&h.provider), identity.clone()).map(Live::Cycle)
            } else {
                StampClient::new(Arc::clone(&h.provider), identity.clone(), 0, Permissions::DISABLED).map(Live::Stamp)
            };
            let mut live = match built {
                Ok(l) => l,
                Err(e) => {
                    lane.identity = Some(identity);
                    lane.remaining = 0;
                    let result = h.protocol_failure(e, from);
                    record(h, Action::Stamp { client: lane.name.clone(), code: None }, result, from, Vec::new());
                    return;
                }
            };
            let request = match &mut live {
                Live::Cycle(m) => m.poll_transmit(),
                Live::Stamp(m) => m.poll_transmit(),
            };
            let mut messages = Vec::new();
            let phase = match request {
                Some(req) => {
                    messages.push(h.transcript.len());
                    match h.transmit(Direction::ToServer, req) {
                        Delivery::Deliver(b) => Phase::AtServer(b),
                        _ => Phase::AtClient(None),
                    }
                }
                None => Phase::AtClient(None),
            };
            lane.live = Some(LiveOp { machine: live, phase, from, messages });
        }
        Some(LiveOp { machine, phase: Phase::AtServer(req), from, mut messages }) => {
            let reply = h.serve(req).and_then(|r| {
                messages.push(h.transcript.len());
                match h.transmit(Direction::ToClient, r) {
                    Delivery::Deliver(b) => Some(b),
                    _ => None,
                }
            });
            lane.live = Some(LiveOp { machine, phase: Phase::AtClient(reply), from, messages });
        }
        Some(op) => finish_lane(h, lane, op),
    }
}

fn finish_lane(h: &mut Harness, lane: &mut Lane, op: LiveOp) {
    let name = lane.name.clone();
    let LiveOp { machine, phase, from, messages } = op;
    let reply = match phase {
        Phase::AtClient(r) => r,
        Phase::AtServer(_) => None,
    };
    match machine {
        Live::Cycle(mut m) => {
            let r = drain(&mut m, reply);
            lane.identity = Some(m.into_identity());
            lane.since_cycle = 0;
            let result = match r {
                Some(Ok(())) => StepResult::Ok(StepValue::Cycled),
                Some(Err(e)) => h.protocol_failure(e, from),
                None => h.failed("no reply".into(), from),
            };
            record(h, Action::Cycle(name), result, from, messages);
        }
        Live::Stamp(mut m) => {
            let r = drain(&mut m, reply);
            let identity = m.into_identity();
            let uuid = identity.uuid;
            lane.identity = Some(identity);
            lane.remaining -= 1;
            lane.since_cycle += 1;
            let result = match r {
                Some(Ok(token)) => {
                    h.sessions.push(Session { client: name.clone(), uuid, step: h.step, token: token.clone() });
                    StepResult::Ok(StepValue::Stamped(Box::new(token)))
                }
                Some(Err(e)) => h.protocol_failure(e, from),
                None => h.failed("no reply".into(), from),
            };
            record(h, Action::Stamp { client: name, code: None }, result, from, messages);
        }
    }
}

fn drain<M>(m: &mut M, reply: Option<Vec<u8>>) -> Option<M::Output>
where
    M: StateMachine<Input = Vec<u8>, Transmit = Vec<u8>>,
{
    if let Poll::Ready(r) = m.poll_result() {
        return Some(r);
    }
    m.recv(reply?).ok()?;
    match m.poll_result() {
        Poll::Ready(r) => Some(r),
        Poll::Pending => None,
    }
}

fn record(h: &mut Harness, action: Action, result: StepResult, from: usize, messages: Vec<usize>) {
    h.steps.push(StepRecord { action, result, messages, server: h.server_log[from..].to_vec() });
    h.step += 1;
}
