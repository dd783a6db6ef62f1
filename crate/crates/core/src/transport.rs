//! Drivers that move bytes between state machines and the outside world.
//!
//! [`drive`] is the generic loop. A [`Link`] services whatever the machine
//! asks for: a client link writes frames to a socket and reads replies, a
//! server link also answers store requests. [`LocalServer`] is an in-process
//! link that runs the server machines directly against a store, with no
//! sockets involved.

use std::collections::VecDeque;
use std::io;
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::task::Poll;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use thiserror::Error;

use crate::frame::{read_frame, write_frame, FrameError, DEFAULT_MAX_FRAME};
use crate::protocol::{
    MachineError, ServerContext, ServerInput, ServerOutcome, ServerSession, ServerTransmit, StateMachine,
};
use crate::store::{execute, SharedStore};
use crate::time::SharedClock;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("connection closed by peer")]
    Closed,
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("state machine: {0}")]
    Machine(#[from] MachineError),
    #[error("server failed without replying: {0}")]
    ServerFailed(String),
}

/// Services a machine's requests.
pub trait Link<M: StateMachine> {
    /// Handles one transmit. Returns an input to feed back if the request
    /// is answered synchronously (store calls); `None` otherwise (sends).
    fn service(&mut self, transmit: M::Transmit) -> Result<Option<M::Input>, TransportError>;

    /// Blocks until the next inbound input arrives.
    fn wait(&mut self) -> Result<M::Input, TransportError>;
}

/// Runs `machine` until it produces a result.
pub fn drive<M, L>(machine: &mut M, link: &mut L) -> Result<M::Output, TransportError>
where
    M: StateMachine,
    L: Link<M>,
{
    let mut inbound = VecDeque::new();
    loop {
        while let Some(t) = machine.poll_transmit() {
            if let Some(input) = link.service(t)? {
                inbound.push_back(input);
            }
        }
        if let Poll::Ready(result) = machine.poll_result() {
            return Ok(result);
        }
        let input = match inbound.pop_front() {
            Some(i) => i,
            None => link.wait()?,
        };
        machine.recv(input)?;
    }
}

/// Client end of a TCP connection.
#[derive(Debug)]
pub struct ClientLink {
    stream: TcpStream,
    max_frame: usize,
}

impl ClientLink {
    pub fn new(stream: TcpStream, max_frame: usize) -> Self {
        ClientLink { stream, max_frame }
    }

    pub fn connect(addr: impl ToSocketAddrs, timeout: Option<Duration>) -> Result<Self, TransportError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_read_timeout(timeout)?;
        stream.set_nodelay(true)?;
        Ok(ClientLink::new(stream, DEFAULT_MAX_FRAME))
    }

    pub fn with_max_frame(mut self, max_frame: usize) -> Self {
        self.max_frame = max_frame;
        self
    }
}

impl<M> Link<M> for ClientLink
where
    M: StateMachine<Input = Vec<u8>, Transmit = Vec<u8>>,
{
    fn service(&mut self, bytes: Vec<u8>) -> Result<Option<Vec<u8>>, TransportError> {
        write_frame(&mut self.stream, &bytes, self.max_frame)?;
        Ok(None)
    }

    fn wait(&mut self) -> Result<Vec<u8>, TransportError> {
        read_frame(&mut self.stream, self.max_frame)?.ok_or(TransportError::Closed)
    }
}

/// Runs one client action over a fresh connection to `addr`.
pub fn run_client<M>(machine: &mut M, addr: impl ToSocketAddrs, timeout: Option<Duration>) -> Result<M::Output, TransportError>
where
    M: StateMachine<Input = Vec<u8>, Transmit = Vec<u8>>,
{
    let mut link = ClientLink::connect(addr, timeout)?;
    let out = drive(machine, &mut link);
    let _ = link.stream.shutdown(Shutdown::Both);
    out
}

/// Server end of a TCP connection: replies go to the socket, store requests
/// to the shared store.
#[derive(Debug)]
pub struct ServerLink<'a> {
    stream: &'a mut TcpStream,
    store: &'a SharedStore,
    max_frame: usize,
}

impl Link<ServerSession> for ServerLink<'_> {
    fn service(&mut self, t: ServerTransmit) -> Result<Option<ServerInput>, TransportError> {
        match t {
            ServerTransmit::Store(req) => Ok(Some(ServerInput::Store(execute(self.store.as_ref(), req)))),
            ServerTransmit::Reply(bytes) => {
                write_frame(self.stream, &bytes, self.max_frame)?;
                Ok(None)
            }
        }
    }

    fn wait(&mut self) -> Result<ServerInput, TransportError> {
        read_frame(self.stream, self.max_frame)?
            .map(ServerInput::Request)
            .ok_or(TransportError::Closed)
    }
}

/// Runs the server machines for one request against a store without any
/// socket. Returns the reply (if any) and the outcome.
pub fn serve_request(
    ctx: &Arc<ServerContext>,
    store: &SharedStore,
    clock: &SharedClock,
    request: Vec<u8>,
) -> (Option<Vec<u8>>, ServerOutcome) {
    let mut session = ServerSession::new(Arc::clone(ctx), clock.now());
    let mut inbound = VecDeque::from([ServerInput::Request(request)]);
    let mut reply = None;
    loop {
        if let Some(input) = inbound.pop_front() {
            if let Err(e) = session.recv(input) {
                return (None, ServerOutcome::Failed(e.to_string()));
            }
        }
        while let Some(t) = session.poll_transmit() {
            match t {
                ServerTransmit::Store(req) => inbound.push_back(ServerInput::Store(execute(store.as_ref(), req))),
                ServerTransmit::Reply(bytes) => reply = Some(bytes),
            }
        }
        if let Poll::Ready(outcome) = session.poll_result() {
            return (reply, outcome);
        }
        if inbound.is_empty() {
            return (reply, ServerOutcome::Failed("server machine stalled".into()));
        }
    }
}

/// In-process link for client machines: every transmitted request is served
/// immediately by [`serve_request`].
#[derive(Debug, Clone)]
pub struct LocalServer {
    pub ctx: Arc<ServerContext>,
    pub store: SharedStore,
    pub clock: SharedClock,
    pending: VecDeque<Vec<u8>>,
    outcomes: Vec<ServerOutcome>,
}

impl LocalServer {
    pub fn new(ctx: Arc<ServerContext>, store: SharedStore, clock: SharedClock) -> Self {
        LocalServer {
            ctx,
            store,
            clock,
            pending: VecDeque::new(),
            outcomes: Vec::new(),
        }
    }

    /// Server outcomes observed so far, oldest first.
    pub fn outcomes(&self) -> &[ServerOutcome] {
        &self.outcomes
    }

    pub fn run<M>(&mut self, machine: &mut M) -> Result<M::Output, TransportError>
    where
        M: StateMachine<Input = Vec<u8>, Transmit = Vec<u8>>,
    {
        self.pending.clear();
        drive(machine, self)
    }
}

impl<M> Link<M> for LocalServer
where
    M: StateMachine<Input = Vec<u8>, Transmit = Vec<u8>>,
{
    fn service(&mut self, bytes: Vec<u8>) -> Result<Option<Vec<u8>>, TransportError> {
        let (reply, outcome) = serve_request(&self.ctx, &self.store, &self.clock, bytes);
        self.outcomes.push(outcome.clone());
        match reply {
            Some(r) => self.pending.push_back(r),
            None => {
                if let ServerOutcome::Failed(e) = outcome {
                    return Err(TransportError::ServerFailed(e));
                }
            }
        }
        Ok(None)
    }

    fn wait(&mut self) -> Result<Vec<u8>, TransportError> {
        self.pending.pop_front().ok_or(TransportError::Closed)
    }
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub ctx: Arc<ServerContext>,
    pub store: SharedStore,
    pub clock: SharedClock,
    pub max_frame: usize,
    pub max_connections: usize,
    pub idle_timeout: Option<Duration>,
    /// Serve sequential actions on one connection instead of closing after
    /// the first.
    pub keep_alive: bool,
}

impl ServerConfig {
    pub fn new(ctx: Arc<ServerContext>, store: SharedStore, clock: SharedClock) -> Self {
        ServerConfig {
            ctx,
            store,
            clock,
            max_frame: DEFAULT_MAX_FRAME,
            max_connections: 256,
            idle_timeout: Some(Duration::from_secs(30)),
            keep_alive: false,
        }
    }
}

/// A running listener. Dropping the handle does not stop it; call
/// [`ServerHandle::shutdown`].
#[derive(Debug)]
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
    active: Arc<AtomicUsize>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn active_connections(&self) -> usize {
        self.active.load(Ordering::SeqCst)
    }

    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the blocking accept.
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }

    /// Blocks until the accept loop exits.
    pub fn join(mut self) {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

pub fn listen(addr: impl ToSocketAddrs, config: ServerConfig) -> Result<ServerHandle, TransportError> {
    let listener = TcpListener::bind(addr)?;
    let local = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let active = Arc::new(AtomicUsize::new(0));
    let accept = {
        let stop = Arc::clone(&stop);
        let active = Arc::clone(&active);
        thread::Builder::new()
            .name("pqtoken-accept".into())
            .spawn(move || accept_loop(listener, config, stop, active))?
    };
    log::info!("listening on {local}");
    Ok(ServerHandle {
        addr: local,
        stop,
        accept: Some(accept),
        active,
    })
}

fn accept_loop(listener: TcpListener, config: ServerConfig, stop: Arc<AtomicBool>, active: Arc<AtomicUsize>) {
    for conn in listener.incoming() {
        if stop.load(Ordering::SeqCst) {
            break;
        }
        let stream = match conn {
            Ok(s) => s,
            Err(e) => {
                log::warn!("accept failed: {e}");
                continue;
            }
        };
        if active.fetch_add(1, Ordering::SeqCst) >= config.max_connections {
            active.fetch_sub(1, Ordering::SeqCst);
            log::warn!("connection limit reached; refusing {:?}", stream.peer_addr().ok());
            let _ = stream.shutdown(Shutdown::Both);
            continue;
        }
        let config = config.clone();
        let active_conn = Arc::clone(&active);
        let spawned = thread::Builder::new().name("pqtoken-conn".into()).spawn(move || {
            if let Err(e) = serve_connection(stream, &config) {
                log::debug!("connection ended: {e}");
            }
            active_conn.fetch_sub(1, Ordering::SeqCst);
        });
        if let Err(e) = spawned {
            active.fetch_sub(1, Ordering::SeqCst);
            log::warn!("could not spawn connection thread: {e}");
        }
    }
}

/// Serves one connection: one action, or several in keep-alive mode.
pub fn serve_connection(mut stream: TcpStream, config: &ServerConfig) -> Result<(), TransportError> {
    stream.set_read_timeout(config.idle_timeout)?;
    stream.set_nodelay(true)?;
    loop {
        let Some(first) = read_frame(&mut stream, config.max_frame)? else {
            return Ok(());
        };
        let mut session = ServerSession::new(Arc::clone(&config.ctx), config.clock.now());
        session.recv(ServerInput::Request(first))?;
        let mut link = ServerLink {
            stream: &mut stream,
            store: &config.store,
            max_frame: config.max_frame,
        };
        let outcome = drive(&mut session, &mut link)?;
        log::info!("{outcome:?}");
        if let ServerOutcome::Failed(e) = outcome {
            return Err(TransportError::ServerFailed(e));
        }
        if !config.keep_alive {
            let _ = stream.shutdown(Shutdown::Both);
            return Ok(());
        }
    }
}
