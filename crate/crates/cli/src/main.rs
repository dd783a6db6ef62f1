mod config;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use pqtoken::adversary::{assert_secrecy, run_scenario, Scenario};
use pqtoken::bench;
use pqtoken::credentials::{self, Credential, CredentialKind};
use pqtoken::crypto::{MlProvider, SharedProvider};
use pqtoken::overhead::{Report, Workload};
use pqtoken::protocol::{
    AdminIdentity, CheckClient, ClientIdentity, CycleClient, ProtocolError, RegisterAdmin, ServerContext, StampClient,
};
use pqtoken::store::{AdminRecord, FileStore, InsertOutcome, Store};
use pqtoken::suite::SuiteId;
use pqtoken::time::SystemClock;
use pqtoken::token::{Permissions, TOKEN_LEN};
use pqtoken::transport::{listen, run_client, ServerConfig, TransportError};
use pqtoken::wire::CheckStatus;
use uuid::Uuid;

use config::Config;

/// Process exit statuses.
mod exit {
    pub const USAGE: u8 = 2;
    pub const IO: u8 = 3;
    pub const REJECTED: u8 = 4;
    pub const CYCLE_REQUIRED: u8 = 5;
    pub const TIME_RESYNC: u8 = 6;
    pub const CHECK_INVALID: u8 = 7;
    pub const ATTACK: u8 = 8;
}

#[derive(Debug)]
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Failure { code, error: error.into() }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure { code: exit::IO, error }
    }
}

impl From<config::ConfigError> for Failure {
    fn from(e: config::ConfigError) -> Self {
        Failure::new(exit::USAGE, e)
    }
}

impl From<TransportError> for Failure {
    fn from(e: TransportError) -> Self {
        Failure::new(exit::IO, e)
    }
}

impl From<ProtocolError> for Failure {
    fn from(e: ProtocolError) -> Self {
        let code = match e {
            ProtocolError::CycleRequired => exit::CYCLE_REQUIRED,
            ProtocolError::BadTime { .. } => exit::TIME_RESYNC,
            _ => exit::REJECTED,
        };
        Failure::new(code, e)
    }
}

type Outcome = Result<(), Failure>;

#[derive(Parser, Debug)]
#[command(name = "pqtoken", version, about = "Post-quantum token establishment for machine-to-machine authorization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Provision and run the token server.
    #[command(subcommand)]
    Server(ServerCmd),
    /// Administrator actions: prepare and register clients.
    #[command(subcommand)]
    Admin(AdminCmd),
    /// Client actions against a running server.
    #[command(subcommand)]
    Client(ClientCmd),
    /// Replay an attack scenario against an in-process deployment.
    Attack {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Time every protocol action with the real primitives.
    Bench {
        /// Label rows with this machine's CPU model.
        #[arg(long)]
        device_report: bool,
        #[arg(long, default_value_t = 100)]
        runs: usize,
        #[arg(long, default_value = "L1")]
        level: SuiteId,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Bandwidth model for a workload.
    Overhead {
        #[arg(long, default_value = "L1")]
        level: SuiteId,
        /// Key cycles per hour.
        #[arg(long, default_value_t = 0.0)]
        alpha: f64,
        /// Token renewals per hour.
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        /// Token checks per hour.
        #[arg(long, default_value_t = 0.0)]
        gamma: f64,
        #[arg(long, default_value_t = 1.0)]
        hours: f64,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Table,
}

#[derive(Subcommand, Debug)]
enum ServerCmd {
    /// Generate the server key pair named by `server_key`.
    Init {
        #[arg(long)]
        config: PathBuf,
        /// Replace an existing key.
        #[arg(long)]
        force: bool,
    },
    /// Create an administrator, record it in the store and write its credential.
    /// Run while the server is stopped.
    AddAdmin {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Map a 15-byte permission code to a scope. Run while the server is stopped.
    AddPerm {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        code: String,
        #[arg(long)]
        scope: String,
    },
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `listen` from the config file.
        #[arg(long)]
        listen: Option<String>,
        /// Serve several actions per connection.
        #[arg(long)]
        keep_alive: bool,
    },
}

#[derive(Subcommand, Debug)]
enum AdminCmd {
    /// Generate a client identifier and key pair, not yet registered.
    Keygen {
        #[arg(long)]
        admin: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Register a client. Uses the key in `--out` if it exists, else a fresh one.
    Register {
        #[arg(long)]
        admin: PathBuf,
        #[arg(long)]
        server: String,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        net: Net,
    },
}

#[derive(Args, Debug, Clone)]
struct Net {
    /// Socket timeout in seconds.
    #[arg(long, default_value_t = 30)]
    timeout: u64,
}

impl Net {
    fn timeout(&self) -> Option<Duration> {
        Some(Duration::from_secs(self.timeout))
    }
}

#[derive(Subcommand, Debug)]
enum ClientCmd {
    /// Rotate the signing key and reset protocol time.
    Cycle {
        #[arg(long)]
        credentials: PathBuf,
        #[arg(long)]
        server: String,
        #[command(flatten)]
        net: Net,
    },
    /// Establish a new token.
    Stamp {
        #[arg(long)]
        credentials: PathBuf,
        #[arg(long)]
        server: String,
        /// Where to write the token; defaults to `<credentials>.token`.
        #[arg(long)]
        token_out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        device: u8,
        /// 15-byte permission code in hex (mode 1).
        #[arg(long)]
        perm_code: Option<String>,
        #[command(flatten)]
        net: Net,
    },
    /// Ask the server whether a token is valid.
    Check {
        /// Token file; defaults to `<credentials>.token`.
        #[arg(long)]
        token: Option<PathBuf>,
        #[arg(long)]
        credentials: Option<PathBuf>,
        #[arg(long)]
        server: String,
        #[command(flatten)]
        net: Net,
    },
}

fn provider(suite: SuiteId) -> SharedProvider {
    Arc::new(MlProvider::new(suite))
}

fn addr(s: &str) -> Result<SocketAddr, Failure> {
    use std::net::ToSocketAddrs;
    s.to_socket_addrs()
        .map_err(|e| Failure::new(exit::USAGE, anyhow!("bad address `{s}`: {e}")))?
        .next()
        .ok_or_else(|| Failure::new(exit::USAGE, anyhow!("address `{s}` did not resolve")))
}

fn load_credential(path: &Path, kind: CredentialKind) -> Result<Credential, Failure> {
    let c = Credential::load(path).with_context(|| format!("reading {}", path.display()))?;
    c.expect(kind)
        .map_err(|e| Failure::new(exit::USAGE, anyhow!("{}: {e}", path.display())))
}

fn load_client(path: &Path) -> Result<ClientIdentity, Failure> {
    let time = credentials::load_time(path).with_context(|| format!("reading time for {}", path.display()))?;
    Ok(load_credential(path, CredentialKind::Client)?
        .into_client(time)
        .map_err(anyhow::Error::from)?)
}

fn save_client(path: &Path, c: &ClientIdentity) -> Outcome {
    Credential::from_client(c)
        .save(path)
        .with_context(|| format!("writing {}", path.display()))?;
    credentials::save_time(path, &c.time).with_context(|| format!("writing time for {}", path.display()))?;
    Ok(())
}

fn default_token_path(credentials: &Path) -> PathBuf {
    let mut s = credentials.as_os_str().to_owned();
    s.push(".token");
    PathBuf::from(s)
}

fn open_store(cfg: &Config) -> Result<FileStore, Failure> {
    Ok(FileStore::open(&cfg.store).with_context(|| format!("opening store {}", cfg.store.display()))?)
}

fn server_cmd(cmd: ServerCmd) -> Outcome {
    match cmd {
        ServerCmd::Init { config, force } => {
            let cfg = Config::load(&config)?;
            if cfg.server_key.exists() && !force {
                return Err(Failure::new(
                    exit::USAGE,
                    anyhow!("{} exists; pass --force to replace it", cfg.server_key.display()),
                ));
            }
            let key = provider(cfg.suite).generate_signing_key().map_err(anyhow::Error::from)?;
            Credential::server(cfg.suite, key)
                .save(&cfg.server_key)
                .with_context(|| format!("writing {}", cfg.server_key.display()))?;
            println!("server key written to {}", cfg.server_key.display());
            Ok(())
        }
        ServerCmd::AddAdmin { config, out } => {
            let cfg = Config::load(&config)?;
            let server = load_credential(&cfg.server_key, CredentialKind::Server)?;
            let p = provider(cfg.suite);
            let store = open_store(&cfg)?;
            let key = p.generate_signing_key().map_err(anyhow::Error::from)?;
            let admin = AdminIdentity {
                uuid: Uuid::from_bytes(random_uuid(&p)),
                signing_key: key,
                server_public_key: server.signing_key.public_key,
                suite: cfg.suite,
            };
            let record = AdminRecord { uuid: admin.uuid, public_key: admin.signing_key.public_key.clone() };
            match store.insert_admin(record).map_err(anyhow::Error::from)? {
                InsertOutcome::Inserted => {}
                other => return Err(Failure::new(exit::REJECTED, anyhow!("admin not added: {other:?}"))),
            }
            store.sync().map_err(anyhow::Error::from)?;
            Credential::from_admin(&admin)
                .save(&out)
                .with_context(|| format!("writing {}", out.display()))?;
            println!("admin {} written to {}", admin.uuid, out.display());
            Ok(())
        }
        ServerCmd::AddPerm { config, code, scope } => {
            let cfg = Config::load(&config)?;
            let code = perm_code(&code)?;
            let store = open_store(&cfg)?;
            store.insert_perm_code(code, scope).map_err(anyhow::Error::from)?;
            store.sync().map_err(anyhow::Error::from)?;
            Ok(())
        }
        ServerCmd::Run { config, listen: over, keep_alive } => {
            let cfg = Config::load(&config)?;
            let server = load_credential(&cfg.server_key, CredentialKind::Server)?;
            if server.suite != cfg.suite {
                return Err(Failure::new(
                    exit::USAGE,
                    anyhow!("server key is for {} but config says {}", server.suite, cfg.suite),
                ));
            }
            let store = Arc::new(open_store(&cfg)?);
            let ctx = ServerContext::new(provider(cfg.suite), server.signing_key, cfg.policy());
            let mut sc = ServerConfig::new(ctx, store, Arc::new(SystemClock));
            sc.max_frame = cfg.max_frame;
            sc.max_connections = cfg.max_connections;
            sc.idle_timeout = Some(cfg.idle_timeout);
            sc.keep_alive = keep_alive;
            let at = over.unwrap_or(cfg.listen);
            let handle = listen(at.as_str(), sc)?;
            info!("listening on {} ({})", handle.local_addr(), cfg.suite);
            println!("listening on {}", handle.local_addr());
            handle.join();
            Ok(())
        }
    }
}

fn random_uuid(p: &SharedProvider) -> [u8; 16] {
    let mut b = [0u8; 16];
    p.fill_random(&mut b);
    b[6] = (b[6] & 0x0f) | 0x40;
    b[8] = (b[8] & 0x3f) | 0x80;
    b
}

fn perm_code(hex_code: &str) -> Result<[u8; 15], Failure> {
    let bytes = hex::decode(hex_code).map_err(|e| Failure::new(exit::USAGE, anyhow!("permission code: {e}")))?;
    bytes
        .try_into()
        .map_err(|_| Failure::new(exit::USAGE, anyhow!("permission code must be 15 bytes")))
}

fn admin_cmd(cmd: AdminCmd) -> Outcome {
    match cmd {
        AdminCmd::Keygen { admin, out } => {
            let admin = load_credential(&admin, CredentialKind::Admin)?
                .into_admin()
                .map_err(anyhow::Error::from)?;
            let p = provider(admin.suite);
            let client = ClientIdentity {
                uuid: Uuid::from_bytes(random_uuid(&p)),
                signing_key: p.generate_signing_key().map_err(anyhow::Error::from)?,
                server_public_key: admin.server_public_key,
                time: Default::default(),
                suite: admin.suite,
            };
            save_client(&out, &client)?;
            println!("client {} key written to {}", client.uuid, out.display());
            Ok(())
        }
        AdminCmd::Register { admin, server, out, net } => {
            let admin = load_credential(&admin, CredentialKind::Admin)?
                .into_admin()
                .map_err(anyhow::Error::from)?;
            let p = provider(admin.suite);
            let (uuid, key) = if out.exists() {
                let c = load_client(&out)?;
                if c.suite != admin.suite {
                    return Err(Failure::new(exit::USAGE, anyhow!("{} is for another suite", out.display())));
                }
                (c.uuid, c.signing_key)
            } else {
                (Uuid::from_bytes(random_uuid(&p)), p.generate_signing_key().map_err(anyhow::Error::from)?)
            };
            let mut m = RegisterAdmin::new(Arc::clone(&p), &admin, uuid, key)?;
            let client = run_client(&mut m, addr(&server)?, net.timeout())??;
            save_client(&out, &client)?;
            println!("client {} registered", client.uuid);
            Ok(())
        }
    }
}

fn client_cmd(cmd: ClientCmd) -> Outcome {
    match cmd {
        ClientCmd::Cycle { credentials, server, net } => {
            let c = load_client(&credentials)?;
            let mut m = CycleClient::new(provider(c.suite), c)?;
            let r = run_client(&mut m, addr(&server)?, net.timeout())?;
            // Persist whatever the machine learned, including a resynced time.
            save_client(&credentials, m.identity())?;
            r?;
            println!("key cycled; protocol time 0");
            Ok(())
        }
        ClientCmd::Stamp { credentials, server, token_out, device, perm_code: code, net } => {
            let perms = match code {
                Some(h) => Permissions::code(perm_code(&h)?),
                None => Permissions::DISABLED,
            };
            let to = addr(&server)?;
            let mut c = load_client(&credentials)?;
            let p = provider(c.suite);
            let mut retried = false;
            let token = loop {
                let mut m = StampClient::new(Arc::clone(&p), c, device, perms)?;
                let r = run_client(&mut m, to, net.timeout());
                c = m.into_identity();
                save_client(&credentials, &c)?;
                match r? {
                    Ok(t) => break t,
                    Err(ProtocolError::BadTime { correct_time }) if !retried => {
                        warn!("protocol time resynchronized to {correct_time}; retrying once");
                        retried = true;
                    }
                    Err(e) => return Err(e.into()),
                }
            };
            let path = token_out.unwrap_or_else(|| default_token_path(&credentials));
            credentials::write_private(&path, &token.bytes()).with_context(|| format!("writing {}", path.display()))?;
            println!("token time {} written to {}", token.token.time, path.display());
            Ok(())
        }
        ClientCmd::Check { token, credentials, server, net } => {
            let path = match (token, credentials) {
                (Some(t), _) => t,
                (None, Some(c)) => default_token_path(&c),
                (None, None) => return Err(Failure::new(exit::USAGE, anyhow!("pass --token or --credentials"))),
            };
            let bytes = std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
            let token: [u8; TOKEN_LEN] = bytes
                .try_into()
                .map_err(|b: Vec<u8>| Failure::new(exit::USAGE, anyhow!("token file holds {} bytes, not 74", b.len())))?;
            let mut m = CheckClient::new(token);
            let reply = run_client(&mut m, addr(&server)?, net.timeout())??;
            println!("{:?}", reply.status);
            if reply.status != CheckStatus::Valid {
                return Err(Failure::new(exit::CHECK_INVALID, anyhow!("token is {:?}", reply.status)));
            }
            Ok(())
        }
    }
}

fn attack(path: &Path) -> Outcome {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let scenario = Scenario::parse(&text).map_err(|e| Failure::new(exit::USAGE, anyhow!("{}: {e}", path.display())))?;
    let out = run_scenario(&scenario);
    for (i, step) in out.steps.iter().enumerate() {
        println!("step {i}: {:?} -> {}", step.action, describe(&step.result));
    }
    println!("tokens stored: {}", out.tokens.len());
    match assert_secrecy(&out) {
        Ok(()) => println!("secrecy: holds for {} sessions", out.sessions.len()),
        Err(w) => println!("secrecy: session {} derivable via {:?}", w.session, w.provenance),
    }
    for e in &out.expectations {
        println!("{} {:?} {}", if e.passed { "PASS" } else { "FAIL" }, e.expect, e.detail);
    }
    if out.passed() {
        Ok(())
    } else {
        Err(Failure::new(exit::ATTACK, anyhow!("scenario expectations not met")))
    }
}

fn describe(r: &pqtoken::adversary::StepResult) -> String {
    use pqtoken::adversary::StepResult;
    match r {
        StepResult::Ok(_) => "ok".into(),
        StepResult::Failed { code: Some(c), reason } => format!("rejected {c} ({reason})"),
        StepResult::Failed { code: None, reason } => format!("failed ({reason})"),
    }
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Server(c) => server_cmd(c),
        Command::Admin(c) => admin_cmd(c),
        Command::Client(c) => client_cmd(c),
        Command::Attack { scenario } => attack(&scenario),
        Command::Bench { device_report, runs, level, format } => {
            if runs < 2 {
                return Err(Failure::new(exit::USAGE, anyhow!("--runs must be at least 2")));
            }
            let device = if device_report { bench::device_name() } else { "local".to_string() };
            let rows = bench::run(provider(level), &device, runs).map_err(anyhow::Error::from)?;
            match format {
                Format::Csv => print!("{}", bench::to_csv(&rows)),
                Format::Table => print!("{}", bench::to_table(&rows)),
            }
            Ok(())
        }
        Command::Overhead { level, alpha, beta, gamma, hours, format } => {
            let w = Workload::new(alpha, beta, gamma, hours).map_err(|e| Failure::new(exit::USAGE, e))?;
            let report = Report::new(level, w);
            match format {
                Format::Csv => print!("{}", report.to_csv()),
                Format::Table => print!("{}", report.to_table()),
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
