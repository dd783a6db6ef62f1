//! Flat `key = value` server configuration.
//!
//! ```text
//! # comments start with '#'
//! suite = L1
//! listen = 127.0.0.1:7400
//! store = /var/lib/pqtoken/store.log
//! server_key = /var/lib/pqtoken/server.cred
//! key_lifetime = 7776000
//! token_ttl = 3600
//! max_time = 18446744073709551615
//! max_frame = 65536
//! max_connections = 256
//! idle_timeout = 30
//! ```
//!
//! Durations are whole seconds. `suite`, `store` and `server_key` are
//! required; everything else has a default.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Duration;

use pqtoken::frame::DEFAULT_MAX_FRAME;
use pqtoken::protocol::{Policy, DEFAULT_KEY_LIFETIME_SECS, DEFAULT_TOKEN_TTL_SECS};
use pqtoken::suite::SuiteId;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(n) => write!(f, "config line {n}: {}", self.message),
            None => write!(f, "config: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Config {
    pub suite: SuiteId,
    pub listen: String,
    pub store: PathBuf,
    pub server_key: PathBuf,
    pub key_lifetime_secs: u64,
    pub token_ttl_secs: u64,
    pub max_time: u64,
    pub max_frame: usize,
    pub max_connections: usize,
    pub idle_timeout: Duration,
}

fn err(line: Option<usize>, message: impl Into<String>) -> ConfigError {
    ConfigError { line, message: message.into() }
}

fn positive<T: std::str::FromStr + PartialEq + Default>(v: &str, key: &str, line: usize) -> Result<T, ConfigError> {
    let n: T = v.parse().map_err(|_| err(Some(line), format!("`{key}` must be a positive integer, got `{v}`")))?;
    if n == T::default() {
        return Err(err(Some(line), format!("`{key}` must be positive")));
    }
    Ok(n)
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut suite = None;
        let mut store = None;
        let mut server_key = None;
        let mut c = Config {
            suite: SuiteId::L1,
            listen: "127.0.0.1:7400".into(),
            store: PathBuf::new(),
            server_key: PathBuf::new(),
            key_lifetime_secs: DEFAULT_KEY_LIFETIME_SECS,
            token_ttl_secs: DEFAULT_TOKEN_TTL_SECS,
            max_time: u64::MAX,
            max_frame: DEFAULT_MAX_FRAME,
            max_connections: 256,
            idle_timeout: Duration::from_secs(30),
        };
        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(Some(n), format!("expected key = value, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "suite" => suite = Some(value.parse::<SuiteId>().map_err(|e| err(Some(n), e.to_string()))?),
                "listen" => c.listen = value.to_string(),
                "store" => store = Some(PathBuf::from(value)),
                "server_key" => server_key = Some(PathBuf::from(value)),
                "key_lifetime" => c.key_lifetime_secs = positive(value, key, n)?,
                "token_ttl" => c.token_ttl_secs = positive(value, key, n)?,
                "max_time" => c.max_time = positive(value, key, n)?,
                "max_frame" => c.max_frame = positive(value, key, n)?,
                "max_connections" => c.max_connections = positive(value, key, n)?,
                "idle_timeout" => c.idle_timeout = Duration::from_secs(positive(value, key, n)?),
                other => return Err(err(Some(n), format!("unknown key `{other}`"))),
            }
        }
        c.suite = suite.ok_or_else(|| err(None, "missing `suite`"))?;
        c.store = store.ok_or_else(|| err(None, "missing `store`"))?;
        c.server_key = server_key.ok_or_else(|| err(None, "missing `server_key`"))?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| err(None, format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn policy(&self) -> Policy {
        Policy {
            key_lifetime_secs: self.key_lifetime_secs,
            token_ttl_secs: self.token_ttl_secs,
            max_time: self.max_time,
        }
    }
}
