//! Per-role operation timings for register, cycle, stamp and verify.
//!
//! Each action runs in process against a [`LocalServer`]. Time spent inside
//! the server's machines is charged to the server row; the rest of the
//! action (machine construction, key generation, reply processing) is charged
//! to the client row. Clients have no verify cost beyond transmission, so no
//! client verify row is produced.

use std::fmt::{self, Write as _};
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::deployment::{Deployment, DeploymentError};
use crate::protocol::{CycleClient, Policy, ProtocolError, RegisterAdmin, StampClient, StateMachine};
use crate::crypto::SharedProvider;
use crate::token::Permissions;
use crate::transport::{serve_request, Link, LocalServer, TransportError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Client,
    Server,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operation {
    Register,
    Cycle,
    Stamp,
    Verify,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Client => "Client",
            Role::Server => "Server",
        })
    }
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Operation::Register => "Register",
            Operation::Cycle => "Cycle",
            Operation::Stamp => "Stamp",
            Operation::Verify => "Verify",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub device: String,
    pub role: Role,
    pub operation: Operation,
    pub mean_ms: f64,
    pub std_ms: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Deployment(#[from] DeploymentError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("verify returned status {0:?}")]
    Verify(crate::wire::CheckStatus),
}

/// Mean and sample standard deviation in milliseconds.
pub fn summarize(samples: &[Duration]) -> (f64, f64) {
    if samples.is_empty() {
        return (0.0, 0.0);
    }
    let ms: Vec<f64> = samples.iter().map(|d| d.as_secs_f64() * 1e3).collect();
    let n = ms.len() as f64;
    let mean = ms.iter().sum::<f64>() / n;
    if ms.len() < 2 {
        return (mean, 0.0);
    }
    let var = ms.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Best-effort CPU description for the device column.
pub fn device_name() -> String {
    std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split_once(':'))
                .map(|(_, v)| v.trim().to_string())
        })
        .unwrap_or_else(|| format!("{}-{}", std::env::consts::ARCH, std::env::consts::OS))
}

struct TimedLink {
    inner: LocalServer,
    server: Duration,
}

impl<M> Link<M> for TimedLink
where
    M: StateMachine<Input = Vec<u8>, Transmit = Vec<u8>>,
{
    fn service(&mut self, t: Vec<u8>) -> Result<Option<Vec<u8>>, TransportError> {
        let start = Instant::now();
        let r = <LocalServer as Link<M>>::service(&mut self.inner, t);
        self.server += start.elapsed();
        r
    }

    fn wait(&mut self) -> Result<Vec<u8>, TransportError> {
        <LocalServer as Link<M>>::wait(&mut self.inner)
    }
}

#[derive(Default)]
struct Samples {
    client: Vec<Duration>,
    server: Vec<Duration>,
}

impl Samples {
    fn push(&mut self, total: Duration, server: Duration) {
        self.client.push(total.saturating_sub(server));
        self.server.push(server);
    }
}

/// Runs every action `runs` times and returns one row per (role, operation).
pub fn run(provider: SharedProvider, device: &str, runs: usize) -> Result<Vec<BenchRow>, BenchError> {
    let d = Deployment::new(Arc::clone(&provider), Policy::default())?;
    let mut register = Samples::default();
    let mut cycle = Samples::default();
    let mut stamp = Samples::default();
    let mut verify = Vec::with_capacity(runs);

    for _ in 0..runs {
        let mut link = TimedLink { inner: d.local(), server: Duration::ZERO };
        let start = Instant::now();
        let key = provider.generate_signing_key().map_err(DeploymentError::from)?;
        let mut m = RegisterAdmin::new(Arc::clone(&provider), &d.admin, d.new_uuid(), key)?;
        let client = crate::transport::drive(&mut m, &mut link)??;
        register.push(start.elapsed(), link.server);

        let mut link = TimedLink { inner: d.local(), server: Duration::ZERO };
        let start = Instant::now();
        let mut m = CycleClient::new(Arc::clone(&provider), client)?;
        crate::transport::drive(&mut m, &mut link)??;
        cycle.push(start.elapsed(), link.server);
        let client = m.into_identity();

        let mut link = TimedLink { inner: d.local(), server: Duration::ZERO };
        let start = Instant::now();
        let mut m = StampClient::new(Arc::clone(&provider), client, 0, Permissions::DISABLED)?;
        let token = crate::transport::drive(&mut m, &mut link)??;
        stamp.push(start.elapsed(), link.server);

        let clock = d.shared_clock();
        let start = Instant::now();
        let (reply, _) = serve_request(&d.ctx, &d.store, &clock, token.bytes().to_vec());
        verify.push(start.elapsed());
        let status = reply
            .and_then(|r| crate::wire::CheckReply::decode(&r).ok())
            .map(|r| r.status);
        if status != Some(crate::wire::CheckStatus::Valid) {
            return Err(BenchError::Verify(status.unwrap_or(crate::wire::CheckStatus::Malformed)));
        }
    }

    let row = |role, operation, samples: &[Duration]| {
        let (mean_ms, std_ms) = summarize(samples);
        BenchRow { device: device.to_string(), role, operation, mean_ms, std_ms }
    };
    Ok(vec![
        row(Role::Client, Operation::Cycle, &cycle.client),
        row(Role::Client, Operation::Register, &register.client),
        row(Role::Client, Operation::Stamp, &stamp.client),
        row(Role::Server, Operation::Cycle, &cycle.server),
        row(Role::Server, Operation::Register, &register.server),
        row(Role::Server, Operation::Stamp, &stamp.server),
        row(Role::Server, Operation::Verify, &verify),
    ])
}

pub fn find(rows: &[BenchRow], role: Role, operation: Operation) -> Option<&BenchRow> {
    rows.iter().find(|r| r.role == role && r.operation == operation)
}

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("device,role,operation,mean_ms,std_ms\n");
    for r in rows {
        let _ = writeln!(
            out,
            "\"{}\",{},{},{:.6},{:.6}",
            r.device.replace('"', "'"),
            r.role,
            r.operation,
            r.mean_ms,
            r.std_ms
        );
    }
    out
}

pub fn to_table(rows: &[BenchRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<8} {:<10} {:>22}", "Role", "Operation", "Time (ms)");
    for r in rows {
        let _ = writeln!(
            out,
            "{:<8} {:<10} {:>22}",
            r.role.to_string(),
            r.operation.to_string(),
            format!("{:.4} ± {:.4}", r.mean_ms, r.std_ms)
        );
    }
    out
}
