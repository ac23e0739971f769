//! Planning and executing the scenario x client x server matrix.

use std::collections::{BTreeMap, HashSet};
use std::io;
use std::net::{SocketAddr, UdpSocket};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use satqic_core::analysis::{self, compute_outcome_metrics, Status, TransferOutcome};
use satqic_core::cc::Algorithm;
use satqic_core::endpoint::ClientOutcome;
use satqic_core::results::{Cell, ResultMatrix, RunResult, ScenarioResults};
use satqic_core::scenarios::ScenarioSpec;
use satqic_core::sim::{self, simulate_transfer, SimConfig};
use satqic_core::trace::{RunIdentity, Trace};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::capture::{self, sha256_hex};
use crate::refendpoint;
use crate::relay;
use crate::results::FORMAT_VERSION;

/// Name of the served file in external-endpoint runs.
pub const SERVED_FILE: &str = "data.bin";
/// Grace period for a server process to come up before the client starts.
const SERVER_STARTUP: Duration = Duration::from_millis(300);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EndpointKind {
    Builtin(Algorithm),
    External {
        command: String,
        workdir: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EndpointSpec {
    pub name: String,
    pub kind: EndpointKind,
}

impl EndpointSpec {
    pub fn builtin(algorithm: Algorithm) -> Self {
        Self {
            name: algorithm.name().into(),
            kind: EndpointKind::Builtin(algorithm),
        }
    }

    pub fn external(name: &str, command: &str) -> Self {
        Self {
            name: name.into(),
            kind: EndpointKind::External {
                command: command.into(),
                workdir: None,
            },
        }
    }

    pub fn algorithm(&self) -> Option<Algorithm> {
        match self.kind {
            EndpointKind::Builtin(a) => Some(a),
            EndpointKind::External { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("no {0} given")]
    Empty(&'static str),
    #[error("endpoint name {0:?} appears twice")]
    Duplicate(String),
    #[error("endpoint name {0:?} must be non-empty and use only letters, digits, '.', '_' or '-'")]
    BadName(String),
    #[error(
        "unknown endpoint {0:?} (built-ins: newreno, cubic, ratestartup; others need --external)"
    )]
    UnknownEndpoint(String),
    #[error("external endpoint must be given as name=command, got {0:?}")]
    BadExternal(String),
}

fn valid_name(n: &str) -> bool {
    !n.is_empty()
        && n.chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
}

/// Parses `name=command` definitions of external endpoints.
pub fn parse_externals(defs: &[String]) -> Result<Vec<EndpointSpec>, PlanError> {
    defs.iter()
        .map(|d| {
            let (name, cmd) = d
                .split_once('=')
                .ok_or_else(|| PlanError::BadExternal(d.clone()))?;
            let (name, cmd) = (name.trim(), cmd.trim());
            if cmd.is_empty() {
                return Err(PlanError::BadExternal(d.clone()));
            }
            Ok(EndpointSpec::external(name, cmd))
        })
        .collect()
}

/// Maps names to endpoints: external definitions first, then built-ins.
pub fn resolve_endpoints(
    names: &[String],
    externals: &[EndpointSpec],
) -> Result<Vec<EndpointSpec>, PlanError> {
    names
        .iter()
        .map(|n| {
            if let Some(e) = externals.iter().find(|e| e.name == *n) {
                return Ok(e.clone());
            }
            n.parse::<Algorithm>()
                .map(EndpointSpec::builtin)
                .map_err(|_| PlanError::UnknownEndpoint(n.clone()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanEntry {
    /// Index into [`RunPlan::scenarios`].
    pub scenario: usize,
    pub client: usize,
    pub server: usize,
    pub iteration: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunPlan {
    pub scenarios: Vec<ScenarioSpec>,
    pub clients: Vec<EndpointSpec>,
    pub servers: Vec<EndpointSpec>,
    pub shuffle_seed: u64,
    pub entries: Vec<PlanEntry>,
}

impl RunPlan {
    pub fn identity(&self, e: &PlanEntry) -> RunIdentity {
        RunIdentity {
            scenario: self.scenarios[e.scenario].name.clone(),
            client: self.clients[e.client].name.clone(),
            server: self.servers[e.server].name.clone(),
            iteration: e.iteration,
            seed: e.seed,
        }
    }
}

/// Per-run seed from the shuffle seed and the run's coordinates.
pub fn derive_seed(
    shuffle_seed: u64,
    scenario: &str,
    client: &str,
    server: &str,
    iteration: u32,
) -> u64 {
    let mut h = Sha256::new();
    h.update(b"satqic-run\0");
    h.update(shuffle_seed.to_le_bytes());
    for part in [scenario, client, server] {
        h.update(part.as_bytes());
        h.update([0]);
    }
    h.update(iteration.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

fn check_names(eps: &[EndpointSpec], what: &'static str) -> Result<(), PlanError> {
    if eps.is_empty() {
        return Err(PlanError::Empty(what));
    }
    let mut seen = HashSet::new();
    for e in eps {
        if !valid_name(&e.name) {
            return Err(PlanError::BadName(e.name.clone()));
        }
        if !seen.insert(&e.name) {
            return Err(PlanError::Duplicate(e.name.clone()));
        }
    }
    Ok(())
}

/// Full cross product with each scenario's iteration count, in a seeded
/// random order.
pub fn plan(
    scenarios: &[ScenarioSpec],
    clients: &[EndpointSpec],
    servers: &[EndpointSpec],
    shuffle_seed: u64,
) -> Result<RunPlan, PlanError> {
    if scenarios.is_empty() {
        return Err(PlanError::Empty("scenarios"));
    }
    check_names(clients, "clients")?;
    check_names(servers, "servers")?;
    let mut seen = HashSet::new();
    for s in scenarios {
        if !seen.insert(&s.name) {
            return Err(PlanError::Duplicate(s.name.clone()));
        }
    }
    let mut entries = Vec::new();
    for (si, s) in scenarios.iter().enumerate() {
        for (ci, c) in clients.iter().enumerate() {
            for (vi, v) in servers.iter().enumerate() {
                for it in 0..s.iterations {
                    entries.push(PlanEntry {
                        scenario: si,
                        client: ci,
                        server: vi,
                        iteration: it,
                        seed: derive_seed(shuffle_seed, &s.name, &c.name, &v.name, it),
                    });
                }
            }
        }
    }
    entries.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
    Ok(RunPlan {
        scenarios: scenarios.to_vec(),
        clients: clients.to_vec(),
        servers: servers.to_vec(),
        shuffle_seed,
        entries,
    })
}

/// Failure outcome with the wire accounting the trace still supports.
pub fn failure_outcome(status: Status, trace: &Trace, spec: &ScenarioSpec) -> TransferOutcome {
    let (fwd, rev) = analysis::wire_bytes(trace);
    TransferOutcome {
        wire_bytes_forward: fwd,
        wire_bytes_reverse: rev,
        redundancy_factor: trace
            .is_annotated()
            .then(|| analysis::redundancy_factor(trace, spec.file_size)),
        ..TransferOutcome::failure(status)
    }
}

/// Outcome of one run from its observable results. `elapsed` and `timeout`
/// are in seconds of the clock the run used.
pub fn classify_outcome(
    downloaded_sha256: Option<&str>,
    served_sha256: &str,
    elapsed: f64,
    timeout: f64,
    trace: &Trace,
    spec: &ScenarioSpec,
) -> TransferOutcome {
    if downloaded_sha256 == Some(served_sha256) && elapsed < timeout {
        return recompute_outcome(Status::Success, trace, spec);
    }
    let status = if elapsed >= timeout {
        Status::Timeout
    } else {
        Status::Error
    };
    failure_outcome(status, trace, spec)
}

/// Metrics of a run whose status is already known, from its trace alone.
/// A success whose trace does not show the completed file is an error.
pub fn recompute_outcome(status: Status, trace: &Trace, spec: &ScenarioSpec) -> TransferOutcome {
    if status != Status::Success {
        return failure_outcome(status, trace, spec);
    }
    match compute_outcome_metrics(trace, spec.file_size, spec.forward.data_rate) {
        Ok(m) => m.into_outcome(),
        Err(_) => failure_outcome(Status::Error, trace, spec),
    }
}

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error(transparent)]
    Capture(#[from] capture::CaptureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    /// Built-in pairs on the virtual clock, anything external over UDP.
    #[default]
    Auto,
    /// Everything over UDP through the wall-clock relay.
    Realtime,
}

/// Per-run callback: plan position, run identity, outcome.
pub type Progress<'a> = dyn FnMut(usize, &RunIdentity, &TransferOutcome) + 'a;

pub struct ExecOptions<'a> {
    pub out_dir: PathBuf,
    pub mode: Mode,
    /// Called after each run, in plan order.
    pub progress: Option<&'a mut Progress<'a>>,
}

impl ExecOptions<'_> {
    pub fn new(out_dir: &Path) -> Self {
        Self {
            out_dir: out_dir.to_path_buf(),
            mode: Mode::Auto,
            progress: None,
        }
    }
}

pub fn trace_rel_path(id: &RunIdentity) -> String {
    format!(
        "traces/{}/{}--{}/iter-{:02}.trace",
        id.scenario, id.client, id.server, id.iteration
    )
}

/// Runs every plan entry in order and assembles the result matrix. Endpoint
/// failures become outcomes; only harness-side I/O errors abort.
pub fn execute(plan: &RunPlan, mut opts: ExecOptions<'_>) -> Result<ResultMatrix, ExecError> {
    let mut runs: BTreeMap<(usize, usize, usize), Vec<RunResult>> = BTreeMap::new();
    for (i, entry) in plan.entries.iter().enumerate() {
        let id = plan.identity(entry);
        let spec = &plan.scenarios[entry.scenario];
        let client = &plan.clients[entry.client];
        let server = &plan.servers[entry.server];
        let (outcome, trace) = match (client.algorithm(), server.algorithm(), opts.mode) {
            (Some(_), Some(algo), Mode::Auto) => run_simulated(spec, algo, &id),
            _ => {
                let work = opts.out_dir.join("work").join(format!(
                    "{}/{}--{}/iter-{:02}",
                    id.scenario, id.client, id.server, id.iteration
                ));
                run_realtime(spec, client, server, &id, &work)
            }
        };
        let rel = trace_rel_path(&id);
        capture::write_trace(&trace, &opts.out_dir.join(&rel))?;
        if let Some(cb) = opts.progress.as_mut() {
            cb(i, &id, &outcome);
        }
        runs.entry((entry.scenario, entry.client, entry.server))
            .or_default()
            .push(RunResult {
                iteration: entry.iteration,
                seed: entry.seed,
                outcome,
                trace_file: Some(rel),
            });
    }
    let scenarios = plan
        .scenarios
        .iter()
        .enumerate()
        .map(|(si, spec)| ScenarioResults {
            spec: spec.clone(),
            cells: (0..plan.clients.len())
                .flat_map(|ci| (0..plan.servers.len()).map(move |vi| (ci, vi)))
                .map(|(ci, vi)| {
                    let mut r = runs.remove(&(si, ci, vi)).unwrap_or_default();
                    r.sort_by_key(|x| x.iteration);
                    Cell {
                        client: plan.clients[ci].name.clone(),
                        server: plan.servers[vi].name.clone(),
                        runs: r,
                    }
                })
                .collect(),
        })
        .collect();
    Ok(ResultMatrix {
        version: FORMAT_VERSION.into(),
        shuffle_seed: plan.shuffle_seed,
        scenarios,
    })
}

/// Built-in pair on the virtual clock.
pub fn run_simulated(
    spec: &ScenarioSpec,
    server: Algorithm,
    id: &RunIdentity,
) -> (TransferOutcome, Trace) {
    let mut cfg = SimConfig::new(server, id.seed);
    cfg.identity = id.clone();
    let r = match simulate_transfer(spec, &cfg) {
        Ok(r) => r,
        Err(_) => {
            return (
                TransferOutcome::failure(Status::Error),
                Trace::new(id.clone()),
            )
        }
    };
    let served = sha256_hex(&r.served);
    let downloaded = match &r.client {
        Some(ClientOutcome::Complete { data }) => Some(sha256_hex(data)),
        _ => None,
    };
    let outcome = classify_outcome(
        downloaded.as_deref(),
        &served,
        r.end_time,
        spec.timeout_s,
        &r.trace,
        spec,
    );
    (outcome, r.trace)
}

fn free_udp_port() -> io::Result<SocketAddr> {
    UdpSocket::bind("127.0.0.1:0")?.local_addr()
}

fn spawn_external(
    command: &str,
    workdir: &Option<PathBuf>,
    env: &[(&str, String)],
    log: &Path,
) -> io::Result<Child> {
    let out = std::fs::File::create(log)?;
    let err = out.try_clone()?;
    let mut cmd = Command::new("sh");
    cmd.arg("-c")
        .arg(command)
        .stdin(Stdio::null())
        .stdout(out)
        .stderr(err);
    if let Some(dir) = workdir {
        cmd.current_dir(dir);
    }
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.spawn()
}

enum ServerSide {
    Builtin(refendpoint::ServerHandle),
    External(Child),
}

impl ServerSide {
    fn stop(self) {
        match self {
            ServerSide::Builtin(h) => {
                let _ = h.shutdown();
            }
            ServerSide::External(mut c) => {
                let _ = c.kill();
                let _ = c.wait();
            }
        }
    }
}

/// One run over real UDP sockets through the wall-clock relay, using the
/// endpoint directory contract for external processes.
pub fn run_realtime(
    spec: &ScenarioSpec,
    client: &EndpointSpec,
    server: &EndpointSpec,
    id: &RunIdentity,
    work: &Path,
) -> (TransferOutcome, Trace) {
    match try_run_realtime(spec, client, server, id, work) {
        Ok(r) => r,
        Err(_) => (
            TransferOutcome::failure(Status::Error),
            Trace::new(id.clone()),
        ),
    }
}

fn try_run_realtime(
    spec: &ScenarioSpec,
    client: &EndpointSpec,
    server: &EndpointSpec,
    id: &RunIdentity,
    work: &Path,
) -> io::Result<(TransferOutcome, Trace)> {
    let www = work.join("www");
    let downloads = work.join("downloads");
    let logs = work.join("logs");
    for d in [&www, &downloads, &logs] {
        std::fs::create_dir_all(d)?;
    }
    let content = sim::file_content(id.seed, spec.file_size);
    let served = sha256_hex(&content);
    std::fs::write(www.join(SERVED_FILE), &content)?;
    drop(content);
    let dir_env = |role: &str| {
        vec![
            ("ROLE", role.to_string()),
            ("WWW_DIR", www.display().to_string()),
            ("DOWNLOADS_DIR", downloads.display().to_string()),
            ("LOGS_DIR", logs.display().to_string()),
        ]
    };

    let (server_side, server_addr) = match &server.kind {
        EndpointKind::Builtin(algo) => {
            let h = refendpoint::serve(&www, "127.0.0.1:0".parse().expect("literal"), *algo)?;
            let a = h.local_addr();
            (ServerSide::Builtin(h), a)
        }
        EndpointKind::External { command, workdir } => {
            let addr = free_udp_port()?;
            let mut env = dir_env("server");
            env.push(("BIND_ADDR", addr.to_string()));
            let mut child = spawn_external(command, workdir, &env, &logs.join("server.log"))?;
            std::thread::sleep(SERVER_STARTUP);
            if child.try_wait()?.is_some() {
                let trace = Trace::new(id.clone());
                let outcome = classify_outcome(None, &served, 0.0, spec.timeout_s, &trace, spec);
                cleanup(&www, &downloads);
                return Ok((outcome, trace));
            }
            (ServerSide::External(child), addr)
        }
    };

    let relay = relay::start(spec, id.seed, server_addr, id.clone())?;
    let target = relay.client_facing_addr();
    let timeout = Duration::from_secs_f64(spec.timeout_s);
    let started = Instant::now();
    let client_ok = match &client.kind {
        EndpointKind::Builtin(_) => {
            let conn_id = (id.seed ^ (id.seed >> 32)) as u32;
            refendpoint::fetch(target, SERVED_FILE, &downloads, timeout, conn_id).is_ok()
        }
        EndpointKind::External { command, workdir } => {
            let mut env = dir_env("client");
            env.push(("REQUESTS", SERVED_FILE.to_string()));
            env.push(("SERVER_ADDR", target.to_string()));
            let mut child = spawn_external(command, workdir, &env, &logs.join("client.log"))?;
            loop {
                if let Some(status) = child.try_wait()? {
                    break status.success();
                }
                if started.elapsed() >= timeout {
                    let _ = child.kill();
                    let _ = child.wait();
                    break false;
                }
                std::thread::sleep(Duration::from_millis(5));
            }
        }
    };
    let elapsed = started.elapsed().as_secs_f64();
    server_side.stop();
    let trace = relay.finish();
    let file = downloads.join(SERVED_FILE);
    let downloaded = if client_ok && file.exists() {
        capture::file_sha256(&file).ok()
    } else {
        None
    };
    let outcome = classify_outcome(
        downloaded.as_deref(),
        &served,
        elapsed,
        spec.timeout_s,
        &trace,
        spec,
    );
    cleanup(&www, &downloads);
    Ok((outcome, trace))
}

/// Served and downloaded files can be large; logs are kept.
fn cleanup(www: &Path, downloads: &Path) {
    let _ = std::fs::remove_dir_all(www);
    let _ = std::fs::remove_dir_all(downloads);
}
