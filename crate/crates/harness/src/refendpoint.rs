//! The reference client and server on real UDP sockets, driven by the
//! wall clock.

use std::collections::HashMap;
use std::io;
use std::net::{SocketAddr, UdpSocket};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use satqic_core::cc::Algorithm;
use satqic_core::endpoint::{ClientOutcome, Receiver, Server};
use satqic_core::wire::{Body, WirePacket};
use satqic_core::MTU;
use thiserror::Error;

/// Longest a loop sleeps before re-checking its stop flag.
const MAX_IDLE: Duration = Duration::from_millis(20);

fn wait_for(deadline: Option<f64>, now: f64) -> Duration {
    match deadline {
        Some(d) if d > now => {
            Duration::from_secs_f64(d - now).clamp(Duration::from_micros(50), MAX_IDLE)
        }
        Some(_) => Duration::from_micros(50),
        None => MAX_IDLE,
    }
}

/// Accepts only plain file names so a request cannot escape the directory.
fn safe_name(name: &str) -> bool {
    !name.is_empty() && name != "." && name != ".." && !name.contains(['/', '\\', '\0'])
}

pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: JoinHandle<io::Result<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(self) -> io::Result<()> {
        self.stop.store(true, Ordering::SeqCst);
        self.thread
            .join()
            .unwrap_or_else(|_| Err(io::Error::other("server thread panicked")))
    }
}

/// Binds `bind` and serves files from `www_dir` on a background thread.
pub fn serve(www_dir: &Path, bind: SocketAddr, cca: Algorithm) -> io::Result<ServerHandle> {
    let socket = UdpSocket::bind(bind)?;
    let addr = socket.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    let dir = www_dir.to_path_buf();
    let thread = std::thread::spawn(move || serve_on(socket, &dir, cca, &flag));
    Ok(ServerHandle { addr, stop, thread })
}

/// Server loop on an already bound socket, until `stop` is set.
pub fn serve_on(
    socket: UdpSocket,
    www_dir: &Path,
    cca: Algorithm,
    stop: &AtomicBool,
) -> io::Result<()> {
    let start = Instant::now();
    let mut server = Server::new(cca);
    let mut peers: HashMap<u32, SocketAddr> = HashMap::new();
    let mut buf = [0u8; 2048];
    while !stop.load(Ordering::SeqCst) {
        let now = start.elapsed().as_secs_f64();
        socket.set_read_timeout(Some(wait_for(server.poll_timeout(), now)))?;
        match socket.recv_from(&mut buf) {
            Ok((n, from)) => {
                let now = start.elapsed().as_secs_f64();
                if let Ok(pkt) = WirePacket::decode(&buf[..n]) {
                    peers.insert(pkt.conn_id, from);
                    if let Body::Request { name } = &pkt.body {
                        if safe_name(name) {
                            if let Ok(content) = std::fs::read(www_dir.join(name)) {
                                server.add_file(name, content.into());
                            }
                        }
                    }
                    server.handle_packet(now, &pkt);
                }
            }
            Err(e)
                if matches!(
                    e.kind(),
                    io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut
                ) => {}
            // ICMP port unreachable from a departed client surfaces here
            Err(e) if e.kind() == io::ErrorKind::ConnectionRefused => {}
            Err(e) => return Err(e),
        }
        let now = start.elapsed().as_secs_f64();
        server.handle_timeout(now);
        while let Some(p) = server.poll_transmit(now) {
            if let Some(peer) = peers.get(&p.conn_id) {
                match socket.send_to(&p.to_bytes(), peer) {
                    Ok(_) => {}
                    Err(e) if e.kind() == io::ErrorKind::ConnectionRefused => {}
                    Err(e) => return Err(e),
                }
            }
        }
        for (id, _) in server.reap() {
            peers.remove(&id);
        }
    }
    Ok(())
}

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("no complete transfer within {0:?}")]
    Timeout(Duration),
    #[error("server closed the connection with code {0}")]
    Refused(u8),
    #[error("server closed the connection before the file was complete")]
    ProtocolViolation,
    #[error("invalid file name {0:?}")]
    BadName(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FetchReport {
    pub path: PathBuf,
    pub bytes: u64,
    /// Seconds from the first request to the byte that completed the file.
    pub time_to_completion: f64,
}

/// Downloads `name` from `server` into `downloads_dir`.
pub fn fetch(
    server: SocketAddr,
    name: &str,
    downloads_dir: &Path,
    timeout: Duration,
    conn_id: u32,
) -> Result<FetchReport, FetchError> {
    if !safe_name(name) {
        return Err(FetchError::BadName(name.into()));
    }
    let bind: SocketAddr = if server.is_ipv4() {
        "0.0.0.0:0"
    } else {
        "[::]:0"
    }
    .parse()
    .expect("literal address");
    let socket = UdpSocket::bind(bind)?;
    socket.connect(server)?;
    let start = Instant::now();
    let mut client = Receiver::new(conn_id, name);
    let mut buf = [0u8; MTU + 64];
    loop {
        let now = start.elapsed().as_secs_f64();
        while let Some(p) = client.poll_transmit(now) {
            match socket.send(&p.to_bytes()) {
                Ok(_) => {}
                Err(e) if e.kind() == io::ErrorKind::ConnectionRefused => {}
                Err(e) => return Err(e.into()),
            }
        }
        if client.is_done() {
            break;
        }
        if start.elapsed() >= timeout {
            return Err(FetchError::Timeout(timeout));
        }
        let remaining = timeout
            .saturating_sub(start.elapsed())
            .max(Duration::from_micros(50));
        socket.set_read_timeout(Some(wait_for(client.poll_timeout(), now).min(remaining)))?;
        match socket.recv(&mut buf) {
            Ok(n) => {
                if let Ok(pkt) = WirePacket::decode(&buf[..n]) {
                    client.handle_packet(start.elapsed().as_secs_f64(), &pkt);
                }
            }
            Err(e)
                if matches!(
                    e.kind(),
                    io::ErrorKind::WouldBlock
                        | io::ErrorKind::TimedOut
                        | io::ErrorKind::ConnectionRefused
                ) => {}
            Err(e) => return Err(e.into()),
        }
        client.handle_timeout(start.elapsed().as_secs_f64());
    }
    let completion = client.completion_time();
    match client.take_outcome() {
        Some(ClientOutcome::Complete { data }) => {
            std::fs::create_dir_all(downloads_dir)?;
            let path = downloads_dir.join(name);
            std::fs::write(&path, &data)?;
            Ok(FetchReport {
                path,
                bytes: data.len() as u64,
                time_to_completion: completion.unwrap_or(0.0),
            })
        }
        Some(ClientOutcome::Refused { code }) => Err(FetchError::Refused(code)),
        Some(ClientOutcome::ProtocolViolation) => Err(FetchError::ProtocolViolation),
        None => Err(FetchError::Timeout(timeout)),
    }
}
