//! Wall-clock driver for the link emulator: a UDP relay between client and
//! server that applies the channel model and captures both taps.

use std::cmp::Ordering as CmpOrdering;
use std::collections::BinaryHeap;
use std::io;
use std::net::{SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use satqic_core::linkem::{Channel, Direction, PacketFate};
use satqic_core::scenarios::ScenarioSpec;
use satqic_core::trace::{to_ns, Fate, PacketRecord, RunIdentity, Tap, Trace};
use satqic_core::wire::annotate;

const POLL: Duration = Duration::from_millis(10);

struct Due {
    at: f64,
    seq: u64,
    dir: Direction,
    bytes: Vec<u8>,
}

impl PartialEq for Due {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == CmpOrdering::Equal
    }
}
impl Eq for Due {}
impl PartialOrd for Due {
    fn partial_cmp(&self, o: &Self) -> Option<CmpOrdering> {
        Some(self.cmp(o))
    }
}
impl Ord for Due {
    fn cmp(&self, o: &Self) -> CmpOrdering {
        o.at.total_cmp(&self.at).then(o.seq.cmp(&self.seq))
    }
}

pub struct Relay {
    client_facing: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: JoinHandle<Trace>,
    readers: Vec<JoinHandle<()>>,
}

impl Relay {
    /// Address clients should use as the server address.
    pub fn client_facing_addr(&self) -> SocketAddr {
        self.client_facing
    }

    /// Stops relaying and returns the captured trace.
    pub fn finish(self) -> Trace {
        self.stop.store(true, Ordering::SeqCst);
        for r in self.readers {
            let _ = r.join();
        }
        self.thread.join().expect("relay thread panicked")
    }
}

fn reader(
    socket: UdpSocket,
    dir: Direction,
    tx: mpsc::Sender<(Direction, Vec<u8>, SocketAddr)>,
    stop: Arc<AtomicBool>,
) {
    let mut buf = vec![0u8; 65536];
    while !stop.load(Ordering::SeqCst) {
        match socket.recv_from(&mut buf) {
            Ok((n, from)) => {
                if tx.send((dir, buf[..n].to_vec(), from)).is_err() {
                    return;
                }
            }
            Err(e)
                if matches!(
                    e.kind(),
                    io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut
                ) => {}
            Err(_) => {}
        }
    }
}

/// Starts a relay forwarding to `server`. Datagrams from the server go back
/// to whichever client address sent last.
pub fn start(
    spec: &ScenarioSpec,
    seed: u64,
    server: SocketAddr,
    identity: RunIdentity,
) -> io::Result<Relay> {
    let mut channel = Channel::new(spec, seed)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e.to_string()))?;
    let client_side = UdpSocket::bind("127.0.0.1:0")?;
    let server_side = UdpSocket::bind("127.0.0.1:0")?;
    client_side.set_read_timeout(Some(POLL))?;
    server_side.set_read_timeout(Some(POLL))?;
    let client_facing = client_side.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let (tx, rx) = mpsc::channel();
    let readers = vec![
        {
            let (s, tx, stop) = (client_side.try_clone()?, tx.clone(), stop.clone());
            std::thread::spawn(move || reader(s, Direction::Reverse, tx, stop))
        },
        {
            let (s, stop) = (server_side.try_clone()?, stop.clone());
            std::thread::spawn(move || reader(s, Direction::Forward, tx, stop))
        },
    ];
    let flag = stop.clone();
    let mut trace = Trace::new(identity);
    trace
        .meta
        .insert("file_size".into(), spec.file_size.to_string());
    trace
        .meta
        .insert("forward_rate".into(), spec.forward.data_rate.to_string());
    let thread = std::thread::spawn(move || {
        let start = Instant::now();
        let mut heap: BinaryHeap<Due> = BinaryHeap::new();
        let mut seq = 0;
        let mut client_peer: Option<SocketAddr> = None;
        loop {
            let now = start.elapsed().as_secs_f64();
            let wait = heap
                .peek()
                .map(|d| Duration::from_secs_f64((d.at - now).max(0.0)).min(POLL))
                .unwrap_or(POLL);
            match rx.recv_timeout(wait) {
                Ok((dir, bytes, from)) => {
                    if dir == Direction::Reverse {
                        client_peer = Some(from);
                    }
                    let now = start.elapsed().as_secs_f64();
                    // oversize datagrams cannot cross the emulated link
                    if let Ok(fate) = channel.offer(dir, bytes.len(), now) {
                        let tap = if dir == Direction::Forward {
                            Tap::ServerSide
                        } else {
                            Tap::ClientSide
                        };
                        let _ = trace.record(PacketRecord {
                            timestamp_ns: to_ns(now),
                            tap,
                            direction: dir,
                            size: bytes.len() as u32,
                            fate: Fate::from(fate),
                            annotation: annotate(&bytes),
                        });
                        if let PacketFate::Delivered(at) = fate {
                            seq += 1;
                            heap.push(Due {
                                at,
                                seq,
                                dir,
                                bytes,
                            });
                        }
                    }
                }
                Err(mpsc::RecvTimeoutError::Timeout) => {}
                Err(mpsc::RecvTimeoutError::Disconnected) => break,
            }
            let now = start.elapsed().as_secs_f64();
            while heap.peek().is_some_and(|d| d.at <= now) {
                let d = heap.pop().expect("peeked");
                let (tap, sent) = match d.dir {
                    Direction::Forward => (
                        Tap::ClientSide,
                        client_peer.map(|p| client_side.send_to(&d.bytes, p)),
                    ),
                    Direction::Reverse => {
                        (Tap::ServerSide, Some(server_side.send_to(&d.bytes, server)))
                    }
                };
                if matches!(sent, Some(Ok(_))) {
                    let _ = trace.record(PacketRecord {
                        timestamp_ns: to_ns(start.elapsed().as_secs_f64()),
                        tap,
                        direction: d.dir,
                        size: d.bytes.len() as u32,
                        fate: Fate::Delivered,
                        annotation: annotate(&d.bytes),
                    });
                }
            }
            if flag.load(Ordering::SeqCst) {
                break;
            }
        }
        trace
    });
    Ok(Relay {
        client_facing,
        stop,
        thread,
        readers,
    })
}
