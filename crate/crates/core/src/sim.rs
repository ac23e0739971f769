//! One complete transfer between the reference client and server across an
//! emulated channel, driven by a virtual clock.

use alloc::collections::BinaryHeap;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cc::Algorithm;
use crate::endpoint::{ClientOutcome, Receiver, SenderStats, Server};
use crate::linkem::{Channel, Direction, DirectionStats, PacketFate};
use crate::scenarios::{ScenarioError, ScenarioSpec};
use crate::trace::{to_ns, Fate, PacketRecord, RunIdentity, Tap, Trace};
use crate::wire::{annotate, WirePacket};

/// Name under which the simulated server offers the file.
pub const FILE_NAME: &str = "file";

/// Stream tweaks keeping file content, connection id and channel randomness
/// independent for one run seed.
const CONTENT_STREAM: u64 = 0x636f_6e74_656e_7400;

/// Random file content for a run, derived from its seed.
pub fn file_content(seed: u64, size: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ CONTENT_STREAM);
    let mut v = alloc::vec![0u8; size as usize];
    rng.fill_bytes(&mut v);
    v
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub server_algorithm: Algorithm,
    pub seed: u64,
    pub identity: RunIdentity,
    /// Requested name; anything but [`FILE_NAME`] is answered with an error.
    pub request: alloc::string::String,
    pub record_window: bool,
}

impl SimConfig {
    pub fn new(server_algorithm: Algorithm, seed: u64) -> Self {
        Self {
            server_algorithm,
            seed,
            identity: RunIdentity {
                seed,
                ..RunIdentity::default()
            },
            request: FILE_NAME.into(),
            record_window: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimEnd {
    /// The client finished (any outcome) before the deadline.
    ClientDone,
    /// The scenario timeout elapsed first.
    TimedOut,
    /// Neither side has anything left to do.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct SimResult {
    pub end: SimEnd,
    /// Virtual time at which the simulation stopped.
    pub end_time: f64,
    pub client: Option<ClientOutcome>,
    pub served: Arc<[u8]>,
    pub trace: Trace,
    pub sender: SenderStats,
    pub window_log: Vec<(f64, f64)>,
    pub forward: DirectionStats,
    pub reverse: DirectionStats,
    /// Server packet numbers the channel dropped, in send order.
    pub dropped_forward: Vec<u64>,
}

struct InFlight {
    at: f64,
    seq: u64,
    dir: Direction,
    bytes: Vec<u8>,
}

impl PartialEq for InFlight {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for InFlight {}
impl PartialOrd for InFlight {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for InFlight {
    // min-heap on (time, seq)
    fn cmp(&self, other: &Self) -> Ordering {
        other.at.total_cmp(&self.at).then(other.seq.cmp(&self.seq))
    }
}

struct Sim {
    channel: Channel,
    heap: BinaryHeap<InFlight>,
    seq: u64,
    trace: Trace,
    dropped_forward: Vec<u64>,
}

impl Sim {
    fn send(&mut self, dir: Direction, pkt: &WirePacket, now: f64) {
        let bytes = pkt.to_bytes();
        let fate = self
            .channel
            .offer(dir, bytes.len(), now)
            .expect("monotone virtual time, MTU-sized packets");
        let (tap, far) = match dir {
            Direction::Forward => (Tap::ServerSide, Tap::ClientSide),
            Direction::Reverse => (Tap::ClientSide, Tap::ServerSide),
        };
        let annotation = annotate(&bytes);
        let rec = PacketRecord {
            timestamp_ns: to_ns(now),
            tap,
            direction: dir,
            size: bytes.len() as u32,
            fate: Fate::from(fate),
            annotation,
        };
        self.trace.record(rec).expect("tap time is monotone");
        match fate {
            PacketFate::Delivered(at) => {
                let _ = far;
                self.seq += 1;
                self.heap.push(InFlight {
                    at,
                    seq: self.seq,
                    dir,
                    bytes,
                });
            }
            _ if dir == Direction::Forward => self.dropped_forward.push(pkt.packet_number),
            _ => {}
        }
    }

    fn arrive(&mut self, f: &InFlight) -> WirePacket {
        let tap = match f.dir {
            Direction::Forward => Tap::ClientSide,
            Direction::Reverse => Tap::ServerSide,
        };
        let rec = PacketRecord {
            timestamp_ns: to_ns(f.at),
            tap,
            direction: f.dir,
            size: f.bytes.len() as u32,
            fate: Fate::Delivered,
            annotation: annotate(&f.bytes),
        };
        self.trace.record(rec).expect("tap time is monotone");
        WirePacket::decode(&f.bytes).expect("endpoints emit valid packets")
    }
}

/// Runs one transfer of `spec.file_size` bytes until the client finishes or
/// `spec.timeout_s` of virtual time elapses.
pub fn simulate_transfer(spec: &ScenarioSpec, cfg: &SimConfig) -> Result<SimResult, ScenarioError> {
    let channel = Channel::new(spec, cfg.seed)?;
    let served: Arc<[u8]> = file_content(cfg.seed, spec.file_size).into();
    let conn_id = (cfg.seed ^ (cfg.seed >> 32)) as u32;

    let mut server = Server::new(cfg.server_algorithm);
    server.add_file(FILE_NAME, served.clone());
    if cfg.record_window {
        server.record_windows();
    }
    let mut client = Receiver::new(conn_id, &cfg.request);
    let mut sim = Sim {
        channel,
        heap: BinaryHeap::new(),
        seq: 0,
        trace: Trace::new(cfg.identity.clone()),
        dropped_forward: Vec::new(),
    };
    sim.trace
        .meta
        .insert("file_size".into(), alloc::format!("{}", spec.file_size));
    sim.trace.meta.insert(
        "forward_rate".into(),
        alloc::format!("{}", spec.forward.data_rate),
    );

    let deadline = spec.timeout_s;
    let mut now = 0.0;
    let mut idle_wakeups = 0u32;
    let end = loop {
        loop {
            let mut sent = false;
            while let Some(p) = client.poll_transmit(now) {
                sim.send(Direction::Reverse, &p, now);
                sent = true;
            }
            while let Some(p) = server.poll_transmit(now) {
                sim.send(Direction::Forward, &p, now);
                sent = true;
            }
            if !sent {
                break;
            }
        }
        if client.is_done() {
            break SimEnd::ClientDone;
        }
        let next = [
            sim.heap.peek().map(|f| f.at),
            client.poll_timeout(),
            server.poll_timeout(),
        ]
        .into_iter()
        .flatten()
        .min_by(f64::total_cmp);
        let Some(next) = next else {
            break SimEnd::Stalled;
        };
        if next > deadline {
            now = deadline;
            break SimEnd::TimedOut;
        }
        // A wakeup that neither advances time nor moves a packet would spin
        // forever; bail out instead of hanging the harness.
        if next <= now && sim.heap.peek().is_none_or(|f| f.at > now) {
            idle_wakeups += 1;
            if idle_wakeups > 1000 {
                break SimEnd::Stalled;
            }
        } else {
            idle_wakeups = 0;
        }
        now = next.max(now);
        while sim.heap.peek().is_some_and(|f| f.at <= now) {
            let f = sim.heap.pop().expect("peeked");
            let pkt = sim.arrive(&f);
            match f.dir {
                Direction::Forward => client.handle_packet(now, &pkt),
                Direction::Reverse => server.handle_packet(now, &pkt),
            }
        }
        client.handle_timeout(now);
        server.handle_timeout(now);
    };

    let (sender, window_log) = server
        .connection(conn_id)
        .map(|s| (s.stats().clone(), s.window_log().to_vec()))
        .unwrap_or_default();
    Ok(SimResult {
        end,
        end_time: now,
        client: client.take_outcome(),
        served,
        forward: sim.channel.stats(Direction::Forward),
        reverse: sim.channel.stats(Direction::Reverse),
        trace: sim.trace,
        sender,
        window_log,
        dropped_forward: sim.dropped_forward,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::compute_outcome_metrics;
    use crate::scenarios::builtin;

    fn small(name: &str, size: u64) -> ScenarioSpec {
        let mut s = builtin(name).unwrap();
        s.file_size = size;
        s
    }

    #[test]
    fn terr_small_transfer_completes() {
        let spec = small("TERR", 500_000);
        let r = simulate_transfer(&spec, &SimConfig::new(Algorithm::NewReno, 1)).unwrap();
        assert_eq!(r.end, SimEnd::ClientDone);
        match r.client {
            Some(ClientOutcome::Complete { data }) => assert_eq!(&data[..], &r.served[..]),
            other => panic!("unexpected {other:?}"),
        }
        let m = compute_outcome_metrics(&r.trace, spec.file_size, spec.forward.data_rate).unwrap();
        assert!(m.efficiency > 0.0 && m.efficiency <= 1.0);
    }

    #[test]
    fn missing_file_is_refused() {
        let spec = small("TERR", 10_000);
        let mut cfg = SimConfig::new(Algorithm::Cubic, 2);
        cfg.request = "other".into();
        let r = simulate_transfer(&spec, &cfg).unwrap();
        assert_eq!(r.client, Some(ClientOutcome::Refused { code: 1 }));
        assert_eq!(r.sender.data_packets, 0);
    }

    #[test]
    fn lossy_transfer_tiles_file() {
        let spec = small("SATL", 300_000);
        let r = simulate_transfer(&spec, &SimConfig::new(Algorithm::Cubic, 3)).unwrap();
        match r.client {
            Some(ClientOutcome::Complete { data }) => assert_eq!(&data[..], &r.served[..]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn deterministic() {
        let spec = small("SATL", 200_000);
        let a = simulate_transfer(&spec, &SimConfig::new(Algorithm::NewReno, 9)).unwrap();
        let b = simulate_transfer(&spec, &SimConfig::new(Algorithm::NewReno, 9)).unwrap();
        assert_eq!(a.trace, b.trace);
    }
}
