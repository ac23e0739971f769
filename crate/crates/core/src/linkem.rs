//! Userspace emulation of an asymmetric duplex link.
//!
//! Each direction has its own serialization rate, drop-tail queue (counted in
//! packets) and Bernoulli loss; both directions share one propagation delay.
//! The emulator is a pure function of its state and the offered packets: time
//! is passed in by the caller, so a virtual clock and a wall clock drive the
//! same code.
//!
//! Per offered packet the pipeline is fixed:
//!
//! 1. queue full -> [`PacketFate::DroppedQueueOverflow`]
//! 2. serialization starts once the packets ahead of it have drained
//! 3. one Bernoulli(plr) draw; a lost packet has still consumed link capacity
//! 4. otherwise delivered at serialization end plus the one-way delay

use alloc::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::scenarios::{ScenarioError, ScenarioSpec};
use crate::MTU;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LinkDirectionParams {
    /// Bits per second.
    pub data_rate: f64,
    /// Packets, including the one being serialized.
    pub queue_capacity: usize,
    pub plr: f64,
}

impl LinkDirectionParams {
    pub fn validate(&self, prefix: &'static str) -> Result<(), ScenarioError> {
        let field = |suffix: &'static str| match (prefix, suffix) {
            ("forward", "rate") => "forward.rate",
            ("forward", "queue") => "forward.queue",
            ("forward", _) => "forward.plr",
            (_, "rate") => "reverse.rate",
            (_, "queue") => "reverse.queue",
            _ => "reverse.plr",
        };
        if !(self.data_rate.is_finite() && self.data_rate > 0.0) {
            return Err(ScenarioError::Invalid {
                field: field("rate"),
                reason: "data rate must be positive",
            });
        }
        if self.queue_capacity == 0 {
            return Err(ScenarioError::Invalid {
                field: field("queue"),
                reason: "queue capacity must be at least one packet",
            });
        }
        if !(0.0..=1.0).contains(&self.plr) {
            return Err(ScenarioError::Invalid {
                field: field("plr"),
                reason: "plr out of range [0, 1]",
            });
        }
        Ok(())
    }

    /// Seconds needed to put `size` bytes on the wire.
    pub fn serialization_time(&self, size: usize) -> f64 {
        size as f64 * 8.0 / self.data_rate
    }
}

/// Forward is server to client (the download direction), reverse is client
/// to server.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    Forward,
    Reverse,
}

impl Direction {
    fn index(self) -> usize {
        match self {
            Direction::Forward => 0,
            Direction::Reverse => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PacketFate {
    /// Arrival time at the far end, in seconds.
    Delivered(f64),
    DroppedQueueOverflow,
    DroppedRandomLoss,
}

impl PacketFate {
    pub fn is_delivered(&self) -> bool {
        matches!(self, PacketFate::Delivered(_))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinkError {
    #[error("packet offered at {now}s but an earlier offer on this direction was at {last}s")]
    NonMonotoneTime { now: f64, last: f64 },
    #[error("datagram of {size} bytes exceeds the {MTU}-byte MTU")]
    Oversize { size: usize },
}

/// Per-direction fate counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DirectionStats {
    pub offered: u64,
    pub delivered: u64,
    pub dropped_overflow: u64,
    pub dropped_loss: u64,
    pub delivered_bytes: u64,
}

#[derive(Debug, Clone)]
struct DirectionState {
    params: LinkDirectionParams,
    /// Serialization finish times of packets still occupying the queue.
    in_queue: VecDeque<f64>,
    next_free: f64,
    last_offer: f64,
    rng: ChaCha8Rng,
    stats: DirectionStats,
}

impl DirectionState {
    fn new(params: LinkDirectionParams, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self {
            params,
            in_queue: VecDeque::new(),
            next_free: 0.0,
            last_offer: 0.0,
            rng,
            stats: DirectionStats::default(),
        }
    }

    fn drain(&mut self, now: f64) {
        while self.in_queue.front().is_some_and(|&finish| finish <= now) {
            self.in_queue.pop_front();
        }
    }
}

/// State of one emulated duplex link.
#[derive(Debug, Clone)]
pub struct Channel {
    dirs: [DirectionState; 2],
    one_way_delay: f64,
}

impl Channel {
    pub fn new(spec: &ScenarioSpec, seed: u64) -> Result<Self, ScenarioError> {
        spec.validate()?;
        Ok(Self {
            dirs: [
                DirectionState::new(spec.forward, seed, 0),
                DirectionState::new(spec.reverse, seed, 1),
            ],
            one_way_delay: spec.one_way_delay(),
        })
    }

    pub fn params(&self, dir: Direction) -> &LinkDirectionParams {
        &self.dirs[dir.index()].params
    }

    pub fn one_way_delay(&self) -> f64 {
        self.one_way_delay
    }

    pub fn stats(&self, dir: Direction) -> DirectionStats {
        self.dirs[dir.index()].stats
    }

    /// Earliest time the direction's transmitter is idle again.
    pub fn next_free_time(&self, dir: Direction) -> f64 {
        self.dirs[dir.index()].next_free
    }

    /// Packets whose serialization has not finished by `now`.
    pub fn queue_occupancy(&mut self, dir: Direction, now: f64) -> usize {
        let d = &mut self.dirs[dir.index()];
        d.drain(now);
        d.in_queue.len()
    }

    pub fn offer(
        &mut self,
        dir: Direction,
        size: usize,
        now: f64,
    ) -> Result<PacketFate, LinkError> {
        if size > MTU {
            return Err(LinkError::Oversize { size });
        }
        let delay = self.one_way_delay;
        let d = &mut self.dirs[dir.index()];
        if now < d.last_offer {
            return Err(LinkError::NonMonotoneTime {
                now,
                last: d.last_offer,
            });
        }
        d.last_offer = now;
        d.stats.offered += 1;
        d.drain(now);
        if d.in_queue.len() >= d.params.queue_capacity {
            d.stats.dropped_overflow += 1;
            return Ok(PacketFate::DroppedQueueOverflow);
        }
        let start = now.max(d.next_free);
        let finish = start + d.params.serialization_time(size);
        d.next_free = finish;
        d.in_queue.push_back(finish);
        if d.params.plr > 0.0 && d.rng.gen_bool(d.params.plr) {
            d.stats.dropped_loss += 1;
            return Ok(PacketFate::DroppedRandomLoss);
        }
        d.stats.delivered += 1;
        d.stats.delivered_bytes += size as u64;
        Ok(PacketFate::Delivered(finish + delay))
    }

    /// Round-trip time of a `probe_size` probe each way over an idle channel.
    pub fn measured_rtt(&self, probe_size: usize) -> f64 {
        let fwd = &self.dirs[0].params;
        let rev = &self.dirs[1].params;
        fwd.serialization_time(probe_size)
            + self.one_way_delay
            + rev.serialization_time(probe_size)
            + self.one_way_delay
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::builtin;
    use alloc::vec::Vec;

    #[test]
    fn sat_channel_parameters() {
        let ch = Channel::new(&builtin("SAT").unwrap(), 1).unwrap();
        assert_eq!(ch.params(Direction::Forward).data_rate, 20e6);
        assert_eq!(ch.params(Direction::Reverse).data_rate, 2e6);
        assert_eq!(ch.one_way_delay(), 0.3);
    }

    #[test]
    fn terr_channel_parameters() {
        let ch = Channel::new(&builtin("TERR").unwrap(), 1).unwrap();
        assert_eq!(ch.one_way_delay(), 0.015);
        assert_eq!(ch.params(Direction::Forward).queue_capacity, 25);
        assert_eq!(ch.params(Direction::Reverse).queue_capacity, 25);
    }

    #[test]
    fn invalid_spec_is_rejected() {
        let mut spec = builtin("SAT").unwrap();
        spec.forward.plr = 2.0;
        assert!(Channel::new(&spec, 1).is_err());
    }

    #[test]
    fn single_packet_on_idle_link() {
        let mut ch = Channel::new(&builtin("SAT").unwrap(), 1).unwrap();
        match ch.offer(Direction::Forward, 1500, 0.0).unwrap() {
            PacketFate::Delivered(t) => assert!((t - 0.3006).abs() < 1e-12),
            other => panic!("unexpected fate {other:?}"),
        }
    }

    #[test]
    fn drop_tail_overflow() {
        let mut ch = Channel::new(&builtin("TERR").unwrap(), 1).unwrap();
        let fates: Vec<_> = (0..26)
            .map(|_| ch.offer(Direction::Forward, 1500, 0.0).unwrap())
            .collect();
        assert!(fates[..25].iter().all(PacketFate::is_delivered));
        assert_eq!(fates[25], PacketFate::DroppedQueueOverflow);
        assert_eq!(ch.queue_occupancy(Direction::Forward, 0.0), 25);
    }

    #[test]
    fn queue_drains_over_time() {
        let mut ch = Channel::new(&builtin("TERR").unwrap(), 1).unwrap();
        for _ in 0..25 {
            ch.offer(Direction::Forward, 1500, 0.0).unwrap();
        }
        // 1500 B at 20 Mbit/s is 0.6 ms per packet.
        assert_eq!(
            ch.queue_occupancy(Direction::Forward, 0.0006 * 10.0 + 1e-9),
            15
        );
        assert!(ch
            .offer(Direction::Forward, 1500, 0.0061)
            .unwrap()
            .is_delivered());
    }

    #[test]
    fn zero_loss_never_drops_randomly() {
        let mut ch = Channel::new(&builtin("SAT").unwrap(), 9).unwrap();
        for i in 0..20_000 {
            let fate = ch.offer(Direction::Reverse, 40, i as f64 * 0.001).unwrap();
            assert_ne!(fate, PacketFate::DroppedRandomLoss);
        }
    }

    #[test]
    fn non_monotone_offer_is_usage_error() {
        let mut ch = Channel::new(&builtin("SAT").unwrap(), 1).unwrap();
        ch.offer(Direction::Forward, 100, 1.0).unwrap();
        assert!(matches!(
            ch.offer(Direction::Forward, 100, 0.5),
            Err(LinkError::NonMonotoneTime { .. })
        ));
        // directions are independent
        assert!(ch.offer(Direction::Reverse, 100, 0.5).is_ok());
    }

    #[test]
    fn oversize_offer_rejected() {
        let mut ch = Channel::new(&builtin("SAT").unwrap(), 1).unwrap();
        assert_eq!(
            ch.offer(Direction::Forward, 1501, 0.0),
            Err(LinkError::Oversize { size: 1501 })
        );
    }

    #[test]
    fn rtt_probe() {
        let sat = Channel::new(&builtin("SAT").unwrap(), 1).unwrap();
        assert!((sat.measured_rtt(100) - 0.60044).abs() < 1e-12);
        assert_eq!(sat.measured_rtt(0), 2.0 * 0.3);
        let terr = Channel::new(&builtin("TERR").unwrap(), 1).unwrap();
        assert!((terr.measured_rtt(100) - 0.03008).abs() < 1e-12);
    }
}
